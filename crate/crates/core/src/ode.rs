//! Adaptive Dormand–Prince 5(4) integrator for linear complex systems
//! `dy/dt = f(t, y)`, with the 4th-order continuous extension.
//!
//! Besides the final state the integrator keeps, per accepted step, the
//! dense-output coefficients of a small vector of *linear* observables, so
//! observables can be resampled on any grid after the run.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[Complex64], dy: &mut [Complex64]);
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol * 1e-2,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

/// Dense-output coefficients of the observables over one accepted step.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        for (k, o) in out.iter_mut().enumerate() {
            let [r1, r2, r3, r4, r5] = &self.r;
            *o = r1[k] + th * (r2[k] + th1 * (r3[k] + th * (r4[k] + th1 * r5[k])));
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeRun {
    pub steps: Vec<DenseStep>,
    pub final_state: Vec<Complex64>,
    pub final_observables: Vec<f64>,
    pub initial_observables: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl OdeRun {
    /// Observables at increasing times `ts` (each inside the integrated span).
    pub fn observables_at(&self, ts: &[f64]) -> Vec<Vec<f64>> {
        let m = self.initial_observables.len();
        let mut out = Vec::with_capacity(ts.len());
        let mut k = 0;
        for &t in ts {
            if self.steps.is_empty() || t <= self.steps[0].t0 {
                out.push(self.initial_observables.clone());
                continue;
            }
            while k + 1 < self.steps.len() && t > self.steps[k].t0 + self.steps[k].h {
                k += 1;
            }
            let mut v = vec![0.0; m];
            self.steps[k].eval(t, &mut v);
            out.push(v);
        }
        out
    }
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy_into(out: &mut [Complex64], y: &[Complex64], terms: &[(f64, &[Complex64])], h: f64) {
    for i in 0..out.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        out[i] = y[i] + acc * h;
    }
}

fn err_norm(err: &[Complex64], y0: &[Complex64], y1: &[Complex64], opt: &OdeOptions) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = opt.atol + opt.rtol * a.norm().max(b.norm());
            (e.norm() / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

/// Integrate from `t = 0` to `t_final`.
///
/// `observe` must be linear in its argument. `on_sample(i, t, y)` is called
/// with the interpolated full state for every `sample_times[i]` (increasing,
/// inside `[0, t_final]`).
pub fn integrate<S, O, F>(
    sys: &S,
    y0: Vec<Complex64>,
    t_final: f64,
    opt: &OdeOptions,
    observe: O,
    sample_times: &[f64],
    mut on_sample: F,
) -> Result<OdeRun>
where
    S: OdeSystem,
    O: Fn(&[Complex64]) -> Vec<f64>,
    F: FnMut(usize, f64, &[Complex64]),
{
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let mut y = y0;
    let mut t = 0.0f64;
    let z = Complex64::new(0.0, 0.0);
    let mut k: Vec<Vec<Complex64>> = vec![vec![z; n]; 7];
    let mut ytmp = vec![z; n];
    let mut ynew = vec![z; n];
    let mut err = vec![z; n];
    let mut evals = 0;

    let initial_observables = observe(&y);
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] <= 0.0 {
        on_sample(next_sample, sample_times[next_sample], &y);
        next_sample += 1;
    }

    sys.rhs(t, &y, &mut k[0]);
    evals += 1;

    // initial step (Hairer & Wanner, II.4)
    let scale = |v: &[Complex64], y: &[Complex64]| -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(a, b)| (a.norm() / (opt.atol + opt.rtol * b.norm())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let d0 = scale(&y, &y);
    let d1 = scale(&k[0], &y);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_final);
    axpy_into(&mut ytmp, &y, &[(1.0, &k[0])], h0);
    sys.rhs(h0, &ytmp, &mut k[1]);
    evals += 1;
    let diff: Vec<Complex64> = k[1].iter().zip(&k[0]).map(|(a, b)| (a - b) / h0).collect();
    let d2 = scale(&diff, &y);
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    let mut h = (100.0 * h0).min(h1).min(opt.h_max).min(t_final);

    let mut steps = Vec::new();
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut obs_y = initial_observables.clone();
    let mut last_rejected = false;

    while t < t_final {
        if accepted + rejected >= opt.max_steps {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t_final * (1.0 - 1e-15);
        if last {
            h = t_final - t;
        }
        let (k1, rest) = k.split_at_mut(1);
        let k1 = &k1[0];
        {
            let (k2, rest) = rest.split_at_mut(1);
            let (k3, rest) = rest.split_at_mut(1);
            let (k4, rest) = rest.split_at_mut(1);
            let (k5, rest) = rest.split_at_mut(1);
            let (k6, k7) = rest.split_at_mut(1);
            let (k2, k3, k4, k5, k6, k7) = (&mut k2[0], &mut k3[0], &mut k4[0], &mut k5[0], &mut k6[0], &mut k7[0]);
            axpy_into(&mut ytmp, &y, &[(A21, k1)], h);
            sys.rhs(t + C2 * h, &ytmp, k2);
            axpy_into(&mut ytmp, &y, &[(A31, k1), (A32, k2)], h);
            sys.rhs(t + C3 * h, &ytmp, k3);
            axpy_into(&mut ytmp, &y, &[(A41, k1), (A42, k2), (A43, k3)], h);
            sys.rhs(t + C4 * h, &ytmp, k4);
            axpy_into(&mut ytmp, &y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], h);
            sys.rhs(t + C5 * h, &ytmp, k5);
            axpy_into(
                &mut ytmp,
                &y,
                &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
                h,
            );
            sys.rhs(t + h, &ytmp, k6);
            axpy_into(
                &mut ynew,
                &y,
                &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)],
                h,
            );
            sys.rhs(t + h, &ynew, k7);
            evals += 6;
            for i in 0..n {
                err[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            }
        }
        let e = err_norm(&err, &y, &ynew, opt);
        if !e.is_finite() {
            h *= 0.1;
            rejected += 1;
            last_rejected = true;
            continue;
        }
        if e <= 1.0 {
            // dense coefficients for observables
            let obs_new = observe(&ynew);
            let ok: Vec<Vec<f64>> = [0usize, 2, 3, 4, 5, 6].iter().map(|&i| observe(&k[i])).collect();
            let m = obs_y.len();
            let mut r = [vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]];
            for j in 0..m {
                let r1 = obs_y[j];
                let r2 = obs_new[j] - obs_y[j];
                let r3 = h * ok[0][j] - r2;
                let r4 = r2 - h * ok[5][j] - r3;
                let r5 =
                    h * (D1 * ok[0][j] + D3 * ok[1][j] + D4 * ok[2][j] + D5 * ok[3][j] + D6 * ok[4][j] + D7 * ok[5][j]);
                r[0][j] = r1;
                r[1][j] = r2;
                r[2][j] = r3;
                r[3][j] = r4;
                r[4][j] = r5;
            }
            let t_end = if last { t_final } else { t + h };
            while next_sample < sample_times.len() && sample_times[next_sample] <= t_end {
                let ts = sample_times[next_sample];
                let th = ((ts - t) / h).clamp(0.0, 1.0);
                let th1 = 1.0 - th;
                for i in 0..n {
                    let r2 = ynew[i] - y[i];
                    let r3 = k[0][i] * h - r2;
                    let r4 = r2 - k[6][i] * h - r3;
                    let r5 =
                        (k[0][i] * D1 + k[2][i] * D3 + k[3][i] * D4 + k[4][i] * D5 + k[5][i] * D6 + k[6][i] * D7) * h;
                    ytmp[i] = y[i] + (r2 + (r3 + (r4 + r5 * th1) * th) * th1) * th;
                }
                on_sample(next_sample, ts, &ytmp);
                next_sample += 1;
            }
            steps.push(DenseStep { t0: t, h, r });
            std::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            obs_y = obs_new;
            t = t_end;
            accepted += 1;
            let mut fac = 0.9 * e.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(opt.h_max);
        } else {
            rejected += 1;
            last_rejected = true;
            h *= (0.9 * e.powf(-0.2)).max(0.2);
        }
    }

    Ok(OdeRun {
        steps,
        final_observables: obs_y,
        final_state: y,
        initial_observables,
        accepted,
        rejected,
        rhs_evals: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay {
        rates: Vec<Complex64>,
    }

    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            self.rates.len()
        }
        fn rhs(&self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
            for i in 0..y.len() {
                dy[i] = self.rates[i] * y[i];
            }
        }
    }

    #[test]
    fn exponential_and_rotation_to_tolerance() {
        let sys = Decay {
            rates: vec![Complex64::new(-1.0, 0.0), Complex64::new(-0.1, 2.0)],
        };
        let y0 = vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.5)];
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.2).collect();
        let mut seen = Vec::new();
        let run = integrate(
            &sys,
            y0.clone(),
            10.0,
            &OdeOptions::with_tol(1e-10),
            |y| vec![y[0].re, y[1].re],
            &times,
            |_, t, y| seen.push((t, y.to_vec())),
        )
        .unwrap();
        assert_eq!(seen.len(), times.len());
        for (t, y) in &seen {
            for i in 0..2 {
                let exact = y0[i] * (sys.rates[i] * t).exp();
                assert!((y[i] - exact).norm() < 1e-8, "t={t} i={i}");
            }
        }
        let obs = run.observables_at(&times);
        for (t, o) in times.iter().zip(&obs) {
            assert!((o[0] - (-t).exp()).abs() < 1e-8);
        }
        assert!((run.final_state[0].re - (-10.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn zero_system_is_identity() {
        let sys = Decay {
            rates: vec![Complex64::new(0.0, 0.0); 3],
        };
        let y0 = vec![Complex64::new(0.3, -0.1); 3];
        let run = integrate(
            &sys,
            y0.clone(),
            5.0,
            &OdeOptions::with_tol(1e-8),
            |y| vec![y[0].re],
            &[],
            |_, _, _| {},
        )
        .unwrap();
        assert_eq!(run.final_state, y0);
    }
}
