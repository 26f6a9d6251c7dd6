//! Sampled observable records shared by both engines, and the transferred
//! energy `E_tr(t) = 2Γ_det ∫₀ᵗ ⟨n_k⟩ dτ`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::ode::OdeRun;

/// Minimum number of sampling intervals per run.
pub const MIN_INTERVALS: usize = 400;
const MAX_INTERVALS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `occupations[s][i]` is ⟨n_i⟩ at `times[s]`.
    pub occupations: Vec<Vec<f64>>,
    /// Tr ρ per sample; `None` for the moment engine, where normalization is
    /// built into the equations of motion.
    pub trace: Option<Vec<f64>>,
    pub e_tr: Vec<f64>,
    pub detection_site: usize,
    pub gamma_det: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_sites(&self) -> usize {
        self.occupations.first().map_or(0, Vec::len)
    }

    pub fn site_occupation(&self, site: usize) -> Vec<f64> {
        self.occupations.iter().map(|o| o[site]).collect()
    }

    pub fn sink_occupation(&self) -> Vec<f64> {
        self.site_occupation(self.detection_site)
    }

    pub fn final_occupations(&self) -> &[f64] {
        self.occupations.last().map_or(&[], Vec::as_slice)
    }

    /// CSV with columns `time, n_0..n_{N-1}, trace, E_tr`; 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.n_sites();
        let mut s = String::from("time");
        for i in 0..n {
            write!(s, ",n_{i}").unwrap();
        }
        s.push_str(",trace,E_tr\n");
        for (k, t) in self.times.iter().enumerate() {
            write!(s, "{t:.16e}").unwrap();
            for v in &self.occupations[k] {
                write!(s, ",{v:.16e}").unwrap();
            }
            match &self.trace {
                Some(tr) => write!(s, ",{:.16e}", tr[k]).unwrap(),
                None => s.push_str(",NaN"),
            }
            writeln!(s, ",{:.16e}", self.e_tr[k]).unwrap();
        }
        s
    }
}

/// `E_tr` as a function of time, piecewise linear between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferredEnergy {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TransferredEnergy {
    pub fn at(&self, t: f64) -> f64 {
        let ts = &self.times;
        if ts.is_empty() {
            return 0.0;
        }
        if t <= ts[0] {
            return self.values[0];
        }
        if t >= ts[ts.len() - 1] {
            return self.values[ts.len() - 1];
        }
        let k = ts.partition_point(|&x| x <= t);
        let (t0, t1) = (ts[k - 1], ts[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Cumulative trapezoid of `2 γ_det ⟨n_k⟩` over the trajectory samples.
pub fn transferred_energy(traj: &Trajectory, gamma_det: f64) -> TransferredEnergy {
    let f: Vec<f64> = traj
        .sink_occupation()
        .iter()
        .map(|n| 2.0 * gamma_det * n.max(0.0))
        .collect();
    TransferredEnergy {
        times: traj.times.clone(),
        values: cumulative_trapezoid(&traj.times, &f),
    }
}

pub(crate) fn cumulative_trapezoid(times: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for k in 0..times.len() {
        if k > 0 {
            acc += 0.5 * (times[k] - times[k - 1]) * (f[k] + f[k - 1]);
        }
        out.push(acc);
    }
    out
}

pub(crate) fn uniform_grid(t_final: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals).map(|i| t_final * i as f64 / intervals as f64).collect()
}

/// Resample a run's observables (`n_0..n_{N-1}` and optionally the trace) on a
/// uniform grid, doubling the density until the Richardson estimate of the
/// `E_tr` quadrature error is below `tol · t_final`.
pub(crate) fn sample_run(
    run: &OdeRun,
    t_final: f64,
    tol: f64,
    n_sites: usize,
    detection_site: usize,
    gamma_det: f64,
    has_trace: bool,
) -> Trajectory {
    let integrand = |obs: &[Vec<f64>]| -> Vec<f64> {
        obs.iter()
            .map(|o| 2.0 * gamma_det * o[detection_site].max(0.0))
            .collect()
    };
    let mut m = MIN_INTERVALS;
    let mut times = uniform_grid(t_final, m);
    let mut obs = run.observables_at(&times);
    let mut e_final = *cumulative_trapezoid(&times, &integrand(&obs)).last().unwrap();
    while m < MAX_INTERVALS {
        let times2 = uniform_grid(t_final, 2 * m);
        let obs2 = run.observables_at(&times2);
        let e2 = *cumulative_trapezoid(&times2, &integrand(&obs2)).last().unwrap();
        let est = (e2 - e_final).abs() / 3.0;
        times = times2;
        obs = obs2;
        e_final = e2;
        m *= 2;
        if est <= 0.5 * tol * t_final {
            break;
        }
    }
    let e_tr = cumulative_trapezoid(&times, &integrand(&obs));
    let occupations = obs.iter().map(|o| o[..n_sites].to_vec()).collect();
    let trace = has_trace.then(|| obs.iter().map(|o| o[n_sites]).collect());
    Trajectory {
        times,
        occupations,
        trace,
        e_tr,
        detection_site,
        gamma_det,
    }
}
