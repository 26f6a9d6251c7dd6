//! Acceptance suite. Criteria run serially, since several are timed, and each
//! prints one `PASS`/`FAIL` line. Exits nonzero if any criterion fails.
//! Optional arguments select criteria by substring, e.g. `criterion_03`.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use natsim::bench::{complexity_benchmark, scaling_fit, ScalingReport};
use natsim::experiments::{
    default_dephasing_grid, default_disorder_grid, detect_nat_peak, ensemble_average_transmission, point_transmission,
    sweep_dephasing, sweep_disorder, transient_fit, Engine, EngineKind, EnsembleSampling, EnsembleSpec, SweepSpec,
    TransmissionCurve,
};
use natsim::lindblad::{build_liouvillian, evolve, fock_transmission, steady_state, transmission, DensityMatrix};
use natsim::moments::{
    build_moment_generator, evolve_moments, moment_transmission, moments_from_density, MomentMatrix,
};
use natsim::network::NetworkSpec;
use natsim::{build_basis, standard_four_site, validate_network, InterferenceMode};

use InterferenceMode::{Constructive, Destructive};

/// Whether the criterion holds, and the measured values behind the verdict.
type Outcome = (bool, String);

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn single_site() -> NetworkSpec {
    serde_json::from_value(serde_json::json!({
        "n_sites": 1, "omega": [0.0], "couplings": [], "gamma_deph": [0.0],
        "injection": {"site": 0, "gamma0": 0.5, "n_th": 0.1},
        "detection": {"site": 0, "gamma_det": 0.5}
    }))
    .unwrap()
}

fn moments_at(mode: InterferenceMode, w2: f64, g2: f64) -> f64 {
    point_transmission(EngineKind::Moments, mode, w2, g2, None, 3).unwrap()
}

fn sweep_spec(mode: InterferenceMode, disorder: Vec<f64>, dephasing: Vec<f64>) -> SweepSpec {
    SweepSpec {
        mode,
        disorder_grid: disorder,
        dephasing_grid: dephasing,
        engine: Engine::Moments,
        cutoff: 3,
        couplings: None,
    }
}

fn criterion_01_single_site_closed_form() -> Outcome {
    let net = validate_network(single_site()).unwrap();
    let exact = 1.0 / 30.0;
    let t0 = Instant::now();
    let tm = moment_transmission(&net).unwrap();
    let dt_m = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let tf = fock_transmission(&net, 4).unwrap();
    let dt_f = t0.elapsed().as_secs_f64();
    let (em, ef) = ((tm - exact).abs() / exact, (tf - exact).abs() / exact);
    let ok = em <= 1e-9 && ef <= 1e-3 && dt_m < 1.0 && dt_f < 1.0;
    (
        ok,
        format!("moments rel err {em:.2e} ({dt_m:.3}s), fock cutoff 4 rel err {ef:.2e} ({dt_f:.3}s)"),
    )
}

struct Grid {
    moments: Vec<f64>,
    fock3: Vec<f64>,
    fock4: Vec<f64>,
    seconds3: f64,
    seconds4: f64,
}

fn grid_points() -> Vec<(InterferenceMode, f64, f64)> {
    let mut pts = Vec::new();
    for mode in [Constructive, Destructive] {
        for &w in &default_disorder_grid() {
            for &g in &default_dephasing_grid() {
                pts.push((mode, w, g));
            }
        }
    }
    pts
}

fn default_grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let pts = grid_points();
        let eval = |kind, cutoff| -> Vec<f64> {
            pts.par_iter()
                .map(|&(m, w, g)| point_transmission(kind, m, w, g, None, cutoff).unwrap())
                .collect()
        };
        let moments = eval(EngineKind::Moments, 3);
        let t0 = Instant::now();
        let fock3 = eval(EngineKind::Fock, 3);
        let seconds3 = t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let fock4 = eval(EngineKind::Fock, 4);
        let seconds4 = t0.elapsed().as_secs_f64();
        Grid {
            moments,
            fock3,
            fock4,
            seconds3,
            seconds4,
        }
    })
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y).fold(0.0, f64::max)
}

fn criterion_02_cross_engine_grid() -> Outcome {
    let g = default_grid();
    let (e3, e4) = (max_rel(&g.fock3, &g.moments), max_rel(&g.fock4, &g.moments));
    (
        e3 <= 0.02 && e4 <= 0.005,
        format!(
            "{} points, max rel diff cutoff 3 {e3:.2e} ({:.0}s), cutoff 4 {e4:.2e} ({:.0}s)",
            g.moments.len(),
            g.seconds3,
            g.seconds4
        ),
    )
}

/// Random 2–3 site network with a random state of at most one photon per site.
fn random_case(rng: &mut ChaCha8Rng) -> (NetworkSpec, usize, Vec<Vec<usize>>, DMatrix<Complex64>) {
    let n = rng.gen_range(2..=3);
    let mut couplings = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.7) {
                let g = rng.gen_range(-1.0..1.0);
                couplings.push(serde_json::json!({"i": i, "j": j, "g": g}));
                couplings.push(serde_json::json!({"i": j, "j": i, "g": g}));
            }
        }
    }
    let spec: NetworkSpec = serde_json::from_value(serde_json::json!({
        "n_sites": n,
        "omega": (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(),
        "couplings": couplings,
        "gamma_deph": (0..n).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<f64>>(),
        "injection": {"site": rng.gen_range(0..n), "gamma0": rng.gen_range(0.0..1.0), "n_th": rng.gen_range(0.0..0.5)},
        "detection": {"site": rng.gen_range(0..n), "gamma_det": rng.gen_range(0.0..1.0)}
    }))
    .unwrap();
    let low: Vec<Vec<usize>> = (0..1usize << n)
        .map(|bits| (0..n).map(|i| (bits >> i) & 1).collect())
        .collect();
    let a = DMatrix::from_fn(low.len(), low.len(), |_, _| {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let small = &a * a.adjoint();
    let tr = small.trace();
    (spec, n, low, small / tr)
}

fn criterion_03_closure_certification() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 24;
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (spec, n, low, small) = random_case(&mut rng);
        // cutoff high enough that short evolutions never populate the top level
        let cutoff = if n == 2 { 12 } else { 8 };
        let basis = build_basis(n, cutoff).unwrap();
        let idx: Vec<usize> = low.iter().map(|o| basis.index(o)).collect();
        let mut data = DMatrix::zeros(basis.dim(), basis.dim());
        for (p, &r) in idx.iter().enumerate() {
            for (q, &s) in idx.iter().enumerate() {
                data[(r, s)] = small[(p, q)];
            }
        }
        let rho0 = DensityMatrix::from_matrix(data).unwrap();
        let net = validate_network(spec).unwrap();
        let l = build_liouvillian(&net, &basis).unwrap();
        let gen = build_moment_generator(&net);
        let t = rng.gen_range(0.05..0.3);
        let rho_t = evolve(&l, &rho0, t, 1e-11).unwrap().final_state;
        for rho in [&rho0, &rho_t] {
            let drho = DensityMatrix::from_matrix(l.apply(rho.data())).unwrap();
            let fock = moments_from_density(&drho, &basis).unwrap();
            let want = gen.apply(moments_from_density(rho, &basis).unwrap().matrix());
            let err = (fock.matrix() - want).iter().map(|z| z.norm()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    (
        worst <= 1e-6 && secs < 60.0,
        format!("{cases} random networks, states at t=0 and t in [0.05, 0.3], max |dC_fock - G(C)| {worst:.2e} ({secs:.1}s)"),
    )
}

fn criterion_04_physicality() -> Outcome {
    let cases = [
        (Constructive, 0.0, 0.0),
        (Destructive, 0.0, 0.0),
        (Destructive, 2.0, 1.0),
        (Constructive, 2.0, 0.5),
    ];
    let (t_final, window) = (200.0, 50.0);
    let (mut trace_err, mut min_eig, mut slope_err) = (0.0f64, f64::INFINITY, 0.0f64);
    let mut monotone = true;
    let slope = |times: &[f64], e: &[f64]| {
        let k = times.partition_point(|&t| t < t_final - window);
        (e[e.len() - 1] - e[k]) / (times[times.len() - 1] - times[k])
    };
    for (mode, w, g) in cases {
        let net = validate_network(standard_four_site(mode, w, g, None).unwrap()).unwrap();
        let basis = build_basis(4, 3).unwrap();
        let l = build_liouvillian(&net, &basis).unwrap();
        let ev = evolve(&l, &DensityMatrix::vacuum(&basis), t_final, 1e-10).unwrap();
        let tr = ev.trajectory.trace.as_ref().unwrap();
        trace_err = tr.iter().map(|x| (x - 1.0).abs()).fold(trace_err, f64::max);
        min_eig = min_eig.min(ev.final_state.min_eigenvalue());
        monotone &= ev.trajectory.e_tr.windows(2).all(|p| p[1] >= p[0]);
        let t_ss = transmission(&steady_state(&l).unwrap(), &net, &basis);
        let s = slope(&ev.trajectory.times, &ev.trajectory.e_tr);
        slope_err = slope_err.max((s - t_ss).abs() / t_ss);

        let gen = build_moment_generator(&net);
        let mv = evolve_moments(&gen, &MomentMatrix::zeros(4), t_final, 1e-10).unwrap();
        min_eig = mv.samples.iter().map(|c| c.min_eigenvalue()).fold(min_eig, f64::min);
        monotone &= mv.trajectory.e_tr.windows(2).all(|p| p[1] >= p[0]);
        let t_mom = moment_transmission(&net).unwrap();
        let s = slope(&mv.trajectory.times, &mv.trajectory.e_tr);
        slope_err = slope_err.max((s - t_mom).abs() / t_mom);
    }
    let ok = trace_err <= 1e-8 && min_eig >= -1e-8 && monotone && slope_err <= 0.01;
    (
        ok,
        format!(
            "{} runs per engine: max |Tr-1| {trace_err:.2e}, min eigenvalue {min_eig:.2e}, E_tr nondecreasing {monotone}, late slope vs steady rel err {slope_err:.2e}",
            cases.len()
        ),
    )
}

fn single_curve(curves: Vec<TransmissionCurve>) -> TransmissionCurve {
    assert_eq!(curves.len(), 1);
    curves.into_iter().next().unwrap()
}

fn criterion_05_nat_qualitative() -> Outcome {
    let flat = single_curve(sweep_dephasing(&sweep_spec(Constructive, vec![0.0], default_dephasing_grid())).unwrap());
    let nonincreasing = flat.raw.windows(2).all(|p| p[1] <= p[0]);
    let no_peak = detect_nat_peak(&flat, None).unwrap().is_none();
    let disordered =
        single_curve(sweep_dephasing(&sweep_spec(Constructive, vec![2.0], default_dephasing_grid())).unwrap());
    let peak = detect_nat_peak(&disordered, None).unwrap();
    let (imax, vmax) = disordered
        .normalized
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let v = &disordered.normalized;
    (
        nonincreasing && no_peak && peak.is_some(),
        format!(
            "w2=0: nonincreasing {nonincreasing}, no interior peak {no_peak}; w2=2: peak {peak:?} (grid max {vmax:.4} at gamma2={}, endpoints {:.4}/{:.4})",
            disordered.abscissa[imax],
            v[0],
            v[v.len() - 1]
        ),
    )
}

fn criterion_06_destructive_interference() -> Outcome {
    let curve = single_curve(sweep_dephasing(&sweep_spec(Destructive, vec![0.0], default_dephasing_grid())).unwrap());
    let t00 = moments_at(Destructive, 0.0, 0.0);
    let is_min = curve.raw.iter().all(|&v| v >= t00) && curve.raw[0] == t00;
    let (t01, t20) = (moments_at(Destructive, 0.0, 1.0), moments_at(Destructive, 2.0, 0.0));
    let disordered =
        single_curve(sweep_dephasing(&sweep_spec(Destructive, vec![2.0], default_dephasing_grid())).unwrap());
    let peak = detect_nat_peak(&disordered, None).unwrap();
    let v = &disordered.normalized;
    let vmax = v.iter().copied().fold(f64::MIN, f64::max);
    let ok = is_min && t01 > t00 && t20 > t00 && peak.is_some();
    (
        ok,
        format!(
            "T(0,0)={t00:.5e} is curve minimum {is_min}; T(0,1)={t01:.5e}; T(2,0)={t20:.5e}; w2=2 peak {peak:?} (max excess over endpoints {:.4} vs margin 0.01)",
            (vmax - v[0]).min(vmax - v[v.len() - 1])
        ),
    )
}

/// First abscissa where the curve falls below half its first value, linearly
/// interpolated; infinity when it never does.
fn half_crossing(c: &TransmissionCurve) -> f64 {
    let half = 0.5 * c.raw[0];
    for k in 1..c.raw.len() {
        if c.raw[k] < half {
            let (x0, x1, y0, y1) = (c.abscissa[k - 1], c.abscissa[k], c.raw[k - 1], c.raw[k]);
            return x0 + (half - y0) * (x1 - x0) / (y1 - y0);
        }
    }
    f64::INFINITY
}

fn criterion_07_robustness() -> Outcome {
    let curves = sweep_disorder(&sweep_spec(Constructive, default_disorder_grid(), vec![0.0, 1.0])).unwrap();
    let (x0, x1) = (half_crossing(&curves[0]), half_crossing(&curves[1]));
    (
        x0.is_finite() && x1 > x0,
        format!("half-decay crossing: gamma2=0 at w2={x0:.4}, gamma2=1 at w2={x1:.4}"),
    )
}

fn criterion_08_ensemble_emulation() -> Outcome {
    let spec = |mode, delta0, width, samples| EnsembleSpec {
        mode,
        delta0,
        width,
        samples,
        engine: EngineKind::Moments,
        cutoff: 3,
        couplings: None,
        sampling: EnsembleSampling::Uniform,
    };
    let mut degenerate = true;
    for mode in [Constructive, Destructive] {
        for d in [0.0, 0.7, 1.5] {
            let r = ensemble_average_transmission(&spec(mode, d, 0.0, 5)).unwrap();
            degenerate &= r.mean == moments_at(mode, d, 0.0);
        }
    }
    let avg = ensemble_average_transmission(&spec(Destructive, 0.0, 1.0, 21))
        .unwrap()
        .mean;
    let single = moments_at(Destructive, 0.0, 0.0);
    let optimum = (-300..=300)
        .map(|k| moments_at(Constructive, k as f64 * 0.01, 0.0))
        .fold(f64::MIN, f64::max);
    let mut worst_constructive = f64::MIN;
    for d in [0.0, 0.5, 1.0, 2.0] {
        for w in [0.25, 1.0, 2.0] {
            let m = ensemble_average_transmission(&spec(Constructive, d, w, 21))
                .unwrap()
                .mean;
            worst_constructive = worst_constructive.max(m);
        }
    }
    let ok = degenerate && avg > single && worst_constructive <= optimum;
    (
        ok,
        format!(
            "width-0 exact {degenerate}; destructive width 1 mean {avg:.5e} vs unaveraged {single:.5e}; constructive max mean {worst_constructive:.5e} vs optimum {optimum:.5e}"
        ),
    )
}

fn criterion_09_transient_fit() -> Outcome {
    let net = validate_network(standard_four_site(Constructive, 0.0, 0.0, None).unwrap()).unwrap();
    let basis = build_basis(4, 3).unwrap();
    let l = build_liouvillian(&net, &basis).unwrap();
    let ev = evolve(&l, &DensityMatrix::vacuum(&basis), 100.0, 1e-9).unwrap();
    let fit = transient_fit(&ev.trajectory).unwrap();
    (
        fit.goodness >= 0.99,
        format!(
            "sink transient fit R^2 {:.4} (rate {:.4}, window to t={:.2}, {} points)",
            fit.goodness, fit.rate, fit.window_end, fit.points
        ),
    )
}

fn medians(r: &ScalingReport) -> Vec<f64> {
    r.timings.iter().filter_map(|t| t.median_seconds).collect()
}

fn criterion_10_scaling() -> Outcome {
    let t0 = Instant::now();
    let fock = complexity_benchmark(EngineKind::Fock, &[2, 3, 4, 5], 3, 3).unwrap();
    let fit_f = scaling_fit(&fock).unwrap();
    let moments = complexity_benchmark(EngineKind::Moments, &[4, 8, 16, 32, 64], 3, 3).unwrap();
    let fit_m = scaling_fit(&moments).unwrap();
    let mf = medians(&fock);
    let increasing = mf.windows(2).all(|p| p[1] > p[0]);
    let ok = fit_f.goodness >= 0.9 && fit_f.slope > 0.0 && increasing && fit_m.slope <= 6.0;
    (
        ok,
        format!(
            "fock exp slope {:.3} R^2 {:.3} (medians {:?}); moments log-log slope {:.3} R^2 {:.3}; total {:.0}s",
            fit_f.slope,
            fit_f.goodness,
            mf.iter().map(|t| format!("{t:.3e}")).collect::<Vec<_>>(),
            fit_m.slope,
            fit_m.goodness,
            t0.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "1",
            "criterion_01_single_site_closed_form",
            criterion_01_single_site_closed_form,
        ),
        ("2", "criterion_02_cross_engine_grid", criterion_02_cross_engine_grid),
        (
            "3",
            "criterion_03_closure_certification",
            criterion_03_closure_certification,
        ),
        ("4", "criterion_04_physicality", criterion_04_physicality),
        ("5", "criterion_05_nat_qualitative", criterion_05_nat_qualitative),
        (
            "6",
            "criterion_06_destructive_interference",
            criterion_06_destructive_interference,
        ),
        ("7", "criterion_07_robustness", criterion_07_robustness),
        ("8", "criterion_08_ensemble_emulation", criterion_08_ensemble_emulation),
        ("9", "criterion_09_transient_fit", criterion_09_transient_fit),
        ("10", "criterion_10_scaling", criterion_10_scaling),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!ok);
        let mut out = std::io::stdout().lock();
        writeln!(out, "{} criterion {id}: {detail}", if ok { "PASS" } else { "FAIL" }).unwrap();
        out.flush().unwrap();
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
