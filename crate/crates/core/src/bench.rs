//! Wall-clock scaling of both engines with network size.
//!
//! Every size runs one fixed-duration evolution of an open chain (coupling
//! 0.5, injection at site 0, detection at site N−1) from the vacuum: one
//! discarded warm-up, then `repetitions` timed runs.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::EngineKind;
use crate::fock::{build_basis, max_side_from_env};
use crate::lindblad::{build_liouvillian, evolve, DensityMatrix};
use crate::moments::{build_moment_generator, evolve_moments, MomentMatrix};
use crate::network::{chain, validate_network, CHAIN_COUPLING};

pub const DEFAULT_BENCH_T_FINAL: f64 = 10.0;
pub const DEFAULT_BENCH_TOL: f64 = 1e-8;
pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingModel {
    /// `ln t = slope · N + intercept`.
    Exponential,
    /// `ln t = slope · ln N + intercept`.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: ScalingModel,
    pub slope: f64,
    pub intercept: f64,
    /// R² of the linearized fit.
    pub goodness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeTiming {
    pub n_sites: usize,
    /// Seconds per timed repetition; empty when the size overflowed.
    pub samples: Vec<f64>,
    pub median_seconds: Option<f64>,
    /// `max − min` over the repetitions.
    pub spread_seconds: Option<f64>,
    pub overflow: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceRow {
    pub n_sites: usize,
    /// Fock dimension `(cutoff+1)^N`, absent for the moment engine.
    pub fock_dim: Option<u128>,
    /// `fock_dim²`, or the `N²` moment unknowns.
    pub state_size: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            version: crate::VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub engine: EngineKind,
    pub topology: String,
    pub coupling: f64,
    pub cutoff: Option<usize>,
    pub t_final: f64,
    pub tol: f64,
    pub repetitions: usize,
    pub sizes: Vec<usize>,
    pub timings: Vec<SizeTiming>,
    pub state_space: Vec<StateSpaceRow>,
    pub fit: Option<ScalingFit>,
    pub environment: Environment,
}

impl ScalingReport {
    pub fn model(&self) -> ScalingModel {
        match self.engine {
            EngineKind::Fock => ScalingModel::Exponential,
            EngineKind::Moments => ScalingModel::Polynomial,
        }
    }

    /// CSV with columns `n_sites, median_seconds, spread_seconds`; overflowed
    /// sizes are written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n_sites,median_seconds,spread_seconds\n");
        for t in &self.timings {
            let f = |v: Option<f64>| v.map_or("NaN".to_string(), |x| format!("{x:.16e}"));
            writeln!(s, "{},{},{}", t.n_sites, f(t.median_seconds), f(t.spread_seconds)).unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub t_final: f64,
    pub tol: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            t_final: DEFAULT_BENCH_T_FINAL,
            tol: DEFAULT_BENCH_TOL,
        }
    }
}

/// One evolution of the `n`-site chain; returns the final site occupations.
pub fn run_once(engine: EngineKind, n_sites: usize, cutoff: usize, opts: &BenchOptions) -> Result<Vec<f64>> {
    let net = validate_network(chain(n_sites, CHAIN_COUPLING)?)?;
    match engine {
        EngineKind::Fock => {
            let basis = build_basis(n_sites, cutoff)?;
            let l = build_liouvillian(&net, &basis)?;
            let ev = evolve(&l, &DensityMatrix::vacuum(&basis), opts.t_final, opts.tol)?;
            Ok(ev.trajectory.final_occupations().to_vec())
        }
        EngineKind::Moments => {
            let gen = build_moment_generator(&net);
            let ev = evolve_moments(&gen, &MomentMatrix::zeros(n_sites), opts.t_final, opts.tol)?;
            Ok(ev.trajectory.final_occupations().to_vec())
        }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn state_space_row(engine: EngineKind, n: usize, cutoff: usize) -> StateSpaceRow {
    match engine {
        EngineKind::Fock => {
            let dim = (cutoff as u128 + 1).checked_pow(n as u32);
            StateSpaceRow {
                n_sites: n,
                fock_dim: dim,
                state_size: dim.and_then(|d| d.checked_mul(d)).unwrap_or(u128::MAX),
            }
        }
        EngineKind::Moments => StateSpaceRow {
            n_sites: n,
            fock_dim: None,
            state_size: (n as u128).pow(2),
        },
    }
}

/// Time `repetitions` evolutions per size and fit the engine's scaling model.
pub fn complexity_benchmark(
    engine: EngineKind,
    sizes: &[usize],
    cutoff: usize,
    repetitions: usize,
) -> Result<ScalingReport> {
    complexity_benchmark_with(engine, sizes, cutoff, repetitions, &BenchOptions::default())
}

pub fn complexity_benchmark_with(
    engine: EngineKind,
    sizes: &[usize],
    cutoff: usize,
    repetitions: usize,
    opts: &BenchOptions,
) -> Result<ScalingReport> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::invalid("repetitions", format!("must be >= {MIN_REPETITIONS}")));
    }
    if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sizes", "must be nonempty and strictly increasing"));
    }
    if sizes[0] < 2 {
        return Err(Error::invalid("sizes", "chains need at least 2 sites"));
    }
    let mut timings = Vec::new();
    for &n in sizes {
        if engine == EngineKind::Fock {
            let side = (cutoff as u128 + 1).checked_pow(2 * n as u32);
            let cap = max_side_from_env();
            if side.is_none_or(|s| s > cap) {
                let err = Error::Overflow {
                    n_sites: n,
                    cutoff,
                    side: side.unwrap_or(u128::MAX),
                    cap,
                };
                timings.push(SizeTiming {
                    n_sites: n,
                    samples: vec![],
                    median_seconds: None,
                    spread_seconds: None,
                    overflow: Some(err.to_string()),
                });
                continue;
            }
        }
        run_once(engine, n, cutoff, opts)?;
        let mut samples = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let t0 = Instant::now();
            let out = run_once(engine, n, cutoff, opts)?;
            samples.push(t0.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
            std::hint::black_box(out);
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(0.0, f64::max);
        timings.push(SizeTiming {
            n_sites: n,
            median_seconds: Some(median(&samples)),
            spread_seconds: Some(hi - lo),
            samples,
            overflow: None,
        });
    }
    let mut report = ScalingReport {
        engine,
        topology: format!("open chain, coupling {CHAIN_COUPLING}, injection at site 0, detection at site N-1"),
        coupling: CHAIN_COUPLING,
        cutoff: (engine == EngineKind::Fock).then_some(cutoff),
        t_final: opts.t_final,
        tol: opts.tol,
        repetitions,
        sizes: sizes.to_vec(),
        state_space: sizes.iter().map(|&n| state_space_row(engine, n, cutoff)).collect(),
        timings,
        fit: None,
        environment: Environment::current(),
    };
    report.fit = scaling_fit(&report).ok();
    Ok(report)
}

/// Least-squares fit of the report's declared model over sizes with timings.
pub fn scaling_fit(report: &ScalingReport) -> Result<ScalingFit> {
    let (n, t): (Vec<f64>, Vec<f64>) = report
        .timings
        .iter()
        .filter_map(|s| s.median_seconds.map(|m| (s.n_sites as f64, m)))
        .unzip();
    fit_model(report.model(), &n, &t)
}

/// Fit `ln t` against `N` (exponential) or `ln N` (polynomial).
pub fn fit_model(model: ScalingModel, sizes: &[f64], times: &[f64]) -> Result<ScalingFit> {
    if sizes.len() != times.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sizes, {} times",
            sizes.len(),
            times.len()
        )));
    }
    if sizes.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} valid timings, need at least 3",
            sizes.len()
        )));
    }
    if times.iter().any(|&t| !(t > 0.0 && t.is_finite())) || sizes.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::InsufficientData("timings and sizes must be positive".into()));
    }
    let x: Vec<f64> = match model {
        ScalingModel::Exponential => sizes.to_vec(),
        ScalingModel::Polynomial => sizes.iter().map(|n| n.ln()).collect(),
    };
    let y: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all sizes are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let goodness = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    Ok(ScalingFit {
        model,
        slope,
        intercept,
        goodness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_exponential() {
        let n = [2.0, 3.0, 4.0, 5.0, 6.0];
        let t: Vec<f64> = n.iter().map(|&x: &f64| 2f64.powf(x)).collect();
        let f = fit_model(ScalingModel::Exponential, &n, &t).unwrap();
        assert!((f.slope - 2f64.ln()).abs() < 1e-6);
        assert!((f.goodness - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_cubic() {
        let n = [4.0, 8.0, 16.0, 32.0, 64.0];
        let t: Vec<f64> = n.iter().map(|&x: &f64| x.powi(3)).collect();
        let f = fit_model(ScalingModel::Polynomial, &n, &t).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-6);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            fit_model(ScalingModel::Polynomial, &[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn state_space_arithmetic() {
        let r = state_space_row(EngineKind::Fock, 4, 3);
        assert_eq!((r.fock_dim, r.state_size), (Some(256), 65536));
        assert_eq!(state_space_row(EngineKind::Fock, 8, 3).state_size, 4_294_967_296);
        assert_eq!(state_space_row(EngineKind::Moments, 64, 3).state_size, 4096);
    }

    #[test]
    fn overflow_is_recorded_not_fatal() {
        let opts = BenchOptions {
            t_final: 0.5,
            tol: 1e-6,
        };
        let r = complexity_benchmark_with(EngineKind::Fock, &[2, 3, 8], 3, 3, &opts).unwrap();
        assert!(r.timings[2].overflow.is_some());
        assert!(r.timings[2].median_seconds.is_none());
        assert!(r.timings[..2].iter().all(|t| t.median_seconds.unwrap() > 0.0));
        assert!(r.to_csv().lines().nth(3).unwrap().starts_with("8,NaN"));
    }

    #[test]
    fn timed_runs_do_not_change_results() {
        let opts = BenchOptions {
            t_final: 2.0,
            tol: 1e-8,
        };
        let a = run_once(EngineKind::Moments, 5, 3, &opts).unwrap();
        complexity_benchmark_with(EngineKind::Moments, &[2, 3, 5], 3, 3, &opts).unwrap();
        let b = run_once(EngineKind::Moments, 5, 3, &opts).unwrap();
        assert_eq!(a, b);
        let c = run_once(EngineKind::Fock, 3, 2, &opts).unwrap();
        assert_eq!(c, run_once(EngineKind::Fock, 3, 2, &opts).unwrap());
    }
}
