//! Transmission sweeps over dephasing and disorder on the four-site network,
//! ensemble averaging over disorder, NAT-peak detection and transient fits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::DEFAULT_CUTOFF;
use crate::lindblad::fock_transmission;
use crate::moments::moment_transmission;
use crate::network::{standard_four_site, validate_network, FourSiteCouplings, InterferenceMode};
use crate::trajectory::Trajectory;

/// Default disorder grid ω₂ ∈ {0, 0.25, …, 2}.
pub fn default_disorder_grid() -> Vec<f64> {
    (0..=8).map(|k| k as f64 * 0.25).collect()
}

/// Default dephasing grid γ₂ ∈ {0, 0.1, …, 1}.
pub fn default_dephasing_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Default NAT-peak margin, in units of the baseline transmission.
pub const DEFAULT_PEAK_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Fock,
    Moments,
    Both,
}

impl Engine {
    pub fn kinds(self) -> Vec<EngineKind> {
        match self {
            Engine::Fock => vec![EngineKind::Fock],
            Engine::Moments => vec![EngineKind::Moments],
            Engine::Both => vec![EngineKind::Fock, EngineKind::Moments],
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fock" => Ok(Engine::Fock),
            "moments" => Ok(Engine::Moments),
            "both" => Ok(Engine::Both),
            _ => Err(Error::invalid(
                "engine",
                format!("expected fock, moments or both, got `{s}`"),
            )),
        }
    }
}

/// A single engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Fock,
    Moments,
}

impl EngineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::Fock => "fock",
            EngineKind::Moments => "moments",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub mode: InterferenceMode,
    pub disorder_grid: Vec<f64>,
    pub dephasing_grid: Vec<f64>,
    pub engine: Engine,
    pub cutoff: usize,
    pub couplings: Option<FourSiteCouplings>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            mode: InterferenceMode::Constructive,
            disorder_grid: default_disorder_grid(),
            dephasing_grid: default_dephasing_grid(),
            engine: Engine::Moments,
            cutoff: DEFAULT_CUTOFF,
            couplings: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [
            ("disorder_grid", &self.disorder_grid),
            ("dephasing_grid", &self.dephasing_grid),
        ] {
            if grid.is_empty() {
                return Err(Error::invalid(name, "must not be empty"));
            }
            if let Some(i) = grid.iter().position(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("{name}[{i}]"), "must be finite"));
            }
        }
        if let Some(i) = self.dephasing_grid.iter().position(|&x| x < 0.0) {
            return Err(Error::invalid(format!("dephasing_grid[{i}]"), "must be >= 0"));
        }
        if self.cutoff == 0 {
            return Err(Error::invalid("cutoff", "must be >= 1"));
        }
        if let Some(c) = &self.couplings {
            if c.as_array().iter().any(|g| !g.is_finite()) {
                return Err(Error::invalid("couplings", "must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Abscissa γ₂ at fixed ω₂.
    Dephasing,
    /// Abscissa ω₂ at fixed γ₂.
    Disorder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub axis: SweepAxis,
    pub mode: InterferenceMode,
    pub engine: EngineKind,
    /// Fock cutoff; `None` for the moment engine.
    pub cutoff: Option<usize>,
    pub couplings: FourSiteCouplings,
    /// ω₂ for a dephasing sweep, γ₂ for a disorder sweep.
    pub fixed_value: f64,
    pub baseline: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionCurve {
    pub abscissa: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub metadata: CurveMetadata,
}

impl TransmissionCurve {
    /// Curve from raw values; `normalized = raw / baseline`.
    pub fn new(abscissa: Vec<f64>, raw: Vec<f64>, metadata: CurveMetadata) -> Result<Self> {
        if abscissa.len() != raw.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} abscissa values, {} transmissions",
                abscissa.len(),
                raw.len()
            )));
        }
        if !(metadata.baseline > 0.0 && metadata.baseline.is_finite()) {
            return Err(Error::invalid(
                "baseline",
                format!("must be positive, got {}", metadata.baseline),
            ));
        }
        let normalized = raw.iter().map(|r| r / metadata.baseline).collect();
        Ok(TransmissionCurve {
            abscissa,
            raw,
            normalized,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.abscissa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissa.is_empty()
    }

    /// CSV with columns `abscissa, raw, normalized`; 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("abscissa,raw,normalized\n");
        for k in 0..self.len() {
            writeln!(
                s,
                "{:.16e},{:.16e},{:.16e}",
                self.abscissa[k], self.raw[k], self.normalized[k]
            )
            .unwrap();
        }
        s
    }
}

fn cutoff_for(kind: EngineKind, cutoff: usize) -> Option<usize> {
    match kind {
        EngineKind::Fock => Some(cutoff),
        EngineKind::Moments => None,
    }
}

/// Steady-state transmission of the four-site network at one parameter point.
pub fn point_transmission(
    kind: EngineKind,
    mode: InterferenceMode,
    omega2: f64,
    gamma2: f64,
    couplings: Option<FourSiteCouplings>,
    cutoff: usize,
) -> Result<f64> {
    let net = validate_network(standard_four_site(mode, omega2, gamma2, couplings)?)?;
    match kind {
        EngineKind::Fock => fock_transmission(&net, cutoff),
        EngineKind::Moments => moment_transmission(&net),
    }
}

type BaselineKey = (EngineKind, [u64; 4], Option<usize>);

fn baseline_cache() -> &'static Mutex<HashMap<BaselineKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<BaselineKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Transmission of the constructive network without disorder or dephasing,
/// cached per (engine, couplings, cutoff).
pub fn baseline_transmission(kind: EngineKind, couplings: Option<FourSiteCouplings>, cutoff: usize) -> Result<f64> {
    let c = couplings.unwrap_or_default();
    let key = (kind, c.key(), cutoff_for(kind, cutoff));
    if let Some(&v) = baseline_cache().lock().unwrap().get(&key) {
        return Ok(v);
    }
    let v = point_transmission(kind, InterferenceMode::Constructive, 0.0, 0.0, Some(c), cutoff)?;
    if !(v > 0.0) {
        return Err(Error::SingularSolve(format!(
            "baseline transmission {v} is not positive"
        )));
    }
    baseline_cache().lock().unwrap().insert(key, v);
    Ok(v)
}

fn sweep(spec: &SweepSpec, axis: SweepAxis) -> Result<Vec<TransmissionCurve>> {
    spec.validate()?;
    let couplings = spec.couplings.unwrap_or_default();
    let (fixed, varying) = match axis {
        SweepAxis::Dephasing => (&spec.disorder_grid, &spec.dephasing_grid),
        SweepAxis::Disorder => (&spec.dephasing_grid, &spec.disorder_grid),
    };
    let kinds = spec.engine.kinds();
    let mut tasks = Vec::new();
    for &kind in &kinds {
        for &f in fixed {
            for &v in varying {
                tasks.push((kind, f, v));
            }
        }
    }
    let values: Vec<f64> = tasks
        .par_iter()
        .map(|&(kind, f, v)| {
            let (w2, g2) = match axis {
                SweepAxis::Dephasing => (f, v),
                SweepAxis::Disorder => (v, f),
            };
            point_transmission(kind, spec.mode, w2, g2, Some(couplings), spec.cutoff)
        })
        .collect::<Result<_>>()?;

    let mut curves = Vec::new();
    let mut chunks = values.chunks(varying.len());
    for &kind in &kinds {
        let baseline = baseline_transmission(kind, Some(couplings), spec.cutoff)?;
        for &f in fixed {
            let raw = chunks.next().expect("one chunk per curve").to_vec();
            let meta = CurveMetadata {
                axis,
                mode: spec.mode,
                engine: kind,
                cutoff: cutoff_for(kind, spec.cutoff),
                couplings,
                fixed_value: f,
                baseline,
                version: crate::VERSION.to_string(),
            };
            curves.push(TransmissionCurve::new(varying.clone(), raw, meta)?);
        }
    }
    Ok(curves)
}

/// One curve over the dephasing grid per disorder value (and per engine).
pub fn sweep_dephasing(spec: &SweepSpec) -> Result<Vec<TransmissionCurve>> {
    sweep(spec, SweepAxis::Dephasing)
}

/// One curve over the disorder grid per dephasing value (and per engine).
pub fn sweep_disorder(spec: &SweepSpec) -> Result<Vec<TransmissionCurve>> {
    sweep(spec, SweepAxis::Disorder)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnsembleSampling {
    /// `samples` evenly spaced points including both window edges.
    Uniform,
    /// `samples` independent uniform draws from the window.
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub mode: InterferenceMode,
    pub delta0: f64,
    pub width: f64,
    pub samples: usize,
    pub engine: EngineKind,
    pub cutoff: usize,
    pub couplings: Option<FourSiteCouplings>,
    pub sampling: EnsembleSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub mean: f64,
    pub omega2: Vec<f64>,
    pub transmissions: Vec<f64>,
}

/// Mean transmission over networks with γ₂ = 0 and ω₂ spread over
/// `[delta0 − width/2, delta0 + width/2]`.
pub fn ensemble_average_transmission(spec: &EnsembleSpec) -> Result<EnsembleResult> {
    if !(spec.width >= 0.0 && spec.width.is_finite()) {
        return Err(Error::invalid(
            "width",
            format!("must be finite and >= 0, got {}", spec.width),
        ));
    }
    if spec.samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    if !spec.delta0.is_finite() {
        return Err(Error::invalid("delta0", "must be finite"));
    }
    let eval = |w: f64| point_transmission(spec.engine, spec.mode, w, 0.0, spec.couplings, spec.cutoff);
    if spec.width == 0.0 {
        let t = eval(spec.delta0)?;
        return Ok(EnsembleResult {
            mean: t,
            omega2: vec![spec.delta0],
            transmissions: vec![t],
        });
    }
    let lo = spec.delta0 - 0.5 * spec.width;
    let omega2: Vec<f64> = match spec.sampling {
        EnsembleSampling::Uniform if spec.samples == 1 => vec![spec.delta0],
        EnsembleSampling::Uniform => (0..spec.samples)
            .map(|k| lo + spec.width * k as f64 / (spec.samples - 1) as f64)
            .collect(),
        EnsembleSampling::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..spec.samples).map(|_| lo + spec.width * rng.gen::<f64>()).collect()
        }
    };
    let transmissions: Vec<f64> = omega2.par_iter().map(|&w| eval(w)).collect::<Result<_>>()?;
    let mean = transmissions.iter().sum::<f64>() / transmissions.len() as f64;
    Ok(EnsembleResult {
        mean,
        omega2,
        transmissions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NatPeak {
    pub index: usize,
    pub abscissa: f64,
    /// Normalized transmission at the peak.
    pub value: f64,
}

/// Interior maximum of the normalized curve exceeding both endpoints by more
/// than `margin` (baseline units; default [`DEFAULT_PEAK_MARGIN`]).
///
/// Ties for the maximum go to the smaller abscissa.
pub fn detect_nat_peak(curve: &TransmissionCurve, margin: Option<f64>) -> Result<Option<NatPeak>> {
    let v = &curve.normalized;
    if v.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: v.len(),
        });
    }
    let margin = margin.unwrap_or(DEFAULT_PEAK_MARGIN);
    let mut best = 0;
    for k in 1..v.len() {
        if v[k] > v[best] {
            best = k;
        }
    }
    let last = v.len() - 1;
    if best == 0 || best == last {
        return Ok(None);
    }
    if v[best] - v[0] > margin && v[best] - v[last] > margin {
        Ok(Some(NatPeak {
            index: best,
            abscissa: curve.abscissa[best],
            value: v[best],
        }))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransientFit {
    /// `b` in `a (1 − e^{−b t})`.
    pub rate: f64,
    pub amplitude: f64,
    /// Coefficient of determination R² over the window.
    pub goodness: f64,
    pub window_end: f64,
    pub points: usize,
}

/// Fit `n_k(t) − n_k(0) ≈ a (1 − e^{−b t})` over the transient window, which
/// ends where the change first reaches 95% of its final value.
pub fn transient_fit(traj: &Trajectory) -> Result<TransientFit> {
    let n = traj.sink_occupation();
    if n.len() < 3 {
        return Err(Error::NoTransientWindow);
    }
    let s: Vec<f64> = n.iter().map(|x| x - n[0]).collect();
    let s_inf = *s.last().unwrap();
    let scale = n.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(s_inf.abs() > 1e-6 * scale && s_inf.abs() > 1e-14) {
        return Err(Error::NoTransientWindow);
    }
    let end = s
        .iter()
        .position(|x| x.abs() >= 0.95 * s_inf.abs())
        .unwrap_or(s.len() - 1);
    if end + 1 < 3 {
        return Err(Error::NoTransientWindow);
    }
    let t = &traj.times[..end];
    let y = &s[..end];
    let t0 = t[0];

    // SSE after eliminating the amplitude in closed form
    let fit_at = |log_b: f64| -> (f64, f64) {
        let b = log_b.exp();
        let (mut fy, mut ff) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let f = 1.0 - (-b * (ti - t0)).exp();
            fy += f * yi;
            ff += f * f;
        }
        let a = if ff > 0.0 { fy / ff } else { 0.0 };
        let sse: f64 = t
            .iter()
            .zip(y)
            .map(|(ti, yi)| {
                let r = yi - a * (1.0 - (-b * (ti - t0)).exp());
                r * r
            })
            .sum();
        (sse, a)
    };
    let span = t[t.len() - 1] - t0;
    let (lo, hi) = ((1e-3 / span).ln(), (1e3 / span).ln());
    let grid = 200;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=grid {
        let lb = lo + (hi - lo) * k as f64 / grid as f64;
        let sse = fit_at(lb).0;
        if sse < best.0 {
            best = (sse, lb);
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (fit_at(x1).0, fit_at(x2).0);
    for _ in 0..100 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = fit_at(x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = fit_at(x2).0;
        }
    }
    let log_b = 0.5 * (a + b);
    let (sse, amplitude) = fit_at(log_b);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    Ok(TransientFit {
        rate: log_b.exp(),
        amplitude,
        goodness: if sst > 0.0 { 1.0 - sse / sst } else { 0.0 },
        window_end: traj.times[end],
        points: end,
    })
}
