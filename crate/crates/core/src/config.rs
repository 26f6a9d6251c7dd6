//! Run configuration for the `natsim` binary.
//!
//! A config is a JSON object whose keys mirror the command-line flags:
//!
//! ```json
//! {
//!   "command": "sweep-dephasing",
//!   "mode": "destructive",
//!   "disorder": [2.0],
//!   "dephasing": [0.0, 0.5, 1.0],
//!   "engine": "moments",
//!   "cutoff": 3
//! }
//! ```
//!
//! The network is either inline (`"network": {...}`, see [`crate::network`]) or
//! the four-site shorthand (`mode`, `disorder` = ω₂, `dephasing` = γ₂,
//! optional `couplings`). [`RunConfig::resolve`] fills every default for the
//! chosen command; artifacts embed that resolved form, without the output
//! directory and worker count, so it can be fed back verbatim.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bench::{DEFAULT_BENCH_T_FINAL, MIN_REPETITIONS};
use crate::error::{Error, Result};
use crate::experiments::{default_dephasing_grid, default_disorder_grid, Engine};
use crate::fock::DEFAULT_CUTOFF;
use crate::network::{standard_four_site, FourSiteCouplings, InterferenceMode, NetworkSpec};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_T_FINAL: f64 = 50.0;
pub const DEFAULT_ENSEMBLE_WIDTH: f64 = 1.0;
pub const DEFAULT_ENSEMBLE_SAMPLES: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Time evolution from the vacuum; writes the trajectory.
    Simulate,
    /// Steady-state transmission.
    Steady,
    /// Transmission against γ₂, one curve per ω₂.
    SweepDephasing,
    /// Transmission against ω₂, one curve per γ₂.
    SweepDisorder,
    /// Transmission averaged over a window of ω₂.
    Ensemble,
    /// Wall-clock scaling with chain length.
    Bench,
    /// Check the network and print "valid".
    Validate,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Steady => "steady",
            Command::SweepDephasing => "sweep-dephasing",
            Command::SweepDisorder => "sweep-disorder",
            Command::Ensemble => "ensemble",
            Command::Bench => "bench",
            Command::Validate => "validate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Command as clap::ValueEnum>::from_str(s, false).map_err(|_| Error::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<InterferenceMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disorder: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<FourSiteCouplings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

macro_rules! overlay_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f; } )*
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: RunConfig) -> Self {
        overlay_fields!(self, other; command, network, mode, disorder, dephasing, couplings, engine,
            cutoff, tol, t_final, seed, width, samples, sizes, repetitions, out, workers);
        self
    }

    fn uses_shorthand(&self) -> bool {
        self.mode.is_some() || self.disorder.is_some() || self.dephasing.is_some() || self.couplings.is_some()
    }

    /// Fill command-specific defaults and check field combinations.
    pub fn resolve(self) -> Result<RunConfig> {
        let command = self.command.ok_or_else(|| Error::Config("no command given".into()))?;
        let mut c = self;
        if let Some(t) = c.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tol must be finite and > 0, got {t}")));
            }
        }
        if let Some(t) = c.t_final {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("t_final must be finite and > 0, got {t}")));
            }
        }
        if c.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        let single_point = matches!(command, Command::Simulate | Command::Steady | Command::Validate);
        if c.network.is_some() {
            if !single_point {
                return Err(Error::Config(format!(
                    "`{command}` runs on the four-site network; drop `network`"
                )));
            }
            if c.uses_shorthand() {
                return Err(Error::Config(
                    "inline `network` and the four-site shorthand (mode, disorder, dephasing, couplings) are mutually exclusive"
                        .into(),
                ));
            }
        }
        let engine = c.engine.get_or_insert(Engine::Moments);
        let needs_cutoff = *engine != Engine::Moments || command == Command::Validate;
        match command {
            Command::Simulate | Command::Steady | Command::Validate => {
                if c.network.is_none() {
                    c.mode.get_or_insert(InterferenceMode::Constructive);
                    for (name, v) in [("disorder", &mut c.disorder), ("dephasing", &mut c.dephasing)] {
                        let v = v.get_or_insert_with(|| vec![0.0]);
                        if v.len() != 1 {
                            return Err(Error::Config(format!("`{command}` takes a single {name} value")));
                        }
                    }
                    c.couplings.get_or_insert_with(FourSiteCouplings::default);
                }
                if command == Command::Simulate {
                    c.tol.get_or_insert(DEFAULT_TOL);
                    c.t_final.get_or_insert(DEFAULT_T_FINAL);
                }
            }
            Command::SweepDephasing | Command::SweepDisorder => {
                c.mode.get_or_insert(InterferenceMode::Constructive);
                c.disorder.get_or_insert_with(default_disorder_grid);
                c.dephasing.get_or_insert_with(default_dephasing_grid);
                c.couplings.get_or_insert_with(FourSiteCouplings::default);
            }
            Command::Ensemble => {
                c.mode.get_or_insert(InterferenceMode::Destructive);
                if c.dephasing.is_some() {
                    return Err(Error::Config(
                        "`ensemble` averages at zero dephasing; drop `dephasing`".into(),
                    ));
                }
                let d = c.disorder.get_or_insert_with(|| vec![0.0]);
                if d.len() != 1 {
                    return Err(Error::Config(
                        "`ensemble` takes a single disorder (window centre)".into(),
                    ));
                }
                c.couplings.get_or_insert_with(FourSiteCouplings::default);
                c.width.get_or_insert(DEFAULT_ENSEMBLE_WIDTH);
                c.samples.get_or_insert(DEFAULT_ENSEMBLE_SAMPLES);
            }
            Command::Bench => {
                if c.uses_shorthand() {
                    return Err(Error::Config(
                        "`bench` runs on chains; drop mode, disorder, dephasing, couplings".into(),
                    ));
                }
                if c.engine == Some(Engine::Both) {
                    return Err(Error::Config("`bench` takes a single engine".into()));
                }
                let fock = c.engine == Some(Engine::Fock);
                c.sizes
                    .get_or_insert_with(|| if fock { vec![2, 3, 4, 5] } else { vec![4, 8, 16, 32, 64] });
                c.repetitions.get_or_insert(MIN_REPETITIONS);
                c.tol.get_or_insert(DEFAULT_TOL);
                c.t_final.get_or_insert(DEFAULT_BENCH_T_FINAL);
            }
        }
        if needs_cutoff || c.cutoff.is_some() {
            c.cutoff.get_or_insert(DEFAULT_CUTOFF);
        }
        Ok(c)
    }

    /// The resolved config as embedded in artifacts.
    pub fn embedded(&self) -> RunConfig {
        RunConfig {
            out: None,
            workers: None,
            ..self.clone()
        }
    }

    /// The network for single-point commands, built from whichever form is set.
    pub fn network_spec(&self) -> Result<NetworkSpec> {
        if let Some(n) = &self.network {
            return Ok(n.clone());
        }
        let first = |v: &Option<Vec<f64>>| v.as_ref().and_then(|v| v.first().copied()).unwrap_or(0.0);
        standard_four_site(
            self.mode.unwrap_or(InterferenceMode::Constructive),
            first(&self.disorder),
            first(&self.dephasing),
            self.couplings,
        )
    }

    pub fn engine(&self) -> Engine {
        self.engine.unwrap_or(Engine::Moments)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff.unwrap_or(DEFAULT_CUTOFF)
    }
}
