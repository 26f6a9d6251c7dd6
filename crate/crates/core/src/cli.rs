//! The `natsim` command line: flag parsing, config resolution and artifacts.

use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{complexity_benchmark_with, BenchOptions};
use crate::config::{Command, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    detect_nat_peak, ensemble_average_transmission, point_transmission, sweep_dephasing, sweep_disorder, Engine,
    EngineKind, EnsembleSampling, EnsembleSpec, SweepSpec, TransmissionCurve,
};
use crate::fock::build_basis;
use crate::lindblad::{build_liouvillian, evolve, fock_transmission, DensityMatrix};
use crate::moments::{build_moment_generator, evolve_moments, moment_transmission, MomentMatrix};
use crate::network::{validate_network, FourSiteCouplings, InterferenceMode, NetworkSpec};
use crate::trajectory::Trajectory;

const EXIT_CODES: &str = "\
Exit status:
  0  success
  2  ConfigParseError: malformed config, unknown flag or key, bad flag combination
  3  ValidationError: the network or a parameter is invalid
  4  SolverError: overflow, singular system, step-size underflow and other numerical failures
  5  IoError: artifacts could not be read or written
Errors are reported on stderr as one JSON object: {\"error\", \"kind\", \"message\", \"exit_code\"}.
NAT_SIM_MAX_DIM overrides the cap on the Liouvillian side (dim²) of the Fock engine.";

#[derive(Debug, Parser)]
#[command(name = "natsim", version, about = "Noise-assisted transport in coupled-cavity networks", after_help = EXIT_CODES)]
pub struct Cli {
    /// Command to run; may instead come from the config file.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// JSON run config; flags given here override its keys.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Inline network JSON file, exclusive with the four-site shorthand.
    #[arg(long, value_name = "PATH")]
    pub network: Option<PathBuf>,
    /// Interference mode of the four-site network.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<InterferenceMode>,
    /// Disorder ω₂ value(s), comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub disorder: Option<Vec<f64>>,
    /// Dephasing γ₂ value(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dephasing: Option<Vec<f64>>,
    /// Four-site couplings g01,g02,g13,g23.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub couplings: Option<Vec<f64>>,
    /// Engine: fock, moments or both.
    #[arg(long, value_parser = parse_engine)]
    pub engine: Option<Engine>,
    /// Per-site Fock cutoff.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Output directory [default: runs/<timestamp>-<command>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for sweep points [default: available cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Seed for random ensemble sampling; evenly spaced sampling without it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Integration tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Evolution duration.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Ensemble window width.
    #[arg(long)]
    pub width: Option<f64>,
    /// Ensemble sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Benchmark chain sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Timed repetitions per benchmark size.
    #[arg(long)]
    pub repetitions: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<InterferenceMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_engine(s: &str) -> std::result::Result<Engine, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Cli {
    /// Merge the config file (if any) with the flags; flags win.
    pub fn to_config(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let network = match &self.network {
            Some(p) => {
                Some(NetworkSpec::from_json(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?)
            }
            None => None,
        };
        let couplings = match &self.couplings {
            Some(v) if v.len() == 4 => Some(FourSiteCouplings {
                g01: v[0],
                g02: v[1],
                g13: v[2],
                g23: v[3],
            }),
            Some(v) => return Err(Error::Config(format!("--couplings takes 4 values, got {}", v.len()))),
            None => None,
        };
        let flags = RunConfig {
            command: self.command,
            network,
            mode: self.mode,
            disorder: self.disorder.clone(),
            dephasing: self.dephasing.clone(),
            couplings,
            engine: self.engine,
            cutoff: self.cutoff,
            tol: self.tol,
            t_final: self.t_final,
            seed: self.seed,
            width: self.width,
            samples: self.samples,
            sizes: self.sizes.clone(),
            repetitions: self.repetitions,
            out: self.out.as_ref().map(|p| p.to_string_lossy().into_owned()),
            workers: self.workers,
        };
        Ok(base.overlay(flags))
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub out_dir: Option<PathBuf>,
    pub artifacts: Vec<PathBuf>,
}

struct Writer<'a> {
    dir: PathBuf,
    embedded: &'a RunConfig,
    written: Vec<PathBuf>,
}

impl Writer<'_> {
    fn json(&mut self, name: &str, payload: Value) -> Result<()> {
        let mut doc = json!({
            "version": crate::VERSION,
            "config": self.embedded,
        });
        if let (Value::Object(d), Value::Object(p)) = (&mut doc, payload) {
            d.extend(p);
        }
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// CSV preceded by one `# config ...` comment line.
    fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let head = format!("# config {}\n", serde_json::to_string(self.embedded)?);
        self.write(name, &(head + body))
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, text)?;
        self.written.push(p);
        Ok(())
    }
}

fn default_out_dir(command: Command) -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
    Path::new("runs").join(format!("{stamp}-{command}"))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("artifact serializes")
}

/// Resolve and execute a config, writing artifacts.
pub fn run(config: RunConfig) -> Result<RunOutcome> {
    let cfg = config.resolve()?;
    let command = cfg.command.expect("resolved config has a command");
    if command == Command::Validate {
        let net = validate_network(cfg.network_spec()?)?;
        if cfg.engine() != Engine::Moments {
            build_basis(net.n_sites(), cfg.cutoff())?;
        }
        return Ok(RunOutcome {
            out_dir: None,
            artifacts: vec![],
        });
    }
    let dir = cfg
        .out
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| default_out_dir(command));
    std::fs::create_dir_all(&dir)?;
    let embedded = cfg.embedded();
    let mut w = Writer {
        dir: dir.clone(),
        embedded: &embedded,
        written: vec![],
    };
    match command {
        Command::Simulate => simulate(&cfg, &mut w)?,
        Command::Steady => steady(&cfg, &mut w)?,
        Command::SweepDephasing | Command::SweepDisorder => sweep(&cfg, command, &mut w)?,
        Command::Ensemble => ensemble(&cfg, &mut w)?,
        Command::Bench => bench(&cfg, &mut w)?,
        Command::Validate => unreachable!(),
    }
    Ok(RunOutcome {
        out_dir: Some(dir),
        artifacts: w.written,
    })
}

fn cutoff_for(kind: EngineKind, cfg: &RunConfig) -> Option<usize> {
    (kind == EngineKind::Fock).then(|| cfg.cutoff())
}

fn simulate(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let net = validate_network(cfg.network_spec()?)?;
    let (t_final, tol) = (cfg.t_final.unwrap(), cfg.tol.unwrap());
    let mut runs = Vec::new();
    for kind in cfg.engine().kinds() {
        let traj: Trajectory = match kind {
            EngineKind::Fock => {
                let basis = build_basis(net.n_sites(), cfg.cutoff())?;
                let l = build_liouvillian(&net, &basis)?;
                evolve(&l, &DensityMatrix::vacuum(&basis), t_final, tol)?.trajectory
            }
            EngineKind::Moments => {
                let gen = build_moment_generator(&net);
                evolve_moments(&gen, &MomentMatrix::zeros(net.n_sites()), t_final, tol)?.trajectory
            }
        };
        let name = format!("trajectory_{}.csv", kind.as_str());
        w.csv(&name, &traj.to_csv())?;
        runs.push(json!({
            "engine": kind,
            "cutoff": cutoff_for(kind, cfg),
            "samples": traj.len(),
            "final_occupations": traj.final_occupations(),
            "transferred_energy": traj.e_tr.last().copied().unwrap_or(0.0),
            "trajectory": name,
        }));
    }
    w.json("simulate.json", json!({ "runs": runs }))
}

fn steady(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let net = validate_network(cfg.network_spec()?)?;
    let mut results = Vec::new();
    for kind in cfg.engine().kinds() {
        let t = match kind {
            EngineKind::Fock => fock_transmission(&net, cfg.cutoff())?,
            EngineKind::Moments => moment_transmission(&net)?,
        };
        results.push(json!({
            "engine": kind,
            "cutoff": cutoff_for(kind, cfg),
            "transmission": t,
        }));
    }
    w.json("steady.json", json!({ "results": results }))
}

fn curve_value(c: &TransmissionCurve, file: &str) -> Result<Value> {
    let peak = detect_nat_peak(c, None)?;
    Ok(json!({
        "metadata": c.metadata,
        "abscissa": c.abscissa,
        "raw": c.raw,
        "normalized": c.normalized,
        "nat_peak": peak.map(|p| to_value(&p)),
        "csv": file,
    }))
}

fn sweep(cfg: &RunConfig, command: Command, w: &mut Writer) -> Result<()> {
    let spec = SweepSpec {
        mode: cfg.mode.unwrap(),
        disorder_grid: cfg.disorder.clone().unwrap(),
        dephasing_grid: cfg.dephasing.clone().unwrap(),
        engine: cfg.engine(),
        cutoff: cfg.cutoff(),
        couplings: cfg.couplings,
    };
    let (curves, stem) = if command == Command::SweepDephasing {
        (sweep_dephasing(&spec)?, "dephasing")
    } else {
        (sweep_disorder(&spec)?, "disorder")
    };
    let fixed_count = curves.len() / cfg.engine().kinds().len();
    let mut out = Vec::new();
    for (k, c) in curves.iter().enumerate() {
        let name = format!("{stem}_{}_{:02}.csv", c.metadata.engine.as_str(), k % fixed_count);
        w.csv(&name, &c.to_csv())?;
        out.push(curve_value(c, &name)?);
    }
    w.json(&format!("sweep_{stem}.json"), json!({ "curves": out }))
}

fn ensemble(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let delta0 = cfg.disorder.as_ref().unwrap()[0];
    let sampling = match cfg.seed {
        Some(seed) => EnsembleSampling::Random { seed },
        None => EnsembleSampling::Uniform,
    };
    let mut results = Vec::new();
    for kind in cfg.engine().kinds() {
        let spec = EnsembleSpec {
            mode: cfg.mode.unwrap(),
            delta0,
            width: cfg.width.unwrap(),
            samples: cfg.samples.unwrap(),
            engine: kind,
            cutoff: cfg.cutoff(),
            couplings: cfg.couplings,
            sampling,
        };
        let r = ensemble_average_transmission(&spec)?;
        let single = point_transmission(kind, spec.mode, delta0, 0.0, spec.couplings, spec.cutoff)?;
        results.push(json!({
            "engine": kind,
            "cutoff": cutoff_for(kind, cfg),
            "sampling": sampling,
            "mean": r.mean,
            "unaveraged": single,
            "omega2": r.omega2,
            "transmissions": r.transmissions,
        }));
    }
    w.json("ensemble.json", json!({ "results": results }))
}

fn bench(cfg: &RunConfig, w: &mut Writer) -> Result<()> {
    let kind = cfg.engine().kinds()[0];
    let opts = BenchOptions {
        t_final: cfg.t_final.unwrap(),
        tol: cfg.tol.unwrap(),
    };
    let report = complexity_benchmark_with(
        kind,
        cfg.sizes.as_ref().unwrap(),
        cfg.cutoff(),
        cfg.repetitions.unwrap(),
        &opts,
    )?;
    w.csv(&format!("bench_{}.csv", kind.as_str()), &report.to_csv())?;
    w.json(&format!("bench_{}.json", kind.as_str()), json!({ "report": report }))
}

fn report_error(e: &Error) -> i32 {
    let code = e.exit_code();
    let category = match code {
        2 => "ConfigParseError",
        3 => "ValidationError",
        5 => "IoError",
        _ => "SolverError",
    };
    let doc = json!({ "error": category, "kind": e.kind(), "message": e.to_string(), "exit_code": code });
    eprintln!("{doc}");
    code
}

/// Entry point of the binary; returns the process exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let doc = json!({ "error": "ConfigParseError", "kind": "UsageError", "message": e.to_string().trim_end(), "exit_code": 2 });
            eprintln!("{doc}");
            return 2;
        }
    };
    let config = match cli.to_config() {
        Ok(c) => c,
        Err(e) => return report_error(&e),
    };
    if let Some(n) = config.workers {
        if n == 0 {
            return report_error(&Error::Config("workers must be >= 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report_error(&Error::Config(e.to_string()));
        }
    }
    let is_validate = config.command == Some(Command::Validate);
    match run(config) {
        Ok(outcome) => {
            if is_validate {
                println!("valid");
            } else if let Some(d) = outcome.out_dir {
                println!("{}", d.display());
            }
            0
        }
        Err(e) => report_error(&e),
    }
}
