use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use svetlichny::exec::Execution;
use svetlichny::oracle::{maximize, OracleConfig};
use svetlichny::qstate::XTYPE_TOL;
use svetlichny::sweep::{
    figure_preset, region_report_path, run_sweep, summary_path, Axis, ScenarioKind, SweepConfig, SweepSummary,
};
use svetlichny::{DensityOperator, SvetlichnyResult};

const SEED_ENV: &str = "SVET_SEED";

#[derive(Parser)]
#[command(name = "svet", version, about = "Four-partite Svetlichny violation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate S on a parameter grid and write CSV plus a JSON summary.
    Sweep(Box<SweepArgs>),
    /// Find connected regions with S above a threshold in a sweep CSV.
    RegionReport {
        csv: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate S for a density operator given as {"dim":16,"re":..,"im":..}.
    Evaluate {
        matrix: PathBuf,
        #[arg(long, default_value_t = 64)]
        restarts: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Use the numerical oracle even for X-type input.
        #[arg(long)]
        oracle: bool,
    },
}

/// Flags of `sweep`; a `--config` JSON file may set any of them.
#[derive(Args, Deserialize, Default, Debug, Clone)]
#[serde(deny_unknown_fields)]
struct SweepArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    q: Option<u32>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// name:min:max:steps, e.g. T:0.001:3:101
    #[arg(long)]
    axis1: Option<String>,
    #[arg(long)]
    axis2: Option<String>,
    #[arg(long)]
    #[serde(default)]
    audit: bool,
    #[arg(long)]
    #[serde(alias = "audit-restarts")]
    audit_restarts: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Density-operator JSON for the custom-matrix scenario.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Evaluate cells on the calling thread only.
    #[arg(long)]
    #[serde(default)]
    sequential: bool,
}

impl SweepArgs {
    /// Command-line values win over the config file.
    fn over(self, file: SweepArgs) -> SweepArgs {
        SweepArgs {
            config: self.config,
            scenario: self.scenario.or(file.scenario),
            preset: self.preset.or(file.preset),
            n: self.n.or(file.n),
            p: self.p.or(file.p),
            q: self.q.or(file.q),
            m: self.m.or(file.m),
            mass: self.mass.or(file.mass),
            lambda: self.lambda.or(file.lambda),
            omega: self.omega.or(file.omega),
            temperature: self.temperature.or(file.temperature),
            alpha: self.alpha.or(file.alpha),
            axis1: self.axis1.or(file.axis1),
            axis2: self.axis2.or(file.axis2),
            audit: self.audit || file.audit,
            audit_restarts: self.audit_restarts.or(file.audit_restarts),
            threshold: self.threshold.or(file.threshold),
            seed: self.seed.or(file.seed),
            out: self.out.or(file.out),
            workers: self.workers.or(file.workers),
            matrix: self.matrix.or(file.matrix),
            sequential: self.sequential || file.sequential,
        }
    }
}

fn effective_seed(args: &SweepArgs) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v} is not a u64")),
        Err(_) => Ok(args.seed.unwrap_or(42)),
    }
}

fn parse_axis(s: &Option<String>) -> Result<Option<Axis>> {
    s.as_deref().map(str::parse).transpose().map_err(Into::into)
}

/// Applies flags shared by presets and single sweeps.
fn apply_common(cfg: &mut SweepConfig, args: &SweepArgs, seed: u64) -> Result<()> {
    if let Some(a) = parse_axis(&args.axis1)? {
        cfg.axis1 = a;
    }
    if let Some(a) = parse_axis(&args.axis2)? {
        cfg.axis2 = a;
    }
    macro_rules! set {
        ($($field:ident),*) => {$(
            if args.$field.is_some() {
                cfg.$field = args.$field;
            }
        )*};
    }
    set!(mass, lambda, temperature, alpha);
    if let Some(omega) = args.omega {
        cfg.omega = omega;
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    if let Some(r) = args.audit_restarts {
        cfg.audit_restarts = r;
    }
    cfg.audit = args.audit;
    cfg.seed = seed;
    cfg.workers = args.workers.unwrap_or(0);
    cfg.execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    Ok(())
}

fn single_config(args: &SweepArgs, seed: u64) -> Result<SweepConfig> {
    let Some(scenario) = args.scenario.as_deref() else {
        bail!("either --scenario or --preset is required");
    };
    let kind: ScenarioKind = scenario.parse()?;
    let mut cfg = match kind {
        ScenarioKind::Schwarzschild => {
            let (Some(n), Some(p), Some(q)) = (args.n, args.p, args.q) else {
                bail!("schwarzschild needs --n, --p and --q");
            };
            SweepConfig::schwarzschild(n, p, q)
        }
        ScenarioKind::Sds => {
            let (Some(n), Some(m)) = (args.n, args.m) else {
                bail!("sds needs --n and --m");
            };
            let axis1 = match (args.mass, args.lambda) {
                (Some(_), None) => Axis::new("lambda", 1e-4, 1.0, 101)?,
                (None, Some(_)) => Axis::new("M", 1e-3, 0.33, 101)?,
                _ if args.axis1.is_some() => Axis::new("lambda", 1e-4, 1.0, 101)?,
                _ => bail!("sds needs --axis1, or exactly one of --mass / --lambda"),
            };
            SweepConfig::sds(n, m, axis1)
        }
        ScenarioKind::CustomMatrix => SweepConfig {
            scenario: kind,
            matrix: args.matrix.clone(),
            axis1: Axis::new("noise", 0.0, 1.0, 101)?,
            axis2: Axis::new("dephasing", 0.0, 1.0, 101)?,
            ..SweepConfig::schwarzschild(1, 1, 0)
        },
    };
    if kind == ScenarioKind::CustomMatrix {
        cfg.n = None;
        cfg.p = None;
        cfg.q = None;
    }
    apply_common(&mut cfg, args, seed)?;
    Ok(cfg)
}

fn panel_path(out: &Path, label: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
    let ext = out.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    out.with_file_name(format!("{stem}_{label}.{ext}"))
}

fn report(path: &Path, summary: &SweepSummary) {
    println!(
        "{}: {} cells, max S = {} at ({}, {})",
        path.display(),
        summary.cells,
        summary.max.value,
        summary.max.axis1,
        summary.max.axis2
    );
    for f in &summary.findings {
        println!("  {f}");
    }
}

fn sweep(cli_args: SweepArgs) -> Result<()> {
    let args = match &cli_args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: SweepArgs =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            cli_args.over(file)
        }
        None => cli_args,
    };
    let seed = effective_seed(&args)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("grid.csv"));
    println!("seed: {seed}");

    if let Some(preset) = args.preset.as_deref() {
        if args.n.is_some() || args.p.is_some() || args.q.is_some() || args.m.is_some() {
            bail!("--preset fixes the mode counts; drop --n/--p/--q/--m");
        }
        for panel in figure_preset(preset)? {
            let mut cfg = panel.config;
            if let Some(s) = args.scenario.as_deref() {
                if s.parse::<ScenarioKind>()? != cfg.scenario {
                    bail!("--scenario {s} does not match preset {preset}");
                }
            }
            apply_common(&mut cfg, &args, seed)?;
            let path = panel_path(&out, &panel.label);
            let summary = run_sweep(&cfg, &path)?;
            report(&path, &summary);
        }
        return Ok(());
    }

    let cfg = single_config(&args, seed)?;
    let summary = run_sweep(&cfg, &out)?;
    report(&out, &summary);
    println!("summary: {}", summary_path(&out).display());
    Ok(())
}

fn evaluate(matrix: &Path, restarts: usize, seed: u64, force_oracle: bool) -> Result<()> {
    let text = fs::read_to_string(matrix).with_context(|| format!("reading {}", matrix.display()))?;
    let rho: DensityOperator = serde_json::from_str(&text)?;
    let report = rho.validate();
    if !report.passed {
        bail!("not a valid density operator: {report:?}");
    }
    let cfg = OracleConfig {
        restarts,
        rng_seed: seed,
        ..OracleConfig::default()
    };
    let result = if force_oracle {
        let o = maximize(&rho, &cfg)?;
        SvetlichnyResult::numeric(o.value, o.settings)?
    } else {
        svetlichny::evaluate(&rho, XTYPE_TOL, &cfg)?
    };
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(args) => sweep(*args),
        Command::RegionReport { csv, threshold, out } => {
            let report = region_report_path(&csv, threshold)?;
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(path) => fs::write(&path, json)?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Evaluate {
            matrix,
            restarts,
            seed,
            oracle,
        } => evaluate(&matrix, restarts, seed, oracle),
    }
}
