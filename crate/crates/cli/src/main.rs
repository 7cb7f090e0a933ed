//! `dunklab`: batch front-end for the numerical checks in `dunklab-core`.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 stage failure, 4
//! quadrature budget exceeded.

mod config;
mod error;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{parse_interval, RunConfig, Stage, ARTIFACT_VERSION};
use error::CliError;

#[derive(Parser)]
#[command(name = "dunklab", version, about = "Desk-scale checks for Dunkl-Schrodinger operators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for artifacts without an explicit `--out`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Weighted ball volumes and doubling ratios.
    Measure {
        #[command(subcommand)]
        action: MeasureCmd,
    },
    /// Reverse Holder sweep of the potential.
    Potential {
        #[command(subcommand)]
        action: PotentialCmd,
    },
    /// Critical radius function on a grid.
    MField {
        /// Per-axis `lo:hi:n`, endpoints included.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stopping-time cube decomposition.
    Cubes {
        #[command(subcommand)]
        action: CubesCmd,
    },
    /// Dunkl operator checks.
    Ops {
        #[command(subcommand)]
        action: OpsCmd,
    },
    /// Heat and Schrodinger kernel diagnostics.
    Heat {
        #[command(subcommand)]
        action: HeatCmd,
    },
    /// Fefferman-Phong ratios on the standard family.
    Fp {
        #[command(subcommand)]
        action: FpCmd,
    },
    /// Hardy space atoms.
    Hardy {
        #[command(subcommand)]
        action: HardyCmd,
    },
    /// Every configured stage in dependency order.
    Pipeline,
}

#[derive(Subcommand)]
enum MeasureCmd {
    BallVolume {
        /// Comma-separated coordinates.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Doubling {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PotentialCmd {
    CheckRh {
        #[arg(long)]
        q: Option<f64>,
        /// Only `default` is defined.
        #[arg(long, default_value = "default")]
        sweep: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CubesCmd {
    Build {
        /// `lo:hi`, applied to every axis.
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        #[arg(long)]
        max_depth: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OpsCmd {
    CheckLeibniz {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Qform {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum HeatCmd {
    Verify {
        #[arg(long)]
        t: Option<f64>,
        /// Lattice `lo:hi:n`.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FpCmd {
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum HardyCmd {
    AtomSuite {
        #[arg(long)]
        n: Option<usize>,
        /// Reuse a cube artifact instead of rebuilding the decomposition.
        #[arg(long)]
        cubes: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Runner {
    ctx: config::Context,
    out_dir: PathBuf,
}

impl Runner {
    fn path(&self, explicit: Option<PathBuf>, default: &str) -> PathBuf {
        explicit.unwrap_or_else(|| self.out_dir.join(default))
    }

    fn stage<T>(&self, stage: Stage, f: impl FnOnce() -> anyhow::Result<T>) -> Result<T, CliError> {
        f().map_err(|e| CliError::stage(stage.name(), e))
    }

    fn run_stage(&self, stage: Stage, cubes_cache: &mut Option<PathBuf>) -> Result<Vec<PathBuf>, CliError> {
        let cfg = &self.ctx.config;
        let outs = &cfg.outputs;
        match stage {
            Stage::Measure => self.stage(stage, || stages::measure(&self.ctx, &self.path(None, &outs.measure))),
            Stage::Potential => self.stage(stage, || stages::potential(&self.ctx, cfg.potential.q, &self.path(None, &outs.potential))),
            Stage::MField => self.stage(stage, || stages::m_field(&self.ctx, &cfg.m_grid, &self.path(None, &outs.m_field))),
            Stage::Cubes => {
                let out = self.path(None, &outs.cubes);
                let r = self.stage(stage, || stages::cubes(&self.ctx, &cfg.domain.lo, &cfg.domain.hi, cfg.max_depth, &out))?;
                *cubes_cache = Some(out);
                Ok(r)
            }
            Stage::Ops => self.stage(stage, || stages::ops_leibniz(&self.ctx, &self.path(None, &outs.ops))),
            Stage::Heat => self.stage(stage, || stages::heat(&self.ctx, cfg.heat.t, &cfg.heat.grid, &self.path(None, &outs.heat))),
            Stage::Fp => self.stage(stage, || stages::fp(&self.ctx, &self.path(None, &outs.fp))),
            Stage::Hardy => self.stage(stage, || {
                let cc = match cubes_cache {
                    Some(p) => stages::load_cubes(&self.ctx, p)?,
                    None => stages::build_cubes(&self.ctx, &cfg.domain.lo, &cfg.domain.hi, cfg.max_depth)?,
                };
                stages::hardy(
                    &self.ctx,
                    &cc,
                    cfg.hardy.n,
                    cfg.seed,
                    &self.path(None, &outs.atoms),
                    &self.path(None, &outs.hardy_summary),
                )
            }),
        }
    }

    fn pipeline(&self) -> Result<(), CliError> {
        let cfg = &self.ctx.config;
        let mut cubes_cache = None;
        let mut record = Vec::new();
        for &stage in Stage::ALL.iter().filter(|s| cfg.stages.contains(s)) {
            eprintln!("stage {}", stage.name());
            let files = self.run_stage(stage, &mut cubes_cache)?;
            let names: Vec<String> = files
                .iter()
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
                .collect();
            record.push(json!({"stage": stage.name(), "artifacts": names}));
        }
        let manifest = json!({"version": ARTIFACT_VERSION, "config": cfg, "stages": record});
        let path = self.path(None, &cfg.outputs.manifest);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::stage("pipeline", e.into()))
    }
}

fn domain_from(text: &str, dim: usize) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let (lo, hi) = parse_interval(text)?;
    Ok((vec![lo; dim], vec![hi; dim]))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(t) = g.tol {
        cfg.tol = t;
    }
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::ConfigInvalid(format!("threads: {e}")))?;
    }
    let out_dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let ctx = cfg.context()?;
    let runner = Runner { ctx, out_dir };
    let ctx = &runner.ctx;
    let outs = ctx.config.outputs.clone();
    let dim = ctx.rs.dim();
    match cli.command {
        Command::Measure { action } => match action {
            MeasureCmd::BallVolume { x, r, out } => runner.stage(Stage::Measure, || stages::ball_volume(ctx, &x, r, out.as_deref())),
            MeasureCmd::Doubling { out } => runner.stage(Stage::Measure, || stages::measure(ctx, &runner.path(out, &outs.measure))).map(drop),
        },
        Command::Potential {
            action: PotentialCmd::CheckRh { q, sweep, out },
        } => {
            if sweep != "default" {
                return Err(CliError::ConfigInvalid(format!("unknown sweep {sweep:?}")));
            }
            let q = q.unwrap_or(ctx.config.potential.q);
            if !(q > 1.0) {
                return Err(CliError::ConfigInvalid(format!("q = {q} must exceed 1")));
            }
            runner.stage(Stage::Potential, || stages::potential(ctx, q, &runner.path(out, &outs.potential))).map(drop)
        }
        Command::MField { grid, out } => {
            let grid = grid.unwrap_or_else(|| ctx.config.m_grid.clone());
            config::parse_axis(&grid)?;
            runner.stage(Stage::MField, || stages::m_field(ctx, &grid, &runner.path(out, &outs.m_field))).map(drop)
        }
        Command::Cubes {
            action: CubesCmd::Build { domain, max_depth, out },
        } => {
            let (lo, hi) = match domain {
                Some(d) => domain_from(&d, dim)?,
                None => (ctx.config.domain.lo.clone(), ctx.config.domain.hi.clone()),
            };
            let depth = max_depth.unwrap_or(ctx.config.max_depth);
            runner.stage(Stage::Cubes, || stages::cubes(ctx, &lo, &hi, depth, &runner.path(out, &outs.cubes))).map(drop)
        }
        Command::Ops { action } => match action {
            OpsCmd::CheckLeibniz { out } => runner.stage(Stage::Ops, || stages::ops_leibniz(ctx, &runner.path(out, &outs.ops))).map(drop),
            OpsCmd::Qform { out } => runner.stage(Stage::Ops, || stages::ops_qform(ctx, &runner.path(out, "qform.csv"))).map(drop),
        },
        Command::Heat {
            action: HeatCmd::Verify { t, grid, out },
        } => {
            let t = t.unwrap_or(ctx.config.heat.t);
            let grid = grid.unwrap_or_else(|| ctx.config.heat.grid.clone());
            dunklab::heat::Grid1D::parse(&grid)?;
            runner.stage(Stage::Heat, || stages::heat(ctx, t, &grid, &runner.path(out, &outs.heat))).map(drop)
        }
        Command::Fp {
            action: FpCmd::Verify { out },
        } => runner.stage(Stage::Fp, || stages::fp(ctx, &runner.path(out, &outs.fp))).map(drop),
        Command::Hardy {
            action: HardyCmd::AtomSuite { n, cubes, out },
        } => {
            let n = n.unwrap_or(ctx.config.hardy.n);
            runner
                .stage(Stage::Hardy, || {
                    let cc = match &cubes {
                        Some(p) => stages::load_cubes(ctx, Path::new(p))?,
                        None => stages::build_cubes(ctx, &ctx.config.domain.lo, &ctx.config.domain.hi, ctx.config.max_depth)?,
                    };
                    stages::hardy(ctx, &cc, n, ctx.config.seed, &runner.path(out, &outs.atoms), &runner.path(None, &outs.hardy_summary))
                })
                .map(drop)
        }
        Command::Pipeline => runner.pipeline(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dunklab: {e}");
            e.exit_code()
        }
    }
}
