#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod grid;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qigeom::metric::MetricId;
use qigeom::priors::PriorId;
use qigeom::region::Predicate;
use qigeom::report::{OutputFormat, RunConfig};
use qigeom::state::CurveMeasure;
use qigeom::{Error, Result};

use commands::{Family, MetricArgs, Outcome, TableArgs, VolumeArgs};

#[derive(Parser, Debug)]
#[command(
    name = "qigeom",
    version,
    about = "Metrics, separability volumes and prior comparisons for small quantum systems"
)]
struct Cli {
    /// Seed for every random choice (Monte Carlo, sample points).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Relative tolerance for integrals.
    #[arg(long, global = true, default_value_t = 1e-6)]
    tol: f64,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Measure {
    Fixed,
    Induced,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegionKind {
    Total,
    Separable,
    Entangled,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Metric tensor and volume element at a point, or a nullity check.
    Metric {
        #[arg(long)]
        family: String,
        #[arg(long, default_value = "bures")]
        metric: String,
        /// Chart coordinates, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<f64>,
        /// Check whether the volume element vanishes at random interior points.
        #[arg(long)]
        null_check: bool,
        #[arg(long, default_value_t = 40)]
        samples: usize,
    },
    /// Separability probabilities over q or alpha values.
    Sepprob {
        #[command(flatten)]
        model: ModelArgs,
        /// q values (comma list or lo:hi:step).
        #[arg(long, allow_hyphen_values = true)]
        q: Option<String>,
        /// alpha values, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        /// alpha grid lo:hi:step.
        #[arg(long, allow_hyphen_values = true)]
        alpha_grid: Option<String>,
        /// Add closed-form values and deviations (HS, trivariate and bivariate).
        #[arg(long)]
        compare_closed_form: bool,
    },
    /// A single volume (total, separable or entangled).
    Volume {
        #[command(flatten)]
        model: ModelArgs,
        /// q for ar_bell or alpha for the Jaynes models.
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        param: f64,
        #[arg(long, value_enum, default_value_t = RegionKind::Total)]
        region: RegionKind,
    },
    /// Volumes over a parameter grid; failures are recorded per row.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        /// Parameter values (comma list or lo:hi:step).
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        compare_closed_form: bool,
    },
    /// Prior comparisons, rankings, radial marginals and information gains.
    Priors {
        #[command(subcommand)]
        command: PriorsCommand,
    },
    /// Husimi-Fisher quantities.
    Husimi {
        #[command(subcommand)]
        command: HusimiCommand,
    },
    /// Run the acceptance suite and print PASS/FAIL per criterion.
    Selftest {
        /// Criteria to run (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        #[arg(long, default_value_t = 200_000)]
        mc_samples: u64,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// ar_bell, trivariate, bivariate, jaynes_one_parameter or tlb.
    #[arg(long)]
    family: String,
    #[arg(long, default_value = "bures")]
    metric: String,
    /// Measure along the bivariate curve.
    #[arg(long, value_enum, default_value_t = Measure::Fixed)]
    measure: Measure,
    /// Use Monte Carlo with this many samples instead of cubature.
    #[arg(long)]
    mc: Option<u64>,
}

impl ModelArgs {
    fn family(&self) -> Result<Family> {
        let m = match self.measure {
            Measure::Fixed => CurveMeasure::FixedDispersion,
            Measure::Induced => CurveMeasure::Induced,
        };
        Family::parse(&self.family, m)
    }

    fn metric(&self) -> Result<MetricId> {
        self.metric.parse()
    }
}

#[derive(Subcommand, Debug)]
enum PriorsCommand {
    /// Clarke comparison of two priors.
    Compare {
        a: PriorId,
        b: PriorId,
        #[arg(long, default_value = "xyz-pairs")]
        record: String,
        #[arg(long, default_value_t = 7)]
        level: u32,
    },
    /// Pairwise comparisons and the induced ordering.
    Rank {
        /// Use all four monotone-metric priors.
        #[arg(long)]
        all: bool,
        priors: Vec<PriorId>,
        #[arg(long, default_value = "xyz-pairs")]
        record: String,
        #[arg(long, default_value_t = 7)]
        level: u32,
    },
    /// Radial marginal densities on r = lo:hi:n.
    Biasedness {
        #[arg(long, default_value = "0.995:0.9999:50")]
        r: String,
        #[arg(long, value_delimiter = ',')]
        priors: Vec<PriorId>,
    },
    /// KL(posterior || prior); a `q:` record prefix selects the extended model.
    Gain {
        #[arg(long, default_value = "p_B")]
        prior: PriorId,
        #[arg(long)]
        record: String,
        #[arg(long, default_value_t = 7)]
        level: u32,
    },
}

#[derive(Subcommand, Debug)]
enum HusimiCommand {
    /// q-marginal of the extended Fisher volume element.
    MarginalQ {
        /// q values (comma list or lo:hi:step).
        #[arg(long, allow_hyphen_values = true)]
        q: String,
    },
    /// r-marginal over the configured q range, r = lo:hi:n.
    MarginalR {
        #[arg(long)]
        r: String,
    },
    /// Location and height of the q-marginal maximum.
    Peak {
        #[arg(long, default_value_t = 1.0)]
        lo: f64,
        #[arg(long, default_value_t = 10.0)]
        hi: f64,
    },
    /// Volumes of the Fisher and q = 1 extended Fisher elements over the ball.
    Normalization,
    /// Numeric Fisher tensor at (r, theta1, theta2), or (r, theta1, theta2, q) without --q.
    Tensor {
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        point: Vec<f64>,
    },
    /// Escort Husimi density at a direction.
    Density {
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, value_delimiter = ',')]
        point: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        omega: Vec<f64>,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    if !(cli.tol > 0.0 && cli.tol < 1.0) {
        return Err(Error::domain(format!(
            "--tol {} must lie in (0, 1)",
            cli.tol
        )));
    }
    Ok(RunConfig {
        seed: cli.seed,
        tol: cli.tol,
        output_format: match cli.format {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        },
        ..RunConfig::default()
    })
}

fn params_of(
    q: &Option<String>,
    alpha: &Option<String>,
    grid_spec: &Option<String>,
) -> Result<Vec<f64>> {
    match (q, alpha, grid_spec) {
        (Some(s), None, None) | (None, Some(s), None) => grid::values(s),
        (None, None, Some(s)) => grid::step_grid(s),
        (None, None, None) => Ok(vec![1.0]),
        _ => Err(Error::domain("give only one of --q, --alpha, --alpha-grid")),
    }
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<Outcome> {
    match &cli.command {
        Command::Metric {
            family,
            metric,
            point,
            q,
            alpha,
            null_check,
            samples,
        } => commands::metric(
            cfg,
            MetricArgs {
                family,
                metric,
                point: point.clone(),
                q: *q,
                alpha: *alpha,
                null_check: *null_check,
                samples: *samples,
            },
        ),
        Command::Sepprob {
            model,
            q,
            alpha,
            alpha_grid,
            compare_closed_form,
        } => commands::sepprob(
            cfg,
            TableArgs {
                family: model.family()?,
                metric: model.metric()?,
                params: params_of(q, alpha, alpha_grid)?,
                compare_closed_form: *compare_closed_form,
                mc_samples: model.mc,
            },
            "sep_probability",
        ),
        Command::Volume {
            model,
            param,
            region,
        } => commands::volume(
            cfg,
            VolumeArgs {
                family: model.family()?,
                metric: model.metric()?,
                param: *param,
                predicate: match region {
                    RegionKind::Total => Predicate::Feasible,
                    RegionKind::Separable => Predicate::Separable,
                    RegionKind::Entangled => Predicate::Entangled,
                },
                mc_samples: model.mc,
            },
        ),
        Command::Scan {
            model,
            grid: spec,
            compare_closed_form,
        } => {
            let mut out = commands::sepprob(
                cfg,
                TableArgs {
                    family: model.family()?,
                    metric: model.metric()?,
                    params: grid::values(spec)?,
                    compare_closed_form: *compare_closed_form,
                    mc_samples: model.mc,
                },
                "scan",
            )?;
            out.deferred = None;
            Ok(out)
        }
        Command::Priors { command } => match command {
            PriorsCommand::Compare {
                a,
                b,
                record,
                level,
            } => commands::priors_compare(cfg, *a, *b, record, *level),
            PriorsCommand::Rank {
                all,
                priors,
                record,
                level,
            } => {
                let list = match (all, priors.is_empty()) {
                    (true, true) => PriorId::MONOTONE.to_vec(),
                    (false, false) => priors.clone(),
                    _ => return Err(Error::domain("give either --all or a list of priors")),
                };
                commands::priors_rank(cfg, &list, record, *level)
            }
            PriorsCommand::Biasedness { r, priors } => {
                let list = if priors.is_empty() {
                    PriorId::MONOTONE.to_vec()
                } else {
                    priors.clone()
                };
                commands::priors_biasedness(cfg, r, &list)
            }
            PriorsCommand::Gain {
                prior,
                record,
                level,
            } => commands::priors_gain(cfg, *prior, record, *level),
        },
        Command::Husimi { command } => match command {
            HusimiCommand::MarginalQ { q } => commands::husimi_marginal_q(cfg, &grid::values(q)?),
            HusimiCommand::MarginalR { r } => commands::husimi_marginal_r(cfg, r),
            HusimiCommand::Peak { lo, hi } => commands::husimi_peak(cfg, *lo, *hi),
            HusimiCommand::Normalization => commands::husimi_normalizations(cfg),
            HusimiCommand::Tensor { q, point } => commands::husimi_tensor(cfg, *q, point.clone()),
            HusimiCommand::Density { q, point, omega } => {
                commands::husimi_density(cfg, *q, point, omega)
            }
        },
        Command::Selftest {
            criteria,
            mc_samples,
        } => commands::selftest(cfg, criteria, *mc_samples),
    }
}

fn emit(cli: &Cli, out: &Outcome) -> Result<()> {
    let io = |e: std::io::Error| Error::domain(format!("cannot write output: {e}"));
    let text = out.report.render()?;
    let mut stdout = std::io::stdout().lock();
    for line in &out.lines {
        writeln!(stdout, "{line}").map_err(io)?;
    }
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(io)?,
        None if out.lines.is_empty() => stdout.write_all(text.as_bytes()).map_err(io)?,
        None => {}
    }
    Ok(())
}

fn diagnose(e: &Error) -> ExitCode {
    let msg = serde_json::json!({
        "error": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    eprintln!("{msg}");
    ExitCode::from(e.exit_code() as u8)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::domain("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::domain(e.to_string()))?;
    }
    let out = dispatch(cli, &cfg)?;
    emit(cli, &out)?;
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => match out.deferred {
            Some(e) => diagnose(&e),
            None if out.failed => ExitCode::from(1),
            None => ExitCode::SUCCESS,
        },
        Err(e) => diagnose(&e),
    }
}
