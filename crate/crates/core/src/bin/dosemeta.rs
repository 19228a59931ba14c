use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dosemeta::dose_response::{DoseTransform, FitMethod};
use dosemeta::meta_analysis::{MuPrior, PriorSpec, TauPrior};
use dosemeta::report::{
    cmd_bridge, cmd_fit, cmd_meta, cmd_simulate, BridgeOptions, FitOptions, MetaOptions,
    TableFormat,
};

const EXIT_CODES: &str = "Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.";

/// MTD estimation and meta-analysis for phase I dose-finding studies.
#[derive(Parser)]
#[command(name = "dosemeta", version, after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-study MTD estimates from a dose-toxicity CSV.
    #[command(after_help = EXIT_CODES)]
    Fit {
        csv: PathBuf,
        /// plain, firth, flac or all.
        #[arg(long, default_value = "flac")]
        method: String,
        /// Fit on the natural logarithm of the dose.
        #[arg(long)]
        log_dose: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Random-effects meta-analysis of log-dose MTD estimates.
    #[command(after_help = EXIT_CODES)]
    Meta {
        csv: PathBuf,
        #[arg(long, default_value = "flac")]
        method: String,
        #[command(flatten)]
        prior: PriorArgs,
        /// Drop studies whose standard error exceeds this value.
        #[arg(long)]
        drop_se_above: Option<f64>,
        /// Write a forest plot to this file.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Two-level analysis shrinking one population towards the others.
    #[command(after_help = EXIT_CODES)]
    Bridge {
        csv: PathBuf,
        /// Group tag of the population to shrink.
        #[arg(long)]
        target_group: String,
        #[arg(long, default_value = "flac")]
        method: String,
        /// Half-normal tau scale for groups with one or two studies.
        #[arg(long, default_value_t = 0.2)]
        small_group_tau_scale: f64,
        /// Half-normal tau scale of the second stage.
        #[arg(long, default_value_t = 0.2)]
        stage2_tau_scale: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo evaluation over a grid read from a JSON config.
    #[command(after_help = EXIT_CODES)]
    Simulate {
        config: PathBuf,
        /// Per-replication results CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tsv: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Target DLT probability.
    #[arg(long, default_value_t = 0.33)]
    target: f64,
    /// Tab-separated output.
    #[arg(long)]
    tsv: bool,
}

#[derive(Args)]
struct PriorArgs {
    /// Half-normal prior scale for tau; uniform when omitted.
    #[arg(long)]
    tau_scale: Option<f64>,
    /// Normal prior mean for mu; uniform when omitted.
    #[arg(long, requires = "mu_sd")]
    mu_mean: Option<f64>,
    #[arg(long, requires = "mu_mean")]
    mu_sd: Option<f64>,
}

impl PriorArgs {
    fn spec(&self) -> PriorSpec {
        PriorSpec {
            mu_prior: match (self.mu_mean, self.mu_sd) {
                (Some(mean), Some(sd)) => MuPrior::Normal { mean, sd },
                _ => MuPrior::ImproperUniform,
            },
            tau_prior: match self.tau_scale {
                Some(scale) => TauPrior::HalfNormal { scale },
                None => TauPrior::ImproperUniform,
            },
        }
    }
}

fn format(tsv: bool) -> TableFormat {
    if tsv {
        TableFormat::Tsv
    } else {
        TableFormat::Aligned
    }
}

fn run(cli: Cli) -> Result<String> {
    let out = match cli.command {
        Command::Fit { csv, method, log_dose, common } => {
            let methods = match method.as_str() {
                "all" => FitMethod::ALL.to_vec(),
                m => vec![m.parse::<FitMethod>()?],
            };
            let opts = FitOptions {
                methods,
                transform: if log_dose { DoseTransform::Log } else { DoseTransform::Identity },
                target: common.target,
                format: format(common.tsv),
            };
            cmd_fit(&csv, &opts).with_context(|| format!("fitting {}", csv.display()))?
        }
        Command::Meta { csv, method, prior, drop_se_above, svg, common } => {
            let opts = MetaOptions {
                method: method.parse()?,
                target: common.target,
                prior: prior.spec(),
                drop_se_above,
                svg,
                format: format(common.tsv),
            };
            cmd_meta(&csv, &opts).with_context(|| format!("analyzing {}", csv.display()))?
        }
        Command::Bridge { csv, target_group, method, small_group_tau_scale, stage2_tau_scale, common } => {
            let opts = BridgeOptions {
                method: method.parse()?,
                target_toxicity: common.target,
                target_group,
                small_group_tau_scale,
                second_stage_prior: PriorSpec::half_normal(stage2_tau_scale),
                format: format(common.tsv),
            };
            cmd_bridge(&csv, &opts).with_context(|| format!("bridging {}", csv.display()))?
        }
        Command::Simulate { config, out, tsv } => cmd_simulate(&config, &out, format(tsv))
            .with_context(|| format!("simulating {}", config.display()))?,
    };
    Ok(out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<dosemeta::Error>()
                .map_or(2, dosemeta::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
