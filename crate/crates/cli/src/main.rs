use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use egonav::diffusion::{SamplerConfig, SamplerMode};
use egonav::io::RunConfig;
use egonav::{Error, Result};
use egonav_cli::{parse_records, Stage};

#[derive(Parser, Debug)]
#[command(name = "egonav", version, about = "Egocentric scene-aware trajectory prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SamplerArgs {
    /// ddpm, ddim or hybrid.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    ddim_steps: Option<usize>,
    #[arg(long)]
    ddpm_tail: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic scenes, walks and the record dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the VAE or the diffusion stage.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        stage: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint at the output path.
        #[arg(long)]
        resume: bool,
    },
    /// Sample future trajectories for dataset records.
    Sample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Record ids such as `0,3,10-20`; all records when omitted.
        #[arg(long)]
        records: Option<String>,
        /// Also decode the future visual memory.
        #[arg(long)]
        decode: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a prediction file and write the CSV report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the configured sampler against full DDPM.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long, default_value_t = 3)]
        trials: usize,
    },
    /// Render a bird's-eye view of one record and its samples.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        record: u32,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    log::info!("resolved config:\n{}", cfg.to_toml());
    Ok(cfg)
}

fn sampler_config(cfg: &RunConfig, args: &SamplerArgs) -> Result<SamplerConfig> {
    let mut s = cfg.sampler_config()?;
    if let Some(mode) = &args.sampler {
        s.mode = mode.parse::<SamplerMode>()?;
    }
    if let Some(n) = args.ddim_steps {
        s.ddim_steps = n;
    }
    if let Some(n) = args.ddpm_tail {
        s.ddpm_tail_steps = n;
    }
    s.validate(cfg.diffusion.timesteps)?;
    log::info!("sampler: {s:?}");
    Ok(s)
}

fn run(cli: Cli) -> Result<()> {
    let text = match cli.command {
        Command::GenData { common, out } => {
            let cfg = load_config(&common)?;
            let out = out.unwrap_or_else(|| cfg.paths.dataset.clone());
            egonav_cli::cmd_gen_data(&cfg, &out)?
        }
        Command::Train { common, stage, out, resume } => {
            let cfg = load_config(&common)?;
            let stage: Stage = stage.parse()?;
            let default = match stage {
                Stage::Vae => &cfg.paths.vae,
                Stage::Diffusion => &cfg.paths.diffusion,
            };
            let out = out.unwrap_or_else(|| default.clone());
            egonav_cli::cmd_train(&cfg, stage, &out, resume)?
        }
        Command::Sample { common, sampler, records, decode, out } => {
            let cfg = load_config(&common)?;
            let s = sampler_config(&cfg, &sampler)?;
            let ids = records.as_deref().map(parse_records).transpose()?;
            let out = out.unwrap_or_else(|| cfg.paths.predictions.clone());
            egonav_cli::cmd_sample(&cfg, &s, ids.as_deref(), &out, decode)?
        }
        Command::Eval { common, predictions, out } => {
            let cfg = load_config(&common)?;
            let preds = predictions.unwrap_or_else(|| cfg.paths.predictions.clone());
            let out = out.unwrap_or_else(|| cfg.paths.report.clone());
            egonav_cli::cmd_eval(&preds, &cfg.paths.dataset, &out)?
        }
        Command::Bench { common, sampler, trials } => {
            let cfg = load_config(&common)?;
            let s = sampler_config(&cfg, &sampler)?;
            if trials == 0 {
                return Err(Error::Config("--trials must be at least 1".into()));
            }
            let r = egonav_cli::cmd_bench(&cfg, &s, trials)?;
            format!("{}\n{}\n", egonav::metrics::BenchReport::CSV_HEADER, r.csv_row())
        }
        Command::Render { common, record, predictions, out } => {
            let cfg = load_config(&common)?;
            egonav_cli::cmd_render(&cfg.paths.dataset, record, predictions.as_deref(), &out)?
        }
    };
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
