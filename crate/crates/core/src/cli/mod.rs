//! Command-line front end: `fit`, `score`, `eval` and `render-debug`.

mod commands;
mod dataset;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{
    cmd_eval, cmd_fit, cmd_render_debug, cmd_score, evaluate_records, read_score_records, ClassMetrics,
    EvalReport, FitReport, ScoreRecord,
};
pub use dataset::{find_test_scans, find_train_scans, TestScan};

use crate::config::PipelineConfig;
use crate::error::Error;
use crate::eval::DEFAULT_FPR_MAX;
use crate::fusion::FeatureMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CORRUPT: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cpmf", version, about = "Point-cloud anomaly detection with fused 3D and rendered-view features")]
pub struct Cli {
    /// TOML config file; `CPMF_*` environment variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of rendered views (1 to 27).
    #[arg(long, global = true)]
    pub views: Option<usize>,
    /// 2d, 3d or cpmf.
    #[arg(long, global = true)]
    pub feature_mode: Option<FeatureMode>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a memory bank from normal training scans.
    Fit { train_dir: PathBuf, bank_out: PathBuf },
    /// Score test scans against a bank; writes JSON scores and PLY heatmaps.
    Score {
        bank: PathBuf,
        test_dir: PathBuf,
        out_dir: PathBuf,
    },
    /// Compute per-class image AUROC and pixel PRO from a scores directory.
    Eval {
        scores_dir: PathBuf,
        gt_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FPR_MAX)]
        fpr_max: f64,
    },
    /// Write the rendered views of one scan as PNG images.
    RenderDebug { scan: PathBuf, out_dir: PathBuf },
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Corrupt(_) => EXIT_CORRUPT,
        Error::Backend { .. } | Error::IndexOutOfRange { .. } => EXIT_INTERNAL,
        _ => EXIT_INPUT,
    }
}

fn kind(code: i32) -> &'static str {
    match code {
        EXIT_INPUT => "input",
        EXIT_CORRUPT => "corrupt",
        _ => "internal",
    }
}

/// Resolves the configuration: file, then environment, then flags.
pub fn resolve_config(cli: &Cli, env: Vec<(String, String)>) -> crate::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), env)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(v) = cli.views {
        cfg.n_views = v;
    }
    if let Some(m) = cli.feature_mode {
        cfg.feature_mode = m;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &PipelineConfig) -> crate::Result<()> {
    match &cli.command {
        Command::Fit { train_dir, bank_out } => {
            let r = cmd_fit(cfg, train_dir, bank_out)?;
            println!("{}", serde_json::json!({ "bank": bank_out, "rows": r.rows, "dim": r.dim }));
        }
        Command::Score { bank, test_dir, out_dir } => {
            let records = cmd_score(cfg, bank, test_dir, out_dir)?;
            println!("{}", serde_json::json!({ "scored": records.len(), "out_dir": out_dir }));
        }
        Command::Eval { scores_dir, gt_dir, fpr_max } => {
            let report = cmd_eval(scores_dir, gt_dir, *fpr_max)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::RenderDebug { scan, out_dir } => {
            let n = cmd_render_debug(cfg, scan, out_dir)?;
            println!("{}", serde_json::json!({ "views": n, "out_dir": out_dir }));
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures print one `error[<kind>]: <message>` line on stderr.
pub fn run<I, T>(args: I, env: impl IntoIterator<Item = (String, String)>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let env: Vec<(String, String)> = env.into_iter().collect();
    let level = env
        .iter()
        .find(|(k, _)| k == "CPMF_LOG")
        .map_or("info".to_string(), |(_, v)| v.clone());
    let _ = env_logger::Builder::new().parse_filters(&level).try_init();

    let result = resolve_config(&cli, env).and_then(|cfg| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.jobs)))?;
        pool.install(|| execute(&cli, &cfg))
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error[{}]: {}", kind(code), e.to_string().replace('\n', " "));
            code
        }
    }
}
