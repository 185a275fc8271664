//! `csireid`: generate synthetic CSI logs, train the re-identification
//! classifier, evaluate it and predict identities.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
//! Any flag may also be given as `key = value` in a file passed with
//! `--config`; flags on the command line win over the file.

mod commands;
mod failure;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "csireid", version, about = "Wi-Fi CSI person re-identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a CSIR dataset.
    Generate(GenerateArgs),
    /// Train a classifier on a CSIR dataset and write a CSIM model.
    Train(TrainArgs),
    /// Score a model on held-out packets; write report and CMC files.
    Eval(EvalArgs),
    /// Print predicted identities for the packets of a CSIR file.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GenerateArgs {
    /// Output CSIR file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub identities: Option<u32>,
    /// Comma-separated: empty, standing-facing, standing-away, walk-lr, walk-rl.
    #[arg(long)]
    pub conditions: Option<String>,
    /// Do not add the empty-path condition when it is not listed.
    #[arg(long)]
    pub no_empty: bool,
    /// Acquisitions per identity and condition.
    #[arg(long)]
    pub acquisitions: Option<usize>,
    /// Packets per acquisition.
    #[arg(long)]
    pub packets: Option<usize>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub carrier_hz: Option<f64>,
    #[arg(long)]
    pub subcarrier_spacing_hz: Option<f64>,
    /// Per-packet phase drift (std, rad) while walking.
    #[arg(long)]
    pub jitter_rad: Option<f64>,
    /// Receiver noise variance σ².
    #[arg(long)]
    pub noise_power: Option<f64>,
    #[arg(long)]
    pub estimation_error_variance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_tx: Option<usize>,
    #[arg(long)]
    pub n_rx: Option<usize>,
    #[arg(long)]
    pub n_subcarriers: Option<usize>,
    /// Pilot vectors per packet.
    #[arg(long)]
    pub pilots: Option<usize>,
    #[arg(long)]
    pub pilot_power: Option<f64>,
    #[arg(long)]
    pub pose_delay_jitter_ns: Option<f64>,
    #[arg(long)]
    pub pose_gain_jitter: Option<f64>,
    /// key = value file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Selection of packets and the train/validation split.
#[derive(Debug, Args)]
pub struct SplitOpts {
    /// Packets kept per identity and condition before splitting.
    #[arg(long)]
    pub packets_per_id: Option<usize>,
    #[arg(long, default_value_t = 0.7)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Hidden layer widths.
    #[arg(long, default_value = "128,64")]
    pub hidden: String,
    /// Stop after this many epochs without a lower training loss.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSIM model.
    #[arg(long)]
    pub model: PathBuf,
    /// Output per-epoch history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// mean or per-subcarrier.
    #[arg(long, default_value = "mean")]
    pub feature_mode: String,
    #[command(flatten)]
    pub split: SplitOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    /// CSIM model; with --sweep it only supplies the architecture.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "report.csv")]
    pub report: PathBuf,
    #[arg(long, default_value = "cmc.csv")]
    pub cmc: PathBuf,
    /// Optional SVG plot of the CMC curve.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub packets_per_probe: usize,
    /// mean or vote.
    #[arg(long, default_value = "mean")]
    pub aggregate: String,
    /// validation: the held-out part of the split; all: every packet.
    #[arg(long, default_value = "validation")]
    pub on: String,
    /// Comma-separated packets-per-id values; trains and scores one model each.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Directory for per-row sweep outputs.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Feature mode for sweep models when no --model is given.
    #[arg(long, default_value = "mean")]
    pub feature_mode: String,
    #[command(flatten)]
    pub split: SplitOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// none (one line per packet), mean or vote (one line for all packets).
    #[arg(long, default_value = "none")]
    pub aggregate: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Flags that take no value; `key = true` in a config file switches them on.
const SWITCHES: &[&str] = &["no-empty", "no-shuffle"];

/// Splices `--key value` pairs from the `--config` file right after the
/// subcommand, so later command-line flags override them.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let args: Vec<String> = args
        .into_iter()
        .map(|a| {
            a.into_string()
                .map_err(|a| Failure::usage(format!("argument {a:?} is not valid UTF-8")))
        })
        .collect::<CliResult<_>>()?;
    let Some(sub) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 1) else {
        return Ok(args.into_iter().map(OsString::from).collect());
    };
    let mut path = None;
    let mut i = sub + 1;
    while i < args.len() {
        if args[i] == "--config" {
            path = args.get(i + 1).cloned();
            i += 1;
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args.into_iter().map(OsString::from).collect());
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::usage(format!("cannot read config file {path}: {e}")))?;
    let pairs = csireid::kv::parse_key_values(&text)
        .map_err(|e| Failure::usage(format!("config file {path}: {e}")))?;
    let mut injected = Vec::new();
    for (key, value) in pairs {
        let flag = key.replace('_', "-");
        if flag == "config" {
            return Err(Failure::usage(format!("config file {path}: nested config")));
        }
        if SWITCHES.contains(&flag.as_str()) {
            match value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{flag}")),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(Failure::usage(format!(
                        "config file {path}: {key} expects true or false, got {value:?}"
                    )))
                }
            }
        } else {
            injected.push(format!("--{flag}"));
            injected.push(value);
        }
    }
    let mut out: Vec<String> = args[..=sub].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out.into_iter().map(OsString::from).collect())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Predict(a) => commands::predict(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            return f.kind.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.kind.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_values_come_before_flags() {
        let dir = std::env::temp_dir().join(format!("csireid-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("run.conf");
        std::fs::write(&cfg, "# run\nidentities = 3\nno_empty = true\npackets=7\n").unwrap();
        let cfg = cfg.to_str().unwrap();
        let out = expand_config(strings(&[
            "csireid", "generate", "--config", cfg, "--packets", "9", "--out", "x.csir",
        ]))
        .unwrap();
        let want = strings(&[
            "csireid", "generate", "--identities", "3", "--no-empty", "--packets", "7",
            "--config", cfg, "--packets", "9", "--out", "x.csir",
        ]);
        assert_eq!(out, want);
        let cli = Cli::try_parse_from(out).unwrap();
        let Command::Generate(g) = cli.command else { panic!() };
        assert_eq!((g.identities, g.packets, g.no_empty), (Some(3), Some(9), true));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn no_config_leaves_arguments_alone() {
        let args = strings(&["csireid", "train", "--data", "d", "--model", "m"]);
        assert_eq!(expand_config(args.clone()).unwrap(), args);
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let err = expand_config(strings(&["csireid", "train", "--config", "/nonexistent/x"]))
            .unwrap_err();
        assert_eq!(err.kind, failure::Kind::Usage);
    }
}
