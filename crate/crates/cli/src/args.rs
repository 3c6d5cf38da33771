use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::CliError;

/// Private SGD with Gaussian or von Mises-Fisher noise, privacy accounting,
/// attacks and calibration sweeps.
///
/// Every subcommand accepts `--config FILE`, a TOML file whose keys are the
/// subcommand's long flags in snake_case. Flags given on the command line
/// win over the file.
#[derive(Debug, Parser)]
#[command(name = "dirdp", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier and write a model file.
    Train(TrainCmd),
    /// Attack a trained model and print one report row as CSV.
    Attack(AttackCmd),
    /// Print noise multipliers for target epsilons.
    Accountant(AccountantCmd),
    /// Score a reconstruction against a reference text.
    Score(ScoreCmd),
    /// Sweep noise levels and write a tradeoff table.
    Calibrate(CalibrateCmd),
    /// Write a synthetic labelled corpus.
    Synth(SynthCmd),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML file with default values for this subcommand's flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Labelled corpus, one `label<TAB>text` per line. Split by seed unless --test is given.
    #[arg(long, value_name = "TSV")]
    pub data: Option<PathBuf>,
    /// Validation split file.
    #[arg(long, value_name = "TSV")]
    pub validation: Option<PathBuf>,
    /// Test split file; disables seeded splitting of --data.
    #[arg(long, value_name = "TSV")]
    pub test: Option<PathBuf>,
    /// Share of --data used for training when splitting [default: 0.8].
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Share of --data used for validation when splitting [default: 0.1].
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Seed of the train/validation/test shuffle [default: 0].
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Vocabulary size, most frequent training tokens [default: 2000].
    #[arg(long)]
    pub max_vocab: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// SGD step size [default: 0.5].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Examples per lot [default: 16].
    #[arg(long)]
    pub lot_size: Option<usize>,
    /// Passes over the training split [default: 5].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden units; 0 trains a linear model [default: 0].
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Apply VMF noise to each layer separately.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub per_layer: Option<bool>,
    /// Training seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Gradient mechanism: none, gaussian or vmf [default: none; attack: the model's].
    #[arg(long)]
    pub noise: Option<String>,
    /// Noise multiplier σ (gaussian) or concentration κ (vmf).
    #[arg(long)]
    pub noise_param: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    /// Members and non-members scored by membership inference [default: 200].
    #[arg(long)]
    pub mia_samples: Option<usize>,
    /// Reference models for the reference attack; 0 skips it [default: 10].
    #[arg(long)]
    pub reference_models: Option<usize>,
    /// Held-out sentences attacked by gradient inversion [default: 32].
    #[arg(long)]
    pub probes: Option<usize>,
    /// Iteration budget of the noised gradient match [default: 200].
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Longest token list emitted per reconstruction [default: 64].
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Embedding table (`token v1 .. vD` per line) for cosine scores; one-hot when absent.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Output model file [default: model.json].
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttackCmd {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Model file written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Attack seed [default: the model's training seed].
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub attack: AttackArgs,
}

#[derive(Debug, Args)]
pub struct AccountantCmd {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Training set size N.
    #[arg(long)]
    pub examples: Option<u64>,
    /// Lot size L.
    #[arg(long)]
    pub batch: Option<u64>,
    /// Epochs; steps are epochs·⌈N/L⌉.
    #[arg(long)]
    pub epochs: Option<u64>,
    /// Target δ [default: 1/N].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Target epsilons, comma separated [default: 1,10,100,1000,10000,100000,1000000].
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub epsilons: Option<Vec<f64>>,
    /// RDP to (ε, δ) conversion: tight or classic [default: tight].
    #[arg(long)]
    pub conversion: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScoreCmd {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Reconstructed text.
    #[arg(long)]
    pub candidate: Option<String>,
    /// Original text.
    #[arg(long)]
    pub reference: Option<String>,
    /// Embedding table for the cosine score; one-hot over both texts when absent.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateCmd {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub attack: AttackArgs,
    /// Gaussian noise multipliers, comma separated.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub sigmas: Option<Vec<f64>>,
    /// Gaussian target epsilons, resolved to σ by the accountant.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub epsilons: Option<Vec<f64>>,
    /// δ for --epsilons [default: 1/N].
    #[arg(long)]
    pub delta: Option<f64>,
    /// VMF concentrations, comma separated.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub kappas: Option<Vec<f64>>,
    /// Training seeds per grid point [default: 0,1,2,3,4].
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub seeds: Option<Vec<u64>>,
    /// Utility column: accuracy or mcc [default: accuracy].
    #[arg(long)]
    pub utility: Option<String>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output path stem; writes STEM.csv, STEM.aux.csv and STEM.svg [default: calibration].
    #[arg(long, value_name = "STEM")]
    pub out: Option<PathBuf>,
    /// Also write the scatter plot.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub plot: Option<bool>,
    /// Fill the wall_time_s column (makes output run-dependent).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output TSV.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Sentences [default: 2000].
    #[arg(long)]
    pub examples: Option<usize>,
    /// Generator seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability that a token is a class cue [default: 0.15].
    #[arg(long)]
    pub cue_rate: Option<f64>,
    /// Probability that a label is flipped [default: 0.1].
    #[arg(long)]
    pub label_noise: Option<f64>,
    /// Background vocabulary size [default: 400].
    #[arg(long)]
    pub filler_words: Option<usize>,
    /// Cue words per class [default: 20].
    #[arg(long)]
    pub cue_words: Option<usize>,
}

/// Keys whose values are paths, resolved against the config file's directory.
const PATH_KEYS: [&str; 7] = ["data", "validation", "test", "model", "embeddings", "out", "config"];

/// Splices the values of a `--config` file into `argv` right after the
/// subcommand, so that later command-line flags override them.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(sub) = argv.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(argv);
    };
    let mut path = None;
    let mut it = argv[sub + 1..].iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = it.next().cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let path = PathBuf::from(path);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut injected = Vec::new();
    for (key, value) in table {
        if key == "config" {
            return Err(CliError::Usage(format!("{}: nested `config` key", path.display())));
        }
        let text = match value {
            toml::Value::String(s) if PATH_KEYS.contains(&key.as_str()) => dir.join(s).display().to_string(),
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(xs) => xs
                .iter()
                .map(|x| match x {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    other => Err(CliError::Usage(format!(
                        "{}: `{key}` has unsupported item {other}",
                        path.display()
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?
                .join(","),
            other => {
                return Err(CliError::Usage(format!(
                    "{}: `{key}` has unsupported value {other}",
                    path.display()
                )))
            }
        };
        injected.push(format!("--{}={text}", key.replace('_', "-")));
    }
    let mut out = argv[..=sub].to_vec();
    out.extend(injected);
    out.extend(argv[sub + 1..].iter().cloned());
    Ok(out)
}
