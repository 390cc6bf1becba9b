use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "coolsim", version, about = "Liquid-cooled data center digital twin")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a rule-based controller over the trace and write its step log and report.
    Simulate(SimulateArgs),
    /// Train the blade and tower agents.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or a rule-based controller) on fixed-seed episodes.
    Evaluate(EvaluateArgs),
    /// Distill a checkpoint into decision trees.
    Distill(DistillArgs),
    /// Build a metrics report from step logs.
    Report(ReportArgs),
    /// Write a synthetic exogenous trace.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value_t = 123)]
    pub seed: u64,
    #[arg(long = "output-dir", visible_alias = "output_dir")]
    pub output_dir: PathBuf,
    /// Restrict the trace to samples at or after this time, s.
    #[arg(long = "trace-from", visible_alias = "trace_from")]
    pub trace_from: Option<f64>,
    /// Restrict the trace to samples at or before this time, s.
    #[arg(long = "trace-to", visible_alias = "trace_to")]
    pub trace_to: Option<f64>,
    #[arg(long = "max_ep_len", visible_alias = "max-ep-len")]
    pub max_ep_len: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleController {
    Baseline,
    Random,
    Fixed,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = RuleController::Baseline)]
    pub controller: RuleController,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PpoArgs {
    #[arg(long = "exp-name", visible_alias = "exp_name", default_value = "ppo_ma_ca")]
    pub exp_name: String,
    #[arg(long = "max_training_timesteps", visible_alias = "max-training-timesteps", value_parser = parse_count)]
    pub max_training_timesteps: Option<usize>,
    #[arg(long = "lr_actor", visible_alias = "lr-actor")]
    pub lr_actor: Option<f64>,
    #[arg(long = "lr_critic", visible_alias = "lr-critic")]
    pub lr_critic: Option<f64>,
    #[arg(long = "K_epochs", visible_aliases = ["k-epochs", "k_epochs"], value_parser = parse_count)]
    pub k_epochs: Option<usize>,
    #[arg(long = "eps_clip", visible_alias = "eps-clip")]
    pub eps_clip: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long = "gae_lambda", visible_alias = "gae-lambda")]
    pub gae_lambda: Option<f64>,
    #[arg(long = "minibatch_size", visible_alias = "minibatch-size", value_parser = parse_count)]
    pub minibatch_size: Option<usize>,
    #[arg(long = "ent-coef", visible_alias = "ent_coef")]
    pub ent_coef: Option<f64>,
    #[arg(long = "vf-coef", visible_alias = "vf_coef")]
    pub vf_coef: Option<f64>,
    #[arg(long = "num-agents", visible_alias = "num_agents", default_value_t = 2)]
    pub num_agents: usize,
    #[arg(long = "update-interval", visible_alias = "update_interval", value_parser = parse_count)]
    pub update_interval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub ppo: PpoArgs,
    /// Write a checkpoint every this many updates.
    #[arg(long = "checkpoint-interval", visible_alias = "checkpoint_interval", default_value_t = 10)]
    pub checkpoint_interval: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, conflicts_with = "controller")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub controller: Option<RuleController>,
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Viper,
    Uniform,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Oracle episodes collected for fitting.
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    /// Episodes used to score the fitted trees.
    #[arg(long = "eval-episodes", visible_alias = "eval_episodes", default_value_t = 5)]
    pub eval_episodes: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Viper)]
    pub weighting: WeightingArg,
    #[arg(long = "max-depth", visible_alias = "max_depth", default_value_t = 17)]
    pub max_depth: usize,
    #[arg(long = "min-leaf", visible_alias = "min_leaf", default_value_t = 1)]
    pub min_leaf: usize,
    #[arg(long = "resample-factor", visible_alias = "resample_factor", default_value_t = 1.0)]
    pub resample_factor: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Step logs (JSONL) to summarize, one report row each.
    #[arg(long = "log", required = true)]
    pub logs: Vec<PathBuf>,
    /// Row labels, in `--log` order; defaults to the file stem.
    #[arg(long = "label")]
    pub labels: Vec<String>,
    #[arg(long, default_value_t = 123)]
    pub seed: u64,
    #[arg(long = "output-dir", visible_alias = "output_dir")]
    pub output_dir: PathBuf,
    #[arg(long = "upper-t", visible_alias = "upper_t")]
    pub upper_t: Option<f64>,
    #[arg(long = "lower-t", visible_alias = "lower_t")]
    pub lower_t: Option<f64>,
    #[arg(long = "carbon-intensity", visible_alias = "carbon_intensity")]
    pub carbon_intensity: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long = "duration-hours", visible_alias = "duration_hours", default_value_t = 48.0)]
    pub duration_hours: f64,
    #[arg(long = "mean-load", visible_alias = "mean_load")]
    pub mean_load: Option<f64>,
    #[arg(long = "output-dir", visible_alias = "output_dir")]
    pub output_dir: PathBuf,
}

/// Accepts integers and float notation such as `5e6`.
fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() || v > usize::MAX as f64 {
        return Err(format!("`{s}` is not a non-negative integer"));
    }
    Ok(v as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_float_notation() {
        assert_eq!(parse_count("5e6"), Ok(5_000_000));
        assert_eq!(parse_count("1000"), Ok(1000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }
}
