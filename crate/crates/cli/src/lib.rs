//! `coolsim` command-line driver.

pub mod args;
pub mod output;

use std::fmt;
use std::fs;
use std::path::Path;

use clap::Parser;
use coolsim_core::control::{run_episode, Controller, FixedController, RandomController};
use coolsim_core::baseline::{BaselineController, TrimRespondParams};
use coolsim_core::env::{read_jsonl, write_jsonl, Environment, StepOutcome};
use coolsim_core::metrics::{emit_report, summarize, MetricConfig, MetricsReport};
use coolsim_core::topology::parse_topology;
use coolsim_core::trace::{load_trace, synthetic_trace, SyntheticTraceSpec};
use coolsim_core::SystemTopology;
use coolsim_rl::distill::{
    blade_feature_names, collect_experience, fidelity_report, fit_distilled, outline, tower_feature_names,
    DistillConfig, TreeParams, Weighting,
};
use coolsim_rl::ppo::PpoConfig;
use coolsim_rl::train::{episode_seed, train_centralized, write_log_csv, Checkpoint, PolicyController};
use serde::Serialize;

use args::{Cli, Command, Common, PpoArgs, RuleController, WeightingArg};
use output::OutputDir;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, unreadable or invalid inputs.
    Config(String),
    /// Failures while simulating, training or writing outputs.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn config(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Errors go to stderr as one JSON line.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a.common, a.controller, a.episodes),
        Command::Train(a) => train(&a.common, &a.ppo, a.checkpoint_interval),
        Command::Evaluate(a) => evaluate(&a),
        Command::Distill(a) => distill(&a),
        Command::Report(a) => report(&a),
        Command::GenTrace(a) => gen_trace(&a),
    }
}

fn read(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {what} `{}`: {e}", path.display())))
}

pub fn load_topology(path: &Path) -> Result<SystemTopology, CliError> {
    parse_topology(&read(path, "topology")?).map_err(config)
}

struct Setup {
    topo: SystemTopology,
    env: Environment,
    out: OutputDir,
}

fn setup(c: &Common) -> Result<Setup, CliError> {
    let topo_text = read(&c.topology, "topology")?;
    let mut topo = parse_topology(&topo_text).map_err(config)?;
    if let Some(n) = c.max_ep_len {
        if n == 0 {
            return Err(CliError::Config("max_ep_len must be positive".into()));
        }
        topo.timing.max_episode_duration = n as f64 * topo.timing.step_size;
    }
    let trace_text = read(&c.trace, "trace")?;
    let mut trace = load_trace(&trace_text, &topo).map_err(config)?;
    if c.trace_from.is_some() || c.trace_to.is_some() {
        let from = c.trace_from.unwrap_or(f64::NEG_INFINITY);
        let to = c.trace_to.unwrap_or(f64::INFINITY);
        trace = trace.window(from, to);
        if trace.len() < 2 {
            return Err(CliError::Config(format!("trace window [{from}, {to}] holds fewer than two samples")));
        }
    }
    let env = Environment::new(topo.clone(), trace).map_err(config)?;
    let mut out = OutputDir::create(&c.output_dir)?;
    out.input("topology", topo_text.as_bytes());
    out.input("trace", trace_text.as_bytes());
    Ok(Setup { topo, env, out })
}

fn rule_controller(kind: RuleController, topo: &SystemTopology, seed: u64) -> Result<Box<dyn Controller>, CliError> {
    Ok(match kind {
        RuleController::Baseline => Box::new(BaselineController::new(topo, TrimRespondParams::default()).map_err(config)?),
        RuleController::Random => Box::new(RandomController::new(topo, seed)),
        RuleController::Fixed => Box::new(FixedController::neutral(topo)),
    })
}

fn run_episodes(
    env: &mut Environment,
    episodes: usize,
    seed: u64,
    mut make: impl FnMut(usize) -> Result<Box<dyn Controller>, CliError>,
) -> Result<(Vec<Vec<StepOutcome>>, String, String), CliError> {
    if episodes == 0 {
        return Err(CliError::Config("episodes must be positive".into()));
    }
    let mut logs = Vec::with_capacity(episodes);
    let (mut name, mut details) = (String::new(), String::new());
    for k in 0..episodes {
        let mut ctrl = make(k)?;
        name = ctrl.name();
        details = ctrl.details();
        logs.push(run_episode(env, ctrl.as_mut(), episode_seed(seed, k)).map_err(runtime)?);
    }
    Ok((logs, name, details))
}

fn write_run(
    out: &mut OutputDir,
    topo: &SystemTopology,
    seed: u64,
    logs: &[Vec<StepOutcome>],
    name: &str,
    details: &str,
) -> Result<(), CliError> {
    out.write("run.jsonl", &logs.iter().map(|l| write_jsonl(l)).collect::<String>())?;
    let cfg = MetricConfig::default();
    let mut r = MetricsReport::new(topo.fingerprint(), seed, cfg.clone());
    r.push(name, details, summarize(logs, &cfg).map_err(runtime)?);
    let (json, csv) = emit_report(&r);
    out.write("report.json", &json)?;
    out.write("report.csv", &csv)
}

fn simulate(c: &Common, kind: RuleController, episodes: usize) -> Result<(), CliError> {
    let Setup { topo, mut env, mut out } = setup(c)?;
    let (logs, name, details) =
        run_episodes(&mut env, episodes, c.seed, |k| rule_controller(kind, &topo, episode_seed(c.seed, k)))?;
    write_run(&mut out, &topo, c.seed, &logs, &name, &details)?;
    out.finish("simulate", Some(c.seed), Some(&topo.fingerprint()))
}

/// PPO configuration from the defaults and the command-line overrides. The
/// single-valued flags (`lr_actor`, `gamma`, `vf-coef`) set the blade agent;
/// the rest apply to both agents.
pub fn ppo_config(p: &PpoArgs) -> Result<PpoConfig, CliError> {
    if p.num_agents != 2 {
        return Err(CliError::Config(format!(
            "num-agents must be 2 (blade and tower agents), got {}",
            p.num_agents
        )));
    }
    let mut cfg = PpoConfig::default();
    if let Some(v) = p.max_training_timesteps {
        cfg.total_timesteps = v;
    }
    if let Some(v) = p.update_interval {
        cfg.update_interval = v;
    }
    let b = &mut cfg.blade;
    if let Some(v) = p.lr_actor {
        b.lr_actor = v;
    }
    if let Some(v) = p.gamma {
        b.gamma = v;
    }
    if let Some(v) = p.vf_coef {
        b.vf_coef = v;
    }
    for h in [&mut cfg.blade, &mut cfg.tower] {
        if let Some(v) = p.lr_critic {
            h.lr_critic = v;
        }
        if let Some(v) = p.k_epochs {
            h.k_epochs = v;
        }
        if let Some(v) = p.eps_clip {
            h.eps_clip = v;
        }
        if let Some(v) = p.gae_lambda {
            h.gae_lambda = v;
        }
        if let Some(v) = p.minibatch_size {
            h.minibatch_size = v;
        }
        if let Some(v) = p.ent_coef {
            h.ent_coef = v;
        }
    }
    cfg.check().map_err(config)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct RunConfig<'a> {
    exp_name: &'a str,
    seed: u64,
    ppo: &'a PpoConfig,
}

fn train(c: &Common, p: &PpoArgs, checkpoint_interval: usize) -> Result<(), CliError> {
    let cfg = ppo_config(p)?;
    if checkpoint_interval == 0 {
        return Err(CliError::Config("checkpoint-interval must be positive".into()));
    }
    let Setup { topo, mut env, mut out } = setup(c)?;
    let run = RunConfig {
        exp_name: &p.exp_name,
        seed: c.seed,
        ppo: &cfg,
    };
    out.write("config.json", &(serde_json::to_string_pretty(&run).expect("config serializes") + "\n"))?;
    let mut write_err = None;
    let result = train_centralized(&mut env, &cfg, c.seed, |u, o| {
        if u % checkpoint_interval == 0 && write_err.is_none() {
            let ck = o.checkpoint(&topo, &cfg, c.seed);
            if let Err(e) = out.write(&format!("checkpoints/update_{u:05}.json"), &ck.to_json()) {
                write_err = Some(e);
            }
        }
        Ok(())
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    let outcome = result.map_err(runtime)?;
    out.write("train_log.csv", &write_log_csv(&outcome.log))?;
    out.write("checkpoint.json", &outcome.checkpoint(&topo, &cfg, c.seed).to_json())?;
    out.finish("train", Some(c.seed), Some(&topo.fingerprint()))
}

pub fn load_checkpoint(path: &Path, topo: &SystemTopology) -> Result<Checkpoint, CliError> {
    let ck = Checkpoint::from_json(&read(path, "checkpoint")?).map_err(config)?;
    ck.check(topo).map_err(config)?;
    Ok(ck)
}

fn evaluate(a: &args::EvaluateArgs) -> Result<(), CliError> {
    let c = &a.common;
    let Setup { topo, mut env, mut out } = setup(c)?;
    let (logs, name, details) = match &a.checkpoint {
        Some(path) => {
            let text = read(path, "checkpoint")?;
            out.input("checkpoint", text.as_bytes());
            let ck = load_checkpoint(path, &topo)?;
            run_episodes(&mut env, a.episodes, c.seed, |_| Ok(Box::new(PolicyController::modal(ck.agents.clone()))))?
        }
        None => {
            let kind = a.controller.unwrap_or(RuleController::Baseline);
            run_episodes(&mut env, a.episodes, c.seed, |k| rule_controller(kind, &topo, episode_seed(c.seed, k)))?
        }
    };
    write_run(&mut out, &topo, c.seed, &logs, &name, &details)?;
    out.finish("evaluate", Some(c.seed), Some(&topo.fingerprint()))
}

fn distill(a: &args::DistillArgs) -> Result<(), CliError> {
    let c = &a.common;
    if a.episodes == 0 || a.eval_episodes == 0 {
        return Err(CliError::Config("episodes and eval-episodes must be positive".into()));
    }
    if !(a.resample_factor > 0.0) || a.max_depth == 0 || a.min_leaf == 0 {
        return Err(CliError::Config("resample-factor, max-depth and min-leaf must be positive".into()));
    }
    let Setup { topo, mut env, mut out } = setup(c)?;
    let text = read(&a.checkpoint, "checkpoint")?;
    out.input("checkpoint", text.as_bytes());
    let ck = load_checkpoint(&a.checkpoint, &topo)?;
    let weighting = match a.weighting {
        WeightingArg::Viper => Weighting::Viper,
        WeightingArg::Uniform => Weighting::Uniform,
    };
    let cfg = DistillConfig {
        weighting,
        resample_factor: a.resample_factor,
        tree: TreeParams {
            max_depth: a.max_depth,
            min_leaf: a.min_leaf,
        },
    };
    let std = ck.action_std;
    let d = collect_experience(&ck.agents, &mut env, a.episodes, std, c.seed).map_err(runtime)?;
    let policy = fit_distilled(&d, &topo, &cfg, c.seed).map_err(runtime)?;
    let eval = collect_experience(&ck.agents, &mut env, a.eval_episodes, std, c.seed.wrapping_add(1)).map_err(runtime)?;
    let report = fidelity_report(&policy, weighting, &eval, &mut env, a.eval_episodes, c.seed.wrapping_add(2))
        .map_err(runtime)?;

    out.write("tree_cdu.json", &json(&policy.cdu))?;
    out.write("tree_valves.json", &json(&policy.valves))?;
    out.write("tree_tower.json", &json(&policy.tower))?;
    let b = blade_feature_names(topo.blade_groups_per_cabinet);
    let t = tower_feature_names(topo.cells_per_tower, topo.num_towers);
    let text = format!(
        "# cabinet setpoint and flow\n{}\n# cabinet valves\n{}\n# tower delta index\n{}",
        outline(&policy.cdu, &b),
        outline(&policy.valves, &b),
        outline(&policy.tower, &t)
    );
    out.write("trees.txt", &text)?;
    out.write("fidelity.json", &json(&report))?;
    out.finish("distill", Some(c.seed), Some(&topo.fingerprint()))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializes") + "\n"
}

/// Splits a concatenated step log into episodes at each reset outcome.
pub fn split_episodes(steps: Vec<StepOutcome>) -> Vec<Vec<StepOutcome>> {
    let mut eps: Vec<Vec<StepOutcome>> = Vec::new();
    for o in steps {
        if o.info.step == 0 || eps.is_empty() {
            eps.push(Vec::new());
        }
        eps.last_mut().expect("pushed").push(o);
    }
    eps
}

fn report(a: &args::ReportArgs) -> Result<(), CliError> {
    if !a.labels.is_empty() && a.labels.len() != a.logs.len() {
        return Err(CliError::Config(format!(
            "{} labels given for {} logs",
            a.labels.len(),
            a.logs.len()
        )));
    }
    let topo_text = read(&a.topology, "topology")?;
    let topo = parse_topology(&topo_text).map_err(config)?;
    let mut cfg = MetricConfig::default();
    if let Some(v) = a.upper_t {
        cfg.upper_t = v;
    }
    if let Some(v) = a.lower_t {
        cfg.lower_t = v;
    }
    if let Some(v) = a.carbon_intensity {
        cfg.carbon_intensity = v;
    }
    cfg.check().map_err(config)?;
    let mut out = OutputDir::create(&a.output_dir)?;
    out.input("topology", topo_text.as_bytes());
    let mut r = MetricsReport::new(topo.fingerprint(), a.seed, cfg.clone());
    for (i, path) in a.logs.iter().enumerate() {
        let text = read(path, "step log")?;
        out.input("log", text.as_bytes());
        let steps = read_jsonl(&text).map_err(|e| CliError::Config(format!("step log `{}`: {e}", path.display())))?;
        let label = match a.labels.get(i) {
            Some(l) => l.clone(),
            None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        let file = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let s = summarize(&split_episodes(steps), &cfg).map_err(runtime)?;
        r.push(&label, &format!("log {file}"), s);
    }
    let (json, csv) = emit_report(&r);
    out.write("report.json", &json)?;
    out.write("report.csv", &csv)?;
    out.finish("report", Some(a.seed), Some(&topo.fingerprint()))
}

fn gen_trace(a: &args::GenTraceArgs) -> Result<(), CliError> {
    let topo_text = read(&a.topology, "topology")?;
    let topo = parse_topology(&topo_text).map_err(config)?;
    if !(a.duration_hours > 0.0) {
        return Err(CliError::Config("duration-hours must be positive".into()));
    }
    let mut spec = SyntheticTraceSpec {
        duration_s: a.duration_hours * 3600.0,
        ..SyntheticTraceSpec::default()
    };
    if let Some(v) = a.mean_load {
        if !(v >= 0.0) {
            return Err(CliError::Config("mean-load must be non-negative".into()));
        }
        spec.mean_load = v;
    }
    let trace = synthetic_trace(topo.num_cabinets, topo.blade_groups_per_cabinet, &spec, a.seed);
    let mut out = OutputDir::create(&a.output_dir)?;
    out.input("topology", topo_text.as_bytes());
    out.write("trace.csv", &trace.to_csv())?;
    out.finish("gen-trace", Some(a.seed), Some(&topo.fingerprint()))
}
