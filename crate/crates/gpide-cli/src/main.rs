//! Command line front end: SAC training, PID tuning, evaluation,
//! method comparison, attention export, and encoder ablations. Every
//! command is deterministic given its seed; outputs land in per-run
//! directories guarded against accidental overwrites.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use gpide_core::envs::{EnvKind, Variation};
use gpide_core::eval::{
    attention_heatmap, test_suite, write_attention_csv, write_eval_csv, write_scores_csv,
};
use gpide_core::pid::{evaluate_gains, tune_gains};
use gpide_core::sac::{
    evaluate_agent, train, Agent, AgentConfig, EncoderKind, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Output root override; relative --out paths are resolved under it.
const OUT_ROOT_VAR: &str = "GPIDE_OUT_ROOT";

#[derive(Parser)]
#[command(name = "gpide", about = "PID-inspired history encoders for tracking control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a SAC agent from a TOML experiment config.
    Train(TrainArgs),
    /// Tune a PID controller with the cross-entropy method.
    TunePid(TunePidArgs),
    /// Score a finished training run on the frozen test suite.
    Evaluate(EvaluateArgs),
    /// Normalize test returns of several finished runs against each other.
    Compare(CompareArgs),
    /// Export the mean attention pattern of one encoder head.
    ExportAttention(ExportAttentionArgs),
    /// Train every GPIDE head ablation under one config.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for manifest, checkpoint, and CSVs.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TunePidArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    variation: String,
    /// Total environment steps granted to the tuner.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Output directory of a finished train run.
    #[arg(long)]
    run: PathBuf,
    /// Test on a different variation than the run was trained on, for
    /// train-on-X / test-on-Y robustness cells.
    #[arg(long)]
    test_variation: Option<String>,
    /// Result CSV path; defaults to result.csv inside the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Finished run directories (train or tune-pid), each with a
    /// manifest and result.csv.
    #[arg(long, required = true, num_args = 1..)]
    run: Vec<PathBuf>,
    /// Comparison CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ExportAttentionArgs {
    /// Output directory of a finished train run with attention heads.
    #[arg(long)]
    run: PathBuf,
    /// Attention head index within the encoder's head list.
    #[arg(long)]
    head: usize,
    /// Rollouts to average, drawn from the start of the test suite.
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    /// Heatmap CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// TOML experiment config; its encoder field is ignored.
    #[arg(long)]
    config: PathBuf,
    /// Parent directory receiving one subdirectory per head ablation.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

/// Experiment file. Optional tables fall back to the standard
/// hyperparameters for the chosen environment and encoder.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentConfig {
    env: String,
    variation: String,
    encoder: String,
    #[serde(default)]
    seed: u64,
    total_steps: usize,
    #[serde(default)]
    sac: SacOverrides,
    #[serde(default)]
    eval: EvalOverrides,
    /// Where this config was parsed from; never part of the file itself.
    #[serde(skip)]
    source: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SacOverrides {
    lr: Option<f64>,
    gamma: Option<f64>,
    tau: Option<f64>,
    batch_size: Option<usize>,
    lookback: Option<usize>,
    policy_hidden: Option<Vec<usize>>,
    q_hidden: Option<Vec<usize>>,
    policy_shortcut_dim: Option<usize>,
    q_shortcut_dim: Option<usize>,
    warmup_steps: Option<usize>,
    replay_capacity: Option<usize>,
    entropy_target: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalOverrides {
    period: Option<usize>,
    episodes: Option<usize>,
}

/// Anything that should terminate with a usage/config exit code.
#[derive(Debug)]
struct ConfigError(String);

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<gpide_core::numcore::NumError> for CliError {
    fn from(e: gpide_core::numcore::NumError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<gpide_core::eval::EvalError> for CliError {
    fn from(e: gpide_core::eval::EvalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::TunePid(a) => cmd_tune_pid(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::ExportAttention(a) => cmd_export_attention(a),
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_VAR) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// Create a fresh output directory, refusing to clobber without --force.
fn prepare_out_dir(path: &Path, force: bool) -> Result<PathBuf, CliError> {
    let path = resolve_out(path);
    if path.exists() {
        if !force {
            return Err(ConfigError(format!(
                "output directory {} exists; pass --force to overwrite",
                path.display()
            ))
            .into());
        }
        std::fs::remove_dir_all(&path)?;
    }
    std::fs::create_dir_all(&path)?;
    Ok(path)
}

fn prepare_out_file(path: &Path, force: bool) -> Result<PathBuf, CliError> {
    let path = resolve_out(path);
    if path.exists() && !force {
        return Err(ConfigError(format!(
            "output file {} exists; pass --force to overwrite",
            path.display()
        ))
        .into());
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(path)
}

fn parse_env(s: &str) -> Result<EnvKind, ConfigError> {
    EnvKind::parse(s).ok_or_else(|| ConfigError(format!("unknown environment {s:?}")))
}

fn parse_variation(kind: EnvKind, s: &str) -> Result<Variation, ConfigError> {
    let v = Variation::parse(s).ok_or_else(|| ConfigError(format!("unknown variation {s:?}")))?;
    if !v.valid_for(kind) {
        return Err(ConfigError(format!(
            "variation {s:?} is not valid for environment {:?}",
            kind.name()
        )));
    }
    Ok(v)
}

fn parse_encoder(s: &str) -> Result<EncoderKind, ConfigError> {
    EncoderKind::parse(s).ok_or_else(|| ConfigError(format!("unknown encoder {s:?}")))
}

fn load_experiment(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn agent_config(exp: &ExperimentConfig) -> Result<AgentConfig, CliError> {
    let kind = parse_env(&exp.env)?;
    parse_variation(kind, &exp.variation)?;
    let encoder = parse_encoder(&exp.encoder)?;
    let mut cfg = AgentConfig::defaults(kind, encoder);
    let o = &exp.sac;
    if let Some(v) = o.lr {
        cfg.lr = v;
    }
    if let Some(v) = o.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = o.tau {
        cfg.tau = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.lookback {
        cfg.lookback = v;
    }
    if let Some(v) = &o.policy_hidden {
        cfg.policy_hidden = v.clone();
    }
    if let Some(v) = &o.q_hidden {
        cfg.q_hidden = v.clone();
    }
    if let Some(v) = o.policy_shortcut_dim {
        cfg.policy_shortcut_dim = v;
    }
    if let Some(v) = o.q_shortcut_dim {
        cfg.q_shortcut_dim = v;
    }
    if let Some(v) = o.warmup_steps {
        cfg.warmup_steps = v;
    }
    if let Some(v) = o.replay_capacity {
        cfg.replay_capacity = v;
    }
    if let Some(v) = o.entropy_target {
        cfg.entropy_target = v;
    }
    Ok(cfg)
}

fn train_config(exp: &ExperimentConfig, out: &Path) -> Result<TrainConfig, CliError> {
    let kind = parse_env(&exp.env)?;
    let variation = parse_variation(kind, &exp.variation)?;
    let mut tc = TrainConfig::new(variation, exp.total_steps, exp.seed);
    if let Some(v) = exp.eval.period {
        tc.eval_period = v;
    }
    if let Some(v) = exp.eval.episodes {
        tc.eval_episodes = v;
    }
    tc.checkpoint_path = Some(out.join("checkpoint.ckpt"));
    Ok(tc)
}

fn write_manifest(path: &Path, lines: &[(&str, String)]) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "gpide-run v1")?;
    for (k, v) in lines {
        writeln!(f, "{k} {v}")?;
    }
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some("gpide-run v1") {
        return Err(ConfigError(format!("{} is not a run manifest", path.display())).into());
    }
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| match l.split_once(' ') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (l.to_string(), String::new()),
        })
        .collect())
}

fn manifest_value(entries: &[(String, String)], key: &str, path: &Path) -> Result<String, CliError> {
    entries
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| ConfigError(format!("manifest {} lacks {key}", path.display())).into())
}

fn write_result_csv(path: &Path, metrics: &[(&str, f64)]) -> Result<(), CliError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "metric,value")?;
    for (k, v) in metrics {
        writeln!(f, "{k},{v}")?;
    }
    Ok(())
}

fn read_result_metric(path: &Path, key: &str) -> Result<f64, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    for line in text.lines().skip(1) {
        if let Some((k, v)) = line.split_once(',') {
            if k == key {
                return v
                    .parse()
                    .map_err(|e| ConfigError(format!("{}: bad {key}: {e}", path.display())).into());
            }
        }
    }
    Err(ConfigError(format!("{} lacks metric {key}", path.display())).into())
}

fn epoch_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn run_train(exp: &ExperimentConfig, out: &Path) -> Result<f64, CliError> {
    let cfg = agent_config(exp)?;
    let tc = train_config(exp, out)?;
    write_manifest(
        &out.join("manifest.txt"),
        &[
            ("command", "train".into()),
            ("version", env!("CARGO_PKG_VERSION").into()),
            ("started_at", epoch_seconds().to_string()),
            ("env", exp.env.clone()),
            ("variation", exp.variation.clone()),
            ("method", exp.encoder.clone()),
            ("seed", exp.seed.to_string()),
            ("total_steps", exp.total_steps.to_string()),
            ("config", "config.toml".into()),
            ("checkpoint", "checkpoint.ckpt".into()),
            ("metrics", "eval.csv".into()),
            ("result", "result.csv".into()),
        ],
    )?;
    std::fs::copy(&exp.source_path()?, out.join("config.toml"))?;
    let outcome = train(cfg, &tc)?;
    write_eval_csv(&out.join("eval.csv"), &outcome.evals)?;
    let final_return = outcome.final_return();
    let mut agent = outcome.agent;
    agent.store.save(&out.join("checkpoint.ckpt"))?;
    let kind = parse_env(&exp.env)?;
    let variation = parse_variation(kind, &exp.variation)?;
    let (test_return, test_se) = evaluate_agent(&mut agent, &test_suite(kind, variation));
    write_result_csv(
        &out.join("result.csv"),
        &[
            ("final_return", final_return),
            ("test_return", test_return),
            ("test_return_se", test_se),
        ],
    )?;
    Ok(test_return)
}

impl ExperimentConfig {
    /// Path of the file this config was parsed from, kept for copying
    /// into the run directory.
    fn source_path(&self) -> Result<PathBuf, CliError> {
        self.source
            .clone()
            .ok_or_else(|| CliError::Runtime("config source path missing".into()))
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut exp = load_experiment(&args.config)?;
    exp.source = Some(args.config.clone());
    let out = prepare_out_dir(&args.out, args.force)?;
    let test_return = run_train(&exp, &out)?;
    println!("test return {test_return}");
    Ok(())
}

fn cmd_tune_pid(args: TunePidArgs) -> Result<(), CliError> {
    let kind = parse_env(&args.env)?;
    let variation = parse_variation(kind, &args.variation)?;
    let out = prepare_out_dir(&args.out, args.force)?;
    write_manifest(
        &out.join("manifest.txt"),
        &[
            ("command", "tune-pid".into()),
            ("version", env!("CARGO_PKG_VERSION").into()),
            ("started_at", epoch_seconds().to_string()),
            ("env", args.env.clone()),
            ("variation", args.variation.clone()),
            ("method", "pid".into()),
            ("seed", args.seed.to_string()),
            ("budget", args.budget.to_string()),
        ],
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let result = tune_gains(kind, variation, args.budget, &mut rng);

    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("gains.csv"))?);
    writeln!(f, "channel,kp,ki,kd")?;
    for ch in 0..result.gains.channels() {
        writeln!(
            f,
            "{},{},{},{}",
            ch, result.gains.kp[ch], result.gains.ki[ch], result.gains.kd[ch]
        )?;
    }
    drop(f);
    let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("trace.csv"))?);
    writeln!(f, "iteration,best_return")?;
    for (i, r) in result.trace.iter().enumerate() {
        writeln!(f, "{i},{r}")?;
    }
    drop(f);

    let test_return = evaluate_gains(&test_suite(kind, variation), &result.gains);
    write_result_csv(
        &out.join("result.csv"),
        &[
            ("tuning_return", result.best_return),
            ("test_return", test_return),
        ],
    )?;
    println!("test return {test_return}");
    Ok(())
}

/// Rebuild a trained agent from a run directory and its checkpoint.
fn load_agent(run: &Path) -> Result<(Agent, EnvKind, Variation, String), CliError> {
    let mut exp = load_experiment(&run.join("config.toml"))?;
    exp.source = Some(run.join("config.toml"));
    let cfg = agent_config(&exp)?;
    let kind = parse_env(&exp.env)?;
    let variation = parse_variation(kind, &exp.variation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.seed);
    let mut agent = Agent::new(cfg, &mut rng);
    let ckpt = run.join("checkpoint.ckpt");
    agent.store = gpide_core::numcore::ParamStore::load(&ckpt)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", ckpt.display())))?;
    if agent.store.lookup("temp.log_alpha").is_none() {
        return Err(CliError::Runtime(format!(
            "{} does not match the configured agent",
            ckpt.display()
        )));
    }
    Ok((agent, kind, variation, exp.encoder))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let run = resolve_out(&args.run);
    let (mut agent, kind, variation, _) = load_agent(&run)?;
    let variation = match &args.test_variation {
        Some(s) => parse_variation(kind, s)?,
        None => variation,
    };
    let out = match &args.out {
        Some(p) => prepare_out_file(p, args.force)?,
        None => run.join("result.csv"),
    };
    let (test_return, test_se) = evaluate_agent(&mut agent, &test_suite(kind, variation));
    write_result_csv(
        &out,
        &[
            ("test_return", test_return),
            ("test_return_se", test_se),
            ("suite_seed", gpide_core::eval::TEST_SUITE_SEED as f64),
        ],
    )?;
    println!("test return {test_return}");
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let out = prepare_out_file(&args.out, args.force)?;
    let mut methods = Vec::new();
    let mut raw = Vec::new();
    let mut env = None;
    for run in &args.run {
        let run = resolve_out(run);
        let manifest_path = run.join("manifest.txt");
        let entries = read_manifest(&manifest_path)?;
        let run_env = (
            manifest_value(&entries, "env", &manifest_path)?,
            manifest_value(&entries, "variation", &manifest_path)?,
        );
        match &env {
            None => env = Some(run_env),
            Some(e) if *e == run_env => {}
            Some(e) => {
                return Err(ConfigError(format!(
                    "cannot compare {}/{} run {} against {}/{} runs",
                    run_env.0,
                    run_env.1,
                    run.display(),
                    e.0,
                    e.1
                ))
                .into())
            }
        }
        methods.push(manifest_value(&entries, "method", &manifest_path)?);
        raw.push(read_result_metric(&run.join("result.csv"), "test_return")?);
    }
    write_scores_csv(&out, &methods, &raw)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_export_attention(args: ExportAttentionArgs) -> Result<(), CliError> {
    let run = resolve_out(&args.run);
    let (mut agent, kind, variation, encoder) = load_agent(&run)?;
    let heads = match agent.actor_gpide() {
        Some(enc) => enc.attention_head_indices(),
        None => {
            return Err(ConfigError(format!(
                "encoder {encoder:?} has no attention heads"
            ))
            .into());
        }
    };
    if !heads.contains(&args.head) {
        return Err(ConfigError(format!(
            "head {} is not an attention head; attention heads are {heads:?}",
            args.head
        ))
        .into());
    }
    let out = prepare_out_file(&args.out, args.force)?;
    let settings: Vec<_> = test_suite(kind, variation)
        .into_iter()
        .take(args.episodes)
        .collect();
    let heatmap = attention_heatmap(&mut agent, &settings, args.head)?;
    write_attention_csv(&out, &heatmap)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<(), CliError> {
    let mut exp = load_experiment(&args.config)?;
    exp.source = Some(args.config.clone());
    let out = prepare_out_dir(&args.out, args.force)?;
    let mut methods = Vec::new();
    let mut raw = Vec::new();
    for encoder in ["gpide", "gpide-es", "gpide-ess", "gpide-attn"] {
        let mut sub = exp.clone();
        sub.encoder = encoder.to_string();
        let sub_out = out.join(encoder);
        std::fs::create_dir_all(&sub_out)?;
        let test_return = run_train(&sub, &sub_out)?;
        println!("{encoder}: test return {test_return}");
        methods.push(encoder.to_string());
        raw.push(test_return);
    }
    write_scores_csv(&out.join("ablation.csv"), &methods, &raw)?;
    Ok(())
}
