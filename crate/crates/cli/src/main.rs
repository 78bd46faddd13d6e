//! `jstn`: command-line driver for training, evaluation, ablation grids,
//! sweeps, gradient audits and synthetic data generation.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error,
//! 3 numerical failure. Failures print one `error: kind=... exit=...` line
//! on stderr.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use jstn::audit::{run_audit, LOSS_NAMES, TOLERANCE};
use jstn::autodiff::AdjointFault;
use jstn::data::synth::{default_class_names, synth_domains, synth_training_data, write_bundle, SynthSpec};
use jstn::harness::{run_ablation, run_sweep, Variant};
use jstn::{evaluate_target, train, JstnError, JstnModel, Manifest, MetricsReport, Result, TrainConfig, TrainingData};

#[derive(Parser, Debug)]
#[command(name = "jstn", version, about = "Multi-source heterogeneous domain adaptation for intrusion detection")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic domain triple and its manifest.
    Synth(SynthArgs),
    /// Train on a manifest or synthetic preset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the unlabelled target rows.
    Eval(EvalArgs),
    /// Run the component ablation grid over several seeds.
    Ablate(AblateArgs),
    /// Sweep one hyperparameter over several values and seeds.
    Sweep(SweepArgs),
    /// Check every loss gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML training configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted `key=value` override applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Run seed; overrides `seed` from the file and `--set`.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct DataArgs {
    /// Dataset manifest describing the source and target CSVs.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Built-in synthetic preset generated from the run seed.
    #[arg(long)]
    preset: Option<String>,
}

impl DataArgs {
    fn load(&self, cfg: &TrainConfig) -> Result<TrainingData> {
        match (&self.manifest, &self.preset) {
            (Some(m), _) => Manifest::load(m)?.load_training_data(&cfg.split_spec()),
            (_, Some(p)) => synth_training_data(&SynthSpec::preset(p, cfg.seed)?, &cfg.split_spec()),
            _ => unreachable!("clap enforces one data source"),
        }
    }

    fn load_for_seed(&self, cfg: &TrainConfig, seed: u64) -> Result<TrainingData> {
        self.load(&TrainConfig { seed, ..cfg.clone() })
    }
}

#[derive(Args, Debug)]
struct OutArgs {
    /// Output directory; defaults to `$JSTN_OUT_ROOT/<command>` or `runs/<command>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArgs {
    fn dir(&self, command: &str) -> Result<PathBuf> {
        let dir = match &self.out {
            Some(d) => d.clone(),
            None => std::env::var_os("JSTN_OUT_ROOT").map_or_else(|| PathBuf::from("runs"), PathBuf::from).join(command),
        };
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(dir)
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// One of `separable`, `hard`, `toy`.
    #[arg(long, default_value = "separable")]
    preset: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Config used for training; it fixes the target split.
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint file written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated variant names, or `all`.
    #[arg(long, default_value = "all")]
    variants: String,
    /// Number of seeds, counted up from the run seed.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// One of alpha, beta, lambda, eta, gamma, t1, t2, r.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Number of seeds, counted up from the run seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Fault {
    LeakyRelu,
    SoftmaxTemperature,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// First seed of the audited range.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, hide = true)]
    inject_fault: Option<Fault>,
}

fn io_err(path: &Path, e: std::io::Error) -> JstnError {
    JstnError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn write_report(dir: &Path, metrics: &MetricsReport, hash: &str, data: &TrainingData) -> Result<()> {
    let summary = serde_json::json!({ "config_hash": hash, "metrics": metrics });
    write_json(&dir.join("final.json"), &summary)?;
    write_file(&dir.join("confusion.csv"), &metrics.confusion.to_csv(&data.class_names))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec::preset(&a.preset, a.seed)?;
    let dir = a.out.dir("synth")?;
    let (sn, si, t) = synth_domains(&spec)?;
    let manifest = write_bundle(&dir, (&sn, &si, &t), &default_class_names(spec.k))?;
    println!("wrote {} ({} / {} / {} rows)", manifest.display(), sn.len(), si.len(), t.len());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let data = a.data.load(&cfg)?;
    let dir = a.out.dir("train")?;
    let ckpt = dir.join("ckpt");
    fs::create_dir_all(&ckpt).map_err(|e| io_err(&ckpt, e))?;
    write_file(&dir.join("config.echo"), &cfg.echo())?;
    let hash = cfg.hash();
    println!(
        "training: SN {} / SI {} / TL {} / TU {} rows, K={}, {} epochs, seed {}",
        data.sn.len(),
        data.si.len(),
        data.tl.len(),
        data.tu.len(),
        data.k,
        cfg.epochs,
        cfg.seed
    );

    let mut metrics = create(&dir.join("metrics.jsonl"))?;
    let mut timing = create(&dir.join("timing.jsonl"))?;
    let metrics_path = dir.join("metrics.jsonl");
    let outcome = train(&data, &cfg, &mut |r, model| {
        writeln!(metrics, "{}", serde_json::to_string(r)?).map_err(|e| io_err(&metrics_path, e))?;
        writeln!(timing, "{}", serde_json::json!({ "epoch": r.epoch, "seconds": r.seconds }))
            .map_err(|e| io_err(&metrics_path, e))?;
        if cfg.checkpoint_every > 0 && r.epoch % cfg.checkpoint_every == 0 {
            metrics.flush().map_err(|e| io_err(&metrics_path, e))?;
            model.save_checkpoint(&ckpt.join(format!("epoch_{:05}.json", r.epoch)), &hash)?;
        }
        if r.epoch % 100 == 0 || r.epoch == cfg.epochs {
            println!("epoch {:>5}  total {:.5}  accepted {}/{}", r.epoch, r.losses.total, r.accepted_count, data.tu.len());
        }
        Ok(())
    });
    metrics.flush().map_err(|e| io_err(&metrics_path, e))?;
    timing.flush().map_err(|e| io_err(&metrics_path, e))?;
    let outcome = outcome?;
    outcome.model.save_checkpoint(&ckpt.join("final.json"), &hash)?;
    let report = evaluate_target(&outcome.model, &data.tu)?;
    write_report(&dir, &report, &hash, &data)?;
    println!("TU accuracy {:.4}  weighted F1 {:.4}  -> {}", report.accuracy, report.f1, dir.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let data = a.data.load(&cfg)?;
    let (model, hash) = JstnModel::load_checkpoint(&a.checkpoint)?;
    if hash != cfg.hash() {
        log::warn!("checkpoint was written under config {hash}, evaluating with {}", cfg.hash());
    }
    let dir = a.out.dir("eval")?;
    let report = evaluate_target(&model, &data.tu)?;
    write_report(&dir, &report, &hash, &data)?;
    println!("TU accuracy {:.4}  weighted F1 {:.4}", report.accuracy, report.f1);
    Ok(())
}

fn seed_range(cfg: &TrainConfig, n: u64) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(JstnError::Usage("--seeds must be at least 1".into()));
    }
    Ok((cfg.seed..cfg.seed + n).collect())
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let variants = Variant::parse_list(&a.variants)?;
    let seeds = seed_range(&cfg, a.seeds)?;
    let dir = a.out.dir("ablate")?;
    write_file(&dir.join("config.echo"), &cfg.echo())?;
    let table = run_ablation(&cfg, &variants, &seeds, &|s| a.data.load_for_seed(&cfg, s))?;
    write_json(&dir.join("ablation.json"), &table)?;
    let mut runs = String::from("variant,seed,accuracy,precision,recall,f1\n");
    for r in &table.runs {
        let m = &r.metrics;
        runs += &format!("{},{},{},{},{},{}\n", r.label, r.seed, m.accuracy, m.precision, m.recall, m.f1);
    }
    write_file(&dir.join("runs.csv"), &runs)?;
    let mut summary = String::from("variant,runs,mean_accuracy,std_accuracy,mean_f1,t,p\n");
    println!("{:<14} {:>9} {:>8} {:>9} {:>10}", "variant", "mean acc", "std", "t", "p");
    for s in &table.summary {
        let (t, p) = s.vs_full.map_or((String::new(), String::new()), |t| (t.t.to_string(), t.p.to_string()));
        summary += &format!("{},{},{},{},{},{},{}\n", s.variant, s.runs, s.mean_accuracy, s.std_accuracy, s.mean_f1, t, p);
        let (ts, ps) = s.vs_full.map_or(("-".into(), "-".into()), |t| (format!("{:.3}", t.t), format!("{:.2e}", t.p)));
        println!("{:<14} {:>9.4} {:>8.4} {:>9} {:>10}", s.variant, s.mean_accuracy, s.std_accuracy, ts, ps);
    }
    write_file(&dir.join("summary.csv"), &summary)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let seeds = seed_range(&cfg, a.seeds)?;
    let dir = a.out.dir("sweep")?;
    write_file(&dir.join("config.echo"), &cfg.echo())?;
    let rows = run_sweep(&cfg, &a.param, &a.values, &seeds, &|s| a.data.load_for_seed(&cfg, s))?;
    let mut csv = String::from("param,value,seed,accuracy,f1\n");
    for r in &rows {
        csv += &format!("{},{},{},{},{}\n", r.param, r.value, r.seed, r.accuracy, r.f1);
        println!("{}={:<8} seed {:<4} accuracy {:.4}", r.param, r.value, r.seed, r.accuracy);
    }
    write_file(&dir.join("sweep.csv"), &csv)?;
    write_json(&dir.join("sweep.json"), &rows)
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let fault = a.inject_fault.map(|f| match f {
        Fault::LeakyRelu => AdjointFault::LeakyReluSlope,
        Fault::SoftmaxTemperature => AdjointFault::SoftmaxTemperature,
    });
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds.max(1)).collect();
    let start = std::time::Instant::now();
    let report = run_audit(&seeds, fault)?;
    debug_assert_eq!(report.checks.len(), LOSS_NAMES.len());
    for c in &report.checks {
        let verdict = if c.passed { "ok" } else { "FAIL" };
        println!("{:<8} max rel error {:.3e} (seed {})  {verdict}", c.name, c.max_rel_error, c.worst_seed);
    }
    info!("gradcheck took {:.2}s", start.elapsed().as_secs_f64());
    match report.first_failure() {
        None => {
            println!("all {} terms within {TOLERANCE:e} on {} seeds", report.checks.len(), seeds.len());
            Ok(())
        }
        Some(c) => Err(JstnError::Domain(format!(
            "gradient check failed for {}: relative error {:.3e} > {TOLERANCE:e}",
            c.name, c.max_rel_error
        ))),
    }
}

fn kind(e: &JstnError) -> &'static str {
    match e.exit_code() {
        1 => "config",
        2 => "data",
        _ => "numerical",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            let msg = e.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error: kind={} exit={code} {msg}", kind(&e));
            ExitCode::from(code as u8)
        }
    }
}
