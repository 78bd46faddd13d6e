//! Repeated-seed experiment grids: component ablations and single-parameter
//! sweeps. Runs are independent and execute on the rayon pool; results come
//! back in grid order regardless of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SourceSelection, TrainConfig};
use crate::data::TrainingData;
use crate::error::{JstnError, Result};
use crate::metrics::{paired_t_test, MetricsReport, TTest};
use crate::trainer::{evaluate_target, train, EpochReport};

/// The full model and its ten component ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Alpha0,
    NoWi,
    Beta0,
    Lambda0,
    BetaLambda0,
    NoPlr,
    Eta0,
    Gamma0,
    SnOnly,
    SiOnly,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Full,
        Variant::Alpha0,
        Variant::NoWi,
        Variant::Beta0,
        Variant::Lambda0,
        Variant::BetaLambda0,
        Variant::NoPlr,
        Variant::Eta0,
        Variant::Gamma0,
        Variant::SnOnly,
        Variant::SiOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Alpha0 => "alpha0",
            Variant::NoWi => "no_wi",
            Variant::Beta0 => "beta0",
            Variant::Lambda0 => "lambda0",
            Variant::BetaLambda0 => "beta_lambda0",
            Variant::NoPlr => "no_plr",
            Variant::Eta0 => "eta0",
            Variant::Gamma0 => "gamma0",
            Variant::SnOnly => "sn_only",
            Variant::SiOnly => "si_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|v| v.name()).collect();
            JstnError::Usage(format!("unknown variant `{s}` (expected one of {})", names.join(", ")))
        })
    }

    /// Comma-separated list, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',').map(|v| Self::parse(v.trim())).collect()
    }

    /// `base` with this variant's switch applied.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::Alpha0 => c.alpha = 0.0,
            Variant::NoWi => c.ablation.no_weighting = true,
            Variant::Beta0 => c.beta = 0.0,
            Variant::Lambda0 => c.lambda = 0.0,
            Variant::BetaLambda0 => {
                c.beta = 0.0;
                c.lambda = 0.0;
            }
            Variant::NoPlr => c.ablation.no_plr = true,
            Variant::Eta0 => c.eta = 0.0,
            Variant::Gamma0 => c.gamma = 0.0,
            Variant::SnOnly => c.ablation.sources = SourceSelection::SnOnly,
            Variant::SiOnly => c.ablation.sources = SourceSelection::SiOnly,
        }
        c
    }
}

/// One finished training run.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub metrics: MetricsReport,
    #[serde(skip)]
    pub reports: Vec<EpochReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_f1: f64,
    /// Full minus this variant, paired by seed.
    pub vs_full: Option<TTest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<VariantSummary>,
}

/// Training data for one seed (the seed also drives the target split).
pub type DataSource<'a> = dyn Fn(u64) -> Result<TrainingData> + Sync + 'a;

fn run_grid(jobs: Vec<(String, TrainConfig)>, seeds: &[u64], data: &DataSource) -> Result<Vec<RunRecord>> {
    let sets: Vec<TrainingData> = seeds.iter().map(|&s| data(s)).collect::<Result<_>>()?;
    let grid: Vec<(usize, usize)> = (0..jobs.len()).flat_map(|j| (0..seeds.len()).map(move |s| (j, s))).collect();
    grid.into_par_iter()
        .map(|(j, s)| {
            let (label, base) = &jobs[j];
            let cfg = TrainConfig { seed: seeds[s], ..base.clone() };
            let out = train(&sets[s], &cfg, &mut |_, _| Ok(()))?;
            let metrics = evaluate_target(&out.model, &sets[s].tu)?;
            log::info!("{label} seed {}: accuracy {:.4}", seeds[s], metrics.accuracy);
            Ok(RunRecord { label: label.clone(), seed: seeds[s], metrics, reports: out.reports })
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Trains every variant on every seed and tests full against each variant.
pub fn run_ablation(base: &TrainConfig, variants: &[Variant], seeds: &[u64], data: &DataSource) -> Result<AblationTable> {
    if seeds.is_empty() || variants.is_empty() {
        return Err(JstnError::Usage("ablation needs at least one variant and one seed".into()));
    }
    let jobs = variants.iter().map(|v| (v.name().to_string(), v.apply(base))).collect();
    let runs = run_grid(jobs, seeds, data)?;
    let acc_of = |name: &str| -> Vec<f64> {
        runs.iter().filter(|r| r.label == name).map(|r| r.metrics.accuracy).collect()
    };
    let full = variants.contains(&Variant::Full).then(|| acc_of("full"));
    let mut summary = Vec::new();
    for v in variants {
        let acc = acc_of(v.name());
        let f1: Vec<f64> = runs.iter().filter(|r| r.label == v.name()).map(|r| r.metrics.f1).collect();
        let (m, s) = mean_std(&acc);
        let vs_full = match &full {
            Some(f) if *v != Variant::Full && seeds.len() >= 2 => Some(paired_t_test(f, &acc)?),
            _ => None,
        };
        summary.push(VariantSummary {
            variant: v.name().to_string(),
            runs: acc.len(),
            mean_accuracy: m,
            std_accuracy: s,
            mean_f1: mean_std(&f1).0,
            vs_full,
        });
    }
    Ok(AblationTable { runs, summary })
}

/// Hyperparameters accepted by [`run_sweep`].
pub const SWEEPABLE: [&str; 8] = ["alpha", "beta", "lambda", "eta", "gamma", "t1", "t2", "r"];

pub fn set_param(cfg: &mut TrainConfig, name: &str, value: f64) -> Result<()> {
    match name {
        "alpha" => cfg.alpha = value,
        "beta" => cfg.beta = value,
        "lambda" => cfg.lambda = value,
        "eta" => cfg.eta = value,
        "gamma" => cfg.gamma = value,
        "t1" => cfg.t1 = value,
        "t2" => cfg.t2 = value,
        "r" => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(JstnError::Usage(format!("r must be a positive integer, got {value}")));
            }
            cfg.r = value as usize;
        }
        other => {
            return Err(JstnError::Usage(format!(
                "unknown sweep parameter `{other}` (expected one of {})",
                SWEEPABLE.join(", ")
            )))
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub f1: f64,
}

/// One run per (value, seed), rows ordered by value then seed.
pub fn run_sweep(base: &TrainConfig, param: &str, values: &[f64], seeds: &[u64], data: &DataSource) -> Result<Vec<SweepRow>> {
    let jobs = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            set_param(&mut c, param, v)?;
            c.validate()?;
            Ok((format!("{param}={v}"), c))
        })
        .collect::<Result<Vec<_>>>()?;
    let runs = run_grid(jobs, seeds, data)?;
    Ok(runs
        .iter()
        .enumerate()
        .map(|(i, r)| SweepRow {
            param: param.to_string(),
            value: values[i / seeds.len()],
            seed: r.seed,
            accuracy: r.metrics.accuracy,
            f1: r.metrics.f1,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_training_data, SynthSpec};

    fn toy(seed: u64) -> Result<TrainingData> {
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        synth_training_data(&SynthSpec::preset("toy", seed)?, &cfg.split_spec())
    }

    fn quick() -> TrainConfig {
        TrainConfig { epochs: 3, hidden: 8, ..TrainConfig::default() }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert_eq!(Variant::parse_list("all").unwrap().len(), 11);
        assert_eq!(Variant::parse_list("full, si_only").unwrap(), [Variant::Full, Variant::SiOnly]);
        assert!(matches!(Variant::parse("nope"), Err(JstnError::Usage(_))));
    }

    #[test]
    fn variants_flip_exactly_one_switch() {
        let base = TrainConfig::default();
        let c = Variant::BetaLambda0.apply(&base);
        assert_eq!((c.beta, c.lambda, c.alpha), (0.0, 0.0, base.alpha));
        assert!(Variant::NoPlr.apply(&base).ablation.no_plr);
        assert!(Variant::NoWi.apply(&base).ablation.no_weighting);
        assert_eq!(Variant::SiOnly.apply(&base).ablation.sources, SourceSelection::SiOnly);
        assert_eq!(Variant::Full.apply(&base), base);
    }

    #[test]
    fn ablation_table_is_ordered_and_tested_against_full() {
        let t = run_ablation(&quick(), &[Variant::Full, Variant::Gamma0], &[0, 1], &toy).unwrap();
        let labels: Vec<_> = t.runs.iter().map(|r| (r.label.as_str(), r.seed)).collect();
        assert_eq!(labels, [("full", 0), ("full", 1), ("gamma0", 0), ("gamma0", 1)]);
        assert!(t.summary[0].vs_full.is_none());
        assert!(t.summary[1].vs_full.is_some());
        assert_eq!(t.runs[0].reports.len(), 3);
    }

    #[test]
    fn sweep_rows_cover_values_times_seeds() {
        let rows = run_sweep(&quick(), "alpha", &[0.0, 0.1, 0.2], &[3, 4], &toy).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), [0.0, 0.0, 0.1, 0.1, 0.2, 0.2]);
        assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), [3, 4, 3, 4, 3, 4]);
    }

    #[test]
    fn single_value_sweep_equals_one_training_run() {
        let rows = run_sweep(&quick(), "beta", &[0.004], &[2], &toy).unwrap();
        let cfg = TrainConfig { seed: 2, beta: 0.004, ..quick() };
        let data = toy(2).unwrap();
        let m = train(&data, &cfg, &mut |_, _| Ok(())).unwrap().model;
        assert_eq!(rows[0].accuracy, evaluate_target(&m, &data.tu).unwrap().accuracy);
    }

    #[test]
    fn unknown_sweep_parameter_is_a_usage_error() {
        let e = run_sweep(&quick(), "epochs", &[1.0], &[0], &toy).unwrap_err();
        assert!(matches!(e, JstnError::Usage(_)));
        assert_eq!(e.exit_code(), 1);
        let mut c = quick();
        assert!(set_param(&mut c, "r", 2.5).is_err());
        set_param(&mut c, "r", 2.0).unwrap();
        assert_eq!(c.r, 2);
    }
}
