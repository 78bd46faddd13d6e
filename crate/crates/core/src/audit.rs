//! Finite-difference audit of every loss term on tiny random problems.
//!
//! For each seed a small model and dataset are drawn, the detached plan is
//! computed once and frozen, and each term's backpropagated parameter
//! gradient is compared with central differences of the same term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::autodiff::gradcheck::{numerical_gradient, relative_error, FD_STEP};
use crate::autodiff::{AdjointFault, Graph, Matrix};
use crate::config::TrainConfig;
use crate::error::Result;
use crate::model::{Architecture, InitSpec, JstnModel};
use crate::trainer::{assemble, forward, make_plan, Batch, EpochPlan};

/// Every audited term, in report order.
pub const LOSS_NAMES: [&str; 10] =
    ["l_sup", "l_hd", "l_sf_sn", "l_sf_si", "l_wis", "l_esc", "l_esr", "l_ssd", "l_ssc", "total"];

/// Maximum admissible relative error.
pub const TOLERANCE: f64 = 1e-4;

const K: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct LossCheck {
    pub name: String,
    /// Worst relative error over all seeds.
    pub max_rel_error: f64,
    pub worst_seed: u64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub seeds: Vec<u64>,
    pub checks: Vec<LossCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&LossCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Weights with every term switched on.
pub fn audit_config() -> TrainConfig {
    TrainConfig {
        alpha: 0.3,
        beta: 0.5,
        lambda: 0.2,
        gamma: 0.4,
        eta: 0.7,
        hidden: 6,
        d_c: 3,
        r: 2,
        ..TrainConfig::default()
    }
}

fn blob(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let centers = Matrix::from_shape_fn((K, dim), |_| 2.0 * rng.sample::<f64, _>(StandardNormal));
    let labels: Vec<usize> = (0..rows).map(|i| i % K).collect();
    let x = Matrix::from_shape_fn((rows, dim), |(i, j)| centers[[labels[i], j]] + rng.sample::<f64, _>(StandardNormal));
    (x, labels)
}

/// Tiny heterogeneous problem: widths 4/3/5, `K = 3`.
pub fn tiny_problem(seed: u64, cfg: &TrainConfig) -> Result<(JstnModel, Batch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sn = blob(12, 4, &mut rng);
    let si = blob(9, 3, &mut rng);
    let tl = blob(6, 5, &mut rng);
    let (tu, _) = blob(12, 5, &mut rng);
    let arch = Architecture { d_sn: 4, d_si: 3, d_t: 5, hidden: cfg.hidden, d_c: cfg.d_c, k: K, slope: cfg.slope };
    let model = JstnModel::init(arch, InitSpec::seeded(seed))?;
    Ok((model, Batch { sn: Some(sn), si: Some(si), tl, tu, tu_truth: None }))
}

fn frozen_plan(model: &JstnModel, batch: &Batch, cfg: &TrainConfig, seed: u64) -> Result<EpochPlan> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let fwd = forward(&mut g, model, &bound, batch)?;
    make_plan(&g, &fwd, batch, cfg, K, 1, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn term_value(model: &JstnModel, batch: &Batch, plan: &EpochPlan, cfg: &TrainConfig, name: &str) -> Result<f64> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let fwd = forward(&mut g, model, &bound, batch)?;
    let obj = assemble(&mut g, model, &bound, &fwd, batch, plan, cfg, false)?;
    Ok(g.scalar(obj.term(name).expect("audited term is assembled")))
}

fn analytic(
    model: &JstnModel,
    batch: &Batch,
    plan: &EpochPlan,
    cfg: &TrainConfig,
    name: &str,
    fault: Option<AdjointFault>,
) -> Result<Vec<Matrix>> {
    let mut m = model.clone();
    let mut g = Graph::new();
    if let Some(f) = fault {
        g.inject_fault(f);
    }
    let bound = m.bind(&mut g);
    let fwd = forward(&mut g, &m, &bound, batch)?;
    let obj = assemble(&mut g, &m, &bound, &fwd, batch, plan, cfg, false)?;
    g.backward(obj.term(name).expect("audited term is assembled"))?;
    m.params_mut().into_iter().for_each(|p| p.zero_grad());
    m.accumulate_grads(&g, &bound);
    Ok(m.params().iter().map(|p| p.grad.clone()).collect())
}

/// Relative error of one term's gradient for one seed.
pub fn check_term(seed: u64, name: &str, fault: Option<AdjointFault>) -> Result<f64> {
    let cfg = audit_config();
    let (model, batch) = tiny_problem(seed, &cfg)?;
    let plan = frozen_plan(&model, &batch, &cfg, seed)?;
    let a = analytic(&model, &batch, &plan, &cfg, name, fault)?;
    let values: Vec<Matrix> = model.params().iter().map(|p| p.value.clone()).collect();
    let mut err = None;
    let n = numerical_gradient(
        |vals| {
            let mut m = model.clone();
            for (p, v) in m.params_mut().into_iter().zip(vals) {
                p.value.assign(v);
            }
            term_value(&m, &batch, &plan, &cfg, name).unwrap_or_else(|e| {
                err.get_or_insert(e);
                f64::NAN
            })
        },
        &values,
        FD_STEP,
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(relative_error(&a, &n))
}

/// Audits every term on every seed.
pub fn run_audit(seeds: &[u64], fault: Option<AdjointFault>) -> Result<AuditReport> {
    let mut checks = Vec::new();
    for name in LOSS_NAMES {
        let mut worst = (0.0_f64, seeds.first().copied().unwrap_or(0));
        for &s in seeds {
            let e = check_term(s, name, fault)?;
            if !(e <= worst.0) {
                worst = (e, s);
            }
        }
        checks.push(LossCheck {
            name: name.to_string(),
            max_rel_error: worst.0,
            worst_seed: worst.1,
            passed: worst.0 <= TOLERANCE,
        });
    }
    Ok(AuditReport { seeds: seeds.to_vec(), checks })
}
