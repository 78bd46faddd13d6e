//! The training loop. Each step encodes every domain, derives the detached
//! quantities of the step (teachers, source weights, pseudo-labels,
//! representatives) from current values, assembles the objective on top of
//! the live graph, backpropagates once and takes an Adam step.
//!
//! The discriminator term enters the backward root through a gradient
//! reversal of strength `γ`: the discriminator descends its cross-entropy
//! while the encoders ascend `γ` times it.

use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{argmax_rows, AdamState, Graph, Matrix, NodeId};
use crate::clustering::{select_representatives, RepSet, Side};
use crate::config::TrainConfig;
use crate::data::{DomainDataset, TrainingData};
use crate::error::{JstnError, Result};
use crate::losses::{self, averaging_matrix, LossBreakdown, TeacherTable};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{Architecture, BoundModel, Branch, InitSpec, JstnModel};
use crate::plr::{labeled_centroids, refine, Refinement};

/// Stream offset separating the clustering RNG from the init and split seeds.
const CLUSTER_STREAM: u64 = 0x5EED_C1A5;
const SHUFFLE_STREAM: u64 = 0x5EED_BA7C;

/// One line of the metrics stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
    pub accepted_count: usize,
    pub acceptance_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_label_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tu_accuracy: Option<f64>,
    /// Wall-clock seconds of the epoch. Kept out of the serialized line so
    /// that identical runs produce identical streams.
    #[serde(skip)]
    pub seconds: f64,
}

/// Equality ignores the wall-clock field.
impl PartialEq for EpochReport {
    fn eq(&self, o: &Self) -> bool {
        self.epoch == o.epoch
            && self.losses == o.losses
            && self.accepted_count == o.accepted_count
            && self.acceptance_rate == o.acceptance_rate
            && self.pseudo_label_precision == o.pseudo_label_precision
            && self.tu_accuracy == o.tu_accuracy
    }
}

pub struct TrainOutcome {
    pub model: JstnModel,
    pub reports: Vec<EpochReport>,
}

/// Rows of one optimisation step.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sn: Option<(Matrix, Vec<usize>)>,
    pub si: Option<(Matrix, Vec<usize>)>,
    pub tl: (Matrix, Vec<usize>),
    pub tu: Matrix,
    /// Held-out truth of `tu`, read only for monitoring.
    pub tu_truth: Option<Vec<usize>>,
}

impl Batch {
    /// Every row of the selected domains.
    pub fn full(data: &TrainingData, cfg: &TrainConfig) -> Result<Self> {
        let all: Vec<usize> = Vec::new();
        Self::rows(data, cfg, [&all, &all, &all, &all], true)
    }

    /// Rows `idx` of (SN, SI, TL, TU); `whole` ignores `idx`.
    fn rows(data: &TrainingData, cfg: &TrainConfig, idx: [&Vec<usize>; 4], whole: bool) -> Result<Self> {
        let pick = |d: &DomainDataset, rows: &Vec<usize>| -> (Matrix, Option<Vec<usize>>) {
            if whole {
                return (d.x.clone(), d.truth().map(<[usize]>::to_vec));
            }
            let x = d.x.select(ndarray::Axis(0), rows);
            let y = d.truth().map(|t| rows.iter().map(|&i| t[i]).collect());
            (x, y)
        };
        let labelled = |d: &DomainDataset, rows| -> Result<(Matrix, Vec<usize>)> {
            d.labels_or_err()?;
            let (x, y) = pick(d, rows);
            Ok((x, y.expect("labels checked")))
        };
        let src = cfg.ablation.sources;
        let sn = if src.uses_sn() { Some(labelled(&data.sn, idx[0])?) } else { None };
        let si = if src.uses_si() { Some(labelled(&data.si, idx[1])?) } else { None };
        let tl = labelled(&data.tl, idx[2])?;
        let (tu, truth) = pick(&data.tu, idx[3]);
        Ok(Batch { sn, si, tl, tu, tu_truth: if cfg.monitor_target { truth } else { None } })
    }
}

/// Live graph handles for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub f_sn: Option<NodeId>,
    pub f_si: Option<NodeId>,
    pub f_tl: NodeId,
    pub f_tu: NodeId,
    pub c_sn: Option<NodeId>,
    pub c_si: Option<NodeId>,
    pub c_tl: NodeId,
    pub c_tu: NodeId,
}

pub fn forward(g: &mut Graph, model: &JstnModel, bound: &BoundModel, batch: &Batch) -> Result<Forward> {
    let enc = |g: &mut Graph, x: &Matrix, b: Branch| -> Result<(NodeId, NodeId)> {
        let xi = g.constant(x.clone());
        let f = model.encode(g, bound, xi, b)?;
        let c = model.classify(g, bound, f)?;
        Ok((f, c))
    };
    let sn = batch.sn.as_ref().map(|(x, _)| enc(g, x, Branch::SourceNetwork)).transpose()?;
    let si = batch.si.as_ref().map(|(x, _)| enc(g, x, Branch::SourceIot)).transpose()?;
    let (f_tl, c_tl) = enc(g, &batch.tl.0, Branch::Target)?;
    let (f_tu, c_tu) = enc(g, &batch.tu, Branch::Target)?;
    Ok(Forward {
        f_sn: sn.map(|p| p.0),
        f_si: si.map(|p| p.0),
        f_tl,
        f_tu,
        c_sn: sn.map(|p| p.1),
        c_si: si.map(|p| p.1),
        c_tl,
        c_tu,
    })
}

/// Quantities held constant within a step.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    /// Network-source teacher at `T1` for source distribution matching.
    pub teacher_ssc: Option<TeacherTable>,
    /// Source teachers at `T2` for distillation into the labelled target.
    pub teacher_sn: Option<TeacherTable>,
    pub teacher_si: Option<TeacherTable>,
    pub omega_sn: Option<f64>,
    pub omega_si: Option<f64>,
    pub refinement: Refinement,
    pub source_reps: Vec<Option<RepSet>>,
    pub target_reps: Vec<Option<RepSet>>,
}

fn stack(parts: &[&Matrix]) -> Matrix {
    let views: Vec<_> = parts.iter().map(|m| m.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")
}

fn source_labels(batch: &Batch) -> Vec<usize> {
    let mut y = Vec::new();
    for (_, l) in batch.sn.iter().chain(batch.si.iter()) {
        y.extend_from_slice(l);
    }
    y
}

fn target_labels(batch: &Batch, plan: &EpochPlan) -> Vec<usize> {
    let mut y = batch.tl.1.clone();
    y.extend_from_slice(&plan.refinement.labels);
    y
}

pub fn make_plan<R: rand::Rng + ?Sized>(
    g: &Graph,
    fwd: &Forward,
    batch: &Batch,
    cfg: &TrainConfig,
    k: usize,
    epoch: usize,
    rng: &mut R,
) -> Result<EpochPlan> {
    let literal = cfg.literal_normalization;
    let (x_tl, y_tl) = (g.value(fwd.f_tl), batch.tl.1.as_slice());
    let sn = fwd.f_sn.zip(fwd.c_sn).zip(batch.sn.as_ref()).map(|((f, c), (_, y))| (g.value(f), g.value(c), y.as_slice()));
    let si = fwd.f_si.zip(fwd.c_si).zip(batch.si.as_ref()).map(|((f, c), (_, y))| (g.value(f), g.value(c), y.as_slice()));

    let teacher_ssc = match (sn, si) {
        (Some((_, c, y)), Some(_)) => Some(losses::soft_label_table(c, y, cfg.t1)?),
        _ => None,
    };
    let teacher = |s: Option<(&Matrix, &Matrix, &[usize])>| {
        s.map(|(_, c, y)| losses::soft_label_table(c, y, cfg.t2)).transpose()
    };
    let omega = |s: Option<(&Matrix, &Matrix, &[usize])>| -> Result<Option<f64>> {
        s.map(|(f, _, y)| {
            if cfg.ablation.no_weighting {
                Ok(1.0)
            } else {
                let d = losses::source_target_divergence(f, y, x_tl, y_tl, k, literal)?;
                if !d.is_finite() {
                    return Err(JstnError::NonFinite { term: "omega".into(), epoch });
                }
                Ok(losses::source_weight(d))
            }
        })
        .transpose()
    };

    let mut sets: Vec<(&Matrix, &[usize])> = Vec::new();
    sets.extend(sn.map(|(f, _, y)| (f, y)));
    sets.extend(si.map(|(f, _, y)| (f, y)));
    sets.push((x_tl, y_tl));
    let centroids = labeled_centroids(&sets, k, literal);
    let refinement = refine(g.value(fwd.c_tu), g.value(fwd.f_tu), &centroids, !cfg.ablation.no_plr, epoch);

    let src_parts: Vec<&Matrix> = [sn, si].iter().flatten().map(|s| s.0).collect();
    let f_src = stack(&src_parts);
    let y_src = source_labels(batch);
    let f_tu_acc = g.value(fwd.f_tu).select(ndarray::Axis(0), &refinement.accepted);
    let f_tgt = stack(&[x_tl, &f_tu_acc]);
    let mut y_tgt = y_tl.to_vec();
    y_tgt.extend_from_slice(&refinement.labels);
    let source_reps = select_representatives(&f_src, &y_src, k, cfg.r, Side::Source, rng)?;
    let target_reps = select_representatives(&f_tgt, &y_tgt, k, cfg.r, Side::Target, rng)?;

    Ok(EpochPlan {
        teacher_ssc,
        teacher_sn: teacher(sn)?,
        teacher_si: teacher(si)?,
        omega_sn: omega(sn)?,
        omega_si: omega(si)?,
        refinement,
        source_reps,
        target_reps,
    })
}

/// Named loss nodes of one assembled objective.
#[derive(Debug, Clone)]
pub struct Objective {
    pub terms: Vec<(&'static str, NodeId)>,
    /// Node to backpropagate.
    pub root: NodeId,
    pub breakdown: LossBreakdown,
}

impl Objective {
    pub fn term(&self, name: &str) -> Option<NodeId> {
        self.terms.iter().find(|(n, _)| *n == name).map(|t| t.1)
    }
}

fn concat_opt(g: &mut Graph, parts: &[Option<NodeId>]) -> Result<NodeId> {
    let ids: Vec<NodeId> = parts.iter().flatten().copied().collect();
    if ids.len() == 1 {
        Ok(ids[0])
    } else {
        g.concat_rows(&ids)
    }
}

/// Builds every loss on top of `fwd`. With `adversarial`, the discriminator
/// term reaches the encoders through a gradient reversal of strength `γ`
/// and `root` is the training objective; otherwise `root` is the plain
/// weighted sum reported as `total`.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    g: &mut Graph,
    model: &JstnModel,
    bound: &BoundModel,
    fwd: &Forward,
    batch: &Batch,
    plan: &EpochPlan,
    cfg: &TrainConfig,
    adversarial: bool,
) -> Result<Objective> {
    let k = model.arch.k;
    let mut terms: Vec<(&'static str, NodeId)> = Vec::new();
    let mut b = LossBreakdown::default();

    let c_src = concat_opt(g, &[fwd.c_sn, fwd.c_si])?;
    let y_src = source_labels(batch);
    let l_sup = losses::supervision_loss(g, c_src, &y_src)?;
    terms.push(("l_sup", l_sup));

    let y_tl = &batch.tl.1;
    let l_hd = losses::implicit_hard_loss(g, fwd.c_tl, y_tl)?;
    terms.push(("l_hd", l_hd));
    let p_tl = g.softmax_rows(fwd.c_tl, 1.0)?;
    let mut soft = Vec::new();
    if let (Some(t), Some(w)) = (&plan.teacher_sn, plan.omega_sn) {
        let l = losses::implicit_soft_loss(g, p_tl, y_tl, t)?;
        terms.push(("l_sf_sn", l));
        soft.push((l, w));
    }
    if let (Some(t), Some(w)) = (&plan.teacher_si, plan.omega_si) {
        let l = losses::implicit_soft_loss(g, p_tl, y_tl, t)?;
        terms.push(("l_sf_si", l));
        soft.push((l, w));
    }
    let l_wis = losses::weighted_implicit_loss(g, l_hd, &soft, cfg.alpha)?;
    terms.push(("l_wis", l_wis));

    let f_src = concat_opt(g, &[fwd.f_sn, fwd.f_si])?;
    let f_tgt = if plan.refinement.accepted.is_empty() {
        fwd.f_tl
    } else {
        let acc = g.gather_rows(fwd.f_tu, &plan.refinement.accepted)?;
        g.concat_rows(&[fwd.f_tl, acc])?
    };
    let y_tgt = target_labels(batch, plan);
    let l_esc = losses::centroid_alignment_loss(g, f_src, &y_src, f_tgt, &y_tgt, k)?;
    terms.push(("l_esc", l_esc));

    let (n_src, n_tgt) = (g.shape(f_src).0, g.shape(f_tgt).0);
    let mut pairs = Vec::new();
    for (s, t) in plan.source_reps.iter().zip(&plan.target_reps) {
        if let (Some(s), Some(t)) = (s, t) {
            let ms: Vec<&[usize]> = s.members.iter().map(Vec::as_slice).collect();
            let mt: Vec<&[usize]> = t.members.iter().map(Vec::as_slice).collect();
            let a_s = g.constant(averaging_matrix(&ms, n_src));
            let a_t = g.constant(averaging_matrix(&mt, n_tgt));
            pairs.push((g.matmul(a_s, f_src)?, g.matmul(a_t, f_tgt)?));
        }
    }
    let l_esr = losses::representative_alignment_loss(g, &pairs)?;
    terms.push(("l_esr", l_esr));

    let l_ssc = match (&plan.teacher_ssc, fwd.c_si, &batch.si) {
        (Some(q), Some(c_si), Some((_, y_si))) => {
            let l = losses::scenario_distribution_loss(g, q, c_si, y_si, cfg.t1)?;
            terms.push(("l_ssc", l));
            Some(l)
        }
        _ => None,
    };

    let f_all_tgt = g.concat_rows(&[fwd.f_tl, fwd.f_tu])?;
    let l_ssd = if adversarial && cfg.gamma == 0.0 {
        None
    } else {
        let (s, t) = if adversarial {
            (g.grad_reverse(f_src, cfg.gamma), g.grad_reverse(f_all_tgt, cfg.gamma))
        } else {
            (f_src, f_all_tgt)
        };
        let d_s = model.discriminate(g, bound, s)?;
        let d_t = model.discriminate(g, bound, t)?;
        let l = losses::scenario_discriminator_loss(g, d_s, d_t)?;
        terms.push(("l_ssd", l));
        Some(l)
    };

    let val = |g: &Graph, n: &str| terms.iter().find(|t| t.0 == n).map_or(0.0, |t| g.scalar(t.1));
    b.l_sup = val(g, "l_sup");
    b.l_wis = val(g, "l_wis");
    b.l_hd = val(g, "l_hd");
    b.l_sf_sn = val(g, "l_sf_sn");
    b.l_sf_si = val(g, "l_sf_si");
    b.l_esc = val(g, "l_esc");
    b.l_esr = val(g, "l_esr");
    b.l_ssd = val(g, "l_ssd");
    b.l_ssc = val(g, "l_ssc");
    b.omega_sn = plan.omega_sn.unwrap_or(0.0);
    b.omega_si = plan.omega_si.unwrap_or(0.0);
    b.total = b.objective(&cfg.weights());

    let mut root = g.add(l_sup, l_wis)?;
    for (coef, node) in [(cfg.beta, Some(l_esc)), (cfg.lambda, Some(l_esr)), (cfg.eta, l_ssc)] {
        if let (true, Some(n)) = (coef > 0.0, node) {
            let s = g.scale(n, coef);
            root = g.add(root, s)?;
        }
    }
    if let Some(l) = l_ssd {
        if adversarial {
            root = g.add(root, l)?;
        } else if cfg.gamma > 0.0 {
            let s = g.scale(l, cfg.gamma);
            root = g.add(root, s)?;
        }
    }
    if !adversarial {
        terms.push(("total", root));
    }
    Ok(Objective { terms, root, breakdown: b })
}

pub fn architecture(data: &TrainingData, cfg: &TrainConfig) -> Architecture {
    Architecture {
        d_sn: data.sn.dim(),
        d_si: data.si.dim(),
        d_t: data.tl.dim(),
        hidden: cfg.hidden,
        d_c: cfg.d_c,
        k: data.k,
        slope: cfg.slope,
    }
}

fn check_finite(b: &LossBreakdown, epoch: usize) -> Result<()> {
    for (name, v) in b.terms().into_iter().chain([("total", b.total)]) {
        if !v.is_finite() {
            return Err(JstnError::NonFinite { term: name.to_string(), epoch });
        }
    }
    Ok(())
}

/// Per-step statistics folded into the epoch report.
struct StepStats {
    breakdown: LossBreakdown,
    accepted: usize,
    tu_rows: usize,
    pl_hits: Option<usize>,
    nn_hits: Option<usize>,
}

fn train_step<R: rand::Rng + ?Sized>(
    model: &mut JstnModel,
    adam: &mut AdamState,
    batch: &Batch,
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<StepStats> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let fwd = forward(&mut g, model, &bound, batch)?;
    let plan = make_plan(&g, &fwd, batch, cfg, model.arch.k, epoch, rng)?;
    let obj = assemble(&mut g, model, &bound, &fwd, batch, &plan, cfg, true)?;
    check_finite(&obj.breakdown, epoch)?;
    g.backward(obj.root)?;
    model.accumulate_grads(&g, &bound);
    if model.params().iter().any(|p| p.grad.iter().any(|v| !v.is_finite())) {
        return Err(JstnError::NonFinite { term: "gradient".into(), epoch });
    }
    adam.step(&mut model.params_mut());

    let (pl_hits, nn_hits) = match &batch.tu_truth {
        Some(truth) => {
            let r = &plan.refinement;
            let pl = r.accepted.iter().zip(&r.labels).filter(|(&i, &y)| truth[i] == y).count();
            let nn = argmax_rows(g.value(fwd.c_tu)).iter().zip(truth).filter(|(a, b)| a == b).count();
            (Some(pl), Some(nn))
        }
        None => (None, None),
    };
    Ok(StepStats {
        breakdown: obj.breakdown,
        accepted: plan.refinement.accepted_count(),
        tu_rows: batch.tu.nrows(),
        pl_hits,
        nn_hits,
    })
}

fn chunks(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

fn epoch_batches(data: &TrainingData, cfg: &TrainConfig, full: &Batch, rng: &mut ChaCha8Rng) -> Result<Vec<Batch>> {
    if cfg.batch_size == 0 {
        return Ok(vec![full.clone()]);
    }
    let parts = [
        chunks(data.sn.len(), cfg.batch_size, rng),
        chunks(data.si.len(), cfg.batch_size, rng),
        chunks(data.tl.len(), cfg.batch_size, rng),
        chunks(data.tu.len(), cfg.batch_size, rng),
    ];
    let steps = parts.iter().map(Vec::len).max().unwrap_or(1);
    (0..steps)
        .map(|s| {
            let idx = [0, 1, 2, 3].map(|d| &parts[d][s % parts[d].len()]);
            Batch::rows(data, cfg, idx, false)
        })
        .collect()
}

fn fold(epoch: usize, steps: &[StepStats], seconds: f64) -> EpochReport {
    let n = steps.len() as f64;
    let mut b = LossBreakdown::default();
    for s in steps {
        let x = &s.breakdown;
        b.l_sup += x.l_sup / n;
        b.l_wis += x.l_wis / n;
        b.l_hd += x.l_hd / n;
        b.l_sf_sn += x.l_sf_sn / n;
        b.l_sf_si += x.l_sf_si / n;
        b.l_esc += x.l_esc / n;
        b.l_esr += x.l_esr / n;
        b.l_ssd += x.l_ssd / n;
        b.l_ssc += x.l_ssc / n;
        b.omega_sn += x.omega_sn / n;
        b.omega_si += x.omega_si / n;
        b.total += x.total / n;
    }
    if steps.len() == 1 {
        b = steps[0].breakdown;
    }
    let accepted: usize = steps.iter().map(|s| s.accepted).sum();
    let rows: usize = steps.iter().map(|s| s.tu_rows).sum();
    let pl: Option<usize> = steps.iter().map(|s| s.pl_hits).sum();
    let nn: Option<usize> = steps.iter().map(|s| s.nn_hits).sum();
    EpochReport {
        epoch,
        losses: b,
        accepted_count: accepted,
        acceptance_rate: if rows == 0 { 0.0 } else { accepted as f64 / rows as f64 },
        pseudo_label_precision: pl.filter(|_| accepted > 0).map(|h| h as f64 / accepted as f64),
        tu_accuracy: nn.map(|h| h as f64 / rows as f64),
        seconds,
    }
}

/// Observer invoked after every epoch with the report and the updated model.
pub type Observer<'a> = dyn FnMut(&EpochReport, &JstnModel) -> Result<()> + 'a;

/// Trains a fresh model from `cfg.seed`.
pub fn train(data: &TrainingData, cfg: &TrainConfig, observer: &mut Observer) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = JstnModel::init(architecture(data, cfg), InitSpec::seeded(cfg.seed))?;
    train_from(model, data, cfg, observer)
}

/// Trains `model` in place for `cfg.epochs` epochs.
pub fn train_from(
    mut model: JstnModel,
    data: &TrainingData,
    cfg: &TrainConfig,
    observer: &mut Observer,
) -> Result<TrainOutcome> {
    let mut adam = AdamState::new(cfg.adam, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ CLUSTER_STREAM);
    let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let full = Batch::full(data, cfg)?;
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let batches = epoch_batches(data, cfg, &full, &mut shuffle)?;
        let steps = batches
            .iter()
            .map(|b| train_step(&mut model, &mut adam, b, cfg, epoch, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let report = fold(epoch, &steps, start.elapsed().as_secs_f64());
        debug!("epoch {epoch}: total {:.6} accepted {}", report.losses.total, report.accepted_count);
        if epoch == cfg.epochs || epoch % 100 == 0 {
            info!("epoch {epoch}/{}: total {:.5}", cfg.epochs, report.losses.total);
        }
        observer(&report, &model)?;
        reports.push(report);
    }
    Ok(TrainOutcome { model, reports })
}

/// Baseline: the target encoder and the classifier trained on the labelled
/// target rows alone with plain cross-entropy.
pub fn train_target_only(data: &TrainingData, cfg: &TrainConfig) -> Result<JstnModel> {
    cfg.validate()?;
    let mut model = JstnModel::init(architecture(data, cfg), InitSpec::seeded(cfg.seed))?;
    let mut adam = AdamState::new(cfg.adam, model.params());
    let y = data.tl.labels_or_err()?;
    for epoch in 1..=cfg.epochs {
        let mut g = Graph::new();
        let bound = model.bind(&mut g);
        let x = g.constant(data.tl.x.clone());
        let f = model.encode(&mut g, &bound, x, Branch::Target)?;
        let c = model.classify(&mut g, &bound, f)?;
        let l = losses::cross_entropy(&mut g, c, y)?;
        if !g.scalar(l).is_finite() {
            return Err(JstnError::NonFinite { term: "l_hd".into(), epoch });
        }
        g.backward(l)?;
        model.accumulate_grads(&g, &bound);
        adam.step(&mut model.params_mut());
    }
    Ok(model)
}

/// Predicted classes of target rows.
pub fn predict_target(model: &JstnModel, x: &Matrix) -> Result<Vec<usize>> {
    let (_, logits) = model.predict(x, Branch::Target)?;
    Ok(argmax_rows(&logits))
}

/// Metrics of `model` on a target set against its held-out (or training) labels.
pub fn evaluate_target(model: &JstnModel, tu: &DomainDataset) -> Result<MetricsReport> {
    let truth = tu
        .truth()
        .ok_or_else(|| JstnError::Data(format!("domain `{}` has no ground truth to evaluate", tu.name)))?;
    evaluate(&predict_target(model, &tu.x)?, truth, model.arch.k)
}
