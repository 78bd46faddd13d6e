//! Objective terms: source supervision, adversarial scenario loss, per-class
//! distribution matching between sources, weighted distillation into the
//! labelled target, and centroid / representative alignment.
//!
//! Class labels are 0-based `usize` indices below `k` everywhere in this
//! module; the 1-based external form only exists at the data boundary.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Graph, Matrix, NodeId, PROB_EPS};
use crate::error::{JstnError, Result};

/// Row indices of each class, `k` buckets.
pub fn class_rows(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        out[y].push(i);
    }
    out
}

fn check_labels(labels: &[usize], k: usize, n: usize, what: &str) -> Result<()> {
    if labels.len() != n {
        return Err(JstnError::Data(format!(
            "{what}: {} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(JstnError::Data(format!(
            "{what}: label {} outside [1, {k}]",
            bad + 1
        )));
    }
    Ok(())
}

/// `m×n` matrix whose row `r` averages the rows listed in `groups[r]`.
pub fn averaging_matrix(groups: &[&[usize]], n: usize) -> Matrix {
    let mut a = Matrix::zeros((groups.len(), n));
    for (r, rows) in groups.iter().enumerate() {
        let w = 1.0 / rows.len() as f64;
        for &i in rows.iter() {
            a[[r, i]] += w;
        }
    }
    a
}

/// `−Σ target ⊙ log(clamp(p))`, as a graph node (not normalised).
fn soft_cross_entropy_sum(g: &mut Graph, probs: NodeId, target: Matrix) -> Result<NodeId> {
    let p = g.clamp(probs, PROB_EPS, 1.0);
    let lp = g.log(p)?;
    let t = g.constant(target);
    let prod = g.mul(lp, t)?;
    let s = g.sum(prod);
    Ok(g.scale(s, -1.0))
}

/// Mean cross-entropy of `softmax(logits)` against integer labels.
pub fn cross_entropy(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let (n, k) = g.shape(logits);
    check_labels(labels, k, n, "cross_entropy")?;
    if n == 0 {
        return Err(JstnError::Data("cross_entropy over zero rows".into()));
    }
    let mut onehot = Matrix::zeros((n, k));
    for (i, &y) in labels.iter().enumerate() {
        onehot[[i, y]] = 1.0;
    }
    let p = g.softmax_rows(logits, 1.0)?;
    let s = soft_cross_entropy_sum(g, p, onehot)?;
    Ok(g.scale(s, 1.0 / n as f64))
}

/// Source supervision: mean cross-entropy over all labelled source rows.
pub fn supervision_loss(g: &mut Graph, logits_s: NodeId, labels_s: &[usize]) -> Result<NodeId> {
    cross_entropy(g, logits_s, labels_s)
}

/// Hard-label loss on the labelled target rows.
pub fn implicit_hard_loss(g: &mut Graph, logits_tl: NodeId, labels_tl: &[usize]) -> Result<NodeId> {
    cross_entropy(g, logits_tl, labels_tl)
}

/// Binary cross-entropy of the domain discriminator: source rows are labelled
/// 1, target rows 0. `−[mean log D(src) + mean log(1 − D(tgt))]`.
pub fn scenario_discriminator_loss(g: &mut Graph, d_src: NodeId, d_tgt: NodeId) -> Result<NodeId> {
    let src = g.clamp(d_src, PROB_EPS, 1.0 - PROB_EPS);
    let ls = g.log(src)?;
    let ms = g.mean(ls);
    let one_minus = g.one_minus(d_tgt);
    let tgt = g.clamp(one_minus, PROB_EPS, 1.0 - PROB_EPS);
    let lt = g.log(tgt)?;
    let mt = g.mean(lt);
    let s = g.add(ms, mt)?;
    Ok(g.scale(s, -1.0))
}

/// Variant without the complement inside the log,
/// `mean log D(src) + mean (1 − log D(tgt))`. Unbounded below; for
/// inspection only, never trained on.
pub fn scenario_discriminator_literal(d_src: &Matrix, d_tgt: &Matrix) -> f64 {
    let c = |p: f64| p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let src = d_src.iter().map(|&p| c(p).ln()).sum::<f64>() / d_src.len() as f64;
    let tgt = d_tgt.iter().map(|&p| 1.0 - c(p).ln()).sum::<f64>() / d_tgt.len() as f64;
    src + tgt
}

/// Per-class mean tempered-softmax distributions of a labelled batch. Rows
/// for classes with no instances are `None`. Values are plain numbers: the
/// table is a detached teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTable {
    pub rows: Vec<Option<Vec<f64>>>,
}

impl TeacherTable {
    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn present(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().map(|_| i))
    }

    /// Entropy of a teacher row.
    pub fn entropy(&self, class: usize) -> Option<f64> {
        self.rows[class].as_ref().map(|r| {
            -r.iter()
                .map(|&q| if q > 0.0 { q * q.max(PROB_EPS).ln() } else { 0.0 })
                .sum::<f64>()
        })
    }
}

/// Builds the teacher table from logit values at `temperature`.
pub fn soft_label_table(logits: &Matrix, labels: &[usize], temperature: f64) -> Result<TeacherTable> {
    let (n, k) = logits.dim();
    check_labels(labels, k, n, "soft_label_table")?;
    if !(temperature > 0.0) {
        return Err(JstnError::Parameter(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    let p = softmax_rows(logits, temperature);
    let rows = class_rows(labels, k)
        .into_iter()
        .map(|idx| {
            if idx.is_empty() {
                return None;
            }
            let mut acc = vec![0.0; k];
            for &i in &idx {
                for (a, &v) in acc.iter_mut().zip(p.row(i)) {
                    *a += v;
                }
            }
            let inv = 1.0 / idx.len() as f64;
            acc.iter_mut().for_each(|a| *a *= inv);
            Some(acc)
        })
        .collect();
    Ok(TeacherTable { rows })
}

/// Source-to-source distribution matching: `−(1/K_eff) Σ_k q⁽ᵏ⁾ᵀ log p⁽ᵏ⁾`
/// where `q` comes from the (detached) SN teacher table and `p⁽ᵏ⁾` is the SI
/// per-class mean of `softmax(logits_si / t1)`. Classes missing on either
/// side are skipped; with no shared class the result is a constant zero.
pub fn scenario_distribution_loss(
    g: &mut Graph,
    teacher_sn: &TeacherTable,
    logits_si: NodeId,
    labels_si: &[usize],
    t1: f64,
) -> Result<NodeId> {
    let (n, k) = g.shape(logits_si);
    check_labels(labels_si, k, n, "scenario_distribution_loss")?;
    let by_class = class_rows(labels_si, k);
    let mut classes = Vec::new();
    for c in 0..k {
        match (&teacher_sn.rows[c], by_class[c].is_empty()) {
            (Some(_), false) => classes.push(c),
            (None, false) | (Some(_), true) => {
                warn!("class {} present in only one source; skipped in distribution matching", c + 1)
            }
            (None, true) => {}
        }
    }
    if classes.is_empty() {
        warn!("no class shared by both sources; distribution matching contributes zero");
        return Ok(g.constant(Matrix::zeros((1, 1))));
    }
    let groups: Vec<&[usize]> = classes.iter().map(|&c| by_class[c].as_slice()).collect();
    let avg = g.constant(averaging_matrix(&groups, n));
    let p = g.softmax_rows(logits_si, t1)?;
    let p_class = g.matmul(avg, p)?;
    let mut q = Matrix::zeros((classes.len(), k));
    for (r, &c) in classes.iter().enumerate() {
        for (j, &v) in teacher_sn.rows[c].as_ref().unwrap().iter().enumerate() {
            q[[r, j]] = v;
        }
    }
    let s = soft_cross_entropy_sum(g, p_class, q)?;
    Ok(g.scale(s, 1.0 / classes.len() as f64))
}

/// Distillation of a source teacher into the labelled target:
/// `−(1/n_used) Σ_i q^{y_i}ᵀ log p_i`, `p_i` being the plain (T = 1) softmax
/// probabilities of the labelled target rows. Rows whose class has no teacher
/// row are skipped.
pub fn implicit_soft_loss(
    g: &mut Graph,
    p_tl: NodeId,
    labels_tl: &[usize],
    teacher: &TeacherTable,
) -> Result<NodeId> {
    let (n, k) = g.shape(p_tl);
    check_labels(labels_tl, k, n, "implicit_soft_loss")?;
    let used: Vec<usize> = (0..n).filter(|&i| teacher.rows[labels_tl[i]].is_some()).collect();
    if used.is_empty() {
        warn!("no labelled target row has a teacher distribution; soft loss is zero");
        return Ok(g.constant(Matrix::zeros((1, 1))));
    }
    let mut q = Matrix::zeros((used.len(), k));
    for (r, &i) in used.iter().enumerate() {
        for (j, &v) in teacher.rows[labels_tl[i]].as_ref().unwrap().iter().enumerate() {
            q[[r, j]] = v;
        }
    }
    let p = if used.len() == n { p_tl } else { g.gather_rows(p_tl, &used)? };
    let s = soft_cross_entropy_sum(g, p, q)?;
    Ok(g.scale(s, 1.0 / used.len() as f64))
}

/// Per-class centroids of plain feature rows; `None` for absent classes.
/// With `literal_normalization` each class sum is divided by the total row
/// count instead of the class count.
pub fn class_centroids(
    features: &Matrix,
    labels: &[usize],
    k: usize,
    literal_normalization: bool,
) -> Vec<Option<Vec<f64>>> {
    let n = features.nrows();
    class_rows(labels, k)
        .into_iter()
        .map(|idx| {
            if idx.is_empty() {
                return None;
            }
            let denom = if literal_normalization { n } else { idx.len() } as f64;
            let mut acc = vec![0.0; features.ncols()];
            for &i in &idx {
                for (a, &v) in acc.iter_mut().zip(features.row(i)) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= denom);
            Some(acc)
        })
        .collect()
}

/// Mean over shared classes of the squared distance between source and
/// labelled-target class centroids.
pub fn source_target_divergence(
    f_src: &Matrix,
    labels_src: &[usize],
    f_tl: &Matrix,
    labels_tl: &[usize],
    k: usize,
    literal_normalization: bool,
) -> Result<f64> {
    check_labels(labels_src, k, f_src.nrows(), "source_target_divergence")?;
    check_labels(labels_tl, k, f_tl.nrows(), "source_target_divergence")?;
    let cs = class_centroids(f_src, labels_src, k, literal_normalization);
    let ct = class_centroids(f_tl, labels_tl, k, literal_normalization);
    let mut total = 0.0;
    let mut shared = 0usize;
    for (a, b) in cs.iter().zip(&ct) {
        if let (Some(a), Some(b)) = (a, b) {
            total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            shared += 1;
        }
    }
    if shared == 0 {
        return Err(JstnError::Data(
            "source and labelled target share no class".into(),
        ));
    }
    Ok(total / shared as f64)
}

/// Largest `f64` strictly below the weight ceiling of 1.25.
const OMEGA_CEILING: f64 = 1.2499999999999998;

/// Source importance `e^d / (e^d + 1) + 0.25`, in `[0.75, 1.25)`.
///
/// For `d ≳ 37` the exact value lies within half an ulp of 1.25; the result
/// is rounded down so the open upper bound holds in floating point too.
pub fn source_weight(d: f64) -> f64 {
    debug_assert!(d >= 0.0, "divergence must be non-negative");
    (crate::autodiff::sigmoid(d) + 0.25).min(OMEGA_CEILING)
}

/// `(1 − α)·l_hd + α·mean_s(ω_s·l_sf_s)` over the sources present (two in the
/// full model, where this is the usual halved sum).
pub fn weighted_implicit_loss(
    g: &mut Graph,
    l_hd: NodeId,
    soft: &[(NodeId, f64)],
    alpha: f64,
) -> Result<NodeId> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(JstnError::Parameter(format!("alpha must lie in [0,1], got {alpha}")));
    }
    let mut total = g.scale(l_hd, 1.0 - alpha);
    if soft.is_empty() || alpha == 0.0 {
        return Ok(total);
    }
    let share = alpha / soft.len() as f64;
    for &(l, omega) in soft {
        let term = g.scale(l, share * omega);
        total = g.add(total, term)?;
    }
    Ok(total)
}

/// Triplet centroid alignment `Σ_k ‖μ_S−μ_T‖² + ‖μ_S−μ_ST‖² + ‖μ_T−μ_ST‖²`
/// over classes present on both sides. Gradients flow into every feature
/// row that contributes to a centroid.
pub fn centroid_alignment_loss(
    g: &mut Graph,
    f_src: NodeId,
    labels_src: &[usize],
    f_tgt: NodeId,
    labels_tgt: &[usize],
    k: usize,
) -> Result<NodeId> {
    let (ns, nt) = (g.shape(f_src).0, g.shape(f_tgt).0);
    check_labels(labels_src, k, ns, "centroid_alignment_loss")?;
    check_labels(labels_tgt, k, nt, "centroid_alignment_loss")?;
    let src = class_rows(labels_src, k);
    let tgt = class_rows(labels_tgt, k);
    let mut classes = Vec::new();
    for c in 0..k {
        match (src[c].is_empty(), tgt[c].is_empty()) {
            (false, false) => classes.push(c),
            (true, true) => {}
            _ => log::debug!("class {} on one side only; skipped in centroid alignment", c + 1),
        }
    }
    if classes.is_empty() {
        return Ok(g.constant(Matrix::zeros((1, 1))));
    }
    let union: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| src[c].iter().copied().chain(tgt[c].iter().map(|&i| i + ns)).collect())
        .collect();
    let gs: Vec<&[usize]> = classes.iter().map(|&c| src[c].as_slice()).collect();
    let gt: Vec<&[usize]> = classes.iter().map(|&c| tgt[c].as_slice()).collect();
    let gu: Vec<&[usize]> = union.iter().map(Vec::as_slice).collect();

    let a_s = g.constant(averaging_matrix(&gs, ns));
    let a_t = g.constant(averaging_matrix(&gt, nt));
    let a_u = g.constant(averaging_matrix(&gu, ns + nt));
    let both = g.concat_rows(&[f_src, f_tgt])?;
    let mu_s = g.matmul(a_s, f_src)?;
    let mu_t = g.matmul(a_t, f_tgt)?;
    let mu_st = g.matmul(a_u, both)?;

    let mut total = None;
    for (a, b) in [(mu_s, mu_t), (mu_s, mu_st), (mu_t, mu_st)] {
        let d = g.sq_l2_rowdiff(a, b)?;
        let s = g.sum(d);
        total = Some(match total {
            None => s,
            Some(t) => g.add(t, s)?,
        });
    }
    Ok(total.unwrap())
}

/// Pairwise representative alignment. `pairs` holds, for each class with
/// representatives on both sides, the `(source reps, target reps)` nodes.
/// `Σ_k Σ_i Σ_j ‖r_S(i) − r_T(j)‖² / (K·|r_S|·|r_T|)`, `K = pairs.len()`.
pub fn representative_alignment_loss(g: &mut Graph, pairs: &[(NodeId, NodeId)]) -> Result<NodeId> {
    if pairs.is_empty() {
        return Ok(g.constant(Matrix::zeros((1, 1))));
    }
    let kk = pairs.len() as f64;
    let mut total = None;
    for &(rs, rt) in pairs {
        let (ns, nt) = (g.shape(rs).0, g.shape(rt).0);
        let si: Vec<usize> = (0..ns).flat_map(|i| std::iter::repeat_n(i, nt)).collect();
        let ti: Vec<usize> = (0..ns).flat_map(|_| 0..nt).collect();
        let a = g.gather_rows(rs, &si)?;
        let b = g.gather_rows(rt, &ti)?;
        let d = g.sq_l2_rowdiff(a, b)?;
        let s = g.sum(d);
        let term = g.scale(s, 1.0 / (kk * ns as f64 * nt as f64));
        total = Some(match total {
            None => term,
            Some(t) => g.add(t, term)?,
        });
    }
    Ok(total.unwrap())
}

/// Loss coefficients of the overall objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub eta: f64,
}

/// Per-epoch decomposition of the objective.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_sup: f64,
    #[serde(skip)]
    pub l_wis: f64,
    pub l_hd: f64,
    pub l_sf_sn: f64,
    pub l_sf_si: f64,
    pub l_esc: f64,
    pub l_esr: f64,
    pub l_ssd: f64,
    pub l_ssc: f64,
    pub omega_sn: f64,
    pub omega_si: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `l_sup + l_wis + β·l_esc + λ·l_esr + γ·l_ssd + η·l_ssc`.
    pub fn objective(&self, w: &LossWeights) -> f64 {
        self.l_sup
            + self.l_wis
            + w.beta * self.l_esc
            + w.lambda * self.l_esr
            + w.gamma * self.l_ssd
            + w.eta * self.l_ssc
    }

    /// Named terms, for non-finite diagnostics.
    pub fn terms(&self) -> [(&'static str, f64); 11] {
        [
            ("l_sup", self.l_sup),
            ("l_wis", self.l_wis),
            ("l_hd", self.l_hd),
            ("l_sf_sn", self.l_sf_sn),
            ("l_sf_si", self.l_sf_si),
            ("l_esc", self.l_esc),
            ("l_esr", self.l_esr),
            ("l_ssd", self.l_ssd),
            ("l_ssc", self.l_ssc),
            ("omega_sn", self.omega_sn),
            ("omega_si", self.omega_si),
        ]
    }
}

#[cfg(test)]
mod tests;
