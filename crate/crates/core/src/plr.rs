//! Consensus pseudo-labelling of the unlabelled target rows: a classifier
//! label is kept only when the nearest labelled class centroid, by cosine
//! similarity, names the same class.

use serde::Serialize;

use crate::autodiff::{argmax_rows, Matrix};
use crate::losses::class_centroids;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PseudoLabelAssignment {
    /// Row index into the unlabelled target set.
    pub index: usize,
    pub y_nn: usize,
    /// `None` when no class has a centroid.
    pub y_gs: Option<usize>,
    pub accepted: bool,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub assignments: Vec<PseudoLabelAssignment>,
    /// Accepted row indices, ascending.
    pub accepted: Vec<usize>,
    /// Pseudo-labels of `accepted`, aligned.
    pub labels: Vec<usize>,
    /// Accepted count per class.
    pub histogram: Vec<usize>,
}

impl Refinement {
    pub fn accepted_count(&self) -> usize {
        self.accepted.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.assignments.is_empty() {
            0.0
        } else {
            self.accepted.len() as f64 / self.assignments.len() as f64
        }
    }

    /// Fraction of accepted pseudo-labels equal to `truth`; `None` when
    /// nothing was accepted.
    pub fn precision(&self, truth: &[usize]) -> Option<f64> {
        if self.accepted.is_empty() {
            return None;
        }
        let hits = self
            .accepted
            .iter()
            .zip(&self.labels)
            .filter(|(&i, &y)| truth[i] == y)
            .count();
        Some(hits as f64 / self.accepted.len() as f64)
    }
}

/// Per-class centroids over the union of the labelled sets.
pub fn labeled_centroids(
    sets: &[(&Matrix, &[usize])],
    k: usize,
    literal_normalization: bool,
) -> Vec<Option<Vec<f64>>> {
    let width = sets.first().map_or(0, |(m, _)| m.ncols());
    let n: usize = sets.iter().map(|(m, _)| m.nrows()).sum();
    let mut all = Matrix::zeros((n, width));
    let mut labels = Vec::with_capacity(n);
    let mut at = 0;
    for (m, y) in sets {
        all.slice_mut(ndarray::s![at..at + m.nrows(), ..]).assign(m);
        at += m.nrows();
        labels.extend_from_slice(y);
    }
    class_centroids(&all, &labels, k, literal_normalization)
}

/// Cosine similarity; −1 when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return -1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Class of the most cosine-similar centroid; ties go to the lowest index.
pub fn geometric_label(f: &[f64], centroids: &[Option<Vec<f64>>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, c) in centroids.iter().enumerate() {
        let Some(c) = c else { continue };
        let s = cosine_similarity(f, c);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k)
}

/// Runs the consensus rule over every unlabelled row. With `consensus`
/// off, every classifier label is accepted.
pub fn refine(
    logits: &Matrix,
    features: &Matrix,
    centroids: &[Option<Vec<f64>>],
    consensus: bool,
    epoch: usize,
) -> Refinement {
    assert_eq!(logits.nrows(), features.nrows(), "logits and features must align");
    let k = logits.ncols();
    let y_nn = argmax_rows(logits);
    let mut out = Refinement {
        assignments: Vec::with_capacity(y_nn.len()),
        accepted: Vec::new(),
        labels: Vec::new(),
        histogram: vec![0; k],
    };
    for (i, &nn) in y_nn.iter().enumerate() {
        let row = features.row(i);
        let gs = geometric_label(row.as_slice().expect("standard layout"), centroids);
        let accepted = !consensus || gs == Some(nn);
        if accepted {
            out.accepted.push(i);
            out.labels.push(nn);
            out.histogram[nn] += 1;
        }
        out.assignments.push(PseudoLabelAssignment { index: i, y_nn: nn, y_gs: gs, accepted, epoch });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn centroid_examples() {
        let a = array![[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]];
        let c = labeled_centroids(&[(&a, &[0, 0, 1])], 3, false);
        assert_eq!(c[0].as_deref(), Some(&[1.0, 0.0][..]));
        assert_eq!(c[1].as_deref(), Some(&[5.0, 5.0][..]));
        assert!(c[2].is_none());
    }

    #[test]
    fn centroids_pool_all_labelled_sets() {
        let a = array![[0.0, 0.0]];
        let b = array![[2.0, 0.0], [9.0, 9.0]];
        let t = array![[4.0, 3.0]];
        let c = labeled_centroids(&[(&a, &[0]), (&b, &[0, 1]), (&t, &[0])], 2, false);
        assert_eq!(c[0].as_deref(), Some(&[2.0, 1.0][..]));
        let perm = labeled_centroids(&[(&t, &[0]), (&b, &[0, 1]), (&a, &[0])], 2, false);
        assert_eq!(c, perm);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((cosine_similarity(&[3.0, -4.0], &[3.0, -4.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), -1.0);
    }

    #[test]
    fn geometric_label_picks_parallel_centroid() {
        let c = vec![Some(vec![1.0, 0.0, 0.0]), Some(vec![0.0, 2.0, 0.0]), Some(vec![0.0, 0.0, 1.0])];
        assert_eq!(geometric_label(&[0.0, 5.0, 0.0], &c), Some(1));
        // tie between classes 0 and 2
        assert_eq!(geometric_label(&[1.0, 0.0, 1.0], &c), Some(0));
        // zero feature: all similarities −1, lowest present class
        let c2 = vec![None, Some(vec![1.0, 0.0, 0.0]), Some(vec![0.0, 1.0, 0.0])];
        assert_eq!(geometric_label(&[0.0, 0.0, 0.0], &c2), Some(1));
        assert_eq!(geometric_label(&[1.0, 0.0, 0.0], &[None, None]), None);
    }

    #[test]
    fn consensus_rule() {
        let c = vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0])];
        let f = array![[2.0, 0.1], [0.1, 2.0]];
        let logits = array![[3.0, 0.0], [3.0, 0.0]];
        let r = refine(&logits, &f, &c, true, 7);
        assert_eq!(r.accepted, vec![0]);
        assert_eq!(r.labels, vec![0]);
        assert_eq!(r.histogram, vec![1, 0]);
        assert!(!r.assignments[1].accepted);
        assert_eq!(r.assignments[1].y_gs, Some(1));
        assert_eq!(r.acceptance_rate(), 0.5);
        assert_eq!(r.precision(&[0, 1]), Some(1.0));

        let all = refine(&logits, &f, &c, false, 7);
        assert_eq!(all.accepted, vec![0, 1]);
        assert_eq!(all.labels, vec![0, 0]);
        assert_eq!(all.precision(&[0, 1]), Some(0.5));
        let none = refine(&array![[0.0, 3.0]], &array![[1.0, 0.0]], &c, true, 0);
        assert_eq!(none.precision(&[0]), None);
    }

    proptest! {
        #[test]
        fn accepted_labels_agree_with_both_votes(
            vals in proptest::collection::vec(-3.0f64..3.0, 40),
            cents in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let logits = Matrix::from_shape_vec((10, 2), vals[..20].to_vec()).unwrap();
            let f = Matrix::from_shape_vec((10, 2), vals[20..].to_vec()).unwrap();
            let c: Vec<_> = cents.chunks(2).map(|p| Some(p.to_vec())).collect();
            let mut l3 = Matrix::zeros((10, 3));
            l3.slice_mut(ndarray::s![.., 0..2]).assign(&logits);
            let r = refine(&l3, &f, &c, true, 0);
            let again = refine(&l3, &f, &c, true, 0);
            prop_assert_eq!(&r, &again);
            for (a, &y) in r.accepted.iter().zip(&r.labels) {
                let asg = r.assignments[*a];
                prop_assert_eq!(asg.y_nn, y);
                prop_assert_eq!(asg.y_gs, Some(y));
            }
            prop_assert_eq!(r.histogram.iter().sum::<usize>(), r.accepted_count());
        }
    }
}
