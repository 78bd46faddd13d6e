use super::*;
use crate::autodiff::gradcheck::{numerical_gradient, relative_error, FD_STEP};
use ndarray::array;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-1.5..1.5))
}

/// Runs `build` on leaves created from `inputs`, returns (value, analytic grads).
fn eval<F>(inputs: &[Matrix], build: &F) -> (f64, Vec<Matrix>)
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
    let root = build(&mut g, &ids);
    g.backward(root).unwrap();
    let grads = ids
        .iter()
        .zip(inputs)
        .map(|(&id, m)| g.grad(id).cloned().unwrap_or_else(|| Matrix::zeros(m.dim())))
        .collect();
    (g.scalar(root), grads)
}

fn fd_error<F>(inputs: &[Matrix], build: F) -> f64
where
    F: Fn(&mut Graph, &[NodeId]) -> NodeId,
{
    let (_, analytic) = eval(inputs, &build);
    let numeric = numerical_gradient(|xs| eval(xs, &build).0, inputs, FD_STEP);
    relative_error(&analytic, &numeric)
}

fn entropy(q: &[f64]) -> f64 {
    -q.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

#[test]
fn uniform_logits_cross_entropy_is_ln_k() {
    let mut g = Graph::new();
    let z = g.leaf(Matrix::zeros((4, 5)));
    let l = supervision_loss(&mut g, z, &[0, 1, 2, 4]).unwrap();
    assert!((g.scalar(l) - 5f64.ln()).abs() < 1e-12);
    assert!((g.scalar(l) - 1.6094).abs() < 1e-4);
    let h = implicit_hard_loss(&mut g, z, &[0, 1, 2, 4]).unwrap();
    assert_eq!(g.scalar(h), g.scalar(l));
}

#[test]
fn confident_correct_logits_give_near_zero_loss() {
    let mut g = Graph::new();
    let z = g.leaf(array![[30.0, 0.0, 0.0], [0.0, 0.0, 30.0]]);
    let l = cross_entropy(&mut g, z, &[0, 2]).unwrap();
    assert!(g.scalar(l) < 1e-6);
}

#[test]
fn out_of_range_label_is_a_data_error() {
    let mut g = Graph::new();
    let z = g.leaf(Matrix::zeros((2, 3)));
    let err = cross_entropy(&mut g, z, &[0, 3]).unwrap_err();
    assert!(matches!(err, JstnError::Data(_)));
    assert!(err.to_string().contains("label 4"));
}

#[test]
fn cross_entropy_gradient_matches_fd() {
    let labels = [0, 2, 1, 1, 0];
    let err = fd_error(&[random(5, 3, 1)], |g, ids| cross_entropy(g, ids[0], &labels).unwrap());
    assert!(err < 1e-6, "{err}");
}

#[test]
fn discriminator_loss_at_half_is_two_ln_two() {
    let mut g = Graph::new();
    let s = g.leaf(Matrix::from_elem((3, 1), 0.5));
    let t = g.leaf(Matrix::from_elem((5, 1), 0.5));
    let l = scenario_discriminator_loss(&mut g, s, t).unwrap();
    assert!((g.scalar(l) - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert!((g.scalar(l) - 1.3863).abs() < 1e-4);
}

#[test]
fn perfect_discrimination_is_near_zero() {
    let mut g = Graph::new();
    let s = g.leaf(Matrix::from_elem((3, 1), 1.0 - 1e-12));
    let t = g.leaf(Matrix::from_elem((3, 1), 1e-12));
    let l = scenario_discriminator_loss(&mut g, s, t).unwrap();
    assert!(g.scalar(l) < 1e-9);
}

#[test]
fn discriminator_loss_symmetric_under_label_flip() {
    let a = array![[0.2], [0.7], [0.9]];
    let b = array![[0.4], [0.1], [0.6]];
    let flip = |m: &Matrix| m.mapv(|p| 1.0 - p);
    let mut g = Graph::new();
    let (s, t) = (g.leaf(a.clone()), g.leaf(b.clone()));
    let l1 = scenario_discriminator_loss(&mut g, s, t).unwrap();
    let (s2, t2) = (g.leaf(flip(&b)), g.leaf(flip(&a)));
    let l2 = scenario_discriminator_loss(&mut g, s2, t2).unwrap();
    assert!((g.scalar(l1) - g.scalar(l2)).abs() < 1e-12);
}

#[test]
fn discriminator_loss_gradient_matches_fd() {
    let s = random(4, 1, 2).mapv(|v| 0.5 + 0.3 * v / 1.5);
    let t = random(3, 1, 3).mapv(|v| 0.5 + 0.3 * v / 1.5);
    let err = fd_error(&[s, t], |g, ids| scenario_discriminator_loss(g, ids[0], ids[1]).unwrap());
    assert!(err < 1e-6, "{err}");
}

#[test]
fn literal_discriminator_form_differs_from_bce() {
    let s = Matrix::from_elem((2, 1), 0.5);
    let t = Matrix::from_elem((2, 1), 0.5);
    let lit = scenario_discriminator_literal(&s, &t);
    assert!((lit - 1.0).abs() < 1e-12);
}

#[test]
fn teacher_rows_are_distributions() {
    let z = random(9, 4, 4);
    let y = [0, 1, 1, 3, 3, 3, 0, 1, 0];
    let t = soft_label_table(&z, &y, 5.0).unwrap();
    assert_eq!(t.k(), 4);
    assert!(t.rows[2].is_none());
    assert_eq!(t.present().collect::<Vec<_>>(), vec![0, 1, 3]);
    for row in t.rows.iter().flatten() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_instance_teacher_is_its_tempered_softmax() {
    let z = array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0]];
    let t = soft_label_table(&z, &[2, 0], 5.0).unwrap();
    let p = softmax_rows(&z, 5.0);
    assert_eq!(t.rows[2].as_ref().unwrap(), &p.row(0).to_vec());
    assert_eq!(t.rows[0].as_ref().unwrap(), &p.row(1).to_vec());
    assert!(t.rows[1].is_none());
}

#[test]
fn teacher_rejects_bad_temperature() {
    let err = soft_label_table(&Matrix::zeros((1, 2)), &[0], 0.0).unwrap_err();
    assert!(matches!(err, JstnError::Parameter(_)));
}

#[test]
fn distribution_loss_at_p_equals_q_is_teacher_entropy() {
    let z = random(6, 3, 5);
    let y = [0, 0, 1, 1, 2, 2];
    let t1 = 10.0;
    let teacher = soft_label_table(&z, &y, t1).unwrap();
    let mut g = Graph::new();
    let zi = g.leaf(z);
    let l = scenario_distribution_loss(&mut g, &teacher, zi, &y, t1).unwrap();
    let h: f64 = (0..3).map(|c| teacher.entropy(c).unwrap()).sum::<f64>() / 3.0;
    assert!((g.scalar(l) - h).abs() < 1e-9);
}

#[test]
fn distribution_loss_averages_over_shared_classes_only() {
    let zs = random(6, 3, 6);
    let ys = [0, 0, 1, 1, 2, 2];
    let teacher = soft_label_table(&zs, &ys, 10.0).unwrap();
    let zi = random(4, 3, 7);
    let yi = [0, 1, 1, 0];
    let mut g = Graph::new();
    let id = g.leaf(zi.clone());
    let l = scenario_distribution_loss(&mut g, &teacher, id, &yi, 10.0).unwrap();
    let p = softmax_rows(&zi, 10.0);
    let mut oracle = 0.0;
    for (c, rows) in [(0, [0, 3]), (1, [1, 2])] {
        let q = teacher.rows[c].as_ref().unwrap();
        for j in 0..3 {
            let pm = (p[[rows[0], j]] + p[[rows[1], j]]) / 2.0;
            oracle -= q[j] * pm.ln();
        }
    }
    assert!((g.scalar(l) - oracle / 2.0).abs() < 1e-12);
}

#[test]
fn distribution_loss_decreases_along_mixing_path() {
    let q = vec![0.6, 0.3, 0.1];
    let p = [0.2, 0.2, 0.6];
    let teacher = TeacherTable { rows: vec![Some(q.clone()), None, None] };
    let at = |mix: f64| {
        // logits whose T-softmax is exactly the mixed distribution
        let t1 = 10.0;
        let z = Matrix::from_shape_fn((1, 3), |(_, j)| t1 * ((1.0 - mix) * p[j] + mix * q[j]).ln());
        let mut g = Graph::new();
        let id = g.leaf(z);
        let l = scenario_distribution_loss(&mut g, &teacher, id, &[0], t1).unwrap();
        g.scalar(l)
    };
    let (a, b, c) = (at(0.0), at(0.5), at(1.0));
    assert!(a > b && b > c, "{a} {b} {c}");
    assert!((c - entropy(&q)).abs() < 1e-9);
}

#[test]
fn distribution_loss_without_shared_classes_is_zero_constant() {
    let teacher = TeacherTable { rows: vec![Some(vec![0.5, 0.5]), None] };
    let mut g = Graph::new();
    let z = g.leaf(Matrix::zeros((2, 2)));
    let l = scenario_distribution_loss(&mut g, &teacher, z, &[1, 1], 1.0).unwrap();
    assert_eq!(g.scalar(l), 0.0);
    assert!(!g.requires_grad(l));
}

#[test]
fn distribution_loss_gradient_matches_fd() {
    let teacher = soft_label_table(&random(6, 3, 8), &[0, 1, 2, 0, 1, 2], 10.0).unwrap();
    let y = [2, 0, 1, 1, 0];
    let err = fd_error(&[random(5, 3, 9)], |g, ids| {
        scenario_distribution_loss(g, &teacher, ids[0], &y, 10.0).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn soft_loss_at_p_equals_q_is_mean_teacher_entropy() {
    let teacher = TeacherTable {
        rows: vec![Some(vec![0.7, 0.2, 0.1]), Some(vec![0.1, 0.8, 0.1]), None],
    };
    let y = [0, 1, 1, 2];
    let p = Matrix::from_shape_fn((4, 3), |(i, j)| match teacher.rows[y[i]].as_ref() {
        Some(q) => q[j],
        None => 1.0 / 3.0,
    });
    let mut g = Graph::new();
    let id = g.leaf(p);
    let l = implicit_soft_loss(&mut g, id, &y, &teacher).unwrap();
    let h0 = teacher.entropy(0).unwrap();
    let h1 = teacher.entropy(1).unwrap();
    assert!((g.scalar(l) - (h0 + 2.0 * h1) / 3.0).abs() < 1e-12);
}

#[test]
fn soft_loss_one_hot_teacher_and_confident_p_is_near_zero() {
    let teacher = TeacherTable { rows: vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0])] };
    let mut g = Graph::new();
    let id = g.leaf(array![[1.0 - 1e-10, 1e-10], [1e-10, 1.0 - 1e-10]]);
    let l = implicit_soft_loss(&mut g, id, &[0, 1], &teacher).unwrap();
    assert!(g.scalar(l) < 1e-9);
}

#[test]
fn soft_loss_all_rows_missing_is_zero() {
    let teacher = TeacherTable { rows: vec![None, None] };
    let mut g = Graph::new();
    let id = g.leaf(array![[0.5, 0.5]]);
    let l = implicit_soft_loss(&mut g, id, &[0], &teacher).unwrap();
    assert_eq!(g.scalar(l), 0.0);
}

#[test]
fn soft_loss_gradient_through_softmax_matches_fd() {
    let teacher = soft_label_table(&random(6, 3, 10), &[0, 1, 2, 0, 1, 2], 5.0).unwrap();
    let y = [2, 0, 1, 1];
    let err = fd_error(&[random(4, 3, 11)], |g, ids| {
        let p = g.softmax_rows(ids[0], 1.0).unwrap();
        implicit_soft_loss(g, p, &y, &teacher).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn teacher_receives_no_gradient_from_soft_loss() {
    let y_src = [0, 1, 2];
    let z_src = random(3, 3, 12);
    let z_tl = random(2, 3, 13);
    let run = |z_src: &Matrix| {
        let mut g = Graph::new();
        let src = g.leaf(z_src.clone());
        let tl = g.leaf(z_tl.clone());
        let teacher = soft_label_table(g.value(src), &y_src, 5.0).unwrap();
        let p = g.softmax_rows(tl, 1.0).unwrap();
        let l = implicit_soft_loss(&mut g, p, &[0, 2], &teacher).unwrap();
        g.backward(l).unwrap();
        (g.scalar(l), g.grad(src).cloned(), g.grad(tl).cloned())
    };
    let (v0, g_src, g_tl) = run(&z_src);
    assert!(g_src.is_none_or(|m| m.iter().all(|&v| v == 0.0)));
    assert!(g_tl.is_some_and(|m| m.iter().any(|&v| v != 0.0)));
    let mut moved = z_src.clone();
    moved[[0, 1]] += 0.5;
    assert_ne!(run(&moved).0, v0);
}

#[test]
fn divergence_examples() {
    let f = array![[0.0, 0.0], [2.0, 2.0]];
    assert_eq!(source_target_divergence(&f, &[0, 1], &f, &[0, 1], 2, false).unwrap(), 0.0);
    let a = array![[0.0, 0.0]];
    let b = array![[1.0, 0.0]];
    assert_eq!(source_target_divergence(&a, &[0], &b, &[0], 1, false).unwrap(), 1.0);
}

#[test]
fn divergence_is_order_invariant_and_skips_missing_classes() {
    let fs = array![[0.0, 1.0], [2.0, 1.0], [5.0, 5.0], [1.0, 1.0]];
    let fs_rev = array![[1.0, 1.0], [5.0, 5.0], [2.0, 1.0], [0.0, 1.0]];
    let ft = array![[1.0, 0.0], [9.0, 9.0]];
    let d1 = source_target_divergence(&fs, &[0, 0, 2, 0], &ft, &[0, 1], 3, false).unwrap();
    let d2 = source_target_divergence(&fs_rev, &[0, 2, 0, 0], &ft, &[0, 1], 3, false).unwrap();
    assert!((d1 - d2).abs() < 1e-12);
    // only class 0 is shared: centroid (1,1) vs (1,0)
    assert!((d1 - 1.0).abs() < 1e-12);
    let none = source_target_divergence(&fs, &[2, 2, 2, 2], &ft, &[0, 1], 3, false);
    assert!(matches!(none, Err(JstnError::Data(_))));
}

#[test]
fn literal_normalization_divides_by_domain_size() {
    let fs = array![[2.0], [4.0], [10.0]];
    let c = class_centroids(&fs, &[0, 0, 1], 2, true);
    assert_eq!(c[0].as_deref(), Some(&[2.0][..]));
    assert_eq!(c[1].as_deref(), Some(&[10.0 / 3.0][..]));
    let c = class_centroids(&fs, &[0, 0, 1], 2, false);
    assert_eq!(c[0].as_deref(), Some(&[3.0][..]));
}

#[test]
fn source_weight_examples() {
    assert_eq!(source_weight(0.0), 0.75);
    assert!((source_weight(3f64.ln()) - 1.0).abs() < 1e-15);
    assert!(source_weight(50.0) > 1.2499);
    assert!(source_weight(50.0) < 1.25);
    assert!(source_weight(1e300) < 1.25);
}

proptest! {
    #[test]
    fn source_weight_bounded_and_monotone(a in 0.0f64..60.0, b in 0.0f64..60.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (wl, wh) = (source_weight(lo), source_weight(hi));
        prop_assert!((0.75..1.25).contains(&wl));
        prop_assert!((0.75..1.25).contains(&wh));
        prop_assert!(wl <= wh);
    }

    #[test]
    fn weighted_implicit_loss_is_affine(
        hd in 0.0f64..5.0, sn in 0.0f64..5.0, si in 0.0f64..5.0,
        wn in 0.75f64..1.25, wi in 0.75f64..1.25, alpha in 0.0f64..=1.0,
        probe in 0.1f64..3.0,
    ) {
        let value = |hd: f64, sn: f64, si: f64| {
            let mut g = Graph::new();
            let (a, b, c) = (g.leaf(array![[hd]]), g.leaf(array![[sn]]), g.leaf(array![[si]]));
            let l = weighted_implicit_loss(&mut g, a, &[(b, wn), (c, wi)], alpha).unwrap();
            g.scalar(l)
        };
        let base = value(hd, sn, si);
        let expect = (1.0 - alpha) * hd + alpha * (wn * sn + wi * si) / 2.0;
        prop_assert!((base - expect).abs() < 1e-12);
        prop_assert!((value(hd + probe, sn, si) - base - (1.0 - alpha) * probe).abs() < 1e-12);
        prop_assert!((value(hd, sn + probe, si) - base - alpha * wn * probe / 2.0).abs() < 1e-12);
        prop_assert!((value(hd, sn, si + probe) - base - alpha * wi * probe / 2.0).abs() < 1e-12);
    }

    #[test]
    fn soft_losses_bounded_below_by_teacher_entropy(seed in 0u64..10_000) {
        let z_src = random(6, 4, seed);
        let y_src = [0, 1, 2, 3, 0, 1];
        let teacher = soft_label_table(&z_src, &y_src, 5.0).unwrap();
        let y_tl = [3, 1, 0];
        let mut g = Graph::new();
        let tl = g.leaf(random(3, 4, seed + 1));
        let p = g.softmax_rows(tl, 1.0).unwrap();
        let l = implicit_soft_loss(&mut g, p, &y_tl, &teacher).unwrap();
        let h = y_tl.iter().map(|&c| teacher.entropy(c).unwrap()).sum::<f64>() / 3.0;
        prop_assert!(g.scalar(l) >= h - 1e-9);

        let si = g.leaf(random(4, 4, seed + 2));
        let d = scenario_distribution_loss(&mut g, &teacher, si, &[0, 1, 2, 3], 10.0).unwrap();
        let h = (0..4).map(|c| teacher.entropy(c).unwrap()).sum::<f64>() / 4.0;
        prop_assert!(g.scalar(d) >= h - 1e-9);
    }

    #[test]
    fn alignment_losses_vanish_on_identical_point_sets(seed in 0u64..10_000) {
        let f = random(6, 3, seed);
        let y = [0, 1, 2, 0, 1, 2];
        let mut g = Graph::new();
        let (a, b) = (g.leaf(f.clone()), g.leaf(f));
        let esc = centroid_alignment_loss(&mut g, a, &y, b, &y, 3).unwrap();
        prop_assert!(g.scalar(esc).abs() < 1e-24);
        // one representative per class on each side (pairwise terms between
        // distinct reps of one class are nonzero by construction when R > 1)
        let pairs: Vec<_> = (0..3)
            .map(|c| (g.gather_rows(a, &[c]).unwrap(), g.gather_rows(b, &[c]).unwrap()))
            .collect();
        let esr = representative_alignment_loss(&mut g, &pairs).unwrap();
        prop_assert_eq!(g.scalar(esr), 0.0);
    }
}

#[test]
fn weighted_implicit_loss_limits() {
    let mut g = Graph::new();
    let (hd, sn, si) = (g.leaf(array![[2.0]]), g.leaf(array![[3.0]]), g.leaf(array![[5.0]]));
    let l = weighted_implicit_loss(&mut g, hd, &[(sn, 0.9), (si, 1.1)], 0.0).unwrap();
    assert_eq!(g.scalar(l), 2.0);
    let l = weighted_implicit_loss(&mut g, hd, &[(sn, 1.0), (si, 1.0)], 0.1).unwrap();
    assert!((g.scalar(l) - (0.9 * 2.0 + 0.1 * 4.0)).abs() < 1e-12);
    // single source: mean over present sources
    let l = weighted_implicit_loss(&mut g, hd, &[(sn, 1.0)], 0.5).unwrap();
    assert!((g.scalar(l) - 2.5).abs() < 1e-12);
    let err = weighted_implicit_loss(&mut g, hd, &[], 1.5).unwrap_err();
    assert!(matches!(err, JstnError::Parameter(_)));
}

#[test]
fn centroid_alignment_hand_example() {
    let mut g = Graph::new();
    let s = g.leaf(array![[0.0, 0.0]]);
    let t = g.leaf(array![[1.0, 0.0]]);
    let l = centroid_alignment_loss(&mut g, s, &[0], t, &[0], 1).unwrap();
    assert!((g.scalar(l) - 1.5).abs() < 1e-12);
}

#[test]
fn union_centroid_is_count_weighted_mean() {
    // μ_ST = (n_S μ_S + n_T μ_T)/(n_S+n_T); with μ_S=(0,0) from 3 points, μ_T=(4,0)
    // from 1 point, μ_ST=(1,0) → loss = 16 + 1 + 9 = 26
    let mut g = Graph::new();
    let s = g.leaf(array![[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]]);
    let t = g.leaf(array![[4.0, 0.0]]);
    let l = centroid_alignment_loss(&mut g, s, &[0, 0, 0], t, &[0], 1).unwrap();
    assert!((g.scalar(l) - 26.0).abs() < 1e-12);
}

#[test]
fn centroid_alignment_skips_one_sided_classes() {
    let mut g = Graph::new();
    let s = g.leaf(array![[0.0], [7.0]]);
    let t = g.leaf(array![[1.0], [100.0]]);
    let l = centroid_alignment_loss(&mut g, s, &[0, 1], t, &[0, 2], 3).unwrap();
    assert!((g.scalar(l) - 1.5).abs() < 1e-12);
}

#[test]
fn centroid_alignment_gradient_matches_fd() {
    let ys = [0, 1, 1, 2, 0];
    let yt = [1, 0, 0, 2];
    let err = fd_error(&[random(5, 3, 14), random(4, 3, 15)], |g, ids| {
        centroid_alignment_loss(g, ids[0], &ys, ids[1], &yt, 3).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn representative_alignment_hand_example() {
    let mut g = Graph::new();
    let s = g.leaf(array![[0.0, 0.0]]);
    let t = g.leaf(array![[3.0, 4.0]]);
    let l = representative_alignment_loss(&mut g, &[(s, t)]).unwrap();
    assert!((g.scalar(l) - 25.0).abs() < 1e-12);
}

#[test]
fn representative_alignment_invariant_to_duplicated_reps() {
    let mut g = Graph::new();
    let s = g.leaf(array![[0.0, 1.0], [2.0, -1.0]]);
    let t = g.leaf(array![[3.0, 4.0]]);
    let l1 = representative_alignment_loss(&mut g, &[(s, t)]).unwrap();
    let s2 = g.gather_rows(s, &[0, 1, 0, 1]).unwrap();
    let t2 = g.gather_rows(t, &[0, 0]).unwrap();
    let l2 = representative_alignment_loss(&mut g, &[(s2, t2)]).unwrap();
    assert!((g.scalar(l1) - g.scalar(l2)).abs() < 1e-12);
    let none = representative_alignment_loss(&mut g, &[]).unwrap();
    assert_eq!(g.scalar(none), 0.0);
}

#[test]
fn representative_alignment_gradient_matches_fd() {
    let err = fd_error(&[random(3, 2, 16), random(2, 2, 17), random(1, 2, 18)], |g, ids| {
        representative_alignment_loss(g, &[(ids[0], ids[1]), (ids[2], ids[1])]).unwrap()
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn breakdown_objective_formula() {
    let b = LossBreakdown {
        l_sup: 1.0,
        l_wis: 2.0,
        l_esc: 3.0,
        l_esr: 4.0,
        l_ssd: 5.0,
        l_ssc: 6.0,
        ..Default::default()
    };
    let w = LossWeights { beta: 0.5, lambda: 0.25, gamma: 0.1, eta: 2.0 };
    assert!((b.objective(&w) - (3.0 + 1.5 + 1.0 + 0.5 + 12.0)).abs() < 1e-12);
}
