//! k-means++ seeding and Lloyd refinement, used to pick per-class
//! representatives on each side.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{JstnError, Result};
use crate::losses::class_rows;

pub const MAX_ITER: usize = 50;
pub const TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Source,
    Target,
}

/// Representatives of one class on one side. Row `j` of `centers` is the
/// mean of the rows listed in `members[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSet {
    pub class: usize,
    pub side: Side,
    pub centers: Matrix,
    /// Member row indices into the side's feature matrix, one list per rep.
    pub members: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydResult {
    pub centers: Matrix,
    pub assignment: Vec<usize>,
    /// Iterations in which some center moved by at least `tol`.
    pub iterations: usize,
    /// Clustering cost after every assignment step.
    pub cost_history: Vec<f64>,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_rows(points: &Matrix) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for i in 0..points.nrows() {
        if !out.iter().any(|&j| points.row(j) == points.row(i)) {
            out.push(i);
        }
    }
    out
}

fn rows_of(points: &Matrix, idx: &[usize]) -> Matrix {
    points.select(ndarray::Axis(0), idx)
}

/// D² seeding. Returns the chosen rows as centers; when there are fewer
/// than `r` distinct points, returns the distinct points.
pub fn kmeanspp_seed<R: Rng + ?Sized>(points: &Matrix, r: usize, rng: &mut R) -> Result<Matrix> {
    let n = points.nrows();
    if n == 0 {
        return Err(JstnError::Data("k-means++ seeding on an empty point set".into()));
    }
    if r == 0 {
        return Err(JstnError::Parameter("number of representatives must be positive".into()));
    }
    let distinct = distinct_rows(points);
    if distinct.len() <= r {
        return Ok(rows_of(points, &distinct));
    }
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < r {
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        // guard against rounding landing on a zero-weight tail
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    Ok(rows_of(points, &chosen))
}

fn assign(points: &Matrix, centers: &Matrix) -> (Vec<usize>, Vec<f64>) {
    (0..points.nrows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for j in 0..centers.nrows() {
                let d = sq_dist(points.row(i), centers.row(j));
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd iterations from `centers` until every center moves less than `tol`
/// or `max_iter` updates have run. An empty cluster is reseeded at the
/// point farthest from its current center.
pub fn lloyd(points: &Matrix, centers: Matrix, max_iter: usize, tol: f64) -> LloydResult {
    let (r, d) = centers.dim();
    let mut centers = centers;
    let mut iterations = 0;
    let mut cost_history = Vec::new();
    let (mut assignment, mut dist) = assign(points, &centers);
    cost_history.push(dist.iter().sum());
    for _ in 0..max_iter {
        let mut counts = vec![0usize; r];
        let mut sums = Matrix::zeros((r, d));
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1;
            let mut row = sums.row_mut(a);
            row += &points.row(i);
        }
        for j in 0..r {
            if counts[j] == 0 {
                let far = (0..points.nrows())
                    .filter(|&i| counts[assignment[i]] > 1)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
                if let Some(i) = far {
                    counts[assignment[i]] -= 1;
                    let mut from = sums.row_mut(assignment[i]);
                    from -= &points.row(i);
                    sums.row_mut(j).assign(&points.row(i));
                    counts[j] = 1;
                    assignment[i] = j;
                    dist[i] = 0.0;
                }
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..r {
            if counts[j] == 0 {
                continue;
            }
            let new = sums.row(j).mapv(|v| v / counts[j] as f64);
            shift = shift.max(sq_dist(new.view(), centers.row(j)).sqrt());
            centers.row_mut(j).assign(&new);
        }
        (assignment, dist) = assign(points, &centers);
        cost_history.push(dist.iter().sum());
        if shift < tol {
            break;
        }
        iterations += 1;
    }
    LloydResult { centers, assignment, iterations, cost_history }
}

/// Clustering cost of `points` against their nearest center.
pub fn cost(points: &Matrix, centers: &Matrix) -> f64 {
    assign(points, centers).1.iter().sum()
}

/// Up to `r` representatives per class present in `labels`. Representatives
/// are means of their final members, empty clusters dropped.
pub fn select_representatives<R: Rng + ?Sized>(
    features: &Matrix,
    labels: &[usize],
    k: usize,
    r: usize,
    side: Side,
    rng: &mut R,
) -> Result<Vec<Option<RepSet>>> {
    class_rows(labels, k)
        .into_iter()
        .enumerate()
        .map(|(class, idx)| {
            if idx.is_empty() {
                return Ok(None);
            }
            let pts = rows_of(features, &idx);
            let seeds = kmeanspp_seed(&pts, r, rng)?;
            let fit = lloyd(&pts, seeds, MAX_ITER, TOL);
            let mut members = vec![Vec::new(); fit.centers.nrows()];
            for (local, &a) in fit.assignment.iter().enumerate() {
                members[a].push(idx[local]);
            }
            members.retain(|m| !m.is_empty());
            let mut centers = Matrix::zeros((members.len(), features.ncols()));
            for (j, m) in members.iter().enumerate() {
                for &i in m {
                    let mut row = centers.row_mut(j);
                    row += &features.row(i);
                }
                centers.row_mut(j).mapv_inplace(|v| v / m.len() as f64);
            }
            Ok(Some(RepSet { class, side, centers, members }))
        })
        .collect()
}
