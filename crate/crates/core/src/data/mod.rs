//! Domain datasets: CSV ingestion through a manifest, per-domain z-scoring,
//! the labelled/unlabelled target split and stratified subsampling.

pub mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Matrix;
use crate::error::{JstnError, Result};
use crate::losses::class_rows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Labelled network-intrusion source.
    Sn,
    /// Labelled IoT source.
    Si,
    /// Whole target domain, split into `Tl`/`Tu` at load time.
    Target,
    Tl,
    Tu,
}

/// Per-feature z-score parameters. Zero-variance features keep `std = 0`
/// and are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
        let std = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt())
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            if s > 0.0 {
                col.mapv_inplace(|v| (v - m) / s);
            } else {
                col.mapv_inplace(|v| v - m);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub role: Role,
    pub x: Matrix,
    /// Training labels, 0-based. `None` for unlabelled rows.
    pub labels: Option<Vec<usize>>,
    /// Ground truth kept out of training, for evaluation only.
    pub held_out: Option<Vec<usize>>,
    pub stats: Option<NormStats>,
}

impl DomainDataset {
    pub fn new(name: impl Into<String>, role: Role, x: Matrix, labels: Vec<usize>) -> Self {
        Self { name: name.into(), role, x, labels: Some(labels), held_out: None, stats: None }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Training labels if present, else the held-out truth.
    pub fn truth(&self) -> Option<&[usize]> {
        self.labels.as_deref().or(self.held_out.as_deref())
    }

    pub fn labels_or_err(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| JstnError::Data(format!("domain `{}` has no labels", self.name)))
    }

    /// Fits z-score stats on this dataset and applies them.
    pub fn normalized(mut self) -> Self {
        let stats = NormStats::fit(&self.x);
        self.x = stats.apply(&self.x);
        self.stats = Some(stats);
        self
    }

    fn select(&self, rows: &[usize], role: Role, hide_labels: bool) -> Self {
        let x = self.x.select(ndarray::Axis(0), rows);
        let y = self.truth().map(|t| rows.iter().map(|&i| t[i]).collect::<Vec<_>>());
        let (labels, held_out) = if hide_labels { (None, y) } else { (y, None) };
        Self {
            name: format!("{}:{}", self.name, role_tag(role)),
            role,
            x,
            labels,
            held_out,
            stats: self.stats.clone(),
        }
    }
}

fn role_tag(role: Role) -> &'static str {
    match role {
        Role::Sn => "sn",
        Role::Si => "si",
        Role::Target => "target",
        Role::Tl => "tl",
        Role::Tu => "tu",
    }
}

/// Labelled:unlabelled ratio of the target split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labeled: usize,
    pub unlabeled: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    pub fn labeled_total(&self, n: usize) -> usize {
        let a = self.labeled as f64;
        let b = self.unlabeled as f64;
        (n as f64 * a / (a + b)).round() as usize
    }
}

/// Integer quotas proportional to `counts` summing to `total`
/// (largest remainder, ties to the lower index).
pub fn largest_remainder(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let ideal: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n as f64).collect();
    let mut q: Vec<usize> = ideal.iter().map(|v| v.floor() as usize).collect();
    let mut rest = total - q.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        if q[i] < counts[i] {
            q[i] += 1;
            rest -= 1;
        }
    }
    q
}

/// Row indices picked per class by quota, shuffled under `seed`, returned
/// in ascending order.
fn stratified_pick(labels: &[usize], k: usize, total: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = class_rows(labels, k);
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = largest_remainder(&counts, total);
    let mut picked = Vec::with_capacity(total);
    for (mut rows, q) in by_class.into_iter().zip(quota) {
        rows.shuffle(&mut rng);
        picked.extend_from_slice(&rows[..q]);
    }
    picked.sort_unstable();
    picked
}

fn complement(n: usize, picked: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    picked.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}

/// Splits a labelled target domain into labelled and unlabelled parts. The
/// unlabelled part keeps its truth in `held_out` only.
pub fn split_target(full: &DomainDataset, k: usize, spec: &SplitSpec) -> Result<(DomainDataset, DomainDataset)> {
    let labels = full.truth().ok_or_else(|| {
        JstnError::Data(format!("target `{}` needs labels to be split", full.name))
    })?;
    if spec.labeled == 0 || spec.unlabeled == 0 {
        return Err(JstnError::Parameter("split ratio terms must be positive".into()));
    }
    let n = full.len();
    let total = spec.labeled_total(n);
    let picked = if spec.stratified {
        stratified_pick(labels, k, total, spec.seed)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let mut p = all[..total].to_vec();
        p.sort_unstable();
        p
    };
    let rest = complement(n, &picked);
    let tl = full.select(&picked, Role::Tl, false);
    let tu = full.select(&rest, Role::Tu, true);
    let present = class_rows(labels, k);
    let got = class_rows(tl.labels.as_deref().unwrap_or(&[]), k);
    for c in 0..k {
        if !present[c].is_empty() && got[c].is_empty() {
            warn!("class {} has no labelled target row at ratio {}:{}", c + 1, spec.labeled, spec.unlabeled);
        }
    }
    Ok((tl, tu))
}

/// Seeded class-proportional subsample of `n` rows.
pub fn stratified_subsample(ds: &DomainDataset, k: usize, n: usize, seed: u64) -> Result<DomainDataset> {
    let labels = ds.truth().ok_or_else(|| JstnError::Data("subsampling needs labels".into()))?;
    if n > ds.len() {
        return Err(JstnError::Parameter(format!("cannot draw {n} rows from {}", ds.len())));
    }
    let rows = stratified_pick(labels, k, n, seed);
    let mut out = ds.select(&rows, ds.role, ds.labels.is_none());
    out.name = ds.name.clone();
    Ok(out)
}

/// Class-name table shared by all domains; values are 1-based class ids.
pub type ClassMap = BTreeMap<String, usize>;

fn validate_classes(classes: &ClassMap) -> Result<Vec<String>> {
    let k = classes.len();
    let mut names = vec![String::new(); k];
    for (name, &id) in classes {
        if id == 0 || id > k || !names[id - 1].is_empty() {
            return Err(JstnError::Data(format!(
                "class table must map {k} names onto 1..={k} exactly once (bad entry `{name}` = {id})"
            )));
        }
        names[id - 1] = name.clone();
    }
    if k < 2 {
        return Err(JstnError::Data("class table needs at least two classes".into()));
    }
    Ok(names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    /// Feature columns in order; empty means every column except the label.
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

/// Reads a headered CSV into features and 0-based labels.
pub fn load_csv(path: &Path, schema: &CsvSchema, classes: &ClassMap) -> Result<(Matrix, Vec<usize>)> {
    let delim = u8::try_from(schema.delimiter)
        .map_err(|_| JstnError::Data(format!("delimiter {:?} is not a single byte", schema.delimiter)))?;
    let text = fs::read_to_string(path).map_err(|e| JstnError::io(path, e))?;
    if text.trim().is_empty() {
        return Err(JstnError::Data(format!("{}: empty file", path.display())));
    }
    let mut rdr = csv::ReaderBuilder::new().delimiter(delim).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(JstnError::Data(format!("{}: duplicate column `{h}`", path.display())));
        }
    }
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            JstnError::Data(format!("{}: missing column `{name}`", path.display()))
        })
    };
    let label_at = col(&schema.label_column)?;
    let feat_at: Vec<usize> = if schema.features.is_empty() {
        (0..header.len()).filter(|&i| i != label_at).collect()
    } else {
        schema.features.iter().map(|f| col(f)).collect::<Result<_>>()?
    };
    if feat_at.is_empty() {
        return Err(JstnError::Data(format!("{}: no feature columns", path.display())));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 2;
        let raw = rec.get(label_at).unwrap_or("").trim();
        let id = classes.get(raw).ok_or_else(|| {
            JstnError::Data(format!("{}:{line}: label `{raw}` is not in the class table", path.display()))
        })?;
        labels.push(id - 1);
        for &j in &feat_at {
            let cell = rec.get(j).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                JstnError::Data(format!(
                    "{}:{line}: column `{}` value `{cell}` is not numeric",
                    path.display(),
                    header[j]
                ))
            })?;
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(JstnError::Data(format!("{}: header but no rows", path.display())));
    }
    let x = Matrix::from_shape_vec((labels.len(), feat_at.len()), values)
        .expect("row-major fill matches shape");
    Ok((x, labels))
}

/// Writes `ds` as CSV with columns `f0..`, then `label` holding class names.
/// Values use shortest round-trip formatting, so loading is bit-exact.
pub fn save_csv(ds: &DomainDataset, path: &Path, class_names: &[String]) -> Result<()> {
    let truth = ds
        .truth()
        .ok_or_else(|| JstnError::Data(format!("domain `{}` has no labels to write", ds.name)))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, &y) in ds.x.rows().into_iter().zip(truth) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(class_names[y].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| JstnError::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainEntry {
    pub name: String,
    pub role: Role,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub classes: ClassMap,
    #[serde(rename = "domain")]
    pub domains: Vec<DomainEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m: Manifest = toml::from_str(text).map_err(|e| JstnError::Data(format!("manifest: {e}")))?;
        m.base_dir = base_dir.to_path_buf();
        validate_classes(&m.classes)?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| JstnError::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn class_names(&self) -> Vec<String> {
        validate_classes(&self.classes).expect("validated at load")
    }

    fn read(&self, e: &DomainEntry) -> Result<DomainDataset> {
        let path = if e.path.is_absolute() { e.path.clone() } else { self.base_dir.join(&e.path) };
        let (x, y) = load_csv(&path, &e.schema, &self.classes)?;
        Ok(DomainDataset::new(e.name.clone(), e.role, x, y))
    }

    fn one(&self, role: Role) -> Result<Option<&DomainEntry>> {
        let mut it = self.domains.iter().filter(|d| d.role == role);
        let first = it.next();
        if it.next().is_some() {
            return Err(JstnError::Data(format!("manifest lists more than one `{}` domain", role_tag(role))));
        }
        Ok(first)
    }

    /// Loads, normalizes and splits every domain.
    pub fn load_training_data(&self, split: &SplitSpec) -> Result<TrainingData> {
        let k = self.classes.len();
        let need = |role| {
            self.one(role)?.ok_or_else(|| {
                JstnError::Data(format!("manifest has no `{}` domain", role_tag(role)))
            })
        };
        let sn = self.read(need(Role::Sn)?)?;
        let si = self.read(need(Role::Si)?)?;
        let target = match (self.one(Role::Target)?, self.one(Role::Tl)?, self.one(Role::Tu)?) {
            (Some(t), None, None) => TargetPart::Full(self.read(t)?),
            (None, Some(l), Some(u)) => TargetPart::Split(self.read(l)?, self.read(u)?),
            _ => {
                return Err(JstnError::Data(
                    "manifest needs either one `target` domain or one `tl` plus one `tu` domain".into(),
                ))
            }
        };
        TrainingData::assemble(sn, si, target, k, self.class_names(), split)
    }
}

pub enum TargetPart {
    Full(DomainDataset),
    Split(DomainDataset, DomainDataset),
}

/// Normalized, split datasets ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub sn: DomainDataset,
    pub si: DomainDataset,
    pub tl: DomainDataset,
    pub tu: DomainDataset,
    pub k: usize,
    pub class_names: Vec<String>,
}

impl TrainingData {
    /// Z-scores each domain on its own data (the target on all of its rows,
    /// before splitting) and splits the target when given whole.
    pub fn assemble(
        sn: DomainDataset,
        si: DomainDataset,
        target: TargetPart,
        k: usize,
        class_names: Vec<String>,
        split: &SplitSpec,
    ) -> Result<Self> {
        let (tl, tu) = match target {
            TargetPart::Full(t) => split_target(&t.normalized(), k, split)?,
            TargetPart::Split(mut l, mut u) => {
                if l.dim() != u.dim() {
                    return Err(JstnError::Data(format!(
                        "tl has {} features but tu has {}",
                        l.dim(),
                        u.dim()
                    )));
                }
                let all = ndarray::concatenate(ndarray::Axis(0), &[l.x.view(), u.x.view()])
                    .expect("widths checked");
                let stats = NormStats::fit(&all);
                l.x = stats.apply(&l.x);
                u.x = stats.apply(&u.x);
                l.stats = Some(stats.clone());
                u.stats = Some(stats);
                u.held_out = u.labels.take();
                (l, u)
            }
        };
        let data = Self { sn: sn.normalized(), si: si.normalized(), tl, tu, k, class_names };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        for d in [&self.sn, &self.si, &self.tl] {
            let y = d.labels_or_err()?;
            if d.is_empty() {
                return Err(JstnError::Data(format!("domain `{}` is empty", d.name)));
            }
            if let Some(&bad) = y.iter().find(|&&v| v >= self.k) {
                return Err(JstnError::Data(format!("domain `{}` has label {} > K={}", d.name, bad + 1, self.k)));
            }
        }
        if self.tu.labels.is_some() {
            return Err(JstnError::Data("unlabelled target rows must not carry training labels".into()));
        }
        if self.tu.is_empty() {
            return Err(JstnError::Data("unlabelled target set is empty".into()));
        }
        if self.si.len() >= self.sn.len() {
            log::info!(
                "IoT source ({} rows) is not smaller than the network source ({} rows)",
                self.si.len(),
                self.sn.len()
            );
        }
        Ok(())
    }
}
