//! Synthetic heterogeneous domains sharing one latent class geometry.
//!
//! Class `y` has a latent center `μ_y ∈ R^L`. A domain draws
//! `z = μ_y + s_{d,y} + σ·ε`, maps it with its own `A_d` (orthonormal
//! columns, `d_d × L`), then adds isotropic observation noise and
//! large-variance nuisance directions orthogonal to the signal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DomainDataset, Role};
use crate::autodiff::Matrix;
use crate::error::{JstnError, Result};

/// Per-domain view parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainView {
    pub dim: usize,
    pub per_class: usize,
    /// Norm of the class-conditional latent shift, relative to `class_std`.
    pub shift: f64,
    /// Standard deviation of isotropic observation noise.
    pub noise: f64,
    /// Number of observed directions carrying pure nuisance variance.
    pub nuisance_dims: usize,
    /// Standard deviation along the nuisance directions.
    pub nuisance_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub k: usize,
    pub latent_dim: usize,
    /// Minimum pairwise latent center distance, in units of `class_std`.
    pub separation: f64,
    pub class_std: f64,
    /// Random orthonormal embedding per domain; otherwise the latent axes
    /// map onto the first observed coordinates.
    pub rotate: bool,
    pub sn: DomainView,
    pub si: DomainView,
    pub target: DomainView,
    pub seed: u64,
}

pub const PRESETS: [&str; 3] = ["separable", "hard", "toy"];

fn view(dim: usize, per_class: usize) -> DomainView {
    DomainView { dim, per_class, shift: 0.0, noise: 0.0, nuisance_dims: 0, nuisance_std: 0.0 }
}

impl SynthSpec {
    /// Named parameter sets. `separable` and `hard` use dims 12/8/10, five
    /// classes and 200 rows per class per domain; `toy` is a 300-row triple.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let base = SynthSpec {
            k: 5,
            latent_dim: 4,
            separation: 4.0,
            class_std: 1.0,
            rotate: true,
            sn: view(12, 200),
            si: view(8, 200),
            target: view(10, 200),
            seed,
        };
        let spec = match name {
            "separable" => SynthSpec {
                sn: DomainView { noise: 0.1, ..base.sn },
                si: DomainView { noise: 0.1, ..base.si },
                target: DomainView { noise: 0.1, nuisance_dims: 6, nuisance_std: 10.0, ..base.target },
                ..base
            },
            "hard" => SynthSpec {
                sn: DomainView { shift: 0.5, noise: 0.3, ..base.sn },
                si: DomainView { shift: 0.5, noise: 0.3, ..base.si },
                target: DomainView { shift: 0.5, noise: 0.3, nuisance_dims: 6, nuisance_std: 10.0, ..base.target },
                ..base
            },
            "toy" => SynthSpec {
                latent_dim: 3,
                sn: DomainView { noise: 0.1, ..view(6, 24) },
                si: DomainView { noise: 0.1, ..view(4, 16) },
                target: DomainView { noise: 0.1, ..view(5, 20) },
                ..base
            },
            other => {
                return Err(JstnError::Parameter(format!(
                    "unknown preset `{other}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(JstnError::Parameter("synthetic data needs K >= 2".into()));
        }
        if self.latent_dim == 0 || !(self.class_std >= 0.0) || !(self.separation >= 0.0) {
            return Err(JstnError::Parameter("latent_dim, class_std and separation must be positive".into()));
        }
        for (tag, v) in [("sn", &self.sn), ("si", &self.si), ("target", &self.target)] {
            if v.per_class == 0 {
                return Err(JstnError::Parameter(format!("{tag}: per_class must be positive")));
            }
            if v.dim < self.latent_dim + v.nuisance_dims {
                return Err(JstnError::Parameter(format!(
                    "{tag}: dim {} cannot hold {} latent + {} nuisance directions",
                    v.dim, self.latent_dim, v.nuisance_dims
                )));
            }
        }
        Ok(())
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `d × m` matrix with orthonormal columns (Gram-Schmidt on Gaussian draws).
pub fn orthonormal_columns<R: Rng + ?Sized>(d: usize, m: usize, rng: &mut R) -> Matrix {
    assert!(m <= d);
    let mut q = Matrix::zeros((d, m));
    let mut j = 0;
    while j < m {
        let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        for p in 0..j {
            let dot: f64 = (0..d).map(|i| v[i] * q[[i, p]]).sum();
            (0..d).for_each(|i| v[i] -= dot * q[[i, p]]);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        (0..d).for_each(|i| q[[i, j]] = v[i] / norm);
        j += 1;
    }
    q
}

/// Latent class centers scaled so the closest pair is `separation·class_std` apart.
fn latent_centers<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Matrix {
    let mut c = Matrix::from_shape_fn((spec.k, spec.latent_dim), |_| normal(rng));
    let mut min = f64::INFINITY;
    for a in 0..spec.k {
        for b in a + 1..spec.k {
            let d = (&c.row(a) - &c.row(b)).mapv(|v| v * v).sum().sqrt();
            min = min.min(d);
        }
    }
    c *= spec.separation * spec.class_std / min;
    c
}

fn draw_domain<R: Rng + ?Sized>(
    name: &str,
    role: Role,
    spec: &SynthSpec,
    v: &DomainView,
    centers: &Matrix,
    rng: &mut R,
) -> DomainDataset {
    let l = spec.latent_dim;
    let basis = if spec.rotate {
        orthonormal_columns(v.dim, l + v.nuisance_dims, rng)
    } else {
        Matrix::from_shape_fn((v.dim, l + v.nuisance_dims), |(i, j)| if i == j { 1.0 } else { 0.0 })
    };
    let signal = basis.slice(ndarray::s![.., ..l]).to_owned();
    let nuisance = basis.slice(ndarray::s![.., l..]).to_owned();
    let shifts = Matrix::from_shape_fn((spec.k, l), |_| normal(rng));
    let n = spec.k * v.per_class;
    let mut x = Matrix::zeros((n, v.dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % spec.k;
        labels.push(y);
        let sh = shifts.row(y);
        let sh_norm = sh.mapv(|s| s * s).sum().sqrt().max(1e-12);
        let z: Vec<f64> = (0..l)
            .map(|j| {
                centers[[y, j]] + v.shift * spec.class_std * sh[j] / sh_norm + spec.class_std * normal(rng)
            })
            .collect();
        let u: Vec<f64> = (0..v.nuisance_dims).map(|_| v.nuisance_std * normal(rng)).collect();
        for r in 0..v.dim {
            let mut val: f64 = (0..l).map(|j| signal[[r, j]] * z[j]).sum();
            val += (0..v.nuisance_dims).map(|j| nuisance[[r, j]] * u[j]).sum::<f64>();
            val += v.noise * normal(rng);
            x[[i, r]] = val;
        }
    }
    DomainDataset::new(name, role, x, labels)
}

/// Generates the network source, IoT source and the whole target domain.
pub fn synth_domains(spec: &SynthSpec) -> Result<(DomainDataset, DomainDataset, DomainDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = latent_centers(spec, &mut rng);
    let sn = draw_domain("sn", Role::Sn, spec, &spec.sn, &centers, &mut rng);
    let si = draw_domain("si", Role::Si, spec, &spec.si, &centers, &mut rng);
    let t = draw_domain("target", Role::Target, spec, &spec.target, &centers, &mut rng);
    Ok((sn, si, t))
}

/// Class names used when writing synthetic CSVs.
pub fn default_class_names(k: usize) -> Vec<String> {
    const NAMES: [&str; 5] = ["benign", "dos", "ddos", "recon", "password"];
    (0..k)
        .map(|i| NAMES.get(i).map_or_else(|| format!("class{}", i + 1), |s| s.to_string()))
        .collect()
}

/// Writes `sn.csv`, `si.csv`, `target.csv` and `manifest.toml` into `dir`.
/// Returns the manifest path.
pub fn write_bundle(
    dir: &std::path::Path,
    domains: (&DomainDataset, &DomainDataset, &DomainDataset),
    class_names: &[String],
) -> Result<std::path::PathBuf> {
    use super::{save_csv, CsvSchema, DomainEntry, Manifest};
    std::fs::create_dir_all(dir).map_err(|e| JstnError::io(dir, e))?;
    let (sn, si, t) = domains;
    let mut entries = Vec::new();
    for (ds, file) in [(sn, "sn.csv"), (si, "si.csv"), (t, "target.csv")] {
        save_csv(ds, &dir.join(file), class_names)?;
        entries.push(DomainEntry {
            name: ds.name.clone(),
            role: ds.role,
            path: file.into(),
            schema: CsvSchema { label_column: "label".into(), features: Vec::new(), delimiter: ',' },
        });
    }
    let manifest = Manifest {
        classes: class_names.iter().enumerate().map(|(i, n)| (n.clone(), i + 1)).collect(),
        domains: entries,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml()).map_err(|e| JstnError::io(&path, e))?;
    Ok(path)
}

/// Generates a preset's domains and assembles them for training.
pub fn synth_training_data(spec: &SynthSpec, split: &super::SplitSpec) -> Result<super::TrainingData> {
    let (sn, si, t) = synth_domains(spec)?;
    super::TrainingData::assemble(sn, si, super::TargetPart::Full(t), spec.k, default_class_names(spec.k), split)
}
