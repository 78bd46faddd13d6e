//! Per-domain encoders into a shared subspace, the shared classifier and the
//! domain discriminator, plus the checkpoint format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Matrix, NodeId, Param};
use crate::error::{JstnError, Result};

/// Which encoder a batch is routed through. Both labelled and unlabelled
/// target rows use [`Branch::Target`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    SourceNetwork,
    SourceIot,
    Target,
}

impl Branch {
    pub fn tag(self) -> &'static str {
        match self {
            Branch::SourceNetwork => "SN",
            Branch::SourceIot => "SI",
            Branch::Target => "T",
        }
    }
}

/// Component groups, used for ablation bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    EncoderSn,
    EncoderSi,
    EncoderT,
    Classifier,
    Discriminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub d_sn: usize,
    pub d_si: usize,
    pub d_t: usize,
    pub hidden: usize,
    pub d_c: usize,
    pub k: usize,
    pub slope: f64,
}

impl Architecture {
    pub fn input_dim(&self, branch: Branch) -> usize {
        match branch {
            Branch::SourceNetwork => self.d_sn,
            Branch::SourceIot => self.d_si,
            Branch::Target => self.d_t,
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = [
            ("d_sn", self.d_sn),
            ("d_si", self.d_si),
            ("d_t", self.d_t),
            ("hidden", self.hidden),
            ("d_c", self.d_c),
            ("k", self.k),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(JstnError::Parameter(format!("{name} must be positive")));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(JstnError::Parameter(format!(
                "LeakyReLU slope must lie in (0,1), got {}",
                self.slope
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// `U(-gain/√fan_in, gain/√fan_in)` weights, zero biases.
    ScaledUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub scheme: InitScheme,
    pub gain: f64,
    pub seed: u64,
}

impl InitSpec {
    pub fn seeded(seed: u64) -> Self {
        InitSpec {
            scheme: InitScheme::ScaledUniform,
            gain: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Param,
    pub bias: Param,
}

impl Affine {
    fn init(fan_in: usize, fan_out: usize, spec: &InitSpec, rng: &mut ChaCha8Rng) -> Self {
        let InitScheme::ScaledUniform = spec.scheme;
        let bound = spec.gain / (fan_in as f64).sqrt();
        let w = Matrix::from_shape_fn((fan_in, fan_out), |_| {
            if bound > 0.0 {
                rng.random_range(-bound..=bound)
            } else {
                0.0
            }
        });
        Affine {
            weight: Param::new(w),
            bias: Param::new(Matrix::zeros((1, fan_out))),
        }
    }
}

/// Two affine layers with a LeakyReLU between them; the second layer is
/// linear and lands in the shared subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub hidden: Affine,
    pub output: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JstnModel {
    pub arch: Architecture,
    pub enc_sn: Encoder,
    pub enc_si: Encoder,
    pub enc_t: Encoder,
    pub classifier: Affine,
    pub discriminator: Affine,
}

/// Graph handles for every parameter of a model, in [`JstnModel::params`] order.
#[derive(Debug, Clone)]
pub struct BoundModel {
    ids: Vec<NodeId>,
}

impl BoundModel {
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    fn affine(&self, first: usize) -> (NodeId, NodeId) {
        (self.ids[first], self.ids[first + 1])
    }
}

const PARAM_NAMES: [&str; 16] = [
    "enc_sn.hidden.weight",
    "enc_sn.hidden.bias",
    "enc_sn.output.weight",
    "enc_sn.output.bias",
    "enc_si.hidden.weight",
    "enc_si.hidden.bias",
    "enc_si.output.weight",
    "enc_si.output.bias",
    "enc_t.hidden.weight",
    "enc_t.hidden.bias",
    "enc_t.output.weight",
    "enc_t.output.bias",
    "classifier.weight",
    "classifier.bias",
    "discriminator.weight",
    "discriminator.bias",
];

fn encoder_offset(branch: Branch) -> usize {
    match branch {
        Branch::SourceNetwork => 0,
        Branch::SourceIot => 4,
        Branch::Target => 8,
    }
}

impl JstnModel {
    pub fn init(arch: Architecture, spec: InitSpec) -> Result<Self> {
        arch.validate()?;
        if !(spec.gain >= 0.0 && spec.gain.is_finite()) {
            return Err(JstnError::Parameter(format!("init gain {}", spec.gain)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut encoder = |d_in: usize| Encoder {
            hidden: Affine::init(d_in, arch.hidden, &spec, &mut rng),
            output: Affine::init(arch.hidden, arch.d_c, &spec, &mut rng),
        };
        let enc_sn = encoder(arch.d_sn);
        let enc_si = encoder(arch.d_si);
        let enc_t = encoder(arch.d_t);
        let classifier = Affine::init(arch.d_c, arch.k, &spec, &mut rng);
        let discriminator = Affine::init(arch.d_c, 1, &spec, &mut rng);
        Ok(JstnModel {
            arch,
            enc_sn,
            enc_si,
            enc_t,
            classifier,
            discriminator,
        })
    }

    pub fn param_names() -> &'static [&'static str] {
        &PARAM_NAMES
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::with_capacity(16);
        for e in [&self.enc_sn, &self.enc_si, &self.enc_t] {
            out.extend([
                &e.hidden.weight,
                &e.hidden.bias,
                &e.output.weight,
                &e.output.bias,
            ]);
        }
        for a in [&self.classifier, &self.discriminator] {
            out.extend([&a.weight, &a.bias]);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::with_capacity(16);
        for e in [&mut self.enc_sn, &mut self.enc_si, &mut self.enc_t] {
            out.push(&mut e.hidden.weight);
            out.push(&mut e.hidden.bias);
            out.push(&mut e.output.weight);
            out.push(&mut e.output.bias);
        }
        for a in [&mut self.classifier, &mut self.discriminator] {
            out.push(&mut a.weight);
            out.push(&mut a.bias);
        }
        out
    }

    /// Indices into [`JstnModel::params`] owned by `component`.
    pub fn component_indices(component: Component) -> std::ops::Range<usize> {
        match component {
            Component::EncoderSn => 0..4,
            Component::EncoderSi => 4..8,
            Component::EncoderT => 8..12,
            Component::Classifier => 12..14,
            Component::Discriminator => 14..16,
        }
    }

    /// Registers every parameter as a gradient-carrying leaf on `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        let ids = self.params().into_iter().map(|p| g.leaf(p.value.clone())).collect();
        BoundModel { ids }
    }

    /// Like [`JstnModel::bind`] but with constant leaves; used for
    /// evaluation-only forward passes.
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundModel {
        let ids = self
            .params()
            .into_iter()
            .map(|p| g.constant(p.value.clone()))
            .collect();
        BoundModel { ids }
    }

    /// Adds the graph gradients of the bound leaves into each parameter's
    /// accumulator.
    pub fn accumulate_grads(&mut self, g: &Graph, bound: &BoundModel) {
        for (p, &id) in self.params_mut().into_iter().zip(&bound.ids) {
            if let Some(grad) = g.grad(id) {
                p.grad += grad;
            }
        }
    }

    fn affine(g: &mut Graph, x: NodeId, (w, b): (NodeId, NodeId)) -> Result<NodeId> {
        let h = g.matmul(x, w)?;
        g.add_row(h, b)
    }

    /// Maps `x` through the encoder of `branch` into the `d_c`-wide subspace.
    pub fn encode(
        &self,
        g: &mut Graph,
        bound: &BoundModel,
        x: NodeId,
        branch: Branch,
    ) -> Result<NodeId> {
        let expected = self.arch.input_dim(branch);
        let actual = g.shape(x).1;
        if actual != expected {
            return Err(JstnError::RoleWidth {
                role: branch.tag(),
                expected,
                actual,
            });
        }
        let off = encoder_offset(branch);
        let h = Self::affine(g, x, bound.affine(off))?;
        let h = g.leaky_relu(h, self.arch.slope);
        Self::affine(g, h, bound.affine(off + 2))
    }

    /// Raw `n×k` classifier logits.
    pub fn classify(&self, g: &mut Graph, bound: &BoundModel, f: NodeId) -> Result<NodeId> {
        self.check_feature_width("classify", g, f)?;
        Self::affine(g, f, bound.affine(12))
    }

    /// Source-vs-target probability per row, `n×1`.
    pub fn discriminate(&self, g: &mut Graph, bound: &BoundModel, f: NodeId) -> Result<NodeId> {
        self.check_feature_width("discriminate", g, f)?;
        let z = Self::affine(g, f, bound.affine(14))?;
        Ok(g.sigmoid(z))
    }

    fn check_feature_width(&self, op: &'static str, g: &Graph, f: NodeId) -> Result<()> {
        let s = g.shape(f);
        if s.1 != self.arch.d_c {
            return Err(JstnError::Dimension {
                op,
                left: s,
                right: (self.arch.d_c, 0),
            });
        }
        Ok(())
    }

    /// Forward-only features and logits for a plain matrix.
    pub fn predict(&self, x: &Matrix, branch: Branch) -> Result<(Matrix, Matrix)> {
        let mut g = Graph::new();
        let bound = self.bind_frozen(&mut g);
        let xi = g.constant(x.clone());
        let f = self.encode(&mut g, &bound, xi, branch)?;
        let logits = self.classify(&mut g, &bound, f)?;
        Ok((g.value(f).clone(), g.value(logits).clone()))
    }

    pub fn save_checkpoint(&self, path: &Path, config_hash: &str) -> Result<()> {
        fs::write(path, self.to_checkpoint_string(config_hash))
            .map_err(|e| JstnError::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path).map_err(|e| JstnError::io(path, e))?;
        Self::from_checkpoint_str(&text)
    }

    /// Text checkpoint: a header, the architecture, then each parameter as a
    /// `param <name> <rows> <cols>` line followed by one line per row.
    /// Floats use shortest round-trip formatting, so loading is bit-exact.
    pub fn to_checkpoint_string(&self, config_hash: &str) -> String {
        let a = &self.arch;
        let mut s = String::new();
        let _ = writeln!(s, "jstn-checkpoint 1");
        let _ = writeln!(s, "config_hash {config_hash}");
        let _ = writeln!(
            s,
            "arch d_sn={} d_si={} d_t={} hidden={} d_c={} k={} slope={:e}",
            a.d_sn, a.d_si, a.d_t, a.hidden, a.d_c, a.k, a.slope
        );
        for (name, p) in PARAM_NAMES.iter().zip(self.params()) {
            let _ = writeln!(s, "param {name} {} {}", p.value.nrows(), p.value.ncols());
            for row in p.value.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        }
        s
    }

    pub fn from_checkpoint_str(text: &str) -> Result<(Self, String)> {
        let bad = |msg: &str| JstnError::Data(format!("checkpoint: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some("jstn-checkpoint 1") {
            return Err(bad("missing header"));
        }
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("config_hash "))
            .ok_or_else(|| bad("missing config_hash"))?
            .to_string();
        let arch_line = lines
            .next()
            .and_then(|l| l.strip_prefix("arch "))
            .ok_or_else(|| bad("missing arch"))?;
        let mut fields = std::collections::HashMap::new();
        for kv in arch_line.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("arch field"))?;
            fields.insert(k, v);
        }
        let dim = |k: &str| -> Result<usize> {
            fields
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("arch.{k}")))
        };
        let arch = Architecture {
            d_sn: dim("d_sn")?,
            d_si: dim("d_si")?,
            d_t: dim("d_t")?,
            hidden: dim("hidden")?,
            d_c: dim("d_c")?,
            k: dim("k")?,
            slope: fields
                .get("slope")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("arch.slope"))?,
        };
        let mut model = JstnModel::init(
            arch,
            InitSpec {
                gain: 0.0,
                ..InitSpec::seeded(0)
            },
        )?;
        for (name, p) in PARAM_NAMES.iter().zip(model.params_mut()) {
            let header = lines.next().ok_or_else(|| bad("truncated"))?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "param" || parts[1] != *name {
                return Err(bad(&format!("expected param {name}")));
            }
            let (r, c): (usize, usize) = (
                parts[2].parse().map_err(|_| bad("rows"))?,
                parts[3].parse().map_err(|_| bad("cols"))?,
            );
            if (r, c) != p.value.dim() {
                return Err(bad(&format!("{name} has shape {r}x{c}, expected {:?}", p.value.dim())));
            }
            for i in 0..r {
                let row = lines.next().ok_or_else(|| bad("truncated"))?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(&format!("{name} row {i}")))?;
                if vals.len() != c {
                    return Err(bad(&format!("{name} row {i} width")));
                }
                for (j, v) in vals.into_iter().enumerate() {
                    p.value[[i, j]] = v;
                }
            }
        }
        Ok((model, hash))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{numerical_gradient, relative_error, FD_STEP};
    use crate::autodiff::PROB_EPS;

    fn arch() -> Architecture {
        Architecture {
            d_sn: 6,
            d_si: 4,
            d_t: 5,
            hidden: 7,
            d_c: 3,
            k: 5,
            slope: 0.01,
        }
    }

    fn rand_x(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = JstnModel::init(arch(), InitSpec::seeded(7)).unwrap();
        let b = JstnModel::init(arch(), InitSpec::seeded(7)).unwrap();
        let c = JstnModel::init(arch(), InitSpec::seeded(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let fan_ins = [6, 6, 7, 7, 4, 4, 7, 7, 5, 5, 7, 7, 3, 3, 3, 3];
        for ((p, fan_in), name) in a.params().iter().zip(fan_ins).zip(JstnModel::param_names()) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            assert!(p.value.iter().all(|v| v.abs() <= bound), "{name}");
            if name.ends_with("bias") {
                assert!(p.value.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn init_rejects_bad_dims() {
        let mut bad = arch();
        bad.d_c = 0;
        assert!(matches!(
            JstnModel::init(bad, InitSpec::seeded(0)),
            Err(JstnError::Parameter(_))
        ));
        let mut bad = arch();
        bad.slope = 1.5;
        assert!(JstnModel::init(bad, InitSpec::seeded(0)).is_err());
    }

    #[test]
    fn zero_model_gives_zero_features_uniform_softmax_and_half_discriminator() {
        let zero = JstnModel::init(
            arch(),
            InitSpec {
                gain: 0.0,
                ..InitSpec::seeded(0)
            },
        )
        .unwrap();
        let mut g = Graph::new();
        let b = zero.bind(&mut g);
        let x = g.constant(rand_x(4, 5, 1));
        let f = zero.encode(&mut g, &b, x, Branch::Target).unwrap();
        assert!(g.value(f).iter().all(|&v| v == 0.0));
        let logits = zero.classify(&mut g, &b, f).unwrap();
        assert!(g.value(logits).iter().all(|&v| v == 0.0));
        let p = g.softmax_rows(logits, 1.0).unwrap();
        assert!(g.value(p).iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let d = zero.discriminate(&mut g, &b, f).unwrap();
        assert!(g.value(d).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn all_encoders_land_in_one_subspace() {
        let m = JstnModel::init(
            Architecture {
                d_sn: 12,
                d_si: 8,
                d_t: 10,
                hidden: 16,
                ..arch()
            },
            InitSpec::seeded(3),
        )
        .unwrap();
        let mut g = Graph::new();
        let b = m.bind(&mut g);
        let mut feats = Vec::new();
        for (branch, d, n) in [
            (Branch::SourceNetwork, 12, 5),
            (Branch::SourceIot, 8, 3),
            (Branch::Target, 10, 4),
        ] {
            let x = g.constant(rand_x(n, d, n as u64));
            let f = m.encode(&mut g, &b, x, branch).unwrap();
            assert_eq!(g.shape(f), (n, 3));
            feats.push(f);
        }
        let all = g.concat_rows(&feats).unwrap();
        assert_eq!(g.shape(all), (12, 3));
        let logits = m.classify(&mut g, &b, all).unwrap();
        assert_eq!(g.shape(logits).1, 5);
        let d = m.discriminate(&mut g, &b, all).unwrap();
        assert_eq!(g.shape(d), (12, 1));
        assert!(g.value(d).iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let m = JstnModel::init(arch(), InitSpec::seeded(0)).unwrap();
        let mut g = Graph::new();
        let b = m.bind(&mut g);
        let x = g.constant(rand_x(2, 4, 0));
        let err = m.encode(&mut g, &b, x, Branch::SourceNetwork).unwrap_err();
        assert!(err.to_string().contains("SN"), "{err}");
        let f = g.constant(rand_x(2, 4, 0));
        assert!(m.classify(&mut g, &b, f).is_err());
        assert!(m.discriminate(&mut g, &b, f).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let m = JstnModel::init(arch(), InitSpec::seeded(11)).unwrap();
        let x = rand_x(9, 5, 4);
        assert_eq!(
            m.predict(&x, Branch::Target).unwrap(),
            m.predict(&x, Branch::Target).unwrap()
        );
    }

    /// Loss through encoder, classifier and a BCE discriminator head,
    /// evaluated with parameters as plain inputs.
    fn head_loss(m: &JstnModel, g: &mut Graph, ids: &BoundModel, x: NodeId) -> NodeId {
        let f = m.encode(g, ids, x, Branch::Target).unwrap();
        let logits = m.classify(g, ids, f).unwrap();
        let p = g.softmax_rows(logits, 2.0).unwrap();
        let p = g.clamp(p, PROB_EPS, 1.0);
        let lp = g.log(p).unwrap();
        let ce = g.mean(lp);
        let d = m.discriminate(g, ids, f).unwrap();
        let d = g.clamp(d, PROB_EPS, 1.0 - PROB_EPS);
        let ld = g.log(d).unwrap();
        let bce = g.mean(ld);
        let s = g.add(ce, bce).unwrap();
        g.scale(s, -1.0)
    }

    #[test]
    fn encoder_classifier_discriminator_gradients_match_finite_differences() {
        let m = JstnModel::init(arch(), InitSpec::seeded(5)).unwrap();
        let x = rand_x(6, 5, 9);
        let mut g = Graph::new();
        let b = m.bind(&mut g);
        let xi = g.constant(x.clone());
        let l = head_loss(&m, &mut g, &b, xi);
        g.backward(l).unwrap();
        let used = [8, 9, 10, 11, 12, 13, 14, 15];
        let analytic: Vec<Matrix> = used.iter().map(|&i| g.grad(b.ids()[i]).unwrap().clone()).collect();
        let base: Vec<Matrix> = used.iter().map(|&i| m.params()[i].value.clone()).collect();
        let numeric = numerical_gradient(
            |vals| {
                let mut mm = m.clone();
                for (&i, v) in used.iter().zip(vals) {
                    mm.params_mut()[i].value = v.clone();
                }
                let mut g = Graph::new();
                let b = mm.bind_frozen(&mut g);
                let xi = g.constant(x.clone());
                let l = head_loss(&mm, &mut g, &b, xi);
                g.scalar(l)
            },
            &base,
            FD_STEP,
        );
        assert!(relative_error(&analytic, &numeric) <= 1e-6);
        // unused encoders never get gradient
        assert!(g.grad(b.ids()[0]).is_none());
    }

    #[test]
    fn bce_gradient_at_half_with_label_one() {
        // d/dz of −log σ(z) at z = 0 is σ(0) − 1 = −0.5
        let mut g = Graph::new();
        let z = g.leaf(Matrix::zeros((1, 1)));
        let p = g.sigmoid(z);
        let lp = g.log(p).unwrap();
        let l = g.scale(lp, -1.0);
        g.backward(l).unwrap();
        let analytic = g.grad(z).unwrap()[[0, 0]];
        let numeric = numerical_gradient(
            |v| -crate::autodiff::sigmoid(v[0][[0, 0]]).ln(),
            &[Matrix::zeros((1, 1))],
            FD_STEP,
        )[0][[0, 0]];
        assert!((analytic + 0.5).abs() < 1e-15);
        assert!((analytic - numeric).abs() < 1e-9);
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let mut m = JstnModel::init(arch(), InitSpec::seeded(21)).unwrap();
        m.classifier.bias.value[[0, 1]] = 1e-300;
        m.enc_t.output.bias.value[[0, 0]] = -0.1 - 0.2;
        let text = m.to_checkpoint_string("abc123");
        let (back, hash) = JstnModel::from_checkpoint_str(&text).unwrap();
        assert_eq!(hash, "abc123");
        for (a, b) in m.params().iter().zip(back.params()) {
            for (x, y) in a.value.iter().zip(b.value.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(m.arch, back.arch);

        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(JstnModel::from_checkpoint_str(&truncated).is_err());
    }
}
