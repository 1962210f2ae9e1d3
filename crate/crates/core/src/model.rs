//! Set encoder and scoring heads.
//!
//! The encoder is a stack of pre-LN Transformer blocks without positional
//! encoding, so it is equivariant to permutations of the set. A scoring head
//! is a three-layer MLP applied independently to each contextualized row.
//!
//! Parameters live in one flat list of tensors; [`Layout`] records which
//! index plays which role. Binding the list to a tape yields a parallel list
//! of [`Var`]s that the same layout can address.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};
use num_traits::Float;

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub use_final_norm: bool,
    pub ln_eps: f64,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            num_layers: 5,
            num_heads: 8,
            model_dim: 4096,
            ffn_dim: 4 * 4096,
            use_final_norm: true,
            ln_eps: 1e-5,
            dropout: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Width of the incoming segment features. When it differs from
    /// `encoder.model_dim` a learned input projection is inserted.
    pub input_dim: usize,
    pub encoder: EncoderConfig,
    /// When false the heads score raw features directly.
    pub use_encoder: bool,
    pub head_hidden: [usize; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 4096,
            encoder: EncoderConfig::default(),
            use_encoder: true,
            head_hidden: [1024, 256],
        }
    }
}

impl ModelConfig {
    /// Small configuration for fast experiments on low-dimensional features.
    pub fn desk(dim: usize) -> Self {
        ModelConfig {
            input_dim: dim,
            encoder: EncoderConfig {
                num_layers: 2,
                num_heads: 4,
                model_dim: dim,
                ffn_dim: 4 * dim,
                ..EncoderConfig::default()
            },
            use_encoder: true,
            head_hidden: [64, 32],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.head_hidden.contains(&0) {
            return bad("head hidden widths must be positive".into());
        }
        if !self.use_encoder {
            return Ok(());
        }
        if e.num_layers == 0 || e.num_heads == 0 || e.model_dim == 0 || e.ffn_dim == 0 {
            return bad("encoder sizes must be positive".into());
        }
        if !e.model_dim.is_multiple_of(e.num_heads) {
            return bad(format!(
                "model_dim {} is not divisible by num_heads {}",
                e.model_dim, e.num_heads
            ));
        }
        if !(e.ln_eps > 0.0) {
            return bad("ln_eps must be positive".into());
        }
        if !(0.0..1.0).contains(&e.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Width of the rows that reach the scoring heads.
    pub fn head_input_dim(&self) -> usize {
        if self.use_encoder {
            self.encoder.model_dim
        } else {
            self.input_dim
        }
    }
}

/// Which learner a scoring head belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeadRole {
    /// The single scorer of the supervised set model.
    Main,
    Coarse,
    Fine,
}

impl HeadRole {
    pub fn name(self) -> &'static str {
        match self {
            HeadRole::Main => "main",
            HeadRole::Coarse => "coarse",
            HeadRole::Fine => "fine",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "main" => Some(HeadRole::Main),
            "coarse" => Some(HeadRole::Coarse),
            "fine" => Some(HeadRole::Fine),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearIdx {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockIdx {
    pub attn_norm: NormIdx,
    pub query: LinearIdx,
    pub key: LinearIdx,
    pub value: LinearIdx,
    pub output: LinearIdx,
    pub ffn_norm: NormIdx,
    pub ffn_in: LinearIdx,
    pub ffn_out: LinearIdx,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadIdx {
    pub fc1: LinearIdx,
    pub fc2: LinearIdx,
    pub fc3: LinearIdx,
}

/// Positions of every parameter inside the flat tensor list.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub input_proj: Option<LinearIdx>,
    pub blocks: Vec<BlockIdx>,
    pub final_norm: Option<NormIdx>,
    pub heads: Vec<(HeadRole, HeadIdx)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum InitRule {
    Uniform { fan_in: usize },
    Zero,
    One,
}

struct LayoutBuilder {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    rules: Vec<InitRule>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, rule: InitRule) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.rules.push(rule);
        self.names.len() - 1
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> LinearIdx {
        LinearIdx {
            weight: self.push(
                format!("{prefix}.weight"),
                alloc::vec![fan_in, fan_out],
                InitRule::Uniform { fan_in },
            ),
            bias: self.push(format!("{prefix}.bias"), alloc::vec![fan_out], InitRule::Zero),
        }
    }

    fn norm(&mut self, prefix: &str, dim: usize) -> NormIdx {
        NormIdx {
            gain: self.push(format!("{prefix}.gain"), alloc::vec![dim], InitRule::One),
            bias: self.push(format!("{prefix}.bias"), alloc::vec![dim], InitRule::Zero),
        }
    }
}

struct Blueprint {
    layout: Layout,
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    rules: Vec<InitRule>,
}

fn blueprint(config: &ModelConfig, roles: &[HeadRole]) -> Result<Blueprint> {
    config.validate()?;
    if roles.is_empty() || roles.len() > 2 {
        return Err(Error::Config(format!(
            "a model carries one or two scoring heads, got {}",
            roles.len()
        )));
    }
    if roles.len() == 2 && roles[0] == roles[1] {
        return Err(Error::Config("duplicate scoring head role".into()));
    }
    let mut b = LayoutBuilder {
        names: Vec::new(),
        shapes: Vec::new(),
        rules: Vec::new(),
    };
    let e = &config.encoder;
    let mut input_proj = None;
    let mut blocks = Vec::new();
    let mut final_norm = None;
    if config.use_encoder {
        let d = e.model_dim;
        if config.input_dim != d {
            input_proj = Some(b.linear("encoder.input_proj", config.input_dim, d));
        }
        for l in 0..e.num_layers {
            let p = format!("encoder.layers.{l}");
            blocks.push(BlockIdx {
                attn_norm: b.norm(&format!("{p}.attn_norm"), d),
                query: b.linear(&format!("{p}.attn.query"), d, d),
                key: b.linear(&format!("{p}.attn.key"), d, d),
                value: b.linear(&format!("{p}.attn.value"), d, d),
                output: b.linear(&format!("{p}.attn.output"), d, d),
                ffn_norm: b.norm(&format!("{p}.ffn_norm"), d),
                ffn_in: b.linear(&format!("{p}.ffn.input"), d, e.ffn_dim),
                ffn_out: b.linear(&format!("{p}.ffn.output"), e.ffn_dim, d),
            });
        }
        if e.use_final_norm {
            final_norm = Some(b.norm("encoder.final_norm", d));
        }
    }
    let mut sorted = roles.to_vec();
    sorted.sort();
    let din = config.head_input_dim();
    let [h1, h2] = config.head_hidden;
    let heads = sorted
        .iter()
        .map(|&role| {
            let p = format!("head.{}", role.name());
            (
                role,
                HeadIdx {
                    fc1: b.linear(&format!("{p}.fc1"), din, h1),
                    fc2: b.linear(&format!("{p}.fc2"), h1, h2),
                    fc3: b.linear(&format!("{p}.fc3"), h2, 1),
                },
            )
        })
        .collect();
    Ok(Blueprint {
        layout: Layout {
            input_proj,
            blocks,
            final_norm,
            heads,
        },
        names: b.names,
        shapes: b.shapes,
        rules: b.rules,
    })
}

/// Encoder plus one or two scoring heads.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    layout: Layout,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Fan-scaled uniform weights `U(-1/√fan_in, 1/√fan_in)`, zero biases,
    /// unit norm gains. Deterministic in `seed`.
    pub fn init(config: &ModelConfig, roles: &[HeadRole], seed: u64) -> Result<Self> {
        let bp = blueprint(config, roles)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = bp
            .shapes
            .iter()
            .zip(&bp.rules)
            .map(|(shape, rule)| match *rule {
                InitRule::Zero => Tensor::zeros(shape),
                InitRule::One => Tensor::ones(shape),
                InitRule::Uniform { fan_in } => {
                    let bound = 1.0 / Float::sqrt(fan_in as f64);
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect();
                    Tensor::new(shape, data).expect("blueprint shape")
                }
            })
            .collect();
        Ok(ModelParams {
            config: config.clone(),
            layout: bp.layout,
            names: bp.names,
            tensors,
        })
    }

    /// Rebuilds parameters from named tensors, e.g. a loaded checkpoint.
    /// Head roles are inferred from the `head.<role>.` prefixes.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut roles: Vec<HeadRole> = Vec::new();
        for (name, _) in &named {
            if let Some(rest) = name.strip_prefix("head.") {
                let role_name = rest.split('.').next().unwrap_or("");
                let role = HeadRole::from_name(role_name)
                    .ok_or_else(|| Error::Config(format!("unknown head role in {name}")))?;
                if !roles.contains(&role) {
                    roles.push(role);
                }
            }
        }
        let bp = blueprint(config, &roles)?;
        if named.len() != bp.names.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                bp.names.len(),
                named.len()
            )));
        }
        let mut tensors: Vec<Option<Tensor<T>>> = bp.names.iter().map(|_| None).collect();
        for (name, t) in named {
            let idx = bp
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Config(format!("unexpected parameter {name}")))?;
            if t.shape() != bp.shapes[idx].as_slice() {
                return Err(Error::Dimension {
                    op: "load parameters",
                    lhs: bp.shapes[idx].clone(),
                    rhs: t.shape().to_vec(),
                });
            }
            if !t.is_finite() {
                return Err(Error::NonFinite { what: name });
            }
            tensors[idx] = Some(t);
        }
        let tensors = tensors
            .into_iter()
            .zip(&bp.names)
            .map(|(t, n)| t.ok_or_else(|| Error::Config(format!("missing parameter {n}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelParams {
            config: config.clone(),
            layout: bp.layout,
            names: bp.names,
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn roles(&self) -> Vec<HeadRole> {
        self.layout.heads.iter().map(|(r, _)| *r).collect()
    }

    pub fn has_head(&self, role: HeadRole) -> bool {
        self.layout.heads.iter().any(|(r, _)| *r == role)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Indices of the tensors that belong to the encoder.
    pub fn encoder_indices(&self) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&i| self.names[i].starts_with("encoder."))
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Records every tensor as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound<'_> {
        let vars = self.tensors.iter().map(|t| tape.param(t.clone())).collect();
        Bound {
            config: &self.config,
            layout: &self.layout,
            vars,
        }
    }

    /// Records every tensor as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound<'_> {
        let vars = self.tensors.iter().map(|t| tape.constant(t.clone())).collect();
        Bound {
            config: &self.config,
            layout: &self.layout,
            vars,
        }
    }

    /// Addresses existing tape values (one per tensor, in order) with this
    /// model's layout.
    pub fn bind_vars(&self, vars: Vec<Var>) -> Result<Bound<'_>> {
        if vars.len() != self.tensors.len() {
            return Err(Error::dim("bind_vars", &[self.tensors.len()], &[vars.len()]));
        }
        Ok(Bound {
            config: &self.config,
            layout: &self.layout,
            vars,
        })
    }

    /// Contextualized embeddings of a set, outside any training tape.
    pub fn encode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let zv = tape.constant(z.clone());
        let out = bound.encode_set(&mut tape, zv, None)?;
        Ok(tape.value(out).clone())
    }

    /// Raw scores of each row of `embedded` under the head `role`.
    pub fn score(&self, role: HeadRole, embedded: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let zv = tape.constant(embedded.clone());
        let out = bound.score_segments(&mut tape, role, zv)?;
        Ok(tape.value(out).clone())
    }
}

/// A model whose parameters are addressed as tape variables.
pub struct Bound<'a> {
    config: &'a ModelConfig,
    layout: &'a Layout,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Releases the borrow on the parameters, keeping the tape handles.
    pub fn into_vars(self) -> Vec<Var> {
        self.vars
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    fn linear<T: Real>(&self, tape: &mut Tape<T>, x: Var, l: LinearIdx) -> Result<Var> {
        let y = tape.matmul(x, self.vars[l.weight])?;
        tape.add_row(y, self.vars[l.bias])
    }

    fn norm<T: Real>(&self, tape: &mut Tape<T>, x: Var, n: NormIdx) -> Result<Var> {
        let eps = T::of(self.config.encoder.ln_eps);
        tape.layer_norm(x, self.vars[n.gain], self.vars[n.bias], eps)
    }

    fn attention<T: Real>(
        &self,
        tape: &mut Tape<T>,
        x: Var,
        b: &BlockIdx,
        probs: &mut Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let e = &self.config.encoder;
        let dh = e.head_dim();
        let q = self.linear(tape, x, b.query)?;
        let k = self.linear(tape, x, b.key)?;
        let v = self.linear(tape, x, b.value)?;
        let scale = T::of(1.0 / Float::sqrt(dh as f64));
        let mut outs = Vec::with_capacity(e.num_heads);
        for h in 0..e.num_heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, lo, hi)?;
            let kh = tape.slice_cols(k, lo, hi)?;
            let vh = tape.slice_cols(v, lo, hi)?;
            let kt = tape.transpose(kh)?;
            let logits = tape.matmul(qh, kt)?;
            let logits = tape.scale(logits, scale);
            let p = tape.softmax(logits)?;
            if let Some(list) = probs.as_deref_mut() {
                list.push(p);
            }
            outs.push(tape.matmul(p, vh)?);
        }
        let joined = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)?
        };
        self.linear(tape, joined, b.output)
    }

    fn encode_inner<T: Real>(
        &self,
        tape: &mut Tape<T>,
        z: Var,
        mut dropout: Option<&mut dyn RngCore>,
        mut probs: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let shape = tape.shape(z).to_vec();
        if shape.len() != 2 || shape[0] == 0 || shape[1] != self.config.input_dim {
            return Err(Error::dim("encode_set", &shape, &[0, self.config.input_dim]));
        }
        if !self.config.use_encoder {
            return Ok(z);
        }
        let rate = self.config.encoder.dropout;
        let mut x = match self.layout.input_proj {
            Some(p) => self.linear(tape, z, p)?,
            None => z,
        };
        for b in &self.layout.blocks {
            let h = self.norm(tape, x, b.attn_norm)?;
            let mut a = self.attention(tape, h, b, &mut probs)?;
            if let Some(rng) = dropout.as_deref_mut() {
                a = tape.dropout(a, rate, rng)?;
            }
            x = tape.add(x, a)?;
            let h = self.norm(tape, x, b.ffn_norm)?;
            let f = self.linear(tape, h, b.ffn_in)?;
            let f = tape.relu(f);
            let mut f = self.linear(tape, f, b.ffn_out)?;
            if let Some(rng) = dropout.as_deref_mut() {
                f = tape.dropout(f, rate, rng)?;
            }
            x = tape.add(x, f)?;
        }
        if let Some(n) = self.layout.final_norm {
            x = self.norm(tape, x, n)?;
        }
        Ok(x)
    }

    /// `z: [N × input_dim]` → `[N × d]`. With the encoder disabled this is
    /// the identity. `dropout` supplies randomness for training-time dropout
    /// and is ignored when the configured rate is zero.
    pub fn encode_set<T: Real>(
        &self,
        tape: &mut Tape<T>,
        z: Var,
        dropout: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        self.encode_inner(tape, z, dropout, None)
    }

    /// Like [`Bound::encode_set`], also returning every attention matrix.
    pub fn encode_set_with_attention<T: Real>(&self, tape: &mut Tape<T>, z: Var) -> Result<(Var, Vec<Var>)> {
        let mut probs = Vec::new();
        let out = self.encode_inner(tape, z, None, Some(&mut probs))?;
        Ok((out, probs))
    }

    fn head(&self, role: HeadRole) -> Result<HeadIdx> {
        self.layout
            .heads
            .iter()
            .find(|(r, _)| *r == role)
            .map(|(_, h)| *h)
            .ok_or_else(|| Error::Config(format!("model has no {} head", role.name())))
    }

    /// Per-row scores `[N]` from the head `role`.
    pub fn score_segments<T: Real>(&self, tape: &mut Tape<T>, role: HeadRole, z: Var) -> Result<Var> {
        let head = self.head(role)?;
        let shape = tape.shape(z).to_vec();
        let din = self.config.head_input_dim();
        if shape.len() != 2 || shape[1] != din {
            return Err(Error::dim("score_segments", &shape, &[0, din]));
        }
        let h = self.linear(tape, z, head.fc1)?;
        let h = tape.relu(h);
        let h = self.linear(tape, h, head.fc2)?;
        let h = tape.relu(h);
        let s = self.linear(tape, h, head.fc3)?;
        tape.reshape(s, &[shape[0]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check_many;
    use alloc::vec;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 8,
            encoder: EncoderConfig {
                num_layers: 2,
                num_heads: 2,
                model_dim: 8,
                ffn_dim: 16,
                ..EncoderConfig::default()
            },
            use_encoder: true,
            head_hidden: [12, 6],
        }
    }

    fn random_set(n: usize, d: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(&[n, d], (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = ModelParams::<f32>::init(&tiny(), &[HeadRole::Main], 4).unwrap();
        let b = ModelParams::<f32>::init(&tiny(), &[HeadRole::Main], 4).unwrap();
        let c = ModelParams::<f32>::init(&tiny(), &[HeadRole::Main], 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (name, t) in a.named() {
            if name.ends_with(".gain") {
                assert!(t.data().iter().all(|&v| v == 1.0), "{name}");
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny();
        cfg.encoder.num_heads = 3;
        assert!(matches!(
            ModelParams::<f64>::init(&cfg, &[HeadRole::Main], 0),
            Err(Error::Config(_))
        ));
        assert!(ModelParams::<f64>::init(&tiny(), &[], 0).is_err());
        assert!(ModelParams::<f64>::init(&tiny(), &[HeadRole::Fine, HeadRole::Fine], 0).is_err());
    }

    #[test]
    fn input_projection_only_when_widths_differ() {
        let mut cfg = tiny();
        let p = ModelParams::<f64>::init(&cfg, &[HeadRole::Main], 0).unwrap();
        assert!(p.layout().input_proj.is_none());
        cfg.input_dim = 5;
        let p = ModelParams::<f64>::init(&cfg, &[HeadRole::Main], 0).unwrap();
        assert!(p.layout().input_proj.is_some());
        let out = p.encode(&random_set(3, 5, 1)).unwrap();
        assert_eq!(out.shape(), &[3, 8]);
    }

    #[test]
    fn permutation_equivariance() {
        let p = ModelParams::<f64>::init(&tiny(), &[HeadRole::Main], 2).unwrap();
        let z = random_set(6, 8, 3);
        let perm = [4usize, 2, 0, 5, 1, 3];
        let mut zp = Vec::new();
        for &i in &perm {
            zp.extend_from_slice(z.row(i));
        }
        let zp = Tensor::new(&[6, 8], zp).unwrap();
        let e = p.encode(&z).unwrap();
        let ep = p.encode(&zp).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for (a, b) in ep.row(k).iter().zip(e.row(i)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn singleton_set_passes_through() {
        let p = ModelParams::<f64>::init(&tiny(), &[HeadRole::Main], 2).unwrap();
        let out = p.encode(&random_set(1, 8, 9)).unwrap();
        assert_eq!(out.shape(), &[1, 8]);
    }

    #[test]
    fn untrained_encoder_changes_its_input() {
        let p = ModelParams::<f64>::init(&tiny(), &[HeadRole::Main], 2).unwrap();
        let z = random_set(5, 8, 4);
        assert!(p.encode(&z).unwrap().max_abs_diff(&z) > 1e-3);
    }

    #[test]
    fn zeroed_output_projections_make_identity() {
        let mut cfg = tiny();
        cfg.encoder.use_final_norm = false;
        let mut p = ModelParams::<f64>::init(&cfg, &[HeadRole::Main], 2).unwrap();
        let blocks = p.layout().blocks.clone();
        for b in blocks {
            for idx in [b.output.weight, b.output.bias, b.ffn_out.weight, b.ffn_out.bias] {
                for v in p.tensors_mut()[idx].data_mut() {
                    *v = 0.0;
                }
            }
        }
        let z = random_set(4, 8, 5);
        assert_eq!(p.encode(&z).unwrap(), z);
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let p = ModelParams::<f32>::init(&tiny(), &[HeadRole::Main], 2).unwrap();
        let mut tape = Tape::new();
        let bound = p.bind_frozen(&mut tape);
        let z = tape.constant(random_set(7, 8, 6).cast());
        let (_, probs) = bound.encode_set_with_attention(&mut tape, z).unwrap();
        assert_eq!(probs.len(), 4);
        for pv in probs {
            let t = tape.value(pv);
            for r in 0..t.rows() {
                let s: f32 = t.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let p = ModelParams::<f64>::init(&tiny(), &[HeadRole::Main], 2).unwrap();
        assert!(matches!(
            p.encode(&random_set(3, 7, 1)),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            p.score(HeadRole::Main, &random_set(3, 7, 1)),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            p.score(HeadRole::Coarse, &random_set(3, 8, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_head_returns_last_bias() {
        let mut p = ModelParams::<f64>::init(&tiny(), &[HeadRole::Main], 2).unwrap();
        let head = p.layout().heads[0].1;
        for idx in [
            head.fc1.weight,
            head.fc1.bias,
            head.fc2.weight,
            head.fc2.bias,
            head.fc3.weight,
        ] {
            p.tensors_mut()[idx].data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        p.tensors_mut()[head.fc3.bias].data_mut()[0] = 0.75;
        let s = p.score(HeadRole::Main, &random_set(5, 8, 8)).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn scoring_is_row_independent() {
        let p = ModelParams::<f64>::init(&tiny(), &[HeadRole::Main], 2).unwrap();
        let z = random_set(4, 8, 10);
        let batch = p.score(HeadRole::Main, &z).unwrap();
        for r in 0..4 {
            let row = Tensor::new(&[1, 8], z.row(r).to_vec()).unwrap();
            let one = p.score(HeadRole::Main, &row).unwrap();
            assert_eq!(one.data()[0], batch.data()[r]);
        }
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let p = ModelParams::<f64>::init(&tiny(), &[HeadRole::Main], 12).unwrap();
        let z = random_set(4, 8, 13);
        let head = p.layout().heads[0].1;
        let idx = [head.fc1.weight, head.fc2.weight, head.fc3.weight];
        let thetas: Vec<Tensor<f64>> = idx.iter().map(|&i| p.tensors()[i].clone()).collect();
        let err = grad_check_many(
            |tape, vars| {
                let mut all: Vec<Var> = p.tensors().iter().map(|t| tape.constant(t.clone())).collect();
                for (k, &i) in idx.iter().enumerate() {
                    all[i] = vars[k];
                }
                let bound = p.bind_vars(all)?;
                let zv = tape.constant(z.clone());
                let s = bound.score_segments(tape, HeadRole::Main, zv)?;
                tape.mean(s)
            },
            &thetas,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn from_named_rejects_wrong_shapes() {
        let p = ModelParams::<f32>::init(&tiny(), &[HeadRole::Coarse, HeadRole::Fine], 1).unwrap();
        let named: Vec<(String, Tensor<f32>)> =
            p.named().map(|(n, t)| (String::from(n), t.clone())).collect();
        let back = ModelParams::from_named(&tiny(), named.clone()).unwrap();
        assert_eq!(back, p);

        let mut wide = tiny();
        wide.input_dim = 16;
        wide.encoder.model_dim = 16;
        wide.encoder.ffn_dim = 32;
        assert!(matches!(
            ModelParams::from_named(&wide, named),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn no_encoder_scores_raw_features() {
        let mut cfg = tiny();
        cfg.use_encoder = false;
        let p = ModelParams::<f64>::init(&cfg, &[HeadRole::Main], 1).unwrap();
        assert!(p.encoder_indices().is_empty());
        let z = random_set(3, 8, 2);
        assert_eq!(p.encode(&z).unwrap(), z);
        assert_eq!(p.roles(), vec![HeadRole::Main]);
    }
}
