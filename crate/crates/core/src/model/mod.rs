//! The multi-domain user encoder and its preference heads.
//!
//! A user is a sequence of `K+1` tokens: a learnable summary token followed by
//! one projected embedding per domain. Domains the user has not seen (or that
//! are masked during training) receive the shared mask token instead. After
//! the transformer, the summary row feeds the domain head and each domain row
//! feeds that domain's item head.

mod transformer;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use transformer::{layer_backward, layer_forward, LayerCache, LayerIds, LayerShape};

use crate::encoder::DomainEncoder;
use crate::numerics::linalg::{affine, affine_backward, gemm_nn, gemm_tn};
use crate::numerics::ops::softmax_in_place;
use crate::numerics::{
    load_checkpoint, save_checkpoint, Grads, Init, Matrix, Metadata, NumericsError, ParamId,
    ParamStore, Values,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("user {user}: domain {domain} is seen and unmasked but has no embedding")]
    MissingEmbedding { user: usize, domain: usize },
    #[error("non-finite activation after layer {layer}")]
    NonFinite { layer: usize },
    #[error("domain {0} has an empty item vocabulary")]
    EmptyVocabulary(usize),
    #[error("model checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_domains: usize,
    /// `d`, the encoder embedding size.
    pub embed_dim: usize,
    /// `m`, the transformer width.
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(num_domains: usize, embed_dim: usize) -> Self {
        Self {
            num_domains,
            embed_dim,
            width: 64,
            layers: 2,
            heads: 2,
            dropout: 0.1,
        }
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.width
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.num_domains == 0 || self.embed_dim == 0 || self.width == 0 {
            return bad("domains, embedding size and width must be positive");
        }
        if self.layers == 0 {
            return bad("at least one layer is required");
        }
        if self.heads == 0 || self.width % self.heads != 0 {
            return bad("head count must divide the width");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    fn layer_shape(&self) -> LayerShape {
        LayerShape {
            width: self.width,
            heads: self.heads,
            ffn_dim: self.ffn_dim(),
            dropout: self.dropout,
        }
    }
}

#[derive(Debug, Clone)]
struct ModelIds {
    mask_token: ParamId,
    summary_token: ParamId,
    input_w: Vec<ParamId>,
    input_b: Vec<ParamId>,
    layers: Vec<LayerIds>,
    domain_w: ParamId,
    domain_b: ParamId,
    item_w: Vec<ParamId>,
    item_b: Vec<ParamId>,
}

enum Source<'a, R: Rng + ?Sized> {
    Fresh(&'a mut R),
    Existing,
}

fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let (d, m, f, k) = (cfg.embed_dim, cfg.width, cfg.ffn_dim(), cfg.num_domains);
    let emb = Init::Normal(0.01);
    let mut specs = vec![
        ("tokens.mask".to_string(), vec![d], emb),
        ("tokens.summary".to_string(), vec![m], emb),
    ];
    for p in 0..k {
        specs.push((format!("input_proj.{p}.weight"), vec![d, m], Init::XavierUniform));
        specs.push((format!("input_proj.{p}.bias"), vec![m], Init::Zeros));
    }
    for l in 0..cfg.layers {
        for w in ["query", "key", "value", "output"] {
            specs.push((format!("layers.{l}.attn.{w}"), vec![m, m], Init::XavierUniform));
        }
        specs.push((format!("layers.{l}.attn_norm.gamma"), vec![m], Init::Ones));
        specs.push((format!("layers.{l}.attn_norm.beta"), vec![m], Init::Zeros));
        specs.push((format!("layers.{l}.ffn.w1"), vec![m, f], Init::XavierUniform));
        specs.push((format!("layers.{l}.ffn.b1"), vec![f], Init::Zeros));
        specs.push((format!("layers.{l}.ffn.w2"), vec![f, m], Init::XavierUniform));
        specs.push((format!("layers.{l}.ffn.b2"), vec![m], Init::Zeros));
        specs.push((format!("layers.{l}.ffn_norm.gamma"), vec![m], Init::Ones));
        specs.push((format!("layers.{l}.ffn_norm.beta"), vec![m], Init::Zeros));
    }
    specs.push(("head.domain.weight".to_string(), vec![m, k], Init::XavierUniform));
    specs.push(("head.domain.bias".to_string(), vec![k], Init::Zeros));
    for p in 0..k {
        specs.push((format!("head.item.{p}.weight"), vec![m, d], Init::XavierUniform));
        specs.push((format!("head.item.{p}.bias"), vec![d], Init::Zeros));
    }
    specs
}

impl ModelIds {
    fn build<R: Rng + ?Sized>(
        cfg: &ModelConfig,
        store: &mut ParamStore,
        mut source: Source<'_, R>,
    ) -> Result<Self, ModelError> {
        for (name, shape, init) in param_specs(cfg) {
            match &mut source {
                Source::Fresh(rng) => {
                    store.register(name, &shape, init, *rng)?;
                }
                Source::Existing => {
                    let id = store
                        .id(&name)
                        .ok_or_else(|| ModelError::Format(format!("missing parameter {name}")))?;
                    if store.meta(id).shape != shape {
                        return Err(ModelError::Format(format!("parameter {name} has the wrong shape")));
                    }
                }
            }
        }
        let id = |n: String| store.id(&n).expect("registered above");
        let k = cfg.num_domains;
        Ok(Self {
            mask_token: id("tokens.mask".into()),
            summary_token: id("tokens.summary".into()),
            input_w: (0..k).map(|p| id(format!("input_proj.{p}.weight"))).collect(),
            input_b: (0..k).map(|p| id(format!("input_proj.{p}.bias"))).collect(),
            layers: (0..cfg.layers)
                .map(|l| LayerIds {
                    query: id(format!("layers.{l}.attn.query")),
                    key: id(format!("layers.{l}.attn.key")),
                    value: id(format!("layers.{l}.attn.value")),
                    output: id(format!("layers.{l}.attn.output")),
                    attn_gamma: id(format!("layers.{l}.attn_norm.gamma")),
                    attn_beta: id(format!("layers.{l}.attn_norm.beta")),
                    ffn_w1: id(format!("layers.{l}.ffn.w1")),
                    ffn_b1: id(format!("layers.{l}.ffn.b1")),
                    ffn_w2: id(format!("layers.{l}.ffn.w2")),
                    ffn_b2: id(format!("layers.{l}.ffn.b2")),
                    ffn_gamma: id(format!("layers.{l}.ffn_norm.gamma")),
                    ffn_beta: id(format!("layers.{l}.ffn_norm.beta")),
                })
                .collect(),
            domain_w: id("head.domain.weight".into()),
            domain_b: id("head.domain.bias".into()),
            item_w: (0..k).map(|p| id(format!("head.item.{p}.weight"))).collect(),
            item_b: (0..k).map(|p| id(format!("head.item.{p}.bias"))).collect(),
        })
    }
}

/// What fills a domain's input slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Token<'a> {
    Mask,
    Embedding(&'a [f64]),
}

impl Token<'_> {
    pub fn is_mask(&self) -> bool {
        matches!(self, Token::Mask)
    }
}

/// Chooses each domain's input token.
///
/// `seen[k]` is the training-history indicator; `mask[k]`, when given, hides a
/// seen domain. Unseen domains always get the mask token.
pub fn select_tokens<'a>(
    encoders: &'a [DomainEncoder],
    user: usize,
    seen: &[bool],
    mask: Option<&[bool]>,
) -> Result<Vec<Token<'a>>, ModelError> {
    seen.iter()
        .enumerate()
        .map(|(k, &s)| {
            let masked = mask.is_some_and(|m| m[k]);
            if !s || masked {
                return Ok(Token::Mask);
            }
            encoders
                .get(k)
                .and_then(|e| e.user_embedding(user).ok())
                .map(Token::Embedding)
                .ok_or(ModelError::MissingEmbedding { user, domain: k })
        })
        .collect()
}

/// Final layer output with the activations needed for backprop.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub output: Matrix,
    pub caches: Vec<LayerCache>,
}

impl Encoded {
    pub fn summary(&self) -> &[f64] {
        self.output.row(0)
    }

    pub fn domain_row(&self, k: usize) -> &[f64] {
        self.output.row(k + 1)
    }
}

/// Read-only view of the model parameters.
#[derive(Clone, Copy)]
pub struct ModelView<'a> {
    cfg: &'a ModelConfig,
    ids: &'a ModelIds,
    vals: Values<'a>,
}

impl<'a> ModelView<'a> {
    pub fn config(&self) -> &'a ModelConfig {
        self.cfg
    }

    /// `H⁰`: summary token in row 0, projected domain tokens below.
    pub fn build_input(&self, tokens: &[Token<'_>]) -> Matrix {
        let m = self.cfg.width;
        let mut h0 = Matrix::zeros(tokens.len() + 1, m);
        h0.row_mut(0).copy_from_slice(self.vals.get(self.ids.summary_token));
        let mask = self.vals.get(self.ids.mask_token);
        for (k, t) in tokens.iter().enumerate() {
            let x = match t {
                Token::Mask => mask,
                Token::Embedding(e) => e,
            };
            let y = affine(x, self.vals.get(self.ids.input_w[k]), self.vals.get(self.ids.input_b[k]));
            h0.row_mut(k + 1).copy_from_slice(&y);
        }
        h0
    }

    /// Runs the transformer stack. Dropout is active only when `rng` is given.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        h0: &Matrix,
        mut rng: Option<&mut R>,
    ) -> Result<Encoded, ModelError> {
        let shape = self.cfg.layer_shape();
        let mut x = h0.clone();
        let mut caches = Vec::with_capacity(self.ids.layers.len());
        for (l, ids) in self.ids.layers.iter().enumerate() {
            let (y, cache) = layer_forward(self.vals, ids, shape, &x, rng.as_deref_mut());
            if !y.is_finite() {
                return Err(ModelError::NonFinite { layer: l });
            }
            caches.push(cache);
            x = y;
        }
        Ok(Encoded { output: x, caches })
    }

    /// Inference-style encoding of a token assignment (no dropout).
    pub fn encode(&self, tokens: &[Token<'_>]) -> Result<Encoded, ModelError> {
        self.forward::<ChaCha8Rng>(&self.build_input(tokens), None)
    }

    pub fn domain_logits(&self, summary: &[f64]) -> Vec<f64> {
        affine(summary, self.vals.get(self.ids.domain_w), self.vals.get(self.ids.domain_b))
    }

    /// `p(d | u)` over all domains.
    pub fn domain_preference(&self, summary: &[f64]) -> Vec<f64> {
        let mut z = self.domain_logits(summary);
        softmax_in_place(&mut z);
        z
    }

    /// `z_{u,k}`, the query vector in the item embedding space of domain `k`.
    pub fn item_query(&self, k: usize, row: &[f64]) -> Vec<f64> {
        affine(row, self.vals.get(self.ids.item_w[k]), self.vals.get(self.ids.item_b[k]))
    }

    /// Inner products of `z_{u,k}` with every item of domain `k`.
    pub fn item_logits(&self, k: usize, row: &[f64], items: &Matrix) -> Vec<f64> {
        let z = self.item_query(k, row);
        items.matmul_t(&z, 1).data
    }

    /// `p(v | u, d_k)` over the full item vocabulary of domain `k`.
    pub fn item_preference(
        &self,
        k: usize,
        row: &[f64],
        encoder: &DomainEncoder,
    ) -> Result<Vec<f64>, ModelError> {
        if encoder.num_items() == 0 {
            return Err(ModelError::EmptyVocabulary(k));
        }
        let mut logits = self.item_logits(k, row, encoder.item_table());
        softmax_in_place(&mut logits);
        Ok(logits)
    }

    /// Backward through the domain head; returns `dL/d summary`.
    pub fn domain_head_backward(&self, grads: &mut Grads<'_>, summary: &[f64], dlogits: &[f64]) -> Vec<f64> {
        let (dw, db) = grads.pair_mut(self.ids.domain_w, self.ids.domain_b);
        affine_backward(summary, self.vals.get(self.ids.domain_w), dlogits, dw, db)
    }

    /// Backward through item head `k` given `dL/dlogits`; returns `dL/d row`.
    pub fn item_head_backward(
        &self,
        grads: &mut Grads<'_>,
        k: usize,
        row: &[f64],
        items: &Matrix,
        dlogits: &[f64],
    ) -> Vec<f64> {
        let mut dz = vec![0.0; items.cols];
        gemm_nn(dlogits, &items.data, 1, items.rows, items.cols, &mut dz);
        let (dw, db) = grads.pair_mut(self.ids.item_w[k], self.ids.item_b[k]);
        affine_backward(row, self.vals.get(self.ids.item_w[k]), &dz, dw, db)
    }

    /// Backward through the transformer stack and input construction.
    pub fn backward(
        &self,
        grads: &mut Grads<'_>,
        tokens: &[Token<'_>],
        encoded: &Encoded,
        d_output: Matrix,
    ) {
        let shape = self.cfg.layer_shape();
        let mut d = d_output;
        for (ids, cache) in self.ids.layers.iter().zip(&encoded.caches).rev() {
            d = layer_backward(self.vals, grads, ids, shape, cache, &d);
        }
        for (g, v) in grads.get_mut(self.ids.summary_token).iter_mut().zip(d.row(0)) {
            *g += v;
        }
        let mask = self.vals.get(self.ids.mask_token);
        let dim = self.cfg.embed_dim;
        let m = self.cfg.width;
        for (k, t) in tokens.iter().enumerate() {
            let dy = d.row(k + 1);
            let x = match t {
                Token::Mask => mask,
                Token::Embedding(e) => e,
            };
            let (dw, db) = grads.pair_mut(self.ids.input_w[k], self.ids.input_b[k]);
            for (g, v) in db.iter_mut().zip(dy) {
                *g += v;
            }
            gemm_tn(x, dy, 1, dim, m, dw);
            if t.is_mask() {
                let w = self.vals.get(self.ids.input_w[k]);
                let dmask = grads.get_mut(self.ids.mask_token);
                for (i, g) in dmask.iter_mut().enumerate() {
                    *g += w[i * m..(i + 1) * m].iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }
}

/// Parameters of the multi-domain encoder and both heads.
#[derive(Debug, Clone)]
pub struct DripModel {
    config: ModelConfig,
    store: ParamStore,
    ids: ModelIds,
}

impl DripModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ids = ModelIds::build(&config, &mut store, Source::Fresh(&mut rng))?;
        Ok(Self { config, store, ids })
    }

    /// Wraps an existing parameter store, checking names and shapes.
    pub fn from_store(config: ModelConfig, mut store: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let ids = ModelIds::build::<ChaCha8Rng>(&config, &mut store, Source::Existing)?;
        Ok(Self { config, store, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn view(&self) -> ModelView<'_> {
        ModelView {
            cfg: &self.config,
            ids: &self.ids,
            vals: self.store.values(),
        }
    }

    /// Splits into a parameter view and the gradient buffers.
    pub fn view_and_grads(&mut self) -> (ModelView<'_>, Grads<'_>) {
        let (vals, grads) = self.store.split();
        (
            ModelView {
                cfg: &self.config,
                ids: &self.ids,
                vals,
            },
            grads,
        )
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.store.id(name)
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: &Metadata) -> Result<(), ModelError> {
        let mut meta = extra.clone();
        meta.insert("kind".into(), "drip_model".into());
        meta.insert("num_domains".into(), self.config.num_domains.to_string());
        meta.insert("embed_dim".into(), self.config.embed_dim.to_string());
        meta.insert("width".into(), self.config.width.to_string());
        meta.insert("layers".into(), self.config.layers.to_string());
        meta.insert("heads".into(), self.config.heads.to_string());
        meta.insert("dropout".into(), format!("{:?}", self.config.dropout));
        save_checkpoint(path, &self.store, &meta)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Metadata), ModelError> {
        let (store, meta) = load_checkpoint(path)?;
        if meta.get("kind").map(String::as_str) != Some("drip_model") {
            return Err(ModelError::Format("not a model checkpoint".into()));
        }
        let get = |key: &str| {
            meta.get(key)
                .ok_or_else(|| ModelError::Format(format!("missing metadata {key}")))
        };
        let int = |key: &str| -> Result<usize, ModelError> {
            get(key)?
                .parse()
                .map_err(|_| ModelError::Format(format!("bad metadata {key}")))
        };
        let config = ModelConfig {
            num_domains: int("num_domains")?,
            embed_dim: int("embed_dim")?,
            width: int("width")?,
            layers: int("layers")?,
            heads: int("heads")?,
            dropout: get("dropout")?
                .parse()
                .map_err(|_| ModelError::Format("bad metadata dropout".into()))?,
        };
        Ok((Self::from_store(config, store)?, meta))
    }
}
