//! Per-domain id-embedding encoders trained with BPR, then frozen.
//!
//! Scores are plain inner products between a user row and an item row.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::InteractionDataset;
use crate::numerics::linalg::dot;
use crate::numerics::ops::{log_sigmoid, sigmoid};
use crate::numerics::{
    adam_step, load_checkpoint, save_checkpoint, AdamState, Init, Matrix, Metadata,
    NumericsError, ParamId, ParamStore,
};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("domain {domain}: {reason}")]
    Training { domain: usize, reason: String },
    #[error("user {user} has no row in domain {domain}")]
    UnknownUser { domain: usize, user: usize },
    #[error("item {item} is outside domain {domain} (size {size})")]
    UnknownItem {
        domain: usize,
        item: usize,
        size: usize,
    },
    #[error("encoder checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BprConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BprConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 100,
            lr: 0.005,
            l2: 1e-5,
            negatives_per_positive: 1,
            batch_size: 256,
            seed: 0,
        }
    }
}

/// Frozen user/item tables of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainEncoder {
    domain: usize,
    /// Dataset user index → row of `users`.
    user_rows: Vec<Option<usize>>,
    users: Matrix,
    items: Matrix,
    frozen: bool,
}

impl DomainEncoder {
    /// Builds an encoder from explicit tables. `user_rows` maps dataset users to table rows.
    pub fn from_tables(
        domain: usize,
        user_rows: Vec<Option<usize>>,
        users: Matrix,
        items: Matrix,
    ) -> Result<Self, EncoderError> {
        if users.cols != items.cols {
            return Err(EncoderError::Format("user and item dimensions differ".into()));
        }
        if user_rows.iter().flatten().any(|&r| r >= users.rows) {
            return Err(EncoderError::Format("user row out of range".into()));
        }
        Ok(Self {
            domain,
            user_rows,
            users,
            items,
            frozen: true,
        })
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.items.cols
    }

    pub fn num_items(&self) -> usize {
        self.items.rows
    }

    pub fn num_user_rows(&self) -> usize {
        self.users.rows
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn has_user(&self, user: usize) -> bool {
        matches!(self.user_rows.get(user), Some(Some(_)))
    }

    /// `x_{u,k}`: the stored row, unnormalized.
    pub fn user_embedding(&self, user: usize) -> Result<&[f64], EncoderError> {
        match self.user_rows.get(user) {
            Some(Some(r)) => Ok(self.users.row(*r)),
            _ => Err(EncoderError::UnknownUser {
                domain: self.domain,
                user,
            }),
        }
    }

    /// `x_{v,k}`.
    pub fn item_embedding(&self, item: usize) -> Result<&[f64], EncoderError> {
        if item >= self.items.rows {
            return Err(EncoderError::UnknownItem {
                domain: self.domain,
                item,
                size: self.items.rows,
            });
        }
        Ok(self.items.row(item))
    }

    pub fn item_table(&self) -> &Matrix {
        &self.items
    }

    pub fn score(&self, user: usize, item: usize) -> Result<f64, EncoderError> {
        Ok(dot(self.user_embedding(user)?, self.item_embedding(item)?))
    }

    /// Writes the tables; `extra` is stored alongside as metadata.
    pub fn save(&self, path: impl AsRef<Path>, extra: &Metadata) -> Result<(), EncoderError> {
        let mut store = ParamStore::new();
        let rows: Vec<f64> = self
            .user_rows
            .iter()
            .map(|r| r.map_or(-1.0, |r| r as f64))
            .collect();
        store.insert("user_rows", &[rows.len()], rows)?;
        store.insert("user_table", &[self.users.rows, self.users.cols], self.users.data.clone())?;
        store.insert("item_table", &[self.items.rows, self.items.cols], self.items.data.clone())?;
        let mut meta = extra.clone();
        meta.insert("kind".into(), "domain_encoder".into());
        meta.insert("domain".into(), self.domain.to_string());
        meta.insert("dim".into(), self.dim().to_string());
        save_checkpoint(path, &store, &meta)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        let (store, meta) = load_checkpoint(path)?;
        if meta.get("kind").map(String::as_str) != Some("domain_encoder") {
            return Err(EncoderError::Format("not a domain encoder checkpoint".into()));
        }
        let domain = meta
            .get("domain")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| EncoderError::Format("missing domain index".into()))?;
        let get = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| EncoderError::Format(format!("missing record {name}")))
        };
        let rows_id = get("user_rows")?;
        let user_rows = store
            .value(rows_id)
            .iter()
            .map(|&r| if r < 0.0 { None } else { Some(r as usize) })
            .collect();
        let as_matrix = |id: ParamId| {
            let shape = &store.meta(id).shape;
            Matrix::from_vec(shape[0], shape[1], store.value(id).to_vec())
        };
        Self::from_tables(
            domain,
            user_rows,
            as_matrix(get("user_table")?),
            as_matrix(get("item_table")?),
        )
    }
}

/// `(user row, positive item, negative item)`.
pub type BprTriple = (usize, usize, usize);

/// Mean BPR loss over `triples` plus `l2 · ‖params‖²`; gradients are
/// accumulated into `store` when `with_grad` is set.
pub fn bpr_objective(
    store: &mut ParamStore,
    users: ParamId,
    items: ParamId,
    triples: &[BprTriple],
    l2: f64,
    with_grad: bool,
) -> f64 {
    let dim = store.meta(users).shape[1];
    let scale = 1.0 / triples.len() as f64;
    let mut loss = 0.0;
    let (vals, mut grads) = store.split();
    let (u_tab, i_tab) = (vals.get(users), vals.get(items));
    for &(u, p, n) in triples {
        let ue = &u_tab[u * dim..(u + 1) * dim];
        let pe = &i_tab[p * dim..(p + 1) * dim];
        let ne = &i_tab[n * dim..(n + 1) * dim];
        let x = dot(ue, pe) - dot(ue, ne);
        loss -= scale * log_sigmoid(x);
        if with_grad {
            let dx = -scale * sigmoid(-x);
            let (gu, gi) = grads.pair_mut(users, items);
            for j in 0..dim {
                gu[u * dim + j] += dx * (pe[j] - ne[j]);
                gi[p * dim + j] += dx * ue[j];
                gi[n * dim + j] -= dx * ue[j];
            }
        }
    }
    for id in [users, items] {
        let v = vals.get(id);
        loss += l2 * v.iter().map(|x| x * x).sum::<f64>();
        if with_grad {
            for (g, x) in grads.get_mut(id).iter_mut().zip(v) {
                *g += 2.0 * l2 * x;
            }
        }
    }
    loss
}

/// Trains domain `domain` of `ds` with BPR and uniform negatives; returns frozen tables.
pub fn train_bpr(
    ds: &InteractionDataset,
    domain: usize,
    cfg: &BprConfig,
) -> Result<DomainEncoder, EncoderError> {
    let fail = |reason: &str| EncoderError::Training {
        domain,
        reason: reason.to_string(),
    };
    let n_items = ds.num_items(domain);
    if n_items < 2 {
        return Err(fail("need at least two items for negative sampling"));
    }
    let members = ds.users_in_domain(domain);
    if members.is_empty() {
        return Err(fail("domain has no users"));
    }
    let mut user_rows = vec![None; ds.num_users()];
    for (r, &u) in members.iter().enumerate() {
        user_rows[u] = Some(r);
    }
    let positives: Vec<(usize, usize)> = ds
        .interactions()
        .iter()
        .filter(|it| it.domain == domain && ds.items(it.user, domain).len() < n_items)
        .map(|it| (it.user, it.item))
        .collect();
    if positives.is_empty() {
        return Err(fail("no user leaves a negative item"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (domain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut store = ParamStore::new();
    let users = store.register("user_table", &[members.len(), cfg.dim], Init::Normal(0.01), &mut rng)?;
    let items = store.register("item_table", &[n_items, cfg.dim], Init::Normal(0.01), &mut rng)?;
    let mut adam = AdamState::new(&store, cfg.lr);

    let mut order: Vec<usize> = (0..positives.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            batch.clear();
            for &i in chunk {
                let (u, pos) = positives[i];
                let row = user_rows[u].expect("member");
                for _ in 0..cfg.negatives_per_positive {
                    batch.push((row, pos, sample_negative(ds, u, domain, &mut rng)));
                }
            }
            store.zero_grads();
            bpr_objective(&mut store, users, items, &batch, cfg.l2, true);
            adam_step(&mut store, &mut adam)?;
        }
    }
    let as_matrix = |id: ParamId| {
        let s = &store.meta(id).shape;
        Matrix::from_vec(s[0], s[1], store.value(id).to_vec())
    };
    DomainEncoder::from_tables(domain, user_rows, as_matrix(users), as_matrix(items))
}

/// Uniform item of `domain` the user never interacted with.
pub fn sample_negative<R: Rng + ?Sized>(
    ds: &InteractionDataset,
    user: usize,
    domain: usize,
    rng: &mut R,
) -> usize {
    let owned = ds.items(user, domain);
    loop {
        let v = rng.random_range(0..ds.num_items(domain));
        if owned.binary_search(&v).is_err() {
            return v;
        }
    }
}

/// Trains one encoder per domain.
pub fn train_all_encoders(
    ds: &InteractionDataset,
    cfg: &BprConfig,
) -> Result<Vec<DomainEncoder>, EncoderError> {
    (0..ds.num_domains()).map(|k| train_bpr(ds, k, cfg)).collect()
}
