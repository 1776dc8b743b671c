//! Every domain merged into one catalog: a user table, an item table and one
//! softmax over all items.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{EvaluationSplit, Partition};
use crate::evaluation::{evaluate, EvalMode, EvalOptions};
use crate::inference::{unseen_domains, InferenceError, Recommender};
use crate::model::ModelError;
use crate::numerics::linalg::{gemm_nn, gemm_tn, Matrix};
use crate::numerics::ops::{log_sum_exp, softmax_in_place};
use crate::numerics::{
    adam_step, load_checkpoint, save_checkpoint, AdamState, Init, Metadata, ParamId, ParamStore,
};
use crate::training::{EpochRecord, TrainError, VALIDATION_CUTOFF};

#[derive(Debug, Clone, PartialEq)]
pub struct SingleDomainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
}

impl Default for SingleDomainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            epochs: 50,
            lr: 1e-3,
            weight_decay: 0.0,
            batch_size: 128,
            seed: 0,
            patience: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleDomainModel {
    /// Global index of each domain's first item.
    offsets: Vec<usize>,
    users: Matrix,
    items: Matrix,
}

impl SingleDomainModel {
    pub fn num_domains(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `log p(v | u)` over the merged catalog.
    pub fn log_probabilities(&self, user: usize) -> Vec<f64> {
        let mut logits = self.items.matmul_t(self.users.row(user), 1).data;
        let lse = log_sum_exp(&logits);
        logits.iter_mut().for_each(|x| *x -= lse);
        logits
    }

    fn domain_slice(&self, probs: &[f64], k: usize) -> Vec<f64> {
        probs[self.offsets[k]..self.offsets[k + 1]].to_vec()
    }

    pub fn save(&self, path: impl AsRef<Path>, extra: &Metadata) -> Result<(), ModelError> {
        let mut store = ParamStore::new();
        let offsets: Vec<f64> = self.offsets.iter().map(|&o| o as f64).collect();
        store.insert("offsets", &[offsets.len()], offsets)?;
        store.insert("user_table", &[self.users.rows, self.users.cols], self.users.data.clone())?;
        store.insert("item_table", &[self.items.rows, self.items.cols], self.items.data.clone())?;
        let mut meta = extra.clone();
        meta.insert("kind".into(), "single_domain".into());
        save_checkpoint(path, &store, &meta)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let (store, meta) = load_checkpoint(path)?;
        if meta.get("kind").map(String::as_str) != Some("single_domain") {
            return Err(ModelError::Format("not a single-domain checkpoint".into()));
        }
        let get = |n: &str| store.id(n).ok_or_else(|| ModelError::Format(format!("missing record {n}")));
        let offsets = store.value(get("offsets")?).iter().map(|&o| o as usize).collect();
        let mat = |id: ParamId| {
            let s = &store.meta(id).shape;
            Matrix::from_vec(s[0], s[1], store.value(id).to_vec())
        };
        Ok(Self {
            offsets,
            users: mat(get("user_table")?),
            items: mat(get("item_table")?),
        })
    }
}

impl Recommender for SingleDomainModel {
    fn num_domains(&self) -> usize {
        SingleDomainModel::num_domains(self)
    }

    fn mt_scores(&self, user: usize, seen: &[bool]) -> Result<Vec<(usize, Vec<f64>)>, InferenceError> {
        let mut p = self.log_probabilities(user);
        p.iter_mut().for_each(|x| *x = x.exp());
        Ok(unseen_domains(seen)
            .into_iter()
            .map(|k| (k, self.domain_slice(&p, k)))
            .collect())
    }

    fn st_scores(&self, user: usize, _seen: &[bool], domain: usize) -> Result<Vec<f64>, InferenceError> {
        let mut p = self.log_probabilities(user);
        p.iter_mut().for_each(|x| *x = x.exp());
        Ok(self.domain_slice(&p, domain))
    }
}

/// Trains the merged-catalog model, keeping the epoch with the best
/// validation multi-target recall.
pub fn train_single_domain(
    split: &EvaluationSplit,
    cfg: &SingleDomainConfig,
) -> Result<(SingleDomainModel, Vec<EpochRecord>), TrainError> {
    if cfg.dim == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(TrainError::Config("dim, batch size and learning rate must be positive".into()));
    }
    let ds = &split.train;
    let mut offsets = vec![0];
    for k in 0..ds.num_domains() {
        offsets.push(offsets[k] + ds.num_items(k));
    }
    let n_items = *offsets.last().expect("non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let uid = store.register("user_table", &[ds.num_users(), cfg.dim], Init::Normal(0.01), &mut rng)?;
    let iid = store.register("item_table", &[n_items, cfg.dim], Init::Normal(0.01), &mut rng)?;
    let mut adam = AdamState::new(&store, cfg.lr).with_weight_decay(cfg.weight_decay);
    let targets: Vec<Vec<usize>> = (0..ds.num_users())
        .map(|u| {
            let offsets = &offsets;
            (0..ds.num_domains())
                .flat_map(|k| ds.items(u, k).iter().map(move |&v| offsets[k] + v))
                .collect()
        })
        .collect();
    let mut users: Vec<usize> = (0..ds.num_users()).filter(|&u| !targets[u].is_empty()).collect();
    let snapshot = |store: &ParamStore| SingleDomainModel {
        offsets: offsets.clone(),
        users: Matrix::from_vec(ds.num_users(), cfg.dim, store.value(uid).to_vec()),
        items: Matrix::from_vec(n_items, cfg.dim, store.value(iid).to_vec()),
    };
    let opts = EvalOptions {
        cutoffs: vec![VALIDATION_CUTOFF],
        partition: Partition::Validation,
        ..Default::default()
    };
    let dim = cfg.dim;
    let mut best: Option<(f64, usize, SingleDomainModel)> = None;
    let mut log = Vec::new();
    for epoch in 0..cfg.epochs {
        users.shuffle(&mut rng);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for chunk in users.chunks(cfg.batch_size) {
            let n: usize = chunk.iter().map(|&u| targets[u].len()).sum();
            let scale = 1.0 / n as f64;
            store.zero_grads();
            let (vals, mut grads) = store.split();
            let (utab, itab) = (vals.get(uid), vals.get(iid));
            let mut batch_loss = 0.0;
            for &u in chunk {
                let ue = &utab[u * dim..(u + 1) * dim];
                let mut logits = vec![0.0; n_items];
                crate::numerics::linalg::gemm_nt(ue, itab, 1, dim, n_items, &mut logits);
                let lse = log_sum_exp(&logits);
                for &v in &targets[u] {
                    batch_loss -= scale * (logits[v] - lse);
                }
                softmax_in_place(&mut logits);
                let c = targets[u].len() as f64;
                logits.iter_mut().for_each(|g| *g *= scale * c);
                for &v in &targets[u] {
                    logits[v] -= scale;
                }
                let (gu, gi) = grads.pair_mut(uid, iid);
                gemm_nn(&logits, itab, 1, n_items, dim, &mut gu[u * dim..(u + 1) * dim]);
                gemm_tn(&logits, ue, 1, n_items, dim, gi);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Config(format!("single-domain training diverged in epoch {epoch}")));
            }
            adam_step(&mut store, &mut adam)?;
            loss_sum += batch_loss * n as f64;
            count += n;
        }
        let model = snapshot(&store);
        let val = evaluate(split, &model, EvalMode::MultiTarget, &opts)?
            .recall_at(VALIDATION_CUTOFF)
            .expect("requested cutoff");
        log.push(EpochRecord {
            epoch,
            epsilon: f64::NAN,
            train_loss: loss_sum / count.max(1) as f64,
            val_recall: val,
        });
        if best.as_ref().is_none_or(|b| val > b.0) {
            best = Some((val, epoch, model));
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let model = best.map_or_else(|| snapshot(&store), |b| b.2);
    Ok((model, log))
}
