//! Masked domain modeling.
//!
//! Each step hides some of a user's seen domains behind the mask token and
//! asks the model to recover both which domains the user interacts with and
//! which items they picked there. Early epochs mask uniformly at rate `ρ`;
//! later epochs increasingly mask in proportion to the model's own domain
//! preferences.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{EvaluationSplit, InteractionDataset, Partition};
use crate::encoder::DomainEncoder;
use crate::evaluation::{evaluate, EvalError, EvalMode, EvalOptions};
use crate::inference::DripRecommender;
use crate::model::{select_tokens, DripModel, ModelConfig, ModelError};
use crate::numerics::linalg::Matrix;
use crate::numerics::ops::{log_sum_exp, softmax_in_place};
use crate::numerics::{adam_step, AdamState, NumericsError};

pub const ADAPTIVE_CLAMP: f64 = 0.95;
pub const MAX_MASK_DRAWS: usize = 10_000;
pub const VALIDATION_CUTOFF: usize = 20;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("batch has no masked interactions")]
    EmptyBatch,
    #[error("no user is eligible for masked training")]
    NoEligibleUsers,
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize, last_good: Box<DripModel> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub rho: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub dropout: f64,
    pub seed: u64,
    pub schedule_floor: f64,
    pub schedule_slope: f64,
    /// Stop after this many epochs without a validation improvement; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            lr: 1e-3,
            weight_decay: 0.0,
            batch_size: 128,
            epochs: 50,
            layers: 2,
            heads: 2,
            width: 64,
            dropout: 0.1,
            seed: 0,
            schedule_floor: 0.5,
            schedule_slope: 0.002,
            patience: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.lr > 0.0) || self.weight_decay < 0.0 {
            return bad("learning rate must be positive and weight decay non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..=1.0).contains(&self.schedule_floor) || self.schedule_slope < 0.0 {
            return bad("schedule floor must lie in [0, 1] and slope be non-negative");
        }
        Ok(())
    }

    pub fn model_config(&self, num_domains: usize, embed_dim: usize) -> ModelConfig {
        ModelConfig {
            num_domains,
            embed_dim,
            width: self.width,
            layers: self.layers,
            heads: self.heads,
            dropout: self.dropout,
        }
    }

    pub fn epsilon(&self, epoch: usize) -> f64 {
        epsilon_schedule(epoch, self.schedule_floor, self.schedule_slope)
    }
}

/// `ε_i = max(floor, 1 − slope · i)`.
pub fn epsilon_schedule(epoch: usize, floor: f64, slope: f64) -> f64 {
    (1.0 - slope * epoch as f64).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    Random,
    Adaptive,
}

/// Random mode with probability `epsilon`, adaptive otherwise.
pub fn draw_mode<R: Rng + ?Sized>(epsilon: f64, rng: &mut R) -> MaskMode {
    if rng.random::<f64>() < epsilon {
        MaskMode::Random
    } else {
        MaskMode::Adaptive
    }
}

/// Adaptive masking probabilities before clamping: `ρ·|S|·p_k / Σ_S p`, 0 off `S`.
pub fn adaptive_probabilities_unclamped(seen: &[bool], prefs: &[f64], rho: f64) -> Vec<f64> {
    let count = seen.iter().filter(|s| **s).count() as f64;
    let mass: f64 = seen.iter().zip(prefs).filter(|(s, _)| **s).map(|(_, p)| p).sum();
    seen.iter()
        .zip(prefs)
        .map(|(&s, &p)| {
            if !s {
                0.0
            } else if mass > 0.0 {
                rho * count * p / mass
            } else {
                rho
            }
        })
        .collect()
}

/// Per-domain masking probabilities for one user; zero for unseen domains.
pub fn mask_probabilities(seen: &[bool], prefs: &[f64], rho: f64, mode: MaskMode) -> Vec<f64> {
    match mode {
        MaskMode::Random => seen.iter().map(|&s| if s { rho } else { 0.0 }).collect(),
        MaskMode::Adaptive => adaptive_probabilities_unclamped(seen, prefs, rho)
            .into_iter()
            .map(|p| p.min(ADAPTIVE_CLAMP))
            .collect(),
    }
}

/// One independent Bernoulli draw per domain, without the validity filter.
pub fn draw_mask_once<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<bool> {
    probs.iter().map(|&p| p > 0.0 && rng.random::<f64>() < p).collect()
}

/// A sampled training mask for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    /// `true` for masked seen domains; always `false` on unseen domains.
    pub mask: Vec<bool>,
    pub mode: MaskMode,
    pub probabilities: Vec<f64>,
    pub draws: usize,
}

pub fn is_valid_mask(seen: &[bool], mask: &[bool]) -> bool {
    let masked = seen.iter().zip(mask).filter(|(s, m)| **s && **m).count();
    let unmasked = seen.iter().zip(mask).filter(|(s, m)| **s && !**m).count();
    let stray = seen.iter().zip(mask).any(|(s, m)| !*s && *m);
    masked >= 1 && unmasked >= 1 && !stray
}

/// Draws a mask in the given mode, redrawing until at least one seen domain
/// is masked and one is not. Returns `None` for users with fewer than two
/// seen domains.
pub fn sample_mask_with_mode<R: Rng + ?Sized>(
    seen: &[bool],
    prefs: &[f64],
    rho: f64,
    mode: MaskMode,
    rng: &mut R,
) -> Option<MaskPlan> {
    let seen_domains: Vec<usize> = (0..seen.len()).filter(|&k| seen[k]).collect();
    if seen_domains.len() < 2 {
        return None;
    }
    let probabilities = mask_probabilities(seen, prefs, rho, mode);
    for draws in 1..=MAX_MASK_DRAWS {
        let mask = draw_mask_once(&probabilities, rng);
        if is_valid_mask(seen, &mask) {
            return Some(MaskPlan {
                mask,
                mode,
                probabilities,
                draws,
            });
        }
    }
    // Degenerate probabilities: mask exactly one seen domain, chosen uniformly.
    let mut mask = vec![false; seen.len()];
    mask[*seen_domains.choose(rng).expect("two seen domains")] = true;
    Some(MaskPlan {
        mask,
        mode,
        probabilities,
        draws: MAX_MASK_DRAWS,
    })
}

pub fn sample_mask<R: Rng + ?Sized>(
    seen: &[bool],
    prefs: &[f64],
    rho: f64,
    epsilon: f64,
    rng: &mut R,
) -> Option<MaskPlan> {
    let mode = draw_mode(epsilon, rng);
    sample_mask_with_mode(seen, prefs, rho, mode, rng)
}

/// One user with a concrete input mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedUser {
    pub user: usize,
    pub seen: Vec<bool>,
    pub mask: Vec<bool>,
}

impl MaskedUser {
    /// `(domain, item)` targets: interactions in masked seen domains.
    pub fn loss_terms(&self, train: &InteractionDataset) -> Vec<(usize, usize)> {
        (0..self.seen.len())
            .filter(|&k| self.seen[k] && self.mask[k])
            .flat_map(|k| train.items(self.user, k).iter().map(move |&v| (k, v)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub loss: f64,
    pub triples: usize,
}

/// Mean negative log-likelihood over the batch's masked `(u, k, v)` triples,
/// with gradients left in the model's store (zeroed first).
///
/// `domain_term` adds `−log p(d_k|u)` to every triple. Dropout is active when
/// `rng` is given.
pub fn compute_loss<R: Rng + ?Sized>(
    model: &mut DripModel,
    encoders: &[DomainEncoder],
    train: &InteractionDataset,
    batch: &[MaskedUser],
    domain_term: bool,
    mut rng: Option<&mut R>,
) -> Result<BatchLoss, TrainError> {
    let k_domains = model.config().num_domains;
    let width = model.config().width;
    let triples: usize = batch
        .iter()
        .map(|ex| {
            (0..k_domains)
                .filter(|&k| ex.seen[k] && ex.mask[k])
                .map(|k| train.items(ex.user, k).len())
                .sum::<usize>()
        })
        .sum();
    if triples == 0 {
        return Err(TrainError::EmptyBatch);
    }
    let scale = 1.0 / triples as f64;
    model.store_mut().zero_grads();
    let (view, mut grads) = model.view_and_grads();
    let mut loss = 0.0;
    for ex in batch {
        let counts: Vec<f64> = (0..k_domains)
            .map(|k| {
                if ex.seen[k] && ex.mask[k] {
                    train.items(ex.user, k).len() as f64
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = counts.iter().sum();
        if total == 0.0 {
            continue;
        }
        let tokens = select_tokens(encoders, ex.user, &ex.seen, Some(&ex.mask))?;
        let h0 = view.build_input(&tokens);
        let enc = view.forward(&h0, rng.as_deref_mut())?;
        let mut d_out = Matrix::zeros(k_domains + 1, width);

        if domain_term {
            let mut p = view.domain_logits(enc.summary());
            let lse = log_sum_exp(&p);
            for (k, &c) in counts.iter().enumerate() {
                loss -= scale * c * (p[k] - lse);
            }
            softmax_in_place(&mut p);
            let dz: Vec<f64> = p.iter().zip(&counts).map(|(pk, c)| scale * (total * pk - c)).collect();
            let dh = view.domain_head_backward(&mut grads, enc.summary(), &dz);
            d_out.row_mut(0).copy_from_slice(&dh);
        }
        for (k, &c) in counts.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let items = encoders[k].item_table();
            let row = enc.domain_row(k);
            let mut logits = view.item_logits(k, row, items);
            let lse = log_sum_exp(&logits);
            let targets = train.items(ex.user, k);
            for &v in targets {
                loss -= scale * (logits[v] - lse);
            }
            softmax_in_place(&mut logits);
            for g in logits.iter_mut() {
                *g *= scale * c;
            }
            for &v in targets {
                logits[v] -= scale;
            }
            let dh = view.item_head_backward(&mut grads, k, row, items, &logits);
            d_out.row_mut(k + 1).copy_from_slice(&dh);
        }
        view.backward(&mut grads, &tokens, &enc, d_out);
    }
    Ok(BatchLoss { loss, triples })
}

/// How training masks are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskPolicy {
    /// Random → adaptive mixture following the ε schedule.
    Scheduled,
    /// Always random masking (`ε ≡ 1`).
    RandomOnly,
    /// Always mask exactly this domain; item loss only.
    FixedTarget(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub epsilon: f64,
    pub train_loss: f64,
    pub val_recall: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation recall.
    pub model: DripModel,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Users that produce a valid masked example under `policy`.
pub fn eligible_users(train: &InteractionDataset, policy: MaskPolicy) -> Vec<usize> {
    (0..train.num_users())
        .filter(|&u| {
            let seen = train.seen_row(u);
            let count = seen.iter().filter(|s| **s).count();
            match policy {
                MaskPolicy::FixedTarget(k) => seen[k] && count >= 2,
                _ => count >= 2,
            }
        })
        .collect()
}

/// Full training loop with per-epoch validation and best-model selection.
pub fn train(
    split: &EvaluationSplit,
    encoders: &[DomainEncoder],
    cfg: &TrainConfig,
    policy: MaskPolicy,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let ds = &split.train;
    let embed_dim = encoders.first().map_or(0, DomainEncoder::dim);
    let mut model = DripModel::new(cfg.model_config(ds.num_domains(), embed_dim), cfg.seed)?;
    let mut adam = AdamState::new(model.store(), cfg.lr).with_weight_decay(cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut users = eligible_users(ds, policy);
    if users.is_empty() {
        return Err(TrainError::NoEligibleUsers);
    }
    let domain_term = !matches!(policy, MaskPolicy::FixedTarget(_));
    let val_mode = match policy {
        MaskPolicy::FixedTarget(k) => EvalMode::SingleTarget(k),
        _ => EvalMode::MultiTarget,
    };
    let val_opts = EvalOptions {
        cutoffs: vec![VALIDATION_CUTOFF],
        partition: Partition::Validation,
        ..Default::default()
    };

    let mut best: Option<(f64, usize, DripModel)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let epsilon = match policy {
            MaskPolicy::Scheduled => cfg.epsilon(epoch),
            _ => 1.0,
        };
        users.shuffle(&mut rng);
        let (mut loss_sum, mut triple_sum) = (0.0, 0usize);
        for chunk in users.chunks(cfg.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &u in chunk {
                let seen = ds.seen_row(u).to_vec();
                let mask = match policy {
                    MaskPolicy::FixedTarget(k) => (0..seen.len()).map(|d| d == k).collect(),
                    _ => {
                        let mode = draw_mode(epsilon, &mut rng);
                        let prefs = match mode {
                            MaskMode::Random => vec![0.0; seen.len()],
                            MaskMode::Adaptive => {
                                let view = model.view();
                                let tokens = select_tokens(encoders, u, &seen, None)?;
                                view.domain_preference(view.encode(&tokens)?.summary())
                            }
                        };
                        match sample_mask_with_mode(&seen, &prefs, cfg.rho, mode, &mut rng) {
                            Some(plan) => plan.mask,
                            None => continue,
                        }
                    }
                };
                batch.push(MaskedUser { user: u, seen, mask });
            }
            let step = compute_loss(&mut model, encoders, ds, &batch, domain_term, Some(&mut rng));
            let step = match step {
                Ok(s) => s,
                Err(TrainError::EmptyBatch) => continue,
                Err(TrainError::Model(ModelError::NonFinite { .. })) => {
                    return Err(diverged(epoch, best, model));
                }
                Err(e) => return Err(e),
            };
            if !step.loss.is_finite() {
                return Err(diverged(epoch, best, model));
            }
            match adam_step(model.store_mut(), &mut adam) {
                Ok(()) => {}
                Err(NumericsError::NonFiniteGradient { .. }) => return Err(diverged(epoch, best, model)),
                Err(e) => return Err(e.into()),
            }
            loss_sum += step.loss * step.triples as f64;
            triple_sum += step.triples;
        }
        let rec = DripRecommender::new(&model, encoders);
        let val_recall = evaluate(split, &rec, val_mode, &val_opts)?
            .recall_at(VALIDATION_CUTOFF)
            .expect("requested cutoff");
        log.push(EpochRecord {
            epoch,
            epsilon,
            train_loss: if triple_sum > 0 { loss_sum / triple_sum as f64 } else { f64::NAN },
            val_recall,
        });
        if best.as_ref().is_none_or(|(r, _, _)| val_recall > *r) {
            best = Some((val_recall, epoch, model.clone()));
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.1);
        if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, model) = match best {
        Some(b) => b,
        None => (0.0, 0, model),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

fn diverged(epoch: usize, best: Option<(f64, usize, DripModel)>, current: DripModel) -> TrainError {
    TrainError::Diverged {
        epoch,
        last_good: Box::new(best.map_or(current, |b| b.2)),
    }
}
