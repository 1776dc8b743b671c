//! Alternative design choices evaluated against the full model.

mod single_domain;

use std::fmt;
use std::str::FromStr;

pub use single_domain::{train_single_domain, SingleDomainConfig, SingleDomainModel};

use crate::data::EvaluationSplit;
use crate::encoder::DomainEncoder;
use crate::inference::{unseen_domains, DomainWeights, DripRecommender, InferenceError, Recommender};
use crate::model::{select_tokens, DripModel};
use crate::training::{train, EpochRecord, MaskPolicy, TrainConfig, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    Drip,
    SingleDomain,
    ManyToOneA,
    ManyToOneB,
    FixedUniform,
    FixedActiveness,
    NoAdaptiveMask,
}

impl VariantKind {
    pub const ALL: [VariantKind; 7] = [
        VariantKind::Drip,
        VariantKind::SingleDomain,
        VariantKind::ManyToOneA,
        VariantKind::ManyToOneB,
        VariantKind::FixedUniform,
        VariantKind::FixedActiveness,
        VariantKind::NoAdaptiveMask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Drip => "drip",
            VariantKind::SingleDomain => "single_domain",
            VariantKind::ManyToOneA => "many_to_one_A",
            VariantKind::ManyToOneB => "many_to_one_B",
            VariantKind::FixedUniform => "fixed_uniform",
            VariantKind::FixedActiveness => "fixed_activeness",
            VariantKind::NoAdaptiveMask => "no_adaptive_mask",
        }
    }

    /// Variants that reuse a trained full model and only change scoring.
    pub fn reuses_drip(self) -> bool {
        matches!(self, VariantKind::FixedUniform | VariantKind::FixedActiveness)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = VariantKind::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Population z-scores; all zeros when the spread is zero.
pub fn z_normalize(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return vec![0.0; scores.len()];
    }
    let std = var.sqrt();
    scores.iter().map(|s| (s - mean) / std).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PostProcessing {
    /// Per-domain z-normalization.
    A,
    /// z-normalization scaled by the domain's share of training interactions.
    B,
}

/// One model per target domain, each trained with that domain always masked.
#[derive(Debug, Clone)]
pub struct ManyToOne {
    pub models: Vec<Option<DripModel>>,
    pub post: PostProcessing,
    pub shares: Vec<f64>,
}

pub struct ManyToOneRecommender<'a> {
    pub inner: &'a ManyToOne,
    pub encoders: &'a [DomainEncoder],
}

impl ManyToOneRecommender<'_> {
    fn logits(&self, user: usize, seen: &[bool], k: usize) -> Result<Vec<f64>, InferenceError> {
        let n = self.encoders[k].num_items();
        let Some(model) = &self.inner.models[k] else {
            return Ok(vec![0.0; n]);
        };
        let view = model.view();
        let enc = view.encode(&select_tokens(self.encoders, user, seen, None)?)?;
        Ok(view.item_logits(k, enc.domain_row(k), self.encoders[k].item_table()))
    }
}

impl Recommender for ManyToOneRecommender<'_> {
    fn num_domains(&self) -> usize {
        self.inner.models.len()
    }

    fn mt_scores(&self, user: usize, seen: &[bool]) -> Result<Vec<(usize, Vec<f64>)>, InferenceError> {
        unseen_domains(seen)
            .into_iter()
            .map(|k| {
                let mut z = z_normalize(&self.logits(user, seen, k)?);
                if self.inner.post == PostProcessing::B {
                    z.iter_mut().for_each(|x| *x *= self.inner.shares[k]);
                }
                Ok((k, z))
            })
            .collect()
    }

    fn st_scores(&self, user: usize, seen: &[bool], domain: usize) -> Result<Vec<f64>, InferenceError> {
        self.logits(user, seen, domain)
    }
}

pub fn train_many_to_one(
    split: &EvaluationSplit,
    encoders: &[DomainEncoder],
    cfg: &TrainConfig,
    post: PostProcessing,
) -> Result<(ManyToOne, Vec<Vec<EpochRecord>>), TrainError> {
    let mut models = Vec::new();
    let mut logs = Vec::new();
    for k in 0..split.train.num_domains() {
        match train(split, encoders, cfg, MaskPolicy::FixedTarget(k)) {
            Ok(out) => {
                models.push(Some(out.model));
                logs.push(out.log);
            }
            Err(TrainError::NoEligibleUsers) | Err(TrainError::Eval(_)) => {
                models.push(None);
                logs.push(Vec::new());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((
        ManyToOne {
            models,
            post,
            shares: split.train.domain_shares(),
        },
        logs,
    ))
}

/// Domain factor replacing `p(d|u)` for the fixed-distribution variants.
pub fn fixed_weights(kind: VariantKind, split: &EvaluationSplit) -> Option<DomainWeights> {
    let k = split.train.num_domains();
    match kind {
        VariantKind::FixedUniform => Some(DomainWeights::Fixed(vec![1.0 / k as f64; k])),
        VariantKind::FixedActiveness => Some(DomainWeights::Fixed(split.train.domain_shares())),
        _ => None,
    }
}

/// A trained variant ready for scoring.
#[derive(Debug, Clone)]
pub enum TrainedVariant {
    Drip { model: DripModel, weights: DomainWeights },
    SingleDomain(SingleDomainModel),
    ManyToOne(ManyToOne),
}

impl TrainedVariant {
    pub fn recommender<'a>(&'a self, encoders: &'a [DomainEncoder]) -> Box<dyn Recommender + 'a> {
        match self {
            TrainedVariant::Drip { model, weights } => {
                Box::new(DripRecommender::new(model, encoders).with_weights(weights.clone()))
            }
            TrainedVariant::SingleDomain(m) => Box::new(m.clone()),
            TrainedVariant::ManyToOne(inner) => Box::new(ManyToOneRecommender { inner, encoders }),
        }
    }
}

/// Trains (or, for the fixed-distribution variants, re-scores `drip`) one variant.
pub fn run_variant(
    kind: VariantKind,
    split: &EvaluationSplit,
    encoders: &[DomainEncoder],
    cfg: &TrainConfig,
    single: &SingleDomainConfig,
    drip: Option<&DripModel>,
) -> Result<TrainedVariant, TrainError> {
    Ok(match kind {
        VariantKind::Drip => TrainedVariant::Drip {
            model: train(split, encoders, cfg, MaskPolicy::Scheduled)?.model,
            weights: DomainWeights::Model,
        },
        VariantKind::NoAdaptiveMask => TrainedVariant::Drip {
            model: train(split, encoders, cfg, MaskPolicy::RandomOnly)?.model,
            weights: DomainWeights::Model,
        },
        VariantKind::FixedUniform | VariantKind::FixedActiveness => {
            let model = match drip {
                Some(m) => m.clone(),
                None => train(split, encoders, cfg, MaskPolicy::Scheduled)?.model,
            };
            TrainedVariant::Drip {
                model,
                weights: fixed_weights(kind, split).expect("fixed variant"),
            }
        }
        VariantKind::SingleDomain => TrainedVariant::SingleDomain(train_single_domain(split, single)?.0),
        VariantKind::ManyToOneA => {
            TrainedVariant::ManyToOne(train_many_to_one(split, encoders, cfg, PostProcessing::A)?.0)
        }
        VariantKind::ManyToOneB => {
            TrainedVariant::ManyToOne(train_many_to_one(split, encoders, cfg, PostProcessing::B)?.0)
        }
    })
}
