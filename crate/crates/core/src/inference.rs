//! Ranking items from a user's unseen domains.
//!
//! Multi-target (MT) ranking scores each candidate by `p(v|u,d_k) · p(d_k|u)`
//! and merges every unseen domain into one list. Single-target (ST) ranking
//! orders one domain by `p(v|u,d_k)` alone.

use std::cmp::Ordering;
use std::io::{self, Write};

use thiserror::Error;

use crate::data::InteractionDataset;
use crate::encoder::DomainEncoder;
use crate::model::{select_tokens, DripModel, ModelError, Token};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("user {0} has no unseen domain")]
    NoUnseenDomain(usize),
    #[error("user {user} has already seen domain {domain}")]
    DomainSeen { user: usize, domain: usize },
    #[error("domain {0} is out of range")]
    UnknownDomain(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    pub domain: usize,
    pub item: usize,
    pub score: f64,
}

/// Entries in non-increasing score order; ties by `(domain, item)` ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, k: usize) -> &[RankedEntry] {
        &self.entries[..k.min(self.entries.len())]
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.iter().map(|e| (e.domain, e.item))
    }
}

fn entry_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.domain.cmp(&b.domain))
        .then(a.item.cmp(&b.item))
}

/// Sorts per-domain score vectors into one list and keeps the best `n`.
pub fn rank(per_domain: Vec<(usize, Vec<f64>)>, n: usize) -> RankedList {
    let mut entries: Vec<RankedEntry> = per_domain
        .into_iter()
        .flat_map(|(domain, scores)| {
            scores
                .into_iter()
                .enumerate()
                .map(move |(item, score)| RankedEntry { domain, item, score })
        })
        .collect();
    if n < entries.len() {
        entries.select_nth_unstable_by(n, entry_order);
        entries.truncate(n);
    }
    entries.sort_unstable_by(entry_order);
    RankedList { entries }
}

/// Anything that can score the candidates of an unseen domain.
pub trait Recommender {
    fn num_domains(&self) -> usize;

    /// MT scores for every item of every unseen domain of `user`.
    fn mt_scores(&self, user: usize, seen: &[bool]) -> Result<Vec<(usize, Vec<f64>)>, InferenceError>;

    /// ST scores for every item of `domain`.
    fn st_scores(&self, user: usize, seen: &[bool], domain: usize) -> Result<Vec<f64>, InferenceError>;
}

pub fn unseen_domains(seen: &[bool]) -> Vec<usize> {
    seen.iter().enumerate().filter(|(_, s)| !**s).map(|(k, _)| k).collect()
}

pub fn recommend_mt(
    rec: &dyn Recommender,
    user: usize,
    seen: &[bool],
    n: usize,
) -> Result<RankedList, InferenceError> {
    if seen.iter().all(|s| *s) {
        return Err(InferenceError::NoUnseenDomain(user));
    }
    Ok(rank(rec.mt_scores(user, seen)?, n))
}

pub fn recommend_st(
    rec: &dyn Recommender,
    user: usize,
    seen: &[bool],
    domain: usize,
    n: usize,
) -> Result<RankedList, InferenceError> {
    match seen.get(domain) {
        None => Err(InferenceError::UnknownDomain(domain)),
        Some(true) => Err(InferenceError::DomainSeen { user, domain }),
        Some(false) => Ok(rank(vec![(domain, rec.st_scores(user, seen, domain)?)], n)),
    }
}

/// Source of the domain factor in MT scores.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainWeights {
    /// `p(d|u)` from the domain head.
    Model,
    /// The same weights for every user, e.g. uniform or interaction shares.
    Fixed(Vec<f64>),
}

/// The trained model plus frozen encoders.
pub struct DripRecommender<'a> {
    pub model: &'a DripModel,
    pub encoders: &'a [DomainEncoder],
    pub weights: DomainWeights,
}

impl<'a> DripRecommender<'a> {
    pub fn new(model: &'a DripModel, encoders: &'a [DomainEncoder]) -> Self {
        Self {
            model,
            encoders,
            weights: DomainWeights::Model,
        }
    }

    pub fn with_weights(mut self, weights: DomainWeights) -> Self {
        self.weights = weights;
        self
    }

    fn tokens(&self, user: usize, seen: &[bool]) -> Result<Vec<Token<'a>>, InferenceError> {
        Ok(select_tokens(self.encoders, user, seen, None)?)
    }
}

impl Recommender for DripRecommender<'_> {
    fn num_domains(&self) -> usize {
        self.model.config().num_domains
    }

    fn mt_scores(&self, user: usize, seen: &[bool]) -> Result<Vec<(usize, Vec<f64>)>, InferenceError> {
        let view = self.model.view();
        let enc = view.encode(&self.tokens(user, seen)?)?;
        let weights = match &self.weights {
            DomainWeights::Model => view.domain_preference(enc.summary()),
            DomainWeights::Fixed(w) => w.clone(),
        };
        unseen_domains(seen)
            .into_iter()
            .map(|k| {
                let mut p = view.item_preference(k, enc.domain_row(k), &self.encoders[k])?;
                p.iter_mut().for_each(|x| *x *= weights[k]);
                Ok((k, p))
            })
            .collect()
    }

    fn st_scores(&self, user: usize, seen: &[bool], domain: usize) -> Result<Vec<f64>, InferenceError> {
        let view = self.model.view();
        let enc = view.encode(&self.tokens(user, seen)?)?;
        Ok(view.item_preference(domain, enc.domain_row(domain), &self.encoders[domain])?)
    }
}

/// Writes `user_id<TAB>rank<TAB>item_id<TAB>domain_id<TAB>score` rows, rank from 1.
pub fn write_recommendations<W: Write>(
    mut out: W,
    ds: &InteractionDataset,
    user: usize,
    list: &RankedList,
) -> io::Result<()> {
    for (r, e) in list.entries.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:e}",
            ds.user_id(user),
            r + 1,
            ds.item_id(e.domain, e.item),
            ds.domain_id(e.domain),
            e.score
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Table {
        domain_factor: Vec<f64>,
        items: Vec<Vec<f64>>,
    }

    impl Recommender for Table {
        fn num_domains(&self) -> usize {
            self.items.len()
        }
        fn mt_scores(&self, _: usize, seen: &[bool]) -> Result<Vec<(usize, Vec<f64>)>, InferenceError> {
            Ok(unseen_domains(seen)
                .into_iter()
                .map(|k| (k, self.items[k].iter().map(|p| p * self.domain_factor[k]).collect()))
                .collect())
        }
        fn st_scores(&self, _: usize, _: &[bool], k: usize) -> Result<Vec<f64>, InferenceError> {
            Ok(self.items[k].clone())
        }
    }

    fn table() -> Table {
        Table {
            domain_factor: vec![0.5, 0.3, 0.2],
            items: vec![vec![0.6, 0.4], vec![0.5, 0.25, 0.25], vec![0.9, 0.1]],
        }
    }

    #[test]
    fn mt_merges_unseen_domains_with_tie_break() {
        let list = recommend_mt(&table(), 0, &[true, false, false], 10).unwrap();
        let got: Vec<_> = list.keys().collect();
        // scores: (1,0)=.15 (1,1)=.075 (1,2)=.075 (2,0)=.18 (2,1)=.02
        assert_eq!(got, vec![(2, 0), (1, 0), (1, 1), (1, 2), (2, 1)]);
        assert!(list.entries.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn truncation_keeps_the_best() {
        let full = recommend_mt(&table(), 0, &[false, false, false], 100).unwrap();
        assert_eq!(full.len(), 7);
        for n in 0..=7 {
            let part = recommend_mt(&table(), 0, &[false, false, false], n).unwrap();
            assert_eq!(part.entries, full.entries[..n]);
        }
    }

    #[test]
    fn st_requires_an_unseen_target() {
        let t = table();
        assert!(matches!(
            recommend_st(&t, 3, &[true, false, true], 0, 5),
            Err(InferenceError::DomainSeen { user: 3, domain: 0 })
        ));
        assert!(matches!(
            recommend_mt(&t, 3, &[true, true, true], 5),
            Err(InferenceError::NoUnseenDomain(3))
        ));
        let st = recommend_st(&t, 3, &[true, false, true], 1, 3).unwrap();
        assert_eq!(st.keys().collect::<Vec<_>>(), vec![(1, 0), (1, 1), (1, 2)]);
    }

    #[test]
    fn single_unseen_domain_mt_equals_st() {
        let t = table();
        let seen = [true, true, false];
        let mt: Vec<_> = recommend_mt(&t, 0, &seen, 10).unwrap().keys().collect();
        let st: Vec<_> = recommend_st(&t, 0, &seen, 2, 10).unwrap().keys().collect();
        assert_eq!(mt, st);
    }

    #[test]
    fn dump_format() {
        let mut b = crate::data::DatasetBuilder::new();
        b.push("alice", "book1", "books").unwrap();
        b.push("alice", "song1", "music").unwrap();
        let ds = b.finish().unwrap();
        let list = RankedList {
            entries: vec![RankedEntry {
                domain: 1,
                item: 0,
                score: 0.25,
            }],
        };
        let mut buf = Vec::new();
        write_recommendations(&mut buf, &ds, 0, &list).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "alice\t1\tsong1\tmusic\t2.5e-1\n");
    }
}
