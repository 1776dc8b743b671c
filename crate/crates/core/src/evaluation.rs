//! Full-ranking metrics over held-out unseen-domain interactions.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::data::{EvaluationSplit, Partition};
use crate::inference::{recommend_mt, recommend_st, unseen_domains, InferenceError, Recommender};

pub const DEFAULT_CUTOFFS: [usize; 2] = [20, 50];
pub const KLD_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no qualifying users to evaluate")]
    NoUsers,
    #[error("empty ranking")]
    EmptyRanking,
    #[error("reference distribution has {p} entries for {support} domains")]
    SupportMismatch { p: usize, support: usize },
    #[error("cutoffs must be positive")]
    BadCutoff,
    #[error("malformed record: {0}")]
    Record(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

type Key = (usize, usize);

/// `|top-K ∩ truth| / |truth|`; `None` for an empty truth set.
pub fn recall_at_k(ranked: &[Key], truth: &HashSet<Key>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let hits = ranked.iter().take(k).filter(|x| truth.contains(x)).count();
    Some(hits as f64 / truth.len() as f64)
}

/// Binary-relevance NDCG with gain `1 / log2(rank + 1)`.
pub fn ndcg_at_k(ranked: &[Key], truth: &HashSet<Key>, k: usize) -> Option<f64> {
    if truth.is_empty() {
        return None;
    }
    let gain = |r: usize| 1.0 / ((r + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, x)| truth.contains(x))
        .map(|(r, _)| gain(r))
        .sum();
    let idcg: f64 = (0..k.min(truth.len())).map(gain).sum();
    Some(dcg / idcg)
}

/// Smoothed domain frequencies of the top-`k` entries over `support`.
pub fn domain_frequencies(ranked: &[Key], support: &[usize], k: usize) -> Result<Vec<f64>, EvalError> {
    let top = &ranked[..k.min(ranked.len())];
    if top.is_empty() {
        return Err(EvalError::EmptyRanking);
    }
    let mut q: Vec<f64> = support
        .iter()
        .map(|d| top.iter().filter(|(dom, _)| dom == d).count() as f64 / top.len() as f64 + KLD_SMOOTHING)
        .collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= total);
    Ok(q)
}

/// `Σ p_i ln(p_i / q_i)`, skipping `p_i = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

/// KLD between the reference distribution `p` (indexed like `support`) and
/// the domain distribution of the top-`k` list.
pub fn kld_at_k(ranked: &[Key], p: &[f64], support: &[usize], k: usize) -> Result<f64, EvalError> {
    if p.len() != support.len() {
        return Err(EvalError::SupportMismatch {
            p: p.len(),
            support: support.len(),
        });
    }
    Ok(kl_divergence(p, &domain_frequencies(ranked, support, k)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    MultiTarget,
    SingleTarget(usize),
}

/// Which interactions define the reference domain distribution for KLD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KldReference {
    /// Held-out interactions, over the user's unseen domains.
    #[default]
    HeldOut,
    /// Every interaction of the user, over all domains.
    FullHistory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    pub partition: Partition,
    pub kld_reference: KldReference,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cutoffs: DEFAULT_CUTOFFS.to_vec(),
            partition: Partition::Test,
            kld_reference: KldReference::HeldOut,
        }
    }
}

/// Mean metrics over the qualifying users of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `mt`, or the target domain's id for single-target reports.
    pub scope: String,
    pub users: usize,
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    /// Multi-target only.
    pub kld: BTreeMap<usize, f64>,
}

impl MetricsReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ndcg.get(&k).copied()
    }

    pub fn kld_at(&self, k: usize) -> Option<f64> {
        self.kld.get(&k).copied()
    }
}

fn reference_distribution(
    split: &EvaluationSplit,
    user: usize,
    seen: &[bool],
    reference: KldReference,
) -> (Vec<usize>, Vec<f64>) {
    let k = seen.len();
    let mut counts = vec![0.0; k];
    for &(d, _) in &split.held_out[user] {
        counts[d] += 1.0;
    }
    let support = match reference {
        KldReference::HeldOut => unseen_domains(seen),
        KldReference::FullHistory => {
            for (d, c) in counts.iter_mut().enumerate() {
                *c += split.train.items(user, d).len() as f64;
            }
            (0..k).collect()
        }
    };
    let total: f64 = support.iter().map(|&d| counts[d]).sum();
    let p = support.iter().map(|&d| counts[d] / total).collect();
    (support, p)
}

pub fn evaluate(
    split: &EvaluationSplit,
    rec: &dyn Recommender,
    mode: EvalMode,
    opts: &EvalOptions,
) -> Result<MetricsReport, EvalError> {
    if opts.cutoffs.is_empty() || opts.cutoffs.contains(&0) {
        return Err(EvalError::BadCutoff);
    }
    let depth = *opts.cutoffs.iter().max().expect("non-empty");
    let mut recall = vec![0.0; opts.cutoffs.len()];
    let mut ndcg = vec![0.0; opts.cutoffs.len()];
    let mut kld = vec![0.0; opts.cutoffs.len()];
    let mut users = 0usize;
    for &u in split.users(opts.partition) {
        let seen = split.train.seen_row(u);
        let (list, truth): (_, HashSet<Key>) = match mode {
            EvalMode::MultiTarget => {
                if split.held_out[u].is_empty() {
                    continue;
                }
                (recommend_mt(rec, u, seen, depth)?, split.held_out[u].iter().copied().collect())
            }
            EvalMode::SingleTarget(k) => {
                if !split.hidden[u].contains(&k) {
                    continue;
                }
                let truth: HashSet<Key> = split.held_out_in(u, k).into_iter().map(|v| (k, v)).collect();
                if truth.is_empty() {
                    continue;
                }
                (recommend_st(rec, u, seen, k, depth)?, truth)
            }
        };
        let keys: Vec<Key> = list.keys().collect();
        users += 1;
        for (i, &c) in opts.cutoffs.iter().enumerate() {
            recall[i] += recall_at_k(&keys, &truth, c).expect("non-empty truth");
            ndcg[i] += ndcg_at_k(&keys, &truth, c).expect("non-empty truth");
        }
        if mode == EvalMode::MultiTarget {
            let (support, p) = reference_distribution(split, u, seen, opts.kld_reference);
            for (i, &c) in opts.cutoffs.iter().enumerate() {
                kld[i] += kld_at_k(&keys, &p, &support, c)?;
            }
        }
    }
    if users == 0 {
        return Err(EvalError::NoUsers);
    }
    let n = users as f64;
    let table = |v: &[f64]| opts.cutoffs.iter().zip(v).map(|(&c, x)| (c, x / n)).collect();
    Ok(MetricsReport {
        scope: match mode {
            EvalMode::MultiTarget => "mt".to_string(),
            EvalMode::SingleTarget(k) => split.train.domain_id(k).to_string(),
        },
        users,
        recall: table(&recall),
        ndcg: table(&ndcg),
        kld: if mode == EvalMode::MultiTarget { table(&kld) } else { BTreeMap::new() },
    })
}

/// MT metrics plus one ST report per domain that has qualifying users.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub mt: MetricsReport,
    pub st: Vec<MetricsReport>,
}

pub fn evaluate_all(
    split: &EvaluationSplit,
    rec: &dyn Recommender,
    opts: &EvalOptions,
) -> Result<EvaluationReport, EvalError> {
    let mt = evaluate(split, rec, EvalMode::MultiTarget, opts)?;
    let mut st = Vec::new();
    for k in 0..split.train.num_domains() {
        match evaluate(split, rec, EvalMode::SingleTarget(k), opts) {
            Ok(r) => st.push(r),
            Err(EvalError::NoUsers) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(EvaluationReport { mt, st })
}

impl EvaluationReport {
    /// Flat `key → value` records, e.g. `mt.recall@20`, `st.books.ndcg@50`.
    pub fn to_records(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |r: &MetricsReport, prefix: String| {
            out.push((format!("{prefix}.users"), r.users.to_string()));
            for (name, table) in [("recall", &r.recall), ("ndcg", &r.ndcg), ("kld", &r.kld)] {
                for (c, v) in table {
                    out.push((format!("{prefix}.{name}@{c}"), format!("{v:?}")));
                }
            }
        };
        push(&self.mt, "mt".into());
        for r in &self.st {
            push(r, format!("st.{}", r.scope));
        }
        out
    }

    pub fn from_records(records: &[(String, String)]) -> Result<Self, EvalError> {
        let bad = |m: String| EvalError::Record(m);
        let mut reports: Vec<MetricsReport> = Vec::new();
        for (key, value) in records {
            let (prefix, field) = key.rsplit_once('.').ok_or_else(|| bad(key.clone()))?;
            let scope = match prefix.strip_prefix("st.") {
                Some(s) => s.to_string(),
                None if prefix == "mt" => "mt".to_string(),
                None => return Err(bad(key.clone())),
            };
            let idx = match reports.iter().position(|r| r.scope == scope) {
                Some(i) => i,
                None => {
                    reports.push(MetricsReport {
                        scope,
                        users: 0,
                        recall: BTreeMap::new(),
                        ndcg: BTreeMap::new(),
                        kld: BTreeMap::new(),
                    });
                    reports.len() - 1
                }
            };
            let r = &mut reports[idx];
            if field == "users" {
                r.users = value.parse().map_err(|_| bad(value.clone()))?;
                continue;
            }
            let (name, cutoff) = field.split_once('@').ok_or_else(|| bad(key.clone()))?;
            let cutoff: usize = cutoff.parse().map_err(|_| bad(key.clone()))?;
            let v: f64 = value.parse().map_err(|_| bad(value.clone()))?;
            let table = match name {
                "recall" => &mut r.recall,
                "ndcg" => &mut r.ndcg,
                "kld" => &mut r.kld,
                _ => return Err(bad(key.clone())),
            };
            table.insert(cutoff, v);
        }
        let mt_pos = reports
            .iter()
            .position(|r| r.scope == "mt")
            .ok_or_else(|| bad("missing mt records".into()))?;
        let mt = reports.remove(mt_pos);
        Ok(Self { mt, st: reports })
    }

    /// Human-readable tables, one per metric and cutoff.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let rows: Vec<&MetricsReport> = std::iter::once(&self.mt).chain(&self.st).collect();
        let width = rows.iter().map(|r| r.scope.len()).max().unwrap_or(0).max(6);
        for (title, pick) in [
            ("Recall", (|r: &MetricsReport| &r.recall) as fn(&MetricsReport) -> &BTreeMap<usize, f64>),
            ("NDCG", |r| &r.ndcg),
            ("KLD", |r| &r.kld),
        ] {
            for &c in self.mt.recall.keys() {
                let present: Vec<_> = rows.iter().filter_map(|r| pick(r).get(&c).map(|v| (r, v))).collect();
                if present.is_empty() {
                    continue;
                }
                let _ = writeln!(s, "{title}@{c}");
                let _ = writeln!(s, "{:<width$}  {:>6}  {:>10}", "scope", "users", "value");
                for (r, v) in present {
                    let _ = writeln!(s, "{:<width$}  {:>6}  {:>10.6}", r.scope, r.users, v);
                }
                s.push('\n');
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(keys: &[Key]) -> HashSet<Key> {
        keys.iter().copied().collect()
    }

    #[test]
    fn recall_cases() {
        let ranked: Vec<Key> = (0..30).map(|i| (0, i)).collect();
        assert_eq!(recall_at_k(&ranked, &set(&[(0, 1), (0, 5)]), 20), Some(1.0));
        assert_eq!(recall_at_k(&ranked, &set(&[(1, 1)]), 20), Some(0.0));
        assert_eq!(recall_at_k(&ranked, &set(&[(0, 3), (0, 7), (0, 25), (0, 40)]), 20), Some(0.5));
        assert_eq!(recall_at_k(&ranked, &HashSet::new(), 20), None);
    }

    #[test]
    fn ndcg_cases() {
        let ranked: Vec<Key> = (0..5).map(|i| (0, i)).collect();
        assert_eq!(ndcg_at_k(&ranked, &set(&[(0, 0)]), 3), Some(1.0));
        assert!((ndcg_at_k(&ranked, &set(&[(0, 2)]), 3).unwrap() - 0.5).abs() < 1e-15);
        assert!((ndcg_at_k(&ranked, &set(&[(0, 0), (0, 1), (0, 2)]), 5).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_grow_with_cutoff() {
        let ranked: Vec<Key> = (0..50).map(|i| (i % 3, i)).collect();
        let truth = set(&[(1, 4), (2, 17), (0, 33), (1, 49)]);
        let mut last = (0.0, 0.0);
        for k in 1..=50 {
            let r = recall_at_k(&ranked, &truth, k).unwrap();
            let n = ndcg_at_k(&ranked, &truth, k).unwrap();
            assert!(r >= last.0 && (0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&n));
            last = (r, n);
        }
    }

    #[test]
    fn kld_cases() {
        assert!((kl_divergence(&[0.5, 0.5], &[0.9, 0.1]) - 0.5108).abs() < 1e-4);
        let p = [1.0, 0.0];
        assert!((kl_divergence(&p, &[0.25, 0.75]) - 4f64.ln()).abs() < 1e-15);
        // half the list from each domain
        let ranked: Vec<Key> = (0..10).map(|i| (i % 2 + 3, i)).collect();
        assert!(kld_at_k(&ranked, &[0.5, 0.5], &[3, 4], 10).unwrap().abs() < 1e-12);
        assert!(matches!(kld_at_k(&[], &[1.0], &[0], 5), Err(EvalError::EmptyRanking)));
    }

    #[test]
    fn frequencies_are_smoothed_over_support() {
        let ranked: Vec<Key> = vec![(0, 0), (0, 1)];
        let q = domain_frequencies(&ranked, &[0, 2], 2).unwrap();
        let expected_absent = 1e-6 / (1.0 + 2e-6);
        assert!((q[1] - expected_absent).abs() < 1e-18);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn records_round_trip() {
        let mk = |scope: &str, kld: bool| MetricsReport {
            scope: scope.into(),
            users: 17,
            recall: [(20, 0.1 + 1e-17), (50, 1.0 / 3.0)].into(),
            ndcg: [(20, 0.05), (50, 0.2)].into(),
            kld: if kld { [(20, 0.7), (50, 0.3)].into() } else { BTreeMap::new() },
        };
        let report = EvaluationReport {
            mt: mk("mt", true),
            st: vec![mk("books", false), mk("music", false)],
        };
        let back = EvaluationReport::from_records(&report.to_records()).unwrap();
        assert_eq!(back, report);
        assert!(report.to_text().contains("Recall@20"));
    }
}
