use std::collections::HashMap;

use super::DataError;

/// One observed `(user, domain, item)` triple; `item` indexes the domain's own vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interaction {
    pub user: usize,
    pub domain: usize,
    pub item: usize,
}

/// Implicit-feedback interactions over `K` domains with disjoint item sets.
///
/// Holds the sparse interaction matrix as triples, the dense user×domain
/// seen matrix `G` and per-user interaction counts.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    domain_ids: Vec<String>,
    user_ids: Vec<String>,
    item_ids: Vec<Vec<String>>,
    interactions: Vec<Interaction>,
    seen: Vec<bool>,
    counts: Vec<usize>,
    by_user_domain: Vec<Vec<usize>>,
}

impl InteractionDataset {
    /// Validates and indexes a dataset from dense parts.
    pub fn from_parts(
        domain_ids: Vec<String>,
        user_ids: Vec<String>,
        item_ids: Vec<Vec<String>>,
        interactions: Vec<Interaction>,
    ) -> Result<Self, DataError> {
        if interactions.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let k = domain_ids.len();
        if item_ids.len() != k {
            return Err(DataError::Inconsistent(format!(
                "{} domains but {} item vocabularies",
                k,
                item_ids.len()
            )));
        }
        let mut owner: HashMap<&str, usize> = HashMap::new();
        for (d, items) in item_ids.iter().enumerate() {
            for item in items {
                if let Some(prev) = owner.insert(item.as_str(), d) {
                    return Err(DataError::ItemInTwoDomains {
                        item: item.clone(),
                        first: domain_ids[prev].clone(),
                        second: domain_ids[d].clone(),
                    });
                }
            }
        }
        let n_users = user_ids.len();
        let mut seen = vec![false; n_users * k];
        let mut counts = vec![0usize; n_users];
        let mut by_user_domain = vec![Vec::new(); n_users * k];
        for it in &interactions {
            if it.user >= n_users || it.domain >= k || it.item >= item_ids[it.domain].len() {
                return Err(DataError::Inconsistent(format!(
                    "interaction {it:?} out of range"
                )));
            }
            seen[it.user * k + it.domain] = true;
            counts[it.user] += 1;
            by_user_domain[it.user * k + it.domain].push(it.item);
        }
        for (cell, items) in by_user_domain.iter_mut().enumerate() {
            items.sort_unstable();
            if let Some(w) = items.windows(2).find(|w| w[0] == w[1]) {
                let (u, d) = (cell / k, cell % k);
                return Err(DataError::DuplicateInteraction {
                    user: user_ids[u].clone(),
                    item: item_ids[d][w[0]].clone(),
                });
            }
        }
        Ok(Self {
            domain_ids,
            user_ids,
            item_ids,
            interactions,
            seen,
            counts,
            by_user_domain,
        })
    }

    pub fn num_domains(&self) -> usize {
        self.domain_ids.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self, domain: usize) -> usize {
        self.item_ids[domain].len()
    }

    pub fn total_items(&self) -> usize {
        self.item_ids.iter().map(Vec::len).sum()
    }

    pub fn num_interactions(&self) -> usize {
        self.interactions.len()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn domain_id(&self, domain: usize) -> &str {
        &self.domain_ids[domain]
    }

    pub fn domain_ids(&self) -> &[String] {
        &self.domain_ids
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.user_ids[user]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_id(&self, domain: usize, item: usize) -> &str {
        &self.item_ids[domain][item]
    }

    pub fn item_ids(&self, domain: usize) -> &[String] {
        &self.item_ids[domain]
    }

    /// `G[u][k]`.
    pub fn seen(&self, user: usize, domain: usize) -> bool {
        self.seen[user * self.num_domains() + domain]
    }

    /// Row `u` of `G`.
    pub fn seen_row(&self, user: usize) -> &[bool] {
        let k = self.num_domains();
        &self.seen[user * k..(user + 1) * k]
    }

    pub fn seen_domains(&self, user: usize) -> Vec<usize> {
        (0..self.num_domains())
            .filter(|&d| self.seen(user, d))
            .collect()
    }

    /// Users who interacted with at least two domains.
    pub fn is_overlapping(&self, user: usize) -> bool {
        self.seen_row(user).iter().filter(|&&s| s).count() >= 2
    }

    /// `N_u`.
    pub fn user_count(&self, user: usize) -> usize {
        self.counts[user]
    }

    /// Sorted items user `u` interacted with in `domain`.
    pub fn items(&self, user: usize, domain: usize) -> &[usize] {
        &self.by_user_domain[user * self.num_domains() + domain]
    }

    /// Interaction count per domain.
    pub fn domain_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_domains()];
        for it in &self.interactions {
            c[it.domain] += 1;
        }
        c
    }

    /// Share of all interactions falling in each domain.
    pub fn domain_shares(&self) -> Vec<f64> {
        let total = self.interactions.len() as f64;
        self.domain_counts()
            .into_iter()
            .map(|c| c as f64 / total)
            .collect()
    }

    /// Users with at least one interaction in `domain`.
    pub fn users_in_domain(&self, domain: usize) -> Vec<usize> {
        (0..self.num_users())
            .filter(|&u| self.seen(u, domain))
            .collect()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_ids.iter().position(|u| u == id)
    }

    pub fn domain_index(&self, id: &str) -> Option<usize> {
        self.domain_ids.iter().position(|d| d == id)
    }

    /// Same index spaces, keeping only interactions accepted by `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&Interaction) -> bool) -> Result<Self, DataError> {
        let kept = self.interactions.iter().copied().filter(|i| keep(i)).collect();
        Self::from_parts(
            self.domain_ids.clone(),
            self.user_ids.clone(),
            self.item_ids.clone(),
            kept,
        )
    }

    /// Keeps only interactions accepted by `keep` and re-densifies every index
    /// space (domains, users, items) in first-appearance order.
    pub fn compact(&self, mut keep: impl FnMut(&Interaction) -> bool) -> Result<Self, DataError> {
        let mut builder = DatasetBuilder::new();
        for it in self.interactions.iter().filter(|i| keep(i)) {
            builder.push(
                &self.user_ids[it.user],
                &self.item_ids[it.domain][it.item],
                &self.domain_ids[it.domain],
            )?;
        }
        builder.finish()
    }
}

/// Assigns dense indices in first-appearance order.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    domain_ids: Vec<String>,
    user_ids: Vec<String>,
    item_ids: Vec<Vec<String>>,
    domains: HashMap<String, usize>,
    users: HashMap<String, usize>,
    items: HashMap<String, (usize, usize)>,
    seen: std::collections::HashSet<(usize, usize, usize)>,
    interactions: Vec<Interaction>,
    duplicates: usize,
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a triple. Repeated triples are dropped and counted.
    pub fn push(&mut self, user: &str, item: &str, domain: &str) -> Result<(), DataError> {
        let d = match self.domains.get(domain) {
            Some(&d) => d,
            None => {
                let d = self.domain_ids.len();
                self.domains.insert(domain.to_string(), d);
                self.domain_ids.push(domain.to_string());
                self.item_ids.push(Vec::new());
                d
            }
        };
        let u = match self.users.get(user) {
            Some(&u) => u,
            None => {
                let u = self.user_ids.len();
                self.users.insert(user.to_string(), u);
                self.user_ids.push(user.to_string());
                u
            }
        };
        let v = match self.items.get(item) {
            Some(&(owner, v)) if owner == d => v,
            Some(&(owner, _)) => {
                return Err(DataError::ItemInTwoDomains {
                    item: item.to_string(),
                    first: self.domain_ids[owner].clone(),
                    second: domain.to_string(),
                })
            }
            None => {
                let v = self.item_ids[d].len();
                self.items.insert(item.to_string(), (d, v));
                self.item_ids[d].push(item.to_string());
                v
            }
        };
        if self.seen.insert((u, d, v)) {
            self.interactions.push(Interaction {
                user: u,
                domain: d,
                item: v,
            });
        } else {
            self.duplicates += 1;
        }
        Ok(())
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn finish(self) -> Result<InteractionDataset, DataError> {
        InteractionDataset::from_parts(self.domain_ids, self.user_ids, self.item_ids, self.interactions)
    }
}
