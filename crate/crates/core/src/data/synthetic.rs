//! Synthetic multi-domain interactions with planted domain preferences.
//!
//! Every user belongs to an archetype. The archetype fixes the user's
//! domain-preference vector (each interaction's domain is drawn from it) and a
//! home taste cluster. In each domain the user's active cluster is the home
//! cluster with probability `correlation`, otherwise a uniformly random one, so
//! seen-domain history carries signal about unseen-domain items.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, DatasetBuilder, InteractionDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub num_domains: usize,
    pub num_archetypes: usize,
    pub users_per_archetype: usize,
    /// One probability vector over domains per archetype.
    pub archetype_preferences: Vec<Vec<f64>>,
    pub items_per_domain: usize,
    pub clusters_per_domain: usize,
    /// Probability that a user's per-domain cluster equals the home cluster.
    pub correlation: f64,
    pub interactions_per_user: usize,
    /// Probability that an interaction comes from the active cluster rather
    /// than uniformly from the whole domain.
    pub in_cluster_prob: f64,
    /// Zipf exponent of item popularity inside a cluster.
    pub popularity_exponent: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// The four-domain benchmark: 8 archetypes × 250 users, 400 items per domain.
    ///
    /// Archetype `a` puts most mass on domain `a mod 4` and a secondary domain
    /// that differs between the two archetypes sharing a primary.
    pub fn benchmark(seed: u64) -> Self {
        let k = 4;
        let archetype_preferences = (0..8)
            .map(|a| {
                let primary = a % k;
                let secondary = (primary + 1 + a / k) % k;
                (0..k)
                    .map(|d| {
                        if d == primary {
                            0.55
                        } else if d == secondary {
                            0.3
                        } else {
                            0.075
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            num_domains: k,
            num_archetypes: 8,
            users_per_archetype: 250,
            archetype_preferences,
            items_per_domain: 400,
            clusters_per_domain: 8,
            correlation: 0.8,
            interactions_per_user: 24,
            in_cluster_prob: 0.8,
            popularity_exponent: 0.7,
            seed,
        }
    }

    /// A three-domain configuration small enough for smoke runs.
    pub fn tiny(seed: u64) -> Self {
        Self {
            num_domains: 3,
            num_archetypes: 3,
            users_per_archetype: 40,
            archetype_preferences: vec![
                vec![0.6, 0.3, 0.1],
                vec![0.1, 0.6, 0.3],
                vec![0.3, 0.1, 0.6],
            ],
            items_per_domain: 40,
            clusters_per_domain: 3,
            correlation: 0.8,
            interactions_per_user: 12,
            in_cluster_prob: 0.8,
            popularity_exponent: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Config(m));
        if self.num_domains == 0
            || self.num_archetypes == 0
            || self.users_per_archetype == 0
            || self.items_per_domain == 0
            || self.clusters_per_domain == 0
            || self.interactions_per_user == 0
        {
            return bad("synthetic counts must be positive".into());
        }
        if self.archetype_preferences.len() != self.num_archetypes {
            return bad(format!(
                "{} archetypes but {} preference vectors",
                self.num_archetypes,
                self.archetype_preferences.len()
            ));
        }
        for (a, p) in self.archetype_preferences.iter().enumerate() {
            if p.len() != self.num_domains {
                return bad(format!("archetype {a}: preference vector has {} entries", p.len()));
            }
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("archetype {a}: preferences are not on the simplex"));
            }
        }
        if self.clusters_per_domain > self.items_per_domain {
            return bad("more clusters than items".into());
        }
        for (name, v) in [
            ("correlation", self.correlation),
            ("in_cluster_prob", self.in_cluster_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.interactions_per_user > self.items_per_domain {
            return bad("a user cannot have more interactions than a domain has items".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: InteractionDataset,
    /// Planted domain-preference vector per dataset user.
    pub preferences: Vec<Vec<f64>>,
    pub archetypes: Vec<usize>,
    /// Active cluster per dataset user and domain.
    pub clusters: Vec<Vec<usize>>,
}

/// Cluster of item `j` within its domain.
pub fn item_cluster(item: usize, clusters: usize) -> usize {
    item % clusters
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.clusters_per_domain;
    // members[cluster] in popularity order, with matching Zipf weights
    let members: Vec<Vec<usize>> = (0..c)
        .map(|cl| (0..cfg.items_per_domain).filter(|j| item_cluster(*j, c) == cl).collect())
        .collect();
    let samplers: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| {
            let w: Vec<f64> = (0..m.len())
                .map(|r| 1.0 / ((r + 1) as f64).powf(cfg.popularity_exponent))
                .collect();
            WeightedIndex::new(w).expect("positive weights")
        })
        .collect();
    let domain_samplers: Vec<WeightedIndex<f64>> = cfg
        .archetype_preferences
        .iter()
        .map(|p| WeightedIndex::new(p.clone()).map_err(|e| DataError::Config(e.to_string())))
        .collect::<Result<_, _>>()?;

    let mut builder = DatasetBuilder::new();
    let mut per_user = Vec::new();
    let mut user_no = 0usize;
    for a in 0..cfg.num_archetypes {
        let home = a % c;
        for _ in 0..cfg.users_per_archetype {
            let clusters: Vec<usize> = (0..cfg.num_domains)
                .map(|_| {
                    if rng.random::<f64>() < cfg.correlation {
                        home
                    } else {
                        rng.random_range(0..c)
                    }
                })
                .collect();
            let user = format!("u{user_no}");
            user_no += 1;
            let mut chosen = std::collections::HashSet::new();
            let mut added = 0;
            let mut attempts = 0;
            while added < cfg.interactions_per_user && attempts < cfg.interactions_per_user * 50 {
                attempts += 1;
                let d = domain_samplers[a].sample(&mut rng);
                let item = if rng.random::<f64>() < cfg.in_cluster_prob {
                    let cl = clusters[d];
                    members[cl][samplers[cl].sample(&mut rng)]
                } else {
                    rng.random_range(0..cfg.items_per_domain)
                };
                if chosen.insert((d, item)) {
                    builder.push(&user, &format!("d{d}_i{item}"), &format!("d{d}"))?;
                    added += 1;
                }
            }
            per_user.push((user, a, clusters));
        }
    }
    let dataset = builder.finish()?;
    let mut preferences = vec![Vec::new(); dataset.num_users()];
    let mut archetypes = vec![0; dataset.num_users()];
    let mut cluster_rows = vec![Vec::new(); dataset.num_users()];
    // dataset domain order is first-appearance; map generator domains onto it
    let domain_map: Vec<Option<usize>> = (0..cfg.num_domains)
        .map(|d| dataset.domain_index(&format!("d{d}")))
        .collect();
    for (user, a, clusters) in per_user {
        let Some(u) = dataset.user_index(&user) else { continue };
        let mut pref = vec![0.0; dataset.num_domains()];
        let mut cl = vec![0; dataset.num_domains()];
        for d in 0..cfg.num_domains {
            if let Some(di) = domain_map[d] {
                pref[di] = cfg.archetype_preferences[a][d];
                cl[di] = clusters[d];
            }
        }
        preferences[u] = pref;
        archetypes[u] = a;
        cluster_rows[u] = cl;
    }
    Ok(SyntheticData {
        dataset,
        preferences,
        archetypes,
        clusters: cluster_rows,
    })
}

/// Cluster of an item given its external id `d{domain}_i{item}`.
pub fn cluster_of_item_id(item_id: &str, clusters: usize) -> Option<usize> {
    let idx = item_id.rsplit("_i").next()?.parse::<usize>().ok()?;
    Some(item_cluster(idx, clusters))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_preference_puts_everything_in_one_domain() {
        let mut cfg = SyntheticConfig::tiny(3);
        cfg.archetype_preferences[0] = vec![1.0, 0.0, 0.0];
        let data = generate_synthetic(&cfg).unwrap();
        let ds = &data.dataset;
        let d0 = ds.domain_index("d0").unwrap();
        for it in ds.interactions() {
            if data.archetypes[it.user] == 0 {
                assert_eq!(it.domain, d0);
            }
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let cfg = SyntheticConfig::tiny(17);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.preferences, b.preferences);
    }

    #[test]
    fn preferences_match_archetypes() {
        let cfg = SyntheticConfig::tiny(1);
        let data = generate_synthetic(&cfg).unwrap();
        for u in 0..data.dataset.num_users() {
            let a = data.archetypes[u];
            for d in 0..cfg.num_domains {
                let di = data.dataset.domain_index(&format!("d{d}")).unwrap();
                assert_eq!(data.preferences[u][di], cfg.archetype_preferences[a][d]);
            }
        }
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let mut cfg = SyntheticConfig::tiny(1);
        cfg.archetype_preferences.pop();
        assert!(matches!(generate_synthetic(&cfg), Err(DataError::Config(_))));
        let mut cfg = SyntheticConfig::tiny(1);
        cfg.archetype_preferences[0] = vec![0.5, 0.5];
        assert!(matches!(generate_synthetic(&cfg), Err(DataError::Config(_))));
    }

    #[test]
    fn cluster_parses_from_item_id() {
        assert_eq!(cluster_of_item_id("d2_i13", 4), Some(1));
        assert_eq!(cluster_of_item_id("garbage", 4), None);
    }
}
