//! Unseen-domain evaluation split: hide whole domains of overlapping users.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Interaction, InteractionDataset};

pub const DEFAULT_HIDE_PROB: f64 = 0.3;
pub const DEFAULT_VAL_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Validation,
    Test,
}

/// Which evaluation users to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Validation,
    Test,
}

#[derive(Debug, Clone)]
pub struct EvaluationSplit {
    /// Original index spaces with every hidden interaction removed.
    pub train: InteractionDataset,
    /// Sorted hidden domains per user; empty for non-evaluation users.
    pub hidden: Vec<Vec<usize>>,
    /// Hidden `(domain, item)` pairs per user.
    pub held_out: Vec<Vec<(usize, usize)>>,
    pub validation_users: Vec<usize>,
    pub test_users: Vec<usize>,
    pub seed: u64,
    pub hide_prob: f64,
    pub val_fraction: f64,
}

impl EvaluationSplit {
    pub fn users(&self, partition: Partition) -> &[usize] {
        match partition {
            Partition::Validation => &self.validation_users,
            Partition::Test => &self.test_users,
        }
    }

    /// Held-out items of `user` in `domain`.
    pub fn held_out_in(&self, user: usize, domain: usize) -> Vec<usize> {
        self.held_out[user]
            .iter()
            .filter(|(d, _)| *d == domain)
            .map(|(_, v)| *v)
            .collect()
    }

    pub fn held_out_interactions(&self) -> impl Iterator<Item = Interaction> + '_ {
        self.held_out.iter().enumerate().flat_map(|(user, pairs)| {
            pairs.iter().map(move |&(domain, item)| Interaction { user, domain, item })
        })
    }

    pub fn manifest(&self) -> SplitManifest {
        let ds = &self.train;
        let role_of = |u: usize| {
            if self.validation_users.binary_search(&u).is_ok() {
                Role::Validation
            } else {
                Role::Test
            }
        };
        let mut hidden = Vec::new();
        for (u, domains) in self.hidden.iter().enumerate() {
            for &d in domains {
                hidden.push(HiddenEntry {
                    user: ds.user_id(u).to_string(),
                    domain: ds.domain_id(d).to_string(),
                    role: role_of(u),
                });
            }
        }
        SplitManifest {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            seed: self.seed,
            hide_prob: self.hide_prob,
            val_fraction: self.val_fraction,
            num_users: ds.num_users(),
            num_interactions: ds.num_interactions()
                + self.held_out.iter().map(Vec::len).sum::<usize>(),
            hidden,
            tags: BTreeMap::new(),
        }
    }
}

pub const MANIFEST_FORMAT: &str = "drip-split";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenEntry {
    pub user: String,
    pub domain: String,
    pub role: Role,
}

/// Persisted description of a split: enough to rebuild it from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub hide_prob: f64,
    pub val_fraction: f64,
    pub num_users: usize,
    pub num_interactions: usize,
    pub hidden: Vec<HiddenEntry>,
    /// Free-form provenance, e.g. the hash of the generating config.
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl SplitManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let m: SplitManifest =
            serde_json::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(DataError::Manifest(format!(
                "unsupported manifest {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        fs::write(path.as_ref(), self.to_json()).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| DataError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }
}

/// Hides each seen domain of every overlapping user independently with
/// `hide_prob`. Draws that would hide every seen domain are redrawn; users
/// with nothing hidden stay training-only. Users with hidden domains are
/// shuffled and the first `round(n · val_fraction)` become validation users.
pub fn make_mdrau_split(
    ds: &InteractionDataset,
    hide_prob: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<EvaluationSplit, DataError> {
    if !(hide_prob > 0.0 && hide_prob < 1.0) {
        return Err(DataError::Config(format!(
            "hide probability must lie in (0, 1), got {hide_prob}"
        )));
    }
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(DataError::Config(format!(
            "validation fraction must lie in [0, 1], got {val_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hidden = vec![Vec::new(); ds.num_users()];
    let mut any_overlapping = false;
    for (u, slot) in hidden.iter_mut().enumerate() {
        let seen = ds.seen_domains(u);
        if seen.len() < 2 {
            continue;
        }
        any_overlapping = true;
        *slot = loop {
            let pick: Vec<usize> = seen
                .iter()
                .copied()
                .filter(|_| rng.random::<f64>() < hide_prob)
                .collect();
            if pick.len() < seen.len() {
                break pick;
            }
        };
    }
    if !any_overlapping {
        return Err(DataError::Split("dataset has no overlapping users".into()));
    }
    let mut eval_users: Vec<usize> = (0..ds.num_users())
        .filter(|&u| !hidden[u].is_empty())
        .collect();
    eval_users.shuffle(&mut rng);
    let n_val = (eval_users.len() as f64 * val_fraction).round() as usize;
    let mut validation_users = eval_users[..n_val].to_vec();
    let mut test_users = eval_users[n_val..].to_vec();
    validation_users.sort_unstable();
    test_users.sort_unstable();
    if test_users.is_empty() {
        return Err(DataError::Split("no test users: nothing was hidden".into()));
    }
    build_split(ds, hidden, validation_users, test_users, seed, hide_prob, val_fraction)
}

/// Rebuilds a split from its manifest.
pub fn apply_manifest(
    ds: &InteractionDataset,
    manifest: &SplitManifest,
) -> Result<EvaluationSplit, DataError> {
    if manifest.num_users != ds.num_users() || manifest.num_interactions != ds.num_interactions() {
        return Err(DataError::Manifest(
            "manifest was produced from a different dataset".into(),
        ));
    }
    let users: HashMap<&str, usize> = ds
        .user_ids()
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let mut hidden = vec![Vec::new(); ds.num_users()];
    let mut validation_users = Vec::new();
    let mut test_users = Vec::new();
    for entry in &manifest.hidden {
        let u = *users
            .get(entry.user.as_str())
            .ok_or_else(|| DataError::Manifest(format!("unknown user {}", entry.user)))?;
        let d = ds
            .domain_index(&entry.domain)
            .ok_or_else(|| DataError::Manifest(format!("unknown domain {}", entry.domain)))?;
        if !ds.seen(u, d) {
            return Err(DataError::Manifest(format!(
                "user {} has no interactions in {}",
                entry.user, entry.domain
            )));
        }
        if hidden[u].is_empty() {
            match entry.role {
                Role::Validation => validation_users.push(u),
                Role::Test => test_users.push(u),
            }
        }
        hidden[u].push(d);
    }
    for (u, h) in hidden.iter_mut().enumerate() {
        h.sort_unstable();
        h.dedup();
        if !h.is_empty() && h.len() >= ds.seen_domains(u).len() {
            return Err(DataError::Manifest(format!(
                "user {} would have no seen domain left",
                ds.user_id(u)
            )));
        }
    }
    validation_users.sort_unstable();
    test_users.sort_unstable();
    build_split(
        ds,
        hidden,
        validation_users,
        test_users,
        manifest.seed,
        manifest.hide_prob,
        manifest.val_fraction,
    )
}

fn build_split(
    ds: &InteractionDataset,
    hidden: Vec<Vec<usize>>,
    validation_users: Vec<usize>,
    test_users: Vec<usize>,
    seed: u64,
    hide_prob: f64,
    val_fraction: f64,
) -> Result<EvaluationSplit, DataError> {
    let is_hidden = |it: &Interaction| hidden[it.user].binary_search(&it.domain).is_ok();
    let mut held_out = vec![Vec::new(); ds.num_users()];
    for it in ds.interactions().iter().filter(|it| is_hidden(it)) {
        held_out[it.user].push((it.domain, it.item));
    }
    let train = ds.retain(|it| !is_hidden(it))?;
    Ok(EvaluationSplit {
        train,
        hidden,
        held_out,
        validation_users,
        test_users,
        seed,
        hide_prob,
        val_fraction,
    })
}
