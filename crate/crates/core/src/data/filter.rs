//! Interaction-count filtering run to a fixed point.

use std::collections::HashMap;

use super::{DataError, InteractionDataset};

/// Filters sparse users, user-domain cells and items.
///
/// A user's class is fixed from the input: users seen in at least two domains
/// keep only the domains where they have at least `min_inter_overlap`
/// interactions; single-domain users need `min_inter_single` interactions.
/// Items need `min_inter_single` interactions. Passes repeat until nothing
/// changes, then every index space is re-densified.
pub fn filter_dataset(
    ds: &InteractionDataset,
    min_inter_overlap: usize,
    min_inter_single: usize,
) -> Result<InteractionDataset, DataError> {
    if min_inter_overlap == 0 || min_inter_single == 0 {
        return Err(DataError::Config("filter thresholds must be at least 1".into()));
    }
    let k = ds.num_domains();
    let overlapping: Vec<bool> = (0..ds.num_users()).map(|u| ds.is_overlapping(u)).collect();
    let mut alive = vec![true; ds.num_interactions()];
    loop {
        let mut cell_counts: HashMap<(usize, usize), usize> = HashMap::new();
        let mut user_counts = vec![0usize; ds.num_users()];
        let mut item_counts: Vec<Vec<usize>> = (0..k).map(|d| vec![0; ds.num_items(d)]).collect();
        for (it, _) in ds.interactions().iter().zip(&alive).filter(|(_, &a)| a) {
            *cell_counts.entry((it.user, it.domain)).or_default() += 1;
            user_counts[it.user] += 1;
            item_counts[it.domain][it.item] += 1;
        }
        let mut changed = false;
        for (it, a) in ds.interactions().iter().zip(alive.iter_mut()) {
            if !*a {
                continue;
            }
            let keep = if overlapping[it.user] {
                cell_counts[&(it.user, it.domain)] >= min_inter_overlap
            } else {
                user_counts[it.user] >= min_inter_single
            } && item_counts[it.domain][it.item] >= min_inter_single;
            if !keep {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut idx = 0;
    ds.compact(|_| {
        let keep = alive[idx];
        idx += 1;
        keep
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetBuilder;

    #[test]
    fn identity_thresholds_keep_everything() {
        let mut b = DatasetBuilder::new();
        b.push("u1", "i1", "A").unwrap();
        b.push("u1", "j1", "B").unwrap();
        b.push("u2", "i2", "A").unwrap();
        let ds = b.finish().unwrap();
        let out = filter_dataset(&ds, 1, 1).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn overlapping_user_keeps_dense_domain_only() {
        // items are made popular by 20 filler users so only the user threshold bites
        let mut b = DatasetBuilder::new();
        for i in 0..12 {
            b.push("target", &format!("a{i}"), "A").unwrap();
        }
        for i in 0..3 {
            b.push("target", &format!("b{i}"), "B").unwrap();
        }
        for f in 0..20 {
            let user = format!("filler{f}");
            for i in 0..12 {
                b.push(&user, &format!("a{i}"), "A").unwrap();
            }
            for i in 0..3 {
                b.push(&user, &format!("b{i}"), "B").unwrap();
            }
            for i in 0..10 {
                b.push(&user, &format!("b_extra{i}"), "B").unwrap();
            }
        }
        let ds = b.finish().unwrap();
        let out = filter_dataset(&ds, 10, 20).unwrap();
        let u = out.user_index("target").unwrap();
        let a = out.domain_index("A").unwrap();
        let bd = out.domain_index("B").unwrap();
        assert!(out.seen(u, a));
        assert!(!out.seen(u, bd));
        assert_eq!(out.items(u, a).len(), 12);
    }

    #[test]
    fn unpopular_item_removed() {
        let mut b = DatasetBuilder::new();
        for u in 0..25 {
            for i in 0..20 {
                b.push(&format!("u{u}"), &format!("p{i}"), "A").unwrap();
            }
        }
        for u in 0..5 {
            b.push(&format!("u{u}"), "rare", "A").unwrap();
        }
        let ds = b.finish().unwrap();
        let out = filter_dataset(&ds, 1, 20).unwrap();
        assert_eq!(out.num_items(0), 20);
        assert!(out.item_ids(0).iter().all(|i| i != "rare"));
        assert_eq!(out.num_interactions(), 500);
    }

    #[test]
    fn everything_filtered_is_an_error() {
        let mut b = DatasetBuilder::new();
        b.push("u", "i", "A").unwrap();
        let ds = b.finish().unwrap();
        assert!(matches!(filter_dataset(&ds, 5, 5), Err(DataError::EmptyDataset)));
    }
}
