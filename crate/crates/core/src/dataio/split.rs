use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::{DataError, DatasetSplit, Interaction, InteractionLog, SplitKind};
use crate::rng::{stream, stream_rng};

fn check_fraction(name: &'static str, value: f64, allow_zero: bool) -> Result<(), DataError> {
    let ok = if allow_zero {
        (0.0..1.0).contains(&value)
    } else {
        value > 0.0 && value < 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(DataError::Fraction {
            name,
            range: if allow_zero { "[0, 1)" } else { "(0, 1)" },
            value,
        })
    }
}

/// Size of the validation slice carved out of `n_train_total` items; at
/// least one item always stays in train.
fn validation_size(n_train_total: usize, val_frac: f64) -> usize {
    let v = (val_frac * n_train_total as f64).round() as usize;
    v.min(n_train_total.saturating_sub(1))
}

/// Random per-user partition. With `n` items a user gets
/// `round(train_frac * n)` (at least 1) train+validation items, of which
/// `round(val_frac * that)` go to validation; the rest is test.
pub fn split_iid(
    log: &InteractionLog,
    train_frac: f64,
    val_frac_of_train: f64,
    seed: u64,
) -> Result<DatasetSplit, DataError> {
    check_fraction("train_frac", train_frac, false)?;
    check_fraction("val_frac", val_frac_of_train, true)?;
    let mut rng = stream_rng(seed, stream::SPLIT);
    let by_user = log.by_user();
    let mut train = Vec::with_capacity(log.num_users);
    let mut validation = Vec::with_capacity(log.num_users);
    let mut test = Vec::with_capacity(log.num_users);
    for list in by_user {
        let mut items: Vec<u32> = list.iter().map(|it| it.item).collect();
        items.shuffle(&mut rng);
        let n = items.len();
        let n_tv = ((train_frac * n as f64).round() as usize).clamp(n.min(1), n);
        let n_val = validation_size(n_tv, val_frac_of_train);
        let mut tr = items[..n_tv - n_val].to_vec();
        let mut va = items[n_tv - n_val..n_tv].to_vec();
        let mut te = items[n_tv..].to_vec();
        tr.sort_unstable();
        va.sort_unstable();
        te.sort_unstable();
        train.push(tr);
        validation.push(va);
        test.push(te);
    }
    Ok(DatasetSplit {
        kind: SplitKind::Iid,
        num_users: log.num_users,
        num_items: log.num_items,
        train,
        validation,
        test,
        seed: Some(seed),
    })
}

/// Latest `ceil(test_frac * n)` interactions of each user go to test, the
/// latest `round(val_frac * rest)` of the remainder to validation. Ties in
/// time are ordered by item id. Validation and test items never seen in
/// any user's train list are dropped.
pub fn split_temporal(
    log: &InteractionLog,
    test_frac: f64,
    val_frac_of_train: f64,
) -> Result<DatasetSplit, DataError> {
    if !log.has_timestamps {
        return Err(DataError::MissingTimestamps);
    }
    check_fraction("test_frac", test_frac, true)?;
    check_fraction("val_frac", val_frac_of_train, true)?;
    let by_user = log.by_user();
    let mut train = Vec::with_capacity(log.num_users);
    let mut validation = Vec::with_capacity(log.num_users);
    let mut test = Vec::with_capacity(log.num_users);
    for mut list in by_user {
        list.sort_by_key(|it| (it.timestamp, it.item));
        let n = list.len();
        let n_test = ((test_frac * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n.saturating_sub(1));
        let n_tv = n - n_test;
        let n_val = validation_size(n_tv, val_frac_of_train);
        let items: Vec<u32> = list.iter().map(|it| it.item).collect();
        train.push(items[..n_tv - n_val].to_vec());
        validation.push(items[n_tv - n_val..n_tv].to_vec());
        test.push(items[n_tv..].to_vec());
    }
    let seen: HashSet<u32> = train.iter().flatten().copied().collect();
    for lists in [&mut train, &mut validation, &mut test] {
        for l in lists.iter_mut() {
            l.retain(|i| seen.contains(i));
            l.sort_unstable();
        }
    }
    Ok(DatasetSplit {
        kind: SplitKind::Temporal,
        num_users: log.num_users,
        num_items: log.num_items,
        train,
        validation,
        test,
        seed: None,
    })
}

/// Repeatedly drops users and items with fewer than `k` interactions until
/// none remain, then re-densifies ids (raw-id maps are carried over).
pub fn k_core(log: &InteractionLog, k: usize) -> InteractionLog {
    let mut kept: Vec<Interaction> = log.interactions.clone();
    loop {
        let mut ucount = vec![0usize; log.num_users];
        let mut icount = vec![0usize; log.num_items];
        for it in &kept {
            ucount[it.user as usize] += 1;
            icount[it.item as usize] += 1;
        }
        let before = kept.len();
        kept.retain(|it| ucount[it.user as usize] >= k && icount[it.item as usize] >= k);
        if kept.len() == before {
            break;
        }
    }
    let mut user_map = vec![u32::MAX; log.num_users];
    let mut item_map = vec![u32::MAX; log.num_items];
    for it in &kept {
        user_map[it.user as usize] = 0;
        item_map[it.item as usize] = 0;
    }
    let mut user_ids = Vec::new();
    for (old, slot) in user_map.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = user_ids.len() as u32;
            user_ids.push(log.user_ids[old]);
        }
    }
    let mut item_ids = Vec::new();
    for (old, slot) in item_map.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = item_ids.len() as u32;
            item_ids.push(log.item_ids[old]);
        }
    }
    let interactions = kept
        .into_iter()
        .map(|it| Interaction {
            user: user_map[it.user as usize],
            item: item_map[it.item as usize],
            timestamp: it.timestamp,
        })
        .collect();
    InteractionLog {
        interactions,
        num_users: user_ids.len(),
        num_items: item_ids.len(),
        has_timestamps: log.has_timestamps,
        user_ids,
        item_ids,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_from(rows: &[(u32, u32, i64)], num_users: usize, num_items: usize, ts: bool) -> InteractionLog {
        let interactions = rows
            .iter()
            .map(|&(user, item, timestamp)| Interaction { user, item, timestamp })
            .collect();
        InteractionLog::from_dense(interactions, num_users, num_items, ts)
    }

    #[test]
    fn iid_rounding_for_ten_items() {
        // round(0.8*10) = 8 train+val; round(0.1*8) = round(0.8) = 1 val.
        let rows: Vec<_> = (0..10).map(|i| (0, i, 0)).collect();
        let split = split_iid(&log_from(&rows, 1, 10, false), 0.8, 0.1, 42).unwrap();
        assert_eq!(split.train[0].len(), 7);
        assert_eq!(split.validation[0].len(), 1);
        assert_eq!(split.test[0].len(), 2);
    }

    #[test]
    fn iid_single_item_user_goes_to_train() {
        let split = split_iid(&log_from(&[(0, 3, 0)], 1, 4, false), 0.8, 0.1, 1).unwrap();
        assert_eq!(split.train[0], vec![3]);
        assert!(split.validation[0].is_empty());
        assert!(split.test[0].is_empty());
    }

    #[test]
    fn iid_is_deterministic_and_partitions() {
        let rows: Vec<_> = (0..5u32)
            .flat_map(|u| (0..(3 + 2 * u)).map(move |i| (u, i, 0)))
            .collect();
        let log = log_from(&rows, 5, 20, false);
        let a = split_iid(&log, 0.8, 0.1, 9).unwrap();
        let b = split_iid(&log, 0.8, 0.1, 9).unwrap();
        assert_eq!(a, b);
        for (u, list) in log.by_user().iter().enumerate() {
            let mut all: Vec<u32> = a.train[u]
                .iter()
                .chain(&a.validation[u])
                .chain(&a.test[u])
                .copied()
                .collect();
            all.sort_unstable();
            let expect: Vec<u32> = list.iter().map(|it| it.item).collect();
            assert_eq!(all, expect);
        }
    }

    #[test]
    fn iid_rejects_bad_fractions() {
        let log = log_from(&[(0, 0, 0)], 1, 1, false);
        assert!(split_iid(&log, 0.0, 0.1, 0).is_err());
        assert!(split_iid(&log, 1.0, 0.1, 0).is_err());
    }

    #[test]
    fn temporal_takes_latest_fifth() {
        // Items 0..5 at t=1..5 for user 0; user 1 also trains on item 4 so it survives the filter.
        let mut rows: Vec<_> = (0..5).map(|i| (0, i, i as i64 + 1)).collect();
        rows.push((1, 4, 1));
        rows.push((1, 0, 2));
        let split = split_temporal(&log_from(&rows, 2, 5, true), 0.2, 0.0).unwrap();
        assert_eq!(split.test[0], vec![4]);
        assert_eq!(split.train[0], vec![0, 1, 2, 3]);
    }

    #[test]
    fn temporal_drops_items_unseen_in_train() {
        let rows: Vec<_> = (0..5).map(|i| (0, i, i as i64 + 1)).collect();
        let split = split_temporal(&log_from(&rows, 1, 5, true), 0.2, 0.0).unwrap();
        // Item 4 is only ever in user 0's test slice.
        assert!(split.test[0].is_empty());
    }

    #[test]
    fn temporal_zero_fraction_and_ties() {
        let rows = vec![(0, 2, 5), (0, 1, 5), (0, 0, 1)];
        let split = split_temporal(&log_from(&rows, 1, 3, true), 0.0, 0.0).unwrap();
        assert!(split.test[0].is_empty());
        assert_eq!(split.train[0], vec![0, 1, 2]);
        // Tie at t=5 broken by item id: item 2 is the latest.
        let rows2 = vec![(0, 2, 5), (0, 1, 5), (0, 0, 1), (1, 2, 0)];
        let s2 = split_temporal(&log_from(&rows2, 2, 3, true), 0.3, 0.0).unwrap();
        assert_eq!(s2.test[0], vec![2]);
    }

    #[test]
    fn temporal_requires_timestamps() {
        let log = log_from(&[(0, 0, 0)], 1, 1, false);
        assert!(matches!(
            split_temporal(&log, 0.2, 0.1),
            Err(DataError::MissingTimestamps)
        ));
    }

    #[test]
    fn k_core_reaches_fixpoint() {
        // User 2 has one interaction; removing it leaves item 3 with one.
        let rows = vec![(0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 1, 0), (2, 3, 0), (0, 3, 0)];
        let core = k_core(&log_from(&rows, 3, 4, false), 2);
        assert_eq!(core.num_users, 2);
        assert_eq!(core.num_items, 2);
        assert_eq!(core.interactions.len(), 4);
        assert_eq!(core.item_ids, vec![0, 1]);
    }
}
