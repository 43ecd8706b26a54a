use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Interaction;

/// Leave-one-out partition of the interaction log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Interaction>,
    pub valid: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

/// Per user, ordered by `(timestamp, item_id)`: the last interaction goes to
/// test, the second-to-last to valid, the rest to train. Users with fewer
/// than three interactions go entirely to train.
///
/// Output is ordered by user id, then time.
pub fn split_leave_one_out(interactions: &[Interaction]) -> Split {
    let mut by_user: BTreeMap<i64, Vec<Interaction>> = BTreeMap::new();
    for it in interactions {
        by_user.entry(it.user_id).or_default().push(*it);
    }
    let mut split = Split::default();
    for (_, mut seq) in by_user {
        seq.sort_by_key(|i| (i.timestamp, i.item_id));
        if seq.len() < 3 {
            split.train.extend(seq);
            continue;
        }
        let test = seq.pop().expect("len >= 3");
        let valid = seq.pop().expect("len >= 2");
        split.train.extend(seq);
        split.valid.push(valid);
        split.test.push(test);
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ItemId;

    fn it(user: i64, item: u32, ts: i64) -> Interaction {
        Interaction { user_id: user, item_id: ItemId(item), timestamp: ts }
    }

    #[test]
    fn last_two_go_to_test_and_valid() {
        let s = split_leave_one_out(&[it(1, 2, 3), it(1, 0, 1), it(1, 1, 2)]);
        assert_eq!(s.train, vec![it(1, 0, 1)]);
        assert_eq!(s.valid, vec![it(1, 1, 2)]);
        assert_eq!(s.test, vec![it(1, 2, 3)]);
    }

    #[test]
    fn short_histories_stay_in_train() {
        let s = split_leave_one_out(&[it(1, 0, 1), it(1, 1, 2)]);
        assert_eq!(s.train.len(), 2);
        assert!(s.valid.is_empty() && s.test.is_empty());
    }

    #[test]
    fn timestamp_ties_break_by_item_id() {
        let s = split_leave_one_out(&[it(1, 9, 5), it(1, 4, 5), it(1, 7, 1)]);
        assert_eq!(s.test[0].item_id, ItemId(9));
        assert_eq!(s.valid[0].item_id, ItemId(4));
    }
}
