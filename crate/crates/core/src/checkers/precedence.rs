use std::collections::HashSet;

use crate::weaklog::{Snapshot, Token};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("corrupt structure: value {0} appears twice")]
pub struct CorruptionError(pub Token);

/// The total order a weak log's structure induces on its values.
///
/// For the consensus log: lists in spine order, and within a list its side
/// chain from the head. For the CAS log: the chain read from the bottom up.
pub fn precedence_order(snapshot: &Snapshot) -> Result<Vec<Token>, CorruptionError> {
    let order: Vec<Token> = match snapshot {
        Snapshot::Spine { lists, .. } => lists
            .iter()
            .flat_map(|l| l.values.iter().copied())
            .collect(),
        Snapshot::Chain { nodes } => nodes.iter().rev().copied().collect(),
    };
    let mut seen = HashSet::new();
    match order.iter().find(|t| !seen.insert(**t)) {
        Some(dup) => Err(CorruptionError(*dup)),
        None => Ok(order),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weaklog::SpineList;

    fn spine(lists: &[&[u64]]) -> Snapshot {
        Snapshot::Spine {
            lists: lists
                .iter()
                .enumerate()
                .map(|(i, vs)| SpineList {
                    cell: i as u64 + 1,
                    values: vs.iter().map(|&t| Token(t)).collect(),
                })
                .collect(),
            tail_cell: 99,
            last_cell: 99,
        }
    }

    fn tokens(ts: &[u64]) -> Vec<Token> {
        ts.iter().map(|&t| Token(t)).collect()
    }

    #[test]
    fn side_chain_follows_its_head() {
        assert_eq!(
            precedence_order(&spine(&[&[2, 3]])).unwrap(),
            tokens(&[2, 3])
        );
    }

    #[test]
    fn lists_follow_the_spine() {
        assert_eq!(
            precedence_order(&spine(&[&[1], &[4]])).unwrap(),
            tokens(&[1, 4])
        );
    }

    #[test]
    fn four_lists_with_two_side_chains() {
        let s = spine(&[&[1], &[2, 3], &[4], &[5, 6]]);
        assert_eq!(precedence_order(&s).unwrap(), tokens(&[1, 2, 3, 4, 5, 6]));
    }

    #[test]
    fn chain_reads_bottom_up() {
        let s = Snapshot::Chain {
            nodes: tokens(&[4, 3, 2, 1]),
        };
        assert_eq!(precedence_order(&s).unwrap(), tokens(&[1, 2, 3, 4]));
    }

    #[test]
    fn duplicates_are_corruption() {
        assert_eq!(
            precedence_order(&spine(&[&[1, 2], &[2]])),
            Err(CorruptionError(Token(2)))
        );
    }
}
