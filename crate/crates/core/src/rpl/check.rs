//! Whole-network DODAG consistency checks.

use std::collections::BTreeMap;

use super::{DodagState, Rank, RANK_STEP};
use crate::ip::NodeId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DodagReport {
    /// Nodes still at infinite rank.
    pub unjoined: Vec<NodeId>,
    /// Nodes whose parent chain revisits a node.
    pub cycles: Vec<NodeId>,
    /// `(child, parent)` pairs where the parent's rank is not strictly lower.
    pub rank_violations: Vec<(NodeId, NodeId)>,
    /// Finite-rank nodes whose chain ends somewhere other than the root.
    pub orphans: Vec<NodeId>,
    /// Finite-rank nodes whose rank is not exactly parent rank + step.
    pub stale_ranks: Vec<NodeId>,
    /// Hops to the root for every node whose chain reaches it.
    pub depth: BTreeMap<NodeId, usize>,
}

impl DodagReport {
    /// No cycles, strictly decreasing ranks, every joined node reaches the root.
    pub fn is_loop_free(&self) -> bool {
        self.cycles.is_empty() && self.rank_violations.is_empty() && self.orphans.is_empty()
    }

    pub fn all_joined(&self) -> bool {
        self.unjoined.is_empty()
    }
}

pub fn check_dodag<'a>(root: NodeId, states: impl IntoIterator<Item = &'a DodagState>) -> DodagReport {
    let by_id: BTreeMap<NodeId, &DodagState> = states.into_iter().map(|s| (s.node, s)).collect();
    let mut report = DodagReport::default();
    let limit = by_id.len();

    for (&id, state) in &by_id {
        if id == root {
            report.depth.insert(id, 0);
            continue;
        }
        if state.rank.is_infinite() {
            report.unjoined.push(id);
            continue;
        }
        if let Some(p) = state.preferred_parent.and_then(|p| by_id.get(&p)) {
            if !p.rank.is_infinite() && state.rank.0 != p.rank.0.saturating_add(RANK_STEP) {
                report.stale_ranks.push(id);
            }
        }

        let mut cur = state;
        let mut steps = 0;
        loop {
            if cur.node == root {
                report.depth.insert(id, steps);
                break;
            }
            let Some(parent) = cur.preferred_parent.and_then(|p| by_id.get(&p)) else {
                report.orphans.push(id);
                break;
            };
            if parent.rank >= cur.rank {
                report.rank_violations.push((cur.node, parent.node));
                break;
            }
            steps += 1;
            if steps > limit {
                report.cycles.push(id);
                break;
            }
            cur = parent;
        }
    }
    report.rank_violations.sort_unstable();
    report.rank_violations.dedup();
    report
}

/// Rank-derived hop count to the root.
pub fn hops_from_rank(rank: Rank) -> Option<u16> {
    (!rank.is_infinite()).then(|| (rank.0 - super::MIN_RANK) / RANK_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ip::Prefix;

    fn st(node: u16, rank: u16, parent: Option<u16>) -> DodagState {
        DodagState {
            node: NodeId(node),
            rank: Rank(rank),
            preferred_parent: parent.map(NodeId),
            version: 1,
            prefix: Some(Prefix(1)),
        }
    }

    #[test]
    fn chain_is_loop_free() {
        let s = [st(1, 256, None), st(2, 512, Some(1)), st(3, 768, Some(2))];
        let r = check_dodag(NodeId(1), &s);
        assert!(r.is_loop_free());
        assert!(r.all_joined());
        assert!(r.stale_ranks.is_empty());
        assert_eq!(r.depth[&NodeId(3)], 2);
        assert_eq!(hops_from_rank(Rank(768)), Some(2));
    }

    #[test]
    fn detects_cycle_and_rank_inversion() {
        let s = [st(1, 256, None), st(2, 512, Some(3)), st(3, 768, Some(2))];
        let r = check_dodag(NodeId(1), &s);
        assert!(!r.is_loop_free());
        // both chains stop at the same inverted edge
        assert_eq!(r.rank_violations, vec![(NodeId(2), NodeId(3))]);
    }

    #[test]
    fn orphans_and_unjoined() {
        let s = [
            st(1, 256, None),
            st(2, 0xFFFF, None),
            st(3, 768, Some(2)),
            st(4, 1024, Some(9)),
        ];
        let r = check_dodag(NodeId(1), &s);
        assert_eq!(r.unjoined, vec![NodeId(2)]);
        assert_eq!(r.rank_violations, vec![(NodeId(3), NodeId(2))]);
        assert_eq!(r.orphans, vec![NodeId(4)]);
    }

    #[test]
    fn stale_rank_reported_but_not_a_loop() {
        let s = [st(1, 256, None), st(2, 768, Some(1))];
        let r = check_dodag(NodeId(1), &s);
        assert!(r.is_loop_free());
        assert_eq!(r.stale_ranks, vec![NodeId(2)]);
    }
}
