//! Simplified RPL: hop-count ranks, trickle-lite DIO cadence, DIS
//! solicitation and hop-by-hop DAO reachability.
//!
//! Messages are structured values rather than packets. A node never
//! increases its rank while attached; the only way up is to detach
//! (rank goes infinite) and rejoin after a short hold-down.

pub mod check;
pub mod trickle;

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::ip::{NodeId, Prefix};
use crate::kernel::SimTime;

pub use check::{check_dodag, DodagReport};
pub use trickle::{TrickleLite, DIO_MAX_INTERVAL_MS, DIO_MIN_INTERVAL_MS};

pub const MIN_RANK: u16 = 256;
pub const RANK_STEP: u16 = 256;
pub const INFINITE_RANK: u16 = 0xFFFF;

/// Three missed DIO periods at the 60 s cap.
pub const PARENT_HOLD_MS: u64 = 3 * DIO_MAX_INTERVAL_MS;
pub const DETACH_HOLDDOWN_MS: u64 = 1000;
pub const DIS_INTERVAL_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rank(pub u16);

impl Rank {
    pub const ROOT: Rank = Rank(MIN_RANK);
    pub const INFINITE: Rank = Rank(INFINITE_RANK);

    pub fn is_infinite(self) -> bool {
        self.0 == INFINITE_RANK
    }

    /// Rank of a child attached below this one.
    pub fn child(self) -> Rank {
        Rank(self.0.saturating_add(RANK_STEP))
    }
}

impl std::fmt::Display for Rank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DodagState {
    pub node: NodeId,
    pub rank: Rank,
    pub preferred_parent: Option<NodeId>,
    pub version: u32,
    pub prefix: Option<Prefix>,
}

impl DodagState {
    pub fn joined(&self) -> bool {
        !self.rank.is_infinite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RplMessage {
    Dio {
        sender: NodeId,
        rank: Rank,
        version: u32,
        prefix: Option<Prefix>,
    },
    Dis {
        sender: NodeId,
    },
    /// `target` is reachable through `sender`.
    Dao {
        sender: NodeId,
        target: NodeId,
    },
}

impl RplMessage {
    pub fn sender(&self) -> NodeId {
        match *self {
            RplMessage::Dio { sender, .. } | RplMessage::Dis { sender } | RplMessage::Dao { sender, .. } => sender,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    Broadcast,
    Unicast(NodeId),
}

pub type Outgoing = Vec<(Dest, RplMessage)>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RplError {
    #[error("node {0:?} has no route toward the root")]
    NoRoute(NodeId),
    #[error("node {0:?} is not the DODAG root")]
    NotRoot(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootInit {
    Initialized,
    Unchanged,
    Renumbered { version: u32 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RplStats {
    pub dio_sent: u64,
    pub dis_sent: u64,
    pub dao_sent: u64,
    pub stale_ignored: u64,
    pub parent_changes: u64,
    pub detaches: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Candidate {
    rank: Rank,
    heard: SimTime,
}

#[derive(Debug, Clone)]
pub struct RplNode {
    state: DodagState,
    is_root: bool,
    candidates: BTreeMap<NodeId, Candidate>,
    parent_heard: SimTime,
    holddown_until: SimTime,
    trickle: TrickleLite,
    dis_due: Option<SimTime>,
    /// target -> next hop downward
    routes: BTreeMap<NodeId, NodeId>,
    stats: RplStats,
}

impl RplNode {
    pub fn new(node: NodeId, is_root: bool) -> Self {
        RplNode {
            state: DodagState {
                node,
                rank: Rank::INFINITE,
                preferred_parent: None,
                version: 0,
                prefix: None,
            },
            is_root,
            candidates: BTreeMap::new(),
            parent_heard: SimTime::ZERO,
            holddown_until: SimTime::ZERO,
            trickle: TrickleLite::default(),
            dis_due: None,
            routes: BTreeMap::new(),
            stats: RplStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.state.node
    }

    pub fn is_root(&self) -> bool {
        self.is_root
    }

    pub fn state(&self) -> &DodagState {
        &self.state
    }

    pub fn stats(&self) -> RplStats {
        self.stats
    }

    pub fn routes(&self) -> &BTreeMap<NodeId, NodeId> {
        &self.routes
    }

    pub fn dio_due(&self) -> Option<SimTime> {
        self.trickle.fire_at()
    }

    pub fn dis_due(&self) -> Option<SimTime> {
        self.dis_due
    }

    /// When the current parent is declared lost unless heard from again.
    pub fn parent_deadline(&self) -> Option<SimTime> {
        self.state.preferred_parent.map(|_| self.parent_heard + PARENT_HOLD_MS)
    }

    /// Global address suffix this node answers to, once numbered.
    pub fn address_prefix(&self) -> Option<Prefix> {
        self.state.joined().then_some(self.state.prefix).flatten()
    }

    /// Non-root nodes start soliciting at boot.
    pub fn boot<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) {
        if !self.is_root {
            self.dis_due = Some(now + rng.random_range(0..DIO_MIN_INTERVAL_MS));
        }
    }

    pub fn root_initialize<R: Rng + ?Sized>(
        &mut self,
        prefix: Prefix,
        now: SimTime,
        rng: &mut R,
    ) -> Result<RootInit, RplError> {
        if !self.is_root {
            return Err(RplError::NotRoot(self.state.node));
        }
        let outcome = match self.state.prefix {
            Some(p) if p == prefix => return Ok(RootInit::Unchanged),
            Some(_) => {
                self.state.version += 1;
                RootInit::Renumbered {
                    version: self.state.version,
                }
            }
            None => {
                self.state.version = 1;
                RootInit::Initialized
            }
        };
        self.state.prefix = Some(prefix);
        self.state.rank = Rank::ROOT;
        self.routes.clear();
        self.trickle.reset(now, rng);
        Ok(outcome)
    }

    fn dio(&self) -> RplMessage {
        RplMessage::Dio {
            sender: self.state.node,
            rank: self.state.rank,
            version: self.state.version,
            prefix: self.state.prefix,
        }
    }

    pub fn next_hop_up(&self) -> Result<NodeId, RplError> {
        match self.state.preferred_parent {
            Some(p) if self.state.joined() && !self.is_root => Ok(p),
            _ => Err(RplError::NoRoute(self.state.node)),
        }
    }

    pub fn on_dio_timer<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Outgoing {
        if self.trickle.fire_at() != Some(now) {
            return Vec::new();
        }
        if !self.state.joined() {
            self.trickle.stop();
            return Vec::new();
        }
        self.trickle.advance(rng);
        self.stats.dio_sent += 1;
        vec![(Dest::Broadcast, self.dio())]
    }

    pub fn on_dis_timer(&mut self, now: SimTime) -> Outgoing {
        if self.dis_due != Some(now) {
            return Vec::new();
        }
        if self.state.joined() || self.is_root {
            self.dis_due = None;
            return Vec::new();
        }
        self.dis_due = Some(now + DIS_INTERVAL_MS);
        self.stats.dis_sent += 1;
        vec![(
            Dest::Broadcast,
            RplMessage::Dis {
                sender: self.state.node,
            },
        )]
    }

    /// A unicast frame to `neighbor` was acknowledged at the link layer,
    /// which proves it alive as well as a DIO would.
    pub fn on_link_ack(&mut self, neighbor: NodeId, now: SimTime) {
        if let Some(c) = self.candidates.get_mut(&neighbor) {
            c.heard = now;
        }
        if self.state.preferred_parent == Some(neighbor) {
            self.parent_heard = now;
        }
    }

    /// Drop the parent if it has gone quiet, and forget stale candidates.
    pub fn on_parent_check<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Outgoing {
        self.candidates
            .retain(|_, c| now.saturating_sub(c.heard) < PARENT_HOLD_MS);
        match self.parent_deadline() {
            Some(deadline) if deadline <= now => self.reselect_or_detach(now, rng),
            _ => Vec::new(),
        }
    }

    pub fn handle<R: Rng + ?Sized>(&mut self, msg: RplMessage, now: SimTime, rng: &mut R) -> Outgoing {
        match msg {
            RplMessage::Dio {
                sender,
                rank,
                version,
                prefix,
            } => self.handle_dio(sender, rank, version, prefix, now, rng),
            RplMessage::Dis { sender } => self.handle_dis(sender),
            RplMessage::Dao { sender, target } => self.handle_dao(sender, target),
        }
    }

    pub fn handle_dis(&mut self, from: NodeId) -> Outgoing {
        if !self.state.joined() {
            return Vec::new();
        }
        self.stats.dio_sent += 1;
        vec![(Dest::Unicast(from), self.dio())]
    }

    pub fn handle_dao(&mut self, from: NodeId, target: NodeId) -> Outgoing {
        if !self.state.joined() {
            return Vec::new();
        }
        self.routes.insert(target, from);
        match self.state.preferred_parent {
            Some(p) if !self.is_root => {
                self.stats.dao_sent += 1;
                vec![(
                    Dest::Unicast(p),
                    RplMessage::Dao {
                        sender: self.state.node,
                        target,
                    },
                )]
            }
            _ => Vec::new(),
        }
    }

    pub fn handle_dio<R: Rng + ?Sized>(
        &mut self,
        from: NodeId,
        rank: Rank,
        version: u32,
        prefix: Option<Prefix>,
        now: SimTime,
        rng: &mut R,
    ) -> Outgoing {
        if self.is_root || from == self.state.node {
            return Vec::new();
        }
        if version < self.state.version {
            self.stats.stale_ignored += 1;
            return Vec::new();
        }

        if rank.is_infinite() {
            // poison from a detaching neighbour
            if version == self.state.version {
                self.candidates.remove(&from);
                if self.state.preferred_parent == Some(from) {
                    return self.reselect_or_detach(now, rng);
                }
            }
            return Vec::new();
        }

        if !self.state.joined() {
            if now < self.holddown_until {
                return Vec::new();
            }
            return self.attach(from, rank, version, prefix, now, rng);
        }

        if version > self.state.version {
            // Follow a new version only through a neighbour already below us.
            if rank < self.state.rank {
                return self.attach(from, rank, version, prefix, now, rng);
            }
            return Vec::new();
        }

        self.candidates.insert(from, Candidate { rank, heard: now });
        if self.state.preferred_parent == Some(from) {
            self.parent_heard = now;
            if rank >= self.state.rank {
                return self.reselect_or_detach(now, rng);
            }
        }
        self.improve(now, rng)
    }

    fn best_candidate(&self) -> Option<(NodeId, Rank)> {
        self.candidates
            .iter()
            .filter(|(_, c)| c.rank < self.state.rank)
            .min_by_key(|(&id, c)| (c.rank, id))
            .map(|(&id, c)| (id, c.rank))
    }

    /// Switch to a strictly better parent (lower rank, or equal rank and
    /// lower id) if one is known.
    fn improve<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Outgoing {
        let Some((best, best_rank)) = self.best_candidate() else {
            return Vec::new();
        };
        let current = self
            .state
            .preferred_parent
            .and_then(|p| self.candidates.get(&p).map(|c| (c.rank, p)));
        if current.is_some_and(|cur| cur <= (best_rank, best)) {
            return Vec::new();
        }
        self.set_parent(best, best_rank, now, rng)
    }

    fn reselect_or_detach<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) -> Outgoing {
        if let Some(p) = self.state.preferred_parent {
            if self.parent_deadline().is_some_and(|d| d <= now) {
                self.candidates.remove(&p);
            }
        }
        match self.best_candidate() {
            Some((id, r)) if Some(id) != self.state.preferred_parent => self.set_parent(id, r, now, rng),
            _ => self.detach(now),
        }
    }

    fn set_parent<R: Rng + ?Sized>(
        &mut self,
        parent: NodeId,
        parent_rank: Rank,
        now: SimTime,
        rng: &mut R,
    ) -> Outgoing {
        let new_rank = parent_rank.child();
        debug_assert!(new_rank <= self.state.rank);
        let rank_changed = new_rank != self.state.rank;
        self.state.preferred_parent = Some(parent);
        self.state.rank = new_rank;
        self.parent_heard = self.candidates.get(&parent).map_or(now, |c| c.heard);
        self.stats.parent_changes += 1;
        if rank_changed {
            self.trickle.reset(now, rng);
        }
        self.stats.dao_sent += 1;
        vec![(
            Dest::Unicast(parent),
            RplMessage::Dao {
                sender: self.state.node,
                target: self.state.node,
            },
        )]
    }

    fn attach<R: Rng + ?Sized>(
        &mut self,
        from: NodeId,
        rank: Rank,
        version: u32,
        prefix: Option<Prefix>,
        now: SimTime,
        rng: &mut R,
    ) -> Outgoing {
        self.candidates.clear();
        self.candidates.insert(from, Candidate { rank, heard: now });
        self.state.version = version;
        self.state.prefix = prefix;
        self.state.rank = Rank::INFINITE;
        self.dis_due = None;
        let out = self.set_parent(from, rank, now, rng);
        self.trickle.reset(now, rng);
        out
    }

    fn detach(&mut self, now: SimTime) -> Outgoing {
        self.state.rank = Rank::INFINITE;
        self.state.preferred_parent = None;
        self.candidates.clear();
        self.routes.clear();
        self.trickle.stop();
        self.holddown_until = now + DETACH_HOLDDOWN_MS;
        self.dis_due = Some(self.holddown_until);
        self.stats.detaches += 1;
        self.stats.dio_sent += 1;
        self.stats.dis_sent += 1;
        vec![
            (Dest::Broadcast, self.dio()),
            (
                Dest::Broadcast,
                RplMessage::Dis {
                    sender: self.state.node,
                },
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const P: Prefix = Prefix(0xfd00_0000_0000_0000);

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn dio(sender: u16, rank: u16, version: u32) -> RplMessage {
        RplMessage::Dio {
            sender: NodeId(sender),
            rank: Rank(rank),
            version,
            prefix: Some(P),
        }
    }

    #[test]
    fn root_initialization_and_version_bump() {
        let mut r = rng();
        let mut root = RplNode::new(NodeId(1), true);
        assert_eq!(root.dio_due(), None);
        assert_eq!(root.on_dio_timer(SimTime(0), &mut r), vec![]);
        assert_eq!(root.root_initialize(P, SimTime(0), &mut r), Ok(RootInit::Initialized));
        let due = root.dio_due().unwrap();
        assert!(due >= SimTime(500) && due < SimTime(1000));
        let out = root.on_dio_timer(due, &mut r);
        assert_eq!(out, vec![(Dest::Broadcast, dio(1, 256, 1))]);

        assert_eq!(root.root_initialize(P, SimTime(5000), &mut r), Ok(RootInit::Unchanged));
        assert_eq!(root.state().version, 1);
        let p2 = Prefix(0xfd01_0000_0000_0000);
        assert_eq!(
            root.root_initialize(p2, SimTime(6000), &mut r),
            Ok(RootInit::Renumbered { version: 2 })
        );
        assert_eq!(root.state().prefix, Some(p2));

        let mut leaf = RplNode::new(NodeId(2), false);
        assert_eq!(
            leaf.root_initialize(P, SimTime(0), &mut r),
            Err(RplError::NotRoot(NodeId(2)))
        );
    }

    #[test]
    fn leaf_attaches_below_root() {
        let mut r = rng();
        let mut leaf = RplNode::new(NodeId(2), false);
        let out = leaf.handle(dio(1, 256, 1), SimTime(700), &mut r);
        assert_eq!(leaf.state().rank, Rank(512));
        assert_eq!(leaf.state().preferred_parent, Some(NodeId(1)));
        assert_eq!(leaf.state().prefix, Some(P));
        assert_eq!(leaf.address_prefix(), Some(P));
        assert_eq!(
            out,
            vec![(
                Dest::Unicast(NodeId(1)),
                RplMessage::Dao {
                    sender: NodeId(2),
                    target: NodeId(2)
                }
            )]
        );
        assert!(leaf.dio_due().is_some());
        assert_eq!(leaf.next_hop_up(), Ok(NodeId(1)));
    }

    #[test]
    fn min_rank_parent_wins() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(5, 768, 1), SimTime(0), &mut r);
        assert_eq!(n.state().rank, Rank(1024));
        n.handle(dio(4, 512, 1), SimTime(10), &mut r);
        assert_eq!(n.state().rank, Rank(768));
        assert_eq!(n.state().preferred_parent, Some(NodeId(4)));
        // equal rank, lower id takes over
        n.handle(dio(2, 512, 1), SimTime(20), &mut r);
        assert_eq!(n.state().preferred_parent, Some(NodeId(2)));
        // equal rank, higher id does not
        n.handle(dio(9, 512, 1), SimTime(30), &mut r);
        assert_eq!(n.state().preferred_parent, Some(NodeId(2)));
    }

    #[test]
    fn order_of_hearing_does_not_matter() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(4, 512, 1), SimTime(0), &mut r);
        n.handle(dio(5, 768, 1), SimTime(10), &mut r);
        assert_eq!(n.state().rank, Rank(768));
        assert_eq!(n.state().preferred_parent, Some(NodeId(4)));
    }

    #[test]
    fn stale_version_ignored() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(1, 256, 2), SimTime(0), &mut r);
        let before = n.state().clone();
        let out = n.handle(dio(4, 256, 1), SimTime(10), &mut r);
        assert!(out.is_empty());
        assert_eq!(n.state(), &before);
        assert_eq!(n.stats().stale_ignored, 1);
    }

    #[test]
    fn dis_replies_only_when_joined() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        assert!(n
            .handle(RplMessage::Dis { sender: NodeId(9) }, SimTime(0), &mut r)
            .is_empty());
        n.handle(dio(1, 256, 1), SimTime(0), &mut r);
        let out = n.handle(RplMessage::Dis { sender: NodeId(9) }, SimTime(5), &mut r);
        assert_eq!(out, vec![(Dest::Unicast(NodeId(9)), dio(3, 512, 1))]);
    }

    #[test]
    fn unjoined_node_solicits_until_joined() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.boot(SimTime(0), &mut r);
        let t = n.dis_due().unwrap();
        assert!(t < SimTime(1000));
        assert_eq!(n.on_dis_timer(t).len(), 1);
        assert_eq!(n.dis_due(), Some(t + DIS_INTERVAL_MS));
        n.handle(dio(1, 256, 1), t + 100, &mut r);
        assert_eq!(n.dis_due(), None);
        assert!(n.on_dis_timer(t + DIS_INTERVAL_MS).is_empty());
    }

    #[test]
    fn root_has_no_route_up() {
        let mut r = rng();
        let mut root = RplNode::new(NodeId(1), true);
        root.root_initialize(P, SimTime(0), &mut r).unwrap();
        assert_eq!(root.next_hop_up(), Err(RplError::NoRoute(NodeId(1))));
        assert_eq!(
            RplNode::new(NodeId(2), false).next_hop_up(),
            Err(RplError::NoRoute(NodeId(2)))
        );
    }

    #[test]
    fn silent_parent_is_dropped_after_hold_time() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(2, 512, 1), SimTime(0), &mut r);
        assert_eq!(n.parent_deadline(), Some(SimTime(PARENT_HOLD_MS)));
        assert!(n.on_parent_check(SimTime(PARENT_HOLD_MS - 1), &mut r).is_empty());
        let out = n.on_parent_check(SimTime(PARENT_HOLD_MS), &mut r);
        assert_eq!(n.state().rank, Rank::INFINITE);
        assert_eq!(n.next_hop_up(), Err(RplError::NoRoute(NodeId(3))));
        assert!(matches!(
            out[0].1,
            RplMessage::Dio {
                rank: Rank::INFINITE,
                ..
            }
        ));
        assert!(matches!(out[1].1, RplMessage::Dis { .. }));
        // hold-down, then rejoin
        let t = SimTime(PARENT_HOLD_MS + 10);
        n.handle(dio(4, 512, 1), t, &mut r);
        assert_eq!(n.state().rank, Rank::INFINITE);
        n.handle(dio(4, 512, 1), t + DETACH_HOLDDOWN_MS, &mut r);
        assert_eq!(n.next_hop_up(), Ok(NodeId(4)));
    }

    #[test]
    fn link_ack_keeps_parent_alive() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(2, 512, 1), SimTime(0), &mut r);
        n.on_link_ack(NodeId(9), SimTime(100_000));
        assert_eq!(n.parent_deadline(), Some(SimTime(PARENT_HOLD_MS)));
        n.on_link_ack(NodeId(2), SimTime(100_000));
        assert_eq!(n.parent_deadline(), Some(SimTime(100_000 + PARENT_HOLD_MS)));
        assert!(n.on_parent_check(SimTime(PARENT_HOLD_MS), &mut r).is_empty());
        assert_eq!(n.next_hop_up(), Ok(NodeId(2)));
    }

    #[test]
    fn parent_loss_falls_back_to_alternative() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(2, 512, 1), SimTime(0), &mut r);
        n.handle(dio(4, 512, 1), SimTime(PARENT_HOLD_MS - 5), &mut r);
        assert_eq!(n.state().preferred_parent, Some(NodeId(2)));
        n.on_parent_check(SimTime(PARENT_HOLD_MS), &mut r);
        assert_eq!(n.state().preferred_parent, Some(NodeId(4)));
        assert_eq!(n.state().rank, Rank(768));
    }

    #[test]
    fn parent_rank_regression_forces_switch() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(2, 512, 1), SimTime(0), &mut r);
        n.handle(dio(4, 768, 1), SimTime(1), &mut r);
        // parent now advertises a rank no better than ours, the other
        // candidate is not below us either
        n.handle(dio(2, 768, 1), SimTime(2), &mut r);
        assert_eq!(n.state().rank, Rank::INFINITE);
        assert_eq!(n.stats().detaches, 1);
    }

    #[test]
    fn poison_from_parent_detaches() {
        let mut r = rng();
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(2, 512, 1), SimTime(0), &mut r);
        n.handle(dio(2, INFINITE_RANK, 1), SimTime(1), &mut r);
        assert!(!n.state().joined());
    }

    #[test]
    fn version_bump_migrates_through_lower_rank_only() {
        let mut r = rng();
        let p2 = Prefix(0xfd02_0000_0000_0000);
        let mut n = RplNode::new(NodeId(3), false);
        n.handle(dio(2, 512, 1), SimTime(0), &mut r);
        let v2 = |s, rank| RplMessage::Dio {
            sender: NodeId(s),
            rank: Rank(rank),
            version: 2,
            prefix: Some(p2),
        };
        n.handle(v2(7, 768), SimTime(1), &mut r);
        assert_eq!(n.state().version, 1);
        n.handle(v2(2, 512), SimTime(2), &mut r);
        assert_eq!(n.state().version, 2);
        assert_eq!(n.state().prefix, Some(p2));
        assert_eq!(n.state().rank, Rank(768));
    }

    #[test]
    fn dao_forwards_hop_by_hop() {
        let mut r = rng();
        let mut relay = RplNode::new(NodeId(2), false);
        relay.handle(dio(1, 256, 1), SimTime(0), &mut r);
        let out = relay.handle(
            RplMessage::Dao {
                sender: NodeId(3),
                target: NodeId(3),
            },
            SimTime(1),
            &mut r,
        );
        assert_eq!(relay.routes()[&NodeId(3)], NodeId(3));
        assert_eq!(
            out,
            vec![(
                Dest::Unicast(NodeId(1)),
                RplMessage::Dao {
                    sender: NodeId(2),
                    target: NodeId(3)
                }
            )]
        );
        let mut root = RplNode::new(NodeId(1), true);
        root.root_initialize(P, SimTime(0), &mut r).unwrap();
        assert!(root.handle(out[0].1, SimTime(2), &mut r).is_empty());
        assert_eq!(root.routes()[&NodeId(3)], NodeId(2));
    }
}
