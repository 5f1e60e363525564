//! Key-based routing overlay.
//!
//! A Pastry-style ring over 160-bit identifiers. Routing tables are rebuilt
//! from the full membership on every join or leave, so table contents are a
//! pure function of the member set; the route itself is still computed hop by
//! hop from each peer's local state.

mod id;
mod routing;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

pub use id::{hash_name, NodeId, ID_BYTES, ID_DIGITS};
pub use routing::{RoutingState, LEAF_SET_SIZE, ROUTING_BASE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverlayError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("'{0}' is already a member")]
    AlreadyMember(String),
    #[error("id {id} of '{name}' collides with existing member '{existing}'")]
    IdCollision {
        name: String,
        existing: String,
        id: NodeId,
    },
    #[error("{0} is not a member")]
    NotAMember(NodeId),
    #[error("no route: membership is empty")]
    NoRoute,
    #[error("route source {0} is not a member")]
    InvalidSource(NodeId),
    #[error("route toward {key} did not converge after {hops} hops")]
    Diverged { key: NodeId, hops: usize },
}

/// Outcome of routing a key through the overlay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub owner: NodeId,
    /// Peers visited, starting with the source and ending with the owner.
    pub path: Vec<NodeId>,
}

impl Route {
    /// Number of forwarding steps.
    pub fn hops(&self) -> usize {
        self.path.len() - 1
    }
}

/// Global registry of overlay peers together with each peer's routing state.
#[derive(Debug, Clone, Default)]
pub struct Membership {
    peers: BTreeMap<NodeId, String>,
    states: BTreeMap<NodeId, RoutingState>,
    version: u64,
}

impl Membership {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.peers.contains_key(id)
    }

    pub fn name_of(&self, id: &NodeId) -> Option<&str> {
        self.peers.get(id).map(String::as_str)
    }

    /// Peers sorted by id.
    pub fn peers(&self) -> impl Iterator<Item = (&NodeId, &str)> {
        self.peers.iter().map(|(id, name)| (id, name.as_str()))
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.peers.keys().copied()
    }

    pub fn routing_state(&self, id: &NodeId) -> Option<&RoutingState> {
        self.states.get(id)
    }

    pub fn join(&mut self, name: &str) -> Result<NodeId, OverlayError> {
        let id = self.insert(name)?;
        self.rebuild();
        Ok(id)
    }

    /// Joins every name in order, rebuilding routing state once at the end.
    ///
    /// On error the names joined before the failing one remain members.
    pub fn join_all<'a, I>(&mut self, names: I) -> Result<Vec<NodeId>, OverlayError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut ids = Vec::new();
        let mut result = Ok(());
        for name in names {
            match self.insert(name) {
                Ok(id) => ids.push(id),
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.rebuild();
        result.map(|()| ids)
    }

    fn insert(&mut self, name: &str) -> Result<NodeId, OverlayError> {
        if self.peers.values().any(|n| n == name) {
            return Err(OverlayError::AlreadyMember(name.to_string()));
        }
        let id = hash_name(name)?;
        if let Some(existing) = self.peers.get(&id) {
            return Err(OverlayError::IdCollision {
                name: name.to_string(),
                existing: existing.clone(),
                id,
            });
        }
        self.peers.insert(id, name.to_string());
        self.version += 1;
        Ok(id)
    }

    pub fn leave(&mut self, id: &NodeId) -> Result<(), OverlayError> {
        if self.peers.remove(id).is_none() {
            return Err(OverlayError::NotAMember(*id));
        }
        self.version += 1;
        self.rebuild();
        Ok(())
    }

    fn rebuild(&mut self) {
        let ids: Vec<NodeId> = self.peers.keys().copied().collect();
        self.states = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, RoutingState::build(i, &ids)))
            .collect();
    }

    /// The peer whose id is circularly closest to `key`; equidistant peers
    /// resolve to the numerically smaller id.
    pub fn owner_of(&self, key: &NodeId) -> Result<NodeId, OverlayError> {
        if self.peers.is_empty() {
            return Err(OverlayError::NoRoute);
        }
        // The closest peer is the successor or predecessor of key on the ring.
        let succ = self
            .peers
            .range(key..)
            .next()
            .or_else(|| self.peers.iter().next())
            .map(|(id, _)| *id);
        let pred = self
            .peers
            .range(..key)
            .next_back()
            .or_else(|| self.peers.iter().next_back())
            .map(|(id, _)| *id);
        let (succ, pred) = (succ.unwrap(), pred.unwrap());
        Ok(std::cmp::min_by(succ, pred, |a, b| key.cmp_closeness(a, b)))
    }

    /// Greedy prefix routing from `source` toward `key`.
    pub fn route(&self, source: &NodeId, key: &NodeId) -> Result<Route, OverlayError> {
        if self.peers.is_empty() {
            return Err(OverlayError::NoRoute);
        }
        if !self.peers.contains_key(source) {
            return Err(OverlayError::InvalidSource(*source));
        }
        let mut path = vec![*source];
        let mut current = *source;
        // Each hop either lengthens the shared prefix or strictly reduces the
        // distance to key at equal prefix length; this cap is never reached.
        let cap = ID_DIGITS + self.peers.len() + 1;
        loop {
            let state = &self.states[&current];
            match state.next_hop(key) {
                None => return Ok(Route { owner: current, path }),
                Some(next) => {
                    path.push(next);
                    current = next;
                    if path.len() > cap {
                        return Err(OverlayError::Diverged {
                            key: *key,
                            hops: path.len() - 1,
                        });
                    }
                }
            }
        }
    }

    /// One `"hexid name"` line per peer, sorted by id.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (id, name) in &self.peers {
            let _ = writeln!(out, "{id} {name}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Linear-scan oracle, independent of the ring-order lookup in `owner_of`.
    fn brute_owner(m: &Membership, key: &NodeId) -> NodeId {
        let mut best: Option<NodeId> = None;
        for id in m.ids() {
            best = Some(match best {
                None => id,
                Some(b) => {
                    let (db, di) = (key.circular_distance(&b), key.circular_distance(&id));
                    if di < db || (di == db && id < b) {
                        id
                    } else {
                        b
                    }
                }
            });
        }
        best.unwrap()
    }

    fn random_key(rng: &mut ChaCha8Rng) -> NodeId {
        NodeId::from_bytes(rng.gen())
    }

    fn membership(prefix: &str, n: usize) -> Membership {
        let names: Vec<String> = (0..n).map(|i| format!("{prefix}-{i}")).collect();
        let mut m = Membership::new();
        m.join_all(names.iter().map(String::as_str)).unwrap();
        m
    }

    #[test]
    fn singleton_owns_everything() {
        let mut m = Membership::new();
        let id = m.join("only").unwrap();
        assert_eq!(m.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k = random_key(&mut rng);
            let r = m.route(&id, &k).unwrap();
            assert_eq!((r.owner, r.hops()), (id, 0));
        }
    }

    #[test]
    fn five_clouds_join() {
        let mut m = Membership::new();
        let ids: Vec<NodeId> = (1..=5).map(|i| m.join(&format!("cloud-{i}")).unwrap()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
        assert_eq!(m.version(), 5);
    }

    #[test]
    fn duplicate_join_rejected() {
        let mut m = Membership::new();
        m.join("a").unwrap();
        assert_eq!(m.join("a"), Err(OverlayError::AlreadyMember("a".into())));
        assert_eq!(m.version(), 1);
    }

    #[test]
    fn owner_matches_brute_force_after_joins() {
        let m = membership("peer", 40);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let k = random_key(&mut rng);
            assert_eq!(m.owner_of(&k).unwrap(), brute_owner(&m, &k));
        }
    }

    #[test]
    fn key_equal_to_member_is_owned_by_it() {
        let m = membership("p", 10);
        for id in m.ids() {
            assert_eq!(m.owner_of(&id).unwrap(), id);
        }
    }

    #[test]
    fn join_then_leave_restores_membership() {
        let mut m = membership("p", 6);
        let before = m.dump();
        let v = m.version();
        let id = m.join("extra").unwrap();
        m.leave(&id).unwrap();
        assert_eq!(m.dump(), before);
        assert_eq!(m.version(), v + 2);
    }

    #[test]
    fn leave_transfers_ownership_to_nearest_survivor() {
        let mut m = membership("p", 12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_key(&mut rng);
        let owner = m.owner_of(&k).unwrap();
        m.leave(&owner).unwrap();
        let next = m.owner_of(&k).unwrap();
        assert_ne!(next, owner);
        assert_eq!(next, brute_owner(&m, &k));
        for src in m.ids() {
            assert_eq!(m.route(&src, &k).unwrap().owner, next);
        }
    }

    #[test]
    fn leave_singleton_then_route_fails() {
        let mut m = Membership::new();
        let id = m.join("solo").unwrap();
        m.leave(&id).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.route(&id, &NodeId::ZERO), Err(OverlayError::NoRoute));
        assert_eq!(m.owner_of(&NodeId::ZERO), Err(OverlayError::NoRoute));
    }

    #[test]
    fn leave_unknown_rejected() {
        let mut m = membership("p", 3);
        assert_eq!(m.leave(&NodeId::ZERO), Err(OverlayError::NotAMember(NodeId::ZERO)));
    }

    #[test]
    fn route_from_non_member_rejected() {
        let m = membership("p", 3);
        assert_eq!(
            m.route(&NodeId::ZERO, &NodeId::ZERO),
            Err(OverlayError::InvalidSource(NodeId::ZERO))
        );
    }

    #[test]
    fn route_agrees_with_owner_of_on_sample() {
        let m = membership("node", 100);
        let ids: Vec<NodeId> = m.ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let k = random_key(&mut rng);
            let src = ids[rng.gen_range(0..ids.len())];
            assert_eq!(m.route(&src, &k).unwrap().owner, brute_owner(&m, &k));
        }
    }

    #[test]
    fn mean_hops_for_32_peers() {
        let m = membership("hop", 32);
        let ids: Vec<NodeId> = m.ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 10_000;
        let mut total = 0;
        for _ in 0..trials {
            let k = random_key(&mut rng);
            let src = ids[rng.gen_range(0..ids.len())];
            total += m.route(&src, &k).unwrap().hops();
        }
        let mean = total as f64 / trials as f64;
        assert!(mean <= 4.0, "mean hops {mean}");
    }

    #[test]
    fn max_hops_bounded_up_to_256() {
        for n in [16usize, 64, 256] {
            let m = membership("bound", n);
            let ids: Vec<NodeId> = m.ids().collect();
            let bound = (n as f64).log(16.0).ceil() as usize + LEAF_SET_SIZE / 2;
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            for _ in 0..2000 {
                let k = random_key(&mut rng);
                let src = ids[rng.gen_range(0..ids.len())];
                let hops = m.route(&src, &k).unwrap().hops();
                assert!(hops <= bound, "n={n} hops={hops} bound={bound}");
            }
        }
    }

    #[test]
    fn every_key_has_one_owner_and_arcs_cover_ring() {
        // Owned arcs: each peer owns the keys between the midpoints to its
        // neighbours. Probing just around each peer and each midpoint checks
        // that ownership switches exactly once between adjacent peers.
        let m = membership("arc", 9);
        let ids: Vec<NodeId> = m.ids().collect();
        for (i, id) in ids.iter().enumerate() {
            let next = ids[(i + 1) % ids.len()];
            assert_eq!(m.owner_of(id).unwrap(), *id);
            let gap = id.cw_distance(&next);
            let one = NodeId::from_u128(1);
            let just_after = id.wrapping_sub(&NodeId::ZERO.wrapping_sub(&one));
            assert_eq!(m.owner_of(&just_after).unwrap(), *id);
            let before_next = next.wrapping_sub(&one);
            assert_eq!(m.owner_of(&before_next).unwrap(), next);
            assert!(gap > NodeId::ZERO);
        }
    }

    #[test]
    fn dump_is_sorted_hex_lines() {
        let m = membership("d", 4);
        let dump = m.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 4);
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        assert!(lines.iter().all(|l| l.split(' ').next().unwrap().len() == 40));
    }

    #[derive(Debug, Clone)]
    enum Op {
        Join(u16),
        Leave(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            3 => (0u16..500).prop_map(Op::Join),
            1 => any::<usize>().prop_map(Op::Leave),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ownership_consistent_under_churn(ops in prop::collection::vec(op(), 1..80), seed in any::<u64>()) {
            let mut m = Membership::new();
            for op in ops {
                match op {
                    Op::Join(n) => { let _ = m.join(&format!("churn-{n}")); }
                    Op::Leave(i) => {
                        if !m.is_empty() {
                            let id = m.ids().nth(i % m.len()).unwrap();
                            m.leave(&id).unwrap();
                        }
                    }
                }
            }
            prop_assume!(!m.is_empty());
            let ids: Vec<NodeId> = m.ids().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..160 {
                let k = random_key(&mut rng);
                let expect = brute_owner(&m, &k);
                prop_assert_eq!(m.owner_of(&k).unwrap(), expect);
                let src = ids[rng.gen_range(0..ids.len())];
                prop_assert_eq!(m.route(&src, &k).unwrap().owner, expect);
            }
        }
    }
}
