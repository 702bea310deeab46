//! Shard planning: the consensus energy model, its closed-form optimum,
//! geographic shard assignment, and leader selection.
//!
//! With `z` base stations split into `n` shards of `m = z/n`, each shard's
//! two all-to-all phases cost about `2m²` messages and the leader
//! committee's own round costs `2n²`, giving
//!
//! ```text
//! E(n) = 2·e_intra·z²/n + 2·e_global·n²
//! ```
//!
//! per planning round. The curve is strictly convex on `n > 0` (its second
//! derivative `4·e_intra·z²/n³ + 4·e_global` is a sum of positives), so
//! the real root of `dE/dn = 0` at `n_c = (e_intra·z²/(2·e_global))^(1/3)`
//! is the unique minimum and the best integer plan is one of the two
//! integers bracketing `n_c`, clamped to the feasible range. That argument
//! is what lets [`optimal_shards`] check only two candidates and still be
//! exactly the brute-force answer; the tests hold it to that.
//!
//! The model prices messages at two representative distances only. It is
//! a planning approximation, deliberately separate from the simulator's
//! measured energy.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::channel::{self, ChannelParams, Transmission};
use crate::consensus::{NodeKind, SrdNode};
use crate::ledger::{ChainId, NodeId};

/// Inputs of the planning energy model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModelParams {
    /// Base-station count.
    pub z: u32,
    /// Energy per intra-shard message, J.
    pub e_intra_j: f64,
    /// Energy per committee message, J.
    pub e_global_j: f64,
    /// Smallest base-station count a shard may hold. Four keeps every
    /// shard able to absorb one fault (3f+1 with f = 1).
    pub min_shard_size: u32,
}

impl EnergyModelParams {
    /// Prices both message classes through the channel's power law at two
    /// representative distances (typical intra-shard and committee hop).
    pub fn from_channel(
        z: u32,
        min_shard_size: u32,
        d_intra_m: f64,
        d_global_m: f64,
        chan: &ChannelParams,
    ) -> Result<Self, ShardingError> {
        chan.validate().map_err(|e| ShardingError::Domain(e.to_string()))?;
        if !d_intra_m.is_finite() || d_intra_m <= 0.0 || !d_global_m.is_finite() || d_global_m <= 0.0
        {
            return Err(ShardingError::Domain("representative distances must be positive".into()));
        }
        let p = Self {
            z,
            e_intra_j: channel::message_energy_j(Transmission::Active { distance_m: d_intra_m }, chan),
            e_global_j: channel::message_energy_j(Transmission::Active { distance_m: d_global_m }, chan),
            min_shard_size,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), ShardingError> {
        if self.min_shard_size == 0 {
            return Err(ShardingError::Domain("min_shard_size must be positive".into()));
        }
        if self.z < self.min_shard_size {
            return Err(ShardingError::Domain(format!(
                "z = {} is below min_shard_size = {}",
                self.z, self.min_shard_size
            )));
        }
        for (name, v) in [("e_intra", self.e_intra_j), ("e_global", self.e_global_j)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ShardingError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Largest feasible shard count.
    pub fn max_shards(&self) -> u32 {
        self.z / self.min_shard_size
    }
}

/// Planning failure.
#[derive(Debug, Error, PartialEq)]
pub enum ShardingError {
    /// Argument outside the model's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// No assignment satisfies the minimum shard size.
    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),
    /// A shard with no base station cannot elect a leader.
    #[error("shard has no base station")]
    NoBaseStation,
}

/// The model surface at any real `n > 0`. This is the calculus view; the
/// planning view ([`energy_model`]) restricts it to the feasible range.
pub fn energy_curve(n: f64, p: &EnergyModelParams) -> Result<f64, ShardingError> {
    p.validate()?;
    if !n.is_finite() || n <= 0.0 {
        return Err(ShardingError::Domain(format!("n must be positive, got {n}")));
    }
    let z = p.z as f64;
    Ok(2.0 * p.e_intra_j * z * z / n + 2.0 * p.e_global_j * n * n)
}

/// Planning energy at shard count `n`, real-valued for calculus but
/// bounded to the feasible planning range `[1, z/min_shard_size]`.
pub fn energy_model(n: f64, p: &EnergyModelParams) -> Result<f64, ShardingError> {
    p.validate()?;
    let max = p.max_shards() as f64;
    if !(1.0..=max).contains(&n) {
        return Err(ShardingError::Domain(format!("n = {n} outside feasible range [1, {max}]")));
    }
    energy_curve(n, p)
}

/// First and second derivative of the energy curve at real `n > 0`.
pub fn energy_derivatives(n: f64, p: &EnergyModelParams) -> Result<(f64, f64), ShardingError> {
    p.validate()?;
    if !n.is_finite() || n <= 0.0 {
        return Err(ShardingError::Domain(format!("n must be positive, got {n}")));
    }
    let z2 = (p.z as f64) * (p.z as f64);
    let d1 = -2.0 * p.e_intra_j * z2 / (n * n) + 4.0 * p.e_global_j * n;
    let d2 = 4.0 * p.e_intra_j * z2 / (n * n * n) + 4.0 * p.e_global_j;
    Ok((d1, d2))
}

/// Real-valued root of `dE/dn = 0`, the curve's unique minimum.
pub fn continuous_optimum(p: &EnergyModelParams) -> Result<f64, ShardingError> {
    p.validate()?;
    let z2 = (p.z as f64) * (p.z as f64);
    Ok((p.e_intra_j * z2 / (2.0 * p.e_global_j)).cbrt())
}

/// A chosen shard count with its predicted cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardOptimum {
    /// Best feasible integer shard count.
    pub n_star: u32,
    /// Base stations per shard, larger shards first; sums to `z`.
    pub m_sizes: Vec<u32>,
    /// Model energy at `n_star`, J.
    pub energy_j: f64,
    /// The unconstrained real optimum the integer choice brackets.
    pub n_continuous: f64,
}

/// Picks the feasible integer shard count of least model energy.
///
/// Convexity reduces the search to `floor(n_c)` and `ceil(n_c)` clamped
/// into `[1, z/min_shard_size]`; ties break toward fewer shards. The
/// result is always identical to exhaustive search over the range.
pub fn optimal_shards(p: &EnergyModelParams) -> Result<ShardOptimum, ShardingError> {
    p.validate()?;
    let n_c = continuous_optimum(p)?;
    let max = p.max_shards();
    let clamp = |n: f64| -> u32 { (n.max(1.0) as u32).min(max) };
    let lo = clamp(n_c.floor());
    let hi = clamp(n_c.ceil());

    let mut best: Option<(u32, f64)> = None;
    for n in [lo, hi] {
        let e = energy_model(n as f64, p)?;
        best = match best {
            Some((bn, be)) if be < e || (be == e && bn <= n) => Some((bn, be)),
            _ => Some((n, e)),
        };
    }
    let (n_star, energy_j) = best.expect("two candidates were evaluated");

    let base = p.z / n_star;
    let extra = p.z % n_star;
    let m_sizes = (0..n_star).map(|i| if i < extra { base + 1 } else { base }).collect();

    Ok(ShardOptimum { n_star, m_sizes, energy_j, n_continuous: n_c })
}

/// Relative weights of the two leader-selection criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderWeights {
    /// Weight on reputation.
    pub reputation: f64,
    /// Weight on normalized activity.
    pub activity: f64,
}

impl Default for LeaderWeights {
    fn default() -> Self {
        Self { reputation: 0.7, activity: 0.3 }
    }
}

/// Elects the shard leader: the base station maximizing
/// `w_rep·reputation + w_act·activity/max_activity`, where the activity
/// normalizer is the largest activity among the shard's members (zero
/// activity everywhere scores zero). Ties go to the lowest id.
pub fn select_leader(members: &[SrdNode], w: &LeaderWeights) -> Result<NodeId, ShardingError> {
    let max_activity = members.iter().map(|m| m.activity).max().unwrap_or(0);
    let score = |m: &SrdNode| -> f64 {
        let norm = if max_activity == 0 { 0.0 } else { m.activity as f64 / max_activity as f64 };
        w.reputation * m.reputation + w.activity * norm
    };
    members
        .iter()
        .filter(|m| m.kind == NodeKind::BaseStation)
        .map(|m| (score(m), m))
        .fold(None::<(f64, &SrdNode)>, |best, (s, m)| match best {
            Some((bs, bm)) if bs > s || (bs == s && bm.id < m.id) => Some((bs, bm)),
            _ => Some((s, m)),
        })
        .map(|(_, m)| m.id)
        .ok_or(ShardingError::NoBaseStation)
}

/// A full shard layout for one topology snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardPlan {
    /// Number of shards.
    pub shard_count: u32,
    /// Every node's shard index.
    pub assignments: BTreeMap<NodeId, u32>,
    /// Elected leader (a base station) per shard index.
    pub leaders: BTreeMap<u32, NodeId>,
    /// All leaders, in shard order; they run the global chain.
    pub committee: Vec<NodeId>,
    /// Ledger chain the committee anchors to.
    pub global_chain: ChainId,
}

impl ShardPlan {
    /// Ids of one shard's members, ascending.
    pub fn members_of(&self, shard: u32) -> Vec<NodeId> {
        self.assignments.iter().filter(|(_, &s)| s == shard).map(|(&id, _)| id).collect()
    }
}

/// Splits the topology into `n` shards.
///
/// Base stations are ordered by (x, y, id) and cut into `n` contiguous
/// groups whose sizes differ by at most one (larger groups first); each
/// remaining node joins the shard of its nearest base station by
/// ground-projected distance, ties to the lower station id. Leaders are
/// elected per shard with the given weights.
pub fn assign_shards(
    nodes: &[SrdNode],
    n: u32,
    min_shard_size: u32,
    weights: &LeaderWeights,
) -> Result<ShardPlan, ShardingError> {
    if n == 0 {
        return Err(ShardingError::Domain("shard count must be positive".into()));
    }
    let mut stations: Vec<&SrdNode> =
        nodes.iter().filter(|m| m.kind == NodeKind::BaseStation).collect();
    stations.sort_by(|a, b| {
        (a.position[0], a.position[1], a.id)
            .partial_cmp(&(b.position[0], b.position[1], b.id))
            .expect("node positions must be finite")
    });
    let z = stations.len() as u32;
    if z < n * min_shard_size {
        return Err(ShardingError::InfeasiblePlan(format!(
            "{z} base stations cannot fill {n} shards of at least {min_shard_size}"
        )));
    }

    let mut assignments: BTreeMap<NodeId, u32> = BTreeMap::new();
    let base = z / n;
    let extra = z % n;
    let mut cursor = 0usize;
    for shard in 0..n {
        let size = if shard < extra { base + 1 } else { base };
        for bs in &stations[cursor..cursor + size as usize] {
            assignments.insert(bs.id, shard);
        }
        cursor += size as usize;
    }

    for node in nodes {
        if node.kind == NodeKind::BaseStation {
            continue;
        }
        let home = stations
            .iter()
            .map(|bs| (node.power_distance_to(bs), bs.id))
            .min_by(|a, b| a.partial_cmp(b).expect("finite distances"))
            .expect("z >= n*min_shard_size > 0 guarantees a station");
        assignments.insert(node.id, assignments[&home.1]);
    }

    let mut leaders = BTreeMap::new();
    for shard in 0..n {
        let members: Vec<SrdNode> = nodes
            .iter()
            .filter(|m| assignments[&m.id] == shard)
            .cloned()
            .collect();
        leaders.insert(shard, select_leader(&members, weights)?);
    }
    let committee = leaders.values().copied().collect();

    Ok(ShardPlan {
        shard_count: n,
        assignments,
        leaders,
        committee,
        global_chain: ChainId::Global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Behavior;
    use approx::assert_relative_eq;

    fn params(z: u32, e_intra: f64, e_global: f64) -> EnergyModelParams {
        EnergyModelParams { z, e_intra_j: e_intra, e_global_j: e_global, min_shard_size: 4 }
    }

    fn exhaustive_optimum(p: &EnergyModelParams) -> (u32, f64) {
        // Independent oracle: scan the whole feasible range.
        let mut best = (1u32, f64::INFINITY);
        for n in 1..=p.max_shards() {
            let e = energy_model(n as f64, p).unwrap();
            if e < best.1 {
                best = (n, e);
            }
        }
        best
    }

    #[test]
    fn worked_example_matches_hand_calculation() {
        let p = params(50, 0.5, 0.5);
        assert_relative_eq!(energy_model(10.0, &p).unwrap(), 350.0, max_relative = 1e-12);
        assert_relative_eq!(
            energy_model(11.0, &p).unwrap(),
            2500.0 / 11.0 + 121.0, // 348.2727...
            max_relative = 1e-12
        );
        assert_relative_eq!(
            energy_model(12.0, &p).unwrap(),
            2500.0 / 12.0 + 144.0, // 352.3333...
            max_relative = 1e-12
        );

        let opt = optimal_shards(&p).unwrap();
        assert_relative_eq!(opt.n_continuous, 1250f64.cbrt(), max_relative = 1e-12); // 10.7722
        assert_eq!(opt.n_star, 11);
        assert_relative_eq!(opt.energy_j, 2500.0 / 11.0 + 121.0, max_relative = 1e-12);
        // 50 = 6 shards of 5 + 5 shards of 4, larger first.
        assert_eq!(opt.m_sizes, vec![5, 5, 5, 5, 5, 5, 4, 4, 4, 4, 4]);
        assert_eq!(opt.m_sizes.iter().sum::<u32>(), 50);

        assert_eq!((opt.n_star, opt.energy_j), exhaustive_optimum(&p));
    }

    #[test]
    fn single_shard_formula() {
        let p = params(50, 0.5, 0.5);
        assert_relative_eq!(
            energy_model(1.0, &p).unwrap(),
            2.0 * 0.5 * 2500.0 + 2.0 * 0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn planning_domain_is_enforced() {
        let p = params(50, 0.5, 0.5); // feasible n: 1..=12
        assert!(matches!(energy_model(0.5, &p), Err(ShardingError::Domain(_))));
        assert!(matches!(energy_model(13.0, &p), Err(ShardingError::Domain(_))));
        assert!(energy_model(12.0, &p).is_ok());
        // The unrestricted curve still evaluates there.
        assert!(energy_curve(0.5, &p).is_ok());
        assert!(energy_curve(200.0, &p).is_ok());
        assert!(matches!(energy_curve(0.0, &p), Err(ShardingError::Domain(_))));
    }

    #[test]
    fn committee_cost_dominance_forces_one_shard() {
        let p = params(50, 0.5, 0.5e6);
        let opt = optimal_shards(&p).unwrap();
        assert_eq!(opt.n_star, 1);
        assert_eq!(opt.m_sizes, vec![50]);
    }

    #[test]
    fn minimum_feasible_topology_is_forced_single() {
        let p = params(4, 0.5, 0.5);
        let opt = optimal_shards(&p).unwrap();
        assert_eq!(opt.n_star, 1);
        assert_eq!(opt.m_sizes, vec![4]);
        assert!(matches!(params(3, 0.5, 0.5).validate(), Err(ShardingError::Domain(_))));
    }

    #[test]
    fn derivatives_vanish_at_continuous_root() {
        let p = params(50, 0.5, 0.5);
        let n_c = continuous_optimum(&p).unwrap();
        let (d1, d2) = energy_derivatives(n_c, &p).unwrap();
        // Scale-relative: the two terms of dE are each ~4·e_g·n_c here.
        let scale = 2.0 * p.e_intra_j * 2500.0 / (n_c * n_c) + 4.0 * p.e_global_j * n_c;
        assert!(d1.abs() <= 1e-9 * scale, "dE/dn at root: {d1}");
        assert!(d2 > 0.0);
    }

    /// Central finite differences as an independent derivative oracle.
    fn fd_derivatives(n: f64, p: &EnergyModelParams) -> (f64, f64) {
        let h = n * 1e-4;
        let em = energy_curve(n - h, p).unwrap();
        let e0 = energy_curve(n, p).unwrap();
        let ep = energy_curve(n + h, p).unwrap();
        ((ep - em) / (2.0 * h), (ep - 2.0 * e0 + em) / (h * h))
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            params(50, 0.5, 0.5),
            params(10, 8.192e-5, 1.28e-3),
            params(200, 3.0, 0.01),
        ];
        for p in &cases {
            let mut n = 0.5;
            while n <= p.z as f64 {
                let (d1, d2) = energy_derivatives(n, p).unwrap();
                let (f1, f2) = fd_derivatives(n, p);
                let z2 = (p.z as f64).powi(2);
                let scale1 = 2.0 * p.e_intra_j * z2 / (n * n) + 4.0 * p.e_global_j * n;
                let scale2 = d2; // both terms positive
                assert!((d1 - f1).abs() <= 1e-6 * scale1, "d1 at n={n}: {d1} vs {f1}");
                assert!((d2 - f2).abs() <= 1e-6 * scale2, "d2 at n={n}: {d2} vs {f2}");
                n += 0.5;
            }
        }
    }

    fn bs(id: NodeId, x: f64, y: f64) -> SrdNode {
        SrdNode {
            id,
            kind: NodeKind::BaseStation,
            position: [x, y, 0.0],
            behavior: Behavior::Honest,
            energy_spent_j: 0.0,
            reputation: 0.8,
            activity: 0,
            coverage_radius_m: 300.0,
        }
    }

    fn mobile(id: NodeId, x: f64, y: f64) -> SrdNode {
        SrdNode { kind: NodeKind::GroundMobile, ..bs(id, x, y) }
    }

    #[test]
    fn line_of_stations_splits_at_the_middle() {
        let nodes: Vec<SrdNode> = (0..8).map(|i| bs(i + 1, 100.0 * i as f64, 0.0)).collect();
        let plan = assign_shards(&nodes, 2, 4, &LeaderWeights::default()).unwrap();
        for id in 1..=4 {
            assert_eq!(plan.assignments[&id], 0);
        }
        for id in 5..=8 {
            assert_eq!(plan.assignments[&id], 1);
        }
        assert_eq!(plan.committee.len(), 2);
        assert_eq!(plan.global_chain, ChainId::Global);
    }

    #[test]
    fn non_station_joins_nearest_station_with_low_id_ties() {
        let mut nodes: Vec<SrdNode> = (0..8).map(|i| bs(i + 1, 100.0 * i as f64, 0.0)).collect();
        // Equidistant between station 4 (x=300) and station 5 (x=400).
        nodes.push(mobile(100, 350.0, 0.0));
        let plan = assign_shards(&nodes, 2, 4, &LeaderWeights::default()).unwrap();
        assert_eq!(plan.assignments[&100], plan.assignments[&4]);
    }

    #[test]
    fn infeasible_split_is_rejected() {
        let nodes: Vec<SrdNode> = (0..9).map(|i| bs(i + 1, 10.0 * i as f64, 0.0)).collect();
        let err = assign_shards(&nodes, 3, 4, &LeaderWeights::default()).unwrap_err();
        assert!(matches!(err, ShardingError::InfeasiblePlan(_)));
    }

    #[test]
    fn leader_selection_follows_score_then_id() {
        let w = LeaderWeights::default();

        let solo = vec![bs(3, 0.0, 0.0)];
        assert_eq!(select_leader(&solo, &w).unwrap(), 3);

        let mut two = vec![bs(1, 0.0, 0.0), bs(2, 10.0, 0.0)];
        two[0].reputation = 0.5;
        two[1].reputation = 0.9;
        assert_eq!(select_leader(&two, &w).unwrap(), 2);

        // Activity can outweigh a reputation gap: 0.7*0.5 + 0.3 = 0.65
        // beats 0.7*0.7 = 0.49.
        let mut act = vec![bs(1, 0.0, 0.0), bs(2, 10.0, 0.0)];
        act[0].reputation = 0.5;
        act[0].activity = 100;
        act[1].reputation = 0.7;
        assert_eq!(select_leader(&act, &w).unwrap(), 1);

        let tie = vec![bs(9, 0.0, 0.0), bs(4, 10.0, 0.0)];
        assert_eq!(select_leader(&tie, &w).unwrap(), 4);

        let none = vec![mobile(1, 0.0, 0.0)];
        assert_eq!(select_leader(&none, &w).unwrap_err(), ShardingError::NoBaseStation);

        // Non-stations contribute to the activity normalizer but are
        // never candidates.
        let mut mixed = vec![bs(1, 0.0, 0.0), mobile(2, 5.0, 0.0)];
        mixed[1].activity = 1000;
        mixed[1].reputation = 1.0;
        assert_eq!(select_leader(&mixed, &w).unwrap(), 1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_params() -> impl Strategy<Value = EnergyModelParams> {
            (4u32..200, 1e-6f64..1e3, 1e-6f64..1e3)
                .prop_map(|(z, ei, eg)| params(z, ei, eg))
        }

        proptest! {
            // The two-candidate shortcut must equal the brute-force scan.
            #[test]
            fn optimizer_matches_exhaustive_search(p in arb_params()) {
                let opt = optimal_shards(&p).unwrap();
                let (bn, be) = exhaustive_optimum(&p);
                prop_assert_eq!(opt.n_star, bn);
                prop_assert_eq!(opt.energy_j, be);
                prop_assert_eq!(opt.m_sizes.iter().sum::<u32>(), p.z);
                let min = opt.m_sizes.iter().min().unwrap();
                let max = opt.m_sizes.iter().max().unwrap();
                prop_assert!(max - min <= 1);
                prop_assert!(*min >= p.min_shard_size);
            }

            // Strict convexity everywhere on the curve's domain.
            #[test]
            fn second_derivative_is_positive(p in arb_params(), step in 1u32..400) {
                let n = step as f64 * 0.5;
                let (_, d2) = energy_derivatives(n, &p).unwrap();
                prop_assert!(d2 > 0.0);
            }

            // The continuous root really is the global minimum.
            #[test]
            fn continuous_root_minimizes_the_curve(p in arb_params(), n in 1e-2f64..500.0) {
                let n_c = continuous_optimum(&p).unwrap();
                let at_root = energy_curve(n_c, &p).unwrap();
                prop_assert!(at_root <= energy_curve(n, &p).unwrap() + 1e-9 * at_root);
            }

            // Shard assignment is a total partition of the node set.
            #[test]
            fn assignment_partitions_all_nodes(
                coords in proptest::collection::vec((0.0f64..1000.0, 0.0f64..1000.0), 8..40),
                extra in proptest::collection::vec((0.0f64..1000.0, 0.0f64..1000.0), 0..20),
                n in 1u32..3,
            ) {
                let mut nodes: Vec<SrdNode> = coords
                    .iter()
                    .enumerate()
                    .map(|(i, &(x, y))| bs(i as NodeId + 1, x, y))
                    .collect();
                let base = nodes.len() as NodeId;
                nodes.extend(
                    extra
                        .iter()
                        .enumerate()
                        .map(|(i, &(x, y))| mobile(base + i as NodeId + 1, x, y)),
                );
                prop_assume!(coords.len() as u32 >= n * 4);

                let plan = assign_shards(&nodes, n, 4, &LeaderWeights::default()).unwrap();
                prop_assert_eq!(plan.assignments.len(), nodes.len());
                for m in &nodes {
                    let shard = plan.assignments[&m.id];
                    prop_assert!(shard < n);
                }
                for shard in 0..n {
                    let leader = plan.leaders[&shard];
                    prop_assert_eq!(plan.assignments[&leader], shard);
                    let leader_node = nodes.iter().find(|m| m.id == leader).unwrap();
                    prop_assert_eq!(leader_node.kind, NodeKind::BaseStation);
                }
            }
        }
    }
}
