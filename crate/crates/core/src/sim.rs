//! Scenario engine: topology, mobility, attacker injection, the epoch
//! loop, and seeded multi-run execution.
//!
//! One run is a deterministic function of (config, run index). Per epoch
//! the engine advances mobility, runs the service exchange, settles
//! matches into per-shard transaction pools, runs one consensus round per
//! shard plus a committee round that anchors every shard tip into the
//! global chain, and accrues metrics. Shard rounds happen in parallel in
//! simulated time: the epoch's consensus latency is the slowest shard
//! round plus the anchor round, never a sum over shards.
//!
//! Every joule the run reports flows through a single event trace, which
//! doubles as the reproducibility witness: its running hash is part of
//! [`RunMetrics`] and must be identical across reruns. Node meters are
//! audited against that trace at the end of each run.
//!
//! Ablation variants differ only in the knobs they flip: `NoSbc` runs
//! plain PBFT transport, `NoSharding` forces one shard, `NoSc` disables
//! the service exchange. Random streams are label-keyed, so variants and
//! attack scenarios share every draw they have in common.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{self, ChannelParams, Transmission};
use crate::consensus::{
    run_round, Behavior, ConsensusConfig, ConsensusMode, NodeKind, SrdNode,
};
use crate::ledger::{
    mock_sign, ChainId, LedgerError, LedgerState, NodeId, ServiceTransaction, Symbiosis,
    TxKind,
};
use crate::rng::{self, tags};
use crate::services::{
    self, initial_attach, run_service_epoch, ServiceParams, UserEquipment,
};
use crate::sharding::{
    assign_shards, optimal_shards, select_leader, EnergyModelParams, LeaderWeights,
    ShardingError,
};

/// Attack scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Every SRD honest.
    NoAttack,
    /// A fixed fraction of SRDs crash silently.
    FaultAttack,
    /// The same fraction equivocate and forge transactions instead.
    ByzantineAttack,
}

impl Scenario {
    /// Stable lowercase token used in files and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            Scenario::NoAttack => "na",
            Scenario::FaultAttack => "fa",
            Scenario::ByzantineAttack => "ba",
        }
    }

    /// All scenarios, in presentation order.
    pub const ALL: [Scenario; 3] =
        [Scenario::NoAttack, Scenario::FaultAttack, Scenario::ByzantineAttack];
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "na" => Ok(Scenario::NoAttack),
            "fa" => Ok(Scenario::FaultAttack),
            "ba" => Ok(Scenario::ByzantineAttack),
            other => Err(format!("unknown scenario `{other}` (expected na, fa, or ba)")),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Ablation variant: which subsystems of the full network are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Full system: S-PBFT, planned sharding, service exchange.
    Sbn,
    /// Plain PBFT transport; sharding and services stay on.
    NoSbc,
    /// Single shard of every SRD; S-PBFT and services stay on.
    NoSharding,
    /// Service exchange disabled; S-PBFT and sharding stay on.
    NoSc,
}

impl Variant {
    /// Stable lowercase token used in files and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Sbn => "sbn",
            Variant::NoSbc => "no-sbc",
            Variant::NoSharding => "no-shard",
            Variant::NoSc => "no-sc",
        }
    }

    /// All variants, in presentation order.
    pub const ALL: [Variant; 4] =
        [Variant::Sbn, Variant::NoSbc, Variant::NoSharding, Variant::NoSc];
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sbn" => Ok(Variant::Sbn),
            "no-sbc" => Ok(Variant::NoSbc),
            "no-shard" => Ok(Variant::NoSharding),
            "no-sc" => Ok(Variant::NoSc),
            other => Err(format!(
                "unknown variant `{other}` (expected sbn, no-sbc, no-shard, or no-sc)"
            )),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Node roster sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeCounts {
    /// Base stations.
    pub bs: u32,
    /// Aerial relays.
    pub uav: u32,
    /// Ground mobile devices.
    pub ground: u32,
    /// Satellites.
    pub satellite: u32,
    /// User terminals (not SRDs).
    pub ue: u32,
}

impl NodeCounts {
    /// Total SRD count (everything that is not a UE).
    pub fn srds(&self) -> u32 {
        self.bs + self.uav + self.ground + self.satellite
    }
}

/// Per-kind service coverage radii. Satellites always cover the whole
/// plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRadii {
    /// Base station radius, m.
    pub bs_m: f64,
    /// UAV radius, m.
    pub uav_m: f64,
    /// Ground device radius, m.
    pub ground_m: f64,
}

/// Idle circuit power per node kind, attack-invariant (a crashed radio
/// still burns its electronics).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallastPower {
    /// Base station, W.
    pub bs_w: f64,
    /// UAV, W.
    pub uav_w: f64,
    /// Ground device, W.
    pub ground_w: f64,
    /// Satellite, W.
    pub satellite_w: f64,
}

/// Everything one scenario execution needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Roster sizes.
    pub counts: NodeCounts,
    /// Plane extent (width, height), m.
    pub plane_m: [f64; 2],
    /// Service coverage per kind.
    pub coverage: CoverageRadii,
    /// Symbolic satellite altitude, m; prices their propagation delay.
    pub satellite_altitude_m: f64,
    /// UAV flight altitude, m.
    pub uav_altitude_m: f64,
    /// Ground devices stay within this radius of their home point, m.
    pub ground_mobility_radius_m: f64,
    /// Longest single ground step per epoch, m.
    pub ground_step_m: f64,
    /// UAV patrol circle radius, m.
    pub uav_patrol_radius_m: f64,
    /// UAV patrol speed, m/s.
    pub uav_speed_mps: f64,
    /// Attack scenario.
    pub scenario: Scenario,
    /// Ablation variant.
    pub variant: Variant,
    /// Fraction of SRDs converted to attackers under FA/BA.
    pub attacker_fraction: f64,
    /// Epochs per run.
    pub epochs: u32,
    /// Simulated epoch length, s.
    pub epoch_duration_s: f64,
    /// Independent runs per scenario.
    pub runs: u32,
    /// Base seed; run `i` uses `seed + i`.
    pub seed: u64,
    /// Physical channel.
    pub channel: ChannelParams,
    /// Service exchange knobs.
    pub services: ServiceParams,
    /// Multicast retransmissions allowed per message.
    pub max_retries: u32,
    /// Backscatter pairing range, m.
    pub pairing_range_m: f64,
    /// Minimum base stations per shard.
    pub min_shard_size: u32,
    /// Representative intra-shard link distance for the planner, m.
    pub d_intra_m: f64,
    /// Representative global (cross-shard) link distance, m.
    pub d_global_m: f64,
    /// Overrides the planner's shard count when set.
    pub forced_shards: Option<u32>,
    /// Starting credits per SRD.
    pub initial_balance: u64,
    /// Largest accepted transaction amount.
    pub max_tx_amount: u64,
    /// Accepted timestamp skew, s.
    pub clock_skew_window_s: f64,
    /// Idle circuit power per kind.
    pub ballast: BallastPower,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            counts: NodeCounts { bs: 50, uav: 20, ground: 20, satellite: 10, ue: 150 },
            plane_m: [1000.0, 1000.0],
            coverage: CoverageRadii { bs_m: 200.0, uav_m: 300.0, ground_m: 200.0 },
            satellite_altitude_m: 5.1e5,
            uav_altitude_m: 100.0,
            ground_mobility_radius_m: 150.0,
            ground_step_m: 10.0,
            uav_patrol_radius_m: 100.0,
            uav_speed_mps: 10.0,
            scenario: Scenario::NoAttack,
            variant: Variant::Sbn,
            attacker_fraction: 0.10,
            epochs: 100,
            epoch_duration_s: 0.1,
            runs: 200,
            seed: 1,
            channel: ChannelParams::default(),
            services: ServiceParams::default(),
            max_retries: 2,
            pairing_range_m: 150.0,
            min_shard_size: 4,
            d_intra_m: 100.0,
            d_global_m: 400.0,
            forced_shards: None,
            initial_balance: 100,
            max_tx_amount: 50,
            clock_skew_window_s: 0.2,
            ballast: BallastPower { bs_w: 5.0, uav_w: 2.0, ground_w: 0.5, satellite_w: 10.0 },
        }
    }
}

impl ScenarioConfig {
    /// Small roster sized so a four-variant, three-scenario sweep stays
    /// interactive.
    pub fn desk() -> Self {
        Self {
            counts: NodeCounts { bs: 10, uav: 4, ground: 4, satellite: 2, ue: 30 },
            runs: 50,
            ..Self::default()
        }
    }

    /// Checks every hard invariant a run relies on. The per-shard
    /// attacker-minority assumption is statistical (uniform placement at
    /// the default fraction) and is audited by tests, not gated here.
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |msg: String| Err(SimError::Config(msg));
        if self.counts.srds() == 0 {
            return fail("at least one SRD is required".into());
        }
        if self.counts.bs < self.min_shard_size {
            return fail(format!(
                "{} base stations cannot form even one shard of {}",
                self.counts.bs, self.min_shard_size
            ));
        }
        for (name, v) in [
            ("plane width", self.plane_m[0]),
            ("plane height", self.plane_m[1]),
            ("epoch_duration_s", self.epoch_duration_s),
            ("bs coverage", self.coverage.bs_m),
            ("uav coverage", self.coverage.uav_m),
            ("ground coverage", self.coverage.ground_m),
            ("d_intra_m", self.d_intra_m),
            ("d_global_m", self.d_global_m),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("attacker_fraction", self.attacker_fraction),
            ("ground_mobility_radius_m", self.ground_mobility_radius_m),
            ("ground_step_m", self.ground_step_m),
            ("uav_patrol_radius_m", self.uav_patrol_radius_m),
            ("uav_speed_mps", self.uav_speed_mps),
            ("satellite_altitude_m", self.satellite_altitude_m),
            ("uav_altitude_m", self.uav_altitude_m),
            ("clock_skew_window_s", self.clock_skew_window_s),
            ("ballast.bs_w", self.ballast.bs_w),
            ("ballast.uav_w", self.ballast.uav_w),
            ("ballast.ground_w", self.ballast.ground_w),
            ("ballast.satellite_w", self.ballast.satellite_w),
        ] {
            if !v.is_finite() || v < 0.0 {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.attacker_fraction >= 1.0 {
            return fail(format!(
                "attacker_fraction must be below 1, got {}",
                self.attacker_fraction
            ));
        }
        if self.epochs == 0 || self.runs == 0 {
            return fail("epochs and runs must be positive".into());
        }
        if self.min_shard_size == 0 {
            return fail("min_shard_size must be positive".into());
        }
        if self.forced_shards == Some(0) {
            return fail("forced_shards must be positive when set".into());
        }
        let dearest = self.services.prices.relay.max(self.services.prices.transfer)
            .max(self.services.prices.compute)
            .max(self.services.prices.charge);
        if dearest > self.max_tx_amount {
            return fail(format!(
                "max_tx_amount {} is below the dearest service price {dearest}",
                self.max_tx_amount
            ));
        }
        self.channel.validate().map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Scenario execution failure.
#[derive(Debug, Error)]
pub enum SimError {
    /// The configuration violates a hard invariant.
    #[error("config: {0}")]
    Config(String),
    /// Shard planning or leader election failed.
    #[error(transparent)]
    Sharding(#[from] ShardingError),
    /// A committed block failed to append; indicates an engine bug.
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// A placed network: SRDs, terminals, and the anchors mobility needs.
#[derive(Debug, Clone)]
pub struct Topology {
    /// All SRDs; the vector index equals the node id.
    pub srds: Vec<SrdNode>,
    /// All terminals; the vector index equals the UE id.
    pub ues: Vec<UserEquipment>,
    /// Tether point of each ground device.
    pub ground_home: BTreeMap<NodeId, [f64; 2]>,
    /// Patrol circle center and starting phase of each UAV.
    pub uav_orbit: BTreeMap<NodeId, ([f64; 2], f64)>,
}

/// Places every node uniformly on the plane. SRD ids are assigned in
/// kind order (base stations, UAVs, ground, satellites) so that id ranges
/// are stable for a given roster; UEs use their own id space.
pub fn build_topology(cfg: &ScenarioConfig, seed: u64) -> Topology {
    let mut r = rng::stream(seed, &[tags::TOPOLOGY]);
    let [w, h] = cfg.plane_m;
    let mut srds = Vec::with_capacity(cfg.counts.srds() as usize);
    let mut ground_home = BTreeMap::new();
    let mut uav_orbit = BTreeMap::new();

    let kinds = [
        (NodeKind::BaseStation, cfg.counts.bs),
        (NodeKind::Uav, cfg.counts.uav),
        (NodeKind::GroundMobile, cfg.counts.ground),
        (NodeKind::Satellite, cfg.counts.satellite),
    ];
    let mut id: NodeId = 0;
    for (kind, count) in kinds {
        for _ in 0..count {
            let x = r.random::<f64>() * w;
            let y = r.random::<f64>() * h;
            let (position, coverage) = match kind {
                NodeKind::BaseStation => ([x, y, 0.0], cfg.coverage.bs_m),
                NodeKind::Uav => {
                    let phase = r.random::<f64>() * std::f64::consts::TAU;
                    uav_orbit.insert(id, ([x, y], phase));
                    let px = x + cfg.uav_patrol_radius_m * phase.cos();
                    let py = y + cfg.uav_patrol_radius_m * phase.sin();
                    ([px, py, cfg.uav_altitude_m], cfg.coverage.uav_m)
                }
                NodeKind::GroundMobile => {
                    ground_home.insert(id, [x, y]);
                    ([x, y, 0.0], cfg.coverage.ground_m)
                }
                NodeKind::Satellite => ([x, y, cfg.satellite_altitude_m], f64::INFINITY),
            };
            srds.push(SrdNode {
                id,
                kind,
                position,
                behavior: Behavior::Honest,
                energy_spent_j: 0.0,
                reputation: 0.0,
                activity: 0,
                coverage_radius_m: coverage,
            });
            id += 1;
        }
    }

    let ues = (0..cfg.counts.ue)
        .map(|ue_id| {
            let x = r.random::<f64>() * w;
            let y = r.random::<f64>() * h;
            UserEquipment::new(ue_id, [x, y])
        })
        .collect();

    Topology { srds, ues, ground_home, uav_orbit }
}

/// Moves the world to the state it has when `epoch` begins.
///
/// Ground devices take one uniform random step of at most
/// `ground_step_m`, rejected outright if it would leave the tether disk.
/// UAVs sit at the patrol-circle angle implied by elapsed time. Base
/// stations and satellites never move. Steps are keyed by epoch, so
/// mobility at epoch `e` does not depend on how many times this has been
/// called.
pub fn step_mobility(topo: &mut Topology, cfg: &ScenarioConfig, seed: u64, epoch: u32) {
    let mut r = rng::stream(seed, &[tags::MOBILITY, u64::from(epoch)]);
    for srd in topo.srds.iter_mut() {
        match srd.kind {
            NodeKind::GroundMobile => {
                let angle = r.random::<f64>() * std::f64::consts::TAU;
                let dist = r.random::<f64>() * cfg.ground_step_m;
                let home = topo.ground_home[&srd.id];
                let cand =
                    [srd.position[0] + dist * angle.cos(), srd.position[1] + dist * angle.sin()];
                let dx = cand[0] - home[0];
                let dy = cand[1] - home[1];
                if (dx * dx + dy * dy).sqrt() <= cfg.ground_mobility_radius_m {
                    srd.position[0] = cand[0];
                    srd.position[1] = cand[1];
                }
            }
            NodeKind::Uav => {
                let (center, phase0) = topo.uav_orbit[&srd.id];
                let omega = if cfg.uav_patrol_radius_m > 0.0 {
                    cfg.uav_speed_mps / cfg.uav_patrol_radius_m
                } else {
                    0.0
                };
                let t = f64::from(epoch) * cfg.epoch_duration_s;
                let phase = phase0 + omega * t;
                srd.position[0] = center[0] + cfg.uav_patrol_radius_m * phase.cos();
                srd.position[1] = center[1] + cfg.uav_patrol_radius_m * phase.sin();
            }
            NodeKind::BaseStation | NodeKind::Satellite => {}
        }
    }
}

/// Draws every SRD's starting reputation, uniform in [0.70, 0.95], from
/// the reputation stream. Attack scenarios later override their
/// attackers from a different stream, so honest draws agree across
/// scenarios at the same seed.
pub fn assign_reputations(srds: &mut [SrdNode], seed: u64) {
    let mut r = rng::stream(seed, &[tags::REPUTATION]);
    for srd in srds.iter_mut() {
        srd.reputation = 0.70 + 0.25 * r.random::<f64>();
    }
}

/// Flips `floor(fraction * srds)` uniformly chosen SRDs to the scenario's
/// attacker behavior and gives them a low reputation in [0.05, 0.30].
/// FA and BA consume identical draws, so the attacked id set is the same
/// for both at a given seed; NA touches nothing.
pub fn inject_attackers(
    srds: &mut [SrdNode],
    scenario: Scenario,
    fraction: f64,
    seed: u64,
) -> BTreeSet<NodeId> {
    let behavior = match scenario {
        Scenario::NoAttack => return BTreeSet::new(),
        Scenario::FaultAttack => Behavior::FaultAttacker,
        Scenario::ByzantineAttack => Behavior::ByzantineAttacker,
    };
    let count = (fraction * srds.len() as f64).floor() as usize;
    if count == 0 {
        return BTreeSet::new();
    }
    let mut r = rng::stream(seed, &[tags::ATTACK]);
    let picked: BTreeSet<usize> =
        rand::seq::index::sample(&mut r, srds.len(), count).into_iter().collect();
    let mut ids = BTreeSet::new();
    for idx in picked {
        srds[idx].behavior = behavior;
        srds[idx].reputation = 0.05 + 0.25 * r.random::<f64>();
        ids.insert(srds[idx].id);
    }
    ids
}

/// Aggregate results of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    /// Every joule charged in the event trace.
    pub total_energy_j: f64,
    /// Mean confirmation latency over settled-and-committed service
    /// transactions, ms; 0.0 when nothing settled.
    pub mean_service_latency_ms: f64,
    /// Missed service events over service opportunities.
    pub deadline_violation_rate: f64,
    /// Committed consensus rounds over attempted rounds.
    pub consensus_success_rate: f64,
    /// Blocks appended across all chains (shard and global).
    pub committed_blocks: u64,
    /// Forged transactions found inside committed blocks. Zero unless
    /// consensus safety broke.
    pub forged_committed: u64,
    /// Active radio transmissions across all consensus rounds.
    pub active_msgs: u64,
    /// Backscatter transmissions across all consensus rounds.
    pub backscatter_msgs: u64,
    /// The consensus share of `total_energy_j`.
    pub consensus_energy_j: f64,
    /// Running hash of the full event trace; the reproducibility witness.
    pub trace_hash: u64,
}

// Event kinds of the energy/commit trace.
const EV_CONSENSUS: u8 = 1;
const EV_ACCESS: u8 = 2;
const EV_PENALTY: u8 = 3;
const EV_BALLAST: u8 = 4;
const EV_COMMIT: u8 = 5;

/// Append-only event log reduced to a running FNV hash and an energy sum.
struct Trace {
    hash: u64,
    energy_j: f64,
}

impl Trace {
    fn new() -> Self {
        Self { hash: 0xcbf2_9ce4_8422_2325, energy_j: 0.0 }
    }

    fn record(&mut self, kind: u8, epoch: u32, node: NodeId, a: u64, b: u64) {
        let mut bytes = [0u8; 25];
        bytes[0] = kind;
        bytes[1..5].copy_from_slice(&epoch.to_be_bytes());
        bytes[5..9].copy_from_slice(&node.to_be_bytes());
        bytes[9..17].copy_from_slice(&a.to_be_bytes());
        bytes[17..25].copy_from_slice(&b.to_be_bytes());
        for byte in bytes {
            self.hash ^= u64::from(byte);
            self.hash = self.hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn energy(&mut self, kind: u8, epoch: u32, node: NodeId, joules: f64, aux: u64) {
        self.energy_j += joules;
        self.record(kind, epoch, node, joules.to_bits(), aux);
    }
}

/// Bookkeeping for a settled transaction waiting for its commit.
struct PendingTx {
    access_latency_s: f64,
    deadline_s: f64,
}

// Fallback deadline for SRD-to-SRD services, matching the UE default.
const DEFAULT_DEADLINE_S: f64 = 0.050;

fn ballast_w(kind: NodeKind, b: &BallastPower) -> f64 {
    match kind {
        NodeKind::BaseStation => b.bs_w,
        NodeKind::Uav => b.uav_w,
        NodeKind::GroundMobile => b.ground_w,
        NodeKind::Satellite => b.satellite_w,
    }
}

/// Picks the shard count a variant runs with: one for `NoSharding`, the
/// forced override if set, otherwise the planner's optimum clamped to
/// what the base stations can staff.
fn plan_shard_count(cfg: &ScenarioConfig) -> Result<u32, SimError> {
    if cfg.variant == Variant::NoSharding {
        return Ok(1);
    }
    if let Some(n) = cfg.forced_shards {
        return Ok(n);
    }
    let p = EnergyModelParams::from_channel(
        cfg.counts.srds(),
        cfg.min_shard_size,
        cfg.d_intra_m,
        cfg.d_global_m,
        &cfg.channel,
    )?;
    let n_star = optimal_shards(&p)?.n_star;
    Ok(n_star.min(cfg.counts.bs / cfg.min_shard_size).max(1))
}

/// Candidates below this reputation never lead while a qualified base
/// station exists. Election is reputation-gated precisely so that nodes
/// in the attacker band cannot buy a committee seat through the noise
/// failures of better peers.
const MIN_LEADER_REPUTATION: f64 = 0.5;

/// Elects a leader among reputable, non-benched base stations. Exhausting
/// the bench resets it; the reputation gate opens only when no member
/// clears it (then liveness wins and anyone may lead).
fn elect(
    members: &[SrdNode],
    bench: &mut BTreeSet<NodeId>,
    weights: &LeaderWeights,
) -> Result<NodeId, ShardingError> {
    let pick = |pool: &[SrdNode], bench: &BTreeSet<NodeId>| {
        let available: Vec<SrdNode> =
            pool.iter().filter(|m| !bench.contains(&m.id)).cloned().collect();
        select_leader(&available, weights)
    };
    let reputable: Vec<SrdNode> =
        members.iter().filter(|m| m.reputation >= MIN_LEADER_REPUTATION).cloned().collect();
    if let Ok(id) = pick(&reputable, bench) {
        return Ok(id);
    }
    if let Ok(id) = select_leader(&reputable, weights) {
        bench.clear();
        return Ok(id);
    }
    if let Ok(id) = pick(members, bench) {
        return Ok(id);
    }
    bench.clear();
    select_leader(members, weights)
}

/// Runs transactions through the validation gates in pool order against
/// running balances, splitting them into (kept, all_kept) where
/// `all_kept` reports whether anything was dropped.
fn filter_pool(
    ledger: &LedgerState,
    pool: Vec<ServiceTransaction>,
    now_s: f64,
) -> (Vec<ServiceTransaction>, bool) {
    let mut planned: BTreeMap<NodeId, u64> = BTreeMap::new();
    let mut kept = Vec::with_capacity(pool.len());
    let mut clean = true;
    for tx in pool {
        let spent = planned.get(&tx.demander).copied().unwrap_or(0);
        let ok = ledger.validate_transaction(&tx, now_s).is_valid()
            && ledger.balance(tx.demander) >= spent + tx.amount;
        if ok {
            *planned.entry(tx.demander).or_insert(0) += tx.amount;
            kept.push(tx);
        } else {
            clean = false;
        }
    }
    (kept, clean)
}

/// Executes one run. `run_index` offsets the base seed; metrics and the
/// trace hash are pure functions of (config, run_index).
pub fn run_single(cfg: &ScenarioConfig, run_index: u32) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    let seed = cfg.seed.wrapping_add(u64::from(run_index));
    let mut topo = build_topology(cfg, seed);
    assign_reputations(&mut topo.srds, seed);
    inject_attackers(&mut topo.srds, cfg.scenario, cfg.attacker_fraction, seed);

    let mut svc = cfg.services.clone();
    svc.sc_enabled = svc.sc_enabled && cfg.variant != Variant::NoSc;

    let shard_count = plan_shard_count(cfg)?;
    let weights = LeaderWeights::default();
    let plan = assign_shards(&topo.srds, shard_count, cfg.min_shard_size, &weights)?;

    let mut ledger = LedgerState::new(cfg.clock_skew_window_s, cfg.max_tx_amount);
    for srd in &topo.srds {
        let secret = rng::mix(&[seed, tags::SECRET, u64::from(srd.id)]);
        ledger.register_account(srd.id, secret, cfg.initial_balance);
    }
    let initial_credits = ledger.total_credits();
    ledger.init_chain(ChainId::Global)?;
    for k in 0..shard_count {
        ledger.init_chain(ChainId::Shard(k))?;
    }

    initial_attach(&mut topo.ues, &topo.srds, &svc);

    let t_msg = cfg.channel.t_msg_s();
    let diag = (cfg.plane_m[0].powi(2) + cfg.plane_m[1].powi(2)).sqrt();
    let alt = if cfg.counts.satellite > 0 {
        cfg.satellite_altitude_m
    } else {
        cfg.uav_altitude_m
    };
    let d_max = (diag * diag + alt * alt).sqrt();
    let ccfg = ConsensusConfig {
        mode: if cfg.variant == Variant::NoSbc {
            ConsensusMode::Pbft
        } else {
            ConsensusMode::SymbioticPbft
        },
        max_retries: cfg.max_retries,
        pairing_range_m: cfg.pairing_range_m,
        phase_timeout_s: 2.0 * (t_msg + d_max / cfg.channel.prop_speed_mps),
    };

    let mut trace = Trace::new();
    let mut pools: BTreeMap<u32, Vec<ServiceTransaction>> =
        (0..shard_count).map(|k| (k, Vec::new())).collect();
    let mut global_pool: Vec<ServiceTransaction> = Vec::new();
    let mut pending: BTreeMap<u64, PendingTx> = BTreeMap::new();
    let mut forged_ids: BTreeSet<u64> = BTreeSet::new();
    let mut tx_counter: u64 = 1;

    let mut consensus_energy = 0.0f64;
    let mut latency_sum = 0.0f64;
    let mut latency_samples = 0u64;
    let mut late_samples = 0u64;
    let mut unserved = 0u64;
    let mut unmatched = 0u64;
    let mut dropped_settled = 0u64;
    let mut attempted_rounds = 0u64;
    let mut committed_rounds = 0u64;
    let mut committed_blocks = 0u64;
    let mut forged_committed = 0u64;
    let mut active_msgs = 0u64;
    let mut backscatter_msgs = 0u64;

    // Leaders whose round failed at the current chain height sit out the
    // next elections on that chain until some leader commits it. Noise
    // failures are transient, so they must not erode reputation; an
    // inverted ranking would eventually hand leadership, and with it a
    // committee seat, to a low-reputation attacker.
    let mut benched: BTreeMap<u64, BTreeSet<NodeId>> = BTreeMap::new();
    let anchor_bench_key = ChainId::Global.canonical();

    // Views per chain: how many rounds have failed at the current height.
    // Folding the view into the round seed gives a rerun of the height
    // fresh channel draws; a failed constellation of deliveries is a
    // moment of the channel, not a property of the height.
    let mut views: BTreeMap<u64, u64> = BTreeMap::new();

    let honest_ids: Vec<NodeId> =
        topo.srds.iter().filter(|s| s.behavior.is_honest()).map(|s| s.id).collect();
    let attacker_ids: Vec<NodeId> =
        topo.srds.iter().filter(|s| !s.behavior.is_honest()).map(|s| s.id).collect();

    for epoch in 0..cfg.epochs {
        let now = f64::from(epoch) * cfg.epoch_duration_s;
        if epoch > 0 {
            step_mobility(&mut topo, cfg, seed, epoch);
        }

        for srd in topo.srds.iter_mut() {
            let j = ballast_w(srd.kind, &cfg.ballast) * cfg.epoch_duration_s;
            srd.energy_spent_j += j;
            trace.energy(EV_BALLAST, epoch, srd.id, j, 0);
        }

        // Service exchange over the current snapshot. Payments reserve
        // against the ledger balance net of this epoch's earlier matches.
        let mut reserved: BTreeMap<NodeId, u64> = BTreeMap::new();
        let ep = {
            let ledger_view = &ledger;
            let mut can_pay = |id: NodeId, amount: u64| -> bool {
                let r = reserved.entry(id).or_insert(0);
                if ledger_view.balance(id) >= *r + amount {
                    *r += amount;
                    true
                } else {
                    false
                }
            };
            run_service_epoch(
                &mut topo.ues,
                &topo.srds,
                u64::from(epoch),
                now,
                seed,
                &svc,
                &cfg.channel,
                &mut can_pay,
            )
        };

        unserved += ep.unserved_ue_epochs;

        for s in &ep.served {
            let j = channel::tx_power_w(s.access_distance_m, &cfg.channel) * svc.access_time_s;
            topo.srds[s.server as usize].energy_spent_j += j;
            trace.energy(EV_ACCESS, epoch, s.server, j, u64::from(s.ue));
            if s.access_latency_s
                > topo.ues.get(s.ue as usize).map_or(DEFAULT_DEADLINE_S, |u| u.latency_req_s)
            {
                late_samples += 1;
            }
        }

        for m in &ep.matched {
            // Prepaid: the settlement stands even when a Byzantine
            // provider withholds the service.
            let shard = plan.assignments[&m.request.demander];
            let tx =
                services::settle(&m.request, m.provider, m.symbiosis, tx_counter, shard, now, &svc, &ledger)?;
            tx_counter += 1;
            let deadline = m
                .request
                .ue
                .and_then(|u| topo.ues.get(u as usize))
                .map_or(DEFAULT_DEADLINE_S, |u| u.latency_req_s);
            let cross_shard = plan.assignments[&m.provider] != shard;
            pending.insert(
                tx.tx_id,
                PendingTx { access_latency_s: m.access_latency_s, deadline_s: deadline },
            );
            topo.srds[m.request.demander as usize].activity += 1;
            topo.srds[m.provider as usize].activity += 1;
            if cross_shard {
                global_pool.push(tx);
            } else {
                pools.get_mut(&shard).unwrap().push(tx);
            }
        }

        // A demander with an unmet need shouts into the void: one active
        // message at worst-case range, and the need persists.
        for q in &ep.unmatched {
            let j = channel::message_energy_j(Transmission::Active { distance_m: diag }, &cfg.channel);
            topo.srds[q.demander as usize].energy_spent_j += j;
            trace.energy(EV_PENALTY, epoch, q.demander, j, 0);
            unmatched += 1;
        }

        // Byzantine SRDs forge one transaction per epoch against a
        // rotating honest victim, signed with the wrong secret.
        if cfg.scenario == Scenario::ByzantineAttack && !honest_ids.is_empty() {
            for &ba in &attacker_ids {
                let victim = honest_ids[(ba as usize + epoch as usize) % honest_ids.len()];
                let shard = plan.assignments[&victim];
                let mut tx = ServiceTransaction::new(
                    tx_counter,
                    TxKind::Transfer,
                    victim,
                    ba,
                    1,
                    now,
                    Symbiosis::Facultative,
                    shard,
                )?;
                tx_counter += 1;
                let ba_secret = rng::mix(&[seed, tags::SECRET, u64::from(ba)]);
                tx.signature = mock_sign(&tx, ba_secret);
                forged_ids.insert(tx.tx_id);
                pools.get_mut(&shard).unwrap().push(tx);
            }
        }

        // One consensus round per shard; simulated time runs them in
        // parallel, so the epoch pays only for the slowest.
        let mut max_shard_latency = 0.0f64;
        let mut leaders: BTreeMap<u32, NodeId> = BTreeMap::new();
        for k in 0..shard_count {
            let chain_key = ChainId::Shard(k).canonical();
            let members: Vec<SrdNode> =
                plan.members_of(k).into_iter().map(|id| topo.srds[id as usize].clone()).collect();
            let bench = benched.entry(chain_key).or_default();
            let leader = elect(&members, bench, &weights)?;
            leaders.insert(k, leader);

            let pool = pools.insert(k, Vec::new()).unwrap_or_default();
            let leader_honest = topo.srds[leader as usize].behavior.is_honest();
            // An honest leader screens the pool; a Byzantine one proposes
            // it untouched and the honest validators refuse the block.
            let (proposed, block_valid) = if leader_honest {
                let (kept, _) = filter_pool(&ledger, pool, now);
                (kept, true)
            } else {
                let (_, clean) = filter_pool(&ledger, pool.clone(), now);
                (pool, clean)
            };

            let block = ledger.build_block(ChainId::Shard(k), proposed.clone())?;
            let view = views.get(&chain_key).copied().unwrap_or(0);
            let round_seed = rng::mix(&[seed, tags::VIEW, chain_key, view]);
            let out =
                run_round(&members, leader, &block, block_valid, round_seed, &ccfg, &cfg.channel);
            attempted_rounds += 1;
            active_msgs += out.active_msgs;
            backscatter_msgs += out.backscatter_msgs;
            // A conflicting commit quorum is a safety break, counted with
            // committed forgeries.
            forged_committed += u64::from(out.forged_committed);
            for (&id, &j) in &out.energy_per_node {
                topo.srds[id as usize].energy_spent_j += j;
                consensus_energy += j;
                trace.energy(EV_CONSENSUS, epoch, id, j, u64::from(k));
            }
            max_shard_latency = max_shard_latency.max(out.round_latency_s);

            if out.committed {
                ledger.append_block(block.clone(), now)?;
                committed_rounds += 1;
                committed_blocks += 1;
                benched.remove(&chain_key);
                views.remove(&chain_key);
                trace.record(EV_COMMIT, epoch, leader, block.block_hash, u64::from(k));
                for (idx, tx) in block.txs.iter().enumerate() {
                    if forged_ids.contains(&tx.tx_id) {
                        forged_committed += 1;
                    }
                    if let Some(p) = pending.remove(&tx.tx_id) {
                        let sample = (now - tx.timestamp_s)
                            + p.access_latency_s
                            + idx as f64 * t_msg
                            + out.round_latency_s;
                        latency_sum += sample;
                        latency_samples += 1;
                        if sample > p.deadline_s {
                            late_samples += 1;
                        }
                    }
                }
                debug_assert_eq!(ledger.total_credits(), initial_credits);
            } else {
                // Rotation: the failed leader sits out until this height
                // commits. Only a leader that sent nothing at all (the
                // observable signature of a fault attacker) forfeits its
                // reputation; noise failures must not demote honest
                // leaders below the attackers' reputation range.
                if out.active_msgs == 0 && out.backscatter_msgs == 0 {
                    topo.srds[leader as usize].reputation = 0.0;
                }
                benched.entry(chain_key).or_default().insert(leader);
                *views.entry(chain_key).or_insert(0) += 1;
                pools.insert(k, proposed);
            }
        }

        // Committee round: the epoch's leaders anchor every shard tip
        // (and any cross-shard settlements) into the global chain.
        let committee: Vec<SrdNode> =
            leaders.values().map(|&id| topo.srds[id as usize].clone()).collect();
        let anchor_bench = benched.entry(anchor_bench_key).or_default();
        let anchor_leader = elect(&committee, anchor_bench, &weights)?;
        let pool = std::mem::take(&mut global_pool);
        let leader_honest = topo.srds[anchor_leader as usize].behavior.is_honest();
        let (proposed, block_valid) = if leader_honest {
            let (kept, _) = filter_pool(&ledger, pool, now);
            (kept, true)
        } else {
            let (_, clean) = filter_pool(&ledger, pool.clone(), now);
            (pool, clean)
        };
        let mut tips: BTreeMap<u32, u64> = BTreeMap::new();
        for k in 0..shard_count {
            let chain = ledger.chain(ChainId::Shard(k))?;
            tips.insert(k, chain.last().expect("chains are never empty").block_hash);
        }
        let block = ledger.build_anchor_block(&tips, proposed.clone())?;
        let view = views.get(&anchor_bench_key).copied().unwrap_or(0);
        let round_seed = rng::mix(&[seed, tags::VIEW, anchor_bench_key, view]);
        let out =
            run_round(&committee, anchor_leader, &block, block_valid, round_seed, &ccfg, &cfg.channel);
        attempted_rounds += 1;
        active_msgs += out.active_msgs;
        backscatter_msgs += out.backscatter_msgs;
        forged_committed += u64::from(out.forged_committed);
        for (&id, &j) in &out.energy_per_node {
            topo.srds[id as usize].energy_spent_j += j;
            consensus_energy += j;
            trace.energy(EV_CONSENSUS, epoch, id, j, ChainId::Global.canonical());
        }

        if out.committed {
            ledger.append_block(block.clone(), now)?;
            committed_rounds += 1;
            committed_blocks += 1;
            benched.remove(&anchor_bench_key);
            views.remove(&anchor_bench_key);
            trace.record(EV_COMMIT, epoch, anchor_leader, block.block_hash, ChainId::Global.canonical());
            for (idx, tx) in block.txs.iter().enumerate() {
                if forged_ids.contains(&tx.tx_id) {
                    forged_committed += 1;
                }
                if let Some(p) = pending.remove(&tx.tx_id) {
                    let sample = (now - tx.timestamp_s)
                        + p.access_latency_s
                        + idx as f64 * t_msg
                        + max_shard_latency
                        + out.round_latency_s;
                    latency_sum += sample;
                    latency_samples += 1;
                    if sample > p.deadline_s {
                        late_samples += 1;
                    }
                }
            }
            debug_assert_eq!(ledger.total_credits(), initial_credits);
        } else {
            if out.active_msgs == 0 && out.backscatter_msgs == 0 {
                topo.srds[anchor_leader as usize].reputation = 0.0;
            }
            benched.entry(anchor_bench_key).or_default().insert(anchor_leader);
            *views.entry(anchor_bench_key).or_insert(0) += 1;
            global_pool = proposed;
        }
    }

    // Settled transactions that never reached a committed block are
    // missed service events, whether screened out or stuck in a pool.
    dropped_settled += pending.len() as u64;

    // Closing audits: credits conserved, chains intact, and the node
    // meters agree with the event trace.
    assert_eq!(ledger.total_credits(), initial_credits, "credit conservation broke");
    ledger.verify_all_chains()?;
    let metered: f64 = topo.srds.iter().map(|s| s.energy_spent_j).sum();
    assert!(
        (metered - trace.energy_j).abs() <= 1e-9 * trace.energy_j.max(1.0),
        "node meters disagree with the event trace: {metered} vs {}",
        trace.energy_j
    );

    let settled_total = latency_samples + dropped_settled;
    let opportunities =
        u64::from(cfg.counts.ue) * u64::from(cfg.epochs) + settled_total + unmatched;
    let violations = unserved + unmatched + late_samples + dropped_settled;
    let metrics = RunMetrics {
        total_energy_j: trace.energy_j,
        mean_service_latency_ms: if latency_samples == 0 {
            0.0
        } else {
            1000.0 * latency_sum / latency_samples as f64
        },
        deadline_violation_rate: if opportunities == 0 {
            0.0
        } else {
            violations as f64 / opportunities as f64
        },
        consensus_success_rate: committed_rounds as f64 / attempted_rounds as f64,
        committed_blocks,
        forged_committed,
        active_msgs,
        backscatter_msgs,
        consensus_energy_j: consensus_energy,
        trace_hash: trace.hash,
    };
    debug_assert!((0.0..=1.0).contains(&metrics.deadline_violation_rate));
    debug_assert!((0.0..=1.0).contains(&metrics.consensus_success_rate));
    Ok(metrics)
}

/// Executes `cfg.runs` independent runs (seeds `seed..seed+runs`) and
/// returns their metrics in run order.
///
/// Runs are embarrassingly parallel; the row order is fixed by run index,
/// so thread count cannot change the output. `SBN_THREADS` bounds the
/// worker pool (0 or unset: library default).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<RunMetrics>, SimError> {
    cfg.validate()?;
    let work = |i: u32| run_single(cfg, i);
    let threads = std::env::var("SBN_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    match threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::Config(format!("thread pool: {e}")))?
            .install(|| (0..cfg.runs).into_par_iter().map(work).collect()),
        _ => (0..cfg.runs).into_par_iter().map(work).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig {
            counts: NodeCounts { bs: 4, uav: 0, ground: 0, satellite: 0, ue: 0 },
            epochs: 3,
            runs: 2,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn topology_is_deterministic_and_shaped_by_the_roster() {
        let cfg = ScenarioConfig::desk();
        let a = build_topology(&cfg, 9);
        let b = build_topology(&cfg, 9);
        assert_eq!(a.srds.len(), 20);
        assert_eq!(a.ues.len(), 30);
        for (x, y) in a.srds.iter().zip(b.srds.iter()) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.kind, y.kind);
        }
        for (x, y) in a.ues.iter().zip(b.ues.iter()) {
            assert_eq!(x.position, y.position);
        }
        let c = build_topology(&cfg, 10);
        assert!(
            a.srds.iter().zip(c.srds.iter()).any(|(x, y)| x.position != y.position),
            "different seeds must move nodes"
        );
        for (i, s) in a.srds.iter().enumerate() {
            assert_eq!(s.id as usize, i, "vector index doubles as node id");
            match s.kind {
                NodeKind::Satellite => {
                    assert_eq!(s.position[2], cfg.satellite_altitude_m);
                    assert!(s.coverage_radius_m.is_infinite());
                }
                NodeKind::Uav => assert_eq!(s.position[2], cfg.uav_altitude_m),
                _ => assert_eq!(s.position[2], 0.0),
            }
        }
    }

    // Placement oracle: satellites cover the whole plane, so coverage of
    // every UE must hold in at least 99% of seeded placements (here: all).
    #[test]
    fn every_ue_is_covered_in_nearly_all_placements() {
        let cfg = ScenarioConfig::default();
        let mut covered_everywhere = 0;
        for seed in 0..50 {
            let topo = build_topology(&cfg, seed);
            let all = topo
                .ues
                .iter()
                .all(|ue| topo.srds.iter().any(|s| services::covers(s, ue.position)));
            covered_everywhere += u32::from(all);
        }
        assert!(covered_everywhere >= 50 * 99 / 100);
    }

    #[test]
    fn mobility_respects_tethers_and_static_kinds() {
        let cfg = ScenarioConfig::desk();
        let mut topo = build_topology(&cfg, 3);
        let initial: Vec<[f64; 3]> = topo.srds.iter().map(|s| s.position).collect();
        for epoch in 1..200 {
            step_mobility(&mut topo, &cfg, 3, epoch);
            for s in &topo.srds {
                match s.kind {
                    NodeKind::GroundMobile => {
                        let home = topo.ground_home[&s.id];
                        let d = ((s.position[0] - home[0]).powi(2)
                            + (s.position[1] - home[1]).powi(2))
                        .sqrt();
                        assert!(d <= cfg.ground_mobility_radius_m + 1e-9);
                    }
                    NodeKind::Uav => {
                        let (c, _) = topo.uav_orbit[&s.id];
                        let d = ((s.position[0] - c[0]).powi(2) + (s.position[1] - c[1]).powi(2))
                            .sqrt();
                        assert!((d - cfg.uav_patrol_radius_m).abs() < 1e-6, "stays on the circle");
                    }
                    NodeKind::BaseStation | NodeKind::Satellite => {
                        assert_eq!(s.position, initial[s.id as usize]);
                    }
                }
            }
        }
    }

    // With a zero tether radius every candidate step leaves the disk, so
    // every step must be rejected.
    #[test]
    fn outward_steps_at_the_boundary_are_rejected() {
        let cfg = ScenarioConfig {
            ground_mobility_radius_m: 0.0,
            ..ScenarioConfig::desk()
        };
        let mut topo = build_topology(&cfg, 5);
        let initial: Vec<[f64; 3]> = topo.srds.iter().map(|s| s.position).collect();
        for epoch in 1..50 {
            step_mobility(&mut topo, &cfg, 5, epoch);
        }
        for s in topo.srds.iter().filter(|s| s.kind == NodeKind::GroundMobile) {
            assert_eq!(s.position, initial[s.id as usize]);
        }
    }

    #[test]
    fn attacker_injection_is_exact_shared_and_rep_separated() {
        let cfg = ScenarioConfig::default();
        let mut na = build_topology(&cfg, 11).srds;
        let mut fa = na.clone();
        let mut ba = na.clone();
        assign_reputations(&mut na, 11);
        assign_reputations(&mut fa, 11);
        assign_reputations(&mut ba, 11);

        let none = inject_attackers(&mut na, Scenario::NoAttack, 0.10, 11);
        let fa_ids = inject_attackers(&mut fa, Scenario::FaultAttack, 0.10, 11);
        let ba_ids = inject_attackers(&mut ba, Scenario::ByzantineAttack, 0.10, 11);

        assert!(none.is_empty());
        assert_eq!(fa_ids.len(), 10, "floor(0.10 * 100)");
        assert_eq!(fa_ids, ba_ids, "both attacks hit the same devices");
        for s in &fa {
            if fa_ids.contains(&s.id) {
                assert_eq!(s.behavior, Behavior::FaultAttacker);
                assert!((0.05..=0.30).contains(&s.reputation));
            } else {
                assert_eq!(s.behavior, Behavior::Honest);
                assert!((0.70..=0.95).contains(&s.reputation));
                let na_rep = na[s.id as usize].reputation;
                assert_eq!(s.reputation, na_rep, "honest draws agree across scenarios");
            }
        }
        for s in &ba {
            if ba_ids.contains(&s.id) {
                assert_eq!(s.behavior, Behavior::ByzantineAttacker);
            }
        }
    }

    // Four stations, nothing else: a single feasible shard that commits
    // one empty shard block and one anchor block per epoch.
    #[test]
    fn minimal_roster_heartbeats_empty_blocks() {
        let cfg = tiny();
        let m = run_single(&cfg, 0).unwrap();
        assert_eq!(m.committed_blocks, 2 * 3);
        assert_eq!(m.consensus_success_rate, 1.0);
        assert_eq!(m.mean_service_latency_ms, 0.0, "no UEs, no settlements");
        assert_eq!(m.forged_committed, 0);
        assert!(m.total_energy_j > 0.0);
    }

    #[test]
    fn runs_are_reproducible_to_the_bit() {
        let mut cfg = ScenarioConfig::desk();
        cfg.runs = 2;
        cfg.epochs = 10;
        cfg.scenario = Scenario::ByzantineAttack;
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
        assert_ne!(a[0].trace_hash, a[1].trace_hash, "different run seeds diverge");
    }

    #[test]
    fn variant_knobs_flip_the_right_subsystems() {
        let mut cfg = ScenarioConfig::desk();
        cfg.runs = 1;
        cfg.epochs = 10;

        cfg.variant = Variant::Sbn;
        let sbn = run_single(&cfg, 0).unwrap();
        cfg.variant = Variant::NoSbc;
        let no_sbc = run_single(&cfg, 0).unwrap();
        cfg.variant = Variant::NoSc;
        let no_sc = run_single(&cfg, 0).unwrap();

        assert!(sbn.backscatter_msgs > 0);
        assert_eq!(no_sbc.backscatter_msgs, 0, "plain PBFT never backscatters");
        assert_eq!(no_sc.mean_service_latency_ms, 0.0, "nothing settles without the exchange");
        assert!(no_sc.committed_blocks > 0, "consensus heartbeats regardless");
        assert!(
            sbn.consensus_energy_j < no_sbc.consensus_energy_j,
            "backscatter votes are free"
        );
    }

    #[test]
    fn byzantine_runs_never_commit_forgeries() {
        let mut cfg = ScenarioConfig::desk();
        cfg.runs = 1;
        cfg.epochs = 20;
        cfg.scenario = Scenario::ByzantineAttack;
        let m = run_single(&cfg, 0).unwrap();
        assert_eq!(m.forged_committed, 0);
        assert!(m.committed_blocks > 0);
        assert!((0.0..=1.0).contains(&m.deadline_violation_rate));
        assert!((0.0..=1.0).contains(&m.consensus_success_rate));
    }

    #[test]
    fn config_gates_reject_nonsense() {
        let mut cfg = ScenarioConfig::default();
        cfg.counts.bs = 3;
        assert!(matches!(run_scenario(&cfg), Err(SimError::Config(_))));

        let cfg = ScenarioConfig { epochs: 0, ..ScenarioConfig::default() };
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));

        let cfg = ScenarioConfig { attacker_fraction: 1.5, ..ScenarioConfig::default() };
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));

        let cfg = ScenarioConfig { forced_shards: Some(0), ..ScenarioConfig::default() };
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));

        let cfg = ScenarioConfig { max_tx_amount: 2, ..ScenarioConfig::default() };
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn scenario_and_variant_tokens_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.label().parse::<Scenario>().unwrap(), s);
        }
        for v in Variant::ALL {
            assert_eq!(v.label().parse::<Variant>().unwrap(), v);
        }
        assert!("NA".parse::<Scenario>().is_err(), "tokens are lowercase");
        assert!("nosc".parse::<Variant>().is_err());
    }
}
