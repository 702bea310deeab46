//! Symbiotic service exchange: demand generation, provider matching, and
//! settlement into transactions.
//!
//! User equipment is served by the SRD it is subscribed to (its home).
//! Subscription is sticky: a UE can only change servers through a settled
//! Transfer transaction, so a dead or lying home strands its subscribers
//! until the exchange re-homes them. Service needs a home cannot meet
//! become requests:
//!
//! * Relay: the UE is covered, but no covering node has a free slot. The
//!   nearest covering node relays the traffic to an in-range provider.
//! * Transfer: either a full home hands a UE over to a covering node with
//!   slack, or a prospective new server adopts a UE whose home is gone and
//!   pays a peer for the session state.
//! * Compute and Charge: per-SRD needs drawn each epoch with fixed
//!   probabilities, served by any in-range provider with capacity.
//!
//! Matching is nearest-first with capacity and exclusion filters. A match
//! settles immediately (the demander prepays); a Byzantine provider keeps
//! the payment and withholds the service, which the demander discovers the
//! same epoch and remembers. With `sc_enabled` off, requests are generated
//! but never matched, so no transaction ever settles.

use std::collections::{BTreeMap, BTreeSet};

use crate::channel::ChannelParams;
use crate::consensus::{Behavior, SrdNode};
use crate::ledger::{
    LedgerError, LedgerState, NodeId, ServiceTransaction, Symbiosis, TxKind,
};
use crate::rng::{self, tags};

/// A served terminal. Demand is constant-rate; the latency requirement is
/// the deadline every service event is judged against.
#[derive(Debug, Clone)]
pub struct UserEquipment {
    /// Terminal id, distinct from SRD node ids.
    pub id: u32,
    /// Ground position (x, y), m.
    pub position: [f64; 2],
    /// Offered load, Mbit/s.
    pub demand_rate_mbps: f64,
    /// Service deadline, s.
    pub latency_req_s: f64,
    /// Current subscription. Changes only via a settled Transfer.
    pub home: Option<NodeId>,
    /// Providers that accepted and then failed to deliver; never retried.
    pub failed: BTreeSet<NodeId>,
}

impl UserEquipment {
    /// A fresh, unsubscribed terminal with the default service profile.
    pub fn new(id: u32, position: [f64; 2]) -> Self {
        Self {
            id,
            position,
            demand_rate_mbps: 20.0,
            latency_req_s: 0.050,
            home: None,
            failed: BTreeSet::new(),
        }
    }
}

/// Credit price per service class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServicePrices {
    /// Traffic relayed on behalf of a covering node.
    pub relay: u64,
    /// Session handover or adoption.
    pub transfer: u64,
    /// One offloaded compute task.
    pub compute: u64,
    /// One wireless charging session.
    pub charge: u64,
}

impl Default for ServicePrices {
    fn default() -> Self {
        Self { relay: 2, transfer: 1, compute: 3, charge: 2 }
    }
}

impl ServicePrices {
    /// Price of one settled service of `kind`.
    pub fn price(&self, kind: TxKind) -> u64 {
        match kind {
            TxKind::Relay => self.relay,
            TxKind::Transfer => self.transfer,
            TxKind::Compute => self.compute,
            TxKind::Charge => self.charge,
        }
    }
}

/// Knobs of the exchange. Capacities are per SRD per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceParams {
    /// Concurrent UE sessions one SRD carries.
    pub ue_capacity: u32,
    /// Compute budget, task-units.
    pub compute_capacity_units: u32,
    /// Size of one offloaded task, task-units.
    pub compute_task_units: u32,
    /// Charging sessions one SRD sources.
    pub charge_slots: u32,
    /// Airtime of one UE service burst, s.
    pub access_time_s: f64,
    /// Per-SRD per-epoch probability of a Compute need.
    pub compute_prob: f64,
    /// Per-SRD per-epoch probability of a Charge need.
    pub charge_prob: f64,
    /// Settlement prices.
    pub prices: ServicePrices,
    /// Master switch for the exchange. Off: demand still arises, nothing
    /// matches, nothing settles.
    pub sc_enabled: bool,
}

impl Default for ServiceParams {
    fn default() -> Self {
        Self {
            ue_capacity: 5,
            compute_capacity_units: 10,
            compute_task_units: 5,
            charge_slots: 2,
            access_time_s: 0.01,
            compute_prob: 0.05,
            charge_prob: 0.02,
            prices: ServicePrices::default(),
            sc_enabled: true,
        }
    }
}

/// A service need raised by one demander for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRequest {
    /// Service class, which is also the settlement transaction kind.
    pub kind: TxKind,
    /// SRD that will pay for the service.
    pub demander: NodeId,
    /// Terminal the service is for, when there is one.
    pub ue: Option<u32>,
    /// Workload: Mbit/s for Relay/Transfer, task-units for Compute,
    /// abstract energy units for Charge. Strictly positive.
    pub size: f64,
    /// Simulation time the need arose, s.
    pub created_at_s: f64,
}

/// Remaining per-epoch capacity of one SRD.
#[derive(Debug, Clone, Copy)]
pub struct Capacity {
    /// Free UE sessions.
    pub ue_slots: u32,
    /// Free compute budget, task-units.
    pub compute_units: u32,
    /// Free charging sessions.
    pub charge_slots: u32,
}

/// One UE actually served this epoch.
#[derive(Debug, Clone)]
pub struct ServedUe {
    /// Terminal id.
    pub ue: u32,
    /// Node radiating the UE-facing hop; it pays the access energy.
    pub server: NodeId,
    /// Time from burst start to delivery, s.
    pub access_latency_s: f64,
    /// Planar server-to-UE distance, m, for access power control.
    pub access_distance_m: f64,
}

/// A matched request, handed to the caller for settlement.
#[derive(Debug, Clone)]
pub struct MatchOutcome {
    /// The need that was matched.
    pub request: ServiceRequest,
    /// SRD that sold the service.
    pub provider: NodeId,
    /// False when the provider took the match and withheld the service.
    pub delivered: bool,
    /// Dependence class at match time.
    pub symbiosis: Symbiosis,
    /// Service-plane delay of the exchange itself, s.
    pub access_latency_s: f64,
}

/// Everything one epoch of the exchange produced.
#[derive(Debug, Clone, Default)]
pub struct EpochServices {
    /// UEs served, one entry per UE.
    pub served: Vec<ServedUe>,
    /// Settlement-ready matches in match order.
    pub matched: Vec<MatchOutcome>,
    /// Requests with no provider this epoch. Each costs the demander one
    /// retry message; the need regenerates next epoch if it persists.
    pub unmatched: Vec<ServiceRequest>,
    /// UEs that ended the epoch without service.
    pub unserved_ue_epochs: u64,
}

/// Ground-plane distance from a node to a point, m.
pub fn planar_distance(node: &SrdNode, point: [f64; 2]) -> f64 {
    let dx = node.position[0] - point[0];
    let dy = node.position[1] - point[1];
    (dx * dx + dy * dy).sqrt()
}

/// Line-of-sight distance including the node's altitude; ranks satellites
/// last when picking a server and prices their propagation delay.
pub fn slant_distance(node: &SrdNode, point: [f64; 2]) -> f64 {
    let dx = node.position[0] - point[0];
    let dy = node.position[1] - point[1];
    let dz = node.position[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Coverage test against the node's service radius (infinite for
/// satellites).
pub fn covers(node: &SrdNode, point: [f64; 2]) -> bool {
    planar_distance(node, point) <= node.coverage_radius_m
}

fn alive(node: &SrdNode) -> bool {
    node.behavior != Behavior::FaultAttacker
}

/// Fresh per-epoch capacity table. Crashed nodes get no entry, which
/// removes them from every candidate set.
pub fn fresh_capacities(
    srds: &[SrdNode],
    params: &ServiceParams,
) -> BTreeMap<NodeId, Capacity> {
    srds.iter()
        .filter(|s| alive(s))
        .map(|s| {
            (
                s.id,
                Capacity {
                    ue_slots: params.ue_capacity,
                    compute_units: params.compute_capacity_units,
                    charge_slots: params.charge_slots,
                },
            )
        })
        .collect()
}

/// First-epoch subscription: each UE binds to the nearest covering SRD
/// with a free slot, by slant distance. Deliberately blind to behavior;
/// the subscriber list predates the attack.
pub fn initial_attach(ues: &mut [UserEquipment], srds: &[SrdNode], params: &ServiceParams) {
    let mut slots: BTreeMap<NodeId, u32> =
        srds.iter().map(|s| (s.id, params.ue_capacity)).collect();
    for ue in ues.iter_mut() {
        let mut best: Option<(f64, NodeId)> = None;
        for s in srds {
            if !covers(s, ue.position) || slots[&s.id] == 0 {
                continue;
            }
            let d = slant_distance(s, ue.position);
            if best.is_none_or(|(bd, bid)| d < bd || (d == bd && s.id < bid)) {
                best = Some((d, s.id));
            }
        }
        if let Some((_, id)) = best {
            *slots.get_mut(&id).unwrap() -= 1;
            ue.home = Some(id);
        }
    }
}

/// Obligate when the demander cannot cover the need itself, facultative
/// when it has residual capacity of the relevant resource.
pub fn classify_symbiosis(kind: TxKind, demander_residual: f64) -> Symbiosis {
    match kind {
        TxKind::Relay => Symbiosis::Obligate,
        TxKind::Transfer => Symbiosis::Facultative,
        TxKind::Compute | TxKind::Charge => {
            if demander_residual > 0.0 {
                Symbiosis::Facultative
            } else {
                Symbiosis::Obligate
            }
        }
    }
}

fn has_capacity(kind: TxKind, cap: &Capacity, params: &ServiceParams) -> bool {
    match kind {
        TxKind::Relay => cap.ue_slots >= 1,
        TxKind::Transfer => true,
        TxKind::Compute => cap.compute_units >= params.compute_task_units,
        TxKind::Charge => cap.charge_slots >= 1,
    }
}

/// Nearest in-range provider with the needed slack; ties break to the
/// lower id. `must_cover` additionally demands coverage of that point and
/// a free UE slot (the handover form of Transfer). Crashed nodes, the
/// demander itself, and `excluded` never qualify.
pub fn match_provider(
    req: &ServiceRequest,
    srds: &[SrdNode],
    caps: &BTreeMap<NodeId, Capacity>,
    excluded: &BTreeSet<NodeId>,
    must_cover: Option<[f64; 2]>,
    params: &ServiceParams,
) -> Option<NodeId> {
    let demander = srds.iter().find(|s| s.id == req.demander)?;
    let mut best: Option<(f64, NodeId)> = None;
    for s in srds {
        if s.id == req.demander || !alive(s) || excluded.contains(&s.id) {
            continue;
        }
        let Some(cap) = caps.get(&s.id) else { continue };
        if !has_capacity(req.kind, cap, params) {
            continue;
        }
        let d = demander.power_distance_to(s);
        if d > demander.coverage_radius_m {
            continue;
        }
        if let Some(point) = must_cover {
            if !covers(s, point) || cap.ue_slots == 0 {
                continue;
            }
        }
        if best.is_none_or(|(bd, bid)| d < bd || (d == bd && s.id < bid)) {
            best = Some((d, s.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Consumes the provider-side resource a settled match occupies.
fn consume(kind: TxKind, cap: &mut Capacity, params: &ServiceParams, took_ue: bool) {
    match kind {
        TxKind::Relay => cap.ue_slots -= 1,
        TxKind::Transfer => {
            if took_ue {
                cap.ue_slots -= 1;
            }
        }
        TxKind::Compute => cap.compute_units -= params.compute_task_units,
        TxKind::Charge => cap.charge_slots -= 1,
    }
}

/// Per-SRD Compute and Charge needs for one epoch. Keyed draws, so the
/// multiset of requests is a pure function of (seed, epoch, roster).
pub fn generate_srd_demands(
    srds: &[SrdNode],
    epoch: u64,
    now_s: f64,
    seed: u64,
    params: &ServiceParams,
) -> Vec<ServiceRequest> {
    let mut out = Vec::new();
    for s in srds {
        if !alive(s) {
            continue;
        }
        if rng::unit(seed, &[tags::DEMAND, epoch, u64::from(s.id), 0]) < params.compute_prob {
            out.push(ServiceRequest {
                kind: TxKind::Compute,
                demander: s.id,
                ue: None,
                size: f64::from(params.compute_task_units),
                created_at_s: now_s,
            });
        }
        if rng::unit(seed, &[tags::DEMAND, epoch, u64::from(s.id), 1]) < params.charge_prob {
            out.push(ServiceRequest {
                kind: TxKind::Charge,
                demander: s.id,
                ue: None,
                size: 1.0,
                created_at_s: now_s,
            });
        }
    }
    out
}

/// Builds and signs the settlement transaction for a matched request.
#[allow(clippy::too_many_arguments)]
pub fn settle(
    req: &ServiceRequest,
    provider: NodeId,
    symbiosis: Symbiosis,
    tx_id: u64,
    shard_hint: u32,
    now_s: f64,
    params: &ServiceParams,
    ledger: &LedgerState,
) -> Result<ServiceTransaction, LedgerError> {
    let mut tx = ServiceTransaction::new(
        tx_id,
        req.kind,
        req.demander,
        provider,
        params.prices.price(req.kind),
        now_s,
        symbiosis,
        shard_hint,
    )?;
    ledger.sign(&mut tx)?;
    Ok(tx)
}

/// Shared read-only view the per-UE and per-SRD passes match against.
struct Exchange<'a> {
    srds: &'a [SrdNode],
    by_id: BTreeMap<NodeId, &'a SrdNode>,
    ue_positions: BTreeMap<u32, [f64; 2]>,
    params: &'a ServiceParams,
    t_msg: f64,
    prop_speed: f64,
}

impl Exchange<'_> {
    fn ue_pos(&self, ue: Option<u32>, fallback: &SrdNode) -> [f64; 2] {
        ue.and_then(|id| self.ue_positions.get(&id).copied())
            .unwrap_or([fallback.position[0], fallback.position[1]])
    }

    /// Offers a request to the exchange: match, pay, consume, record.
    /// Returns the provider when the service actually arrived.
    fn try_match(
        &self,
        req: ServiceRequest,
        excluded: &BTreeSet<NodeId>,
        must_cover: Option<[f64; 2]>,
        caps: &mut BTreeMap<NodeId, Capacity>,
        can_pay: &mut dyn FnMut(NodeId, u64) -> bool,
        out: &mut EpochServices,
    ) -> Option<(NodeId, bool)> {
        if !self.params.sc_enabled {
            out.unmatched.push(req);
            return None;
        }
        let provider =
            match match_provider(&req, self.srds, caps, excluded, must_cover, self.params) {
                Some(p) => p,
                None => {
                    out.unmatched.push(req);
                    return None;
                }
            };
        if !can_pay(req.demander, self.params.prices.price(req.kind)) {
            out.unmatched.push(req);
            return None;
        }
        let residual = match req.kind {
            TxKind::Compute => {
                caps.get(&req.demander).map_or(0.0, |c| f64::from(c.compute_units))
            }
            TxKind::Charge => {
                caps.get(&req.demander).map_or(0.0, |c| f64::from(c.charge_slots))
            }
            _ => 0.0,
        };
        let symbiosis = classify_symbiosis(req.kind, residual);
        consume(req.kind, caps.get_mut(&provider).unwrap(), self.params, must_cover.is_some());
        let delivered = self.by_id[&provider].behavior.is_honest();
        let demander_node = self.by_id[&req.demander];
        let provider_node = self.by_id[&provider];
        let access_latency_s = match req.kind {
            TxKind::Relay => {
                let pos = self.ue_pos(req.ue, demander_node);
                2.0 * self.t_msg
                    + (slant_distance(demander_node, pos)
                        + demander_node.latency_distance_to(provider_node))
                        / self.prop_speed
            }
            // Handover: the provider faces the UE. Adoption: the demander
            // is the new server, the provider only ships state.
            TxKind::Transfer => {
                let facing = if must_cover.is_some() { provider_node } else { demander_node };
                self.t_msg + slant_distance(facing, self.ue_pos(req.ue, facing)) / self.prop_speed
            }
            TxKind::Compute | TxKind::Charge => {
                self.t_msg + demander_node.latency_distance_to(provider_node) / self.prop_speed
            }
        };
        out.matched.push(MatchOutcome {
            request: req,
            provider,
            delivered,
            symbiosis,
            access_latency_s,
        });
        Some((provider, delivered))
    }

    /// Adoption attempt for a UE with no usable home. The nearest honest
    /// covering node with a slot pays a peer for the session state and
    /// takes the UE over. A Byzantine "adopter" burns the slot and teaches
    /// the UE to avoid it; a Byzantine state source keeps the payment.
    #[allow(clippy::too_many_arguments)]
    fn adopt(
        &self,
        ue_id: u32,
        pos: [f64; 2],
        rate: f64,
        now_s: f64,
        adopters: &[NodeId],
        excluded: &BTreeSet<NodeId>,
        caps: &mut BTreeMap<NodeId, Capacity>,
        can_pay: &mut dyn FnMut(NodeId, u64) -> bool,
        out: &mut EpochServices,
        newly_failed: &mut Vec<NodeId>,
    ) -> Option<ServedUe> {
        let &adopter = adopters.first()?;
        if !self.by_id[&adopter].behavior.is_honest() {
            caps.get_mut(&adopter).unwrap().ue_slots -= 1;
            newly_failed.push(adopter);
            return None;
        }
        let req = ServiceRequest {
            kind: TxKind::Transfer,
            demander: adopter,
            ue: Some(ue_id),
            size: rate,
            created_at_s: now_s,
        };
        match self.try_match(req, excluded, None, caps, can_pay, out) {
            Some((_, true)) => {
                caps.get_mut(&adopter).unwrap().ue_slots -= 1;
                let a = self.by_id[&adopter];
                Some(ServedUe {
                    ue: ue_id,
                    server: adopter,
                    access_latency_s: self.t_msg + slant_distance(a, pos) / self.prop_speed,
                    access_distance_m: planar_distance(a, pos),
                })
            }
            Some((provider, false)) => {
                newly_failed.push(provider);
                None
            }
            None => None,
        }
    }

    /// Rule (a): covered, but nobody covering has a slot. The nearest
    /// honest covering node fronts the UE and buys backhaul from a peer.
    #[allow(clippy::too_many_arguments)]
    fn relay(
        &self,
        ue_id: u32,
        pos: [f64; 2],
        rate: f64,
        now_s: f64,
        excluded: &BTreeSet<NodeId>,
        caps: &mut BTreeMap<NodeId, Capacity>,
        can_pay: &mut dyn FnMut(NodeId, u64) -> bool,
        out: &mut EpochServices,
        newly_failed: &mut Vec<NodeId>,
    ) -> Option<ServedUe> {
        let (_, front_id) = self
            .srds
            .iter()
            .filter(|s| alive(s) && s.behavior.is_honest() && covers(s, pos))
            .map(|s| (slant_distance(s, pos), s.id))
            .min_by(|a, b| a.partial_cmp(b).unwrap())?;
        let req = ServiceRequest {
            kind: TxKind::Relay,
            demander: front_id,
            ue: Some(ue_id),
            size: rate,
            created_at_s: now_s,
        };
        match self.try_match(req, excluded, None, caps, can_pay, out) {
            Some((_, true)) => {
                let f = self.by_id[&front_id];
                Some(ServedUe {
                    ue: ue_id,
                    server: front_id,
                    access_latency_s: self.t_msg + slant_distance(f, pos) / self.prop_speed,
                    access_distance_m: planar_distance(f, pos),
                })
            }
            Some((provider, false)) => {
                newly_failed.push(provider);
                None
            }
            None => None,
        }
    }
}

/// One epoch of the exchange over a position snapshot.
///
/// UEs are processed in id order, so lower ids win capacity contention
/// deterministically. `can_pay` is consulted once per would-be match and
/// must reserve the amount when it answers true; a refusal turns the
/// match into an unmatched retry.
#[allow(clippy::too_many_arguments)]
pub fn run_service_epoch(
    ues: &mut [UserEquipment],
    srds: &[SrdNode],
    epoch: u64,
    now_s: f64,
    seed: u64,
    params: &ServiceParams,
    chan: &ChannelParams,
    can_pay: &mut dyn FnMut(NodeId, u64) -> bool,
) -> EpochServices {
    let mut caps = fresh_capacities(srds, params);
    let ex = Exchange {
        srds,
        by_id: srds.iter().map(|s| (s.id, s)).collect(),
        ue_positions: ues.iter().map(|u| (u.id, u.position)).collect(),
        params,
        t_msg: chan.t_msg_s(),
        prop_speed: chan.prop_speed_mps,
    };
    let mut out = EpochServices::default();

    for ue in ues.iter_mut() {
        let (id, pos, home, rate) = (ue.id, ue.position, ue.home, ue.demand_rate_mbps);
        let failed = ue.failed.clone();
        let mut served: Option<ServedUe> = None;
        let mut new_home: Option<NodeId> = None;
        let mut newly_failed: Vec<NodeId> = Vec::new();

        // Covering candidates for a handover or adoption, best first.
        let adopters: Vec<NodeId> = {
            let mut v: Vec<(f64, NodeId)> = srds
                .iter()
                .filter(|s| {
                    alive(s)
                        && covers(s, pos)
                        && Some(s.id) != home
                        && !failed.contains(&s.id)
                        && caps.get(&s.id).is_some_and(|c| c.ue_slots > 0)
                })
                .map(|s| (slant_distance(s, pos), s.id))
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.into_iter().map(|(_, id)| id).collect()
        };

        let home_node = home.and_then(|h| ex.by_id.get(&h).copied());
        let home_usable = home_node.is_some_and(|h| alive(h) && covers(h, pos));

        if home_usable {
            let h = home_node.unwrap();
            if h.behavior == Behavior::ByzantineAttacker {
                // The home takes the session and drops it. The UE keeps
                // the subscription (leaving needs a settled handover) but
                // starts shopping for adoption, never via the liar.
                if let Some(cap) = caps.get_mut(&h.id) {
                    cap.ue_slots = cap.ue_slots.saturating_sub(1);
                }
                newly_failed.push(h.id);
                let mut excl = failed.clone();
                excl.insert(h.id);
                if let Some(s) = ex.adopt(
                    id,
                    pos,
                    rate,
                    now_s,
                    &adopters,
                    &excl,
                    &mut caps,
                    can_pay,
                    &mut out,
                    &mut newly_failed,
                ) {
                    new_home = Some(s.server);
                    served = Some(s);
                }
            } else if caps.get(&h.id).is_some_and(|c| c.ue_slots > 0) {
                caps.get_mut(&h.id).unwrap().ue_slots -= 1;
                served = Some(ServedUe {
                    ue: id,
                    server: h.id,
                    access_latency_s: ex.t_msg + slant_distance(h, pos) / ex.prop_speed,
                    access_distance_m: planar_distance(h, pos),
                });
            } else if !adopters.is_empty() {
                // Rule (b): full home, covering slack elsewhere. The home
                // pays to hand the session over.
                let req = ServiceRequest {
                    kind: TxKind::Transfer,
                    demander: h.id,
                    ue: Some(id),
                    size: rate,
                    created_at_s: now_s,
                };
                match ex.try_match(req, &failed, Some(pos), &mut caps, can_pay, &mut out) {
                    Some((provider, true)) => {
                        new_home = Some(provider);
                        let p = ex.by_id[&provider];
                        served = Some(ServedUe {
                            ue: id,
                            server: provider,
                            access_latency_s: ex.t_msg
                                + slant_distance(p, pos) / ex.prop_speed,
                            access_distance_m: planar_distance(p, pos),
                        });
                    }
                    Some((provider, false)) => newly_failed.push(provider),
                    None => {}
                }
            } else if let Some(s) = ex.relay(
                id,
                pos,
                rate,
                now_s,
                &failed,
                &mut caps,
                can_pay,
                &mut out,
                &mut newly_failed,
            ) {
                served = Some(s);
            }
        } else {
            // No usable home: adoption if anyone covering has a slot,
            // relay as the last resort.
            if !adopters.is_empty() {
                if let Some(s) = ex.adopt(
                    id,
                    pos,
                    rate,
                    now_s,
                    &adopters,
                    &failed,
                    &mut caps,
                    can_pay,
                    &mut out,
                    &mut newly_failed,
                ) {
                    new_home = Some(s.server);
                    served = Some(s);
                }
            } else if let Some(s) = ex.relay(
                id,
                pos,
                rate,
                now_s,
                &failed,
                &mut caps,
                can_pay,
                &mut out,
                &mut newly_failed,
            ) {
                served = Some(s);
            }
        }

        for f in newly_failed {
            ue.failed.insert(f);
        }
        if let Some(h) = new_home {
            ue.home = Some(h);
        } else if home.is_some() && !home_usable {
            // The home is gone for good; holding the subscription would
            // re-raise adoption against a dead id forever.
            ue.home = None;
        }
        match served {
            Some(s) => out.served.push(s),
            None => out.unserved_ue_epochs += 1,
        }
    }

    // SRD pass: compute and charge needs.
    let none = BTreeSet::new();
    for req in generate_srd_demands(srds, epoch, now_s, seed, params) {
        ex.try_match(req, &none, None, &mut caps, can_pay, &mut out);
    }

    out
}
