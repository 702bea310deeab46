//! C ABI over the scenario runner and the shard planner.
//!
//! The surface follows the usual handle pattern: a scenario is an opaque
//! pointer created by one of the constructors, configured through
//! key/value pairs in the same `section.key = value` vocabulary as the
//! config files, executed run by run, and released with the matching
//! free function. Every entry point is null-safe and reports through
//! [`SbnStatus`]; panics never cross the boundary.
//!
//! The header `include/sbn.h` is generated from this file at build time.

#![deny(missing_debug_implementations)]
#![warn(missing_docs)]

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sbn_core::config::{parse_config, serialize_config};
use sbn_core::sharding::{optimal_shards, EnergyModelParams, ShardingError};
use sbn_core::sim::{run_single, ScenarioConfig};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbnStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was malformed: bad UTF-8, an unknown key, or a value
    /// outside its domain.
    InvalidArgument = 2,
    /// The request was well-formed but no feasible plan exists.
    Infeasible = 3,
    /// The run aborted internally.
    Failed = 4,
}

/// Opaque scenario handle. Create with [`sbn_scenario_default`],
/// [`sbn_scenario_desk`] or [`sbn_scenario_parse`]; release with
/// [`sbn_scenario_free`].
#[derive(Debug)]
pub struct SbnScenario {
    cfg: ScenarioConfig,
}

/// Metrics of one simulation run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SbnRunMetrics {
    /// Radiated plus circuit energy summed over all devices, J.
    pub total_energy_j: f64,
    /// Mean end-to-end latency over settled service transactions, ms.
    pub mean_service_latency_ms: f64,
    /// Missed service opportunities over total opportunities, in [0, 1].
    pub deadline_violation_rate: f64,
    /// Committed consensus rounds over attempted rounds, in [0, 1].
    pub consensus_success_rate: f64,
    /// Blocks appended across all chains.
    pub committed_blocks: u64,
    /// Forged transactions found in committed blocks plus conflicting
    /// commit quorums observed by honest members. Zero on a healthy run.
    pub forged_tx_committed: u64,
    /// Actively radiated transmission attempts.
    pub active_msgs: u64,
    /// Backscatter transmission attempts.
    pub backscatter_msgs: u64,
    /// Share of `total_energy_j` spent inside consensus rounds, J.
    pub consensus_energy_j: f64,
    /// Order-sensitive digest of the full event trace; byte-for-byte
    /// reproducibility means equal hashes for equal (config, run) pairs.
    pub trace_hash: u64,
}

fn leak(cfg: ScenarioConfig) -> *mut SbnScenario {
    Box::into_raw(Box::new(SbnScenario { cfg }))
}

/// Builds a scenario with the library defaults (the full-scale roster).
#[no_mangle]
pub extern "C" fn sbn_scenario_default() -> *mut SbnScenario {
    leak(ScenarioConfig::default())
}

/// Builds the small fast-turnaround scenario used for benchmarks.
#[no_mangle]
pub extern "C" fn sbn_scenario_desk() -> *mut SbnScenario {
    leak(ScenarioConfig::desk())
}

/// Parses a full config document (the same format the CLI reads) into a
/// fresh scenario. On success writes the handle to `out`.
///
/// # Safety
///
/// `text` must point to a valid NUL-terminated string and `out` to
/// writable memory for one pointer; both stay borrowed only for the call.
#[no_mangle]
pub unsafe extern "C" fn sbn_scenario_parse(
    text: *const c_char,
    out: *mut *mut SbnScenario,
) -> SbnStatus {
    if text.is_null() || out.is_null() {
        return SbnStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(text).to_str() else {
        return SbnStatus::InvalidArgument;
    };
    match parse_config(text) {
        Ok(cfg) => {
            *out = leak(cfg);
            SbnStatus::Ok
        }
        Err(_) => SbnStatus::InvalidArgument,
    }
}

/// Sets one config key, e.g. `sbn_scenario_set(s, "sim.runs", "50")`.
/// The change is validated eagerly; on error the scenario is unchanged.
///
/// # Safety
///
/// `scenario` must be a live handle from this library; `key` and `value`
/// must point to valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn sbn_scenario_set(
    scenario: *mut SbnScenario,
    key: *const c_char,
    value: *const c_char,
) -> SbnStatus {
    if scenario.is_null() || key.is_null() || value.is_null() {
        return SbnStatus::NullPointer;
    }
    let (Ok(key), Ok(value)) = (CStr::from_ptr(key).to_str(), CStr::from_ptr(value).to_str())
    else {
        return SbnStatus::InvalidArgument;
    };
    if key.contains(['\n', '#', '=']) || value.contains(['\n', '#']) {
        return SbnStatus::InvalidArgument;
    }
    let scenario = &mut *scenario;
    // The serializer and parser are round-trip partners, so one appended
    // line on top of the serialized state reuses the full validation
    // stack and keeps the config text the single source of truth.
    let text = format!("{}{key} = {value}\n", serialize_config(&scenario.cfg));
    match parse_config(&text) {
        Ok(cfg) => {
            scenario.cfg = cfg;
            SbnStatus::Ok
        }
        Err(_) => SbnStatus::InvalidArgument,
    }
}

/// Serializes the scenario into a config document. Returns a fresh
/// NUL-terminated string, or null when `scenario` is null; release it
/// with [`sbn_string_free`].
///
/// # Safety
///
/// `scenario` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn sbn_scenario_emit(scenario: *const SbnScenario) -> *mut c_char {
    if scenario.is_null() {
        return ptr::null_mut();
    }
    let text = serialize_config(&(*scenario).cfg);
    // The serializer never emits interior NULs (pure ASCII key = value).
    CString::new(text).expect("config text has no NUL").into_raw()
}

/// Number of runs the scenario is configured for; 0 when `scenario` is
/// null. Valid run indices are `0..runs`.
///
/// # Safety
///
/// `scenario` must be a live handle from this library or null.
#[no_mangle]
pub unsafe extern "C" fn sbn_scenario_runs(scenario: *const SbnScenario) -> u32 {
    if scenario.is_null() {
        return 0;
    }
    (*scenario).cfg.runs
}

/// Executes one run and writes its metrics to `out`. Runs are
/// independent: equal (scenario, run_index) pairs produce identical
/// metrics, and indices may be executed in any order or concurrently
/// from separate handles.
///
/// # Safety
///
/// `scenario` must be a live handle from this library and `out` must
/// point to writable memory for one [`SbnRunMetrics`].
#[no_mangle]
pub unsafe extern "C" fn sbn_scenario_run(
    scenario: *const SbnScenario,
    run_index: u32,
    out: *mut SbnRunMetrics,
) -> SbnStatus {
    if scenario.is_null() || out.is_null() {
        return SbnStatus::NullPointer;
    }
    let cfg = &(*scenario).cfg;
    if run_index >= cfg.runs {
        return SbnStatus::InvalidArgument;
    }
    let result = catch_unwind(AssertUnwindSafe(|| run_single(cfg, run_index)));
    match result {
        Ok(Ok(m)) => {
            *out = SbnRunMetrics {
                total_energy_j: m.total_energy_j,
                mean_service_latency_ms: m.mean_service_latency_ms,
                deadline_violation_rate: m.deadline_violation_rate,
                consensus_success_rate: m.consensus_success_rate,
                committed_blocks: m.committed_blocks,
                forged_tx_committed: m.forged_committed,
                active_msgs: m.active_msgs,
                backscatter_msgs: m.backscatter_msgs,
                consensus_energy_j: m.consensus_energy_j,
                trace_hash: m.trace_hash,
            };
            SbnStatus::Ok
        }
        Ok(Err(_)) => SbnStatus::InvalidArgument,
        Err(_) => SbnStatus::Failed,
    }
}

/// Releases a scenario handle. Null is a no-op.
///
/// # Safety
///
/// `scenario` must be a handle from this library that has not been freed
/// before, or null.
#[no_mangle]
pub unsafe extern "C" fn sbn_scenario_free(scenario: *mut SbnScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Releases a string obtained from [`sbn_scenario_emit`]. Null is a
/// no-op.
///
/// # Safety
///
/// `s` must be a string returned by this library that has not been freed
/// before, or null.
#[no_mangle]
pub unsafe extern "C" fn sbn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Computes the consensus-energy-optimal shard count for `z` base
/// stations with the given per-message energies. Writes the optimum to
/// `out_n_star` and its modeled energy to `out_energy_j` (either may be
/// null to skip it).
///
/// # Safety
///
/// `out_n_star` and `out_energy_j` must each be null or point to
/// writable memory of the right type.
#[no_mangle]
pub unsafe extern "C" fn sbn_optimal_shards(
    z: u32,
    e_intra_j: f64,
    e_global_j: f64,
    min_shard_size: u32,
    out_n_star: *mut u32,
    out_energy_j: *mut f64,
) -> SbnStatus {
    let params = EnergyModelParams { z, e_intra_j, e_global_j, min_shard_size };
    match optimal_shards(&params) {
        Ok(opt) => {
            if !out_n_star.is_null() {
                *out_n_star = opt.n_star;
            }
            if !out_energy_j.is_null() {
                *out_energy_j = opt.energy_j;
            }
            SbnStatus::Ok
        }
        Err(ShardingError::Domain(_)) => SbnStatus::InvalidArgument,
        Err(_) => SbnStatus::Infeasible,
    }
}
