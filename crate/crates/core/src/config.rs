//! Flat `key = value` configuration documents.
//!
//! One parameter per line, `#` starts a comment, absent keys keep their
//! defaults, unknown keys are errors. The format round-trips:
//! `parse(&serialize(cfg))` yields `cfg` exactly, because floats are
//! written in shortest round-trip notation.

use std::fmt::Write as _;

use thiserror::Error;

use crate::sim::ScenarioConfig;

/// Configuration document failure.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    /// A line is not `key = value`, a comment, or blank.
    #[error("line {0}: expected `key = value`")]
    ParseError(usize),
    /// The key does not name a parameter.
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    /// The value does not fit the key's type or domain.
    #[error("invalid value for {0}")]
    InvalidValue(String),
}

fn f64_of(key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse().map_err(|_| ConfigError::InvalidValue(key.to_string()))
}

fn u64_of(key: &str, v: &str) -> Result<u64, ConfigError> {
    v.parse().map_err(|_| ConfigError::InvalidValue(key.to_string()))
}

fn u32_of(key: &str, v: &str) -> Result<u32, ConfigError> {
    v.parse().map_err(|_| ConfigError::InvalidValue(key.to_string()))
}

fn bool_of(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::InvalidValue(key.to_string())),
    }
}

fn apply(cfg: &mut ScenarioConfig, key: &str, v: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::InvalidValue(key.to_string());
    match key {
        "channel.alpha" => cfg.channel.alpha = f64_of(key, v)?,
        "channel.p_ref_w" => cfg.channel.p_ref_w = f64_of(key, v)?,
        "channel.d_ref_m" => cfg.channel.d_ref_m = f64_of(key, v)?,
        "channel.gamma_bar" => cfg.channel.gamma_bar = f64_of(key, v)?,
        "channel.gamma_th" => cfg.channel.gamma_th = f64_of(key, v)?,
        "channel.gain" => cfg.channel.gain = f64_of(key, v)?,
        "channel.kappa" => cfg.channel.kappa = f64_of(key, v)?,
        "channel.bandwidth_hz" => cfg.channel.bandwidth_hz = f64_of(key, v)?,
        "channel.spectral_eff" => cfg.channel.spectral_eff = f64_of(key, v)?,
        "channel.msg_bits" => cfg.channel.msg_bits = f64_of(key, v)?,
        "channel.prop_speed_mps" => cfg.channel.prop_speed_mps = f64_of(key, v)?,

        "consensus.max_retries" => cfg.max_retries = u32_of(key, v)?,
        "consensus.pairing_range_m" => cfg.pairing_range_m = f64_of(key, v)?,

        "sharding.min_shard_size" => cfg.min_shard_size = u32_of(key, v)?,
        "sharding.d_intra_m" => cfg.d_intra_m = f64_of(key, v)?,
        "sharding.d_global_m" => cfg.d_global_m = f64_of(key, v)?,
        "sharding.forced_shards" => {
            cfg.forced_shards = match v {
                "none" => None,
                _ => Some(u32_of(key, v)?),
            }
        }

        "services.enabled" => cfg.services.sc_enabled = bool_of(key, v)?,
        "services.ue_capacity" => cfg.services.ue_capacity = u32_of(key, v)?,
        "services.compute_capacity_units" => {
            cfg.services.compute_capacity_units = u32_of(key, v)?
        }
        "services.compute_task_units" => cfg.services.compute_task_units = u32_of(key, v)?,
        "services.charge_slots" => cfg.services.charge_slots = u32_of(key, v)?,
        "services.access_time_s" => cfg.services.access_time_s = f64_of(key, v)?,
        "services.compute_prob" => cfg.services.compute_prob = f64_of(key, v)?,
        "services.charge_prob" => cfg.services.charge_prob = f64_of(key, v)?,
        "services.relay_price" => cfg.services.prices.relay = u64_of(key, v)?,
        "services.transfer_price" => cfg.services.prices.transfer = u64_of(key, v)?,
        "services.compute_price" => cfg.services.prices.compute = u64_of(key, v)?,
        "services.charge_price" => cfg.services.prices.charge = u64_of(key, v)?,

        "sim.variant" => cfg.variant = v.parse().map_err(|_| bad())?,
        "sim.scenario" => cfg.scenario = v.parse().map_err(|_| bad())?,
        "sim.runs" => cfg.runs = u32_of(key, v)?,
        "sim.seed" => cfg.seed = u64_of(key, v)?,
        "sim.epochs" => cfg.epochs = u32_of(key, v)?,
        "sim.epoch_duration_s" => cfg.epoch_duration_s = f64_of(key, v)?,
        "sim.attacker_fraction" => cfg.attacker_fraction = f64_of(key, v)?,
        "sim.initial_balance" => cfg.initial_balance = u64_of(key, v)?,
        "sim.max_tx_amount" => cfg.max_tx_amount = u64_of(key, v)?,
        "sim.clock_skew_window_s" => cfg.clock_skew_window_s = f64_of(key, v)?,
        "sim.bs_count" => cfg.counts.bs = u32_of(key, v)?,
        "sim.uav_count" => cfg.counts.uav = u32_of(key, v)?,
        "sim.ground_count" => cfg.counts.ground = u32_of(key, v)?,
        "sim.satellite_count" => cfg.counts.satellite = u32_of(key, v)?,
        "sim.ue_count" => cfg.counts.ue = u32_of(key, v)?,
        "sim.plane_width_m" => cfg.plane_m[0] = f64_of(key, v)?,
        "sim.plane_height_m" => cfg.plane_m[1] = f64_of(key, v)?,
        "sim.bs_coverage_m" => cfg.coverage.bs_m = f64_of(key, v)?,
        "sim.uav_coverage_m" => cfg.coverage.uav_m = f64_of(key, v)?,
        "sim.ground_coverage_m" => cfg.coverage.ground_m = f64_of(key, v)?,
        "sim.satellite_altitude_m" => cfg.satellite_altitude_m = f64_of(key, v)?,
        "sim.uav_altitude_m" => cfg.uav_altitude_m = f64_of(key, v)?,
        "sim.ground_mobility_radius_m" => cfg.ground_mobility_radius_m = f64_of(key, v)?,
        "sim.ground_step_m" => cfg.ground_step_m = f64_of(key, v)?,
        "sim.uav_patrol_radius_m" => cfg.uav_patrol_radius_m = f64_of(key, v)?,
        "sim.uav_speed_mps" => cfg.uav_speed_mps = f64_of(key, v)?,
        "sim.bs_ballast_w" => cfg.ballast.bs_w = f64_of(key, v)?,
        "sim.uav_ballast_w" => cfg.ballast.uav_w = f64_of(key, v)?,
        "sim.ground_ballast_w" => cfg.ballast.ground_w = f64_of(key, v)?,
        "sim.satellite_ballast_w" => cfg.ballast.satellite_w = f64_of(key, v)?,

        _ => return Err(ConfigError::UnknownKey(key.to_string())),
    }
    Ok(())
}

/// Parses a document on top of the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::ParseError(idx + 1));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::ParseError(idx + 1));
        }
        apply(&mut cfg, key, value)?;
    }
    cfg.validate().map_err(|e| ConfigError::InvalidValue(e.to_string()))?;
    Ok(cfg)
}

/// Writes every parameter, including the ones still at their defaults,
/// in a fixed order.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let mut s = String::with_capacity(2048);
    s.push_str("# One `key = value` per line; `#` starts a comment.\n");
    s.push_str("# Absent keys keep their defaults; unknown keys are errors.\n");
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };

    kv("sim.variant", cfg.variant.label().to_string());
    kv("sim.scenario", cfg.scenario.label().to_string());
    kv("sim.runs", cfg.runs.to_string());
    kv("sim.seed", cfg.seed.to_string());
    kv("sim.epochs", cfg.epochs.to_string());
    kv("sim.epoch_duration_s", cfg.epoch_duration_s.to_string());
    kv("sim.attacker_fraction", cfg.attacker_fraction.to_string());
    kv("sim.initial_balance", cfg.initial_balance.to_string());
    kv("sim.max_tx_amount", cfg.max_tx_amount.to_string());
    kv("sim.clock_skew_window_s", cfg.clock_skew_window_s.to_string());
    kv("sim.bs_count", cfg.counts.bs.to_string());
    kv("sim.uav_count", cfg.counts.uav.to_string());
    kv("sim.ground_count", cfg.counts.ground.to_string());
    kv("sim.satellite_count", cfg.counts.satellite.to_string());
    kv("sim.ue_count", cfg.counts.ue.to_string());
    kv("sim.plane_width_m", cfg.plane_m[0].to_string());
    kv("sim.plane_height_m", cfg.plane_m[1].to_string());
    kv("sim.bs_coverage_m", cfg.coverage.bs_m.to_string());
    kv("sim.uav_coverage_m", cfg.coverage.uav_m.to_string());
    kv("sim.ground_coverage_m", cfg.coverage.ground_m.to_string());
    kv("sim.satellite_altitude_m", cfg.satellite_altitude_m.to_string());
    kv("sim.uav_altitude_m", cfg.uav_altitude_m.to_string());
    kv("sim.ground_mobility_radius_m", cfg.ground_mobility_radius_m.to_string());
    kv("sim.ground_step_m", cfg.ground_step_m.to_string());
    kv("sim.uav_patrol_radius_m", cfg.uav_patrol_radius_m.to_string());
    kv("sim.uav_speed_mps", cfg.uav_speed_mps.to_string());
    kv("sim.bs_ballast_w", cfg.ballast.bs_w.to_string());
    kv("sim.uav_ballast_w", cfg.ballast.uav_w.to_string());
    kv("sim.ground_ballast_w", cfg.ballast.ground_w.to_string());
    kv("sim.satellite_ballast_w", cfg.ballast.satellite_w.to_string());

    kv("channel.alpha", cfg.channel.alpha.to_string());
    kv("channel.p_ref_w", cfg.channel.p_ref_w.to_string());
    kv("channel.d_ref_m", cfg.channel.d_ref_m.to_string());
    kv("channel.gamma_bar", cfg.channel.gamma_bar.to_string());
    kv("channel.gamma_th", cfg.channel.gamma_th.to_string());
    kv("channel.gain", cfg.channel.gain.to_string());
    kv("channel.kappa", cfg.channel.kappa.to_string());
    kv("channel.bandwidth_hz", cfg.channel.bandwidth_hz.to_string());
    kv("channel.spectral_eff", cfg.channel.spectral_eff.to_string());
    kv("channel.msg_bits", cfg.channel.msg_bits.to_string());
    kv("channel.prop_speed_mps", cfg.channel.prop_speed_mps.to_string());

    kv("consensus.max_retries", cfg.max_retries.to_string());
    kv("consensus.pairing_range_m", cfg.pairing_range_m.to_string());

    kv("sharding.min_shard_size", cfg.min_shard_size.to_string());
    kv("sharding.d_intra_m", cfg.d_intra_m.to_string());
    kv("sharding.d_global_m", cfg.d_global_m.to_string());
    kv(
        "sharding.forced_shards",
        cfg.forced_shards.map_or_else(|| "none".to_string(), |n| n.to_string()),
    );

    kv("services.enabled", cfg.services.sc_enabled.to_string());
    kv("services.ue_capacity", cfg.services.ue_capacity.to_string());
    kv("services.compute_capacity_units", cfg.services.compute_capacity_units.to_string());
    kv("services.compute_task_units", cfg.services.compute_task_units.to_string());
    kv("services.charge_slots", cfg.services.charge_slots.to_string());
    kv("services.access_time_s", cfg.services.access_time_s.to_string());
    kv("services.compute_prob", cfg.services.compute_prob.to_string());
    kv("services.charge_prob", cfg.services.charge_prob.to_string());
    kv("services.relay_price", cfg.services.prices.relay.to_string());
    kv("services.transfer_price", cfg.services.prices.transfer.to_string());
    kv("services.compute_price", cfg.services.prices.compute.to_string());
    kv("services.charge_price", cfg.services.prices.charge.to_string());

    s
}
