//! Wireless link model: distance-based power control, Rayleigh outage, and
//! per-message energy and latency.
//!
//! Transmitters invert the cubic-by-default path loss so that the mean
//! received SNR hits a target `gamma_bar`; under Rayleigh fading the
//! instantaneous SNR is then exponential, which gives the closed-form
//! delivery probability `exp(-gamma_th / gamma_bar)`. A backscatter
//! companion adds a multipath gain `g` to its carrier provider's link
//! (raising the mean SNR to `gamma_bar * (1 + g)`) and its own reflected
//! messages succeed with that boosted probability derated by the modulation
//! efficiency `kappa`, at zero transmit energy.
//!
//! All quantities are SI: meters, watts, joules, seconds.

use thiserror::Error;

/// Transmit distances below this are priced as if at 1 m, keeping the
/// power-control law finite for co-located nodes.
pub const MIN_PRICED_DISTANCE_M: f64 = 1.0;

/// Parameters of the link model. See the module docs for the roles of the
/// SNR fields; the data-plane fields (`bandwidth_hz`, `spectral_eff`,
/// `msg_bits`) only set the serialization time of one message.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Transmit power that reaches `gamma_bar` at the reference distance, W.
    pub p_ref_w: f64,
    /// Reference distance for the power-control law, m.
    pub d_ref_m: f64,
    /// Target mean received SNR (linear, not dB).
    pub gamma_bar: f64,
    /// Decoding SNR threshold (linear).
    pub gamma_th: f64,
    /// Multipath gain a backscatter companion adds to its carrier's link.
    pub gain: f64,
    /// Backscatter modulation efficiency in (0, 1].
    pub kappa: f64,
    /// Channel bandwidth, Hz.
    pub bandwidth_hz: f64,
    /// Spectral efficiency, bit/s/Hz.
    pub spectral_eff: f64,
    /// Payload of one consensus or control message, bits.
    pub msg_bits: f64,
    /// Propagation speed, m/s.
    pub prop_speed_mps: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            p_ref_w: 0.1,
            d_ref_m: 100.0,
            gamma_bar: 10.0,
            gamma_th: 1.0,
            gain: 1.0,
            kappa: 0.95,
            bandwidth_hz: 20.0e6,
            spectral_eff: 1.0,
            msg_bits: 16_384.0,
            prop_speed_mps: 3.0e8,
        }
    }
}

/// Parameter validation failure.
#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    /// A field is outside its admissible domain.
    #[error("channel parameter out of domain: {0}")]
    Domain(String),
}

impl ChannelParams {
    /// Checks every field against its domain. Run once at configuration
    /// time; the math below assumes validated parameters.
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive: [(&str, f64); 8] = [
            ("alpha", self.alpha),
            ("p_ref_w", self.p_ref_w),
            ("d_ref_m", self.d_ref_m),
            ("gamma_bar", self.gamma_bar),
            ("gamma_th", self.gamma_th),
            ("bandwidth_hz", self.bandwidth_hz),
            ("spectral_eff", self.spectral_eff),
            ("msg_bits", self.msg_bits),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(ChannelError::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.gain.is_finite() || self.gain < 0.0 {
            return Err(ChannelError::Domain(format!("gain must be >= 0, got {}", self.gain)));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(ChannelError::Domain(format!("kappa must be in (0, 1], got {}", self.kappa)));
        }
        if !self.prop_speed_mps.is_finite() || self.prop_speed_mps <= 0.0 {
            return Err(ChannelError::Domain(format!(
                "prop_speed_mps must be positive, got {}",
                self.prop_speed_mps
            )));
        }
        Ok(())
    }

    /// Serialization time of one message, s.
    pub fn t_msg_s(&self) -> f64 {
        self.msg_bits / (self.bandwidth_hz * self.spectral_eff)
    }
}

/// How a message is put on the air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transmission {
    /// Conventional radio transmission to a receiver `distance_m` away.
    Active {
        /// Transmitter-to-receiver distance, m.
        distance_m: f64,
    },
    /// Reflection of a companion's carrier; costs the sender nothing.
    Backscatter,
}

/// Transmit power that holds `gamma_bar` at distance `d_m`, W.
///
/// Monotone nondecreasing in distance; distances under
/// [`MIN_PRICED_DISTANCE_M`] are clamped up.
pub fn tx_power_w(d_m: f64, p: &ChannelParams) -> f64 {
    debug_assert!(d_m >= 0.0, "negative distance");
    let d = d_m.max(MIN_PRICED_DISTANCE_M);
    p.p_ref_w * (d / p.d_ref_m).powf(p.alpha)
}

/// Delivery probability of one active transmission attempt.
///
/// `boosted` selects the multipath-gain-assisted link a carrier provider
/// enjoys when its backscatter companion is reflecting.
pub fn link_success_prob(boosted: bool, p: &ChannelParams) -> f64 {
    let mean_snr = if boosted { p.gamma_bar * (1.0 + p.gain) } else { p.gamma_bar };
    (-p.gamma_th / mean_snr).exp()
}

/// Delivery probability of one backscatter attempt: the boosted link
/// derated by the modulation efficiency.
pub fn backscatter_success_prob(p: &ChannelParams) -> f64 {
    p.kappa * link_success_prob(true, p)
}

/// Energy one transmission attempt costs the sender, J.
pub fn message_energy_j(tx: Transmission, p: &ChannelParams) -> f64 {
    match tx {
        Transmission::Active { distance_m } => tx_power_w(distance_m, p) * p.t_msg_s(),
        Transmission::Backscatter => 0.0,
    }
}

/// Wall-clock latency of `attempts` back-to-back attempts over `d_m`, s.
pub fn message_latency_s(d_m: f64, attempts: u32, p: &ChannelParams) -> f64 {
    attempts as f64 * (p.t_msg_s() + d_m / p.prop_speed_mps)
}
