//! Shared domain types: channel statistics, slot timing, detector quality and
//! the sensing matrix itself.

mod detector;
mod matrix;

pub use detector::{false_alarm_for_sensing_time, gaussian_tail, gaussian_tail_inv, DetectorModel};
pub use matrix::{parse_matrix, validate_matrix, SensingMatrix, Violation};

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("channel profile must contain at least one channel")]
    EmptyProfile,
    #[error("primary-free probability p0[{index}] = {value} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("{name} = {value} must be strictly positive")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} = {value} is outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("detection probability {p_d} is below false-alarm probability {p_fa}")]
    DetectorInverted { p_fa: f64, p_d: f64 },
    #[error(
        "sensing phase of {mini_slots} mini-slots takes {overhead_s} s, which does not fit in a {slot_s} s slot"
    )]
    SensingPhaseTooLong {
        mini_slots: usize,
        overhead_s: f64,
        slot_s: f64,
    },
    #[error("mini-slot index must be at least 1")]
    ZeroMiniSlot,
    #[error("sensing matrix rows have unequal lengths ({first} vs {other})")]
    RaggedMatrix { first: usize, other: usize },
    #[error("malformed matrix text at byte {offset}: {reason}")]
    MatrixSyntax { offset: usize, reason: String },
}

/// One-based channel identifier. Matrix cells use `0` for "no sensing", so a
/// `Channel` is never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Channel(u16);

impl Channel {
    pub fn new(id: u16) -> Option<Self> {
        (id != 0).then_some(Channel(id))
    }

    /// Channel for a zero-based index.
    pub fn from_index(index: usize) -> Self {
        Channel(u16::try_from(index + 1).expect("channel index exceeds u16"))
    }

    pub fn get(self) -> u16 {
        self.0
    }

    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-channel probability that the primary user is absent in a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelProfile {
    p0: Vec<f64>,
}

impl ChannelProfile {
    pub fn new(p0: Vec<f64>) -> Result<Self, ModelError> {
        if p0.is_empty() {
            return Err(ModelError::EmptyProfile);
        }
        for (index, &value) in p0.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::ProbabilityOutOfRange { index, value });
            }
        }
        Ok(Self { p0 })
    }

    /// Every channel shares the same primary-free probability.
    pub fn homogeneous(p: f64, np: usize) -> Result<Self, ModelError> {
        Self::new(vec![p; np])
    }

    pub fn np(&self) -> usize {
        self.p0.len()
    }

    pub fn p0(&self, ch: Channel) -> f64 {
        self.p0[ch.index()]
    }

    pub fn p1(&self, ch: Channel) -> f64 {
        1.0 - self.p0[ch.index()]
    }

    pub fn p0_slice(&self) -> &[f64] {
        &self.p0
    }

    pub fn channels(&self) -> impl Iterator<Item = Channel> + '_ {
        (0..self.p0.len()).map(Channel::from_index)
    }
}

/// Slot timing in seconds. `rate` is the constant transmission rate; use 1.0
/// for throughput normalized to the rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingConfig {
    slot: f64,
    tau: f64,
    tau_ho: f64,
    rate: f64,
}

impl TimingConfig {
    pub fn new(slot: f64, tau: f64, tau_ho: f64, rate: f64) -> Result<Self, ModelError> {
        for (name, value) in [("slot_T", slot), ("tau", tau), ("tau_ho", tau_ho), ("rate_R", rate)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositive { name, value });
            }
        }
        let timing = Self {
            slot,
            tau,
            tau_ho,
            rate,
        };
        timing.check_mini_slot(1)?;
        Ok(timing)
    }

    /// Table defaults: 200 ms slots, 0.1 ms handover, unit rate.
    pub fn with_tau(tau: f64) -> Result<Self, ModelError> {
        Self::new(0.2, tau, 1e-4, 1.0)
    }

    pub fn slot(&self) -> f64 {
        self.slot
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau_ho(&self) -> f64 {
        self.tau_ho
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn with_rate(mut self, rate: f64) -> Result<Self, ModelError> {
        self.rate = rate;
        Self::new(self.slot, self.tau, self.tau_ho, rate)
    }

    /// Time spent sensing and handing over before transmitting in mini-slot `k`.
    pub fn sensing_overhead(&self, k: usize) -> f64 {
        self.tau + (k as f64 - 1.0) * (self.tau + self.tau_ho)
    }

    fn check_mini_slot(&self, k: usize) -> Result<(), ModelError> {
        if k == 0 {
            return Err(ModelError::ZeroMiniSlot);
        }
        let overhead = self.sensing_overhead(k);
        if overhead >= self.slot {
            return Err(ModelError::SensingPhaseTooLong {
                mini_slots: k,
                overhead_s: overhead,
                slot_s: self.slot,
            });
        }
        Ok(())
    }

    /// Checks that a transmission phase remains after `np` mini-slots.
    pub fn check_fits(&self, np: usize) -> Result<(), ModelError> {
        self.check_mini_slot(np.max(1))
    }

    /// Per-mini-slot rates `B_1..B_np`, validated once.
    pub fn rates(&self, np: usize) -> Result<Vec<f64>, ModelError> {
        (1..=np).map(|k| per_slot_rate(k, self)).collect()
    }
}

/// Fraction of the slot left for transmission when the SU starts on the `k`-th
/// mini-slot.
pub fn slot_effectiveness(k: usize, timing: &TimingConfig) -> Result<f64, ModelError> {
    timing.check_mini_slot(k)?;
    Ok(1.0 - timing.sensing_overhead(k) / timing.slot)
}

/// Average SU throughput when it transmits from the `k`-th mini-slot onward.
pub fn per_slot_rate(k: usize, timing: &TimingConfig) -> Result<f64, ModelError> {
    Ok(timing.rate * slot_effectiveness(k, timing)?)
}

/// Detector operating point and MAC persistence shared by all SUs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingQuality {
    p_fa: f64,
    p_d: f64,
    persistence: f64,
}

impl SensingQuality {
    pub fn new(p_fa: f64, p_d: f64, persistence: f64) -> Result<Self, ModelError> {
        for (name, value) in [("p_fa", p_fa), ("p_d", p_d), ("persistence_p", persistence)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::InvalidProbability { name, value });
            }
        }
        if p_d < p_fa {
            return Err(ModelError::DetectorInverted { p_fa, p_d });
        }
        Ok(Self {
            p_fa,
            p_d,
            persistence,
        })
    }

    pub fn error_free() -> Self {
        Self {
            p_fa: 0.0,
            p_d: 1.0,
            persistence: 1.0,
        }
    }

    pub fn p_fa(&self) -> f64 {
        self.p_fa
    }

    pub fn p_d(&self) -> f64 {
        self.p_d
    }

    pub fn persistence(&self) -> f64 {
        self.persistence
    }

    pub fn with_persistence(self, persistence: f64) -> Result<Self, ModelError> {
        Self::new(self.p_fa, self.p_d, persistence)
    }
}
