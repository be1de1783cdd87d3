//! Expected sensing energy of a sensing matrix under error-free sensing.
//!
//! An SU walks its row until it senses a free channel. `ḡ` counts the
//! handovers it performs; the closed forms here follow the usual accounting of
//! one initial sensing plus one per handover, and the enumeration oracles give
//! the exact expectations for comparison.

use thiserror::Error;

use crate::model::{Channel, ChannelProfile, SensingMatrix};

pub const MAX_ORACLE_LENGTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("sequence of length {len} exceeds the enumeration limit {max}")]
    SequenceTooLong { len: usize, max: usize },
}

/// Energy per channel sensing and per handover, in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConfig {
    e_sense: f64,
    e_ho: f64,
}

impl EnergyConfig {
    pub fn new(e_sense: f64, e_ho: f64) -> Result<Self, EnergyError> {
        for (name, value) in [("e_sense", e_sense), ("e_ho", e_ho)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(EnergyError::Negative { name, value });
            }
        }
        Ok(Self { e_sense, e_ho })
    }

    pub fn e_sense(&self) -> f64 {
        self.e_sense
    }

    pub fn e_ho(&self) -> f64 {
        self.e_ho
    }
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            e_sense: 1.0,
            e_ho: 0.0,
        }
    }
}

/// Whether the per-handover cost enters [`total_search_energy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HandoverTerm {
    #[default]
    Include,
    Drop,
}

/// `ḡ` for one row: `k - 1` handovers when the k-th channel is the first free
/// one, and one per channel when all are busy.
pub fn expected_handovers(sequence: &[Channel], profile: &ChannelProfile) -> f64 {
    let mut busy = 1.0;
    let mut total = 0.0;
    for (k, &c) in sequence.iter().enumerate() {
        total += k as f64 * profile.p0(c) * busy;
        busy *= profile.p1(c);
    }
    total + sequence.len() as f64 * busy
}

/// Expected number of channels sensed along one row: up to and including the
/// first free one, or the whole row if all are busy.
pub fn expected_sensings(sequence: &[Channel], profile: &ChannelProfile) -> f64 {
    let mut busy = 1.0;
    let mut total = 0.0;
    for (k, &c) in sequence.iter().enumerate() {
        total += (k + 1) as f64 * profile.p0(c) * busy;
        busy *= profile.p1(c);
    }
    total + sequence.len() as f64 * busy
}

fn enumerate_patterns(
    sequence: &[Channel],
    profile: &ChannelProfile,
    count: impl Fn(Option<usize>) -> f64,
) -> Result<f64, EnergyError> {
    let len = sequence.len();
    if len > MAX_ORACLE_LENGTH {
        return Err(EnergyError::SequenceTooLong {
            len,
            max: MAX_ORACLE_LENGTH,
        });
    }
    let mut total = 0.0;
    for mask in 0u32..(1u32 << len) {
        // bit k set: the k-th channel of the row is free
        let mut weight = 1.0;
        for (k, &c) in sequence.iter().enumerate() {
            weight *= if mask >> k & 1 == 1 {
                profile.p0(c)
            } else {
                profile.p1(c)
            };
        }
        let first_free = (0..len).find(|&k| mask >> k & 1 == 1);
        total += weight * count(first_free);
    }
    Ok(total)
}

/// Exact expected handovers by enumerating every occupancy pattern.
pub fn handover_enumeration_oracle(
    sequence: &[Channel],
    profile: &ChannelProfile,
) -> Result<f64, EnergyError> {
    let len = sequence.len() as f64;
    enumerate_patterns(sequence, profile, |first| match first {
        Some(k) => k as f64,
        None => len,
    })
}

/// Exact expected sensing count by enumerating every occupancy pattern.
pub fn sensing_enumeration_oracle(
    sequence: &[Channel],
    profile: &ChannelProfile,
) -> Result<f64, EnergyError> {
    let len = sequence.len() as f64;
    enumerate_patterns(sequence, profile, |first| match first {
        Some(k) => (k + 1) as f64,
        None => len,
    })
}

/// Average energy spent finding a transmission opportunity: one sensing per
/// active SU plus `ḡ` more per row, and `ḡ` handover costs per row.
pub fn total_search_energy(
    sm: &SensingMatrix,
    profile: &ChannelProfile,
    energy: &EnergyConfig,
    handovers: HandoverTerm,
) -> f64 {
    let mut active = 0usize;
    let mut g_sum = 0.0;
    for su in 0..sm.ns() {
        let seq = sm.sequence(su);
        if seq.is_empty() {
            continue;
        }
        active += 1;
        g_sum += expected_handovers(&seq, profile);
    }
    let sensing = (active as f64 + g_sum) * energy.e_sense();
    match handovers {
        HandoverTerm::Include => sensing + g_sum * energy.e_ho(),
        HandoverTerm::Drop => sensing,
    }
}

/// Closed form for `ns` SUs that each scan all `np` channels of equal
/// free probability `p`. Evaluated as a finite geometric sum, so `p = 0`
/// gives the limit `ns * np * e_sense`.
pub fn homogeneous_energy_closed_form(p: f64, np: usize, ns: usize, e_sense: f64) -> f64 {
    if np == 0 {
        return 0.0;
    }
    let busy = 1.0 - p;
    let geometric: f64 = (0..np - 1).map(|k| busy.powi(k as i32)).sum();
    e_sense * ns as f64 * (busy * busy * geometric + 1.0)
}

/// The same scenario accounted as one sensing plus `ḡ` per SU.
pub fn homogeneous_energy_by_handovers(p: f64, np: usize, ns: usize, e_sense: f64) -> f64 {
    let profile = match ChannelProfile::homogeneous(p, np) {
        Ok(profile) => profile,
        Err(_) => return 0.0,
    };
    let seq: Vec<Channel> = profile.channels().collect();
    e_sense * ns as f64 * (1.0 + expected_handovers(&seq, &profile))
}

/// Best and worst per-slot sensing energy of the greedy error-free matrix.
pub fn sms_energy_bounds(np: usize, ns: usize, e_sense: f64) -> (f64, f64) {
    (np.min(ns) as f64 * e_sense, np as f64 * e_sense)
}
