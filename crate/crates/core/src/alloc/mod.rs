//! Greedy sensing-matrix allocators. Each builds the matrix column by column;
//! in every round the coordinator serves the SUs in a fairness order and gives
//! each one the candidate channel with the highest reward.

mod msms;
mod pmsms;
mod sms;

pub use msms::{
    build_msms_matrix, msms_reward, occupation_probability, AllocationContext, OccupancyEstimate,
    DEFAULT_REPEAT_CAP,
};
pub use pmsms::{
    build_pmsms_matrix, contention_factor_hbar, occupation_probability_pmac, pmsms_reward,
};
pub use sms::{build_sms_matrix, cumulative_reward, sms_reward};

use std::fmt;

use thiserror::Error;

use crate::model::{Channel, ChannelProfile, ModelError, SensingMatrix, SensingQuality, TimingConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AllocError {
    #[error("channel {0} is already assigned in this matrix")]
    ChannelAlreadyAssigned(Channel),
    #[error("fixed matrix has width {found}, profile has {expected} channels")]
    FixedWidth { expected: usize, found: usize },
    #[error("repeat cap must be at least 1")]
    ZeroRepeatCap,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// SU (zero-based) that opens round 1 in slot `slot` (one-based): slot 1 starts
/// with SU 0, slot 2 with SU 1, wrapping over all SUs.
pub fn rotation_start_user(slot: u64, ns: usize) -> usize {
    assert!(slot >= 1, "slots are numbered from 1");
    ((slot - 1) % ns as u64) as usize
}

pub(crate) fn first_round_order(slot: u64, ns: usize) -> Vec<usize> {
    let start = rotation_start_user(slot, ns);
    (0..ns).map(|i| (start + i) % ns).collect()
}

/// SUs by ascending cumulative reward, ties by SU index.
pub(crate) fn later_round_order(cumulative: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cumulative.len()).collect();
    order.sort_by(|&a, &b| cumulative[a].total_cmp(&cumulative[b]).then(a.cmp(&b)));
    order
}

/// Which allocator produces the matrix for a slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Allocator {
    Sms,
    Msms { repeat_cap: usize },
    Pmsms { repeat_cap: usize },
    /// The same matrix every slot, e.g. an exhaustive-search optimum.
    Fixed(SensingMatrix),
}

impl Allocator {
    pub fn build(
        &self,
        profile: &ChannelProfile,
        timing: &TimingConfig,
        quality: &SensingQuality,
        ns: usize,
        slot: u64,
    ) -> Result<SensingMatrix, AllocError> {
        match self {
            Allocator::Sms => build_sms_matrix(profile, timing, ns, slot),
            Allocator::Msms { repeat_cap } => {
                build_msms_matrix(profile, timing, quality, ns, slot, *repeat_cap)
            }
            Allocator::Pmsms { repeat_cap } => {
                build_pmsms_matrix(profile, timing, quality, ns, slot, *repeat_cap)
            }
            Allocator::Fixed(sm) => {
                if sm.width() != profile.np() {
                    return Err(AllocError::FixedWidth {
                        expected: profile.np(),
                        found: sm.width(),
                    });
                }
                Ok(sm.clone())
            }
        }
    }

    /// True when the built matrix depends on the slot index.
    pub fn rotates(&self) -> bool {
        !matches!(self, Allocator::Fixed(_))
    }
}

impl fmt::Display for Allocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Allocator::Sms => write!(f, "sms"),
            Allocator::Msms { .. } => write!(f, "msms"),
            Allocator::Pmsms { .. } => write!(f, "pmsms"),
            Allocator::Fixed(_) => write!(f, "fixed"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_start_user(1, 3), 0);
        assert_eq!(rotation_start_user(2, 3), 1);
        assert_eq!(rotation_start_user(4, 3), 0);
        assert_eq!(first_round_order(3, 3), vec![2, 0, 1]);
    }

    #[test]
    fn later_rounds_sort_by_reward_then_index() {
        assert_eq!(later_round_order(&[0.9, 0.8, 0.9, 0.1]), vec![3, 1, 0, 2]);
    }
}
