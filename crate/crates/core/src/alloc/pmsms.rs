use super::msms::{build_with, reward_with, ContentionModel, OccupancyEstimate};
use super::AllocError;
use crate::model::{per_slot_rate, Channel, ChannelProfile, SensingMatrix, SensingQuality, TimingConfig};

/// Each assigned SU senses a mini-slot with probability `p` and idles otherwise.
pub(crate) struct Persistent {
    p: f64,
}

impl Persistent {
    pub(crate) fn new(quality: &SensingQuality) -> Self {
        Self {
            p: quality.persistence(),
        }
    }
}

impl ContentionModel for Persistent {
    /// Chance one earlier or simultaneous assignee leaves the channel alone.
    fn pass_factor(&self, quality: &SensingQuality) -> f64 {
        1.0 - self.p + self.p * quality.p_fa()
    }

    fn persistence(&self) -> f64 {
        self.p
    }
}

/// Occupancy after `n` earlier assignees that each sensed with the
/// persistence probability of `quality`.
pub fn occupation_probability_pmac(
    channel: Channel,
    n: usize,
    profile: &ChannelProfile,
    quality: &SensingQuality,
) -> OccupancyEstimate {
    Persistent::new(quality).occupancy(channel, n, profile, quality)
}

/// Chance an SU senses, reads free, and none of `same_slot` simultaneous
/// assignees takes the channel too.
pub fn contention_factor_hbar(same_slot: usize, quality: &SensingQuality) -> f64 {
    Persistent::new(quality).access(same_slot, quality)
}

pub fn pmsms_reward(
    prefix: &[OccupancyEstimate],
    candidate: &OccupancyEstimate,
    same_slot: usize,
    m: usize,
    timing: &TimingConfig,
    quality: &SensingQuality,
) -> Result<f64, AllocError> {
    let rate = per_slot_rate(m, timing)?;
    Ok(reward_with(&Persistent::new(quality), prefix, candidate, same_slot, rate, quality))
}

pub fn build_pmsms_matrix(
    profile: &ChannelProfile,
    timing: &TimingConfig,
    quality: &SensingQuality,
    ns: usize,
    slot: u64,
    repeat_cap: usize,
) -> Result<SensingMatrix, AllocError> {
    build_with(&Persistent::new(quality), profile, timing, quality, ns, slot, repeat_cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{build_msms_matrix, msms_reward, occupation_probability};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn timing() -> TimingConfig {
        TimingConfig::new(0.2, 1e-3, 1e-4, 1.0).unwrap()
    }

    fn quality(p: f64) -> SensingQuality {
        SensingQuality::new(0.1, 0.9, 1.0).unwrap().with_persistence(p).unwrap()
    }

    fn ch(id: u16) -> Channel {
        Channel::new(id).unwrap()
    }

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    /// Sum over how many of `n` contenders actually sensed, each clearing
    /// the channel only through a false alarm.
    fn pass_by_binomial_sum(n: usize, p: f64, p_fa: f64) -> f64 {
        (0..=n)
            .map(|i| binomial(n, i) * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32) * p_fa.powi(i as i32))
            .sum()
    }

    #[test]
    fn occupancy_examples() {
        let profile = ChannelProfile::new(vec![0.8]).unwrap();
        assert_relative_eq!(occupation_probability_pmac(ch(1), 2, &profile, &quality(1.0)).q1, 0.992, epsilon = 1e-15);
        assert_relative_eq!(occupation_probability_pmac(ch(1), 5, &profile, &quality(0.0)).q1, 0.2, epsilon = 1e-15);
        assert_relative_eq!(occupation_probability_pmac(ch(1), 1, &profile, &quality(0.5)).q1, 0.56, epsilon = 1e-15);
    }

    #[test]
    fn occupancy_matches_binomial_sum() {
        let profile = ChannelProfile::new(vec![0.65]).unwrap();
        for &p in &[0.0, 0.2, 0.5, 0.9, 1.0] {
            for n in 0..8 {
                let want = 1.0 - 0.65 * pass_by_binomial_sum(n, p, 0.1);
                let got = occupation_probability_pmac(ch(1), n, &profile, &quality(p)).q1;
                assert_relative_eq!(got, want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn hbar_examples() {
        assert_relative_eq!(contention_factor_hbar(2, &quality(1.0)), 0.009, epsilon = 1e-15);
        assert_relative_eq!(contention_factor_hbar(1, &quality(0.5)), 0.2475, epsilon = 1e-15);
        assert_eq!(contention_factor_hbar(3, &quality(0.0)), 0.0);
        for &p in &[0.1, 0.5, 0.8] {
            for ny in 0..6 {
                let want = p * 0.9 * pass_by_binomial_sum(ny, p, 0.1);
                assert_relative_eq!(contention_factor_hbar(ny, &quality(p)), want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn reward_examples() {
        let t = timing();
        let b1 = per_slot_rate(1, &t).unwrap();
        let cand = OccupancyEstimate { q1: 0.2, prior_count: 0 };
        assert_relative_eq!(pmsms_reward(&[], &cand, 0, 1, &t, &quality(0.5)).unwrap(), 0.36 * b1, epsilon = 1e-14);
        assert_eq!(pmsms_reward(&[], &cand, 0, 1, &t, &quality(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn many_users_share_channels() {
        let profile = ChannelProfile::new(vec![0.9, 0.8, 0.7, 0.6, 0.5]).unwrap();
        let sm = build_pmsms_matrix(&profile, &timing(), &quality(0.5), 8, 1, 3).unwrap();
        assert!(sm.nonzero() <= 15);
        let counts = sm.channel_counts(5);
        assert!(counts[1..].iter().any(|&c| c > 1));
    }

    proptest! {
        #[test]
        fn unit_persistence_is_msms(
            p0 in proptest::collection::vec(0.0..=1.0f64, 1..7),
            ns in 1usize..9,
            slot in 1u64..10,
            p_fa in 0.0..0.5f64,
            p_d in 0.5..=1.0f64,
            n in 0usize..5,
        ) {
            let profile = ChannelProfile::new(p0).unwrap();
            let q = SensingQuality::new(p_fa, p_d, 1.0).unwrap();
            let t = timing();
            let a = build_pmsms_matrix(&profile, &t, &q, ns, slot, 3).unwrap();
            let b = build_msms_matrix(&profile, &t, &q, ns, slot, 3).unwrap();
            prop_assert_eq!(a, b);
            let oa = occupation_probability_pmac(ch(1), n, &profile, &q);
            let ob = occupation_probability(ch(1), n, &profile, &q);
            prop_assert_eq!(oa, ob);
            let pre = [oa];
            prop_assert_eq!(
                pmsms_reward(&pre, &ob, n, 2, &t, &q).unwrap(),
                msms_reward(&pre, &ob, n, 2, &t, &q).unwrap()
            );
        }

        #[test]
        fn hbar_decreases_with_contenders(p in 0.01..=1.0f64, p_fa in 0.0..0.99f64, ny in 0usize..10) {
            let q = SensingQuality::new(p_fa, 1.0, 1.0).unwrap().with_persistence(p).unwrap();
            prop_assert!(contention_factor_hbar(ny + 1, &q) < contention_factor_hbar(ny, &q));
        }

        #[test]
        fn hbar_continuous_at_one(ny in 0usize..8, p_fa in 0.0..1.0f64) {
            let q = |p: f64| SensingQuality::new(p_fa, 1.0, 1.0).unwrap().with_persistence(p).unwrap();
            let near = contention_factor_hbar(ny, &q(1.0 - 1e-9));
            let at = contention_factor_hbar(ny, &q(1.0));
            prop_assert!((near - at).abs() < 1e-7);
        }

        #[test]
        fn persistence_only_matters_across_contention_levels(
            q1a in 0.0..=1.0f64,
            q1b in 0.0..=1.0f64,
            prefix_q1 in 0.0..=1.0f64,
            ny in 0usize..4,
            p in 0.01..=1.0f64,
            p_other in 0.01..=1.0f64,
        ) {
            let t = timing();
            let pre = [OccupancyEstimate { q1: prefix_q1, prior_count: 0 }];
            let a = OccupancyEstimate { q1: q1a, prior_count: 0 };
            let b = OccupancyEstimate { q1: q1b, prior_count: 0 };
            let order = |p: f64| {
                let ra = pmsms_reward(&pre, &a, ny, 2, &t, &quality(p)).unwrap();
                let rb = pmsms_reward(&pre, &b, ny, 2, &t, &quality(p)).unwrap();
                ra.partial_cmp(&rb).unwrap()
            };
            prop_assume!((q1a - q1b).abs() > 1e-9);
            prop_assert_eq!(order(p), order(p_other));
        }
    }
}
