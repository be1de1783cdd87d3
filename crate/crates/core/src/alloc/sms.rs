use super::{first_round_order, later_round_order, AllocError};
use crate::model::{per_slot_rate, Channel, ChannelProfile, SensingMatrix, TimingConfig};

/// Reward of appending `candidate` at mini-slot `m` to a row whose earlier
/// channels are `prefix`: the chance every prefix channel was busy, times the
/// chance the candidate is free, times `B_m`.
pub fn sms_reward(
    candidate: Channel,
    m: usize,
    prefix: &[Channel],
    assigned: &[Channel],
    profile: &ChannelProfile,
    timing: &TimingConfig,
) -> Result<f64, AllocError> {
    if assigned.contains(&candidate) {
        return Err(AllocError::ChannelAlreadyAssigned(candidate));
    }
    let busy_prefix: f64 = prefix.iter().map(|&c| profile.p1(c)).product();
    Ok(busy_prefix * profile.p0(candidate) * per_slot_rate(m, timing)?)
}

/// Sum of the rewards a row collected over its filled mini-slots.
pub fn cumulative_reward(
    prefix: &[Channel],
    profile: &ChannelProfile,
    timing: &TimingConfig,
) -> Result<f64, AllocError> {
    let mut busy = 1.0;
    let mut total = 0.0;
    for (k, &c) in prefix.iter().enumerate() {
        total += busy * profile.p0(c) * per_slot_rate(k + 1, timing)?;
        busy *= profile.p1(c);
    }
    Ok(total)
}

/// Greedy matrix for error-free sensing; every channel is used at most once.
pub fn build_sms_matrix(
    profile: &ChannelProfile,
    timing: &TimingConfig,
    ns: usize,
    slot: u64,
) -> Result<SensingMatrix, AllocError> {
    let np = profile.np();
    let rates = timing.rates(np)?;
    let mut sm = SensingMatrix::zeros(ns, np);
    if ns == 0 {
        return Ok(sm);
    }
    let mut free: Vec<bool> = vec![true; np];
    let mut remaining = np;
    // running product of (1 - P0) over each row
    let mut busy_prefix = vec![1.0; ns];
    let mut cumulative = vec![0.0; ns];

    for m in 1..=np {
        if remaining == 0 {
            break;
        }
        let order = if m == 1 {
            first_round_order(slot, ns)
        } else {
            later_round_order(&cumulative)
        };
        for su in order {
            if remaining == 0 {
                break;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in (0..np).filter(|&j| free[j]) {
                let reward = busy_prefix[su] * profile.p0_slice()[j] * rates[m - 1];
                if best.is_none_or(|(_, r)| reward > r) {
                    best = Some((j, reward));
                }
            }
            let (j, reward) = best.expect("a free channel remains");
            let ch = Channel::from_index(j);
            sm.set(su, m, Some(ch));
            free[j] = false;
            remaining -= 1;
            busy_prefix[su] *= profile.p1(ch);
            cumulative[su] += reward;
        }
    }
    Ok(sm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn timing() -> TimingConfig {
        TimingConfig::new(0.2, 1e-3, 1e-4, 1.0).unwrap()
    }

    fn ch(id: u16) -> Channel {
        Channel::new(id).unwrap()
    }

    #[test]
    fn reward_examples() {
        let profile = ChannelProfile::new(vec![0.9, 0.5]).unwrap();
        let t = timing();
        assert_relative_eq!(sms_reward(ch(1), 1, &[], &[], &profile, &t).unwrap(), 0.8955, epsilon = 1e-12);
        let b2 = per_slot_rate(2, &t).unwrap();
        assert_relative_eq!(
            sms_reward(ch(2), 2, &[ch(1)], &[ch(1)], &profile, &t).unwrap(),
            0.05 * b2,
            epsilon = 1e-12
        );
        assert_eq!(
            sms_reward(ch(1), 2, &[ch(1)], &[ch(1)], &profile, &t),
            Err(AllocError::ChannelAlreadyAssigned(ch(1)))
        );
    }

    #[test]
    fn cumulative_examples() {
        let profile = ChannelProfile::new(vec![0.9, 0.5]).unwrap();
        let t = timing();
        let b1 = per_slot_rate(1, &t).unwrap();
        let b2 = per_slot_rate(2, &t).unwrap();
        assert_eq!(cumulative_reward(&[], &profile, &t).unwrap(), 0.0);
        assert_relative_eq!(cumulative_reward(&[ch(1)], &profile, &t).unwrap(), 0.9 * b1, epsilon = 1e-12);
        assert_relative_eq!(
            cumulative_reward(&[ch(1), ch(2)], &profile, &t).unwrap(),
            0.9 * b1 + 0.05 * b2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn build_examples() {
        let profile = ChannelProfile::new(vec![0.9, 0.5, 0.2]).unwrap();
        let t = timing();
        assert_eq!(build_sms_matrix(&profile, &t, 1, 1).unwrap(), parse_matrix("[[1,2,3]]").unwrap());
        assert_eq!(
            build_sms_matrix(&profile, &t, 2, 1).unwrap(),
            parse_matrix("[[1,0,0],[2,3,0]]").unwrap()
        );
        let two = ChannelProfile::new(vec![0.4, 0.7]).unwrap();
        assert_eq!(build_sms_matrix(&two, &t, 2, 1).unwrap(), parse_matrix("[[2,0],[1,0]]").unwrap());
    }

    #[test]
    fn rotation_changes_round_one_owner() {
        let profile = ChannelProfile::new(vec![0.9, 0.8, 0.7, 0.6, 0.5]).unwrap();
        let t = timing();
        let s1 = build_sms_matrix(&profile, &t, 3, 1).unwrap();
        let s2 = build_sms_matrix(&profile, &t, 3, 2).unwrap();
        assert_eq!(s1.entry(0, 1), Some(ch(1)));
        assert_eq!(s2.entry(1, 1), Some(ch(1)));
        assert_eq!(s1, parse_matrix("[[1,0,0,0,0],[2,5,0,0,0],[3,4,0,0,0]]").unwrap());
    }

    #[test]
    fn equal_probabilities_pick_smallest_index() {
        let profile = ChannelProfile::homogeneous(0.5, 5).unwrap();
        let sm = build_sms_matrix(&profile, &timing(), 3, 1).unwrap();
        assert_eq!(sm, parse_matrix("[[1,4,0,0,0],[2,5,0,0,0],[3,0,0,0,0]]").unwrap());
    }

    proptest! {
        #[test]
        fn every_channel_used_exactly_once(
            p0 in proptest::collection::vec(0.0..=1.0f64, 1..8),
            ns in 1usize..6,
            slot in 1u64..20,
        ) {
            let profile = ChannelProfile::new(p0).unwrap();
            let sm = build_sms_matrix(&profile, &timing(), ns, slot).unwrap();
            let counts = sm.channel_counts(profile.np());
            prop_assert!(counts[1..].iter().all(|&c| c == 1));
            prop_assert_eq!(sm.nonzero(), profile.np());
        }

        #[test]
        fn single_user_sorts_descending(p0 in proptest::collection::vec(0.0..=1.0f64, 1..8)) {
            let profile = ChannelProfile::new(p0.clone()).unwrap();
            let sm = build_sms_matrix(&profile, &timing(), 1, 1).unwrap();
            let seq: Vec<f64> = sm.sequence(0).iter().map(|&c| profile.p0(c)).collect();
            prop_assert!(seq.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn common_scaling_keeps_the_matrix(
            p0 in proptest::collection::vec(0.05..=1.0f64, 1..7),
            scale in 0.1..1.0f64,
            ns in 1usize..4,
        ) {
            let profile = ChannelProfile::new(p0.clone()).unwrap();
            let scaled = ChannelProfile::new(p0.iter().map(|p| p * scale).collect()).unwrap();
            // Round 1 uses P0 * B1 only, so its selections are scale-free.
            let a = build_sms_matrix(&profile, &timing(), ns, 1).unwrap();
            let b = build_sms_matrix(&scaled, &timing(), ns, 1).unwrap();
            for su in 0..ns {
                prop_assert_eq!(a.entry(su, 1), b.entry(su, 1));
            }
        }
    }
}
