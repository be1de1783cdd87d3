use super::{first_round_order, later_round_order, AllocError};
use crate::model::{per_slot_rate, Channel, ChannelProfile, SensingMatrix, SensingQuality, TimingConfig};

pub const DEFAULT_REPEAT_CAP: usize = 3;

/// Occupancy of a channel as seen by an SU about to sense it, given how many
/// SUs were assigned it in earlier columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyEstimate {
    pub q1: f64,
    pub prior_count: usize,
}

impl OccupancyEstimate {
    pub fn q0(&self) -> f64 {
        1.0 - self.q1
    }

    /// Chance the SU reads the channel busy and moves on.
    pub(crate) fn busy_reading(&self, quality: &SensingQuality) -> f64 {
        self.q0() * quality.p_fa() + self.q1 * quality.p_d()
    }
}

/// Occupancy after `n` earlier sensers: the channel is still free only if the
/// PU is absent and every one of them false-alarmed off it.
pub fn occupation_probability(
    channel: Channel,
    n: usize,
    profile: &ChannelProfile,
    quality: &SensingQuality,
) -> OccupancyEstimate {
    Immediate.occupancy(channel, n, profile, quality)
}

/// Reward of giving channel `j` (occupancy `candidate`) to an SU at mini-slot
/// `m`, with `prefix` holding the occupancy of each earlier entry of its row
/// and `same_slot` other SUs already on `j` in this column.
pub fn msms_reward(
    prefix: &[OccupancyEstimate],
    candidate: &OccupancyEstimate,
    same_slot: usize,
    m: usize,
    timing: &TimingConfig,
    quality: &SensingQuality,
) -> Result<f64, AllocError> {
    let rate = per_slot_rate(m, timing)?;
    Ok(reward_with(&Immediate, prefix, candidate, same_slot, rate, quality))
}

/// Greedy matrix for imperfect sensing. A channel may be given to up to
/// `repeat_cap` SUs; occupancy and contention terms account for the others.
pub fn build_msms_matrix(
    profile: &ChannelProfile,
    timing: &TimingConfig,
    quality: &SensingQuality,
    ns: usize,
    slot: u64,
    repeat_cap: usize,
) -> Result<SensingMatrix, AllocError> {
    build_with(&Immediate, profile, timing, quality, ns, slot, repeat_cap)
}

/// How earlier and simultaneous assignees affect a channel's value.
pub(crate) trait ContentionModel {
    fn pass_factor(&self, quality: &SensingQuality) -> f64;

    /// Chance this SU actually senses in a mini-slot.
    fn persistence(&self) -> f64;

    fn occupancy(
        &self,
        channel: Channel,
        n: usize,
        profile: &ChannelProfile,
        quality: &SensingQuality,
    ) -> OccupancyEstimate {
        let survive = profile.p0(channel) * self.pass_factor(quality).powi(n as i32);
        OccupancyEstimate {
            q1: 1.0 - survive,
            prior_count: n,
        }
    }

    /// Chance the SU senses the channel free and no simultaneous assignee
    /// also takes it.
    fn access(&self, same_slot: usize, quality: &SensingQuality) -> f64 {
        self.persistence() * (1.0 - quality.p_fa()) * self.pass_factor(quality).powi(same_slot as i32)
    }
}

/// Every assigned SU senses every mini-slot.
pub(crate) struct Immediate;

impl ContentionModel for Immediate {
    fn pass_factor(&self, quality: &SensingQuality) -> f64 {
        quality.p_fa()
    }

    fn persistence(&self) -> f64 {
        1.0
    }
}

pub(crate) fn reward_with<M: ContentionModel>(
    model: &M,
    prefix: &[OccupancyEstimate],
    candidate: &OccupancyEstimate,
    same_slot: usize,
    rate: f64,
    quality: &SensingQuality,
) -> f64 {
    let c1: f64 = prefix.iter().map(|o| o.busy_reading(quality)).product();
    c1 * candidate.q0() * rate * model.access(same_slot, quality)
}

/// Assignment history while a matrix is being filled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationContext {
    /// Appearances in columns before the current one, per channel index.
    pub earlier: Vec<usize>,
    /// Appearances in the current column.
    pub current: Vec<usize>,
    pub repeat_cap: usize,
}

impl AllocationContext {
    pub fn new(np: usize, repeat_cap: usize) -> Self {
        Self {
            earlier: vec![0; np],
            current: vec![0; np],
            repeat_cap,
        }
    }

    pub fn total(&self, index: usize) -> usize {
        self.earlier[index] + self.current[index]
    }

    pub fn available(&self, index: usize) -> bool {
        self.total(index) < self.repeat_cap
    }

    pub fn any_available(&self) -> bool {
        (0..self.earlier.len()).any(|j| self.available(j))
    }

    pub fn record(&mut self, channel: Channel) {
        self.current[channel.index()] += 1;
    }

    /// Folds the current column into the history.
    pub fn close_column(&mut self) {
        for (e, c) in self.earlier.iter_mut().zip(self.current.iter_mut()) {
            *e += *c;
            *c = 0;
        }
    }
}

pub(crate) fn build_with<M: ContentionModel>(
    model: &M,
    profile: &ChannelProfile,
    timing: &TimingConfig,
    quality: &SensingQuality,
    ns: usize,
    slot: u64,
    repeat_cap: usize,
) -> Result<SensingMatrix, AllocError> {
    if repeat_cap == 0 {
        return Err(AllocError::ZeroRepeatCap);
    }
    let np = profile.np();
    let rates = timing.rates(np)?;
    let mut sm = SensingMatrix::zeros(ns, np);
    if ns == 0 {
        return Ok(sm);
    }
    let mut ctx = AllocationContext::new(np, repeat_cap);
    let mut prefixes: Vec<Vec<OccupancyEstimate>> = vec![Vec::new(); ns];
    let mut cumulative = vec![0.0; ns];

    for m in 1..=np {
        if !ctx.any_available() {
            break;
        }
        // occupancy of each channel at this mini-slot
        let occupancy: Vec<OccupancyEstimate> = profile
            .channels()
            .map(|c| model.occupancy(c, ctx.earlier[c.index()], profile, quality))
            .collect();
        let order = if m == 1 {
            first_round_order(slot, ns)
        } else {
            later_round_order(&cumulative)
        };
        for su in order {
            let mut best: Option<(usize, f64)> = None;
            for j in (0..np).filter(|&j| ctx.available(j)) {
                let reward = reward_with(
                    model,
                    &prefixes[su],
                    &occupancy[j],
                    ctx.current[j],
                    rates[m - 1],
                    quality,
                );
                if best.is_none_or(|(_, r)| reward > r) {
                    best = Some((j, reward));
                }
            }
            let Some((j, reward)) = best else { break };
            let ch = Channel::from_index(j);
            sm.set(su, m, Some(ch));
            ctx.record(ch);
            prefixes[su].push(occupancy[j]);
            cumulative[su] += reward;
        }
        ctx.close_column();
    }
    Ok(sm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::build_sms_matrix;
    use crate::model::parse_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn timing() -> TimingConfig {
        TimingConfig::new(0.2, 1e-3, 1e-4, 1.0).unwrap()
    }

    fn quality() -> SensingQuality {
        SensingQuality::new(0.1, 0.9, 1.0).unwrap()
    }

    fn ch(id: u16) -> Channel {
        Channel::new(id).unwrap()
    }

    fn est(q1: f64, n: usize) -> OccupancyEstimate {
        OccupancyEstimate { q1, prior_count: n }
    }

    #[test]
    fn occupancy_examples() {
        let profile = ChannelProfile::new(vec![0.8]).unwrap();
        let q = quality();
        assert_relative_eq!(occupation_probability(ch(1), 0, &profile, &q).q1, 0.2, epsilon = 1e-15);
        assert_relative_eq!(occupation_probability(ch(1), 1, &profile, &q).q1, 0.92, epsilon = 1e-15);
        assert!(occupation_probability(ch(1), 200, &profile, &q).q1 > 1.0 - 1e-12);
    }

    #[test]
    fn occupancy_matches_event_enumeration() {
        // free at the next look iff PU absent and all n earlier sensers false-alarmed
        let profile = ChannelProfile::new(vec![0.7]).unwrap();
        let q = SensingQuality::new(0.3, 0.8, 1.0).unwrap();
        for n in 0..6 {
            let mut free = 0.0;
            for mask in 0u32..(1 << n) {
                let fa = mask.count_ones() as i32;
                let p = 0.3f64.powi(fa) * 0.7f64.powi(n - fa);
                if fa == n {
                    free += 0.7 * p;
                }
            }
            let got = occupation_probability(ch(1), n as usize, &profile, &q);
            assert_relative_eq!(got.q0(), free, epsilon = 1e-14);
        }
    }

    #[test]
    fn reward_examples() {
        let t = timing();
        let q = quality();
        let b1 = per_slot_rate(1, &t).unwrap();
        let b2 = per_slot_rate(2, &t).unwrap();
        let fresh = est(0.2, 0);
        assert_relative_eq!(msms_reward(&[], &fresh, 0, 1, &t, &q).unwrap(), 0.72 * b1, epsilon = 1e-14);
        assert_relative_eq!(msms_reward(&[], &fresh, 1, 1, &t, &q).unwrap(), 0.072 * b1, epsilon = 1e-14);
        let got = msms_reward(&[est(0.2, 0)], &est(0.5, 0), 0, 2, &t, &q).unwrap();
        assert_relative_eq!(got, 0.117 * b2, epsilon = 1e-14);
    }

    #[test]
    fn second_mini_slot_reward_matches_monte_carlo() {
        // SU reads its first channel busy, then finds the second free and takes it.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trials = 400_000;
        let mut hits = 0u64;
        for _ in 0..trials {
            let first_free = rng.random::<f64>() < 0.8;
            let reads_busy = if first_free {
                rng.random::<f64>() < 0.1
            } else {
                rng.random::<f64>() < 0.9
            };
            if !reads_busy {
                continue;
            }
            let second_free = rng.random::<f64>() < 0.5;
            if second_free && rng.random::<f64>() >= 0.1 {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        let t = timing();
        let b2 = per_slot_rate(2, &t).unwrap();
        let analytic = msms_reward(&[est(0.2, 0)], &est(0.5, 0), 0, 2, &t, &quality()).unwrap() / b2;
        assert!((p - analytic).abs() < 3.0 * se, "mc {p} vs {analytic}");
    }

    #[test]
    fn single_channel_is_shared() {
        let profile = ChannelProfile::new(vec![0.8]).unwrap();
        let sm = build_msms_matrix(&profile, &timing(), &quality(), 2, 1, 3).unwrap();
        assert_eq!(sm, parse_matrix("[[1],[1]]").unwrap());
    }

    #[test]
    fn cap_one_is_repetition_free() {
        let profile = ChannelProfile::new(vec![0.9, 0.8, 0.7, 0.6, 0.5]).unwrap();
        let sm = build_msms_matrix(&profile, &timing(), &quality(), 3, 1, 1).unwrap();
        assert!(sm.channel_counts(5)[1..].iter().all(|&c| c <= 1));
        assert_eq!(build_msms_matrix(&profile, &timing(), &quality(), 3, 1, 0), Err(AllocError::ZeroRepeatCap));
    }

    #[test]
    fn context_bookkeeping() {
        let mut ctx = AllocationContext::new(2, 2);
        ctx.record(ch(1));
        ctx.record(ch(1));
        assert!(!ctx.available(0));
        assert!(ctx.available(1));
        ctx.close_column();
        assert_eq!(ctx.earlier, vec![2, 0]);
        assert_eq!(ctx.current, vec![0, 0]);
        ctx.record(ch(2));
        ctx.record(ch(2));
        assert!(!ctx.any_available());
    }

    fn p0_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01..0.99f64, 1..7)
    }

    proptest! {
        #[test]
        fn respects_cap(p0 in p0_vec(), ns in 1usize..9, cap in 1usize..5, slot in 1u64..10) {
            let profile = ChannelProfile::new(p0).unwrap();
            let sm = build_msms_matrix(&profile, &timing(), &quality(), ns, slot, cap).unwrap();
            prop_assert!(sm.channel_counts(profile.np())[1..].iter().all(|&c| c <= cap));
        }

        #[test]
        fn reward_bounded_and_contention_scales(
            q1 in 0.0..=1.0f64,
            prefix in proptest::collection::vec(0.0..=1.0f64, 0..4),
            ny in 0usize..5,
            p_fa in 0.0..1.0f64,
            u in 0.0..=1.0f64,
        ) {
            let t = timing();
            let q = SensingQuality::new(p_fa, p_fa + (1.0 - p_fa) * u, 1.0).unwrap();
            let m = prefix.len() + 1;
            let prefix: Vec<_> = prefix.into_iter().map(|x| est(x, 0)).collect();
            let r = msms_reward(&prefix, &est(q1, 0), ny, m, &t, &q).unwrap();
            let b = per_slot_rate(m, &t).unwrap();
            prop_assert!(r >= 0.0 && r <= b + 1e-15);
            let r2 = msms_reward(&prefix, &est(q1, 0), ny + 1, m, &t, &q).unwrap();
            prop_assert!((r2 - r * p_fa).abs() <= 1e-15);
        }

        #[test]
        fn later_mini_slots_never_out_reward(
            q1 in 0.0..=1.0f64,
            prefix_q1 in 0.0..=1.0f64,
            p_fa in 0.0..0.99f64,
            u in 0.0..1.0f64,
        ) {
            let t = timing();
            let q = SensingQuality::new(p_fa, p_fa + (0.99 - p_fa) * u, 1.0).unwrap();
            let early = msms_reward(&[], &est(q1, 0), 0, 1, &t, &q).unwrap();
            let late = msms_reward(&[est(prefix_q1, 0)], &est(q1, 0), 0, 2, &t, &q).unwrap();
            prop_assert!(late <= early);
        }

        #[test]
        fn error_free_reduces_to_sms(p0 in p0_vec(), ns in 1usize..6, slot in 1u64..10) {
            let profile = ChannelProfile::new(p0).unwrap();
            let perfect = SensingQuality::error_free();
            let msms = build_msms_matrix(&profile, &timing(), &perfect, ns, slot, 3).unwrap();
            let sms = build_sms_matrix(&profile, &timing(), ns, slot).unwrap();
            for su in 0..ns {
                let want = sms.sequence(su);
                let got = msms.sequence(su);
                prop_assert!(got.len() >= want.len());
                prop_assert_eq!(&got[..want.len()], &want[..]);
            }
        }

        #[test]
        fn error_free_reward_is_the_sms_reward(
            p0 in proptest::collection::vec(0.0..=1.0f64, 2..6),
        ) {
            let profile = ChannelProfile::new(p0).unwrap();
            let perfect = SensingQuality::error_free();
            let t = timing();
            let channels: Vec<Channel> = profile.channels().collect();
            let (last, prefix) = channels.split_last().unwrap();
            let occ: Vec<_> = prefix.iter().map(|&c| occupation_probability(c, 0, &profile, &perfect)).collect();
            let cand = occupation_probability(*last, 0, &profile, &perfect);
            let got = msms_reward(&occ, &cand, 0, channels.len(), &t, &perfect).unwrap();
            let want = crate::alloc::sms_reward(*last, channels.len(), prefix, prefix, &profile, &t).unwrap();
            prop_assert!((got - want).abs() <= 1e-15);
        }
    }
}
