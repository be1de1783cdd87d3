//! Slotted Monte-Carlo simulation of SUs walking their sensing sequences.
//!
//! Every slot draws the same number of uniforms in the same order whatever
//! happens in it, so two runs with the same seed see the same PU activity and
//! sensing noise even when their matrices differ.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::alloc::{AllocError, Allocator};
use crate::energy::EnergyConfig;
use crate::model::{Channel, ChannelProfile, ModelError, SensingMatrix, SensingQuality, TimingConfig};

const CHUNK_SLOTS: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("n_slots must be at least 1")]
    NoSlots,
    #[error("matrix has width {found}, profile has {expected} channels")]
    WidthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What one SU did in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SuOutcome {
    pub throughput: f64,
    pub sensings: u32,
    /// Channel and mini-slot where it started transmitting.
    pub transmitted: Option<(Channel, usize)>,
    pub collided: bool,
    pub pu_interference: bool,
}

impl SuOutcome {
    pub fn handovers(&self) -> u32 {
        self.sensings.saturating_sub(1)
    }
}

/// Plays one slot. `pu_busy[j]` is the PU state of channel `j + 1`; `rates`
/// gives `B_m` for every column of `sm`.
///
/// Each mini-slot draws two uniforms per SU (persistence, then sensing) in SU
/// order, used or not.
pub fn simulate_slot<R: Rng + ?Sized>(
    sm: &SensingMatrix,
    pu_busy: &[bool],
    quality: &SensingQuality,
    rates: &[f64],
    rng: &mut R,
) -> Vec<SuOutcome> {
    let ns = sm.ns();
    let mut out = vec![SuOutcome::default(); ns];
    let mut searching = vec![true; ns];
    // SU currently holding each channel, from the mini-slot after it started
    let mut holder: Vec<Option<usize>> = vec![None; pu_busy.len()];
    let mut starters: Vec<(usize, Channel)> = Vec::with_capacity(ns);

    for m in 1..=sm.width() {
        starters.clear();
        for su in 0..ns {
            let u_persist: f64 = rng.random();
            let u_sense: f64 = rng.random();
            if !searching[su] {
                continue;
            }
            let Some(ch) = sm.entry(su, m) else { continue };
            if u_persist >= quality.persistence() {
                continue;
            }
            out[su].sensings += 1;
            let occupied = pu_busy[ch.index()] || holder[ch.index()].is_some();
            let reads_busy = if occupied {
                u_sense < quality.p_d()
            } else {
                u_sense < quality.p_fa()
            };
            if !reads_busy {
                starters.push((su, ch));
            }
        }
        for &(su, ch) in &starters {
            searching[su] = false;
            let o = &mut out[su];
            o.transmitted = Some((ch, m));
            o.pu_interference = pu_busy[ch.index()];
            let rivals = starters.iter().filter(|&&(_, c)| c == ch).count() > 1;
            if rivals || holder[ch.index()].is_some() {
                o.collided = true;
            } else if !o.pu_interference {
                o.throughput = rates[m - 1];
            }
        }
        for &(su, ch) in &starters {
            match holder[ch.index()] {
                Some(prev) => {
                    out[prev].collided = true;
                    out[prev].throughput = 0.0;
                }
                None => holder[ch.index()] = Some(su),
            }
        }
    }
    out
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub profile: ChannelProfile,
    pub timing: TimingConfig,
    pub quality: SensingQuality,
    pub energy: EnergyConfig,
    pub ns: usize,
    pub n_slots: u64,
    pub seed: u64,
    pub allocator: Allocator,
    /// Rebuild the matrix every slot so round 1 rotates across SUs.
    pub rebuild_per_slot: bool,
}

/// Spread of per-SU throughput.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fairness {
    /// `(max - min) / max`.
    pub spread: f64,
    /// Every SU earned nothing, so the spread is reported as 0.
    pub all_zero: bool,
}

pub fn fairness_metrics(per_su: &[f64]) -> Fairness {
    let max = per_su.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = per_su.iter().copied().fold(f64::INFINITY, f64::min);
    if per_su.is_empty() || max <= 0.0 {
        return Fairness {
            spread: 0.0,
            all_zero: true,
        };
    }
    Fairness {
        spread: (max - min) / max,
        all_zero: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n_slots: u64,
    pub seed: u64,
    /// Matrix used in slot 1.
    pub first_matrix: SensingMatrix,
    pub per_su_throughput: Vec<f64>,
    pub network_throughput: f64,
    /// Standard error of the per-slot network throughput mean.
    pub network_throughput_se: f64,
    /// SUs that lost a slot to another SU on their channel.
    pub su_collisions: u64,
    /// SUs that started transmitting on a channel with its PU present.
    pub pu_interference_events: u64,
    pub per_su_sensings: Vec<f64>,
    /// Mean sensings per slot over all SUs.
    pub sensings_per_slot: f64,
    pub sensings_per_slot_se: f64,
    pub sensing_energy_mean: f64,
    pub handover_energy_mean: f64,
    pub fairness: Fairness,
}

impl SimReport {
    pub fn fairness_spread(&self) -> f64 {
        self.fairness.spread
    }
}

#[derive(Debug, Clone)]
struct Totals {
    width: usize,
    /// Successful transmissions per SU and starting mini-slot.
    successes: Vec<u64>,
    sensings: Vec<u64>,
    handovers: u64,
    net_sum: f64,
    net_sq: f64,
    sense_sum: f64,
    sense_sq: f64,
    collisions: u64,
    interference: u64,
}

impl Totals {
    fn new(ns: usize, width: usize) -> Self {
        Self {
            width,
            successes: vec![0; ns * width],
            sensings: vec![0; ns],
            handovers: 0,
            net_sum: 0.0,
            net_sq: 0.0,
            sense_sum: 0.0,
            sense_sq: 0.0,
            collisions: 0,
            interference: 0,
        }
    }

    fn add_slot(&mut self, slot: &[SuOutcome]) {
        let mut net = 0.0;
        let mut sensed = 0u64;
        for (su, o) in slot.iter().enumerate() {
            if o.throughput > 0.0 {
                let (_, m) = o.transmitted.expect("throughput needs a transmission");
                self.successes[su * self.width + m - 1] += 1;
            }
            self.sensings[su] += o.sensings as u64;
            self.handovers += o.handovers() as u64;
            self.collisions += o.collided as u64;
            self.interference += o.pu_interference as u64;
            net += o.throughput;
            sensed += o.sensings as u64;
        }
        self.net_sum += net;
        self.net_sq += net * net;
        self.sense_sum += sensed as f64;
        self.sense_sq += (sensed * sensed) as f64;
    }

    fn merge(&mut self, other: &Totals) {
        for (a, b) in self.successes.iter_mut().zip(&other.successes) {
            *a += b;
        }
        for (a, b) in self.sensings.iter_mut().zip(&other.sensings) {
            *a += b;
        }
        self.handovers += other.handovers;
        self.net_sum += other.net_sum;
        self.net_sq += other.net_sq;
        self.sense_sum += other.sense_sum;
        self.sense_sq += other.sense_sq;
        self.collisions += other.collisions;
        self.interference += other.interference;
    }
}

fn mean_and_se(sum: f64, sq: f64, n: u64) -> (f64, f64) {
    let n_f = n as f64;
    let mean = sum / n_f;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sq - n_f * mean * mean) / (n_f - 1.0)).max(0.0);
    (mean, (var / n_f).sqrt())
}

/// Generator for slot `slot` of a run seeded with `seed`.
pub fn slot_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    rng
}

/// PU state for one slot: channel `j` is busy unless `u < P0_j`.
pub fn draw_pu_state<R: Rng + ?Sized>(profile: &ChannelProfile, rng: &mut R) -> Vec<bool> {
    profile
        .p0_slice()
        .iter()
        .map(|&p0| rng.random::<f64>() >= p0)
        .collect()
}

/// Matrices a run uses, keyed by round-1 rotation.
struct MatrixPlan {
    matrices: HashMap<usize, SensingMatrix>,
    rotating: bool,
    ns: usize,
}

impl MatrixPlan {
    fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        let rotating = cfg.rebuild_per_slot && cfg.allocator.rotates() && cfg.ns > 0;
        let period = if rotating { cfg.ns as u64 } else { 1 };
        let mut matrices = HashMap::new();
        for slot in 1..=period.min(cfg.n_slots) {
            let sm = cfg
                .allocator
                .build(&cfg.profile, &cfg.timing, &cfg.quality, cfg.ns, slot)?;
            if sm.width() != cfg.profile.np() {
                return Err(SimError::WidthMismatch {
                    expected: cfg.profile.np(),
                    found: sm.width(),
                });
            }
            matrices.insert((slot - 1) as usize, sm);
        }
        Ok(Self {
            matrices,
            rotating,
            ns: cfg.ns,
        })
    }

    fn for_slot(&self, slot: u64) -> &SensingMatrix {
        let key = if self.rotating {
            ((slot - 1) % self.ns as u64) as usize
        } else {
            0
        };
        &self.matrices[&key]
    }
}

/// Runs `cfg.n_slots` slots. The report depends only on `cfg`, not on the
/// number of worker threads.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport, SimError> {
    if cfg.n_slots == 0 {
        return Err(SimError::NoSlots);
    }
    let plan = MatrixPlan::new(cfg)?;
    let rates = cfg.timing.rates(cfg.profile.np())?;
    let chunks = cfg.n_slots.div_ceil(CHUNK_SLOTS);

    let partials: Vec<Totals> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut totals = Totals::new(cfg.ns, rates.len());
            let first = chunk * CHUNK_SLOTS + 1;
            let last = ((chunk + 1) * CHUNK_SLOTS).min(cfg.n_slots);
            for slot in first..=last {
                let mut rng = slot_rng(cfg.seed, slot);
                let pu_busy = draw_pu_state(&cfg.profile, &mut rng);
                let outcome = simulate_slot(plan.for_slot(slot), &pu_busy, &cfg.quality, &rates, &mut rng);
                totals.add_slot(&outcome);
            }
            totals
        })
        .collect();

    let mut totals = Totals::new(cfg.ns, rates.len());
    for part in &partials {
        totals.merge(part);
    }

    let n = cfg.n_slots;
    let n_f = n as f64;
    let per_su_throughput: Vec<f64> = (0..cfg.ns)
        .map(|su| {
            let row = &totals.successes[su * rates.len()..(su + 1) * rates.len()];
            row.iter().zip(&rates).map(|(&c, &b)| c as f64 / n_f * b).sum()
        })
        .collect();
    let per_su_sensings: Vec<f64> = totals.sensings.iter().map(|&s| s as f64 / n_f).collect();
    let (_, network_throughput_se) = mean_and_se(totals.net_sum, totals.net_sq, n);
    let (sensings_per_slot, sensings_per_slot_se) = mean_and_se(totals.sense_sum, totals.sense_sq, n);
    Ok(SimReport {
        n_slots: n,
        seed: cfg.seed,
        first_matrix: plan.for_slot(1).clone(),
        network_throughput: per_su_throughput.iter().sum(),
        fairness: fairness_metrics(&per_su_throughput),
        per_su_throughput,
        network_throughput_se,
        su_collisions: totals.collisions,
        pu_interference_events: totals.interference,
        per_su_sensings,
        sensings_per_slot,
        sensings_per_slot_se,
        sensing_energy_mean: sensings_per_slot * cfg.energy.e_sense(),
        handover_energy_mean: totals.handovers as f64 / n_f * cfg.energy.e_ho(),
    })
}
