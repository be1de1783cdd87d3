//! Error-free network throughput of a sensing matrix: the closed-form column
//! sum, an exact expectation over all primary-user occupancy patterns, and the
//! exhaustive optimal-matrix search built on either.

mod search;

pub use search::{
    optimal_matrix_search, Objective, SearchError, SearchOptions, SearchOutcome, SearchSpace,
};

use thiserror::Error;

use crate::model::{validate_matrix, Channel, ChannelProfile, ModelError, SensingMatrix, TimingConfig};

/// Largest channel count the occupancy enumeration accepts (2^25 patterns).
pub const MAX_ENUMERATED_CHANNELS: usize = 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThroughputError {
    #[error("matrix is not valid for this profile: {0}")]
    InvalidMatrix(String),
    #[error("{np} channels exceed the enumeration bound of {max}")]
    TooManyChannels { np: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub total: f64,
    pub per_column: Vec<f64>,
}

/// Combines `(channel, weight)` terms of one mini-slot column: a channel
/// listed once contributes its weight, a channel listed more than once
/// contributes nothing (its sensers collide).
pub fn collision_sum(terms: &[(Channel, f64)]) -> f64 {
    let mut sorted = terms.to_vec();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        if j - i == 1 {
            total += sorted[i].1;
        }
        i = j;
    }
    total
}

fn check_matrix(sm: &SensingMatrix, profile: &ChannelProfile) -> Result<(), ThroughputError> {
    validate_matrix(sm, profile, usize::MAX).map_err(|v| {
        ThroughputError::InvalidMatrix(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
    })
}

/// Column weights of the closed form into `out`. `seen` must hold `np + 1`
/// entries and is reset here.
pub(crate) fn closed_form_columns(
    cells: &[u16],
    ns: usize,
    p0: &[f64],
    rates: &[f64],
    seen: &mut [bool],
    terms: &mut Vec<(Channel, f64)>,
    out: &mut [f64],
) {
    let width = rates.len();
    seen.iter_mut().for_each(|s| *s = false);
    for j in 0..width {
        terms.clear();
        for su in 0..ns {
            if let Some(ch) = Channel::new(cells[su * width + j]) {
                let available = if seen[usize::from(ch.get())] { 0.0 } else { 1.0 };
                terms.push((ch, p0[ch.index()] * available));
            }
        }
        out[j] = collision_sum(terms) * rates[j];
        for &(ch, _) in terms.iter() {
            seen[usize::from(ch.get())] = true;
        }
    }
}

/// Closed-form column sum: column `j` earns `B_j` times the collision sum of
/// `P0 * A` over its entries, where `A = 0` for channels already present in an
/// earlier column.
pub fn network_throughput_closed_form(
    sm: &SensingMatrix,
    profile: &ChannelProfile,
    timing: &TimingConfig,
) -> Result<ThroughputReport, ThroughputError> {
    check_matrix(sm, profile)?;
    let rates = timing.rates(sm.width())?;
    let mut per_column = vec![0.0; sm.width()];
    closed_form_columns(
        sm.cells(),
        sm.ns(),
        profile.p0_slice(),
        &rates,
        &mut vec![false; profile.np() + 1],
        &mut Vec::new(),
        &mut per_column,
    );
    Ok(ThroughputReport {
        total: per_column.iter().sum(),
        per_column,
    })
}

/// Throughput each SU earns in one slot under error-free sensing, given which
/// channels the primary users leave free.
///
/// All SUs step through mini-slots together. A channel reads busy if its PU is
/// present or an SU started transmitting on it in an earlier mini-slot. SUs that
/// find the same channel free in the same mini-slot collide and earn nothing.
pub fn error_free_walk(sm: &SensingMatrix, free: &[bool], rates: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; sm.ns()];
    let mut scratch = WalkScratch::new(sm.ns(), free.len());
    scratch.walk(sm.cells(), sm.ns(), free, rates, &mut out);
    out
}

struct WalkScratch {
    searching: Vec<bool>,
    occupied: Vec<bool>,
    starters: Vec<(usize, u16)>,
}

impl WalkScratch {
    fn new(ns: usize, np: usize) -> Self {
        Self {
            searching: vec![true; ns],
            occupied: vec![false; np + 1],
            starters: Vec::with_capacity(ns),
        }
    }

    fn walk(&mut self, cells: &[u16], ns: usize, free: &[bool], rates: &[f64], out: &mut [f64]) {
        let width = rates.len();
        self.searching.iter_mut().for_each(|s| *s = true);
        self.occupied[0] = true;
        for (j, &f) in free.iter().enumerate() {
            self.occupied[j + 1] = !f;
        }
        out.iter_mut().for_each(|x| *x = 0.0);
        for m in 0..width {
            self.starters.clear();
            for su in 0..ns {
                let c = cells[su * width + m];
                if self.searching[su] && c != 0 && !self.occupied[usize::from(c)] {
                    self.starters.push((su, c));
                }
            }
            for &(su, c) in &self.starters {
                let contenders = self.starters.iter().filter(|s| s.1 == c).count();
                if contenders == 1 {
                    out[su] = rates[m];
                }
                self.searching[su] = false;
            }
            for &(_, c) in &self.starters {
                self.occupied[usize::from(c)] = true;
            }
        }
    }
}

/// Reusable evaluator of [`expected_throughput_exact`] for one profile and
/// timing; the search calls it once per candidate.
pub(crate) struct ExactEvaluator {
    np: usize,
    rates: Vec<f64>,
    patterns: Vec<(Vec<bool>, f64)>,
    scratch: WalkScratch,
    per_su: Vec<f64>,
}

impl ExactEvaluator {
    pub(crate) fn new(
        profile: &ChannelProfile,
        timing: &TimingConfig,
        ns: usize,
    ) -> Result<Self, ThroughputError> {
        let np = profile.np();
        if np > MAX_ENUMERATED_CHANNELS {
            return Err(ThroughputError::TooManyChannels {
                np,
                max: MAX_ENUMERATED_CHANNELS,
            });
        }
        let rates = timing.rates(np)?;
        let p0 = profile.p0_slice();
        let patterns = (0u32..1 << np)
            .filter_map(|mask| {
                let free: Vec<bool> = (0..np).map(|j| mask >> j & 1 == 1).collect();
                let weight: f64 = free
                    .iter()
                    .zip(p0)
                    .map(|(&f, &p)| if f { p } else { 1.0 - p })
                    .product();
                (weight > 0.0).then_some((free, weight))
            })
            .collect();
        Ok(Self {
            np,
            rates,
            patterns,
            scratch: WalkScratch::new(ns, np),
            per_su: vec![0.0; ns],
        })
    }

    pub(crate) fn evaluate(&mut self, cells: &[u16], ns: usize) -> f64 {
        if self.per_su.len() != ns {
            self.per_su = vec![0.0; ns];
            self.scratch = WalkScratch::new(ns, self.np);
        }
        let mut total = 0.0;
        for (free, weight) in &self.patterns {
            self.scratch.walk(cells, ns, free, &self.rates, &mut self.per_su);
            total += weight * self.per_su.iter().sum::<f64>();
        }
        total
    }
}

/// Expected network throughput under error-free sensing, by enumerating every
/// joint PU occupancy pattern and walking all sensing sequences through it.
pub fn expected_throughput_exact(
    sm: &SensingMatrix,
    profile: &ChannelProfile,
    timing: &TimingConfig,
) -> Result<f64, ThroughputError> {
    check_matrix(sm, profile)?;
    let mut eval = ExactEvaluator::new(profile, timing, sm.ns())?;
    Ok(eval.evaluate(sm.cells(), sm.ns()))
}
