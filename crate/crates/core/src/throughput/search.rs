use rayon::prelude::*;
use thiserror::Error;

use super::{closed_form_columns, ExactEvaluator, ThroughputError};
use crate::model::{Channel, ChannelProfile, SensingMatrix, TimingConfig};

/// Relative width of the band treated as a tie for the argmax.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Closed-form column sum.
    ClosedForm,
    /// Expectation over all occupancy patterns.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchSpace {
    /// Every row is an ordered subset of channels, rows pairwise disjoint.
    RepetitionFree,
    /// Every cell independently in `0..=Np`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub objective: Objective,
    pub space: SearchSpace,
    /// Maximum number of candidate matrices to evaluate.
    pub budget: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            objective: Objective::Exact,
            space: SearchSpace::RepetitionFree,
            budget: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub matrix: SensingMatrix,
    pub value: f64,
    pub candidates: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(
        "search needs {candidates} candidates, above the budget of {budget} (raw state space Np^(Np*Ns) = {state_space:e})"
    )]
    BudgetExceeded {
        candidates: u128,
        state_space: f64,
        budget: u64,
    },
    #[error("search needs at least one SU")]
    NoUsers,
    #[error(transparent)]
    Throughput(#[from] ThroughputError),
}

/// Number of candidates in a search space, saturating at `u128::MAX`.
pub fn candidate_count(np: usize, ns: usize, space: SearchSpace) -> u128 {
    match space {
        SearchSpace::Full => u32::try_from(np * ns)
            .ok()
            .and_then(|e| (np as u128 + 1).checked_pow(e))
            .unwrap_or(u128::MAX),
        SearchSpace::RepetitionFree => {
            // k used channels: choose them, order them, cut into ns ordered lists
            let mut total: u128 = 0;
            for k in 0..=np {
                let term = binomial(np, k)
                    .checked_mul(factorial(k))
                    .and_then(|t| t.checked_mul(binomial(k + ns - 1, ns - 1)));
                match term.and_then(|t| total.checked_add(t)) {
                    Some(t) => total = t,
                    None => return u128::MAX,
                }
            }
            total
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |a, b| a.saturating_mul(b))
}

/// All repetition-free matrices, row-major, in lexicographic order.
fn repetition_free_candidates(np: usize, ns: usize) -> Vec<u16> {
    fn fill(cell: usize, np: usize, ns: usize, used: &mut [bool], current: &mut [u16], out: &mut Vec<u16>) {
        if cell == ns * np {
            out.extend_from_slice(current);
            return;
        }
        let col = cell % np;
        let row_closed = col > 0 && current[cell - 1] == 0;
        current[cell] = 0;
        fill(cell + 1, np, ns, used, current, out);
        if row_closed {
            return;
        }
        for c in 1..=np {
            if !used[c] {
                used[c] = true;
                current[cell] = c as u16;
                fill(cell + 1, np, ns, used, current, out);
                used[c] = false;
            }
        }
        current[cell] = 0;
    }
    let mut out = Vec::new();
    fill(0, np, ns, &mut vec![false; np + 1], &mut vec![0; ns * np], &mut out);
    out
}

fn full_candidate(index: u64, np: usize, cells: &mut [u16]) {
    let base = np as u64 + 1;
    let mut rest = index;
    for cell in cells.iter_mut().rev() {
        *cell = (rest % base) as u16;
        rest /= base;
    }
}

enum Evaluator {
    Exact(ExactEvaluator),
    ClosedForm {
        p0: Vec<f64>,
        rates: Vec<f64>,
        seen: Vec<bool>,
        terms: Vec<(Channel, f64)>,
        columns: Vec<f64>,
    },
}

impl Evaluator {
    fn new(
        objective: Objective,
        profile: &ChannelProfile,
        timing: &TimingConfig,
        ns: usize,
    ) -> Result<Self, ThroughputError> {
        Ok(match objective {
            Objective::Exact => Evaluator::Exact(ExactEvaluator::new(profile, timing, ns)?),
            Objective::ClosedForm => Evaluator::ClosedForm {
                p0: profile.p0_slice().to_vec(),
                rates: timing.rates(profile.np())?,
                seen: vec![false; profile.np() + 1],
                terms: Vec::with_capacity(ns),
                columns: vec![0.0; profile.np()],
            },
        })
    }

    fn evaluate(&mut self, cells: &[u16], ns: usize) -> f64 {
        match self {
            Evaluator::Exact(e) => e.evaluate(cells, ns),
            Evaluator::ClosedForm {
                p0,
                rates,
                seen,
                terms,
                columns,
            } => {
                closed_form_columns(cells, ns, p0, rates, seen, terms, columns);
                columns.iter().sum()
            }
        }
    }
}

/// Exhaustive argmax of the chosen objective over the chosen matrix space.
///
/// Candidates are scored in parallel; the winner is the lexicographically
/// smallest matrix whose score lies within a relative `1e-12` of the maximum,
/// so the result does not depend on how the work was split.
pub fn optimal_matrix_search(
    profile: &ChannelProfile,
    timing: &TimingConfig,
    ns: usize,
    options: &SearchOptions,
) -> Result<SearchOutcome, SearchError> {
    if ns == 0 {
        return Err(SearchError::NoUsers);
    }
    let np = profile.np();
    let count = candidate_count(np, ns, options.space);
    if count > u128::from(options.budget) {
        return Err(SearchError::BudgetExceeded {
            candidates: count,
            state_space: (np as f64).powf((np * ns) as f64),
            budget: options.budget,
        });
    }
    let count = count as u64;
    let cell_count = ns * np;
    // surfaces evaluator construction errors before going parallel
    drop(Evaluator::new(options.objective, profile, timing, ns)?);
    let make_eval = || Evaluator::new(options.objective, profile, timing, ns).expect("checked above");

    let (scores, listed) = match options.space {
        SearchSpace::RepetitionFree => {
            let listed = repetition_free_candidates(np, ns);
            let scores: Vec<f64> = listed
                .par_chunks(cell_count)
                .map_init(make_eval, |eval, cells| eval.evaluate(cells, ns))
                .collect();
            (scores, Some(listed))
        }
        SearchSpace::Full => {
            let scores: Vec<f64> = (0..count)
                .into_par_iter()
                .map_init(
                    || (make_eval(), vec![0u16; cell_count]),
                    |(eval, cells), i| {
                        full_candidate(i, np, cells);
                        eval.evaluate(cells, ns)
                    },
                )
                .collect();
            (scores, None)
        }
    };

    let best = scores.par_iter().copied().reduce(|| f64::NEG_INFINITY, f64::max);
    let threshold = best - TIE_TOLERANCE * best.abs().max(1.0);
    let winner = scores
        .par_iter()
        .position_first(|&v| v >= threshold)
        .expect("search space is never empty");

    let cells = match &listed {
        Some(listed) => listed[winner * cell_count..(winner + 1) * cell_count].to_vec(),
        None => {
            let mut cells = vec![0u16; cell_count];
            full_candidate(winner as u64, np, &mut cells);
            cells
        }
    };
    Ok(SearchOutcome {
        matrix: SensingMatrix::from_cells(ns, np, cells),
        value: scores[winner],
        candidates: count,
    })
}
