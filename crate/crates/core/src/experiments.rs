//! Parameter sweeps producing CSV tables.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::alloc::{build_sms_matrix, AllocError, Allocator};
use crate::config::{AllocatorKind, ConfigError, ExperimentConfig, RawConfig};
use crate::energy::{expected_sensings, homogeneous_energy_closed_form, total_search_energy, HandoverTerm};
use crate::model::{ChannelProfile, ModelError, SensingMatrix, SensingQuality, TimingConfig};
use crate::sim::{run_simulation, SimConfig, SimError, SimReport};
use crate::table::{Cell, Table};
use crate::throughput::{
    expected_throughput_exact, optimal_matrix_search, SearchError, SearchSpace, ThroughputError,
};

pub const TOOL: &str = "sensmat";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Throughput(#[from] ThroughputError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("sweep value {value} is invalid here: {reason}")]
    SweepValue { value: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Network throughput vs sensing time, SMS against the exhaustive optimum.
    Fig4,
    /// Per-SU SMS throughput vs sensing time.
    Fig5,
    /// Mean sensing energy vs a common primary-free probability.
    Fig6,
    /// Throughput vs sensing time for SMS, MSMS and PMSMS under the detector map.
    Fig7,
    /// PMSMS throughput vs persistence against the MSMS baseline.
    Fig8,
    /// The configured allocator over the configured sensing times.
    Custom,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "fig4" => Preset::Fig4,
            "fig5" => Preset::Fig5,
            "fig6" => Preset::Fig6,
            "fig7" => Preset::Fig7,
            "fig8" => Preset::Fig8,
            "custom" => Preset::Custom,
            _ => return Err("expected fig4, fig5, fig6, fig7, fig8 or custom".into()),
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Custom => "custom",
        };
        f.write_str(name)
    }
}

impl Preset {
    /// Settings the preset uses unless the config says otherwise.
    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Preset::Fig4 => &[("sensing", "error_free"), ("sweep_values", "[1, 2, 3, 4, 5]")],
            Preset::Fig5 => &[("sensing", "error_free"), ("sweep_values", "[1, 2, 3, 4, 5]")],
            Preset::Fig6 => &[
                ("sensing", "error_free"),
                ("sweep_values", "[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]"),
            ],
            Preset::Fig7 => &[
                ("sensing", "detector"),
                (
                    "sweep_values",
                    "[0.1, 0.2, 0.3, 0.5, 0.75, 1, 1.5, 2, 3, 4, 5, 7, 10, 15, 20]",
                ),
            ],
            Preset::Fig8 => &[("ns", "8")],
            Preset::Custom => &[],
        }
    }

    /// Fills in the preset's defaults and resolves.
    pub fn configure(self, mut raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
        for (key, value) in self.defaults() {
            if raw.get(key).is_none() {
                raw.set(key, value)?;
            }
        }
        raw.resolve()
    }

    fn sweep(self, cfg: &ExperimentConfig) -> Vec<f64> {
        let mut values = match (&cfg.sweep_values, self) {
            (Some(v), _) => v.clone(),
            (None, Preset::Fig8) => (1..=20).map(|k| k as f64 / 20.0).collect(),
            (None, _) => vec![cfg.tau_ms],
        };
        values.sort_by(f64::total_cmp);
        values
    }
}

fn header(preset: Preset, cfg: &ExperimentConfig, columns: &[&str]) -> Table {
    let mut t = Table::new(columns);
    let p0: Vec<String> = cfg.p0.iter().map(|p| p.to_string()).collect();
    t.meta("tool", TOOL)
        .meta("version", VERSION)
        .meta("preset", preset)
        .meta("seed", cfg.seed)
        .meta("config_digest", cfg.digest())
        .meta("n_slots", cfg.n_slots)
        .meta("np", cfg.np)
        .meta("ns", cfg.ns)
        .meta("p0", format!("[{}]", p0.join(" ")))
        .meta("sensing", cfg.sensing);
    t
}

fn simulate(
    cfg: &ExperimentConfig,
    profile: &ChannelProfile,
    timing: &TimingConfig,
    quality: &SensingQuality,
    allocator: Allocator,
    ns: usize,
) -> Result<SimReport, SimError> {
    run_simulation(&SimConfig {
        profile: profile.clone(),
        timing: *timing,
        quality: *quality,
        energy: cfg.energy(),
        ns,
        n_slots: cfg.n_slots,
        seed: cfg.seed,
        allocator,
        rebuild_per_slot: cfg.rebuild_per_slot,
    })
}

/// Exhaustive optimum under the configured options. If the chosen space is
/// over budget and was the full one, retries the repetition-free space and
/// says so in `notes`.
pub fn optimal_matrix(
    cfg: &ExperimentConfig,
    profile: &ChannelProfile,
    timing: &TimingConfig,
    ns: usize,
    notes: &mut Vec<String>,
) -> Result<SensingMatrix, ExperimentError> {
    let opts = cfg.search_options();
    match optimal_matrix_search(profile, timing, ns, &opts) {
        Ok(out) => Ok(out.matrix),
        Err(SearchError::BudgetExceeded { candidates, budget, .. }) if opts.space == SearchSpace::Full => {
            notes.push(format!(
                "full search space has {candidates} candidates (budget {budget}); fell back to repetition-free enumeration"
            ));
            let fallback = crate::throughput::SearchOptions {
                space: SearchSpace::RepetitionFree,
                ..opts
            };
            Ok(optimal_matrix_search(profile, timing, ns, &fallback)?.matrix)
        }
        Err(e) => Err(e.into()),
    }
}

/// Exact error-free throughput of the SMS matrix, averaged over the round-1
/// rotations a run cycles through.
pub fn sms_analytic_throughput(
    profile: &ChannelProfile,
    timing: &TimingConfig,
    ns: usize,
    rotate: bool,
) -> Result<f64, ExperimentError> {
    let rotations = if rotate { ns.max(1) } else { 1 };
    let mut total = 0.0;
    for slot in 1..=rotations as u64 {
        let sm = build_sms_matrix(profile, timing, ns, slot)?;
        total += expected_throughput_exact(&sm, profile, timing)?;
    }
    Ok(total / rotations as f64)
}

/// Allocator for the configured kind, searching for the optimum if needed.
pub fn configured_allocator(
    cfg: &ExperimentConfig,
    profile: &ChannelProfile,
    timing: &TimingConfig,
    notes: &mut Vec<String>,
) -> Result<Allocator, ExperimentError> {
    Ok(match cfg.allocator {
        AllocatorKind::Sms => Allocator::Sms,
        AllocatorKind::Msms => Allocator::Msms {
            repeat_cap: cfg.repeat_cap,
        },
        AllocatorKind::Pmsms => Allocator::Pmsms {
            repeat_cap: cfg.repeat_cap,
        },
        AllocatorKind::Optimal => Allocator::Fixed(optimal_matrix(cfg, profile, timing, cfg.ns, notes)?),
    })
}

type Point = (Vec<Cell>, Vec<String>);

fn run_points<F>(values: &[f64], f: F) -> Result<(Vec<Vec<Cell>>, Vec<String>), ExperimentError>
where
    F: Fn(f64) -> Result<Point, ExperimentError> + Sync,
{
    let points: Vec<Point> = values.par_iter().map(|&v| f(v)).collect::<Result<_, _>>()?;
    let mut rows = Vec::with_capacity(points.len());
    let mut notes: Vec<String> = Vec::new();
    for (row, point_notes) in points {
        rows.push(row);
        for n in point_notes {
            if !notes.contains(&n) {
                notes.push(n);
            }
        }
    }
    Ok((rows, notes))
}

fn finish(mut table: Table, rows: Vec<Vec<Cell>>, notes: Vec<String>) -> Table {
    for n in notes {
        table.meta("note", n);
    }
    for r in rows {
        table.push(r);
    }
    table
}

fn tail(cfg: &ExperimentConfig) -> [Cell; 2] {
    [cfg.seed.into(), cfg.n_slots.into()]
}

/// Runs a preset over its sweep values; rows come out in ascending sweep order.
pub fn run_experiment_sweep(preset: Preset, cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let values = preset.sweep(cfg);
    let profile = cfg.profile();
    match preset {
        Preset::Fig4 => {
            let columns = [
                "tau_ms",
                "sms_analytic",
                "optimal_analytic",
                "relative_gap",
                "sms_sim",
                "sms_sim_se",
                "optimal_sim",
                "optimal_sim_se",
                "seed",
                "n_slots",
            ];
            let (rows, notes) = run_points(&values, |tau| {
                let timing = cfg.timing_at(tau)?;
                let quality = cfg.quality_at(tau)?;
                let mut notes = Vec::new();
                let opt = optimal_matrix(cfg, &profile, &timing, cfg.ns, &mut notes)?;
                let sms_a = sms_analytic_throughput(&profile, &timing, cfg.ns, cfg.rebuild_per_slot)?;
                let opt_a = expected_throughput_exact(&opt, &profile, &timing)?;
                let sms = simulate(cfg, &profile, &timing, &quality, Allocator::Sms, cfg.ns)?;
                let best = simulate(cfg, &profile, &timing, &quality, Allocator::Fixed(opt), cfg.ns)?;
                let gap = if opt_a > 0.0 { (opt_a - sms_a) / opt_a } else { 0.0 };
                let mut row: Vec<Cell> = vec![
                    tau.into(),
                    sms_a.into(),
                    opt_a.into(),
                    gap.into(),
                    sms.network_throughput.into(),
                    sms.network_throughput_se.into(),
                    best.network_throughput.into(),
                    best.network_throughput_se.into(),
                ];
                row.extend(tail(cfg));
                Ok((row, notes))
            })?;
            Ok(finish(header(preset, cfg, &columns), rows, notes))
        }
        Preset::Fig5 => {
            let su_cols: Vec<String> = (1..=cfg.ns).map(|i| format!("su_{i}")).collect();
            let mut columns: Vec<&str> = vec!["tau_ms"];
            columns.extend(su_cols.iter().map(String::as_str));
            columns.extend(["network_throughput", "fairness_spread", "seed", "n_slots"]);
            let (rows, notes) = run_points(&values, |tau| {
                let timing = cfg.timing_at(tau)?;
                let quality = cfg.quality_at(tau)?;
                let r = simulate(cfg, &profile, &timing, &quality, Allocator::Sms, cfg.ns)?;
                let mut row: Vec<Cell> = vec![tau.into()];
                row.extend(r.per_su_throughput.iter().map(|&t| Cell::from(t)));
                row.push(r.network_throughput.into());
                row.push(r.fairness.spread.into());
                row.extend(tail(cfg));
                Ok((row, Vec::new()))
            })?;
            Ok(finish(header(preset, cfg, &columns), rows, notes))
        }
        Preset::Fig6 => {
            let columns = [
                "p",
                "sms_energy_sim",
                "sms_energy_se",
                "optimal_energy_sim",
                "optimal_energy_se",
                "sms_energy_exact",
                "optimal_energy_exact",
                "sms_search_energy",
                "closed_form",
                "optimal_matrix",
                "seed",
                "n_slots",
            ];
            let timing = cfg.timing();
            let (rows, notes) = run_points(&values, |p| {
                let hp = ChannelProfile::homogeneous(p, cfg.np).map_err(|e| ExperimentError::SweepValue {
                    value: p,
                    reason: e.to_string(),
                })?;
                let quality = cfg.quality_at(cfg.tau_ms)?;
                let mut notes = Vec::new();
                let sms_m = build_sms_matrix(&hp, &timing, cfg.ns, 1)?;
                let opt_m = optimal_matrix(cfg, &hp, &timing, cfg.ns, &mut notes)?;
                let e = cfg.energy();
                let sms = simulate(cfg, &hp, &timing, &quality, Allocator::Fixed(sms_m.clone()), cfg.ns)?;
                let opt = simulate(cfg, &hp, &timing, &quality, Allocator::Fixed(opt_m.clone()), cfg.ns)?;
                let exact = |sm: &SensingMatrix| -> f64 {
                    (0..sm.ns())
                        .map(|su| expected_sensings(&sm.sequence(su), &hp))
                        .sum::<f64>()
                        * e.e_sense()
                };
                let mut row: Vec<Cell> = vec![
                    p.into(),
                    sms.sensing_energy_mean.into(),
                    (sms.sensings_per_slot_se * e.e_sense()).into(),
                    opt.sensing_energy_mean.into(),
                    (opt.sensings_per_slot_se * e.e_sense()).into(),
                    exact(&sms_m).into(),
                    exact(&opt_m).into(),
                    total_search_energy(&sms_m, &hp, &e, HandoverTerm::Drop).into(),
                    homogeneous_energy_closed_form(p, cfg.np, cfg.ns, e.e_sense()).into(),
                    opt_m.to_string().into(),
                ];
                row.extend(tail(cfg));
                Ok((row, notes))
            })?;
            Ok(finish(header(preset, cfg, &columns), rows, notes))
        }
        Preset::Fig7 => {
            let columns = [
                "tau_ms", "p_fa", "p_d", "sms", "sms_se", "msms", "msms_se", "pmsms", "pmsms_se", "seed",
                "n_slots",
            ];
            let (rows, notes) = run_points(&values, |tau| {
                let timing = cfg.timing_at(tau)?;
                let quality = cfg.quality_at(tau)?.with_persistence(1.0)?;
                let pmac = quality.with_persistence(cfg.sweep_pmsms_p)?;
                let cap = cfg.repeat_cap;
                let sms = simulate(cfg, &profile, &timing, &quality, Allocator::Sms, cfg.ns)?;
                let msms = simulate(cfg, &profile, &timing, &quality, Allocator::Msms { repeat_cap: cap }, cfg.ns)?;
                let pmsms = simulate(cfg, &profile, &timing, &pmac, Allocator::Pmsms { repeat_cap: cap }, cfg.ns)?;
                let mut row: Vec<Cell> = vec![tau.into(), quality.p_fa().into(), quality.p_d().into()];
                for r in [&sms, &msms, &pmsms] {
                    row.push(r.network_throughput.into());
                    row.push(r.network_throughput_se.into());
                }
                row.extend(tail(cfg));
                Ok((row, Vec::new()))
            })?;
            let mut table = header(preset, cfg, &columns);
            table.meta("pmsms_p", cfg.sweep_pmsms_p);
            Ok(finish(table, rows, notes))
        }
        Preset::Fig8 => {
            let columns = ["p", "pmsms", "pmsms_se", "msms", "msms_se", "relative_gain", "seed", "n_slots"];
            let timing = cfg.timing();
            let base_quality = cfg.quality().with_persistence(1.0)?;
            let cap = cfg.repeat_cap;
            let msms = simulate(cfg, &profile, &timing, &base_quality, Allocator::Msms { repeat_cap: cap }, cfg.ns)?;
            let (rows, notes) = run_points(&values, |p| {
                let q = base_quality.with_persistence(p).map_err(|e| ExperimentError::SweepValue {
                    value: p,
                    reason: e.to_string(),
                })?;
                let r = simulate(cfg, &profile, &timing, &q, Allocator::Pmsms { repeat_cap: cap }, cfg.ns)?;
                let gain = if msms.network_throughput > 0.0 {
                    r.network_throughput / msms.network_throughput - 1.0
                } else {
                    0.0
                };
                let mut row: Vec<Cell> = vec![
                    p.into(),
                    r.network_throughput.into(),
                    r.network_throughput_se.into(),
                    msms.network_throughput.into(),
                    msms.network_throughput_se.into(),
                    gain.into(),
                ];
                row.extend(tail(cfg));
                Ok((row, Vec::new()))
            })?;
            Ok(finish(header(preset, cfg, &columns), rows, notes))
        }
        Preset::Custom => {
            let columns = [
                "tau_ms",
                "allocator",
                "network_throughput",
                "network_throughput_se",
                "sensing_energy",
                "handover_energy",
                "su_collisions",
                "pu_interference",
                "fairness_spread",
                "seed",
                "n_slots",
            ];
            let (rows, notes) = run_points(&values, |tau| {
                let timing = cfg.timing_at(tau)?;
                let quality = cfg.quality_at(tau)?;
                let mut notes = Vec::new();
                let allocator = configured_allocator(cfg, &profile, &timing, &mut notes)?;
                let r = simulate(cfg, &profile, &timing, &quality, allocator, cfg.ns)?;
                let mut row: Vec<Cell> = vec![
                    tau.into(),
                    cfg.allocator.to_string().into(),
                    r.network_throughput.into(),
                    r.network_throughput_se.into(),
                    r.sensing_energy_mean.into(),
                    r.handover_energy_mean.into(),
                    r.su_collisions.into(),
                    r.pu_interference_events.into(),
                    r.fairness.spread.into(),
                ];
                row.extend(tail(cfg));
                Ok((row, notes))
            })?;
            Ok(finish(header(preset, cfg, &columns), rows, notes))
        }
    }
}
