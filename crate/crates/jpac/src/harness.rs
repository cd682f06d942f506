//! Monte Carlo experiment engine: sweeps, per-snapshot verification,
//! outage aggregation, and CSV emission.
//!
//! Every algorithm output is re-verified against the independent oracles
//! before it is counted: the classic per-user feasibility route must
//! accept the final admitted set, the priority constraints must hold, and
//! the per-snapshot outage staircase (a partially served priority level
//! forces zero outage above it and full outage below it) must be intact.
//! A violation aborts the experiment; it is a correctness failure, not a
//! statistic.
//!
//! Determinism: snapshot k of a run draws from the stream (master seed, k)
//! regardless of sweep value or worker count, and rows are emitted in
//! (sweep, snapshot, tier) order, so identical configs produce identical
//! CSV bytes. Timing capture is off by default for the same reason.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admission::{
    brute_force_oracle, run_with_config, Algorithm, JpacConfig, OracleError,
};
use crate::feasibility::{
    build_reduced, classic_power, power_from_aggregates, reduced_aggregates, ClassicOutcome,
};
use crate::model::{Direction, NetworkTopology, PowerAllocation, SinrAssignment};
use crate::scenario::{sample_snapshot_seeded, ScenarioError, ScenarioSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    Mespa,
    Mlspa,
    /// Brute-force enumeration; refuses snapshots beyond 14 users.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Mean users added per tier, split across the tier's cells.
    Users,
    /// Target-SINR pivot: every tier's choice set becomes {v, v-6} dB.
    Gamma,
    /// Default shadowing deviation, dB.
    Shadowing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub algorithm: AlgorithmChoice,
    pub direction: Direction,
    pub snapshots: usize,
    pub master_seed: u64,
    pub sweep: Option<SweepSpec>,
    pub workers: usize,
    /// Record wall time per snapshot. Off by default so identical configs
    /// produce byte-identical CSVs.
    pub timing: bool,
    pub jpac: JpacConfig,
}

impl RunConfig {
    pub fn new(scenario: ScenarioSpec, algorithm: AlgorithmChoice, direction: Direction) -> Self {
        Self {
            scenario,
            algorithm,
            direction,
            snapshots: 200,
            master_seed: 1,
            sweep: None,
            workers: 1,
            timing: false,
            jpac: JpacConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenario.validate()?;
        if self.snapshots == 0 {
            return Err(HarnessError::NoSnapshots);
        }
        if self.workers == 0 {
            return Err(HarnessError::NoWorkers);
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(HarnessError::EmptySweep);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("snapshots must be at least 1")]
    NoSnapshots,
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("sweep values must be nonempty")]
    EmptySweep,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invariant violation in snapshot {snapshot} (sweep value {sweep_value}): {detail}")]
    InvariantViolation { snapshot: usize, sweep_value: f64, detail: String },
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// One (sweep value, snapshot, tier) observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub sweep_value: f64,
    pub snapshot: usize,
    pub tier: usize,
    pub priority: usize,
    pub total: usize,
    pub supported: usize,
    pub outage: f64,
    pub solves: usize,
    pub runtime_us: u64,
}

/// Mean outage per (sweep value, tier), taken over snapshots in which the
/// tier had at least one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_value: f64,
    pub tier: usize,
    pub priority: usize,
    /// Snapshots with at least one user in the tier.
    pub snapshots: usize,
    pub mean_total: f64,
    pub mean_supported: f64,
    pub mean_outage: f64,
    pub mean_solves: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageStats {
    pub rows: Vec<SnapshotRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl OutageStats {
    pub fn snapshots_csv(&self) -> String {
        let mut out =
            String::from("sweep_value,snapshot,tier,priority,total,supported,outage,solves,runtime_us\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.sweep_value,
                r.snapshot,
                r.tier,
                r.priority,
                r.total,
                r.supported,
                r.outage,
                r.solves,
                r.runtime_us
            ));
        }
        out
    }

    pub fn means_csv(&self) -> String {
        let mut out = String::from(
            "sweep_value,tier,priority,snapshots,mean_total,mean_supported,mean_outage,mean_solves\n",
        );
        for r in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.sweep_value,
                r.tier,
                r.priority,
                r.snapshots,
                r.mean_total,
                r.mean_supported,
                r.mean_outage,
                r.mean_solves
            ));
        }
        out
    }

    pub fn mean_outage(&self, sweep_value: f64, tier: usize) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.sweep_value == sweep_value && a.tier == tier)
            .map(|a| a.mean_outage)
    }
}

/// Apply one sweep value to a scenario.
pub fn apply_sweep(spec: &ScenarioSpec, param: SweepParam, value: f64) -> ScenarioSpec {
    let mut out = spec.clone();
    match param {
        SweepParam::Users => {
            for tier_idx in 0..out.tiers.len() {
                let cells = out.cells.iter().filter(|c| c.tier == tier_idx).count();
                if cells > 0 {
                    out.tiers[tier_idx].mean_users_per_cell += value / cells as f64;
                }
            }
        }
        SweepParam::Gamma => {
            for tier in &mut out.tiers {
                tier.target_sinr_choices_db = vec![value, value - 6.0];
            }
        }
        SweepParam::Shadowing => {
            out.shadowing.default_db = value;
        }
    }
    out
}

struct SnapshotOutcome {
    admitted: Vec<bool>,
    solves: usize,
    runtime_us: u64,
}

fn run_snapshot(
    spec: &ScenarioSpec,
    config: &RunConfig,
    snapshot: usize,
    sweep_value: f64,
) -> Result<(NetworkTopology, SnapshotOutcome), HarnessError> {
    let topo = sample_snapshot_seeded(spec, config.master_seed, snapshot as u64)?;
    if topo.num_users() == 0 {
        // degenerate draw: nothing to admit, nothing to run
        return Ok((
            topo,
            SnapshotOutcome { admitted: Vec::new(), solves: 0, runtime_us: 0 },
        ));
    }
    let started = std::time::Instant::now();
    let (admitted_users, solves, powers) = match config.algorithm {
        AlgorithmChoice::Mespa | AlgorithmChoice::Mlspa => {
            let algo = match config.algorithm {
                AlgorithmChoice::Mespa => Algorithm::Mespa,
                _ => Algorithm::Mlspa,
            };
            let trace = run_with_config(&topo, config.direction, algo, &config.jpac);
            verify_solve_accounting(&trace, &topo).map_err(|detail| {
                HarnessError::InvariantViolation { snapshot, sweep_value, detail }
            })?;
            (trace.admitted, trace.solve_count, trace.powers)
        }
        AlgorithmChoice::Oracle => {
            let result = brute_force_oracle(&topo, config.direction)?;
            (result.admitted, result.subsets_checked, result.powers)
        }
    };
    let runtime_us = if config.timing { started.elapsed().as_micros() as u64 } else { 0 };

    verify_output(&topo, config.direction, &admitted_users, &powers)
        .map_err(|detail| HarnessError::InvariantViolation { snapshot, sweep_value, detail })?;

    let mut admitted = vec![false; topo.num_users()];
    for &u in &admitted_users {
        admitted[u] = true;
    }
    Ok((topo, SnapshotOutcome { admitted, solves, runtime_us }))
}

fn verify_solve_accounting(
    trace: &crate::admission::RemovalTrace,
    topo: &NetworkTopology,
) -> Result<(), String> {
    let removals = trace.removals();
    match trace.algorithm {
        Algorithm::Mlspa => {
            if trace.solve_count > 2 * (removals + 1) {
                return Err(format!(
                    "MLSPA solve count {} exceeds 2(R+1) = {}",
                    trace.solve_count,
                    2 * (removals + 1)
                ));
            }
            if trace.solve_count > topo.num_users() + 1 {
                return Err(format!(
                    "MLSPA solve count {} exceeds M+1 = {}",
                    trace.solve_count,
                    topo.num_users() + 1
                ));
            }
        }
        Algorithm::Mespa => {
            let budget: usize =
                trace.steps.iter().map(|s| s.candidates + 1).sum::<usize>() + 1;
            if trace.solve_count > budget {
                return Err(format!(
                    "MESPA solve count {} exceeds per-iteration budget {}",
                    trace.solve_count, budget
                ));
            }
        }
    }
    Ok(())
}

/// Independent verification of an algorithm output: classic-route
/// feasibility, power agreement, priority constraints, and the
/// per-snapshot outage staircase.
fn verify_output(
    topo: &NetworkTopology,
    direction: Direction,
    admitted_users: &[usize],
    powers: &PowerAllocation,
) -> Result<(), String> {
    let assignment =
        SinrAssignment::from_admitted(topo.num_users(), direction, admitted_users.iter().copied());

    let classic = classic_power(topo, &assignment);
    let ClassicOutcome::Feasible(classic_powers) = classic else {
        return Err(format!("classic route rejects the final admitted set {admitted_users:?}"));
    };
    for i in 0..topo.num_users() {
        let a = powers.per_user[i];
        let b = classic_powers.per_user[i];
        if (a - b).abs() > 1e-9 * b.abs().max(1e-300) && (a - b).abs() > 1e-300 {
            return Err(format!(
                "power mismatch for user {i}: reduced {a}, classic {b}"
            ));
        }
    }

    let report = reduced_aggregates(&build_reduced(topo, &assignment));
    if !report.overall {
        return Err("reduced route rejects the final admitted set".into());
    }
    power_from_aggregates(topo, &assignment, &report).map_err(|e| e.to_string())?;

    if !assignment.respects_priorities(topo) {
        return Err("priority constraints violated".into());
    }

    // staircase: a partially served priority level forces zero outage at
    // higher priorities and full outage at lower ones
    let k = topo.num_priorities();
    let mut outage_per_level: Vec<Option<f64>> = Vec::with_capacity(k);
    for q in 1..=k {
        let users = topo.sets().users_of_priority(q);
        if users.is_empty() {
            outage_per_level.push(None);
        } else {
            let supported = users.iter().filter(|&&u| assignment.is_admitted(u)).count();
            outage_per_level.push(Some(1.0 - supported as f64 / users.len() as f64));
        }
    }
    for q in 1..=k {
        let Some(o) = outage_per_level[q - 1] else { continue };
        if o > 0.0 && o < 1.0 {
            for (other, &oo) in outage_per_level.iter().enumerate() {
                let other_q = other + 1;
                let Some(oo) = oo else { continue };
                if other_q < q && oo != 0.0 {
                    return Err(format!(
                        "staircase violated: level {q} partial but level {other_q} outage {oo}"
                    ));
                }
                if other_q > q && oo != 1.0 {
                    return Err(format!(
                        "staircase violated: level {q} partial but level {other_q} outage {oo}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Run the experiment: for each sweep value and snapshot, sample a
/// topology, run the selected algorithm, verify its output, and tally
/// per-tier outage.
pub fn run_experiment(config: &RunConfig) -> Result<OutageStats, HarnessError> {
    config.validate()?;
    let sweep_points: Vec<(f64, ScenarioSpec)> = match &config.sweep {
        None => vec![(0.0, config.scenario.clone())],
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&v| (v, apply_sweep(&config.scenario, sweep.param, v)))
            .collect(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    let mut rows: Vec<SnapshotRow> = Vec::new();
    for (sweep_value, spec) in &sweep_points {
        let outcomes: Vec<(NetworkTopology, SnapshotOutcome)> = pool.install(|| {
            (0..config.snapshots)
                .into_par_iter()
                .map(|k| run_snapshot(spec, config, k, *sweep_value))
                .collect::<Result<Vec<_>, _>>()
        })?;
        for (snapshot, (topo, outcome)) in outcomes.into_iter().enumerate() {
            for tier in 0..spec.tiers.len() {
                let users = if topo.num_users() == 0 {
                    &[][..]
                } else {
                    topo.sets().users_of_tier(tier)
                };
                let total = users.len();
                let supported =
                    users.iter().filter(|&&u| outcome.admitted.get(u) == Some(&true)).count();
                let outage = if total == 0 { 0.0 } else { 1.0 - supported as f64 / total as f64 };
                rows.push(SnapshotRow {
                    sweep_value: *sweep_value,
                    snapshot,
                    tier,
                    priority: spec.tiers[tier].priority,
                    total,
                    supported,
                    outage,
                    solves: outcome.solves,
                    runtime_us: outcome.runtime_us,
                });
            }
        }
    }

    let aggregates = aggregate_rows(&rows);
    Ok(OutageStats { rows, aggregates })
}

/// Collapse snapshot rows into per-(sweep value, tier) means. Pure fold
/// over row content; row order does not affect the result.
pub fn aggregate_rows(rows: &[SnapshotRow]) -> Vec<AggregateRow> {
    use std::collections::BTreeMap;
    #[derive(Default)]
    struct Acc {
        priority: usize,
        snapshots: usize,
        total: f64,
        supported: f64,
        outage: f64,
        solves: f64,
    }
    let mut map: BTreeMap<(u64, usize), (f64, Acc)> = BTreeMap::new();
    for r in rows {
        if r.total == 0 {
            continue;
        }
        // total_cmp-ordered key so negative sweep values sort correctly
        let key = sortable_bits(r.sweep_value);
        let entry = map.entry((key, r.tier)).or_insert_with(|| (r.sweep_value, Acc::default()));
        entry.1.priority = r.priority;
        entry.1.snapshots += 1;
        entry.1.total += r.total as f64;
        entry.1.supported += r.supported as f64;
        entry.1.outage += r.outage;
        entry.1.solves += r.solves as f64;
    }
    map.into_iter()
        .map(|((_, tier), (sweep_value, acc))| {
            let n = acc.snapshots as f64;
            AggregateRow {
                sweep_value,
                tier,
                priority: acc.priority,
                snapshots: acc.snapshots,
                mean_total: acc.total / n,
                mean_supported: acc.supported / n,
                mean_outage: acc.outage / n,
                mean_solves: acc.solves / n,
            }
        })
        .collect()
}

/// Map f64 to u64 preserving total order.
fn sortable_bits(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 0 {
        bits | (1 << 63)
    } else {
        !bits
    }
}

/// Method selector for the feasibility-check entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeascheckMethod {
    Classic,
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeascheckOutcome {
    pub feasible: bool,
    pub singular: bool,
    /// Per-BS aggregates and bounds (reduced method only).
    pub aggregate: Vec<f64>,
    pub upper_bound: Vec<f64>,
    pub powers: Option<PowerAllocation>,
}

/// Check one assignment with either route; used by the CLI.
pub fn feascheck(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    method: FeascheckMethod,
) -> FeascheckOutcome {
    match method {
        FeascheckMethod::Classic => match classic_power(topo, assignment) {
            ClassicOutcome::Feasible(powers) => FeascheckOutcome {
                feasible: true,
                singular: false,
                aggregate: Vec::new(),
                upper_bound: Vec::new(),
                powers: Some(powers),
            },
            ClassicOutcome::Infeasible(kind) => FeascheckOutcome {
                feasible: false,
                singular: kind == crate::feasibility::InfeasibilityKind::Singular,
                aggregate: Vec::new(),
                upper_bound: Vec::new(),
                powers: None,
            },
        },
        FeascheckMethod::Reduced => {
            let system = build_reduced(topo, assignment);
            let report = reduced_aggregates(&system);
            let powers = if report.overall {
                Some(power_from_aggregates(topo, assignment, &report).expect("feasible report"))
            } else {
                None
            };
            FeascheckOutcome {
                feasible: report.overall,
                singular: report.singular,
                aggregate: report.aggregate,
                upper_bound: report.upper_bound,
                powers,
            }
        }
    }
}
