//! Prioritized stepwise user removal: MESPA and MLSPA.
//!
//! Both algorithms start from the all-admitted assignment and, while the
//! reduced feasibility check fails, remove one user per iteration from the
//! lowest admission priority that still has admitted users. They differ
//! only in the removal metric:
//!
//! * MESPA re-solves the reduced system once per candidate and removes the
//!   one that most improves the worst base station.
//! * MLSPA ranks candidates by a first-order sensitivity of the worst
//!   station's aggregate with respect to the candidate's load, needing a
//!   single factorization per iteration.
//!
//! `solve_count` tallies B x B factorizations; one factorization serves
//! both the aggregate solve and the inverse-row needed by the sensitivity
//! metric, so MLSPA performs removals + 1 of them in total.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{
    build_reduced, classic_power, power_from_aggregates, report_from_factorization, BsVerdict,
    ClassicOutcome, FeasibilityReport, ReducedSystem,
};
use crate::model::{Direction, NetworkTopology, PowerAllocation, SinrAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mespa,
    Mlspa,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Mespa => write!(f, "mespa"),
            Algorithm::Mlspa => write!(f, "mlspa"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JpacConfig {
    /// Restrict removal candidates to users served by the worst BS
    /// (falling back to all priority-q users when that set is empty).
    /// Off by default: the removal metrics range over every admitted
    /// user of the active priority level.
    pub restrict_to_candidate_bs: bool,
    /// Include the right-hand-side change in the downlink sensitivity
    /// metric. Off by default: the first-order metric tracks only the
    /// coupling-matrix change.
    pub downlink_rhs_term: bool,
}

impl Default for JpacConfig {
    fn default() -> Self {
        Self { restrict_to_candidate_bs: false, downlink_rhs_term: false }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AdmissionError {
    #[error("candidate BS selection requires an infeasible report")]
    ReportIsFeasible,
    #[error("candidate BS selection is undefined for a singular report")]
    ReportSingular,
    #[error("no removal candidates at priority {0}")]
    NoCandidates(usize),
}

/// One removal decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalStep {
    pub removed_user: usize,
    /// Worst BS this iteration; `None` when the current system was
    /// singular and the boundary fallback picked the candidate.
    pub candidate_bs: Option<usize>,
    pub metric: f64,
    pub priority: usize,
    /// Candidates evaluated this iteration.
    pub candidates: usize,
}

/// Full record of one algorithm run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalTrace {
    pub algorithm: Algorithm,
    pub direction: Direction,
    pub steps: Vec<RemovalStep>,
    pub admitted: Vec<usize>,
    pub powers: PowerAllocation,
    /// Number of B x B factorizations performed.
    pub solve_count: usize,
}

impl RemovalTrace {
    pub fn removals(&self) -> usize {
        self.steps.len()
    }
}

/// Pick the BS with the maximum infeasibility measure. Lower-bound
/// violations (negative aggregate) take precedence over cap violations;
/// among negative aggregates the one closest to zero wins, among cap
/// violations the largest gap wins. Ties break to the lowest BS index.
pub fn select_candidate_bs(report: &FeasibilityReport) -> Result<usize, AdmissionError> {
    if report.singular {
        return Err(AdmissionError::ReportSingular);
    }
    if report.overall {
        return Err(AdmissionError::ReportIsFeasible);
    }
    let mut best: Option<(usize, f64)> = None;
    for (m, &verdict) in report.verdicts.iter().enumerate() {
        if verdict == BsVerdict::LowerViolation {
            let value = report.aggregate[m];
            if best.map_or(true, |(_, v)| value > v) {
                best = Some((m, value));
            }
        }
    }
    if let Some((m, _)) = best {
        return Ok(m);
    }
    for (m, &verdict) in report.verdicts.iter().enumerate() {
        if verdict == BsVerdict::UpperViolation {
            let gap = report.aggregate[m] - report.upper_bound[m];
            if best.map_or(true, |(_, v)| gap > v) {
                best = Some((m, gap));
            }
        }
    }
    Ok(best.expect("infeasible report has at least one violating BS").0)
}

/// Candidate pool for one removal iteration: admitted users at priority
/// `q`, optionally narrowed to the worst BS's own users.
fn candidate_pool(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    q: usize,
    n_star: Option<usize>,
    config: &JpacConfig,
) -> Vec<usize> {
    let base: Vec<usize> = topo
        .sets()
        .users_of_priority(q)
        .iter()
        .copied()
        .filter(|&u| assignment.is_admitted(u))
        .collect();
    if config.restrict_to_candidate_bs {
        if let Some(n) = n_star {
            let restricted: Vec<usize> =
                base.iter().copied().filter(|&u| topo.serving_bs(u) == n).collect();
            if !restricted.is_empty() {
                return restricted;
            }
        }
    }
    base
}

fn highest_active_priority(topo: &NetworkTopology, assignment: &SinrAssignment) -> Option<usize> {
    (1..=topo.num_priorities())
        .rev()
        .find(|&q| topo.sets().users_of_priority(q).iter().any(|&u| assignment.is_admitted(u)))
}

/// MESPA removal metric over an explicit candidate pool. Each candidate
/// costs one reduced solve on the assignment without it. Candidates whose
/// removal leaves the worst BS's aggregate nonnegative compete on
/// (aggregate - bound); otherwise the most negative aggregate wins.
/// A candidate whose removal is itself singular is skipped unless nothing
/// else remains. Returns (user, metric, solves spent).
fn mespa_pick(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    candidates: &[usize],
    n_star: usize,
) -> (usize, f64, usize) {
    let mut solves = 0;
    let mut recovering: Option<(usize, f64)> = None; // aggregate >= 0: key = aggregate - bound
    let mut sinking: Option<(usize, f64)> = None; // aggregate < 0: key = aggregate
    for &i in candidates {
        let mut trial = assignment.clone();
        trial.remove(i);
        let sys = build_reduced(topo, &trial);
        solves += 1;
        let report = match sys.matrix().factorize() {
            Err(_) => continue,
            Ok(lu) => FeasibilityReport::from_solution(&sys, lu.solve(sys.rhs())),
        };
        let value = report.aggregate[n_star];
        if value >= 0.0 {
            let key = value - report.upper_bound[n_star];
            if recovering.map_or(true, |(_, best)| key < best) {
                recovering = Some((i, key));
            }
        } else if sinking.map_or(true, |(_, best)| value < best) {
            sinking = Some((i, value));
        }
    }
    let (user, metric) = recovering
        .or(sinking)
        .unwrap_or((candidates[0], f64::NAN)); // every removal singular: take the lowest index
    (user, metric, solves)
}

/// Public form of the MESPA removal metric (one reduced solve per
/// candidate, candidates = admitted users at priority `q`).
pub fn mespa_removal_candidate(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    q: usize,
    n_star: usize,
) -> Result<usize, AdmissionError> {
    let candidates = candidate_pool(topo, assignment, q, Some(n_star), &JpacConfig::default());
    if candidates.is_empty() {
        return Err(AdmissionError::NoCandidates(q));
    }
    Ok(mespa_pick(topo, assignment, &candidates, n_star).0)
}

/// First-order prediction of the change in `Phi[n_star]` when `user` is
/// removed. Removing a user adds `theta_i`-scaled entries to column `b_i`
/// of `A = I - H`, so the prediction is
/// `-Phi[b_i] * sum_m invrow[m] * dA[m]` with `dA[m] = theta_i` at the
/// serving BS and `(h(m,i)/h(b_i,i)) theta_i` elsewhere. Only the
/// magnitude feeds the removal ranking.
pub fn mlspa_sensitivity_uplink(
    topo: &NetworkTopology,
    system: &ReducedSystem,
    phi: &[f64],
    inv_row: &[f64],
    user: usize,
) -> f64 {
    let theta = system.theta()[user];
    if theta == 0.0 {
        return 0.0;
    }
    let bs = topo.serving_bs(user);
    let serving = topo.uplink_gain(bs, user);
    let mut acc = 0.0;
    for m in 0..topo.num_bs() {
        let ratio = if m == bs { 1.0 } else { topo.uplink_gain(m, user) / serving };
        acc += inv_row[m] * ratio * theta;
    }
    -phi[bs] * acc
}

/// Downlink analogue. Removing a user perturbs row `b_i` of the coupling
/// matrix, so a single inverse entry scales the row inner product:
/// `-invrow[b_i] * sum_n P[n] * dA[n]` with `dA[n] = theta_i` at the
/// serving BS and `(h(i,n)/h(i,b_i)) theta_i` elsewhere. When
/// `include_rhs_term` is set the metric also tracks the noise-sum entry
/// the removal deletes from the right-hand side.
pub fn mlspa_sensitivity_downlink(
    topo: &NetworkTopology,
    system: &ReducedSystem,
    totals: &[f64],
    inv_row: &[f64],
    user: usize,
    include_rhs_term: bool,
) -> f64 {
    let theta = system.theta()[user];
    if theta == 0.0 {
        return 0.0;
    }
    let bs = topo.serving_bs(user);
    let serving = topo.downlink_gain(user, bs);
    let mut acc = 0.0;
    for n in 0..topo.num_bs() {
        let ratio = if n == bs { 1.0 } else { topo.downlink_gain(user, n) / serving };
        acc += totals[n] * ratio * theta;
    }
    if include_rhs_term {
        acc += theta * topo.downlink_noise(user) / serving;
    }
    -inv_row[bs] * acc
}

fn mlspa_pick(
    topo: &NetworkTopology,
    system: &ReducedSystem,
    report: &FeasibilityReport,
    inv_row: &[f64],
    candidates: &[usize],
    config: &JpacConfig,
) -> (usize, f64) {
    let mut best = (candidates[0], f64::NEG_INFINITY, 0.0);
    for &i in candidates {
        let delta = match system.direction() {
            Direction::Uplink => {
                mlspa_sensitivity_uplink(topo, system, &report.aggregate, inv_row, i)
            }
            Direction::Downlink => mlspa_sensitivity_downlink(
                topo,
                system,
                &report.aggregate,
                inv_row,
                i,
                config.downlink_rhs_term,
            ),
        };
        if delta.abs() > best.1 {
            best = (i, delta.abs(), delta);
        }
    }
    (best.0, best.2)
}

/// Boundary fallback: with a singular current system the aggregates carry
/// no ranking information, so shed the heaviest load factor.
fn singular_pick(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    candidates: &[usize],
) -> (usize, f64) {
    let mut best = (candidates[0], f64::NEG_INFINITY);
    for &i in candidates {
        let theta = assignment.theta(topo, i);
        if theta > best.1 {
            best = (i, theta);
        }
    }
    best
}

pub fn run_mespa(topo: &NetworkTopology, direction: Direction) -> RemovalTrace {
    run_with_config(topo, direction, Algorithm::Mespa, &JpacConfig::default())
}

pub fn run_mlspa(topo: &NetworkTopology, direction: Direction) -> RemovalTrace {
    run_with_config(topo, direction, Algorithm::Mlspa, &JpacConfig::default())
}

/// Shared removal loop. Starts from the all-admitted assignment, checks
/// feasibility, and removes one user per iteration from the lowest active
/// priority until the assignment is feasible (the empty assignment always
/// is, so the loop terminates after at most M removals).
pub fn run_with_config(
    topo: &NetworkTopology,
    direction: Direction,
    algorithm: Algorithm,
    config: &JpacConfig,
) -> RemovalTrace {
    let mut assignment = SinrAssignment::all(topo.num_users(), direction);
    let mut steps: Vec<RemovalStep> = Vec::new();
    let mut solve_count = 0usize;

    let final_state = loop {
        let system = build_reduced(topo, &assignment);
        let factors = system.matrix().factorize();
        solve_count += 1;
        let report = report_from_factorization(&system, &factors);
        if report.overall {
            break Some((system, report));
        }
        let Some(q) = highest_active_priority(topo, &assignment) else {
            break None; // empty yet infeasible: cannot happen, bail defensively
        };
        let (removed, candidate_bs, metric, pool_len) = if report.singular {
            let pool = candidate_pool(topo, &assignment, q, None, config);
            let (user, metric) = singular_pick(topo, &assignment, &pool);
            (user, None, metric, pool.len())
        } else {
            let n_star = select_candidate_bs(&report).expect("report is infeasible, not singular");
            let pool = candidate_pool(topo, &assignment, q, Some(n_star), config);
            match algorithm {
                Algorithm::Mespa => {
                    let (user, metric, spent) = mespa_pick(topo, &assignment, &pool, n_star);
                    solve_count += spent;
                    (user, Some(n_star), metric, pool.len())
                }
                Algorithm::Mlspa => {
                    let lu = factors.as_ref().expect("non-singular report implies factors");
                    let inv_row = lu.inverse_row(n_star);
                    let (user, metric) = mlspa_pick(topo, &system, &report, &inv_row, &pool, config);
                    (user, Some(n_star), metric, pool.len())
                }
            }
        };
        assignment.remove(removed);
        steps.push(RemovalStep { removed_user: removed, candidate_bs, metric, priority: q, candidates: pool_len });
    };

    let powers = match &final_state {
        Some((_, report)) => power_from_aggregates(topo, &assignment, report)
            .expect("feasible report admits power recovery"),
        None => PowerAllocation::zeros(topo, direction),
    };

    RemovalTrace {
        algorithm,
        direction,
        steps,
        admitted: assignment.admitted_users(),
        powers,
        solve_count,
    }
}

pub const ORACLE_MAX_USERS: usize = 14;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("brute-force enumeration is limited to {ORACLE_MAX_USERS} users, got {0}")]
    TooManyUsers(usize),
}

/// Exhaustive solution of the maximum-feasible-set problem.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub optimal_count: usize,
    pub admitted: Vec<usize>,
    /// Exact-target powers of the returned set; minimal among all power
    /// vectors delivering the targets for that set.
    pub powers: PowerAllocation,
    /// Priority-valid subsets whose feasibility was checked.
    pub subsets_checked: usize,
}

/// Enumerate every subset in the assignment space that satisfies the
/// priority constraints, check each via the classic route, and return a
/// maximum-cardinality feasible set (the first one found, scanning masks
/// upward, so ties break deterministically).
pub fn brute_force_oracle(
    topo: &NetworkTopology,
    direction: Direction,
) -> Result<OracleResult, OracleError> {
    let m = topo.num_users();
    if m > ORACLE_MAX_USERS {
        return Err(OracleError::TooManyUsers(m));
    }
    let priorities: Vec<usize> = (0..m).map(|u| topo.priority_of_user(u)).collect();
    let mut best_count = 0usize;
    let mut best = SinrAssignment::empty(m, direction);
    let mut best_powers = PowerAllocation::zeros(topo, direction);
    let mut subsets_checked = 0usize;

    'mask: for mask in 0u32..(1u32 << m) {
        let admitted_count = mask.count_ones() as usize;
        if admitted_count <= best_count && mask != 0 {
            // still must skip priority-invalid sets, but no need to solve
            // sets that cannot improve the optimum
            continue;
        }
        // priority space: admitting anyone at level q requires every user
        // at every level above q
        let mut q_max = 0usize;
        for u in 0..m {
            if mask & (1 << u) != 0 {
                q_max = q_max.max(priorities[u]);
            }
        }
        for u in 0..m {
            if priorities[u] < q_max && mask & (1 << u) == 0 {
                continue 'mask;
            }
        }
        let assignment =
            SinrAssignment::from_admitted(m, direction, (0..m).filter(|&u| mask & (1 << u) != 0));
        subsets_checked += 1;
        if let ClassicOutcome::Feasible(powers) = classic_power(topo, &assignment) {
            best_count = admitted_count;
            best = assignment;
            best_powers = powers;
        }
    }

    Ok(OracleResult {
        optimal_count: best_count,
        admitted: best.admitted_users(),
        powers: best_powers,
        subsets_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::reduced_aggregates;
    use crate::model::{testutil::single_bs, TopologyData};

    fn report_with(aggregate: Vec<f64>, upper_bound: Vec<f64>) -> FeasibilityReport {
        let verdicts = aggregate
            .iter()
            .zip(&upper_bound)
            .map(|(&v, &b)| {
                if v < 0.0 {
                    BsVerdict::LowerViolation
                } else if v > b {
                    BsVerdict::UpperViolation
                } else {
                    BsVerdict::Feasible
                }
            })
            .collect::<Vec<_>>();
        let overall = verdicts.iter().all(|&v| v == BsVerdict::Feasible);
        FeasibilityReport {
            direction: Direction::Uplink,
            singular: false,
            aggregate,
            upper_bound,
            verdicts,
            overall,
        }
    }

    #[test]
    fn candidate_bs_lower_violations_pick_least_negative() {
        let report = report_with(vec![-2.0, -10.0], vec![100.0, 100.0]);
        assert_eq!(select_candidate_bs(&report).unwrap(), 0);
    }

    #[test]
    fn candidate_bs_upper_violations_pick_largest_gap() {
        let report = report_with(vec![5.0, 9.0], vec![4.0, 4.0]);
        assert_eq!(select_candidate_bs(&report).unwrap(), 1);
    }

    #[test]
    fn candidate_bs_lower_beats_upper() {
        let report = report_with(vec![-1.0, 7.0], vec![100.0, 4.0]);
        assert_eq!(select_candidate_bs(&report).unwrap(), 0);
    }

    #[test]
    fn candidate_bs_rejects_feasible_report() {
        let report = report_with(vec![1.0], vec![4.0]);
        assert_eq!(select_candidate_bs(&report).unwrap_err(), AdmissionError::ReportIsFeasible);
    }

    #[test]
    fn mespa_candidate_first_branch_tie_breaks_low() {
        // targets {1, 1, 0.2}, generous caps. Removing user 2 leaves the
        // boundary (singular, skipped); removing user 0 or 1 leaves
        // Phi = 3N >= 0, identical metrics, so the tie goes to user 0.
        let topo = single_bs(&[1.0, 1.0, 1.0], 1.0, 1e6, &[1.0, 1.0, 0.2]);
        let asg = SinrAssignment::all(3, Direction::Uplink);
        let picked = mespa_removal_candidate(&topo, &asg, 1, 0).unwrap();
        assert_eq!(picked, 0);
    }

    #[test]
    fn mespa_candidate_second_branch_most_negative() {
        // four unit-target users: any removal leaves theta sum 1.5,
        // Phi(A \ {i}) = N / (1 - 1.5) = -2N for every candidate, so the
        // second branch ties and the lowest index wins.
        let topo = single_bs(&[1.0; 4], 1.0, 1e6, &[1.0; 4]);
        let asg = SinrAssignment::all(4, Direction::Uplink);
        let (user, metric, solves) = mespa_pick(&topo, &asg, &[0, 1, 2, 3], 0);
        assert_eq!(user, 0);
        assert!((metric - (-2.0)).abs() < 1e-12);
        assert_eq!(solves, 4);
    }

    #[test]
    fn mespa_candidate_singleton_pool() {
        let topo = single_bs(&[1.0, 1.0], 1.0, 1e6, &[1.0, 1.0]);
        let mut asg = SinrAssignment::all(2, Direction::Uplink);
        asg.remove(0);
        // only user 1 remains as a candidate; it is returned regardless
        let (user, _, _) = mespa_pick(&topo, &asg, &[1], 0);
        assert_eq!(user, 1);
    }

    #[test]
    fn uplink_sensitivity_scalar_closed_form() {
        // B = 1: |dPhi_i| = Phi * theta_i / (1 - sum theta)
        let topo = single_bs(&[1.0, 1.0], 1.0, 1e6, &[0.4, 0.2]);
        let asg = SinrAssignment::all(2, Direction::Uplink);
        let sys = build_reduced(&topo, &asg);
        let lu = sys.matrix().factorize().unwrap();
        let report = FeasibilityReport::from_solution(&sys, lu.solve(sys.rhs()));
        let inv_row = lu.inverse_row(0);
        let sum_theta = sys.theta().iter().sum::<f64>();
        for i in 0..2 {
            let got = mlspa_sensitivity_uplink(&topo, &sys, &report.aggregate, &inv_row, i);
            let expect = report.aggregate[0] * sys.theta()[i] / (1.0 - sum_theta);
            assert!((got.abs() - expect.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn sensitivity_zero_for_removed_user() {
        let topo = single_bs(&[1.0, 1.0], 1.0, 1e6, &[0.4, 0.2]);
        let mut asg = SinrAssignment::all(2, Direction::Uplink);
        asg.remove(1);
        let sys = build_reduced(&topo, &asg);
        let lu = sys.matrix().factorize().unwrap();
        let report = FeasibilityReport::from_solution(&sys, lu.solve(sys.rhs()));
        let inv_row = lu.inverse_row(0);
        assert_eq!(mlspa_sensitivity_uplink(&topo, &sys, &report.aggregate, &inv_row, 1), 0.0);
    }

    fn two_bs_random(seed: u64, targets: f64) -> NetworkTopology {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = 6;
        let b = 2;
        let serving: Vec<usize> = (0..m).map(|i| i % b).collect();
        let mut up = vec![0.0; b * m];
        let mut down = vec![0.0; m * b];
        for i in 0..m {
            for s in 0..b {
                let base: f64 = rng.random_range(0.1..2.0);
                let gain = if s == serving[i] { base * 10.0 } else { base * 0.1 };
                up[s * m + i] = gain;
                down[i * b + s] = gain;
            }
        }
        NetworkTopology::build(TopologyData {
            num_users: m,
            num_bs: b,
            num_tiers: 1,
            num_priorities: 1,
            serving_bs: serving,
            tier_of_bs: vec![0; b],
            priority_of_tier: vec![1],
            uplink_gain: up,
            downlink_gain: down,
            uplink_noise: vec![1.0; b],
            downlink_noise: vec![1.0; m],
            p_max: vec![1e6; m],
            bs_p_max: vec![1e9; b],
            target_sinr_up: vec![targets; m],
            target_sinr_down: vec![targets; m],
        })
        .unwrap()
    }

    /// Finite-difference-style check: with light load (theta <= 0.05) the
    /// first-order prediction lands within 10% of the exact recomputation.
    #[test]
    fn uplink_sensitivity_matches_exact_recompute_at_light_load() {
        for seed in 0..20u64 {
            // target 0.05 -> theta ~ 0.0476
            let topo = two_bs_random(seed, 0.05);
            let asg = SinrAssignment::all(6, Direction::Uplink);
            let sys = build_reduced(&topo, &asg);
            let lu = sys.matrix().factorize().unwrap();
            let report = FeasibilityReport::from_solution(&sys, lu.solve(sys.rhs()));
            for n_star in 0..2 {
                let inv_row = lu.inverse_row(n_star);
                for i in 0..6 {
                    let predicted =
                        mlspa_sensitivity_uplink(&topo, &sys, &report.aggregate, &inv_row, i);
                    let mut without = asg.clone();
                    without.remove(i);
                    let exact_report = reduced_aggregates(&build_reduced(&topo, &without));
                    let exact = exact_report.aggregate[n_star] - report.aggregate[n_star];
                    assert!(
                        (predicted - exact).abs() <= 0.10 * exact.abs(),
                        "seed {seed} user {i} bs {n_star}: predicted {predicted}, exact {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn downlink_sensitivity_matches_exact_recompute_at_light_load() {
        for seed in 0..20u64 {
            let topo = two_bs_random(seed, 0.05);
            let asg = SinrAssignment::all(6, Direction::Downlink);
            let sys = build_reduced(&topo, &asg);
            let lu = sys.matrix().factorize().unwrap();
            let report = FeasibilityReport::from_solution(&sys, lu.solve(sys.rhs()));
            for n_star in 0..2 {
                let inv_row = lu.inverse_row(n_star);
                for i in 0..6 {
                    let predicted = mlspa_sensitivity_downlink(
                        &topo,
                        &sys,
                        &report.aggregate,
                        &inv_row,
                        i,
                        false,
                    );
                    let mut without = asg.clone();
                    without.remove(i);
                    let exact_report = reduced_aggregates(&build_reduced(&topo, &without));
                    let exact = exact_report.aggregate[n_star] - report.aggregate[n_star];
                    assert!(
                        (predicted - exact).abs() <= 0.10 * exact.abs(),
                        "seed {seed} user {i} bs {n_star}: predicted {predicted}, exact {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn downlink_scalar_sensitivity_magnitude() {
        // B = 1: |dP_i| = P * theta_i / (1 - sum theta)
        let topo = single_bs(&[1.0, 0.5], 1.0, 1e6, &[0.3, 0.2]);
        let asg = SinrAssignment::all(2, Direction::Downlink);
        let sys = build_reduced(&topo, &asg);
        let lu = sys.matrix().factorize().unwrap();
        let report = FeasibilityReport::from_solution(&sys, lu.solve(sys.rhs()));
        let inv_row = lu.inverse_row(0);
        let sum_theta = sys.theta().iter().sum::<f64>();
        for i in 0..2 {
            let got =
                mlspa_sensitivity_downlink(&topo, &sys, &report.aggregate, &inv_row, i, false);
            let expect = report.aggregate[0] * sys.theta()[i] / (1.0 - sum_theta);
            assert!((got.abs() - expect.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn feasible_instance_needs_no_removals() {
        let topo = single_bs(&[1.0, 1.0], 1.0, 10.0, &[0.2, 0.2]);
        for algo in [Algorithm::Mespa, Algorithm::Mlspa] {
            let trace = run_with_config(&topo, Direction::Uplink, algo, &JpacConfig::default());
            assert!(trace.steps.is_empty());
            assert_eq!(trace.admitted, vec![0, 1]);
            assert_eq!(trace.solve_count, 1);
        }
    }

    fn two_tier_two_user_topo() -> NetworkTopology {
        // user 0 high priority, user 1 low; jointly on the boundary
        // (both unit targets on one effective cell), each alone feasible
        NetworkTopology::build(TopologyData {
            num_users: 2,
            num_bs: 2,
            num_tiers: 2,
            num_priorities: 2,
            serving_bs: vec![0, 1],
            tier_of_bs: vec![0, 1],
            priority_of_tier: vec![1, 2],
            uplink_gain: vec![1.0, 1.0, 1.0, 1.0],
            downlink_gain: vec![1.0, 1.0, 1.0, 1.0],
            uplink_noise: vec![1.0, 1.0],
            downlink_noise: vec![1.0, 1.0],
            p_max: vec![10.0, 10.0],
            bs_p_max: vec![10.0, 10.0],
            target_sinr_up: vec![1.0, 1.0],
            target_sinr_down: vec![1.0, 1.0],
        })
        .unwrap()
    }

    #[test]
    fn mespa_removes_low_priority_user_first() {
        let topo = two_tier_two_user_topo();
        let trace = run_mespa(&topo, Direction::Uplink);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].removed_user, 1);
        assert_eq!(trace.steps[0].priority, 2);
        assert_eq!(trace.admitted, vec![0]);
    }

    #[test]
    fn mlspa_removes_largest_theta_first_single_cell() {
        // single priority, single cell: the largest target carries the
        // largest load factor and goes first
        let topo = single_bs(&[1.0, 1.0, 1.0], 1.0, 1e6, &[0.8, 2.0, 0.5]);
        let trace = run_mlspa(&topo, Direction::Uplink);
        assert!(!trace.steps.is_empty());
        assert_eq!(trace.steps[0].removed_user, 1);
    }

    #[test]
    fn traces_satisfy_feasibility_and_priorities() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let targets: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..2.0)).collect();
            let gains: Vec<f64> = (0..5).map(|_| rng.random_range(0.5..2.0)).collect();
            let topo = single_bs(&gains, 1.0, 2.0, &targets);
            for direction in [Direction::Uplink, Direction::Downlink] {
                for algo in [Algorithm::Mespa, Algorithm::Mlspa] {
                    let trace = run_with_config(&topo, direction, algo, &JpacConfig::default());
                    assert!(trace.removals() <= 5);
                    let asg = SinrAssignment::from_admitted(
                        5,
                        direction,
                        trace.admitted.iter().copied(),
                    );
                    assert!(classic_power(&topo, &asg).is_feasible());
                    assert!(asg.respects_priorities(&topo));
                }
            }
        }
    }

    #[test]
    fn trace_serialization_round_trips() {
        let topo = two_tier_two_user_topo();
        let trace = run_mespa(&topo, Direction::Uplink);
        let json = serde_json::to_string(&trace).unwrap();
        let back: RemovalTrace = serde_json::from_str(&json).unwrap();
        assert_eq!(trace, back);
    }

    #[test]
    fn oracle_fully_feasible_admits_everyone() {
        let topo = single_bs(&[1.0, 1.0], 1.0, 10.0, &[0.2, 0.2]);
        let res = brute_force_oracle(&topo, Direction::Uplink).unwrap();
        assert_eq!(res.optimal_count, 2);
        assert_eq!(res.admitted, vec![0, 1]);
    }

    #[test]
    fn oracle_boundary_pair_admits_one() {
        let topo = single_bs(&[1.0, 1.0], 1.0, 10.0, &[1.0, 1.0]);
        let res = brute_force_oracle(&topo, Direction::Uplink).unwrap();
        assert_eq!(res.optimal_count, 1);
    }

    #[test]
    fn oracle_respects_priority_space() {
        // high-priority user needs p = 40 > cap (infeasible alone),
        // low-priority user alone is feasible but not priority-valid
        let topo = NetworkTopology::build(TopologyData {
            num_users: 2,
            num_bs: 2,
            num_tiers: 2,
            num_priorities: 2,
            serving_bs: vec![0, 1],
            tier_of_bs: vec![0, 1],
            priority_of_tier: vec![1, 2],
            uplink_gain: vec![0.1, 0.0, 0.0, 1.0],
            downlink_gain: vec![0.1, 0.0, 0.0, 1.0],
            uplink_noise: vec![1.0, 1.0],
            downlink_noise: vec![1.0, 1.0],
            p_max: vec![1.0, 1.0],
            bs_p_max: vec![1.0, 1.0],
            target_sinr_up: vec![4.0, 0.5],
            target_sinr_down: vec![4.0, 0.5],
        })
        .unwrap();
        // {user1} alone is feasible in isolation...
        let lone = SinrAssignment::from_admitted(2, Direction::Uplink, [1]);
        assert!(classic_power(&topo, &lone).is_feasible());
        // ...but the oracle must reject it: admitting priority 2 requires
        // admitting all of priority 1, and user 0 cannot be served
        let res = brute_force_oracle(&topo, Direction::Uplink).unwrap();
        assert_eq!(res.optimal_count, 0);
        assert!(res.admitted.is_empty());
    }

    #[test]
    fn oracle_rejects_oversized_instances() {
        let topo = single_bs(&[1.0; 15], 1.0, 10.0, &[0.01; 15]);
        assert_eq!(
            brute_force_oracle(&topo, Direction::Uplink).unwrap_err(),
            OracleError::TooManyUsers(15)
        );
    }

    #[test]
    fn solve_counts_match_accounting() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let targets: Vec<f64> = (0..6).map(|_| rng.random_range(0.2..1.5)).collect();
            let gains: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..2.0)).collect();
            let topo = single_bs(&gains, 1.0, 3.0, &targets);
            let mespa = run_mespa(&topo, Direction::Uplink);
            let expected: usize =
                mespa.steps.iter().map(|s| s.candidates + 1).sum::<usize>() + 1;
            assert_eq!(mespa.solve_count, expected);
            let mlspa = run_mlspa(&topo, Direction::Uplink);
            assert_eq!(mlspa.solve_count, mlspa.removals() + 1);
            assert!(mlspa.solve_count <= 2 * (mlspa.removals() + 1));
            assert!(mlspa.solve_count <= topo.num_users() + 1);
        }
    }
}
