//! Feasibility checking for SINR assignments, two ways.
//!
//! The classic route solves the M-dimensional per-user system
//! `(I - F) p = U` and checks every power against its cap. The reduced
//! route solves a B-dimensional system over per-base-station aggregates
//! instead: uplink `Phi_m` (total received power plus noise at BS m) or
//! downlink `P_m` (total transmit power of BS m). The two routes agree
//! exactly on verdicts and, when feasible, on powers; the classic route
//! is the oracle for the reduced one throughout the test suite.
//!
//! Note on the downlink coupling matrix: row m of `H` is built from BS m's
//! own users with gain ratios `h(i,n)/h(i,m)`, the form the power-sum
//! derivation actually yields. The column-indexed variant that floats
//! around does not reproduce the per-user system and fails the oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Direction, NetworkTopology, PowerAllocation, SinrAssignment};
use crate::numerics::{DenseMatrix, LuFactors};

/// Reduced B x B feasibility system `A x = rhs` with `A = I - H`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    direction: Direction,
    a: DenseMatrix,
    rhs: Vec<f64>,
    theta: Vec<f64>,
    upper_bound: Vec<f64>,
}

impl ReducedSystem {
    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Per-user load factors; zero exactly for non-admitted users.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Per-BS feasible ceiling on the aggregate. Uplink: the cap-induced
    /// bound on Phi (infinite when the BS has no active user). Downlink:
    /// the BS power cap.
    pub fn upper_bound(&self) -> &[f64] {
        &self.upper_bound
    }
}

/// Build the reduced system for the assignment's direction.
pub fn build_reduced(topo: &NetworkTopology, assignment: &SinrAssignment) -> ReducedSystem {
    match assignment.direction() {
        Direction::Uplink => build_reduced_uplink(topo, assignment),
        Direction::Downlink => build_reduced_downlink(topo, assignment),
    }
}

/// Uplink reduced system: `H[m][m] = sum_{i in cell m} theta_i`,
/// `H[m][n] = sum_{i in cell n} (h(m,i)/h(n,i)) theta_i`, rhs = noise.
pub fn build_reduced_uplink(topo: &NetworkTopology, assignment: &SinrAssignment) -> ReducedSystem {
    let b = topo.num_bs();
    let theta: Vec<f64> = (0..topo.num_users()).map(|i| assignment.theta(topo, i)).collect();
    let mut a = DenseMatrix::identity(b);
    for n in 0..b {
        for &i in topo.sets().users_of_bs(n) {
            if theta[i] == 0.0 {
                continue;
            }
            let serving = topo.uplink_gain(n, i);
            for m in 0..b {
                let h = if m == n { 1.0 } else { topo.uplink_gain(m, i) / serving };
                a.set(m, n, a.get(m, n) - h * theta[i]);
            }
        }
    }
    let rhs: Vec<f64> = (0..b).map(|m| topo.uplink_noise(m)).collect();
    let upper_bound = uplink_phi_bounds(topo, &theta);
    ReducedSystem { direction: Direction::Uplink, a, rhs, theta, upper_bound }
}

/// Downlink reduced system: row m comes from BS m's own users,
/// `H[m][n] = sum_{i in cell m} (h(i,n)/h(i,m)) theta_i`, and
/// `rhs[m] = sum_{i in cell m} theta_i N_i / h(i,m)`.
pub fn build_reduced_downlink(topo: &NetworkTopology, assignment: &SinrAssignment) -> ReducedSystem {
    let b = topo.num_bs();
    let theta: Vec<f64> = (0..topo.num_users()).map(|i| assignment.theta(topo, i)).collect();
    let mut a = DenseMatrix::identity(b);
    let mut rhs = vec![0.0; b];
    for m in 0..b {
        for &i in topo.sets().users_of_bs(m) {
            if theta[i] == 0.0 {
                continue;
            }
            let serving = topo.downlink_gain(i, m);
            for n in 0..b {
                let h = if n == m { 1.0 } else { topo.downlink_gain(i, n) / serving };
                a.set(m, n, a.get(m, n) - h * theta[i]);
            }
            rhs[m] += theta[i] * topo.downlink_noise(i) / serving;
        }
    }
    let upper_bound: Vec<f64> = (0..b).map(|m| topo.bs_p_max(m)).collect();
    ReducedSystem { direction: Direction::Downlink, a, rhs, theta, upper_bound }
}

/// Cap-induced ceiling on Phi per BS: the tightest
/// `p_max * h(m,i) * (gamma_i + 1) / gamma_i` over the BS's active users.
fn uplink_phi_bounds(topo: &NetworkTopology, theta: &[f64]) -> Vec<f64> {
    (0..topo.num_bs())
        .map(|m| {
            topo.sets()
                .users_of_bs(m)
                .iter()
                .filter(|&&i| theta[i] > 0.0)
                .map(|&i| topo.p_max(i) * topo.uplink_gain(m, i) / theta[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BsVerdict {
    Feasible,
    /// Aggregate below zero. Ranked as the more severe violation: user
    /// removals pull the aggregate up through zero before the cap check
    /// can even apply.
    LowerViolation,
    /// Aggregate above the cap-induced bound.
    UpperViolation,
}

/// Per-BS aggregates, their bounds, and verdicts for one assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub direction: Direction,
    /// True when the feasibility boundary was hit exactly (singular
    /// system); aggregates and verdicts are empty in that case.
    pub singular: bool,
    pub aggregate: Vec<f64>,
    pub upper_bound: Vec<f64>,
    pub verdicts: Vec<BsVerdict>,
    pub overall: bool,
}

impl FeasibilityReport {
    pub fn singular(system: &ReducedSystem) -> Self {
        Self {
            direction: system.direction(),
            singular: true,
            aggregate: Vec::new(),
            upper_bound: system.upper_bound().to_vec(),
            verdicts: Vec::new(),
            overall: false,
        }
    }

    pub fn from_solution(system: &ReducedSystem, aggregate: Vec<f64>) -> Self {
        let verdicts: Vec<BsVerdict> = aggregate
            .iter()
            .zip(system.upper_bound())
            .map(|(&v, &bound)| {
                if v < 0.0 {
                    BsVerdict::LowerViolation
                } else if v > bound {
                    BsVerdict::UpperViolation
                } else {
                    BsVerdict::Feasible
                }
            })
            .collect();
        let overall = verdicts.iter().all(|&v| v == BsVerdict::Feasible);
        Self {
            direction: system.direction(),
            singular: false,
            aggregate,
            upper_bound: system.upper_bound().to_vec(),
            verdicts,
            overall,
        }
    }
}

/// Solve the reduced system and classify each BS. A singular solve is
/// absorbed into the report as an infeasible (boundary) outcome.
pub fn reduced_aggregates(system: &ReducedSystem) -> FeasibilityReport {
    match system.matrix().factorize() {
        Err(_) => FeasibilityReport::singular(system),
        Ok(lu) => FeasibilityReport::from_solution(system, lu.solve(system.rhs())),
    }
}

pub(crate) fn report_from_factorization(
    system: &ReducedSystem,
    factors: &Result<LuFactors, crate::numerics::SolveError>,
) -> FeasibilityReport {
    match factors {
        Err(_) => FeasibilityReport::singular(system),
        Ok(lu) => FeasibilityReport::from_solution(system, lu.solve(system.rhs())),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FeasibilityError {
    #[error("power recovery requires a feasible report")]
    InfeasibleReport,
    #[error("report direction {report} does not match assignment direction {assignment}")]
    DirectionMismatch { report: Direction, assignment: Direction },
}

fn check_recovery_inputs(
    assignment: &SinrAssignment,
    report: &FeasibilityReport,
) -> Result<(), FeasibilityError> {
    if report.direction != assignment.direction() {
        return Err(FeasibilityError::DirectionMismatch {
            report: report.direction,
            assignment: assignment.direction(),
        });
    }
    if !report.overall {
        return Err(FeasibilityError::InfeasibleReport);
    }
    Ok(())
}

/// Recover per-user uplink powers from the aggregates:
/// `p_i = theta_i * Phi_{b_i} / h(b_i, i)`.
pub fn uplink_power_from_aggregates(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    report: &FeasibilityReport,
) -> Result<PowerAllocation, FeasibilityError> {
    check_recovery_inputs(assignment, report)?;
    let per_user: Vec<f64> = (0..topo.num_users())
        .map(|i| {
            let theta = assignment.theta(topo, i);
            if theta == 0.0 {
                0.0
            } else {
                let bs = topo.serving_bs(i);
                theta * report.aggregate[bs] / topo.uplink_gain(bs, i)
            }
        })
        .collect();
    Ok(PowerAllocation::from_per_user(topo, Direction::Uplink, per_user))
}

/// Recover per-link downlink powers from the per-BS totals:
/// `p_i = (theta_i / h(i, b_i)) * (sum_n h(i, n) P_n + N_i)`.
pub fn downlink_power_from_aggregates(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    report: &FeasibilityReport,
) -> Result<PowerAllocation, FeasibilityError> {
    check_recovery_inputs(assignment, report)?;
    let per_user: Vec<f64> = (0..topo.num_users())
        .map(|i| {
            let theta = assignment.theta(topo, i);
            if theta == 0.0 {
                0.0
            } else {
                let bs = topo.serving_bs(i);
                let received: f64 = (0..topo.num_bs())
                    .map(|n| topo.downlink_gain(i, n) * report.aggregate[n])
                    .sum::<f64>()
                    + topo.downlink_noise(i);
                theta * received / topo.downlink_gain(i, bs)
            }
        })
        .collect();
    Ok(PowerAllocation::from_per_user(topo, Direction::Downlink, per_user))
}

pub fn power_from_aggregates(
    topo: &NetworkTopology,
    assignment: &SinrAssignment,
    report: &FeasibilityReport,
) -> Result<PowerAllocation, FeasibilityError> {
    match assignment.direction() {
        Direction::Uplink => uplink_power_from_aggregates(topo, assignment, report),
        Direction::Downlink => downlink_power_from_aggregates(topo, assignment, report),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfeasibilityKind {
    /// The per-user system sits on the feasibility boundary.
    Singular,
    NegativePower,
    UserCapExceeded,
    BsCapExceeded,
}

/// Outcome of the classic per-user feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassicOutcome {
    Feasible(PowerAllocation),
    Infeasible(InfeasibilityKind),
}

impl ClassicOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, ClassicOutcome::Feasible(_))
    }
}

/// Classic M-dimensional route: solve `(I - F) p = U` over the admitted
/// users only (removed users contribute nothing and are struck from the
/// system), then check sign and cap constraints.
pub fn classic_power(topo: &NetworkTopology, assignment: &SinrAssignment) -> ClassicOutcome {
    let direction = assignment.direction();
    let admitted = assignment.admitted_users();
    if admitted.is_empty() {
        return ClassicOutcome::Feasible(PowerAllocation::zeros(topo, direction));
    }

    let k = admitted.len();
    let mut a = DenseMatrix::identity(k);
    let mut u = vec![0.0; k];
    for (row, &i) in admitted.iter().enumerate() {
        let gamma = topo.target_sinr(direction, i);
        let bs = topo.serving_bs(i);
        match direction {
            Direction::Uplink => {
                let serving = topo.uplink_gain(bs, i);
                u[row] = gamma * topo.uplink_noise(bs) / serving;
                for (col, &j) in admitted.iter().enumerate() {
                    if col != row {
                        let f = gamma * topo.uplink_gain(bs, j) / serving;
                        a.set(row, col, -f);
                    }
                }
            }
            Direction::Downlink => {
                let serving = topo.downlink_gain(i, bs);
                u[row] = gamma * topo.downlink_noise(i) / serving;
                for (col, &j) in admitted.iter().enumerate() {
                    if col != row {
                        let f = gamma * topo.downlink_gain(i, topo.serving_bs(j)) / serving;
                        a.set(row, col, -f);
                    }
                }
            }
        }
    }

    let solved = match a.factorize() {
        Err(_) => return ClassicOutcome::Infeasible(InfeasibilityKind::Singular),
        Ok(lu) => lu.solve(&u),
    };

    if solved.iter().any(|&p| p < 0.0) {
        return ClassicOutcome::Infeasible(InfeasibilityKind::NegativePower);
    }

    let mut per_user = vec![0.0; topo.num_users()];
    for (row, &i) in admitted.iter().enumerate() {
        per_user[i] = solved[row];
    }

    match direction {
        Direction::Uplink => {
            if admitted.iter().any(|&i| per_user[i] > topo.p_max(i)) {
                return ClassicOutcome::Infeasible(InfeasibilityKind::UserCapExceeded);
            }
        }
        Direction::Downlink => {
            let alloc = PowerAllocation::from_per_user(topo, direction, per_user);
            for m in 0..topo.num_bs() {
                if alloc.per_bs_total[m] > topo.bs_p_max(m) {
                    return ClassicOutcome::Infeasible(InfeasibilityKind::BsCapExceeded);
                }
            }
            return ClassicOutcome::Feasible(alloc);
        }
    }
    ClassicOutcome::Feasible(PowerAllocation::from_per_user(topo, direction, per_user))
}
