//! Joint power and admission control for prioritized multi-tier underlay
//! cellular networks.
//!
//! The library answers two questions about a network snapshot:
//!
//! 1. **Feasibility** — can a given set of users all be served at their
//!    exact target SINRs within the power limits? [`feasibility`] offers
//!    the classic per-user check (an M x M solve) and an equivalent
//!    reduced check over per-base-station aggregates (a B x B solve plus
//!    an O(MB) assembly), which is what makes stepwise admission control
//!    cheap when B is much smaller than M.
//! 2. **Admission** — when the answer is no, which users should be shed?
//!    [`admission`] implements two prioritized removal algorithms, MESPA
//!    (exact per-candidate re-solve) and MLSPA (first-order sensitivity
//!    ranking), plus a brute-force oracle for small instances.
//!
//! [`scenario`] generates random multi-tier snapshots (Poisson user
//! placement, log-distance path gains with log-normal shadowing) and
//! [`harness`] runs seeded Monte Carlo sweeps with CSV output.
//!
//! Start with the runnable examples: `feasibility_check`,
//! `admission_trace`, `oracle_comparison`, `snapshot_sampling`,
//! `sensitivity_probe`, and `three_tier_sweep`.

pub mod admission;
pub mod feasibility;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod scenario;
