//! Domain types for the prioritized multi-tier network.
//!
//! A [`NetworkTopology`] is an immutable snapshot: users, base stations,
//! tiers, admission priorities, link gains, noise, power caps, and
//! per-user target SINRs. All gains and SINRs are stored linear; dB is
//! accepted only at the IO boundary ([`db_to_linear`]).
//!
//! Priorities are 1-based with 1 = highest; lower-priority users are the
//! first to be sacrificed under overload. Several tiers may share one
//! priority level, so the number of priority levels K never exceeds the
//! number of tiers T.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A user counts as supported when its achieved SINR is at least
/// `target * (1 - SINR_SUPPORT_TOL)`; the exact-target power vector must
/// classify its own admitted users as supported despite round-off.
pub const SINR_SUPPORT_TOL: f64 = 1e-9;

pub fn db_to_linear(db: f64) -> f64 {
    10.0_f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Uplink => write!(f, "uplink"),
            Direction::Downlink => write!(f, "downlink"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("{field}: expected length {expected}, got {got}")]
    DimensionMismatch { field: &'static str, expected: usize, got: usize },
    #[error("user {user}: serving BS {bs} out of range (B = {num_bs})")]
    ServingBsOutOfRange { user: usize, bs: usize, num_bs: usize },
    #[error("BS {bs}: tier {tier} out of range (T = {num_tiers})")]
    TierOutOfRange { bs: usize, tier: usize, num_tiers: usize },
    #[error("tier {tier}: priority {priority} out of range 1..={num_priorities}")]
    PriorityOutOfRange { tier: usize, priority: usize, num_priorities: usize },
    #[error("num_priorities {num_priorities} exceeds num_tiers {num_tiers}")]
    MorePrioritiesThanTiers { num_priorities: usize, num_tiers: usize },
    #[error("user {user}: {direction} serving gain must be strictly positive")]
    ZeroServingGain { user: usize, direction: Direction },
    #[error("{field}[{index}] must be strictly positive, got {value}")]
    NonPositive { field: &'static str, index: usize, value: f64 },
    #[error("{field}[{index}] must be nonnegative and finite, got {value}")]
    InvalidGain { field: &'static str, index: usize, value: f64 },
    #[error("num_bs must be at least 1")]
    NoBaseStations,
    #[error("num_tiers and num_priorities must be at least 1")]
    NoTiers,
}

/// Raw topology fields; the JSON wire format.
///
/// Schema (all indices 0-based, priorities 1-based with 1 = highest):
///
/// ```text
/// num_users        M
/// num_bs           B
/// num_tiers        T
/// num_priorities   K (K <= T)
/// serving_bs       [M]   user -> BS index
/// tier_of_bs       [B]   BS -> tier index
/// priority_of_tier [T]   tier -> priority in 1..=K
/// uplink_gain      [B*M] row-major, entry (m, i) = gain user i -> BS m (linear)
/// downlink_gain    [M*B] row-major, entry (i, m) = gain BS m -> user i (linear)
/// uplink_noise     [B]   Watts
/// downlink_noise   [M]   Watts
/// p_max            [M]   per-user uplink cap, Watts
/// bs_p_max         [B]   per-BS downlink cap, Watts
/// target_sinr_up   [M]   linear, normalized
/// target_sinr_down [M]   linear, normalized
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyData {
    pub num_users: usize,
    pub num_bs: usize,
    pub num_tiers: usize,
    pub num_priorities: usize,
    pub serving_bs: Vec<usize>,
    pub tier_of_bs: Vec<usize>,
    pub priority_of_tier: Vec<usize>,
    pub uplink_gain: Vec<f64>,
    pub downlink_gain: Vec<f64>,
    pub uplink_noise: Vec<f64>,
    pub downlink_noise: Vec<f64>,
    pub p_max: Vec<f64>,
    pub bs_p_max: Vec<f64>,
    pub target_sinr_up: Vec<f64>,
    pub target_sinr_down: Vec<f64>,
}

/// Index sets derived from the topology maps: who belongs to which BS,
/// tier, and priority level.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSets {
    users_of_bs: Vec<Vec<usize>>,
    users_of_tier: Vec<Vec<usize>>,
    users_of_priority: Vec<Vec<usize>>,
    bs_of_tier: Vec<Vec<usize>>,
    bs_of_priority: Vec<Vec<usize>>,
}

impl IndexSets {
    pub fn users_of_bs(&self, bs: usize) -> &[usize] {
        &self.users_of_bs[bs]
    }

    pub fn users_of_tier(&self, tier: usize) -> &[usize] {
        &self.users_of_tier[tier]
    }

    /// Users at priority level `q` (1-based).
    pub fn users_of_priority(&self, q: usize) -> &[usize] {
        &self.users_of_priority[q - 1]
    }

    pub fn bs_of_tier(&self, tier: usize) -> &[usize] {
        &self.bs_of_tier[tier]
    }

    /// Base stations whose users have priority `q` (1-based).
    pub fn bs_of_priority(&self, q: usize) -> &[usize] {
        &self.bs_of_priority[q - 1]
    }
}

/// Immutable, validated network snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyData", into = "TopologyData")]
pub struct NetworkTopology {
    data: TopologyData,
    sets: IndexSets,
}

impl TryFrom<TopologyData> for NetworkTopology {
    type Error = TopologyError;

    fn try_from(data: TopologyData) -> Result<Self, Self::Error> {
        NetworkTopology::build(data)
    }
}

impl From<NetworkTopology> for TopologyData {
    fn from(t: NetworkTopology) -> Self {
        t.data
    }
}

impl NetworkTopology {
    /// Validate raw fields and derive the index sets.
    pub fn build(data: TopologyData) -> Result<Self, TopologyError> {
        let m = data.num_users;
        let b = data.num_bs;
        let t = data.num_tiers;
        let k = data.num_priorities;

        if b == 0 {
            return Err(TopologyError::NoBaseStations);
        }
        if t == 0 || k == 0 {
            return Err(TopologyError::NoTiers);
        }
        if k > t {
            return Err(TopologyError::MorePrioritiesThanTiers { num_priorities: k, num_tiers: t });
        }

        let check_len = |field: &'static str, got: usize, expected: usize| {
            if got != expected {
                Err(TopologyError::DimensionMismatch { field, expected, got })
            } else {
                Ok(())
            }
        };
        check_len("serving_bs", data.serving_bs.len(), m)?;
        check_len("tier_of_bs", data.tier_of_bs.len(), b)?;
        check_len("priority_of_tier", data.priority_of_tier.len(), t)?;
        check_len("uplink_gain", data.uplink_gain.len(), b * m)?;
        check_len("downlink_gain", data.downlink_gain.len(), m * b)?;
        check_len("uplink_noise", data.uplink_noise.len(), b)?;
        check_len("downlink_noise", data.downlink_noise.len(), m)?;
        check_len("p_max", data.p_max.len(), m)?;
        check_len("bs_p_max", data.bs_p_max.len(), b)?;
        check_len("target_sinr_up", data.target_sinr_up.len(), m)?;
        check_len("target_sinr_down", data.target_sinr_down.len(), m)?;

        for (user, &bs) in data.serving_bs.iter().enumerate() {
            if bs >= b {
                return Err(TopologyError::ServingBsOutOfRange { user, bs, num_bs: b });
            }
        }
        for (bs, &tier) in data.tier_of_bs.iter().enumerate() {
            if tier >= t {
                return Err(TopologyError::TierOutOfRange { bs, tier, num_tiers: t });
            }
        }
        for (tier, &q) in data.priority_of_tier.iter().enumerate() {
            if q < 1 || q > k {
                return Err(TopologyError::PriorityOutOfRange { tier, priority: q, num_priorities: k });
            }
        }

        let check_positive = |field: &'static str, values: &[f64]| {
            for (index, &value) in values.iter().enumerate() {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(TopologyError::NonPositive { field, index, value });
                }
            }
            Ok(())
        };
        check_positive("uplink_noise", &data.uplink_noise)?;
        check_positive("downlink_noise", &data.downlink_noise)?;
        check_positive("p_max", &data.p_max)?;
        check_positive("bs_p_max", &data.bs_p_max)?;
        check_positive("target_sinr_up", &data.target_sinr_up)?;
        check_positive("target_sinr_down", &data.target_sinr_down)?;

        let check_gains = |field: &'static str, values: &[f64]| {
            for (index, &value) in values.iter().enumerate() {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(TopologyError::InvalidGain { field, index, value });
                }
            }
            Ok(())
        };
        check_gains("uplink_gain", &data.uplink_gain)?;
        check_gains("downlink_gain", &data.downlink_gain)?;

        for user in 0..m {
            let bs = data.serving_bs[user];
            if data.uplink_gain[bs * m + user] <= 0.0 {
                return Err(TopologyError::ZeroServingGain { user, direction: Direction::Uplink });
            }
            if data.downlink_gain[user * b + bs] <= 0.0 {
                return Err(TopologyError::ZeroServingGain { user, direction: Direction::Downlink });
            }
        }

        let mut users_of_bs = vec![Vec::new(); b];
        let mut users_of_tier = vec![Vec::new(); t];
        let mut users_of_priority = vec![Vec::new(); k];
        for user in 0..m {
            let bs = data.serving_bs[user];
            let tier = data.tier_of_bs[bs];
            users_of_bs[bs].push(user);
            users_of_tier[tier].push(user);
            users_of_priority[data.priority_of_tier[tier] - 1].push(user);
        }
        let mut bs_of_tier = vec![Vec::new(); t];
        let mut bs_of_priority = vec![Vec::new(); k];
        for bs in 0..b {
            let tier = data.tier_of_bs[bs];
            bs_of_tier[tier].push(bs);
            bs_of_priority[data.priority_of_tier[tier] - 1].push(bs);
        }
        let sets = IndexSets { users_of_bs, users_of_tier, users_of_priority, bs_of_tier, bs_of_priority };

        Ok(Self { data, sets })
    }

    pub fn num_users(&self) -> usize {
        self.data.num_users
    }

    pub fn num_bs(&self) -> usize {
        self.data.num_bs
    }

    pub fn num_tiers(&self) -> usize {
        self.data.num_tiers
    }

    pub fn num_priorities(&self) -> usize {
        self.data.num_priorities
    }

    pub fn serving_bs(&self, user: usize) -> usize {
        self.data.serving_bs[user]
    }

    pub fn tier_of_bs(&self, bs: usize) -> usize {
        self.data.tier_of_bs[bs]
    }

    /// Priority of a tier, 1-based, 1 = highest.
    pub fn priority_of_tier(&self, tier: usize) -> usize {
        self.data.priority_of_tier[tier]
    }

    pub fn tier_of_user(&self, user: usize) -> usize {
        self.tier_of_bs(self.serving_bs(user))
    }

    pub fn priority_of_user(&self, user: usize) -> usize {
        self.priority_of_tier(self.tier_of_user(user))
    }

    /// Uplink gain from user `user` toward BS `bs` (linear).
    #[inline]
    pub fn uplink_gain(&self, bs: usize, user: usize) -> f64 {
        self.data.uplink_gain[bs * self.data.num_users + user]
    }

    /// Downlink gain from BS `bs` toward user `user` (linear).
    #[inline]
    pub fn downlink_gain(&self, user: usize, bs: usize) -> f64 {
        self.data.downlink_gain[user * self.data.num_bs + bs]
    }

    pub fn uplink_noise(&self, bs: usize) -> f64 {
        self.data.uplink_noise[bs]
    }

    pub fn downlink_noise(&self, user: usize) -> f64 {
        self.data.downlink_noise[user]
    }

    pub fn p_max(&self, user: usize) -> f64 {
        self.data.p_max[user]
    }

    pub fn bs_p_max(&self, bs: usize) -> f64 {
        self.data.bs_p_max[bs]
    }

    pub fn target_sinr(&self, direction: Direction, user: usize) -> f64 {
        match direction {
            Direction::Uplink => self.data.target_sinr_up[user],
            Direction::Downlink => self.data.target_sinr_down[user],
        }
    }

    pub fn sets(&self) -> &IndexSets {
        &self.sets
    }

    pub fn data(&self) -> &TopologyData {
        &self.data
    }
}

/// An SINR assignment: the admitted set A, with every admitted user pinned
/// to its target SINR and every removed user pinned to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrAssignment {
    direction: Direction,
    admitted: Vec<bool>,
}

impl SinrAssignment {
    pub fn all(num_users: usize, direction: Direction) -> Self {
        Self { direction, admitted: vec![true; num_users] }
    }

    pub fn empty(num_users: usize, direction: Direction) -> Self {
        Self { direction, admitted: vec![false; num_users] }
    }

    pub fn from_admitted<I: IntoIterator<Item = usize>>(
        num_users: usize,
        direction: Direction,
        users: I,
    ) -> Self {
        let mut a = Self::empty(num_users, direction);
        for u in users {
            assert!(u < num_users, "admitted user {u} out of range");
            a.admitted[u] = true;
        }
        a
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn num_users(&self) -> usize {
        self.admitted.len()
    }

    pub fn is_admitted(&self, user: usize) -> bool {
        self.admitted[user]
    }

    pub fn remove(&mut self, user: usize) {
        self.admitted[user] = false;
    }

    pub fn admitted_count(&self) -> usize {
        self.admitted.iter().filter(|&&a| a).count()
    }

    pub fn admitted_users(&self) -> Vec<usize> {
        (0..self.admitted.len()).filter(|&u| self.admitted[u]).collect()
    }

    pub fn admitted_mask(&self) -> &[bool] {
        &self.admitted
    }

    /// Component of the induced SINR vector: the target for admitted users,
    /// zero otherwise.
    pub fn induced_sinr(&self, topo: &NetworkTopology, user: usize) -> f64 {
        if self.admitted[user] {
            topo.target_sinr(self.direction, user)
        } else {
            0.0
        }
    }

    /// Load factor `theta = gamma / (gamma + 1)` of the induced SINR.
    pub fn theta(&self, topo: &NetworkTopology, user: usize) -> f64 {
        let gamma = self.induced_sinr(topo, user);
        gamma / (gamma + 1.0)
    }

    pub fn respects_priorities(&self, topo: &NetworkTopology) -> bool {
        priority_constraints_hold(topo, &self.admitted)
    }
}

/// Per-user transmit powers (uplink) or per-link BS powers (downlink),
/// plus per-BS totals.
///
/// For downlink, `per_bs_total[m]` is the total transmit power of BS m;
/// for uplink it is simply the sum of the cell's user powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub direction: Direction,
    pub per_user: Vec<f64>,
    pub per_bs_total: Vec<f64>,
}

impl PowerAllocation {
    pub fn from_per_user(topo: &NetworkTopology, direction: Direction, per_user: Vec<f64>) -> Self {
        assert_eq!(per_user.len(), topo.num_users());
        let mut per_bs_total = vec![0.0; topo.num_bs()];
        for (user, &p) in per_user.iter().enumerate() {
            per_bs_total[topo.serving_bs(user)] += p;
        }
        Self { direction, per_user, per_bs_total }
    }

    pub fn zeros(topo: &NetworkTopology, direction: Direction) -> Self {
        Self {
            direction,
            per_user: vec![0.0; topo.num_users()],
            per_bs_total: vec![0.0; topo.num_bs()],
        }
    }
}

/// Achieved SINR of `user` under the given power vector.
pub fn achieved_sinr(
    topo: &NetworkTopology,
    powers: &[f64],
    direction: Direction,
    user: usize,
) -> f64 {
    let bs = topo.serving_bs(user);
    match direction {
        Direction::Uplink => {
            let mut interference = topo.uplink_noise(bs);
            for j in 0..topo.num_users() {
                if j != user {
                    interference += topo.uplink_gain(bs, j) * powers[j];
                }
            }
            topo.uplink_gain(bs, user) * powers[user] / interference
        }
        Direction::Downlink => {
            let mut interference = topo.downlink_noise(user);
            for j in 0..topo.num_users() {
                if j != user {
                    interference += topo.downlink_gain(user, topo.serving_bs(j)) * powers[j];
                }
            }
            topo.downlink_gain(user, bs) * powers[user] / interference
        }
    }
}

/// The set of users who attain their target SINR under `powers`, within
/// the relative tolerance [`SINR_SUPPORT_TOL`].
pub fn supported_set(topo: &NetworkTopology, powers: &[f64], direction: Direction) -> Vec<usize> {
    (0..topo.num_users())
        .filter(|&i| {
            achieved_sinr(topo, powers, direction, i)
                >= topo.target_sinr(direction, i) * (1.0 - SINR_SUPPORT_TOL)
        })
        .collect()
}

/// True iff whenever some user at priority q > 1 is marked, every user at
/// every priority level above q (numerically smaller) is marked too.
pub fn priority_constraints_hold(topo: &NetworkTopology, marked: &[bool]) -> bool {
    assert_eq!(marked.len(), topo.num_users());
    let highest = (0..topo.num_users())
        .filter(|&u| marked[u])
        .map(|u| topo.priority_of_user(u))
        .max();
    let Some(q_max) = highest else {
        return true;
    };
    for q in 1..q_max {
        if topo.sets().users_of_priority(q).iter().any(|&u| !marked[u]) {
            return false;
        }
    }
    true
}

/// Priority check on the supported set induced by a power vector.
pub fn priority_constraints_hold_for_powers(
    topo: &NetworkTopology,
    powers: &[f64],
    direction: Direction,
) -> bool {
    let mut marked = vec![false; topo.num_users()];
    for u in supported_set(topo, powers, direction) {
        marked[u] = true;
    }
    priority_constraints_hold(topo, &marked)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Single-tier topology: one BS, `gains[i]` serving-link gains,
    /// shared noise and caps. Handy for single-cell closed forms.
    pub fn single_bs(
        gains_up: &[f64],
        noise: f64,
        p_max: f64,
        targets: &[f64],
    ) -> NetworkTopology {
        let m = gains_up.len();
        NetworkTopology::build(TopologyData {
            num_users: m,
            num_bs: 1,
            num_tiers: 1,
            num_priorities: 1,
            serving_bs: vec![0; m],
            tier_of_bs: vec![0],
            priority_of_tier: vec![1],
            uplink_gain: gains_up.to_vec(),
            downlink_gain: gains_up.to_vec(),
            uplink_noise: vec![noise],
            downlink_noise: vec![noise; m],
            p_max: vec![p_max; m],
            bs_p_max: vec![1e9],
            target_sinr_up: targets.to_vec(),
            target_sinr_down: targets.to_vec(),
        })
        .unwrap()
    }
}
