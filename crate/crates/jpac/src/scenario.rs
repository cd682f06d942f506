//! Random scenario generation: cell geometry, Poisson user placement, the
//! path-gain model, and builders for the stock network layouts.
//!
//! Gains follow a free-space reference at 1 m with a configurable
//! path-loss exponent and log-normal shadowing:
//!
//! ```text
//! gain = (lambda / (4 pi d0))^2 * (d / d0)^(-alpha) * 10^(X / 10)
//! ```
//!
//! with `d` the 3-D distance (clamped below by d0 = 1 m) and
//! `X ~ Normal(0, sigma^2)` in dB. The shadowing deviation is 6 dB for
//! links crossing a femtocell wall (exactly one endpoint inside an
//! indoor cell) and 4 dB otherwise.
//!
//! Snapshots draw from a counter-based stream: `(seed, snapshot index)`
//! fully determines the topology, so snapshots are order-independent and
//! can be generated concurrently.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{db_to_linear, NetworkTopology, TopologyData};

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
/// Reference distance of the path-gain model; also the minimum distance.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;
pub const DEFAULT_NOISE_W: f64 = 5e-13;
pub const DEFAULT_CARRIER_HZ: f64 = 1.9e9;
pub const DEFAULT_PATH_LOSS_EXPONENT: f64 = 3.0;
pub const DEFAULT_SHADOWING_DB: f64 = 4.0;
pub const DEFAULT_FEMTO_SHADOWING_DB: f64 = 6.0;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "shape")]
pub enum CellGeometry {
    Rectangle { center: (f64, f64), width: f64, height: f64 },
    Disk { center: (f64, f64), radius: f64 },
    /// Flat-top hexagon of the given circumradius.
    Hexagon { center: (f64, f64), radius: f64 },
}

impl CellGeometry {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        match *self {
            CellGeometry::Rectangle { center, width, height } => {
                (p.0 - center.0).abs() <= width / 2.0 && (p.1 - center.1).abs() <= height / 2.0
            }
            CellGeometry::Disk { center, radius } => {
                let dx = p.0 - center.0;
                let dy = p.1 - center.1;
                dx * dx + dy * dy <= radius * radius
            }
            CellGeometry::Hexagon { center, radius } => {
                let x = (p.0 - center.0).abs();
                let y = (p.1 - center.1).abs();
                y <= SQRT3 / 2.0 * radius && SQRT3 * x + y <= SQRT3 * radius
            }
        }
    }

    /// Uniform sample inside the region.
    pub fn sample(&self, rng: &mut impl Rng) -> (f64, f64) {
        match *self {
            CellGeometry::Rectangle { center, width, height } => (
                center.0 + rng.random_range(-width / 2.0..=width / 2.0),
                center.1 + rng.random_range(-height / 2.0..=height / 2.0),
            ),
            CellGeometry::Disk { center, radius } => {
                let r = radius * rng.random::<f64>().sqrt();
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                (center.0 + r * angle.cos(), center.1 + r * angle.sin())
            }
            CellGeometry::Hexagon { center, radius } => {
                // rejection from the bounding box; acceptance ~ 3/4
                for _ in 0..100_000 {
                    let p = (
                        center.0 + rng.random_range(-radius..=radius),
                        center.1 + rng.random_range(-SQRT3 / 2.0 * radius..=SQRT3 / 2.0 * radius),
                    );
                    if self.contains(p) {
                        return p;
                    }
                }
                unreachable!("hexagon rejection sampling failed");
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub geometry: CellGeometry,
    pub bs_xy: (f64, f64),
    pub bs_height_m: f64,
    pub tier: usize,
    /// Restrict user placement to points whose nearest same-tier BS is
    /// this cell's BS (users "closer to their serving BS").
    #[serde(default)]
    pub voronoi_within_tier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub name: String,
    /// Admission priority, 1 = highest.
    pub priority: usize,
    /// Poisson intensity: mean users per cell of this tier.
    pub mean_users_per_cell: f64,
    /// Per-user uplink transmit cap, Watts.
    pub user_p_max_w: f64,
    /// Per-BS downlink transmit cap, Watts.
    pub bs_p_max_w: f64,
    /// Target-SINR choice set, dB; each user draws uniformly from it.
    pub target_sinr_choices_db: Vec<f64>,
    /// Cells of this tier count as indoor for the shadowing rule.
    #[serde(default)]
    pub indoor: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowingSpec {
    pub default_db: f64,
    /// Links with exactly one endpoint inside an indoor cell.
    pub cross_indoor_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub cells: Vec<CellSpec>,
    pub tiers: Vec<TierSpec>,
    pub carrier_freq_hz: f64,
    pub path_loss_exponent: f64,
    pub shadowing: ShadowingSpec,
    pub noise_power_w: f64,
    /// Default master seed; experiment configs may override it.
    pub seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("scenario needs at least one cell")]
    NoCells,
    #[error("scenario needs at least one tier")]
    NoTiers,
    #[error("cell {cell}: tier {tier} out of range")]
    CellTierOutOfRange { cell: usize, tier: usize },
    #[error("tier {tier}: priority {priority} invalid (must cover 1..=K contiguously, K <= T)")]
    BadPriority { tier: usize, priority: usize },
    #[error("tier {tier}: mean users per cell must be nonnegative and finite")]
    BadIntensity { tier: usize },
    #[error("tier {tier}: target-SINR choice set must be nonempty and finite")]
    BadTargetChoices { tier: usize },
    #[error("tier {tier}: power caps must be strictly positive")]
    BadPowerCap { tier: usize },
    #[error("path-loss exponent must exceed 2, got {0}")]
    BadPathLossExponent(f64),
    #[error("shadowing deviations must be nonnegative")]
    BadShadowing,
    #[error("noise power must be strictly positive")]
    BadNoise,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.cells.is_empty() {
            return Err(ScenarioError::NoCells);
        }
        if self.tiers.is_empty() {
            return Err(ScenarioError::NoTiers);
        }
        let t = self.tiers.len();
        for (i, cell) in self.cells.iter().enumerate() {
            if cell.tier >= t {
                return Err(ScenarioError::CellTierOutOfRange { cell: i, tier: cell.tier });
            }
        }
        let k = self.tiers.iter().map(|tier| tier.priority).max().unwrap_or(0);
        for (i, tier) in self.tiers.iter().enumerate() {
            if tier.priority == 0 || tier.priority > t {
                return Err(ScenarioError::BadPriority { tier: i, priority: tier.priority });
            }
            if !(tier.mean_users_per_cell >= 0.0) || !tier.mean_users_per_cell.is_finite() {
                return Err(ScenarioError::BadIntensity { tier: i });
            }
            if tier.target_sinr_choices_db.is_empty()
                || tier.target_sinr_choices_db.iter().any(|v| !v.is_finite())
            {
                return Err(ScenarioError::BadTargetChoices { tier: i });
            }
            if !(tier.user_p_max_w > 0.0) || !(tier.bs_p_max_w > 0.0) {
                return Err(ScenarioError::BadPowerCap { tier: i });
            }
        }
        for q in 1..=k {
            if !self.tiers.iter().any(|tier| tier.priority == q) {
                return Err(ScenarioError::BadPriority { tier: 0, priority: q });
            }
        }
        if !(self.path_loss_exponent > 2.0) {
            return Err(ScenarioError::BadPathLossExponent(self.path_loss_exponent));
        }
        if self.shadowing.default_db < 0.0 || self.shadowing.cross_indoor_db < 0.0 {
            return Err(ScenarioError::BadShadowing);
        }
        if !(self.noise_power_w > 0.0) {
            return Err(ScenarioError::BadNoise);
        }
        Ok(())
    }

    pub fn num_priorities(&self) -> usize {
        self.tiers.iter().map(|t| t.priority).max().unwrap_or(0)
    }

    fn is_indoor_point(&self, p: (f64, f64)) -> bool {
        self.cells
            .iter()
            .any(|cell| self.tiers[cell.tier].indoor && cell.geometry.contains(p))
    }

    /// Shadowing deviation for a link: the cross-indoor value when exactly
    /// one endpoint lies inside an indoor cell, the default otherwise.
    pub fn shadowing_sigma_db(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        if self.is_indoor_point(a) != self.is_indoor_point(b) {
            self.shadowing.cross_indoor_db
        } else {
            self.shadowing.default_db
        }
    }
}

/// One endpoint of a radio link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEnd {
    pub xy: (f64, f64),
    pub height_m: f64,
}

/// Linear path gain between two endpoints; free-space reference at 1 m,
/// power-law decay, log-normal shadowing.
pub fn path_gain(
    carrier_freq_hz: f64,
    path_loss_exponent: f64,
    tx: LinkEnd,
    rx: LinkEnd,
    sigma_db: f64,
    rng: &mut impl Rng,
) -> f64 {
    let dx = tx.xy.0 - rx.xy.0;
    let dy = tx.xy.1 - rx.xy.1;
    let dz = tx.height_m - rx.height_m;
    let d = (dx * dx + dy * dy + dz * dz).sqrt().max(REFERENCE_DISTANCE_M);
    let lambda = SPEED_OF_LIGHT_M_S / carrier_freq_hz;
    let reference = (lambda / (4.0 * std::f64::consts::PI * REFERENCE_DISTANCE_M)).powi(2);
    // always draw the shadowing variate so rng streams stay aligned
    // across sigma sweeps
    let z: f64 = StandardNormal.sample(rng);
    reference * (d / REFERENCE_DISTANCE_M).powf(-path_loss_exponent) * db_to_linear(z * sigma_db)
}

/// Sample one snapshot with the spec's own seed, stream 0.
pub fn sample_snapshot(spec: &ScenarioSpec) -> Result<NetworkTopology, ScenarioError> {
    sample_snapshot_seeded(spec, spec.seed, 0)
}

/// Sample the `snapshot_index`-th snapshot of a run seeded by `seed`.
pub fn sample_snapshot_seeded(
    spec: &ScenarioSpec,
    seed: u64,
    snapshot_index: u64,
) -> Result<NetworkTopology, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(snapshot_index);

    let num_bs = spec.cells.len();

    // user counts and positions, cell by cell
    let mut serving_bs: Vec<usize> = Vec::new();
    let mut positions: Vec<(f64, f64)> = Vec::new();
    for (cell_idx, cell) in spec.cells.iter().enumerate() {
        let mean = spec.tiers[cell.tier].mean_users_per_cell;
        let count = if mean > 0.0 {
            Poisson::new(mean).expect("validated intensity").sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..count {
            let p = sample_user_position(spec, cell, &mut rng);
            serving_bs.push(cell_idx);
            positions.push(p);
        }
    }
    let num_users = positions.len();

    // per-user target SINRs (one draw, applied to both directions)
    let mut target_lin = Vec::with_capacity(num_users);
    for user in 0..num_users {
        let tier = spec.cells[serving_bs[user]].tier;
        let choices = &spec.tiers[tier].target_sinr_choices_db;
        let pick = choices[rng.random_range(0..choices.len())];
        target_lin.push(db_to_linear(pick));
    }

    let bs_end = |m: usize| LinkEnd {
        xy: spec.cells[m].bs_xy,
        height_m: spec.cells[m].bs_height_m,
    };
    let user_end = |i: usize| LinkEnd { xy: positions[i], height_m: 0.0 };

    // uplink gains (B x M), then downlink gains (M x B); independent draws
    let mut uplink_gain = vec![0.0; num_bs * num_users];
    for m in 0..num_bs {
        for i in 0..num_users {
            let sigma = spec.shadowing_sigma_db(positions[i], spec.cells[m].bs_xy);
            uplink_gain[m * num_users + i] = path_gain(
                spec.carrier_freq_hz,
                spec.path_loss_exponent,
                user_end(i),
                bs_end(m),
                sigma,
                &mut rng,
            );
        }
    }
    let mut downlink_gain = vec![0.0; num_users * num_bs];
    for i in 0..num_users {
        for m in 0..num_bs {
            let sigma = spec.shadowing_sigma_db(positions[i], spec.cells[m].bs_xy);
            downlink_gain[i * num_bs + m] = path_gain(
                spec.carrier_freq_hz,
                spec.path_loss_exponent,
                bs_end(m),
                user_end(i),
                sigma,
                &mut rng,
            );
        }
    }

    let p_max: Vec<f64> = (0..num_users)
        .map(|i| spec.tiers[spec.cells[serving_bs[i]].tier].user_p_max_w)
        .collect();
    let data = TopologyData {
        num_users,
        num_bs,
        num_tiers: spec.tiers.len(),
        num_priorities: spec.num_priorities(),
        serving_bs,
        tier_of_bs: spec.cells.iter().map(|c| c.tier).collect(),
        priority_of_tier: spec.tiers.iter().map(|t| t.priority).collect(),
        uplink_gain,
        downlink_gain,
        uplink_noise: vec![spec.noise_power_w; num_bs],
        downlink_noise: vec![spec.noise_power_w; num_users],
        p_max,
        bs_p_max: spec.cells.iter().map(|c| spec.tiers[c.tier].bs_p_max_w).collect(),
        target_sinr_up: target_lin.clone(),
        target_sinr_down: target_lin,
    };
    Ok(NetworkTopology::build(data).expect("validated scenario produces a valid topology"))
}

fn sample_user_position(spec: &ScenarioSpec, cell: &CellSpec, rng: &mut impl Rng) -> (f64, f64) {
    for _ in 0..100_000 {
        let p = cell.geometry.sample(rng);
        if !cell.voronoi_within_tier || nearest_bs_of_tier(spec, cell.tier, p) == cell.bs_xy {
            return p;
        }
    }
    unreachable!("voronoi rejection sampling failed");
}

fn nearest_bs_of_tier(spec: &ScenarioSpec, tier: usize, p: (f64, f64)) -> (f64, f64) {
    spec.cells
        .iter()
        .filter(|c| c.tier == tier)
        .map(|c| c.bs_xy)
        .min_by(|a, b| dist2(*a, p).total_cmp(&dist2(*b, p)))
        .expect("tier has at least one cell")
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    dx * dx + dy * dy
}

/// Overridable knobs of the three-tier layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ThreeTierOverrides {
    /// Distance between the two macro BSs, meters.
    pub macro_bs_spacing_m: f64,
    pub picos_per_macro: usize,
    pub femtos_per_macro: usize,
    /// Seed for the one-off placement of pico/femto cell centers.
    pub placement_seed: u64,
    /// Mean users per cell for the macro, pico, femto tiers.
    pub mean_users: [f64; 3],
    pub target_sinr_choices_db: Vec<f64>,
}

impl Default for ThreeTierOverrides {
    fn default() -> Self {
        Self {
            macro_bs_spacing_m: 300.0,
            picos_per_macro: 3,
            femtos_per_macro: 5,
            placement_seed: 7,
            mean_users: [10.0, 2.0, 2.0],
            target_sinr_choices_db: vec![-6.0, -12.0],
        }
    }
}

/// Two adjacent 1000 m x 1000 m macrocells (50 W BSs, height 20 m) with
/// randomly placed 100 m-radius picocells (0.5 W, 20 m) and 20 m x 20 m
/// femtocells (0.1 W, ground level) inside them. Priorities: macro 1,
/// pico 2, femto 3.
pub fn build_three_tier(overrides: &ThreeTierOverrides) -> ScenarioSpec {
    let half_spacing = overrides.macro_bs_spacing_m / 2.0;
    let mut cells = vec![
        CellSpec {
            geometry: CellGeometry::Rectangle { center: (-500.0, 0.0), width: 1000.0, height: 1000.0 },
            bs_xy: (-half_spacing, 0.0),
            bs_height_m: 20.0,
            tier: 0,
            voronoi_within_tier: false,
        },
        CellSpec {
            geometry: CellGeometry::Rectangle { center: (500.0, 0.0), width: 1000.0, height: 1000.0 },
            bs_xy: (half_spacing, 0.0),
            bs_height_m: 20.0,
            tier: 0,
            voronoi_within_tier: false,
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(overrides.placement_seed);
    for macro_center_x in [-500.0, 500.0] {
        for _ in 0..overrides.picos_per_macro {
            let center = (
                macro_center_x + rng.random_range(-400.0..=400.0),
                rng.random_range(-400.0..=400.0),
            );
            cells.push(CellSpec {
                geometry: CellGeometry::Disk { center, radius: 100.0 },
                bs_xy: center,
                bs_height_m: 20.0,
                tier: 1,
                voronoi_within_tier: false,
            });
        }
    }
    for macro_center_x in [-500.0, 500.0] {
        for _ in 0..overrides.femtos_per_macro {
            let center = (
                macro_center_x + rng.random_range(-490.0..=490.0),
                rng.random_range(-490.0..=490.0),
            );
            cells.push(CellSpec {
                geometry: CellGeometry::Rectangle { center, width: 20.0, height: 20.0 },
                bs_xy: center,
                bs_height_m: 0.0,
                tier: 2,
                voronoi_within_tier: false,
            });
        }
    }
    ScenarioSpec {
        cells,
        tiers: vec![
            TierSpec {
                name: "macro".into(),
                priority: 1,
                mean_users_per_cell: overrides.mean_users[0],
                user_p_max_w: 0.1,
                bs_p_max_w: 50.0,
                target_sinr_choices_db: overrides.target_sinr_choices_db.clone(),
                indoor: false,
            },
            TierSpec {
                name: "pico".into(),
                priority: 2,
                mean_users_per_cell: overrides.mean_users[1],
                user_p_max_w: 0.1,
                bs_p_max_w: 0.5,
                target_sinr_choices_db: overrides.target_sinr_choices_db.clone(),
                indoor: false,
            },
            TierSpec {
                name: "femto".into(),
                priority: 3,
                mean_users_per_cell: overrides.mean_users[2],
                user_p_max_w: 0.1,
                bs_p_max_w: 0.1,
                target_sinr_choices_db: overrides.target_sinr_choices_db.clone(),
                indoor: true,
            },
        ],
        carrier_freq_hz: DEFAULT_CARRIER_HZ,
        path_loss_exponent: DEFAULT_PATH_LOSS_EXPONENT,
        shadowing: ShadowingSpec {
            default_db: DEFAULT_SHADOWING_DB,
            cross_indoor_db: DEFAULT_FEMTO_SHADOWING_DB,
        },
        noise_power_w: DEFAULT_NOISE_W,
        seed: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FourCellVariant {
    /// Users spread over the whole network area.
    SpreadNetworkWide,
    /// Users placed within the Voronoi cell of their serving BS.
    NearServingBs,
}

/// 1000 m x 1000 m two-tier network: two primary and two secondary BSs on
/// a 150 m square, all at height 20 m, 0.1 W user caps.
pub fn build_two_tier_4cell(variant: FourCellVariant) -> ScenarioSpec {
    let area = CellGeometry::Rectangle { center: (0.0, 0.0), width: 1000.0, height: 1000.0 };
    let voronoi = matches!(variant, FourCellVariant::NearServingBs);
    let targets = match variant {
        FourCellVariant::SpreadNetworkWide => vec![-16.0, -22.0],
        FourCellVariant::NearServingBs => vec![-10.0, -16.0],
    };
    let bs_positions = [
        ((-75.0, -75.0), 0usize),
        ((75.0, 75.0), 0),
        ((-75.0, 75.0), 1),
        ((75.0, -75.0), 1),
    ];
    let cells = bs_positions
        .iter()
        .map(|&(bs_xy, tier)| CellSpec {
            geometry: area,
            bs_xy,
            bs_height_m: 20.0,
            tier,
            voronoi_within_tier: voronoi,
        })
        .collect();
    two_tier_spec(cells, targets)
}

/// Seven hexagonal cells of radius 600 m: the center cell plus a ring of
/// six. Cells 1, 3, 5, 7 (1-based) are primary, cells 2, 4, 6 secondary;
/// users stay inside their own hexagon.
pub fn build_hex_7cell() -> ScenarioSpec {
    let radius = 600.0;
    let ring_distance = SQRT3 * radius;
    let mut cells = Vec::with_capacity(7);
    for k in 0..7usize {
        let center = if k == 0 {
            (0.0, 0.0)
        } else {
            let angle = (30.0 + 60.0 * (k as f64 - 1.0)).to_radians();
            (ring_distance * angle.cos(), ring_distance * angle.sin())
        };
        cells.push(CellSpec {
            geometry: CellGeometry::Hexagon { center, radius },
            bs_xy: center,
            bs_height_m: 20.0,
            tier: if k % 2 == 0 { 0 } else { 1 },
            voronoi_within_tier: false,
        });
    }
    two_tier_spec(cells, vec![-10.0, -16.0])
}

fn two_tier_spec(cells: Vec<CellSpec>, target_sinr_choices_db: Vec<f64>) -> ScenarioSpec {
    ScenarioSpec {
        cells,
        tiers: vec![
            TierSpec {
                name: "primary".into(),
                priority: 1,
                mean_users_per_cell: 8.0,
                user_p_max_w: 0.1,
                bs_p_max_w: 10.0,
                target_sinr_choices_db: target_sinr_choices_db.clone(),
                indoor: false,
            },
            TierSpec {
                name: "secondary".into(),
                priority: 2,
                mean_users_per_cell: 8.0,
                user_p_max_w: 0.1,
                bs_p_max_w: 10.0,
                target_sinr_choices_db,
                indoor: false,
            },
        ],
        carrier_freq_hz: DEFAULT_CARRIER_HZ,
        path_loss_exponent: DEFAULT_PATH_LOSS_EXPONENT,
        shadowing: ShadowingSpec {
            default_db: DEFAULT_SHADOWING_DB,
            cross_indoor_db: DEFAULT_SHADOWING_DB,
        },
        noise_power_w: DEFAULT_NOISE_W,
        seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat_rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn reference_distance_gain_without_shadowing() {
        // sigma = 0, d = d0 = 1 m: gain is exactly (lambda / 4 pi)^2
        let mut rng = flat_rng();
        let a = LinkEnd { xy: (0.0, 0.0), height_m: 0.0 };
        let b = LinkEnd { xy: (1.0, 0.0), height_m: 0.0 };
        let gain = path_gain(DEFAULT_CARRIER_HZ, 3.0, a, b, 0.0, &mut rng);
        let lambda = SPEED_OF_LIGHT_M_S / DEFAULT_CARRIER_HZ;
        let expect = (lambda / (4.0 * std::f64::consts::PI)).powi(2);
        assert!((gain - expect).abs() / expect < 1e-14);
    }

    #[test]
    fn cubic_decay_without_shadowing() {
        // alpha = 3: doubling the distance divides the gain by 8
        let mut rng = flat_rng();
        let a = LinkEnd { xy: (0.0, 0.0), height_m: 0.0 };
        let near = LinkEnd { xy: (50.0, 0.0), height_m: 0.0 };
        let far = LinkEnd { xy: (100.0, 0.0), height_m: 0.0 };
        let g_near = path_gain(DEFAULT_CARRIER_HZ, 3.0, a, near, 0.0, &mut rng);
        let g_far = path_gain(DEFAULT_CARRIER_HZ, 3.0, a, far, 0.0, &mut rng);
        assert!((g_near / g_far - 8.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_gain_at_100m() {
        // 1.9 GHz, d = 100 m, sigma = 0:
        // gain = (c / (1.9e9 * 4 pi))^2 * 100^-3, about 1.5766e-10
        let mut rng = flat_rng();
        let a = LinkEnd { xy: (0.0, 0.0), height_m: 0.0 };
        let b = LinkEnd { xy: (100.0, 0.0), height_m: 0.0 };
        let gain = path_gain(1.9e9, 3.0, a, b, 0.0, &mut rng);
        let hand = (299_792_458.0 / 1.9e9 / (4.0 * std::f64::consts::PI)).powi(2) * 100.0f64.powi(-3);
        assert!((gain - hand).abs() / hand < 1e-14);
        assert!((gain - 1.5766e-10).abs() / 1.5766e-10 < 1e-3);
    }

    #[test]
    fn coincident_endpoints_clamp_to_reference_distance() {
        let mut rng = flat_rng();
        let a = LinkEnd { xy: (3.0, 4.0), height_m: 0.0 };
        let g_same = path_gain(DEFAULT_CARRIER_HZ, 3.0, a, a, 0.0, &mut rng);
        let b = LinkEnd { xy: (3.5, 4.0), height_m: 0.0 };
        let g_half = path_gain(DEFAULT_CARRIER_HZ, 3.0, a, b, 0.0, &mut rng);
        assert_eq!(g_same, g_half); // both clamped to 1 m
    }

    #[test]
    fn snapshot_is_deterministic() {
        let spec = build_three_tier(&ThreeTierOverrides::default());
        let a = sample_snapshot_seeded(&spec, 123, 4).unwrap();
        let b = sample_snapshot_seeded(&spec, 123, 4).unwrap();
        assert_eq!(a, b);
        let c = sample_snapshot_seeded(&spec, 123, 5).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_intensity_yields_empty_topology() {
        let mut spec = build_three_tier(&ThreeTierOverrides::default());
        for tier in &mut spec.tiers {
            tier.mean_users_per_cell = 0.0;
        }
        let topo = sample_snapshot(&spec).unwrap();
        assert_eq!(topo.num_users(), 0);
    }

    #[test]
    fn poisson_mean_matches_intensity() {
        // 10,000 draws per cell; sample mean within 3% of the intensity
        let mut spec = build_two_tier_4cell(FourCellVariant::SpreadNetworkWide);
        spec.tiers[0].mean_users_per_cell = 5.0;
        spec.tiers[1].mean_users_per_cell = 5.0;
        let mut total = 0usize;
        let draws = 10_000;
        for k in 0..draws {
            total += sample_snapshot_seeded(&spec, 9, k).unwrap().num_users();
        }
        let mean_per_cell = total as f64 / (draws as f64 * spec.cells.len() as f64);
        assert!(
            (mean_per_cell - 5.0).abs() / 5.0 < 0.03,
            "sample mean {mean_per_cell} deviates from intensity 5"
        );
    }

    #[test]
    fn three_tier_defaults_match_layout() {
        let spec = build_three_tier(&ThreeTierOverrides::default());
        assert_eq!(spec.cells.len(), 2 + 6 + 10);
        assert_eq!(spec.tiers[0].bs_p_max_w, 50.0);
        assert_eq!(spec.tiers[1].bs_p_max_w, 0.5);
        assert_eq!(spec.tiers[2].bs_p_max_w, 0.1);
        assert_eq!(spec.cells[0].bs_xy, (-150.0, 0.0));
        assert_eq!(spec.cells[1].bs_xy, (150.0, 0.0));
        assert_eq!(spec.cells[0].bs_height_m, 20.0);
        // pico and femto BSs sit at their cell centers
        for cell in &spec.cells[2..] {
            match cell.geometry {
                CellGeometry::Disk { center, radius } => {
                    assert_eq!(center, cell.bs_xy);
                    assert_eq!(radius, 100.0);
                    assert_eq!(cell.bs_height_m, 20.0);
                }
                CellGeometry::Rectangle { center, width, height } => {
                    assert_eq!(center, cell.bs_xy);
                    assert_eq!((width, height), (20.0, 20.0));
                    assert_eq!(cell.bs_height_m, 0.0);
                }
                CellGeometry::Hexagon { .. } => panic!("no hexagons in the three-tier layout"),
            }
        }
        assert_eq!(spec.num_priorities(), 3);
        spec.validate().unwrap();
    }

    #[test]
    fn three_tier_spacing_override() {
        let spec = build_three_tier(&ThreeTierOverrides {
            macro_bs_spacing_m: 500.0,
            ..Default::default()
        });
        assert_eq!(spec.cells[0].bs_xy, (-250.0, 0.0));
        assert_eq!(spec.cells[1].bs_xy, (250.0, 0.0));
    }

    #[test]
    fn three_tier_expected_initial_user_count() {
        // means 10/2/2 per cell over 2 macro + 6 pico + 10 femto cells:
        // expected initial total = 20 + 12 + 20 = 52
        let spec = build_three_tier(&ThreeTierOverrides::default());
        let draws = 4_000;
        let mut total = 0usize;
        for k in 0..draws {
            total += sample_snapshot_seeded(&spec, 21, k).unwrap().num_users();
        }
        let mean = total as f64 / draws as f64;
        assert!((mean - 52.0).abs() / 52.0 < 0.03, "mean initial users {mean}");
    }

    #[test]
    fn four_cell_variants_differ_only_in_placement() {
        let a = build_two_tier_4cell(FourCellVariant::SpreadNetworkWide);
        let b = build_two_tier_4cell(FourCellVariant::NearServingBs);
        assert!(a.cells.iter().all(|c| !c.voronoi_within_tier));
        assert!(b.cells.iter().all(|c| c.voronoi_within_tier));
        assert_eq!(a.cells.len(), 4);
        assert_eq!(a.tiers[0].user_p_max_w, 0.1);
        // BS spacing d = 150 m between adjacent stations
        let d = (dist2(a.cells[0].bs_xy, a.cells[2].bs_xy)).sqrt();
        assert!((d - 150.0).abs() < 1e-12);
    }

    #[test]
    fn hex_layout_tiers_alternate() {
        let spec = build_hex_7cell();
        assert_eq!(spec.cells.len(), 7);
        let primary: Vec<usize> =
            (0..7).filter(|&k| spec.cells[k].tier == 0).collect();
        assert_eq!(primary, vec![0, 2, 4, 6]);
        for cell in &spec.cells[1..] {
            let d = dist2(cell.bs_xy, (0.0, 0.0)).sqrt();
            assert!((d - SQRT3 * 600.0).abs() < 1e-9);
        }
        spec.validate().unwrap();
    }

    #[test]
    fn voronoi_placement_keeps_users_near_their_bs() {
        let spec = build_two_tier_4cell(FourCellVariant::NearServingBs);
        let topo = sample_snapshot_seeded(&spec, 3, 0).unwrap();
        assert!(topo.num_users() > 0);
        // with voronoi placement, the serving BS is the nearest same-tier
        // one by construction; spot-check through gains being largest on
        // average toward the serving BS is noisy, so instead re-sample
        // positions directly
        let cell = &spec.cells[0];
        let mut rng = flat_rng();
        for _ in 0..200 {
            let p = sample_user_position(&spec, cell, &mut rng);
            assert_eq!(nearest_bs_of_tier(&spec, cell.tier, p), cell.bs_xy);
        }
    }

    #[test]
    fn cross_indoor_links_get_wider_shadowing() {
        let spec = build_three_tier(&ThreeTierOverrides::default());
        let femto_center = spec
            .cells
            .iter()
            .find(|c| c.tier == 2)
            .map(|c| c.bs_xy)
            .unwrap();
        let outdoor = (femto_center.0 + 200.0, femto_center.1);
        assert_eq!(spec.shadowing_sigma_db(femto_center, outdoor), 6.0);
        assert_eq!(spec.shadowing_sigma_db(outdoor, outdoor), 4.0);
        assert_eq!(spec.shadowing_sigma_db(femto_center, femto_center), 4.0);
    }

    /// Polygon oracle for the closed-form hexagon membership test.
    fn hexagon_vertices(center: (f64, f64), r: f64) -> Vec<(f64, f64)> {
        (0..6)
            .map(|k| {
                let a = (60.0 * k as f64).to_radians();
                (center.0 + r * a.cos(), center.1 + r * a.sin())
            })
            .collect()
    }

    fn point_in_polygon(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
        let mut inside = false;
        let n = poly.len();
        for i in 0..n {
            let (x1, y1) = poly[i];
            let (x2, y2) = poly[(i + 1) % n];
            if (y1 > p.1) != (y2 > p.1) {
                let x_cross = x1 + (p.1 - y1) / (y2 - y1) * (x2 - x1);
                if p.0 < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    proptest! {
        #[test]
        fn hexagon_membership_matches_polygon_oracle(
            x in -700.0f64..700.0,
            y in -700.0f64..700.0,
        ) {
            let hex = CellGeometry::Hexagon { center: (0.0, 0.0), radius: 600.0 };
            let oracle = point_in_polygon(&hexagon_vertices((0.0, 0.0), 600.0), (x, y));
            // skip points within a hair of the boundary, where the two
            // formulations may disagree on ties
            let margin = 1e-6;
            let scaled_in = CellGeometry::Hexagon { center: (0.0, 0.0), radius: 600.0 - margin }
                .contains((x, y));
            let scaled_out = CellGeometry::Hexagon { center: (0.0, 0.0), radius: 600.0 + margin }
                .contains((x, y));
            if scaled_in == scaled_out {
                prop_assert_eq!(hex.contains((x, y)), oracle);
            }
        }

        #[test]
        fn hexagon_samples_fall_inside(seed in any::<u64>()) {
            let hex = CellGeometry::Hexagon { center: (10.0, -5.0), radius: 600.0 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = hex.sample(&mut rng);
            prop_assert!(hex.contains(p));
        }
    }
}
