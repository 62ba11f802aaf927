//! Scenario configuration, UAV motion model, relative angle and history windows.

use std::f64::consts::PI;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::RandomSource;

/// Minimum UAV–UE range tolerated while generating a trajectory, meters.
pub const MIN_RANGE_M: f64 = 0.5;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Location) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scale(self, factor: f64) -> Location {
        Location::new(self.x * factor, self.y * factor)
    }
}

impl Add for Location {
    type Output = Location;
    fn add(self, rhs: Location) -> Location {
        Location::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Location {
    type Output = Location;
    fn sub(self, rhs: Location) -> Location {
        Location::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Per-slot velocity: amplitude in meters per slot, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub amplitude: f64,
    pub heading: f64,
}

impl Velocity {
    pub fn displacement(self) -> Location {
        Location::new(self.amplitude * self.heading.cos(), self.amplitude * self.heading.sin())
    }
}

/// Link and motion parameters. Powers are in watts; speeds in meters per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m_tx: usize,
    pub n_rx: usize,
    pub f_c: f64,
    pub c_prop: f64,
    pub p_t: f64,
    pub sigma2: f64,
    pub delta_t: f64,
    pub k_slots: usize,
    pub window_l: usize,
    pub ue_pos: Location,
    pub speed_lo: f64,
    pub speed_hi: f64,
    pub heading_lo: f64,
    pub heading_hi: f64,
    pub sigma_v: f64,
    pub uav_start: Location,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            m_tx: 16,
            n_rx: 8,
            f_c: 30e9,
            c_prop: 3.0e8,
            p_t: dbm_to_watts(20.0),
            sigma2: dbm_to_watts(-90.0),
            delta_t: 0.02,
            k_slots: 200,
            window_l: 20,
            ue_pos: Location::new(0.0, 0.0),
            speed_lo: 0.4,
            speed_hi: 0.7,
            heading_lo: -PI / 6.0,
            heading_hi: PI / 6.0,
            sigma_v: 0.01,
            uav_start: Location::new(15.0, 15.0),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Field names accepted in the JSON form.
    pub const FIELDS: [&'static str; 17] = [
        "m_tx",
        "n_rx",
        "f_c",
        "c_prop",
        "p_t",
        "sigma2",
        "delta_t",
        "k_slots",
        "window_l",
        "ue_pos",
        "speed_lo",
        "speed_hi",
        "heading_lo",
        "heading_hi",
        "sigma_v",
        "uav_start",
        "seed",
    ];

    /// Long-range preset where all schemes become nearly indistinguishable.
    pub fn far() -> Self {
        ScenarioConfig {
            uav_start: Location::new(70.0, 70.0),
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioConfig { seed, ..self.clone() }
    }

    /// Parses and validates a JSON document; unknown keys are rejected as a group.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Schema("scenario config must be a JSON object".into()))?;
        let unknown: Vec<&str> = obj
            .keys()
            .map(String::as_str)
            .filter(|k| !Self::FIELDS.contains(k))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Schema(format!("unknown keys: {}", unknown.join(", "))));
        }
        let cfg: ScenarioConfig = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.m_tx < 1 {
            bad.push("m_tx");
        }
        if self.n_rx < 1 {
            bad.push("n_rx");
        }
        for (name, v) in [
            ("f_c", self.f_c),
            ("c_prop", self.c_prop),
            ("p_t", self.p_t),
            ("sigma2", self.sigma2),
            ("delta_t", self.delta_t),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(name);
            }
        }
        if !(self.speed_lo >= 0.0 && self.speed_lo <= self.speed_hi && self.speed_hi.is_finite()) {
            bad.push("speed_lo/speed_hi");
        }
        if !(-PI <= self.heading_lo && self.heading_lo <= self.heading_hi && self.heading_hi <= PI) {
            bad.push("heading_lo/heading_hi");
        }
        if !(self.sigma_v >= 0.0 && self.sigma_v.is_finite()) {
            bad.push("sigma_v");
        }
        if self.window_l < 2 {
            bad.push("window_l");
        }
        if self.k_slots <= self.window_l {
            bad.push("k_slots");
        }
        if !self.ue_pos.is_finite() {
            bad.push("ue_pos");
        }
        if !self.uav_start.is_finite() {
            bad.push("uav_start");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid fields: {}", bad.join(", "))))
        }
    }

    /// Short hex digest of the full configuration including the seed.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Per-slot displacement bounds expressed in m/s.
    pub fn speed_range_mps(&self) -> (f64, f64) {
        (self.speed_lo / self.delta_t, self.speed_hi / self.delta_t)
    }
}

/// Applies one motion step with explicit draws.
pub fn advance(u_prev: Location, velocity: Velocity, disturbance: (f64, f64)) -> Location {
    u_prev + velocity.displacement() + Location::new(disturbance.0, disturbance.1)
}

/// Draws `α ∼ U(speed_lo, speed_hi)` then `β ∼ U(heading_lo, heading_hi)`.
pub fn draw_velocity(rng: &mut RandomSource, cfg: &ScenarioConfig) -> Result<Velocity> {
    let amplitude = rng.uniform(cfg.speed_lo, cfg.speed_hi)?;
    let heading = rng.uniform(cfg.heading_lo, cfg.heading_hi)?;
    Ok(Velocity { amplitude, heading })
}

/// One slot of the motion model. Draw order: amplitude, heading, then the
/// disturbance pair (x, y).
pub fn step(u_prev: Location, rng: &mut RandomSource, cfg: &ScenarioConfig) -> Result<Location> {
    let velocity = draw_velocity(rng, cfg)?;
    let disturbance = rng.gaussian2(cfg.sigma_v)?;
    Ok(advance(u_prev, velocity, disturbance))
}

/// A realized UAV path over all slots of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub locations: Vec<Location>,
    pub config_hash: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn path_length(&self) -> f64 {
        self.locations.windows(2).map(|w| w[1].distance(w[0])).sum()
    }
}

/// Iterates the motion model from `uav_start` for `k_slots` slots.
///
/// Only the physical parameters are checked here so that short trajectories
/// (`k_slots` below the window length) can still be generated.
pub fn generate_trajectory(cfg: &ScenarioConfig) -> Result<Trajectory> {
    let mut check = cfg.clone();
    check.window_l = 2;
    check.k_slots = check.k_slots.max(3);
    check.validate()?;

    let mut rng = RandomSource::new(cfg.seed);
    let mut locations = Vec::with_capacity(cfg.k_slots);
    let mut u = cfg.uav_start;
    for k in 0..cfg.k_slots {
        if k > 0 {
            u = step(u, &mut rng, cfg)?;
        }
        if u.distance(cfg.ue_pos) < MIN_RANGE_M {
            return Err(Error::DegenerateGeometry(format!(
                "UAV within {MIN_RANGE_M} m of the UE at slot {k}"
            )));
        }
        locations.push(u);
    }
    Ok(Trajectory {
        locations,
        config_hash: cfg.fingerprint(),
    })
}

/// Angle of `u` seen from `ue`, `arccos((x_u − x_p)/‖u − ue‖)` in `[0, π]`.
pub fn relative_angle(u: Location, ue: Location) -> Result<f64> {
    let d = u - ue;
    let range = d.norm();
    if !(range > 0.0) {
        return Err(Error::DegenerateGeometry("UAV and UE locations coincide".into()));
    }
    Ok((d.x / range).clamp(-1.0, 1.0).acos())
}

/// The `L` most recent locations before a target slot, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub columns: Vec<Location>,
    pub target_index: usize,
}

impl TrajectoryWindow {
    pub fn new(columns: Vec<Location>, target_index: usize) -> Self {
        TrajectoryWindow { columns, target_index }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Most recent location `u_{k−1}`.
    pub fn last(&self) -> Location {
        *self.columns.last().expect("window is nonempty")
    }

    pub fn translated(&self, offset: Location) -> TrajectoryWindow {
        TrajectoryWindow {
            columns: self.columns.iter().map(|&c| c + offset).collect(),
            target_index: self.target_index,
        }
    }

    /// Drops the oldest column and appends `next`, advancing the target slot.
    pub fn shifted(&self, next: Location) -> TrajectoryWindow {
        let mut columns = Vec::with_capacity(self.columns.len());
        columns.extend_from_slice(&self.columns[1..]);
        columns.push(next);
        TrajectoryWindow {
            columns,
            target_index: self.target_index + 1,
        }
    }
}

/// Window of locations `k−l .. k−1` predicting slot `k`.
pub fn window(traj: &Trajectory, k: usize, l: usize) -> Result<TrajectoryWindow> {
    if l == 0 {
        return Err(Error::Domain("window length must be positive".into()));
    }
    if k < l {
        return Err(Error::InsufficientHistory { slot: k, needed: l });
    }
    if k >= traj.len() {
        return Err(Error::Domain(format!(
            "target slot {k} beyond trajectory of {} slots",
            traj.len()
        )));
    }
    Ok(TrajectoryWindow::new(traj.locations[k - l..k].to_vec(), k))
}
