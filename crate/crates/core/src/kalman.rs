//! Constant-velocity Kalman baseline.
//!
//! State is `[x, y, vx, vy]` in metres and m/s. Process noise is the
//! continuous white-acceleration model discretized over `Δt`, with spectral
//! density `q` (m²/s³) on each axis; measurements observe position only.

use ndarray::{array, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Location;

pub const DEFAULT_Q: f64 = 1.0;
pub const DEFAULT_R: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub state: Array1<f64>,
    pub covariance: Array2<f64>,
}

impl KalmanState {
    pub fn position(&self) -> Location {
        Location::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Location {
        Location::new(self.state[2], self.state[3])
    }

    /// Largest `|P − Pᵀ|` entry.
    pub fn asymmetry(&self) -> f64 {
        let p = &self.covariance;
        (p - &p.t()).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn transition(delta_t: f64) -> Array2<f64> {
    array![
        [1.0, 0.0, delta_t, 0.0],
        [0.0, 1.0, 0.0, delta_t],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn process_noise(delta_t: f64, q: f64) -> Array2<f64> {
    let (a, b, c) = (delta_t.powi(3) / 3.0, delta_t.powi(2) / 2.0, delta_t);
    q * array![[a, 0.0, b, 0.0], [0.0, a, 0.0, b], [b, 0.0, c, 0.0], [0.0, b, 0.0, c],]
}

fn symmetrize(p: &mut Array2<f64>) {
    let t = p.t().to_owned();
    *p += &t;
    *p *= 0.5;
}

/// Position from `u_b`, velocity from the finite difference; position
/// variance `r`, velocity variance `2r/Δt²`, position–velocity covariance
/// `r/Δt` (the velocity estimate shares `u_b`'s noise).
pub fn init_two_point(u_a: Location, u_b: Location, delta_t: f64, r: f64) -> KalmanState {
    let v = (u_b - u_a).scale(1.0 / delta_t);
    let (pv, vv) = (r / delta_t, 2.0 * r / (delta_t * delta_t));
    KalmanState {
        state: array![u_b.x, u_b.y, v.x, v.y],
        covariance: array![
            [r, 0.0, pv, 0.0],
            [0.0, r, 0.0, pv],
            [pv, 0.0, vv, 0.0],
            [0.0, pv, 0.0, vv],
        ],
    }
}

pub fn kf_predict(s: &KalmanState, delta_t: f64, q: f64) -> KalmanState {
    let f = transition(delta_t);
    let mut covariance = f.dot(&s.covariance).dot(&f.t()) + process_noise(delta_t, q);
    symmetrize(&mut covariance);
    KalmanState {
        state: f.dot(&s.state),
        covariance,
    }
}

/// Position measurement update in Joseph form.
pub fn kf_update(s: &KalmanState, z: Location, r: f64) -> Result<KalmanState> {
    let p = &s.covariance;
    let (s00, s01, s11) = (p[[0, 0]] + r, p[[0, 1]], p[[1, 1]] + r);
    let det = s00 * s11 - s01 * s01;
    if !(det.is_finite() && det > f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "innovation covariance is singular (det {det:e})"
        )));
    }
    let s_inv = array![[s11, -s01], [-s01, s00]] / det;
    // H selects the first two state components, so P Hᵀ is P's first two columns.
    let pht = p.slice(ndarray::s![.., 0..2]).to_owned();
    let gain = pht.dot(&s_inv);
    let innovation = array![z.x - s.state[0], z.y - s.state[1]];
    let state = &s.state + &gain.dot(&innovation);

    let mut i_kh = Array2::eye(4);
    for row in 0..4 {
        i_kh[[row, 0]] -= gain[[row, 0]];
        i_kh[[row, 1]] -= gain[[row, 1]];
    }
    let mut covariance = i_kh.dot(p).dot(&i_kh.t()) + r * gain.dot(&gain.t());
    symmetrize(&mut covariance);
    Ok(KalmanState { state, covariance })
}

/// One-step prediction from the last two locations (equal to linear
/// extrapolation: the covariance does not influence the mean here).
pub fn baseline_predict(history: [Location; 2], delta_t: f64) -> Location {
    kf_predict(
        &init_two_point(history[0], history[1], delta_t, DEFAULT_R),
        delta_t,
        DEFAULT_Q,
    )
    .position()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KalmanMode {
    /// Re-initialize from the two most recent observations every slot.
    #[default]
    Reinit,
    /// One filter over the whole episode: predict/update per observation.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    pub q: f64,
    pub r: f64,
    pub mode: KalmanMode,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            q: DEFAULT_Q,
            r: DEFAULT_R,
            mode: KalmanMode::Reinit,
        }
    }
}

/// Slot-indexed tracker fed with whatever observations actually arrive.
/// Gaps between observations are handled by predicting over the gap.
#[derive(Debug, Clone)]
pub struct KalmanTracker {
    cfg: KalmanConfig,
    delta_t: f64,
    previous: Option<(usize, Location)>,
    latest: Option<(usize, Location)>,
    filter: Option<KalmanState>,
}

impl KalmanTracker {
    pub fn new(cfg: KalmanConfig, delta_t: f64) -> Result<Self> {
        if !(delta_t > 0.0 && delta_t.is_finite()) {
            return Err(Error::Domain(format!("delta_t must be positive, got {delta_t}")));
        }
        if !(cfg.q >= 0.0 && cfg.r > 0.0 && cfg.q.is_finite() && cfg.r.is_finite()) {
            return Err(Error::Config("kalman q must be ≥ 0 and r > 0".into()));
        }
        Ok(KalmanTracker {
            cfg,
            delta_t,
            previous: None,
            latest: None,
            filter: None,
        })
    }

    /// Records the location of `slot`; slots must increase.
    pub fn observe(&mut self, slot: usize, z: Location) -> Result<()> {
        if let Some((last, _)) = self.latest {
            if slot <= last {
                return Err(Error::Domain(format!("observation for slot {slot} after slot {last}")));
            }
        }
        if self.cfg.mode == KalmanMode::Continuous {
            self.filter = match (&self.filter, self.latest) {
                (Some(f), Some((last, _))) => {
                    let prior = kf_predict(f, (slot - last) as f64 * self.delta_t, self.cfg.q);
                    Some(kf_update(&prior, z, self.cfg.r)?)
                }
                (None, Some((last, prev))) => {
                    Some(init_two_point(prev, z, (slot - last) as f64 * self.delta_t, self.cfg.r))
                }
                _ => None,
            };
        }
        self.previous = self.latest;
        self.latest = Some((slot, z));
        Ok(())
    }

    /// Predicted location at `slot` from the observations so far.
    pub fn predict(&self, slot: usize) -> Result<Location> {
        let (last, z) = self.latest.ok_or(Error::InsufficientHistory { slot, needed: 2 })?;
        if slot <= last {
            return Err(Error::Domain(format!(
                "prediction for slot {slot} not after slot {last}"
            )));
        }
        let state = match self.cfg.mode {
            KalmanMode::Reinit => {
                let (first, prev) = self.previous.ok_or(Error::InsufficientHistory { slot, needed: 2 })?;
                init_two_point(prev, z, (last - first) as f64 * self.delta_t, self.cfg.r)
            }
            KalmanMode::Continuous => self
                .filter
                .clone()
                .ok_or(Error::InsufficientHistory { slot, needed: 2 })?,
        };
        Ok(kf_predict(&state, (slot - last) as f64 * self.delta_t, self.cfg.q).position())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomSource;
    use proptest::prelude::*;

    fn close(a: Location, b: Location, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn two_point_initialization() {
        let s = init_two_point(Location::new(0.0, 0.0), Location::new(0.5, 0.2), 0.02, 1e-4);
        assert!(close(s.velocity(), Location::new(25.0, 10.0), 1e-12));
        assert_eq!(s.position(), Location::new(0.5, 0.2));
        assert!((s.covariance[[2, 2]] - 0.5).abs() < 1e-15);
        assert!((s.covariance[[3, 3]] - 0.5).abs() < 1e-15);

        let still = init_two_point(Location::new(3.0, 4.0), Location::new(3.0, 4.0), 0.02, 1e-4);
        assert_eq!(still.velocity(), Location::new(0.0, 0.0));
    }

    #[test]
    fn predict_extrapolates() {
        let s = KalmanState {
            state: array![0.0, 0.0, 25.0, 10.0],
            covariance: Array2::eye(4),
        };
        assert!(close(
            kf_predict(&s, 0.02, 1.0).position(),
            Location::new(0.5, 0.2),
            1e-15
        ));
    }

    #[test]
    fn zero_process_noise_adds_nothing() {
        let s = init_two_point(Location::new(0.0, 0.0), Location::new(0.5, 0.2), 0.02, 1e-4);
        let f = transition(0.02);
        let expected = f.dot(&s.covariance).dot(&f.t());
        let got = kf_predict(&s, 0.02, 0.0).covariance;
        assert!((got.diag().sum() - expected.diag().sum()).abs() < 1e-15);
    }

    #[test]
    fn predict_is_a_semigroup_without_process_noise() {
        let s = init_two_point(Location::new(1.0, -2.0), Location::new(1.4, -1.7), 0.02, 1e-4);
        let twice = kf_predict(&kf_predict(&s, 0.02, 0.0), 0.02, 0.0);
        let once = kf_predict(&s, 0.04, 0.0);
        assert!(close(twice.position(), once.position(), 1e-12));
        for (a, b) in twice.covariance.iter().zip(once.covariance.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn update_with_predicted_position_is_a_no_op_on_position() {
        let s = kf_predict(
            &init_two_point(Location::new(0.0, 0.0), Location::new(0.5, 0.2), 0.02, 1e-4),
            0.02,
            1.0,
        );
        for r in [1e-6, 1e-2, 10.0] {
            let u = kf_update(&s, s.position(), r).unwrap();
            assert!(close(u.position(), s.position(), 1e-15));
        }
    }

    #[test]
    fn tiny_measurement_noise_snaps_to_measurement() {
        let s = kf_predict(
            &init_two_point(Location::new(0.0, 0.0), Location::new(0.5, 0.2), 0.02, 1e-4),
            0.02,
            1.0,
        );
        let z = Location::new(1.3, 0.1);
        let u = kf_update(&s, z, 1e-15).unwrap();
        assert!(close(u.position(), z, 1e-9));
    }

    #[test]
    fn scalar_gain_is_one_half() {
        let s = KalmanState {
            state: array![0.0, 0.0, 0.0, 0.0],
            covariance: Array2::eye(4),
        };
        // prior variance 1, r = 1: gain 1/(1+1)
        let u = kf_update(&s, Location::new(2.0, -4.0), 1.0).unwrap();
        assert!(close(u.position(), Location::new(1.0, -2.0), 1e-15));
        assert!((u.covariance[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_innovation_is_numerical_error() {
        let s = KalmanState {
            state: Array1::zeros(4),
            covariance: Array2::zeros((4, 4)),
        };
        assert!(matches!(
            kf_update(&s, Location::new(1.0, 1.0), 0.0),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn baseline_examples() {
        let p = baseline_predict([Location::new(0.0, 0.0), Location::new(0.5, 0.2)], 0.02);
        assert!(close(p, Location::new(1.0, 0.4), 1e-12));
        let still = Location::new(7.0, -3.0);
        assert_eq!(baseline_predict([still, still], 0.02), still);
    }

    #[test]
    fn straight_line_is_predicted_exactly() {
        let step = Location::new(0.55, 0.0);
        let pts: Vec<Location> = (0..200)
            .map(|k| Location::new(15.0, 15.0) + step.scale(k as f64))
            .collect();
        for k in 2..pts.len() {
            let p = baseline_predict([pts[k - 2], pts[k - 1]], 0.02);
            assert!(p.distance(pts[k]) <= 1e-9, "slot {k}");
        }
    }

    #[test]
    fn covariance_stays_symmetric_over_many_cycles() {
        let mut rng = RandomSource::new(9);
        let mut s = init_two_point(Location::new(0.0, 0.0), Location::new(0.5, 0.1), 0.02, 1e-4);
        let mut truth = Location::new(0.5, 0.1);
        for _ in 0..1000 {
            truth = truth + Location::new(0.55, 0.0);
            let (nx, ny) = rng.gaussian2(0.01).unwrap();
            s = kf_update(&kf_predict(&s, 0.02, 1.0), truth + Location::new(nx, ny), 1e-4).unwrap();
            assert!(s.asymmetry() <= 1e-12);
        }
        // PSD: all leading principal minors of a symmetric matrix positive
        for i in 0..4 {
            assert!(s.covariance[[i, i]] > 0.0);
        }
    }

    #[test]
    fn tracker_reinit_matches_baseline() {
        let mut t = KalmanTracker::new(KalmanConfig::default(), 0.02).unwrap();
        assert!(matches!(t.predict(1), Err(Error::InsufficientHistory { .. })));
        t.observe(0, Location::new(0.0, 0.0)).unwrap();
        t.observe(1, Location::new(0.5, 0.2)).unwrap();
        assert!(close(t.predict(2).unwrap(), Location::new(1.0, 0.4), 1e-12));
        // three slots ahead over a gap
        assert!(close(t.predict(4).unwrap(), Location::new(2.0, 0.8), 1e-12));
        // a non-adjacent pair uses the true time separation
        t.observe(4, Location::new(2.0, 0.8)).unwrap();
        assert!(close(t.predict(5).unwrap(), Location::new(2.5, 1.0), 1e-12));
        assert!(t.observe(4, Location::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn continuous_tracker_follows_a_straight_line() {
        let cfg = KalmanConfig {
            mode: KalmanMode::Continuous,
            ..KalmanConfig::default()
        };
        let mut t = KalmanTracker::new(cfg, 0.02).unwrap();
        for k in 0..50 {
            t.observe(k, Location::new(0.55 * k as f64, 2.0)).unwrap();
        }
        assert!(close(t.predict(50).unwrap(), Location::new(27.5, 2.0), 1e-9));
    }

    proptest! {
        #[test]
        fn baseline_is_linear_extrapolation(
            ax in -100.0..100.0f64, ay in -100.0..100.0f64,
            dx in -2.0..2.0f64, dy in -2.0..2.0f64,
        ) {
            let a = Location::new(ax, ay);
            let b = a + Location::new(dx, dy);
            let p = baseline_predict([a, b], 0.02);
            prop_assert!(p.distance(b + Location::new(dx, dy)) < 1e-9);
        }
    }
}
