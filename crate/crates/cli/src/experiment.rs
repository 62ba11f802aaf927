//! Episode simulation under the three beam-alignment schemes.
//!
//! The UAV always knows its own location, so the transmit beam is matched to
//! the true angle; schemes differ only in the receive beam the UE forms from
//! its estimate of the UAV location. Slots before the history window fills
//! use genie alignment for every scheme.

use std::collections::BTreeSet;

use uavbeam::kalman::{KalmanConfig, KalmanTracker};
use uavbeam::lrnet::{predict_multi_step, LocationPredictor};
use uavbeam::phy::{beam_gain, rate, snr, steering, ChannelState, Side};
use uavbeam::scenario::{generate_trajectory, relative_angle, Location, ScenarioConfig, TrajectoryWindow};
use uavbeam::{Error, Result};

pub const SCHEMES: [&str; 3] = ["genie", "lrnet", "kalman"];

/// What one scheme did at one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOutcome {
    pub predicted: Location,
    pub angle: f64,
    pub beam_gain: f64,
    pub snr: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub k: usize,
    pub true_location: Location,
    pub true_angle: f64,
    pub range: f64,
    /// Genie alignment was forced for every scheme at this slot.
    pub warm_up: bool,
    pub genie: SchemeOutcome,
    pub lrnet: SchemeOutcome,
    pub kalman: SchemeOutcome,
}

impl EpisodeRecord {
    pub fn scheme(&self, index: usize) -> &SchemeOutcome {
        match index {
            0 => &self.genie,
            1 => &self.lrnet,
            _ => &self.kalman,
        }
    }

    pub fn error(&self, index: usize) -> f64 {
        self.scheme(index).predicted.distance(self.true_location)
    }
}

/// Seeds and configuration identity of one evaluated episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMeta {
    pub index: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub meta: EpisodeMeta,
    pub records: Vec<EpisodeRecord>,
}

fn outcome(state: &ChannelState, predicted: Location, ue: Location, cfg: &ScenarioConfig) -> Result<SchemeOutcome> {
    let angle = relative_angle(predicted, ue)?;
    let rx = steering(angle, cfg.n_rx, Side::Receive)?;
    let snr_value = snr(state, &rx, cfg.p_t, cfg.sigma2)?;
    Ok(SchemeOutcome {
        predicted,
        angle,
        beam_gain: beam_gain(angle, state.theta, cfg.n_rx),
        snr: snr_value,
        rate: rate(snr_value)?,
    })
}

/// Predicts the true location of the window's target slot. Useful as an
/// upper-bound stand-in for a trained model.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub truth: Vec<Location>,
    pub window_l: usize,
}

impl LocationPredictor for OraclePredictor {
    fn window_len(&self) -> usize {
        self.window_l
    }

    fn predict_location(&self, window: &TrajectoryWindow) -> Result<Location> {
        self.truth
            .get(window.target_index)
            .copied()
            .ok_or_else(|| Error::Domain(format!("oracle has no location for slot {}", window.target_index)))
    }
}

/// One episode on the trajectory seeded by `episode_seed`.
pub fn run_episode<P: LocationPredictor + ?Sized>(
    model: &P,
    cfg: &ScenarioConfig,
    episode_seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    run_failover_episode(model, cfg, episode_seed, &BTreeSet::new(), KalmanConfig::default())
}

/// Like [`run_episode`], but at every slot in `blackout` the UE never
/// receives `u_{k−1}`. Lost locations stay lost: LRNet fills them with its
/// own rolled-forward predictions, and the Kalman baseline extrapolates from
/// the last two locations it did receive.
pub fn run_failover_episode<P: LocationPredictor + ?Sized>(
    model: &P,
    cfg: &ScenarioConfig,
    episode_seed: u64,
    blackout: &BTreeSet<usize>,
    kalman: KalmanConfig,
) -> Result<Vec<EpisodeRecord>> {
    let cfg = cfg.with_seed(episode_seed);
    let l = cfg.window_l;
    if model.window_len() != l {
        return Err(Error::Config(format!(
            "model window {} does not match window_l {l}",
            model.window_len()
        )));
    }
    if let Some(&bad) = blackout.iter().find(|&&k| k < l || k >= cfg.k_slots) {
        return Err(Error::Config(format!(
            "blackout slot {bad} outside the predicted range {l}..{}",
            cfg.k_slots
        )));
    }
    if cfg.k_slots > l && blackout.len() == cfg.k_slots - l {
        return Err(Error::Config("blackout covers the entire episode".into()));
    }

    let traj = generate_trajectory(&cfg)?;
    let ue = cfg.ue_pos;
    let mut tracker = KalmanTracker::new(kalman, cfg.delta_t)?;
    // What the UE believes the past locations were; lost entries hold the
    // LRNet scheme's own predictions.
    let mut believed: Vec<Location> = Vec::with_capacity(traj.len());
    // Trailing run of lost locations at the current slot.
    let mut missing = 0usize;
    let mut records = Vec::with_capacity(traj.len());

    for (k, &u) in traj.locations.iter().enumerate() {
        let state = ChannelState::from_geometry(u, ue, &cfg)?;
        let genie = outcome(&state, u, ue, &cfg)?;
        if k > 0 {
            if blackout.contains(&k) {
                missing += 1;
            } else {
                missing = 0;
                tracker.observe(k - 1, traj.locations[k - 1])?;
                believed[k - 1] = traj.locations[k - 1];
            }
        }

        let record = if k < l {
            EpisodeRecord {
                k,
                true_location: u,
                true_angle: state.theta,
                range: state.range,
                warm_up: true,
                genie,
                lrnet: genie,
                kalman: genie,
            }
        } else {
            // the newest `missing` believed entries are stand-ins; roll the
            // predictor forward from the last window of received columns
            let end = k - missing;
            let start = end
                .checked_sub(l)
                .ok_or(Error::InsufficientHistory { slot: k, needed: l })?;
            let w = TrajectoryWindow::new(believed[start..end].to_vec(), end);
            let lrnet_pred = *predict_multi_step(model, &w, missing + 1)?.last().expect("one step");
            let kalman_pred = tracker.predict(k)?;
            EpisodeRecord {
                k,
                true_location: u,
                true_angle: state.theta,
                range: state.range,
                warm_up: false,
                genie,
                lrnet: outcome(&state, lrnet_pred, ue, &cfg)?,
                kalman: outcome(&state, kalman_pred, ue, &cfg)?,
            }
        };
        // until (and unless) u_k arrives, the UE's belief is the LRNet estimate
        believed.push(record.lrnet.predicted);
        records.push(record);
    }
    Ok(records)
}
