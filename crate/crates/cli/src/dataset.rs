//! Trajectory files written by `generate` and read by `train`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use uavbeam::lrnet::{normalize, NormalizationSpec, TrainingExample};
use uavbeam::numerics::derive_seed;
use uavbeam::scenario::{generate_trajectory, window, Location, ScenarioConfig, Trajectory};
use uavbeam::{Error, Result};

const FORMAT: &str = "uavbeam-trajectories";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub format: String,
    pub scenario: ScenarioConfig,
    /// Trajectory `i` was generated with seed `derive_seed(seed, i)`.
    pub seed: u64,
    pub trajectories: Vec<Vec<Location>>,
}

impl DatasetFile {
    pub fn generate(scenario: &ScenarioConfig, n_trajectories: usize, seed: u64) -> Result<Self> {
        if n_trajectories == 0 {
            return Err(Error::Config("at least one trajectory is required".into()));
        }
        let trajectories = (0..n_trajectories)
            .map(|i| generate_trajectory(&scenario.with_seed(derive_seed(seed, i as u64))).map(|t| t.locations))
            .collect::<Result<_>>()?;
        Ok(DatasetFile {
            format: FORMAT.into(),
            scenario: scenario.clone(),
            seed,
            trajectories,
        })
    }

    pub fn trajectory_seeds(&self) -> Vec<u64> {
        (0..self.trajectories.len())
            .map(|i| derive_seed(self.seed, i as u64))
            .collect()
    }

    /// Every sliding window of every trajectory, as normalized examples.
    pub fn examples(&self) -> Result<Vec<TrainingExample>> {
        let l = self.scenario.window_l;
        let mut out = Vec::new();
        for locations in &self.trajectories {
            let traj = Trajectory {
                locations: locations.clone(),
                config_hash: self.scenario.fingerprint(),
            };
            for k in l..traj.len() {
                let (input, anchor) = normalize(&window(&traj, k, l)?, NormalizationSpec::AnchoredDisplacement);
                let d = traj.locations[k] - anchor;
                out.push(TrainingExample {
                    input,
                    label: [d.x, d.y],
                    anchor,
                });
            }
        }
        if out.is_empty() {
            return Err(Error::Config("trajectories are too short for the window length".into()));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("dataset serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DatasetFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.format != FORMAT {
            return Err(Error::Schema(format!("unexpected format tag {:?}", file.format)));
        }
        file.scenario.validate()?;
        Ok(file)
    }
}
