//! The gradient-check suite run by `uavbeam gradcheck`.

use uavbeam::lrnet::{grad_check, GradCheckReport, LrnetModel, TrainingExample};
use uavbeam::numerics::{derive_seed, RandomSource};
use uavbeam::scenario::ScenarioConfig;
use uavbeam::Result;

use crate::dataset::DatasetFile;

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCase {
    pub label: String,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone)]
pub struct GradSuite {
    pub cases: Vec<GradCase>,
}

impl GradSuite {
    pub fn max_relative_error(&self) -> f64 {
        self.cases.iter().fold(0.0, |m, c| m.max(c.report.max_relative_error))
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < TOLERANCE
    }
}

/// A window of a freshly generated trajectory, chosen by `seed`.
fn random_window(window_l: usize, seed: u64) -> Result<TrainingExample> {
    let cfg = ScenarioConfig {
        window_l,
        ..ScenarioConfig::default()
    };
    let mut examples = DatasetFile::generate(&cfg, 1, derive_seed(seed, 0))?.examples()?;
    let mut rng = RandomSource::new(derive_seed(seed, 1));
    let i = rng.below(examples.len());
    Ok(examples.swap_remove(i))
}

/// `small` random 3-step models with hidden sizes 4 and 5, then `full`
/// random windows on the reference 20-step, 50/100 network.
pub fn gradcheck_suite(seed: u64, small: usize, full: usize, mut progress: impl FnMut(&GradCase)) -> Result<GradSuite> {
    let mut cases = Vec::with_capacity(small + full);
    for i in 0..small {
        let s = derive_seed(seed, i as u64);
        let model = LrnetModel::new(3, 4, 5, derive_seed(s, 0));
        let report = grad_check(&model, &random_window(3, derive_seed(s, 1))?, EPSILON)?;
        cases.push(GradCase {
            label: format!("small model {i} (L=3, H=4/5)"),
            report,
        });
        progress(cases.last().expect("just pushed"));
    }
    for i in 0..full {
        let s = derive_seed(seed, 1000 + i as u64);
        let model = LrnetModel::reference(20, derive_seed(s, 0));
        let report = grad_check(&model, &random_window(20, derive_seed(s, 1))?, EPSILON)?;
        cases.push(GradCase {
            label: format!("reference model window {i} (L=20, H=50/100)"),
            report,
        });
        progress(cases.last().expect("just pushed"));
    }
    Ok(GradSuite { cases })
}
