//! Dataset construction, Adam optimizer and the mini-batch training loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{derive_seed, RandomSource};
use crate::scenario::{generate_trajectory, window, Location, ScenarioConfig};

use super::network::{batch_inputs, forward_batch, loss_and_gradients};
use super::{normalize, LrnetModel, LrnetParams, NormalizationSpec};

/// One normalized (input, label) pair together with its anchor `u_{k−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: Vec<[f64; 2]>,
    pub label: [f64; 2],
    pub anchor: Location,
}

impl TrainingExample {
    pub fn target(&self) -> Location {
        self.anchor + Location::new(self.label[0], self.label[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Requested training-set size; rounded up to whole trajectories.
    pub n_examples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_examples: 9000,
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: 5.0,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_examples == 0 {
            bad.push("n_examples");
        }
        if self.epochs == 0 {
            bad.push("epochs");
        }
        if self.batch_size == 0 {
            bad.push("batch_size");
        }
        if !(self.learning_rate >= 0.0) {
            bad.push("learning_rate");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            bad.push("adam_beta1");
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            bad.push("adam_beta2");
        }
        if !(self.adam_eps > 0.0) {
            bad.push("adam_eps");
        }
        if !(self.grad_clip_norm > 0.0) {
            bad.push("grad_clip_norm");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            bad.push("validation_fraction");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training fields: {}", bad.join(", "))))
        }
    }

    /// Trajectories needed to reach `n_examples` windows under `scenario`.
    pub fn n_trajectories(&self, scenario: &ScenarioConfig) -> usize {
        let per = scenario.k_slots.saturating_sub(scenario.window_l).max(1);
        self.n_examples.div_ceil(per)
    }
}

/// Adam moments with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: LrnetParams,
    pub second_moment: LrnetParams,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(params: &LrnetParams) -> Self {
        OptimizerState {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }
}

/// Bias-corrected Adam update of one flat tensor at step `t` (1-based).
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &TrainConfig) {
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

/// Clips `grads` to `grad_clip_norm` (global L2 norm) and applies one Adam step.
pub fn adam_step(
    model: &mut LrnetModel,
    grads: &mut LrnetParams,
    state: &mut OptimizerState,
    cfg: &TrainConfig,
) -> Result<()> {
    let layout = |p: &LrnetParams| p.tensors().map(|t| t.len());
    if layout(grads) != layout(&model.params) || layout(&state.first_moment) != layout(&model.params) {
        return Err(Error::Dimension(
            "gradient or optimizer layout does not match the model".into(),
        ));
    }
    let norm = grads.sq_norm().sqrt();
    if norm > cfg.grad_clip_norm {
        grads.scale(cfg.grad_clip_norm / norm);
    }
    state.step_count += 1;
    let t = state.step_count;
    let params = model.params.tensors_mut();
    let m = state.first_moment.tensors_mut();
    let v = state.second_moment.tensors_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(m).zip(v) {
        adam_update(p, g, m, v, t, cfg);
    }
    Ok(())
}

/// Every window of `n_trajectories` seeded trajectories, in trajectory order.
/// Trajectory `i` uses seed `derive_seed(seed, i)`.
pub fn build_dataset(cfg: &ScenarioConfig, n_trajectories: usize, seed: u64) -> Result<Vec<TrainingExample>> {
    if n_trajectories == 0 {
        return Err(Error::Domain("dataset needs at least one trajectory".into()));
    }
    cfg.validate()?;
    let l = cfg.window_l;
    let mut out = Vec::with_capacity(n_trajectories * (cfg.k_slots - l));
    for i in 0..n_trajectories {
        let traj = generate_trajectory(&cfg.with_seed(derive_seed(seed, i as u64)))?;
        for k in l..traj.len() {
            let w = window(&traj, k, l)?;
            let (input, anchor) = normalize(&w, NormalizationSpec::AnchoredDisplacement);
            let d = traj.locations[k] - anchor;
            out.push(TrainingExample {
                input,
                label: [d.x, d.y],
                anchor,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Loss per epoch; entry 0 is the untrained model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl LossHistory {
    pub fn initial(&self) -> Option<EpochLoss> {
        self.epochs.first().copied()
    }

    pub fn last(&self) -> Option<EpochLoss> {
        self.epochs.last().copied()
    }

    pub fn best(&self) -> Option<EpochLoss> {
        self.epochs.get(self.best_epoch).copied()
    }
}

/// Mean MSE cost of `params` over `examples`.
pub fn evaluate_loss(params: &LrnetParams, examples: &[&TrainingExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Domain("empty evaluation set".into()));
    }
    let mut total = 0.0;
    for chunk in examples.chunks(256) {
        let inputs: Vec<&[[f64; 2]]> = chunk.iter().map(|e| e.input.as_slice()).collect();
        let (out, _) = forward_batch(params, &batch_inputs(&inputs));
        for (row, e) in out.outer_iter().zip(chunk) {
            total += (row[0] - e.label[0]).powi(2) + (row[1] - e.label[1]).powi(2);
        }
    }
    Ok(total / (2.0 * examples.len() as f64))
}

/// Mini-batch Adam with a seeded validation split and best-validation
/// checkpointing. The split and every epoch's batch order come from
/// `cfg.seed`; gradients are reduced in example order, so runs are
/// bit-reproducible.
pub fn train(model: &LrnetModel, dataset: &[TrainingExample], cfg: &TrainConfig) -> Result<(LrnetModel, LossHistory)> {
    cfg.validate()?;
    model.validate()?;
    if dataset.len() < 2 {
        return Err(Error::Domain("training needs at least two examples".into()));
    }
    if let Some(bad) = dataset.iter().find(|e| e.input.len() != model.window_l) {
        return Err(Error::Dimension(format!(
            "example has {} steps, model expects {}",
            bad.input.len(),
            model.window_l
        )));
    }

    let mut rng = RandomSource::new(cfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    rng.shuffle(&mut order);
    let n_val = ((dataset.len() as f64 * cfg.validation_fraction).ceil() as usize).clamp(1, dataset.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<&TrainingExample> = val_idx.iter().map(|&i| &dataset[i]).collect();
    let mut train_idx = train_idx.to_vec();

    let mut current = model.clone();
    current.seed = cfg.seed;
    let mut state = OptimizerState::new(&current.params);
    let mut best = current.clone();
    let train_set: Vec<&TrainingExample> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let initial = EpochLoss {
        epoch: 0,
        train_loss: evaluate_loss(&current.params, &train_set)?,
        val_loss: evaluate_loss(&current.params, &val)?,
    };
    if !initial.train_loss.is_finite() || !initial.val_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut history = LossHistory {
        epochs: vec![initial],
        best_epoch: 0,
    };

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut train_idx);
        let mut weighted = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let inputs: Vec<&[[f64; 2]]> = batch.iter().map(|&i| dataset[i].input.as_slice()).collect();
            let labels: Vec<[f64; 2]> = batch.iter().map(|&i| dataset[i].label).collect();
            let (loss, mut grads) = loss_and_gradients(&current.params, &inputs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            weighted += loss * batch.len() as f64;
            adam_step(&mut current, &mut grads, &mut state, cfg)?;
        }
        let val_loss = evaluate_loss(&current.params, &val)?;
        if !val_loss.is_finite() || !current.params.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.epochs.push(EpochLoss {
            epoch,
            train_loss: weighted / train_idx.len() as f64,
            val_loss,
        });
        if val_loss < history.epochs[history.best_epoch].val_loss {
            history.best_epoch = epoch;
            best = current.clone();
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lrnet::{predict_location, predict_multi_step};
    use crate::scenario::TrajectoryWindow;

    #[test]
    fn dataset_size_and_round_trip() {
        let cfg = ScenarioConfig::default();
        let data = build_dataset(&cfg, 1, 5).unwrap();
        assert_eq!(data.len(), 180);
        let traj = generate_trajectory(&cfg.with_seed(derive_seed(5, 0))).unwrap();
        for (k, ex) in (20..200).zip(&data) {
            assert_eq!(ex.target(), traj.locations[k]);
            assert_eq!(ex.anchor, traj.locations[k - 1]);
            assert_eq!(*ex.input.last().unwrap(), [0.0, 0.0]);
        }
        assert_eq!(data, build_dataset(&cfg, 1, 5).unwrap());
        assert!(build_dataset(&cfg, 0, 5).is_err());
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut model = LrnetModel::new(3, 4, 5, 1);
        let before = model.params.clone();
        let mut grads = model.params.zeros_like();
        let mut state = OptimizerState::new(&model.params);
        let cfg = TrainConfig::default();
        adam_step(&mut model, &mut grads, &mut state, &cfg).unwrap();
        assert_eq!(model.params, before);
        assert_eq!(state.step_count, 1);
        adam_step(&mut model, &mut grads, &mut state, &cfg).unwrap();
        assert_eq!(state.step_count, 2);
    }

    #[test]
    fn adam_first_step_scalar() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut p = [1.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &cfg);
        // m̂ = 1, v̂ = 1 → step = lr / (1 + eps)
        assert!((1.0 - p[0] - 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_clips_global_norm() {
        let mut model = LrnetModel::new(3, 4, 5, 1);
        let mut grads = model.params.zeros_like();
        grads.fc_bias[0] = 30.0;
        grads.fc_bias[1] = 40.0;
        let mut state = OptimizerState::new(&model.params);
        adam_step(&mut model, &mut grads, &mut state, &TrainConfig::default()).unwrap();
        assert!((grads.sq_norm().sqrt() - 5.0).abs() < 1e-12);
        assert!((grads.fc_bias[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_initial_model() {
        let cfg = ScenarioConfig {
            k_slots: 30,
            window_l: 5,
            ..ScenarioConfig::default()
        };
        let data = build_dataset(&cfg, 2, 1).unwrap();
        let model = LrnetModel::new(5, 4, 5, 3);
        let tc = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (trained, history) = train(&model, &data, &tc).unwrap();
        assert_eq!(trained.params, model.params);
        assert_eq!(history.epochs.len(), 4);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = ScenarioConfig {
            k_slots: 40,
            window_l: 6,
            ..ScenarioConfig::default()
        };
        let data = build_dataset(&cfg, 3, 2).unwrap();
        let model = LrnetModel::new(6, 4, 6, 3);
        let tc = TrainConfig {
            epochs: 4,
            batch_size: 16,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ha) = train(&model, &data, &tc).unwrap();
        let (b, hb) = train(&model, &data, &tc).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = ScenarioConfig {
            k_slots: 30,
            window_l: 5,
            ..ScenarioConfig::default()
        };
        let mut data = build_dataset(&cfg, 1, 1).unwrap();
        data[3].label = [f64::NAN, 0.0];
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let err = train(&LrnetModel::new(5, 3, 4, 1), &data, &tc).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn constant_velocity_is_learned() {
        let cfg = ScenarioConfig {
            speed_lo: 0.5,
            speed_hi: 0.5,
            heading_lo: 0.3,
            heading_hi: 0.3,
            sigma_v: 0.0,
            k_slots: 60,
            window_l: 8,
            ..ScenarioConfig::default()
        };
        let data = build_dataset(&cfg, 4, 3).unwrap();
        let model = LrnetModel::new(8, 8, 12, 4);
        let tc = TrainConfig {
            epochs: 50,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 5,
            ..TrainConfig::default()
        };
        let (trained, history) = train(&model, &data, &tc).unwrap();
        let best = history.best().unwrap();
        assert!(best.val_loss < 1e-4, "val loss {}", best.val_loss);

        let step = Location::new(0.5 * 0.3f64.cos(), 0.5 * 0.3f64.sin());
        let w = TrajectoryWindow::new(
            (0..8)
                .map(|i| Location::new(3.0, 40.0) + Location::new(step.x * i as f64, step.y * i as f64))
                .collect(),
            8,
        );
        let one = predict_location(&trained, &w).unwrap();
        assert!(one.distance(w.last() + step) < 1e-2);
        let two = predict_multi_step(&trained, &w, 2).unwrap();
        let expect = w.last() + Location::new(2.0 * step.x, 2.0 * step.y);
        assert!(two[1].distance(expect) < 1e-2, "{:?} vs {expect:?}", two[1]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            validation_fraction: 0.7,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let scenario = ScenarioConfig::default();
        assert_eq!(TrainConfig::default().n_trajectories(&scenario), 50);
    }
}
