//! Stacked two-layer LSTM location predictor.
//!
//! The network sees a window of `L` past locations expressed as displacements
//! from the newest one (`u_{k−1}`), runs them through two stacked LSTM layers
//! from a zero initial state, and maps the last layer-2 hidden state through a
//! linear head to a predicted displacement. Adding the anchor back gives the
//! predicted location, which makes prediction exactly translation-equivariant.

mod cell;
mod gradcheck;
mod network;
mod persist;
mod train;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RandomSource;
use crate::scenario::{relative_angle, Location, TrajectoryWindow};

pub use cell::{cell_backward, cell_forward, lstm_cell_forward, CellCache, CellGrads};
pub use gradcheck::{grad_check, grad_check_against, GradCheckReport};
pub use network::{backward, batch_inputs, forward, forward_batch, loss_and_gradients, mse_loss, ForwardCache};
pub use persist::{load_model, model_from_json, model_to_json, save_model, SCHEMA_VERSION};
pub use train::{
    adam_step, adam_update, build_dataset, evaluate_loss, train, EpochLoss, LossHistory, OptimizerState, TrainConfig,
    TrainingExample,
};

/// Hidden sizes of the reference network.
pub const HIDDEN1: usize = 50;
pub const HIDDEN2: usize = 100;
pub const INPUT_SIZE: usize = 2;
pub const OUTPUT_SIZE: usize = 2;

/// Parameters of one LSTM layer; gate blocks ordered input, forget,
/// candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `4H × D`
    pub w_input: Array2<f64>,
    /// `4H × H`
    pub w_hidden: Array2<f64>,
    /// `4H`
    pub bias: Array1<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmLayerParams {
            w_input: Array2::zeros((4 * hidden_size, input_size)),
            w_hidden: Array2::zeros((4 * hidden_size, hidden_size)),
            bias: Array1::zeros(4 * hidden_size),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_input.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hidden.ncols()
    }

    /// Uniform `±1/√fan_in` weights with the forget-gate bias set to +1.
    fn init(input_size: usize, hidden_size: usize, rng: &mut RandomSource) -> Self {
        let mut p = Self::zeros(input_size, hidden_size);
        fill_uniform(p.w_input.as_slice_mut().unwrap(), input_size, rng);
        fill_uniform(p.w_hidden.as_slice_mut().unwrap(), hidden_size, rng);
        fill_uniform(p.bias.as_slice_mut().unwrap(), hidden_size, rng);
        p.bias.slice_mut(ndarray::s![hidden_size..2 * hidden_size]).fill(1.0);
        p
    }

    fn check(&self) -> Result<()> {
        let h = self.hidden_size();
        if self.w_input.nrows() != 4 * h || self.w_hidden.nrows() != 4 * h || self.bias.len() != 4 * h {
            return Err(Error::Dimension(format!(
                "inconsistent LSTM layer: w_input {:?}, w_hidden {:?}, bias {}",
                self.w_input.dim(),
                self.w_hidden.dim(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

fn fill_uniform(values: &mut [f64], fan_in: usize, rng: &mut RandomSource) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = rng.uniform(-bound, bound).expect("bounds ordered");
    }
}

/// All trainable tensors. Gradients and Adam moments share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LrnetParams {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    /// `2 × H2`
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
}

impl LrnetParams {
    pub fn zeros(hidden1: usize, hidden2: usize) -> Self {
        LrnetParams {
            layer1: LstmLayerParams::zeros(INPUT_SIZE, hidden1),
            layer2: LstmLayerParams::zeros(hidden1, hidden2),
            fc_weight: Array2::zeros((OUTPUT_SIZE, hidden2)),
            fc_bias: Array1::zeros(OUTPUT_SIZE),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layer1.hidden_size(), self.layer2.hidden_size())
    }

    /// Draw order: layer 1 (input, hidden, bias), layer 2, head weight, head
    /// bias; row-major within each tensor.
    pub fn init(hidden1: usize, hidden2: usize, seed: u64) -> Self {
        let mut rng = RandomSource::new(seed);
        let layer1 = LstmLayerParams::init(INPUT_SIZE, hidden1, &mut rng);
        let layer2 = LstmLayerParams::init(hidden1, hidden2, &mut rng);
        let mut fc_weight = Array2::zeros((OUTPUT_SIZE, hidden2));
        fill_uniform(fc_weight.as_slice_mut().unwrap(), hidden2, &mut rng);
        let mut fc_bias = Array1::zeros(OUTPUT_SIZE);
        fill_uniform(fc_bias.as_slice_mut().unwrap(), hidden2, &mut rng);
        LrnetParams {
            layer1,
            layer2,
            fc_weight,
            fc_bias,
        }
    }

    pub const TENSOR_NAMES: [&'static str; 8] = [
        "layer1.w_input",
        "layer1.w_hidden",
        "layer1.bias",
        "layer2.w_input",
        "layer2.w_hidden",
        "layer2.bias",
        "fc_weight",
        "fc_bias",
    ];

    /// Flat row-major views of every tensor, in `TENSOR_NAMES` order.
    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            self.layer1.w_input.as_slice().unwrap(),
            self.layer1.w_hidden.as_slice().unwrap(),
            self.layer1.bias.as_slice().unwrap(),
            self.layer2.w_input.as_slice().unwrap(),
            self.layer2.w_hidden.as_slice().unwrap(),
            self.layer2.bias.as_slice().unwrap(),
            self.fc_weight.as_slice().unwrap(),
            self.fc_bias.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.layer1.w_input.as_slice_mut().unwrap(),
            self.layer1.w_hidden.as_slice_mut().unwrap(),
            self.layer1.bias.as_slice_mut().unwrap(),
            self.layer2.w_input.as_slice_mut().unwrap(),
            self.layer2.w_hidden.as_slice_mut().unwrap(),
            self.layer2.bias.as_slice_mut().unwrap(),
            self.fc_weight.as_slice_mut().unwrap(),
            self.fc_bias.as_slice_mut().unwrap(),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check(&self) -> Result<()> {
        self.layer1.check()?;
        self.layer2.check()?;
        if self.layer1.input_size() != INPUT_SIZE
            || self.layer2.input_size() != self.layer1.hidden_size()
            || self.fc_weight.dim() != (OUTPUT_SIZE, self.layer2.hidden_size())
            || self.fc_bias.len() != OUTPUT_SIZE
        {
            return Err(Error::Dimension("layer sizes do not chain".into()));
        }
        Ok(())
    }
}

/// Input normalization: the window becomes displacements from its last
/// column and the label becomes `u_k − u_{k−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationSpec {
    #[default]
    AnchoredDisplacement,
}

impl NormalizationSpec {
    pub fn name(self) -> &'static str {
        match self {
            NormalizationSpec::AnchoredDisplacement => "anchored-displacement",
        }
    }
}

/// Column `i` is `u_{k−L+i} − u_{k−1}`; returns the columns and the anchor.
pub fn normalize(window: &TrajectoryWindow, spec: NormalizationSpec) -> (Vec<[f64; 2]>, Location) {
    match spec {
        NormalizationSpec::AnchoredDisplacement => {
            let anchor = window.last();
            let cols = window
                .columns
                .iter()
                .map(|&c| {
                    let d = c - anchor;
                    [d.x, d.y]
                })
                .collect();
            (cols, anchor)
        }
    }
}

pub fn denormalize(pred: [f64; 2], anchor: Location) -> Location {
    anchor + Location::new(pred[0], pred[1])
}

/// The trained (or untrained) network plus the metadata needed to use it.
#[derive(Debug, Clone, PartialEq)]
pub struct LrnetModel {
    pub params: LrnetParams,
    pub window_l: usize,
    pub norm_spec: NormalizationSpec,
    /// Seed used for initialization and training.
    pub seed: u64,
}

impl LrnetModel {
    pub fn new(window_l: usize, hidden1: usize, hidden2: usize, seed: u64) -> Self {
        LrnetModel {
            params: LrnetParams::init(hidden1, hidden2, seed),
            window_l,
            norm_spec: NormalizationSpec::default(),
            seed,
        }
    }

    /// Reference shape: `L` steps, hidden sizes 50 and 100.
    pub fn reference(window_l: usize, seed: u64) -> Self {
        Self::new(window_l, HIDDEN1, HIDDEN2, seed)
    }

    pub fn zeros(window_l: usize, hidden1: usize, hidden2: usize) -> Self {
        LrnetModel {
            params: LrnetParams::zeros(hidden1, hidden2),
            window_l,
            norm_spec: NormalizationSpec::default(),
            seed: 0,
        }
    }

    pub fn hidden_sizes(&self) -> (usize, usize) {
        (self.params.layer1.hidden_size(), self.params.layer2.hidden_size())
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_l == 0 {
            return Err(Error::Dimension("window length must be positive".into()));
        }
        self.params.check()
    }

    /// Predicts many windows in one batched pass.
    pub fn predict_batch(&self, windows: &[TrajectoryWindow]) -> Result<Vec<Location>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(256) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut anchors = Vec::with_capacity(chunk.len());
            for w in chunk {
                if w.len() != self.window_l {
                    return Err(Error::Dimension(format!(
                        "window has {} columns, model expects {}",
                        w.len(),
                        self.window_l
                    )));
                }
                let (cols, anchor) = normalize(w, self.norm_spec);
                inputs.push(cols);
                anchors.push(anchor);
            }
            let refs: Vec<&[[f64; 2]]> = inputs.iter().map(Vec::as_slice).collect();
            let (pred, _) = forward_batch(&self.params, &batch_inputs(&refs));
            for (row, anchor) in pred.outer_iter().zip(anchors) {
                out.push(denormalize([row[0], row[1]], anchor));
            }
        }
        Ok(out)
    }
}

/// Anything that maps a history window to a location estimate for its target slot.
pub trait LocationPredictor {
    fn window_len(&self) -> usize;
    fn predict_location(&self, window: &TrajectoryWindow) -> Result<Location>;
}

impl LocationPredictor for LrnetModel {
    fn window_len(&self) -> usize {
        self.window_l
    }

    fn predict_location(&self, window: &TrajectoryWindow) -> Result<Location> {
        let (pred, _) = forward(self, window)?;
        Ok(denormalize(pred, window.last()))
    }
}

/// Predicts `u_k = u_{k−1}`.
#[derive(Debug, Clone, Copy)]
pub struct PersistencePredictor {
    pub window_l: usize,
}

impl LocationPredictor for PersistencePredictor {
    fn window_len(&self) -> usize {
        self.window_l
    }

    fn predict_location(&self, window: &TrajectoryWindow) -> Result<Location> {
        if window.is_empty() {
            return Err(Error::Dimension("empty window".into()));
        }
        Ok(window.last())
    }
}

pub fn predict_location<P: LocationPredictor + ?Sized>(model: &P, window: &TrajectoryWindow) -> Result<Location> {
    model.predict_location(window)
}

/// Angle of the predicted location as seen from `ue`.
pub fn predict_angle<P: LocationPredictor + ?Sized>(model: &P, window: &TrajectoryWindow, ue: Location) -> Result<f64> {
    relative_angle(model.predict_location(window)?, ue)
}

/// Rolls the predictor forward by feeding each prediction back as the newest
/// column; returns `[ũ_k, ũ_{k+1}, …]`.
pub fn predict_multi_step<P: LocationPredictor + ?Sized>(
    model: &P,
    window: &TrajectoryWindow,
    steps: usize,
) -> Result<Vec<Location>> {
    if steps == 0 {
        return Err(Error::Domain("multi-step prediction needs at least one step".into()));
    }
    let mut current = window.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = model.predict_location(&current)?;
        out.push(next);
        current = current.shifted(next);
    }
    Ok(out)
}
