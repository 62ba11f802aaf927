//! Unrolled forward pass, MSE cost and backpropagation through time.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::scenario::TrajectoryWindow;

use super::cell::{cell_backward, cell_forward, CellCache};
use super::{normalize, LrnetModel, LrnetParams};

/// Per-step caches of both layers plus the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer1: Vec<CellCache>,
    layer2: Vec<CellCache>,
    h2_last: Array2<f64>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    pub fn steps(&self) -> usize {
        self.layer1.len()
    }
}

/// Transposes per-example sequences into one `B × 2` matrix per time step.
pub fn batch_inputs(examples: &[&[[f64; 2]]]) -> Vec<Array2<f64>> {
    let steps = examples.first().map_or(0, |e| e.len());
    (0..steps)
        .map(|t| Array2::from_shape_fn((examples.len(), 2), |(b, j)| examples[b][t][j]))
        .collect()
}

/// Runs both layers over all steps from a zero state; output is
/// `fc_weight · h2_L + fc_bias` per row.
pub fn forward_batch(params: &LrnetParams, inputs: &[Array2<f64>]) -> (Array2<f64>, ForwardCache) {
    let batch = inputs.first().map_or(0, |x| x.nrows());
    let (h1_size, h2_size) = (params.layer1.hidden_size(), params.layer2.hidden_size());
    let mut h1 = Array2::zeros((batch, h1_size));
    let mut c1 = Array2::zeros((batch, h1_size));
    let mut h2 = Array2::zeros((batch, h2_size));
    let mut c2 = Array2::zeros((batch, h2_size));
    let mut layer1 = Vec::with_capacity(inputs.len());
    let mut layer2 = Vec::with_capacity(inputs.len());

    for x in inputs {
        let (h, c, cache) = cell_forward(&params.layer1, x.view(), h1.view(), c1.view());
        layer1.push(cache);
        h1 = h;
        c1 = c;
        let (h, c, cache) = cell_forward(&params.layer2, h1.view(), h2.view(), c2.view());
        layer2.push(cache);
        h2 = h;
        c2 = c;
    }

    let mut output = h2.dot(&params.fc_weight.t());
    output += &params.fc_bias;
    let cache = ForwardCache {
        layer1,
        layer2,
        h2_last: h2,
        output: output.clone(),
    };
    (output, cache)
}

/// Normalized prediction for one window.
pub fn forward(model: &LrnetModel, window: &TrajectoryWindow) -> Result<([f64; 2], ForwardCache)> {
    if window.len() != model.window_l {
        return Err(Error::Dimension(format!(
            "window has {} columns, model expects {}",
            window.len(),
            model.window_l
        )));
    }
    let (cols, _) = normalize(window, model.norm_spec);
    let (out, cache) = forward_batch(&model.params, &batch_inputs(&[&cols]));
    Ok(([out[[0, 0]], out[[0, 1]]], cache))
}

/// `(1/(2n)) Σ ‖label − pred‖²`.
pub fn mse_loss(preds: &[[f64; 2]], labels: &[[f64; 2]]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let total: f64 = preds
        .iter()
        .zip(labels)
        .map(|(p, l)| (l[0] - p[0]).powi(2) + (l[1] - p[1]).powi(2))
        .sum();
    Ok(total / (2.0 * preds.len() as f64))
}

/// Exact gradient of [`mse_loss`] over the cached batch w.r.t. every parameter.
pub fn backward(params: &LrnetParams, cache: &ForwardCache, labels: &[[f64; 2]]) -> Result<LrnetParams> {
    let n = cache.batch_size();
    if labels.len() != n {
        return Err(Error::Dimension(format!(
            "cache holds {n} examples but {} labels were given",
            labels.len()
        )));
    }
    if cache.layer1.len() != cache.layer2.len() || cache.h2_last.ncols() != params.layer2.hidden_size() {
        return Err(Error::Dimension("cache does not match the parameters".into()));
    }
    let mut grads = params.zeros_like();

    let mut d_out = cache.output.clone();
    for (mut row, label) in d_out.outer_iter_mut().zip(labels) {
        row[0] = (row[0] - label[0]) / n as f64;
        row[1] = (row[1] - label[1]) / n as f64;
    }
    grads.fc_weight = d_out.t().dot(&cache.h2_last);
    grads.fc_bias = d_out.sum_axis(Axis(0));

    let (h1_size, h2_size) = (params.layer1.hidden_size(), params.layer2.hidden_size());
    let mut dh2 = d_out.dot(&params.fc_weight);
    let mut dc2 = Array2::zeros((n, h2_size));
    let mut dh1_next = Array2::<f64>::zeros((n, h1_size));
    let mut dc1 = Array2::zeros((n, h1_size));

    for t in (0..cache.layer1.len()).rev() {
        let g2 = cell_backward(
            &params.layer2,
            &cache.layer2[t],
            dh2.view(),
            dc2.view(),
            &mut grads.layer2,
        );
        dh2 = g2.dh_prev;
        dc2 = g2.dc_prev;
        let dh1 = g2.dx + &dh1_next;
        let g1 = cell_backward(
            &params.layer1,
            &cache.layer1[t],
            dh1.view(),
            dc1.view(),
            &mut grads.layer1,
        );
        dh1_next = g1.dh_prev;
        dc1 = g1.dc_prev;
    }
    Ok(grads)
}

/// Loss and gradient for a batch of normalized sequences.
pub fn loss_and_gradients(
    params: &LrnetParams,
    inputs: &[&[[f64; 2]]],
    labels: &[[f64; 2]],
) -> Result<(f64, LrnetParams)> {
    let (out, cache) = forward_batch(params, &batch_inputs(inputs));
    let preds: Vec<[f64; 2]> = out.outer_iter().map(|r| [r[0], r[1]]).collect();
    let loss = mse_loss(&preds, labels)?;
    let grads = backward(params, &cache, labels)?;
    Ok((loss, grads))
}
