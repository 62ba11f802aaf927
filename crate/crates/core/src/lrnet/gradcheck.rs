//! Central-difference verification of the analytic gradients.
//!
//! For each parameter the quotient `(L(θ+ε) − L(θ−ε)) / 2ε` is evaluated
//! without cancellation: the unperturbed forward pass is run once, and each
//! perturbed copy carries only its *difference* from that pass. Nonlinearity
//! differences use exact identities (`σ(z+d) − σ(z) = σ(z)σ(−z)(e^d − 1) /
//! (1 + σ(z)(e^d − 1))`, and the tanh addition formula), so the loss
//! difference keeps full relative precision even when the gradient entry is
//! many orders of magnitude below the loss. Perturbed copies occupy rows of a
//! batch and share matrix products.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

use super::cell::preactivate;
use super::network::loss_and_gradients;
use super::train::TrainingExample;
use super::{LrnetModel, LrnetParams, LstmLayerParams};

const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_a − g_n| / max(|g_a|, |g_n|, 1e-12)` over all parameters.
    pub max_relative_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub parameters: usize,
}

#[derive(Debug, Clone, Copy)]
struct Perturbation {
    tensor: usize,
    index: usize,
    delta: f64,
}

/// Compares BPTT gradients on a single example with central differences.
pub fn grad_check(model: &LrnetModel, example: &TrainingExample, epsilon: f64) -> Result<GradCheckReport> {
    let (_, grads) = loss_and_gradients(&model.params, &[&example.input], &[example.label])?;
    grad_check_against(model, example, epsilon, &grads)
}

/// Same as [`grad_check`] but against caller-supplied gradients.
pub fn grad_check_against(
    model: &LrnetModel,
    example: &TrainingExample,
    epsilon: f64,
    analytic: &LrnetParams,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if example.input.len() != model.window_l {
        return Err(Error::Dimension(format!(
            "example has {} steps, model expects {}",
            example.input.len(),
            model.window_l
        )));
    }
    let analytic_tensors = analytic.tensors();
    let shapes: Vec<usize> = model.params.tensors().iter().map(|t| t.len()).collect();
    if analytic_tensors.iter().map(|t| t.len()).ne(shapes.iter().copied()) {
        return Err(Error::Dimension("gradient layout does not match the model".into()));
    }

    let all: Vec<(usize, usize)> = shapes
        .iter()
        .enumerate()
        .flat_map(|(t, &n)| (0..n).map(move |i| (t, i)))
        .collect();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: LrnetParams::TENSOR_NAMES[0],
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        parameters: all.len(),
    };
    for chunk in all.chunks(CHUNK) {
        let perturbations: Vec<Perturbation> = chunk
            .iter()
            .flat_map(|&(tensor, index)| [epsilon, -epsilon].map(|delta| Perturbation { tensor, index, delta }))
            .collect();
        let diffs = loss_differences(&model.params, &example.input, example.label, &perturbations);
        for (k, &(tensor, index)) in chunk.iter().enumerate() {
            let numeric = (diffs[2 * k] - diffs[2 * k + 1]) / (2.0 * epsilon);
            let exact = analytic_tensors[tensor][index];
            let denom = exact.abs().max(numeric.abs()).max(1e-12);
            let rel = (exact - numeric).abs() / denom;
            if rel > report.max_relative_error || rel.is_nan() {
                report.max_relative_error = rel;
                report.worst_tensor = LrnetParams::TENSOR_NAMES[tensor];
                report.worst_index = index;
                report.analytic = exact;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Series below 1e-3 are accurate to well under an ulp and much cheaper
/// than the library calls; perturbed differences are almost always that small.
fn exp_m1(d: f64) -> f64 {
    if d.abs() < 1e-3 {
        d * (1.0 + d * (0.5 + d * (1.0 / 6.0 + d * (1.0 / 24.0 + d / 120.0))))
    } else {
        d.exp_m1()
    }
}

fn tanh_small(d: f64) -> f64 {
    if d.abs() < 1e-3 {
        let d2 = d * d;
        d * (1.0 + d2 * (-1.0 / 3.0 + d2 * (2.0 / 15.0 - d2 * 17.0 / 315.0)))
    } else {
        d.tanh()
    }
}

/// `σ(z+d) − σ(z)` from `s = σ(z)` and `s_bar = σ(−z)`.
fn sigmoid_diff(s: f64, s_bar: f64, d: f64) -> f64 {
    let q = exp_m1(d);
    s * s_bar * q / (1.0 + s * q)
}

/// `tanh(z+d) − tanh(z)` from `t = tanh(z)` and `sech2 = 1 − t²`.
fn tanh_diff(t: f64, sech2: f64, d: f64) -> f64 {
    let td = tanh_small(d);
    td * sech2 / (1.0 + t * td)
}

fn sech2(z: f64) -> f64 {
    let c = z.cosh();
    1.0 / (c * c)
}

/// Unperturbed quantities of one layer at one step.
struct BaseStep {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    /// σ(z) for the three sigmoid gates, blocks [input, forget, output].
    sig: [Array1<f64>; 3],
    /// σ(−z) for the same gates.
    sig_bar: [Array1<f64>; 3],
    g: Array1<f64>,
    g_sech2: Array1<f64>,
    tanh_c: Array1<f64>,
    c_sech2: Array1<f64>,
}

fn base_step(
    p: &LstmLayerParams,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
) -> (BaseStep, Array1<f64>, Array1<f64>) {
    let hidden = p.hidden_size();
    let z =
        preactivate(p, x.view().insert_axis(Axis(0)), h_prev.view().insert_axis(Axis(0))).index_axis_move(Axis(0), 0);
    let block = |k: usize| z.slice(s![k * hidden..(k + 1) * hidden]).to_owned();
    let (zi, zf, zg, zo) = (block(0), block(1), block(2), block(3));
    let sig = [zi.mapv(sigmoid), zf.mapv(sigmoid), zo.mapv(sigmoid)];
    let sig_bar = [
        zi.mapv(|v| sigmoid(-v)),
        zf.mapv(|v| sigmoid(-v)),
        zo.mapv(|v| sigmoid(-v)),
    ];
    let g = zg.mapv(f64::tanh);
    let c = &sig[1] * c_prev + &sig[0] * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &sig[2] * &tanh_c;
    let step = BaseStep {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        sig,
        sig_bar,
        g_sech2: zg.mapv(sech2),
        g,
        c_sech2: c.mapv(sech2),
        tanh_c,
    };
    (step, h, c)
}

/// Propagates per-row differences through one layer step.
/// `base` is the index of the layer's first tensor in `TENSOR_NAMES` order.
fn delta_step(
    p: &LstmLayerParams,
    step: &BaseStep,
    dx: ArrayView2<f64>,
    dh_prev: ArrayView2<f64>,
    dc_prev: ArrayView2<f64>,
    perturbations: &[Perturbation],
    base: usize,
) -> (Array2<f64>, Array2<f64>) {
    let hidden = p.hidden_size();
    let mut dz = dh_prev.dot(&p.w_hidden.t());
    if dx.iter().any(|&v| v != 0.0) {
        dz += &dx.dot(&p.w_input.t());
    }
    let (d, h) = (p.input_size(), hidden);
    for (row, pert) in perturbations.iter().enumerate() {
        match pert.tensor.wrapping_sub(base) {
            0 => {
                let c = pert.index % d;
                dz[[row, pert.index / d]] += pert.delta * (step.x[c] + dx[[row, c]]);
            }
            1 => {
                let c = pert.index % h;
                dz[[row, pert.index / h]] += pert.delta * (step.h_prev[c] + dh_prev[[row, c]]);
            }
            2 => dz[[row, pert.index]] += pert.delta,
            _ => {}
        }
    }

    let rows = dz.nrows();
    let mut dh = Array2::zeros((rows, hidden));
    let mut dc = Array2::zeros((rows, hidden));
    let base = |a: &Array1<f64>| a.as_slice().expect("contiguous").to_vec();
    let (si, sf, so) = (base(&step.sig[0]), base(&step.sig[1]), base(&step.sig[2]));
    let (bi, bf, bo) = (base(&step.sig_bar[0]), base(&step.sig_bar[1]), base(&step.sig_bar[2]));
    let (g, g2, cp) = (base(&step.g), base(&step.g_sech2), base(&step.c_prev));
    let (tc, c2) = (base(&step.tanh_c), base(&step.c_sech2));
    Zip::from(dz.rows())
        .and(dc_prev.rows())
        .and(dh.rows_mut())
        .and(dc.rows_mut())
        .for_each(|z, dcp, mut dh, mut dc| {
            let z = z.as_slice().expect("contiguous");
            let (zi, rest) = z.split_at(hidden);
            let (zf, rest) = rest.split_at(hidden);
            let (zg, zo) = rest.split_at(hidden);
            for j in 0..hidden {
                let di = sigmoid_diff(si[j], bi[j], zi[j]);
                let df = sigmoid_diff(sf[j], bf[j], zf[j]);
                let dg = tanh_diff(g[j], g2[j], zg[j]);
                let d_o = sigmoid_diff(so[j], bo[j], zo[j]);
                let dcp = dcp[j];
                let dcj = df * (cp[j] + dcp) + sf[j] * dcp + di * (g[j] + dg) + si[j] * dg;
                let dt = tanh_diff(tc[j], c2[j], dcj);
                dc[j] = dcj;
                dh[j] = d_o * (tc[j] + dt) + so[j] * dt;
            }
        });
    (dh, dc)
}

/// `L(θ + δ_row) − L(θ)` for every row's perturbation.
fn loss_differences(
    params: &LrnetParams,
    seq: &[[f64; 2]],
    label: [f64; 2],
    perturbations: &[Perturbation],
) -> Vec<f64> {
    let rows = perturbations.len();
    let (h1_size, h2_size) = (params.layer1.hidden_size(), params.layer2.hidden_size());

    let mut steps1 = Vec::with_capacity(seq.len());
    let mut steps2 = Vec::with_capacity(seq.len());
    let (mut h1, mut c1) = (Array1::zeros(h1_size), Array1::zeros(h1_size));
    let (mut h2, mut c2) = (Array1::zeros(h2_size), Array1::zeros(h2_size));
    for col in seq {
        let x = Array1::from(vec![col[0], col[1]]);
        let (st, h, c) = base_step(&params.layer1, &x, &h1, &c1);
        steps1.push(st);
        h1 = h;
        c1 = c;
        let (st, h, c) = base_step(&params.layer2, &h1, &h2, &c2);
        steps2.push(st);
        h2 = h;
        c2 = c;
    }
    let out = params.fc_weight.dot(&h2) + &params.fc_bias;
    let resid = [out[0] - label[0], out[1] - label[1]];

    let zero_x = Array2::zeros((rows, 2));
    let (mut dh1, mut dc1) = (Array2::zeros((rows, h1_size)), Array2::zeros((rows, h1_size)));
    let (mut dh2, mut dc2) = (Array2::zeros((rows, h2_size)), Array2::zeros((rows, h2_size)));
    // Perturbations are grouped by tensor, so whole chunks often start past layer 1.
    let first = perturbations.iter().map(|p| p.tensor).min().unwrap_or(0);
    for (st1, st2) in steps1.iter().zip(&steps2) {
        if first >= 6 {
            break;
        }
        if first < 3 {
            let (h, c) = delta_step(
                &params.layer1,
                st1,
                zero_x.view(),
                dh1.view(),
                dc1.view(),
                perturbations,
                0,
            );
            dh1 = h;
            dc1 = c;
        }
        let (h, c) = delta_step(
            &params.layer2,
            st2,
            dh1.view(),
            dh2.view(),
            dc2.view(),
            perturbations,
            3,
        );
        dh2 = h;
        dc2 = c;
    }

    let mut d_out = dh2.dot(&params.fc_weight.t());
    for (row, pert) in perturbations.iter().enumerate() {
        match pert.tensor {
            6 => {
                let c = pert.index % h2_size;
                d_out[[row, pert.index / h2_size]] += pert.delta * (h2[c] + dh2[[row, c]]);
            }
            7 => d_out[[row, pert.index]] += pert.delta,
            _ => {}
        }
    }
    let mut diffs = vec![0.0; rows];
    Zip::from(&mut diffs[..]).and(d_out.outer_iter()).for_each(|out, d| {
        *out = resid[0] * d[0] + resid[1] * d[1] + 0.5 * (d[0] * d[0] + d[1] * d[1]);
    });
    diffs
}
