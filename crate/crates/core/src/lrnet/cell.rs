//! Batched LSTM cell with an exact backward pass.
//!
//! Gate blocks are stacked in the order `[input; forget; candidate; output]`
//! along the `4H` axis of every weight tensor. Rows of the batch matrices are
//! independent examples.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

use super::LstmLayerParams;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct CellCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    /// Post-activation gates, `B × 4H`.
    gates: Array2<f64>,
    tanh_c: Array2<f64>,
}

/// Gradients flowing out of one backward step.
pub struct CellGrads {
    pub dx: Array2<f64>,
    pub dh_prev: Array2<f64>,
    pub dc_prev: Array2<f64>,
}

/// Gate pre-activations `x·W_inᵀ + h_prev·W_hᵀ + bias`, `B × 4H`.
pub(crate) fn preactivate(p: &LstmLayerParams, x: ArrayView2<f64>, h_prev: ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&p.w_input.t());
    z += &h_prev.dot(&p.w_hidden.t());
    z += &p.bias;
    z
}

/// Applies the gate nonlinearities to `z` in place and advances the state.
pub(crate) fn activate(
    mut gates: Array2<f64>,
    x: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    c_prev: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, CellCache) {
    let hidden = gates.ncols() / 4;
    gates.slice_mut(s![.., ..2 * hidden]).mapv_inplace(sigmoid);
    gates.slice_mut(s![.., 2 * hidden..3 * hidden]).mapv_inplace(f64::tanh);
    gates.slice_mut(s![.., 3 * hidden..]).mapv_inplace(sigmoid);

    let i = gates.slice(s![.., ..hidden]);
    let f = gates.slice(s![.., hidden..2 * hidden]);
    let g = gates.slice(s![.., 2 * hidden..3 * hidden]);
    let o = gates.slice(s![.., 3 * hidden..]);

    let mut c = Array2::zeros(c_prev.raw_dim());
    Zip::from(&mut c)
        .and(&f)
        .and(&c_prev)
        .and(&i)
        .and(&g)
        .for_each(|c, &f, &cp, &i, &g| *c = f * cp + i * g);
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;

    let cache = CellCache {
        x: x.to_owned(),
        h_prev: h_prev.to_owned(),
        c_prev: c_prev.to_owned(),
        gates,
        tanh_c,
    };
    (h, c, cache)
}

/// One step over a batch: returns `(h, c, cache)`.
pub fn cell_forward(
    p: &LstmLayerParams,
    x: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    c_prev: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, CellCache) {
    activate(preactivate(p, x, h_prev), x, h_prev, c_prev)
}

/// Backpropagates `dh` (loss gradient w.r.t. this step's `h`) and `dc_next`
/// (gradient arriving at this step's `c` from the following step).
/// Parameter gradients are accumulated into `grads`.
pub fn cell_backward(
    p: &LstmLayerParams,
    cache: &CellCache,
    dh: ArrayView2<f64>,
    dc_next: ArrayView2<f64>,
    grads: &mut LstmLayerParams,
) -> CellGrads {
    let hidden = p.hidden_size();
    let gates = &cache.gates;
    let i = gates.slice(s![.., ..hidden]);
    let f = gates.slice(s![.., hidden..2 * hidden]);
    let g = gates.slice(s![.., 2 * hidden..3 * hidden]);
    let o = gates.slice(s![.., 3 * hidden..]);

    let mut dc = dc_next.to_owned();
    Zip::from(&mut dc)
        .and(&dh)
        .and(&o)
        .and(&cache.tanh_c)
        .for_each(|dc, &dh, &o, &t| *dc += dh * o * (1.0 - t * t));

    let mut dz = Array2::zeros(gates.raw_dim());
    Zip::from(dz.slice_mut(s![.., ..hidden]))
        .and(&dc)
        .and(&g)
        .and(&i)
        .for_each(|d, &dc, &g, &i| *d = dc * g * i * (1.0 - i));
    Zip::from(dz.slice_mut(s![.., hidden..2 * hidden]))
        .and(&dc)
        .and(&cache.c_prev)
        .and(&f)
        .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (1.0 - f));
    Zip::from(dz.slice_mut(s![.., 2 * hidden..3 * hidden]))
        .and(&dc)
        .and(&i)
        .and(&g)
        .for_each(|d, &dc, &i, &g| *d = dc * i * (1.0 - g * g));
    Zip::from(dz.slice_mut(s![.., 3 * hidden..]))
        .and(&dh)
        .and(&cache.tanh_c)
        .and(&o)
        .for_each(|d, &dh, &t, &o| *d = dh * t * o * (1.0 - o));

    let dc_prev = &dc * &f;

    grads.w_input += &dz.t().dot(&cache.x);
    grads.w_hidden += &dz.t().dot(&cache.h_prev);
    grads.bias += &dz.sum_axis(Axis(0));

    CellGrads {
        dx: dz.dot(&p.w_input),
        dh_prev: dz.dot(&p.w_hidden),
        dc_prev,
    }
}

/// Single-example cell step on plain vectors.
pub fn lstm_cell_forward(
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: &Array1<f64>,
    p: &LstmLayerParams,
) -> Result<(Array1<f64>, Array1<f64>, CellCache)> {
    let (d, h) = (p.input_size(), p.hidden_size());
    if x.len() != d || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Dimension(format!(
            "cell expects x:{d}, h:{h}, c:{h}; got x:{}, h:{}, c:{}",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let (h_new, c_new, cache) = cell_forward(
        p,
        x.view().insert_axis(Axis(0)),
        h_prev.view().insert_axis(Axis(0)),
        c_prev.view().insert_axis(Axis(0)),
    );
    Ok((
        h_new.index_axis_move(Axis(0), 0),
        c_new.index_axis_move(Axis(0), 0),
        cache,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_params_zero_state() {
        let p = LstmLayerParams::zeros(3, 2);
        let (h, c, _) = lstm_cell_forward(&array![0.3, -1.0, 2.0], &Array1::zeros(2), &Array1::zeros(2), &p).unwrap();
        assert_eq!(h, array![0.0, 0.0]);
        assert_eq!(c, array![0.0, 0.0]);
    }

    #[test]
    fn zero_params_unit_cell() {
        let p = LstmLayerParams::zeros(1, 1);
        let (h, c, _) = lstm_cell_forward(&array![0.0], &array![0.0], &array![1.0], &p).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15);
        assert!((h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.23105).abs() < 1e-5);
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let hidden = 3;
        let mut p = LstmLayerParams::zeros(2, hidden);
        p.bias.fill(-50.0);
        p.bias.slice_mut(s![hidden..2 * hidden]).fill(50.0);
        let c_prev = array![0.7, -1.3, 2.5];
        let (_, c, _) = lstm_cell_forward(&array![0.4, -0.2], &array![0.1, 0.2, 0.3], &c_prev, &p).unwrap();
        for (a, b) in c.iter().zip(c_prev.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = LstmLayerParams::zeros(2, 3);
        let err = lstm_cell_forward(&array![1.0], &Array1::zeros(3), &Array1::zeros(3), &p).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }
}
