//! LSTM cell mathematics: gate equations, per-layer sequence forward, and
//! backpropagation through time.

use serde::{Deserialize, Serialize};

use super::NetError;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut() -> f64) -> Self {
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| f()).collect(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = W x`
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = self
                .row(r)
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>();
        }
    }

    /// `acc += W^T y`
    pub fn matvec_transpose_add(&self, y: &[f64], acc: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(acc.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (a, w) in acc.iter_mut().zip(self.row(r)) {
                *a += w * yr;
            }
        }
    }

    /// `self += y x^T` (gradient accumulation)
    pub fn outer_add(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, &xv) in row.iter_mut().zip(x) {
                *w += yr * xv;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights and biases of one LSTM layer. Each gate applies its matrix to
/// the concatenation `[h_prev, x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_forget: Matrix,
    pub w_input: Matrix,
    pub w_cell: Matrix,
    pub w_output: Matrix,
    pub b_forget: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_cell: Vec<f64>,
    pub b_output: Vec<f64>,
    pub hidden_size: usize,
    pub input_size: usize,
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let width = hidden_size + input_size;
        Self {
            w_forget: Matrix::zeros(hidden_size, width),
            w_input: Matrix::zeros(hidden_size, width),
            w_cell: Matrix::zeros(hidden_size, width),
            w_output: Matrix::zeros(hidden_size, width),
            b_forget: vec![0.0; hidden_size],
            b_input: vec![0.0; hidden_size],
            b_cell: vec![0.0; hidden_size],
            b_output: vec![0.0; hidden_size],
            hidden_size,
            input_size,
        }
    }
}

/// Hidden and cell state of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            h: vec![0.0; hidden_size],
            c: vec![0.0; hidden_size],
        }
    }
}

/// Everything the backward pass needs about one timestep.
#[derive(Debug, Clone)]
pub(crate) struct CellCache {
    /// Concatenated `[h_prev, x_t]`.
    pub zin: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

fn cell_step(params: &LstmParams, state: &LstmState, x_t: &[f64]) -> CellCache {
    let hidden = params.hidden_size;
    let mut zin = Vec::with_capacity(hidden + params.input_size);
    zin.extend_from_slice(&state.h);
    zin.extend_from_slice(x_t);

    let mut f = vec![0.0; hidden];
    let mut i = vec![0.0; hidden];
    let mut g = vec![0.0; hidden];
    let mut o = vec![0.0; hidden];
    params.w_forget.matvec(&zin, &mut f);
    params.w_input.matvec(&zin, &mut i);
    params.w_cell.matvec(&zin, &mut g);
    params.w_output.matvec(&zin, &mut o);

    let mut tanh_c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut c_new = vec![0.0; hidden];
    for k in 0..hidden {
        f[k] = sigmoid(f[k] + params.b_forget[k]);
        i[k] = sigmoid(i[k] + params.b_input[k]);
        g[k] = (g[k] + params.b_cell[k]).tanh();
        o[k] = sigmoid(o[k] + params.b_output[k]);
        c_new[k] = state.c[k] * f[k] + g[k] * i[k];
        tanh_c[k] = c_new[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }

    CellCache {
        zin,
        f,
        i,
        g,
        o,
        c_prev: state.c.clone(),
        cell: c_new,
        tanh_c,
        h,
    }
}

/// One LSTM step:
/// `f = sigma(W_f [h, x] + b_f)`, `i = sigma(W_i [h, x] + b_i)`,
/// `g = tanh(W_c [h, x] + b_c)`, `o = sigma(W_o [h, x] + b_o)`,
/// `c' = c * f + g * i`, `h' = o * tanh(c')`, all element-wise.
pub fn lstm_cell(
    params: &LstmParams,
    state: &LstmState,
    x_t: &[f64],
) -> Result<LstmState, NetError> {
    if x_t.len() != params.input_size {
        return Err(NetError::ShapeMismatch {
            what: "cell input",
            expected: params.input_size,
            found: x_t.len(),
        });
    }
    if state.h.len() != params.hidden_size || state.c.len() != params.hidden_size {
        return Err(NetError::ShapeMismatch {
            what: "cell state",
            expected: params.hidden_size,
            found: state.h.len(),
        });
    }
    let cache = cell_step(params, state, x_t);
    Ok(LstmState {
        h: cache.h,
        c: cache.cell,
    })
}

/// Runs a layer across a sequence, returning the per-timestep caches and
/// the final state. Inputs are consumed in order.
pub(crate) fn layer_forward(
    params: &LstmParams,
    inputs: &[Vec<f64>],
    init: &LstmState,
) -> (Vec<CellCache>, LstmState) {
    let mut state = init.clone();
    let mut caches = Vec::with_capacity(inputs.len());
    for x_t in inputs {
        let cache = cell_step(params, &state, x_t);
        state = LstmState {
            h: cache.h.clone(),
            c: cache.cell.clone(),
        };
        caches.push(cache);
    }
    (caches, state)
}

/// Parameter gradients of one layer.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_forget: Matrix,
    pub w_input: Matrix,
    pub w_cell: Matrix,
    pub w_output: Matrix,
    pub b_forget: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_cell: Vec<f64>,
    pub b_output: Vec<f64>,
}

impl LstmGrads {
    pub fn zeros_like(params: &LstmParams) -> Self {
        let h = params.hidden_size;
        let width = h + params.input_size;
        Self {
            w_forget: Matrix::zeros(h, width),
            w_input: Matrix::zeros(h, width),
            w_cell: Matrix::zeros(h, width),
            w_output: Matrix::zeros(h, width),
            b_forget: vec![0.0; h],
            b_input: vec![0.0; h],
            b_cell: vec![0.0; h],
            b_output: vec![0.0; h],
        }
    }

    pub fn add_assign(&mut self, other: &LstmGrads) {
        self.w_forget.add_assign(&other.w_forget);
        self.w_input.add_assign(&other.w_input);
        self.w_cell.add_assign(&other.w_cell);
        self.w_output.add_assign(&other.w_output);
        for (dst, src) in [
            (&mut self.b_forget, &other.b_forget),
            (&mut self.b_input, &other.b_input),
            (&mut self.b_cell, &other.b_cell),
            (&mut self.b_output, &other.b_output),
        ] {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

/// Backpropagation through time for one layer.
///
/// `dh_external[t]` is the loss gradient flowing into `h_t` from outside
/// the layer (upper layer or output head). Accumulates parameter
/// gradients into `grads` and returns the gradients w.r.t. the layer
/// inputs. The gradient w.r.t. the initial state is discarded: carried
/// states are treated as constants.
pub(crate) fn layer_backward(
    params: &LstmParams,
    caches: &[CellCache],
    dh_external: &[Vec<f64>],
    grads: &mut LstmGrads,
) -> Vec<Vec<f64>> {
    let hidden = params.hidden_size;
    let input = params.input_size;
    let steps = caches.len();
    let mut dx_seq = vec![vec![0.0; input]; steps];
    let mut dh_carry = vec![0.0; hidden];
    let mut dc_carry = vec![0.0; hidden];

    let mut daf = vec![0.0; hidden];
    let mut dai = vec![0.0; hidden];
    let mut dag = vec![0.0; hidden];
    let mut dao = vec![0.0; hidden];
    let mut dzin = vec![0.0; hidden + input];

    for t in (0..steps).rev() {
        let cache = &caches[t];
        for k in 0..hidden {
            let dh = dh_external[t][k] + dh_carry[k];
            let do_ = dh * cache.tanh_c[k];
            let dc = dh * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]) + dc_carry[k];
            let df = dc * cache.c_prev[k];
            let di = dc * cache.g[k];
            let dg = dc * cache.i[k];
            dc_carry[k] = dc * cache.f[k];
            daf[k] = df * cache.f[k] * (1.0 - cache.f[k]);
            dai[k] = di * cache.i[k] * (1.0 - cache.i[k]);
            dag[k] = dg * (1.0 - cache.g[k] * cache.g[k]);
            dao[k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
        }

        grads.w_forget.outer_add(&daf, &cache.zin);
        grads.w_input.outer_add(&dai, &cache.zin);
        grads.w_cell.outer_add(&dag, &cache.zin);
        grads.w_output.outer_add(&dao, &cache.zin);
        for k in 0..hidden {
            grads.b_forget[k] += daf[k];
            grads.b_input[k] += dai[k];
            grads.b_cell[k] += dag[k];
            grads.b_output[k] += dao[k];
        }

        dzin.iter_mut().for_each(|v| *v = 0.0);
        params.w_forget.matvec_transpose_add(&daf, &mut dzin);
        params.w_input.matvec_transpose_add(&dai, &mut dzin);
        params.w_cell.matvec_transpose_add(&dag, &mut dzin);
        params.w_output.matvec_transpose_add(&dao, &mut dzin);
        dh_carry.copy_from_slice(&dzin[..hidden]);
        dx_seq[t].copy_from_slice(&dzin[hidden..]);
    }
    dx_seq
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_give_half_gates_and_zero_state() {
        let params = LstmParams::zeros(3, 2);
        let state = LstmState::zeros(3);
        let cache = cell_step(&params, &state, &[0.7, -1.3]);
        for k in 0..3 {
            assert_eq!(cache.f[k], 0.5);
            assert_eq!(cache.i[k], 0.5);
            assert_eq!(cache.o[k], 0.5);
            assert_eq!(cache.g[k], 0.0);
            assert_eq!(cache.cell[k], 0.0);
            assert_eq!(cache.h[k], 0.0);
        }
    }

    #[test]
    fn saturated_forget_gate_preserves_the_cell() {
        let mut params = LstmParams::zeros(2, 1);
        params.b_forget = vec![50.0; 2];
        let state = LstmState {
            h: vec![0.0; 2],
            c: vec![0.3, -0.8],
        };
        let next = lstm_cell(&params, &state, &[0.4]).unwrap();
        // f ~ 1, i = 0.5, g = 0 so c' ~ c
        for k in 0..2 {
            assert!((next.c[k] - state.c[k]).abs() < 1e-12);
            assert!((next.h[k] - 0.5 * state.c[k].tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_matches_scalar_hand_computation() {
        // Independent scalar evaluation of all six equations on a 3-unit
        // cell with a 2-dim input.
        let hidden = 3;
        let input = 2;
        let mut counter = 0.0f64;
        let mut next_value = || {
            counter += 1.0;
            (counter * 0.37).sin() * 0.8
        };
        let mut params = LstmParams::zeros(hidden, input);
        for m in [
            &mut params.w_forget,
            &mut params.w_input,
            &mut params.w_cell,
            &mut params.w_output,
        ] {
            *m = Matrix::from_fn(hidden, hidden + input, &mut next_value);
        }
        params.b_forget = (0..hidden).map(|_| next_value()).collect();
        params.b_input = (0..hidden).map(|_| next_value()).collect();
        params.b_cell = (0..hidden).map(|_| next_value()).collect();
        params.b_output = (0..hidden).map(|_| next_value()).collect();
        let state = LstmState {
            h: vec![0.1, -0.2, 0.3],
            c: vec![-0.4, 0.5, 0.05],
        };
        let x = [0.9, -0.6];

        let next = lstm_cell(&params, &state, &x).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z = [state.h[0], state.h[1], state.h[2], x[0], x[1]];
        for k in 0..hidden {
            let dot = |w: &Matrix, b: &[f64]| -> f64 {
                let mut acc = b[k];
                for (j, zv) in z.iter().enumerate() {
                    acc += w.data[k * (hidden + input) + j] * zv;
                }
                acc
            };
            let f = sig(dot(&params.w_forget, &params.b_forget));
            let i = sig(dot(&params.w_input, &params.b_input));
            let g = dot(&params.w_cell, &params.b_cell).tanh();
            let o = sig(dot(&params.w_output, &params.b_output));
            let c = state.c[k] * f + g * i;
            let h = o * c.tanh();
            assert!((next.c[k] - c).abs() < 1e-12, "cell {k}");
            assert!((next.h[k] - h).abs() < 1e-12, "hidden {k}");
        }
    }

    #[test]
    fn cell_rejects_wrong_shapes() {
        let params = LstmParams::zeros(3, 2);
        let state = LstmState::zeros(3);
        assert!(matches!(
            lstm_cell(&params, &state, &[1.0]),
            Err(NetError::ShapeMismatch { .. })
        ));
        let bad_state = LstmState::zeros(2);
        assert!(matches!(
            lstm_cell(&params, &bad_state, &[1.0, 2.0]),
            Err(NetError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn gate_outputs_stay_in_range() {
        let mut counter = 0.0f64;
        let mut next_value = || {
            counter += 1.0;
            (counter * 1.7).cos() * 3.0
        };
        let hidden = 4;
        let mut params = LstmParams::zeros(hidden, 1);
        for m in [
            &mut params.w_forget,
            &mut params.w_input,
            &mut params.w_cell,
            &mut params.w_output,
        ] {
            *m = Matrix::from_fn(hidden, hidden + 1, &mut next_value);
        }
        let inputs: Vec<Vec<f64>> = (0..30).map(|t| vec![(t as f64 * 0.3).sin() * 5.0]).collect();
        let (caches, state) = layer_forward(&params, &inputs, &LstmState::zeros(hidden));
        for cache in &caches {
            for k in 0..hidden {
                assert!(cache.f[k] > 0.0 && cache.f[k] < 1.0);
                assert!(cache.i[k] > 0.0 && cache.i[k] < 1.0);
                assert!(cache.o[k] > 0.0 && cache.o[k] < 1.0);
                assert!(cache.h[k].abs() < 1.0);
            }
        }
        for v in state.h {
            assert!(v.abs() < 1.0);
        }
    }
}
