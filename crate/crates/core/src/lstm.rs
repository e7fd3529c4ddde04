//! Single-layer LSTM cell with a linear readout head.
//!
//! Gates follow the usual formulation:
//!
//! ```text
//! f = sigmoid(Wf_x x + Wf_h h_prev + b_f)
//! i = sigmoid(Wi_x x + Wi_h h_prev + b_i)
//! c = tanh(Wc_x x + Wc_h h_prev + b_c)
//! s = c * i + s_prev * f
//! o = sigmoid(Wo_x x + Wo_h h_prev + b_o)
//! h = tanh(s) * o
//! y = Wy h + b_y
//! ```
//!
//! Inputs, states and outputs may carry `B` columns; each column is an
//! independent sequence and is computed bit-identically to a `B = 1` call.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SohError};
use crate::numerics::{
    gemm_acc, gemm_nt_acc, gemm_tn_acc, sigmoid_grad_from_output, sigmoid_scalar,
    tanh_grad_from_output, Matrix,
};
use crate::seeding::{self, purpose};

/// Network dimensions: input features, hidden units, outputs per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmDims {
    pub features: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl LstmDims {
    pub fn new(features: usize, hidden: usize, outputs: usize) -> Result<Self> {
        if features == 0 || hidden == 0 || outputs == 0 {
            return Err(SohError::InvalidDims(format!(
                "features={features}, hidden={hidden}, outputs={outputs}; all must be >= 1"
            )));
        }
        Ok(LstmDims {
            features,
            hidden,
            outputs,
        })
    }
}

/// Input weights, recurrent weights and bias of one gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Matrix,
}

impl GateParams {
    fn zeros(dims: LstmDims) -> Self {
        GateParams {
            w_x: Matrix::zeros(dims.hidden, dims.features),
            w_h: Matrix::zeros(dims.hidden, dims.hidden),
            b: Matrix::zeros(dims.hidden, 1),
        }
    }

    /// `W_x x + W_h h_prev + b`, column-broadcast over the batch.
    fn preactivation(&self, x: &Matrix, h_prev: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(self.w_x.rows(), x.cols());
        gemm_acc(&mut z, &self.w_x, x);
        gemm_acc(&mut z, &self.w_h, h_prev);
        z.add_column_broadcast(&self.b)
            .expect("bias shape validated with params");
        z
    }

    /// Accumulates the gradient contribution of one step's pre-activation
    /// gradient `dz` (H x B).
    fn accumulate(&mut self, dz: &Matrix, x: &Matrix, h_prev: &Matrix) {
        gemm_nt_acc(&mut self.w_x, dz, x);
        gemm_nt_acc(&mut self.w_h, dz, h_prev);
        self.b
            .add_assign(&dz.sum_columns())
            .expect("bias gradient shape");
    }
}

/// All trainable tensors of the network. Gradients share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub dims: LstmDims,
    pub forget: GateParams,
    pub input: GateParams,
    pub candidate: GateParams,
    pub output: GateParams,
    pub readout_w: Matrix,
    pub readout_b: Matrix,
}

/// Gradients with respect to every field of [`LstmParams`].
pub type LstmGrads = LstmParams;

/// Tensor names in the order produced by [`LstmParams::tensors`].
pub const TENSOR_NAMES: [&str; 14] = [
    "wf_x", "wf_h", "b_f", "wi_x", "wi_h", "b_i", "wc_x", "wc_h", "b_c", "wo_x", "wo_h", "b_o",
    "w_y", "b_y",
];

impl LstmParams {
    pub fn zeros(dims: LstmDims) -> Self {
        LstmParams {
            dims,
            forget: GateParams::zeros(dims),
            input: GateParams::zeros(dims),
            candidate: GateParams::zeros(dims),
            output: GateParams::zeros(dims),
            readout_w: Matrix::zeros(dims.outputs, dims.hidden),
            readout_b: Matrix::zeros(dims.outputs, 1),
        }
    }

    pub fn tensors(&self) -> [&Matrix; 14] {
        [
            &self.forget.w_x,
            &self.forget.w_h,
            &self.forget.b,
            &self.input.w_x,
            &self.input.w_h,
            &self.input.b,
            &self.candidate.w_x,
            &self.candidate.w_h,
            &self.candidate.b,
            &self.output.w_x,
            &self.output.w_h,
            &self.output.b,
            &self.readout_w,
            &self.readout_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 14] {
        [
            &mut self.forget.w_x,
            &mut self.forget.w_h,
            &mut self.forget.b,
            &mut self.input.w_x,
            &mut self.input.w_h,
            &mut self.input.b,
            &mut self.candidate.w_x,
            &mut self.candidate.w_h,
            &mut self.candidate.b,
            &mut self.output.w_x,
            &mut self.output.w_h,
            &mut self.output.b,
            &mut self.readout_w,
            &mut self.readout_b,
        ]
    }

    /// Expected `(rows, cols)` of every tensor for the given dims.
    pub fn expected_shapes(dims: LstmDims) -> [(usize, usize); 14] {
        let (f, h, k) = (dims.features, dims.hidden, dims.outputs);
        let gate = [(h, f), (h, h), (h, 1)];
        [
            gate[0],
            gate[1],
            gate[2],
            gate[0],
            gate[1],
            gate[2],
            gate[0],
            gate[1],
            gate[2],
            gate[0],
            gate[1],
            gate[2],
            (k, h),
            (k, 1),
        ]
    }

    /// Builds params from tensors in [`TENSOR_NAMES`] order, checking shapes.
    pub fn from_tensors(dims: LstmDims, tensors: Vec<Matrix>) -> Result<Self> {
        if tensors.len() != 14 {
            return Err(SohError::LengthMismatch {
                what: "parameter tensors",
                left: tensors.len(),
                right: 14,
            });
        }
        let mut params = LstmParams::zeros(dims);
        for ((slot, t), name) in params
            .tensors_mut()
            .into_iter()
            .zip(tensors)
            .zip(TENSOR_NAMES)
        {
            if slot.shape() != t.shape() {
                return Err(SohError::InvalidDims(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(params)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }
}

/// Cell state `s` and hidden output `h`, each `H x B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub s: Matrix,
    pub h: Matrix,
}

impl LstmState {
    pub fn zeros(hidden: usize, batch: usize) -> Self {
        LstmState {
            s: Matrix::zeros(hidden, batch),
            h: Matrix::zeros(hidden, batch),
        }
    }
}

/// Everything one step computed, cached for backpropagation through time.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub x: Matrix,
    pub h_prev: Matrix,
    pub s_prev: Matrix,
    pub f: Matrix,
    pub i: Matrix,
    pub c: Matrix,
    pub o: Matrix,
    pub s: Matrix,
    pub tanh_s: Matrix,
    pub h: Matrix,
}

fn check_step_shapes(params: &LstmParams, state: &LstmState, x: &Matrix) -> Result<()> {
    let d = params.dims;
    if x.rows() != d.features || x.cols() == 0 {
        return Err(SohError::Shape {
            op: "lstm step input",
            left: x.shape(),
            right: (d.features, x.cols().max(1)),
        });
    }
    for m in [&state.s, &state.h] {
        if m.shape() != (d.hidden, x.cols()) {
            return Err(SohError::Shape {
                op: "lstm step state",
                left: m.shape(),
                right: (d.hidden, x.cols()),
            });
        }
    }
    Ok(())
}

/// Advances the cell one step.
pub fn step(params: &LstmParams, state: &LstmState, x: &Matrix) -> Result<(LstmState, StepTrace)> {
    check_step_shapes(params, state, x)?;
    let h_prev = &state.h;
    let f = params.forget.preactivation(x, h_prev).map(sigmoid_scalar);
    let i = params.input.preactivation(x, h_prev).map(sigmoid_scalar);
    let c = params.candidate.preactivation(x, h_prev).map(f64::tanh);
    let o = params.output.preactivation(x, h_prev).map(sigmoid_scalar);

    let mut s = Matrix::zeros(c.rows(), c.cols());
    for (((sv, &cv), &iv), (&sp, &fv)) in s
        .data_mut()
        .iter_mut()
        .zip(c.data())
        .zip(i.data())
        .zip(state.s.data().iter().zip(f.data()))
    {
        *sv = cv * iv + sp * fv;
    }
    let tanh_s = s.map(f64::tanh);
    let mut h = tanh_s.clone();
    for (hv, &ov) in h.data_mut().iter_mut().zip(o.data()) {
        *hv *= ov;
    }

    let next = LstmState {
        s: s.clone(),
        h: h.clone(),
    };
    let trace = StepTrace {
        x: x.clone(),
        h_prev: state.h.clone(),
        s_prev: state.s.clone(),
        f,
        i,
        c,
        o,
        s,
        tanh_s,
        h,
    };
    Ok((next, trace))
}

/// Linear readout `Wy h + b_y`.
pub fn readout(params: &LstmParams, h: &Matrix) -> Result<Matrix> {
    if h.rows() != params.dims.hidden {
        return Err(SohError::Shape {
            op: "readout",
            left: params.readout_w.shape(),
            right: h.shape(),
        });
    }
    let mut y = Matrix::zeros(params.dims.outputs, h.cols());
    gemm_acc(&mut y, &params.readout_w, h);
    y.add_column_broadcast(&params.readout_b)?;
    Ok(y)
}

/// Runs the cell over `inputs` from `init`, returning per-step readouts and
/// the traces needed by [`backward`].
pub fn forward(
    params: &LstmParams,
    inputs: &[Matrix],
    init: &LstmState,
) -> Result<(Vec<Matrix>, Vec<StepTrace>)> {
    if inputs.is_empty() {
        return Err(SohError::EmptySequence);
    }
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut traces = Vec::with_capacity(inputs.len());
    let mut state = init.clone();
    for x in inputs {
        let (next, trace) = step(params, &state, x)?;
        outputs.push(readout(params, &next.h)?);
        traces.push(trace);
        state = next;
    }
    Ok((outputs, traces))
}

/// Backpropagation through time.
///
/// `d_outputs[t]` is the gradient of the scalar loss with respect to the
/// readout at step `t`. Returns the gradient of that loss with respect to
/// every parameter, summed over steps and batch columns. The initial state is
/// treated as a constant.
pub fn backward(
    params: &LstmParams,
    traces: &[StepTrace],
    d_outputs: &[Matrix],
) -> Result<LstmGrads> {
    if traces.len() != d_outputs.len() {
        return Err(SohError::LengthMismatch {
            what: "traces vs output gradients",
            left: traces.len(),
            right: d_outputs.len(),
        });
    }
    let dims = params.dims;
    let mut grads = LstmParams::zeros(dims);
    let Some(first) = traces.first() else {
        return Ok(grads);
    };
    let batch = first.x.cols();
    let hidden = dims.hidden;

    let mut dh_next = Matrix::zeros(hidden, batch);
    let mut ds_next = Matrix::zeros(hidden, batch);

    for (tr, dy) in traces.iter().zip(d_outputs).rev() {
        if dy.shape() != (dims.outputs, batch) {
            return Err(SohError::Shape {
                op: "backward output gradient",
                left: dy.shape(),
                right: (dims.outputs, batch),
            });
        }
        gemm_nt_acc(&mut grads.readout_w, dy, &tr.h);
        grads.readout_b.add_assign(&dy.sum_columns())?;

        let mut dh = dh_next;
        gemm_tn_acc(&mut dh, &params.readout_w, dy);

        let n = hidden * batch;
        let mut dz_f = Matrix::zeros(hidden, batch);
        let mut dz_i = Matrix::zeros(hidden, batch);
        let mut dz_c = Matrix::zeros(hidden, batch);
        let mut dz_o = Matrix::zeros(hidden, batch);
        let mut ds_prev = Matrix::zeros(hidden, batch);
        for j in 0..n {
            let dhj = dh.data()[j];
            let o = tr.o.data()[j];
            let ts = tr.tanh_s.data()[j];
            let f = tr.f.data()[j];
            let i = tr.i.data()[j];
            let c = tr.c.data()[j];

            dz_o.data_mut()[j] = dhj * ts * sigmoid_grad_from_output(o);
            let ds = dhj * o * tanh_grad_from_output(ts) + ds_next.data()[j];
            dz_c.data_mut()[j] = ds * i * tanh_grad_from_output(c);
            dz_i.data_mut()[j] = ds * c * sigmoid_grad_from_output(i);
            dz_f.data_mut()[j] = ds * tr.s_prev.data()[j] * sigmoid_grad_from_output(f);
            ds_prev.data_mut()[j] = ds * f;
        }

        grads.forget.accumulate(&dz_f, &tr.x, &tr.h_prev);
        grads.input.accumulate(&dz_i, &tr.x, &tr.h_prev);
        grads.candidate.accumulate(&dz_c, &tr.x, &tr.h_prev);
        grads.output.accumulate(&dz_o, &tr.x, &tr.h_prev);

        let mut dh_prev = Matrix::zeros(hidden, batch);
        gemm_tn_acc(&mut dh_prev, &params.forget.w_h, &dz_f);
        gemm_tn_acc(&mut dh_prev, &params.input.w_h, &dz_i);
        gemm_tn_acc(&mut dh_prev, &params.candidate.w_h, &dz_c);
        gemm_tn_acc(&mut dh_prev, &params.output.w_h, &dz_o);

        dh_next = dh_prev;
        ds_next = ds_prev;
    }
    Ok(grads)
}

/// Uniform `(-r, r)` weights with `r = 1/sqrt(H)`, forget bias `+1`, other
/// biases zero. Deterministic per `seed`.
pub fn init_params(dims: LstmDims, seed: u64) -> Result<LstmParams> {
    let dims = LstmDims::new(dims.features, dims.hidden, dims.outputs)?;
    let r = 1.0 / (dims.hidden as f64).sqrt();
    let mut rng = seeding::rng_for(seed, purpose::INIT);
    let mut draw = |rows: usize, cols: usize| {
        Matrix::from_fn(rows, cols, |_, _| loop {
            let v: f64 = rng.gen_range(-r..r);
            if v != -r {
                break v;
            }
        })
    };
    let mut params = LstmParams::zeros(dims);
    for gate in [
        &mut params.forget,
        &mut params.input,
        &mut params.candidate,
        &mut params.output,
    ] {
        gate.w_x = draw(dims.hidden, dims.features);
        gate.w_h = draw(dims.hidden, dims.hidden);
    }
    params.readout_w = draw(dims.outputs, dims.hidden);
    params.forget.b.fill(1.0);
    Ok(params)
}
