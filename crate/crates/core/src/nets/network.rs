//! Stacked LSTM forecasters: the standard network and the two-branch
//! network over bidirectional features, with a shared linear output head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureTensor;
use super::lstm::{
    layer_backward, layer_forward, CellCache, LstmGrads, LstmParams, LstmState, Matrix,
};
use super::NetError;
use crate::seeding::{rng_for, Domain};

/// Architecture family: one LSTM stack over past features, or two parallel
/// stacks where the second consumes reversed previous-day future values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Standard,
    BiFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

/// Topology and training hyper-parameters of one forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetKind,
    /// Hidden sizes of the stacked layers (both branches for BiFeature).
    pub layers: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub activation: Activation,
    /// Carry LSTM state across chronologically consecutive batches within
    /// an epoch (reset at epoch boundaries); gradients never cross batches.
    pub stateful: bool,
    /// Past window length m.
    pub input_len: usize,
    /// Forecast horizon n.
    pub output_len: usize,
    pub seed: u64,
}

impl NetworkSpec {
    /// Standard-network defaults: two hidden layers of 75 and 65 nodes,
    /// learning rate 1e-4, batch 100, 50 epochs, dropout 0.2, stateful.
    pub fn standard(input_len: usize, output_len: usize, seed: u64) -> Self {
        Self {
            kind: NetKind::Standard,
            layers: vec![75, 65],
            dropout: 0.2,
            learning_rate: 1e-4,
            batch_size: 100,
            epochs: 50,
            activation: Activation::Tanh,
            stateful: true,
            input_len,
            output_len,
            seed,
        }
    }

    /// Bidirectional-feature defaults: two hidden layers of 25 nodes per
    /// branch, learning rate 1e-3, batch 100, 25 epochs, dropout 0.02,
    /// stateful.
    pub fn bifeature(input_len: usize, output_len: usize, seed: u64) -> Self {
        Self {
            kind: NetKind::BiFeature,
            layers: vec![25, 25],
            dropout: 0.02,
            learning_rate: 1e-3,
            batch_size: 100,
            epochs: 25,
            activation: Activation::Tanh,
            stateful: true,
            input_len,
            output_len,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.layers.is_empty() || self.layers.contains(&0) {
            return Err(NetError::InvalidSpec {
                reason: "layers must be non-empty and positive".into(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NetError::InvalidSpec {
                reason: format!("dropout must lie in [0, 1), got {}", self.dropout),
            });
        }
        if self.epochs == 0 {
            return Err(NetError::InvalidSpec {
                reason: "epochs must be >= 1".into(),
            });
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidSpec {
                reason: "batch_size must be >= 1".into(),
            });
        }
        if self.input_len == 0 || self.output_len == 0 {
            return Err(NetError::InvalidSpec {
                reason: "input_len and output_len must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Length of the forward input sequence: the past window of the
    /// current day followed by the same window of the previous day.
    pub fn forward_feature_len(&self) -> usize {
        2 * self.input_len
    }

    /// Length of the reversed previous-day future window.
    pub fn backward_feature_len(&self) -> usize {
        self.output_len
    }
}

/// One trained forecaster: LSTM stack(s) plus a linear head mapping the
/// final hidden state(s) to the horizon values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub spec: NetworkSpec,
    pub forward_layers: Vec<LstmParams>,
    /// Present only for [`NetKind::BiFeature`].
    pub backward_layers: Vec<LstmParams>,
    pub head_weights: Matrix,
    pub head_bias: Vec<f64>,
}

fn init_layers(
    sizes: &[usize],
    rng: &mut impl Rng,
) -> Vec<LstmParams> {
    let mut layers = Vec::with_capacity(sizes.len());
    let mut input_size = 1; // scalar series values
    for &hidden in sizes {
        let width = hidden + input_size;
        let bound = 1.0 / (width as f64).sqrt();
        let mut params = LstmParams::zeros(hidden, input_size);
        for m in [
            &mut params.w_forget,
            &mut params.w_input,
            &mut params.w_cell,
            &mut params.w_output,
        ] {
            *m = Matrix::from_fn(hidden, width, || rng.gen_range(-bound..bound));
        }
        layers.push(params);
        input_size = hidden;
    }
    layers
}

impl LstmNetwork {
    /// Fresh network with weights drawn uniformly from
    /// `(-1/sqrt(fan_in), +1/sqrt(fan_in))` and zero biases, seeded from
    /// `spec.seed`.
    pub fn new(spec: NetworkSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let mut rng = rng_for(spec.seed, Domain::WeightInit, 0);
        let forward_layers = init_layers(&spec.layers, &mut rng);
        let backward_layers = match spec.kind {
            NetKind::Standard => Vec::new(),
            NetKind::BiFeature => init_layers(&spec.layers, &mut rng),
        };
        let top = *spec.layers.last().expect("validated non-empty");
        let head_in = match spec.kind {
            NetKind::Standard => top,
            NetKind::BiFeature => 2 * top,
        };
        let bound = 1.0 / (head_in as f64).sqrt();
        let head_weights =
            Matrix::from_fn(spec.output_len, head_in, || rng.gen_range(-bound..bound));
        let head_bias = vec![0.0; spec.output_len];
        Ok(Self {
            spec,
            forward_layers,
            backward_layers,
            head_weights,
            head_bias,
        })
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameter tensors in a fixed order (matching
    /// [`NetGrads::tensors`]).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in self.forward_layers.iter().chain(&self.backward_layers) {
            out.push(layer.w_forget.data.as_slice());
            out.push(layer.w_input.data.as_slice());
            out.push(layer.w_cell.data.as_slice());
            out.push(layer.w_output.data.as_slice());
            out.push(layer.b_forget.as_slice());
            out.push(layer.b_input.as_slice());
            out.push(layer.b_cell.as_slice());
            out.push(layer.b_output.as_slice());
        }
        out.push(self.head_weights.data.as_slice());
        out.push(self.head_bias.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self
            .forward_layers
            .iter_mut()
            .chain(self.backward_layers.iter_mut())
        {
            out.push(layer.w_forget.data.as_mut_slice());
            out.push(layer.w_input.data.as_mut_slice());
            out.push(layer.w_cell.data.as_mut_slice());
            out.push(layer.w_output.data.as_mut_slice());
            out.push(layer.b_forget.as_mut_slice());
            out.push(layer.b_input.as_mut_slice());
            out.push(layer.b_cell.as_mut_slice());
            out.push(layer.b_output.as_mut_slice());
        }
        out.push(self.head_weights.data.as_mut_slice());
        out.push(self.head_bias.as_mut_slice());
        out
    }

    /// Inference over a past-feature sequence (standard networks).
    pub fn forward(&self, inputs: &[f64]) -> Result<Vec<f64>, NetError> {
        if self.spec.kind != NetKind::Standard {
            return Err(NetError::MissingBackwardFeatures);
        }
        if inputs.len() != self.spec.forward_feature_len() {
            return Err(NetError::ShapeMismatch {
                what: "forward features",
                expected: self.spec.forward_feature_len(),
                found: inputs.len(),
            });
        }
        let run = branch_forward(&self.forward_layers, inputs, None, None);
        Ok(self.apply_head(&run.top_final))
    }

    /// Inference over forward features plus the reversed previous-day
    /// future window (bidirectional-feature networks).
    pub fn forward_bifeature(&self, forward_in: &[f64], backward_in: &[f64]) -> Result<Vec<f64>, NetError> {
        if self.spec.kind != NetKind::BiFeature {
            return Err(NetError::ShapeMismatch {
                what: "network kind (standard network has no backward branch)",
                expected: 2,
                found: 1,
            });
        }
        if forward_in.len() != self.spec.forward_feature_len() {
            return Err(NetError::ShapeMismatch {
                what: "forward features",
                expected: self.spec.forward_feature_len(),
                found: forward_in.len(),
            });
        }
        if backward_in.len() != self.spec.backward_feature_len() {
            return Err(NetError::ShapeMismatch {
                what: "backward features",
                expected: self.spec.backward_feature_len(),
                found: backward_in.len(),
            });
        }
        let fwd = branch_forward(&self.forward_layers, forward_in, None, None);
        let bwd = branch_forward(&self.backward_layers, backward_in, None, None);
        let mut feat = fwd.top_final;
        feat.extend_from_slice(&bwd.top_final);
        Ok(self.apply_head(&feat))
    }

    /// Dispatches on the network kind.
    pub fn predict(&self, features: &FeatureTensor) -> Result<Vec<f64>, NetError> {
        match self.spec.kind {
            NetKind::Standard => self.forward(&features.forward_in),
            NetKind::BiFeature => {
                let bwd = features
                    .backward_in
                    .as_ref()
                    .ok_or(NetError::MissingBackwardFeatures)?;
                self.forward_bifeature(&features.forward_in, bwd)
            }
        }
    }

    fn apply_head(&self, feat: &[f64]) -> Vec<f64> {
        let mut out = self.head_bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            *o += self
                .head_weights
                .row(r)
                .iter()
                .zip(feat)
                .map(|(w, v)| w * v)
                .sum::<f64>();
        }
        out
    }
}

/// Gradients for every parameter tensor of a network.
#[derive(Debug, Clone)]
pub struct NetGrads {
    pub(crate) forward: Vec<LstmGrads>,
    pub(crate) backward: Vec<LstmGrads>,
    pub(crate) head_w: Matrix,
    pub(crate) head_b: Vec<f64>,
}

impl NetGrads {
    pub fn zeros_like(net: &LstmNetwork) -> Self {
        Self {
            forward: net.forward_layers.iter().map(LstmGrads::zeros_like).collect(),
            backward: net.backward_layers.iter().map(LstmGrads::zeros_like).collect(),
            head_w: Matrix::zeros(net.head_weights.rows, net.head_weights.cols),
            head_b: vec![0.0; net.head_bias.len()],
        }
    }

    pub fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.forward.iter_mut().zip(&other.forward) {
            a.add_assign(b);
        }
        for (a, b) in self.backward.iter_mut().zip(&other.backward) {
            a.add_assign(b);
        }
        self.head_w.add_assign(&other.head_w);
        for (a, b) in self.head_b.iter_mut().zip(&other.head_b) {
            *a += b;
        }
    }

    /// Tensor views in the order of [`LstmNetwork::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in self.forward.iter().chain(&self.backward) {
            out.push(layer.w_forget.data.as_slice());
            out.push(layer.w_input.data.as_slice());
            out.push(layer.w_cell.data.as_slice());
            out.push(layer.w_output.data.as_slice());
            out.push(layer.b_forget.as_slice());
            out.push(layer.b_input.as_slice());
            out.push(layer.b_cell.as_slice());
            out.push(layer.b_output.as_slice());
        }
        out.push(self.head_w.data.as_slice());
        out.push(self.head_b.as_slice());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.forward.iter_mut().chain(self.backward.iter_mut()) {
            out.push(layer.w_forget.data.as_mut_slice());
            out.push(layer.w_input.data.as_mut_slice());
            out.push(layer.w_cell.data.as_mut_slice());
            out.push(layer.w_output.data.as_mut_slice());
            out.push(layer.b_forget.as_mut_slice());
            out.push(layer.b_input.as_mut_slice());
            out.push(layer.b_cell.as_mut_slice());
            out.push(layer.b_output.as_mut_slice());
        }
        out.push(self.head_w.data.as_mut_slice());
        out.push(self.head_b.as_mut_slice());
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for g in t {
                *g *= factor;
            }
        }
    }
}

/// Per-sample dropout masks, pre-scaled by `1/(1-p)`; indexed
/// `[layer][timestep][unit]`. Empty vectors disable dropout.
#[derive(Debug, Clone, Default)]
pub(crate) struct DropoutMasks {
    pub forward: Vec<Vec<Vec<f64>>>,
    pub backward: Vec<Vec<Vec<f64>>>,
}

/// Carried per-branch states for stateful training.
#[derive(Debug, Clone)]
pub(crate) struct SampleStates {
    pub forward: Vec<LstmState>,
    pub backward: Vec<LstmState>,
}

struct BranchRun {
    layer_caches: Vec<Vec<CellCache>>,
    final_states: Vec<LstmState>,
    /// Final masked output of the top layer (what the head consumes).
    top_final: Vec<f64>,
}

fn branch_forward(
    layers: &[LstmParams],
    xs: &[f64],
    init: Option<&[LstmState]>,
    masks: Option<&[Vec<Vec<f64>>]>,
) -> BranchRun {
    let mut inputs: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
    let mut layer_caches = Vec::with_capacity(layers.len());
    let mut final_states = Vec::with_capacity(layers.len());
    for (l, params) in layers.iter().enumerate() {
        let zero = LstmState::zeros(params.hidden_size);
        let init_state = init.map(|s| &s[l]).unwrap_or(&zero);
        let (caches, final_state) = layer_forward(params, &inputs, init_state);
        let mut outs: Vec<Vec<f64>> = caches.iter().map(|c| c.h.clone()).collect();
        if let Some(m) = masks {
            for (t, out) in outs.iter_mut().enumerate() {
                for (v, &keep) in out.iter_mut().zip(&m[l][t]) {
                    *v *= keep;
                }
            }
        }
        layer_caches.push(caches);
        final_states.push(final_state);
        inputs = outs;
    }
    BranchRun {
        layer_caches,
        final_states,
        top_final: inputs.last().cloned().unwrap_or_default(),
    }
}

fn branch_backward(
    layers: &[LstmParams],
    run: &BranchRun,
    d_top_final: &[f64],
    masks: Option<&[Vec<Vec<f64>>]>,
    grads: &mut [LstmGrads],
) {
    let depth = layers.len();
    let steps = run.layer_caches[0].len();
    let top_hidden = layers[depth - 1].hidden_size;

    // External gradient enters the top layer only at the final timestep,
    // chained through that layer's dropout mask.
    let mut dh_ext = vec![vec![0.0; top_hidden]; steps];
    for (k, dv) in d_top_final.iter().enumerate() {
        let keep = masks.map(|m| m[depth - 1][steps - 1][k]).unwrap_or(1.0);
        dh_ext[steps - 1][k] = dv * keep;
    }

    for l in (0..depth).rev() {
        let dx_seq = layer_backward(&layers[l], &run.layer_caches[l], &dh_ext, &mut grads[l]);
        if l > 0 {
            let lower_hidden = layers[l - 1].hidden_size;
            dh_ext = dx_seq;
            debug_assert_eq!(dh_ext[0].len(), lower_hidden);
            if let Some(m) = masks {
                for (t, dv) in dh_ext.iter_mut().enumerate() {
                    for (v, &keep) in dv.iter_mut().zip(&m[l - 1][t]) {
                        *v *= keep;
                    }
                }
            }
        }
    }
}

/// Forward and backward pass for one sample. Adds `dy_scale * (y_hat - y)`
/// driven gradients into `grads` and returns the sum of squared errors
/// plus the final branch states (for stateful carrying).
pub(crate) fn sample_forward_backward(
    net: &LstmNetwork,
    sample: &FeatureTensor,
    init: Option<&SampleStates>,
    masks: Option<&DropoutMasks>,
    dy_scale: f64,
    grads: &mut NetGrads,
) -> Result<(f64, SampleStates), NetError> {
    let fwd_run = branch_forward(
        &net.forward_layers,
        &sample.forward_in,
        init.map(|s| s.forward.as_slice()),
        masks.map(|m| m.forward.as_slice()),
    );
    let bwd_run = match net.spec.kind {
        NetKind::Standard => None,
        NetKind::BiFeature => {
            let backward_in = sample
                .backward_in
                .as_ref()
                .ok_or(NetError::MissingBackwardFeatures)?;
            Some(branch_forward(
                &net.backward_layers,
                backward_in,
                init.map(|s| s.backward.as_slice()),
                masks.map(|m| m.backward.as_slice()),
            ))
        }
    };

    let mut feat = fwd_run.top_final.clone();
    if let Some(b) = &bwd_run {
        feat.extend_from_slice(&b.top_final);
    }
    let prediction = net.apply_head(&feat);

    let n_out = net.spec.output_len;
    if sample.target.len() != n_out {
        return Err(NetError::ShapeMismatch {
            what: "target",
            expected: n_out,
            found: sample.target.len(),
        });
    }
    let mut sse = 0.0;
    let mut dy = vec![0.0; n_out];
    for k in 0..n_out {
        let e = prediction[k] - sample.target[k];
        sse += e * e;
        dy[k] = dy_scale * e;
    }

    // Head gradients and the gradient w.r.t. the concatenated features.
    let mut dfeat = vec![0.0; feat.len()];
    grads.head_w.outer_add(&dy, &feat);
    for (b, d) in grads.head_b.iter_mut().zip(&dy) {
        *b += d;
    }
    net.head_weights.matvec_transpose_add(&dy, &mut dfeat);

    let fwd_top = fwd_run.top_final.len();
    branch_backward(
        &net.forward_layers,
        &fwd_run,
        &dfeat[..fwd_top],
        masks.map(|m| m.forward.as_slice()),
        &mut grads.forward,
    );
    if let Some(b) = &bwd_run {
        branch_backward(
            &net.backward_layers,
            b,
            &dfeat[fwd_top..],
            masks.map(|m| m.backward.as_slice()),
            &mut grads.backward,
        );
    }

    Ok((
        sse,
        SampleStates {
            forward: fwd_run.final_states,
            backward: bwd_run.map(|b| b.final_states).unwrap_or_default(),
        },
    ))
}

/// Mean-squared-error loss over `samples` together with its analytic
/// gradient (dropout off, zero initial states). The backbone of one
/// training step, exposed for gradient verification.
pub fn loss_and_grad(
    net: &LstmNetwork,
    samples: &[FeatureTensor],
) -> Result<(f64, NetGrads), NetError> {
    if samples.is_empty() {
        return Err(NetError::EmptyDataset { which: "loss" });
    }
    let denom = (samples.len() * net.spec.output_len) as f64;
    let mut grads = NetGrads::zeros_like(net);
    let mut sse = 0.0;
    for sample in samples {
        let (s, _) = sample_forward_backward(net, sample, None, None, 2.0 / denom, &mut grads)?;
        sse += s;
    }
    Ok((sse / denom, grads))
}
