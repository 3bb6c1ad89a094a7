//! Mini-batch training: Adam on mean-squared error, inverted dropout,
//! global-norm gradient clipping, and stateful batch-to-batch carrying.

use rand::Rng;
use rayon::prelude::*;

use super::features::FeatureTensor;
use super::network::{
    sample_forward_backward, DropoutMasks, LstmNetwork, NetGrads, NetKind, SampleStates,
};
use super::NetError;
use crate::seeding::{rng_for, Domain};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;
pub const GRADIENT_CLIP_NORM: f64 = 5.0;

// Samples per gradient-accumulation chunk. Chunks are reduced in index
// order, so results do not depend on the number of worker threads.
const GRAD_CHUNK: usize = 16;

/// Per-epoch training and validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(shapes: &[&[f64]]) -> Self {
        Self {
            m: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, net: &mut LstmNetwork, grads: &NetGrads, lr: f64) {
        self.step += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.step);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.step);
        for ((params, grad), (m, v)) in net
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for k in 0..params.len() {
                let g = grad[k];
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                params[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
    }
}

fn draw_masks(net: &LstmNetwork, epoch: usize, sample_index: usize) -> Option<DropoutMasks> {
    let p = net.spec.dropout;
    if p == 0.0 {
        return None;
    }
    debug_assert!(epoch < (1 << 16) && sample_index < (1 << 24));
    let stream = ((epoch as u64) << 24) | sample_index as u64;
    let mut rng = rng_for(net.spec.seed, Domain::Dropout, stream);
    let scale = 1.0 / (1.0 - p);
    let mut branch = |steps: usize| -> Vec<Vec<Vec<f64>>> {
        net.spec
            .layers
            .iter()
            .map(|&hidden| {
                (0..steps)
                    .map(|_| {
                        (0..hidden)
                            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    let forward = branch(net.spec.forward_feature_len());
    let backward = match net.spec.kind {
        NetKind::Standard => Vec::new(),
        NetKind::BiFeature => branch(net.spec.backward_feature_len()),
    };
    Some(DropoutMasks { forward, backward })
}

/// Mean-squared error of inference predictions (dropout off, zero states).
pub fn evaluate_mse(net: &LstmNetwork, data: &[FeatureTensor]) -> Result<f64, NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset { which: "evaluation" });
    }
    let mut sse = 0.0;
    for sample in data {
        let pred = net.predict(sample)?;
        for (p, y) in pred.iter().zip(&sample.target) {
            sse += (p - y) * (p - y);
        }
    }
    Ok(sse / (data.len() * net.spec.output_len) as f64)
}

/// Trains the network in place and reports per-epoch losses.
///
/// Batches run in chronological order. With `stateful` set, lane `i` of a
/// batch starts from lane `i`'s final state of the previous batch (values
/// only; gradients are truncated at batch boundaries), and states reset at
/// every epoch boundary. Per-sample gradients are accumulated in
/// fixed-size chunks reduced in index order, so training is deterministic
/// for any worker-thread count.
pub fn train(
    net: &mut LstmNetwork,
    train_data: &[FeatureTensor],
    val_data: &[FeatureTensor],
) -> Result<TrainReport, NetError> {
    net.spec.validate()?;
    if train_data.is_empty() {
        return Err(NetError::EmptyDataset { which: "train" });
    }
    if val_data.is_empty() {
        return Err(NetError::EmptyDataset { which: "validation" });
    }

    let spec = net.spec.clone();
    let n_out = spec.output_len;
    let mut adam = Adam::new(&net.tensors());
    let mut train_loss = Vec::with_capacity(spec.epochs);
    let mut val_loss = Vec::with_capacity(spec.epochs);

    for epoch in 0..spec.epochs {
        let mut carried: Option<Vec<SampleStates>> = None;
        let mut epoch_sse = 0.0;
        let mut epoch_terms = 0usize;

        for (batch_idx, batch) in train_data.chunks(spec.batch_size).enumerate() {
            let base = batch_idx * spec.batch_size;
            let dy_scale = 2.0 / (batch.len() * n_out) as f64;
            let frozen = &*net;
            let carried_ref = carried.as_deref();

            let chunk_results: Vec<(NetGrads, f64, Vec<SampleStates>)> = batch
                .par_chunks(GRAD_CHUNK)
                .enumerate()
                .map(|(chunk_idx, chunk)| {
                    let mut grads = NetGrads::zeros_like(frozen);
                    let mut sse = 0.0;
                    let mut finals = Vec::with_capacity(chunk.len());
                    for (offset, sample) in chunk.iter().enumerate() {
                        let lane = chunk_idx * GRAD_CHUNK + offset;
                        let masks = draw_masks(frozen, epoch, base + lane);
                        let init = carried_ref.and_then(|c| c.get(lane));
                        let (s, states) = sample_forward_backward(
                            frozen,
                            sample,
                            init,
                            masks.as_ref(),
                            dy_scale,
                            &mut grads,
                        )?;
                        sse += s;
                        finals.push(states);
                    }
                    Ok((grads, sse, finals))
                })
                .collect::<Result<Vec<_>, NetError>>()?;

            let mut grads = NetGrads::zeros_like(net);
            let mut batch_sse = 0.0;
            let mut finals = Vec::with_capacity(batch.len());
            for (g, s, f) in chunk_results {
                grads.add_assign(&g);
                batch_sse += s;
                finals.extend(f);
            }
            let batch_loss = batch_sse / (batch.len() * n_out) as f64;
            if !batch_loss.is_finite() {
                return Err(NetError::NonFiniteLoss { epoch });
            }
            epoch_sse += batch_sse;
            epoch_terms += batch.len() * n_out;

            let norm = grads.global_norm();
            if norm > GRADIENT_CLIP_NORM {
                grads.scale(GRADIENT_CLIP_NORM / norm);
            }
            adam.apply(net, &grads, spec.learning_rate);

            carried = spec.stateful.then_some(finals);
        }

        train_loss.push(epoch_sse / epoch_terms as f64);
        let v = evaluate_mse(net, val_data)?;
        if !v.is_finite() {
            return Err(NetError::NonFiniteLoss { epoch });
        }
        val_loss.push(v);
    }

    Ok(TrainReport { train_loss, val_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::features::build_features;
    use crate::nets::network::{Activation, NetworkSpec};
    use crate::series::NormalizationParams;

    fn toy_spec(seed: u64) -> NetworkSpec {
        NetworkSpec {
            kind: NetKind::Standard,
            layers: vec![12],
            dropout: 0.0,
            learning_rate: 0.02,
            batch_size: 16,
            epochs: 50,
            activation: Activation::Tanh,
            stateful: true,
            input_len: 4,
            output_len: 1,
            seed,
        }
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn learns_a_linear_decay_map() {
        // Toy task: y = 0.9 * x_{t-1} over a varied smooth driver, i.e. the
        // next value follows the decay map x_{t+1} = 0.9 x_t.
        let values: Vec<f64> = (0..800)
            .map(|t| {
                let t = t as f64;
                0.5 + 0.35 * (std::f64::consts::TAU * t / 24.0).sin()
                    + 0.1 * (std::f64::consts::TAU * t / 160.0).cos()
            })
            .collect();
        let norm = NormalizationParams::fit(&values).unwrap();
        let scaled = norm.apply(&values);
        let rows = build_features(&scaled, NetKind::Standard, 4, 1, 8).unwrap();
        let tensors: Vec<FeatureTensor> = rows
            .into_iter()
            .map(|(_, mut f)| {
                f.target = vec![0.9 * f.forward_in[3]];
                f
            })
            .collect::<Vec<_>>();
        let split = tensors.len() * 8 / 10;
        let (train_rows, val_rows) = tensors.split_at(split);

        let mut net = LstmNetwork::new(toy_spec(4)).unwrap();
        let report = train(&mut net, train_rows, val_rows).unwrap();

        let targets: Vec<f64> = val_rows.iter().map(|f| f.target[0]).collect();
        let var = variance(&targets);
        let final_val = *report.val_loss.last().unwrap();
        assert!(
            final_val < 0.1 * var,
            "val MSE {final_val} vs 10% of target variance {}",
            0.1 * var
        );
        assert!(report.train_loss[0] > *report.train_loss.last().unwrap());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let values: Vec<f64> = (0..200)
            .map(|t| (std::f64::consts::TAU * t as f64 / 24.0).sin() * 0.4 + 0.5)
            .collect();
        let rows = build_features(&values, NetKind::Standard, 4, 1, 8).unwrap();
        let tensors: Vec<FeatureTensor> = rows.into_iter().map(|(_, f)| f).collect();
        let mut spec = toy_spec(6);
        spec.learning_rate = 0.0;
        spec.epochs = 5;
        let mut net = LstmNetwork::new(spec).unwrap();
        let before = net.clone();
        let report = train(&mut net, &tensors[..120], &tensors[120..]).unwrap();
        assert_eq!(net, before, "parameters must not move at lr 0");
        for w in report.train_loss.windows(2) {
            assert_eq!(w[0], w[1], "loss history must be flat");
        }
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let values: Vec<f64> = (0..260)
            .map(|t| (std::f64::consts::TAU * t as f64 / 24.0).sin() * 0.4 + 0.5)
            .collect();
        let rows = build_features(&values, NetKind::BiFeature, 3, 2, 24).unwrap();
        let tensors: Vec<FeatureTensor> = rows.into_iter().map(|(_, f)| f).collect();
        let mut spec = NetworkSpec::bifeature(3, 2, 11);
        spec.layers = vec![6, 5];
        spec.epochs = 3;
        spec.batch_size = 32;
        spec.dropout = 0.1;

        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut net = LstmNetwork::new(spec.clone()).unwrap();
                let report = train(&mut net, &tensors[..160], &tensors[160..]).unwrap();
                (net, report)
            })
        };
        let (net1, rep1) = run(1);
        let (net4, rep4) = run(4);
        assert_eq!(net1, net4, "trained parameters must be thread-count independent");
        assert_eq!(rep1, rep4);
    }

    #[test]
    fn dropout_is_off_at_inference() {
        let values: Vec<f64> = (0..200)
            .map(|t| (std::f64::consts::TAU * t as f64 / 24.0).sin() * 0.4 + 0.5)
            .collect();
        let rows = build_features(&values, NetKind::Standard, 4, 1, 8).unwrap();
        let tensors: Vec<FeatureTensor> = rows.into_iter().map(|(_, f)| f).collect();
        let mut spec = toy_spec(9);
        spec.dropout = 0.4;
        spec.epochs = 2;
        let mut net = LstmNetwork::new(spec).unwrap();
        train(&mut net, &tensors[..120], &tensors[120..]).unwrap();
        let a = net.predict(&tensors[0]).unwrap();
        let b = net.predict(&tensors[0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_datasets_are_rejected() {
        let mut net = LstmNetwork::new(toy_spec(1)).unwrap();
        let sample = FeatureTensor {
            forward_in: vec![0.0; 8],
            backward_in: None,
            target: vec![0.0],
        };
        assert!(matches!(
            train(&mut net, &[], &[sample.clone()]),
            Err(NetError::EmptyDataset { which: "train" })
        ));
        assert!(matches!(
            train(&mut net, &[sample], &[]),
            Err(NetError::EmptyDataset { which: "validation" })
        ));
    }
}
