//! Layer parameter containers and whole-stack forward wiring.

use crate::numerics::rng::RngStream;

use super::tape::{AutonetError, Mode, NodeId, Tape, BN_MOMENTUM};
use super::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor2,
    pub beta: Tensor2,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor2::from_vec(channels, 1, vec![1.0; channels]),
            beta: Tensor2::zeros(channels, 1),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

/// One position-wise layer: a kernel-size-1 convolution (an affine map per
/// position), optional batch norm, optional ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor2,
    pub bias: Tensor2,
    pub bn: Option<BatchNormParams>,
    pub relu: bool,
}

impl LayerParams {
    /// Uniform init in +/- 1/sqrt(fan_in), bias likewise.
    pub fn init(out_ch: usize, in_ch: usize, bn: bool, relu: bool, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (in_ch as f64).sqrt();
        let weight = Tensor2::from_fn(out_ch, in_ch, |_, _| rng.uniform_range(-bound, bound));
        let bias = Tensor2::from_fn(out_ch, 1, |_, _| rng.uniform_range(-bound, bound));
        Self {
            weight,
            bias,
            bn: if bn {
                Some(BatchNormParams::new(out_ch))
            } else {
                None
            },
            relu,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.channels()
    }

    pub fn in_channels(&self) -> usize {
        self.weight.cols()
    }
}

/// Tape node ids of one bound layer, used to read gradients back out.
#[derive(Debug, Clone)]
pub struct LayerIds {
    pub w: NodeId,
    pub b: NodeId,
    pub gamma: Option<NodeId>,
    pub beta: Option<NodeId>,
    pub bn_node: Option<NodeId>,
}

/// Runs a stack of layers on the tape. Parameters enter as differentiable
/// leaves; the returned ids let the trainer collect their gradients and
/// the batch-norm statistics.
pub fn forward_stack(
    tape: &mut Tape,
    mut x: NodeId,
    stack: &[LayerParams],
    mode: Mode,
) -> Result<(NodeId, Vec<LayerIds>), AutonetError> {
    let mut ids = Vec::with_capacity(stack.len());
    for layer in stack {
        let w = tape.leaf(layer.weight.clone());
        let b = tape.leaf(layer.bias.clone());
        x = tape.dense(x, w, b)?;
        let (gamma, beta, bn_node) = match &layer.bn {
            Some(bn) => {
                let g = tape.leaf(bn.gamma.clone());
                let be = tape.leaf(bn.beta.clone());
                x = tape.batchnorm(x, g, be, &bn.running_mean, &bn.running_var, mode)?;
                (Some(g), Some(be), Some(x))
            }
            None => (None, None, None),
        };
        if layer.relu {
            x = tape.relu(x);
        }
        ids.push(LayerIds {
            w,
            b,
            gamma,
            beta,
            bn_node,
        });
    }
    Ok((x, ids))
}

/// Folds the batch statistics recorded on the tape into the stack's
/// running estimates (train mode only). The running variance uses the
/// unbiased estimate, matching common framework behavior.
pub fn update_running_stats(tape: &Tape, stack: &mut [LayerParams], ids: &[LayerIds]) {
    for (layer, lid) in stack.iter_mut().zip(ids) {
        let (Some(bn), Some(node)) = (&mut layer.bn, lid.bn_node) else {
            continue;
        };
        let Some((mean, var)) = tape.bn_batch_stats(node) else {
            continue;
        };
        let cols = tape.value(node).cols() as f64;
        let unbias = if cols > 1.0 { cols / (cols - 1.0) } else { 1.0 };
        for c in 0..bn.running_mean.len() {
            bn.running_mean[c] = (1.0 - BN_MOMENTUM) * bn.running_mean[c] + BN_MOMENTUM * mean[c];
            bn.running_var[c] =
                (1.0 - BN_MOMENTUM) * bn.running_var[c] + BN_MOMENTUM * var[c] * unbias;
        }
    }
}

/// Flat views over a stack's trainable tensors, in a stable order.
pub fn stack_param_sizes(stack: &[LayerParams]) -> Vec<usize> {
    let mut out = Vec::new();
    for layer in stack {
        out.push(layer.weight.len());
        out.push(layer.bias.len());
        if let Some(bn) = &layer.bn {
            out.push(bn.gamma.len());
            out.push(bn.beta.len());
        }
    }
    out
}

pub fn collect_stack_params<'a>(stack: &'a mut [LayerParams], out: &mut Vec<&'a mut Tensor2>) {
    for layer in stack {
        out.push(&mut layer.weight);
        out.push(&mut layer.bias);
        if let Some(bn) = &mut layer.bn {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
    }
}

/// Gradients for a stack in the same order as `collect_stack_params`.
pub fn collect_stack_grads(
    grads: &super::tape::Gradients,
    ids: &[LayerIds],
    stack: &[LayerParams],
    out: &mut Vec<Tensor2>,
) {
    for (layer, lid) in stack.iter().zip(ids) {
        out.push(
            grads
                .get(lid.w)
                .cloned()
                .unwrap_or_else(|| Tensor2::zeros(layer.weight.channels(), layer.weight.cols())),
        );
        out.push(
            grads
                .get(lid.b)
                .cloned()
                .unwrap_or_else(|| Tensor2::zeros(layer.bias.channels(), 1)),
        );
        if layer.bn.is_some() {
            let ch = layer.out_channels();
            out.push(
                grads
                    .get(lid.gamma.unwrap())
                    .cloned()
                    .unwrap_or_else(|| Tensor2::zeros(ch, 1)),
            );
            out.push(
                grads
                    .get(lid.beta.unwrap())
                    .cloned()
                    .unwrap_or_else(|| Tensor2::zeros(ch, 1)),
            );
        }
    }
}
