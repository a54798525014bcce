//! Minimal reverse-mode differentiation engine and the layer set used by
//! the end-to-end communication networks.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod tape;
pub mod tensor;

pub use adam::{lr_schedule, AdamState};
pub use layers::{
    collect_stack_grads, collect_stack_params, forward_stack, stack_param_sizes,
    update_running_stats, BatchNormParams, LayerIds, LayerParams,
};
pub use tape::{AutonetError, ColMats, Gradients, Mode, NodeId, Tape};
pub use tensor::{gemm, Tensor2};
