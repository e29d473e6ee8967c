//! Dense tensors and a minimal convolutional network evaluated under
//! element-wise masking `v = w ⊙ m`, with hand-written reverse-mode gradients.

pub(crate) mod arch;
mod gradcheck;
mod network;
mod tensor;

pub use arch::{init_params, ActShape, LayerSpec, ModelArch, ParamSet};
pub use gradcheck::{finite_diff_check, relative_error};
pub use network::{
    accuracy, apply_mask, forward, forward_dense, grad_z, grad_z_set, loss_and_grad,
    loss_and_grad_v, predict, softmax_cross_entropy, ForwardCache,
};
pub use tensor::Tensor;
