//! Dense networks, reverse-mode gradients, the gradient penalty and Adam.

pub mod adam;
pub mod gaussian;
pub mod mlp;
pub mod multihead;
pub mod penalty;
pub mod scalar;
pub mod tensor;

pub use adam::{clip_global_norm, global_norm, AdamState};
pub use gaussian::{
    gaussian_backward, gaussian_head, mean_action, sigmoid, softplus, std_from_pre_variance,
    GaussianSample,
};
pub use mlp::{Activation, Layer, Mlp, MlpCache, MlpGrads, ParamSet};
pub use multihead::{HeadSpec, MultiHeadCache, MultiHeadGrads, MultiHeadNet, Route};
pub use penalty::{input_gradient_norm_penalty, routed_input_gradient_penalty, PenaltyOutput};
pub use scalar::Scalar;
pub use tensor::Tensor;
