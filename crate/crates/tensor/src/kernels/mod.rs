//! Forward and adjoint kernels on plain tensors. The [`Graph`](crate::Graph) records
//! calls into these; they are also usable directly for inference.

pub mod conv;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod softmax;

pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvGrads};
pub use loss::{focal_term, huber_term, sigmoid, softplus};
pub use norm::{batchnorm_backward, batchnorm_forward, BatchNormMode, BatchNormSaved, RunningStats};
pub use pool::{
    avg_pool3_backward, avg_pool3_forward, broadcast_backward, broadcast_forward, partition_bounds,
    partition_pool_backward, partition_pool_forward,
};
pub use softmax::{modality_softmax_backward, modality_softmax_forward};
