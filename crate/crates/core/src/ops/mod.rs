//! Layer primitives with forward and reverse-mode backward passes.

pub mod activation;
pub mod channel;
pub mod conv;
pub mod pool;

pub use activation::{prelu, prelu_backward, relu, relu_backward, sigmoid, sigmoid_backward};
pub use channel::{
    channel_attention, channel_attention_backward, concat_channels, concat_channels_backward,
    slice_channels, slice_channels_backward, split_channels, AttentionGrads,
};
pub use conv::{
    asym_conv_backward, asym_conv_forward, conv2d, conv2d_backward, conv2d_transposed,
    conv2d_transposed_backward, separable_conv, AsymParams, ConvGrads, ConvParams, Padding,
};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, maxpool2, maxpool2_backward, upsample_bilinear2,
    upsample_bilinear2_backward, upsample_nearest2, upsample_nearest2_backward,
};
