//! Self-attention anomaly scorer: attention block, pooled head, loss and the
//! optional bidirectional LSTM front-end.

mod forward;
mod params;

pub use forward::{
    attention_map, batch_loss_and_grad, bce_loss, bilstm_forward, bilstm_on_tape, dropout_mask,
    forward_trace, forward_trace_with_mask, pool_and_score, score_video, video_on_tape,
    AttentionMap, ForwardTrace, Mode, ParamVars, Sample, VideoVars,
};
pub use params::{
    count_params, glorot_bound, BiLstmParams, Hyperparams, LstmDirection, ModelParams, TensorSpec,
    FC1_UNITS,
};
