//! Per-modality autoencoders, joint-space projections and the fusion
//! classifier, with manual backpropagation and checkpointing.

mod checkpoint;
mod cobra;
mod head;
mod mlp;

pub use checkpoint::{
    decode_tensors, encode_tensors, load_checkpoint, load_head, read_tensors, save_checkpoint,
    save_head, write_tensors, MAGIC, VERSION,
};
pub use cobra::{
    init_model, Architecture, BranchCache, CobraModel, ForwardCache, Modality, ModalityPipeline,
    OutputGrads, Projection,
};
pub use head::{softmax_cross_entropy, ClassifierHead, HeadArchitecture, HeadCache};
pub use mlp::{Mlp, MlpCache};
