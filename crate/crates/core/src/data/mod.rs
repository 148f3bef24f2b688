mod codec;
mod dataset;
mod replay;

pub use codec::{Decoder, Encoder};
pub use dataset::{load_dataset, save_dataset, ExpertDataset, FORMAT_VERSION, MAGIC};
pub use replay::{ReplayBuffer, Transition, TransitionBatch};
