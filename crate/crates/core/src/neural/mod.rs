//! The two convolutional autoencoders: N1 binarises the cleaned visible
//! coefficients, N2 completes the wavefront set into invisible subbands.
//!
//! Both share one U-shaped architecture (3×3 convolutions, ReLU, optional
//! batch normalisation, 2×2 max-pool down, nearest-neighbour up, skip
//! concatenations, 1×1 sigmoid head) and are trained with a smoothed dice
//! loss and Adam.

mod io;
mod net;
mod tensor;
mod train;

pub use io::{decode_weights, encode_weights, load_weights, save_weights, WEIGHTS_MAGIC};
pub use net::{Gradients, Mode, Network, NetworkSpec, Param, Tape};
pub use tensor::{Scalar, Tensor};
pub use train::{
    binarize, dice_loss, dice_loss_batch, dice_loss_stacks, evaluate_loss, train, train_step, Adam, EpochRecord,
    TrainConfig, TrainLog, TrainingSet, DICE_EPS,
};

use crate::dtcwt::{StackTag, SubbandStack};
use crate::error::Result;

/// Inference on one stack; the result carries the given tag.
pub fn predict_stack<T: Scalar>(net: &Network<T>, x: &SubbandStack, tag: StackTag) -> Result<SubbandStack> {
    let input = Tensor::<T>::from_stacks(&[x])?;
    let out = net.predict(&input)?;
    Ok(out.to_stacks(tag)?.remove(0))
}
