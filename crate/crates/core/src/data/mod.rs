//! Manifests, PGM/PPM decoding, augmentation and dataset splits.

mod manifest;
mod pnm;
mod sample;
pub mod synth;

pub use manifest::{load_manifest, write_manifest, Manifest, Record};
pub use pnm::{decode_pnm, read_pnm, PnmImage};
pub use sample::{
    augment, decode_pair, hflip, image_to_tensor, load_pairs, mask_to_tensor, read_image,
    resize_nearest, resize_uniform, split_manifest, split_train_val, InputMode, SamplePair,
    MASK_THRESHOLD,
};
