//! The synthetic long-tailed benchmark: generation, sketches and files.

pub mod file;
pub mod shapes;
pub mod sketch;

pub use file::{decode_dataset, encode_dataset, load_dataset, save_dataset};
pub use shapes::{
    generate_dataset, generate_dataset_with, Dataset, ImageSample, LongTailProfile, RenderConfig,
    ShapeFamily, Split, IMAGE_PIXELS, IMAGE_SIDE,
};
pub use sketch::extract_sketch;
