//! Dataset manifests, image decoding, augmentation, splitting and batching.

pub mod augment;
pub mod batch;
pub mod image;
pub mod manifest;
pub mod scan;
pub mod split;
pub mod synthetic;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{augment, plan_augmentation, AugmentJob, AugmentationPlan, ClassPlan, Multiplier};
pub use batch::{batch_indices, epoch_order, ImageSet};
pub use image::{decode_and_resize, load_image};
pub use manifest::{
    class_counts, load_manifest, write_manifest, Provenance, SampleRecord, Split, Transform,
};
pub use scan::scan_class_tree;
pub use split::{split, SplitConfig};
pub use synthetic::{synthetic_set, write_synthetic};

/// Independent random stream `tag` derived from a user seed.
pub fn substream(seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}
