//! Seed splitting.
//!
//! Every random stream in a run is derived from one root `u64`:
//!
//! ```text
//! child = splitmix64(splitmix64(root ^ fnv1a64(label)) ^ index)
//! ```
//!
//! `label` names the consumer ("trial", "propose", "evaluate", ...) and
//! `index` enumerates its draws. Streams are then driven by
//! `ChaCha8Rng::seed_from_u64(child)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ fnv1a64(label)) ^ index)
}

pub fn rng_for(root: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, label, index))
}
