//! Counter-based random streams.
//!
//! Every random draw in the workbench comes from a ChaCha8 stream keyed by
//! `(seed, instance, slot, tag)`. Streams are independent of evaluation
//! order, so trials may run on any thread and still reproduce bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a stream. The discriminant is mixed into the stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Channel = 1,
    PayloadBits = 2,
    Noise = 3,
    EstimationError = 4,
    Search = 5,
    Threshold = 6,
    Calibration = 7,
    Sampling = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seed for a derived experiment (for example calibration instances that
/// must not coincide with evaluation instances).
pub fn derive_seed(seed: u64, tag: StreamTag) -> u64 {
    splitmix64(seed ^ splitmix64(0xC0FF_EE00 ^ tag as u64))
}

/// Returns the stream for `(seed, instance, slot, tag)`.
pub fn stream(seed: u64, instance: u64, slot: u64, tag: StreamTag) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let id = splitmix64(instance ^ splitmix64(slot ^ splitmix64(tag as u64)));
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(id);
    rng
}
