//! Counter-based random streams.
//!
//! Each trajectory gets a ChaCha8 stream keyed by the master seed and selected
//! by the trajectory index, so stream `i` never depends on whether stream
//! `i - 1` was consumed. The position inside a stream is a plain word counter,
//! which makes it cheap to checkpoint.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key_from_seed(master_seed: u64) -> [u8; 32] {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Independent, reproducible stream number `index` of `master_seed`.
pub fn split_stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::from_seed(key_from_seed(master_seed));
    rng.set_stream(index);
    rng
}

/// Stream position, in 32-bit words.
pub fn stream_position(rng: &Stream) -> u128 {
    rng.get_word_pos()
}

pub fn restore_stream(master_seed: u64, index: u64, word_pos: u128) -> Stream {
    let mut rng = split_stream(master_seed, index);
    rng.set_word_pos(word_pos);
    rng
}

/// Stream tags keep unrelated uses of one master seed apart.
pub mod tag {
    pub const TRAJECTORY: u64 = 0;
    pub const COVARIANCE: u64 = 1 << 40;
    pub const DIFFUSION: u64 = 2 << 40;
    pub const WAITING: u64 = 3 << 40;
    pub const SQUEEZE: u64 = 4 << 40;
}
