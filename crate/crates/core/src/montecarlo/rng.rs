use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random stream for one replication of one design cell.
///
/// The ChaCha20 key is expanded from `seed` with SplitMix64 and the 64-bit
/// stream id is `(cell << 32) | rep`, so every `(seed, cell, rep)` triple owns a
/// disjoint keystream regardless of which worker draws from it.
pub struct Substream {
    rng: ChaCha20Rng,
    normal: Normal,
}

impl Substream {
    pub fn new(seed: u64, cell: u32, rep: u32) -> Self {
        let mut state = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(((cell as u64) << 32) | rep as u64);
        Self { rng, normal: Normal::new(0.0, 1.0).expect("standard normal") }
    }

    /// Uniform on the open interval (0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Standard normal by inversion.
    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    /// Chi-square with `df` degrees of freedom as a sum of squared normals.
    pub fn chi_square(&mut self, df: usize) -> f64 {
        (0..df).map(|_| self.normal().powi(2)).sum()
    }
}
