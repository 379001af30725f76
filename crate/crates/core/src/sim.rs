//! Monte-Carlo plumbing shared by the auction, verifier and experiment layers.
//!
//! Every trial owns a ChaCha8 stream seeded from `(base_seed, stream ids...)`,
//! so a trial's draws do not depend on which worker runs it. Trials are
//! grouped into fixed-size chunks; chunk accumulators are merged in chunk
//! order, which makes every aggregate bitwise reproducible for any thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Per-trial random stream.
pub type TrialRng = ChaCha8Rng;

/// Trials per parallel work unit. Part of the reproducibility contract:
/// changing it changes floating-point summation order.
pub const CHUNK: usize = 256;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of stream identifiers.
pub fn derive_seed(base: u64, ids: &[u64]) -> u64 {
    ids.iter()
        .fold(splitmix64(base), |acc, &id| splitmix64(acc ^ splitmix64(id)))
}

pub fn trial_rng(base: u64, ids: &[u64]) -> TrialRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, ids))
}

/// Running mean / variance (Welford, with Chan's merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.mean = mean;
        self.n = n;
    }

    /// Unbiased sample variance; 0 for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Half-width of the normal-approximation 95% confidence interval.
    pub fn ci95(&self) -> f64 {
        1.959_963_984_540_054 * self.std_error()
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Runs `n_trials` trials in parallel chunks and folds them deterministically.
///
/// `init` builds an empty accumulator, `trial(acc, index)` folds one trial in,
/// and `merge(into, from)` combines chunk accumulators (always in chunk order).
pub fn run_trials<A, I, T, M>(n_trials: usize, init: I, trial: T, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    T: Fn(&mut A, usize) + Sync,
    M: Fn(&mut A, A),
{
    let n_chunks = n_trials.div_ceil(CHUNK);
    let partials: Vec<A> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * CHUNK).min(n_trials);
            for i in c * CHUNK..end {
                trial(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    total
}
