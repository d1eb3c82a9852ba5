//! Deterministic chunked execution of embarrassingly parallel work.
//!
//! Samplers and Monte Carlo accumulators split their work into fixed-size
//! chunks; chunk `k` always draws from its own RNG stream and the chunk
//! results are reduced in index order. The outcome is therefore
//! bit-identical whether chunks run sequentially or on a rayon pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
#[cfg(feature = "parallel")]
use std::sync::atomic::{AtomicBool, Ordering};

/// Number of items a single chunk processes.
pub const CHUNK: usize = 4096;

#[cfg(feature = "parallel")]
static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Forces chunked work onto the current thread even when the `parallel`
/// feature is enabled. Results are identical either way; the switch exists
/// for benchmarks and for pinning down scheduler-independent behaviour.
pub fn set_sequential(yes: bool) {
    #[cfg(feature = "parallel")]
    FORCE_SEQUENTIAL.store(yes, Ordering::SeqCst);
    #[cfg(not(feature = "parallel"))]
    let _ = yes;
}

/// Installs a global thread pool with `n` workers (0 keeps the default).
/// Results never depend on the worker count; this only controls resource
/// usage. Without the `parallel` feature the call is a no-op.
pub fn configure_threads(n: usize) -> crate::error::Result<()> {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| crate::error::Error::InvalidParameter(e.to_string()))?;
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Whether chunked work currently runs sequentially.
pub fn is_sequential() -> bool {
    #[cfg(feature = "parallel")]
    {
        FORCE_SEQUENTIAL.load(Ordering::SeqCst)
    }
    #[cfg(not(feature = "parallel"))]
    {
        true
    }
}

/// Maps `f` over `0..n_chunks`, preserving chunk order in the output.
pub fn map_chunks<T: Send>(n_chunks: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        if !is_sequential() {
            return (0..n_chunks).into_par_iter().map(f).collect();
        }
    }
    (0..n_chunks).map(f).collect()
}

/// Sequential variant, always available.
pub fn map_chunks_seq<T>(n_chunks: usize, mut f: impl FnMut(usize) -> T) -> Vec<T> {
    (0..n_chunks).map(&mut f).collect()
}

/// RNG for chunk `chunk` of the stream family identified by `seed`.
///
/// ChaCha streams keep the chunks statistically independent while staying
/// reproducible: the pair (seed, chunk) fully determines the draws.
pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk.wrapping_add(1));
    rng
}

/// Splits `n` items into `(chunk_index, chunk_len)` descriptors.
pub fn chunk_sizes(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n.div_ceil(CHUNK));
    let mut start = 0;
    let mut idx = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        out.push((idx, len));
        start += len;
        idx += 1;
    }
    out
}
