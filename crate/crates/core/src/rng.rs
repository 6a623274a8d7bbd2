//! Reproducible, splittable random number streams.
//!
//! All samplers in this crate take `&mut impl Rng`. For anything parallel or
//! resumable, derive one substream per unit of work from a `(seed, stream)`
//! pair: ChaCha is counter-based, so substreams are independent and the work
//! decomposition can change (thread counts, chunk sizes) without changing any
//! drawn number.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The concrete generator used throughout: ChaCha with 8 rounds, which is
/// crypto-derived (no detectable lattice structure) but cheap enough to seed
/// once per Monte Carlo path.
pub type Stream = ChaCha8Rng;

/// Substream `stream` of the generator family keyed by `seed`.
///
/// Distinct `(seed, stream)` pairs yield independent streams; equal pairs
/// yield bitwise-identical draws on every platform.
pub fn substream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn first4(mut r: Stream) -> Vec<u64> {
        (0..4).map(|_| r.random()).collect()
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a = first4(substream(7, 0));
        let b = first4(substream(7, 0));
        let c = first4(substream(7, 1));
        let d = first4(substream(8, 0));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn draws_do_not_depend_on_call_pattern() {
        let mut r1 = substream(3, 5);
        let x1: f64 = r1.random();
        let y1: f64 = r1.random();
        let mut r2 = substream(3, 5);
        let x2: f64 = r2.random();
        let y2: f64 = r2.random();
        assert_eq!((x1, y1), (x2, y2));
    }
}
