//! Noise depends only on (seed, stream, offset), so any slice can be
//! regenerated independently of how the work was split.

use ddrm_refine::rng::{derive_seed, NoiseStream};
use num_complex::Complex64;

fn main() {
    let rng = NoiseStream::new(7);
    let mut whole = vec![Complex64::default(); 8];
    rng.fill(3, 0, &mut whole);
    let mut tail = vec![Complex64::default(); 4];
    rng.fill(3, 4, &mut tail);
    println!("whole[4..] == tail: {}", whole[4..] == tail[..]);
    for (i, z) in whole.iter().enumerate() {
        println!("  {i}: {:+.4} {:+.4}i", z.re, z.im);
    }
    let seeds: Vec<u64> = (0..3).map(|b| derive_seed(7, b)).collect();
    println!("block seeds: {seeds:?}");
}
