//! Reference-based scoring and the discriminative/generative blend.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::signal::AudioBuffer;
use crate::{Error, Result};

/// Reported for exact matches instead of `+inf`.
pub const SI_SDR_CAP_DB: f64 = 100.0;
const MAX_PERMUTED_SOURCES: usize = 4;

/// Scale-invariant SDR in dB.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|r| r * r).sum();
    if ref_energy == 0.0 {
        return Err(Error::InvalidInput("reference is identically zero".into()));
    }
    let alpha = estimate.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / ref_energy;
    let (mut target, mut residual) = (0.0, 0.0);
    for (e, r) in estimate.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        residual += (t - e) * (t - e);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    if residual == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `per_source[i]` scores `estimates[i]` against `references[permutation[i]]`.
    pub per_source: Vec<f64>,
    pub permutation: Vec<usize>,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

/// Scores estimates against references under the best of all `N!` orderings.
pub fn eval_permuted(estimates: &[AudioBuffer], references: &[AudioBuffer]) -> Result<EvalReport> {
    let n = estimates.len();
    if n != references.len() {
        return Err(Error::Shape(format!("{n} estimates but {} references", references.len())));
    }
    if n == 0 || n > MAX_PERMUTED_SOURCES {
        return Err(Error::InvalidInput(format!(
            "permutation search supports 1..={MAX_PERMUTED_SOURCES} sources, got {n}"
        )));
    }
    let mut table = vec![vec![0.0; n]; n];
    for (i, est) in estimates.iter().enumerate() {
        for (j, r) in references.iter().enumerate() {
            table[i][j] = si_sdr(&est.samples, &r.samples)?;
        }
    }
    let mut best: Option<EvalReport> = None;
    // Lexicographic order, so ties resolve to the earliest permutation.
    for perm in (0..n).permutations(n) {
        let per_source: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| table[i][j]).collect();
        let mean = per_source.iter().sum::<f64>() / n as f64;
        if best.as_ref().is_none_or(|b| mean > b.mean) {
            best = Some(EvalReport { per_source, permutation: perm, mean, xi: None });
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// `xi * discriminative + (1 - xi) * generative`, per source, on waveforms.
pub fn blend(
    discriminative: &[AudioBuffer],
    generative: &[AudioBuffer],
    xi: f64,
) -> Result<Vec<AudioBuffer>> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidInput(format!("blend weight {xi} outside [0, 1]")));
    }
    if discriminative.len() != generative.len() {
        return Err(Error::Shape(format!(
            "{} discriminative vs {} generative sources",
            discriminative.len(),
            generative.len()
        )));
    }
    discriminative
        .iter()
        .zip(generative)
        .map(|(d, g)| {
            if d.len() != g.len() || d.sample_rate != g.sample_rate {
                return Err(Error::Shape(format!(
                    "cannot blend {} samples at {} Hz with {} samples at {} Hz",
                    d.len(),
                    d.sample_rate,
                    g.len(),
                    g.sample_rate
                )));
            }
            if xi == 1.0 {
                return Ok(d.clone());
            }
            if xi == 0.0 {
                return Ok(g.clone());
            }
            let samples = d
                .samples
                .iter()
                .zip(&g.samples)
                .map(|(a, b)| xi * a + (1.0 - xi) * b)
                .collect();
            AudioBuffer::new(samples, d.sample_rate)
        })
        .collect()
}

/// The weights `0, 1/steps, ..., 1`.
pub fn xi_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 / steps as f64).collect()
}

/// Evaluates the blend at every weight in `xis`.
pub fn blend_sweep(
    discriminative: &[AudioBuffer],
    generative: &[AudioBuffer],
    references: &[AudioBuffer],
    xis: &[f64],
) -> Result<Vec<EvalReport>> {
    xis.iter()
        .map(|&xi| {
            let mixed = blend(discriminative, generative, xi)?;
            let mut report = eval_permuted(&mixed, references)?;
            report.xi = Some(xi);
            Ok(report)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_core::{RngCore, SeedableRng};

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.next_u32() as f64 / u32::MAX as f64 - 0.5).collect()
    }

    fn buf(samples: Vec<f64>) -> AudioBuffer {
        AudioBuffer::new(samples, 8000).unwrap()
    }

    #[test]
    fn exact_and_scaled_matches_hit_the_cap() {
        let r = noise(100, 1);
        assert_eq!(si_sdr(&r, &r).unwrap(), SI_SDR_CAP_DB);
        let twice: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&twice, &r).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn orthogonal_noise_at_a_tenth_is_20_db() {
        let r = noise(1000, 2);
        let mut n = noise(1000, 3);
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let proj = n.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
        n.iter_mut().zip(&r).for_each(|(a, b)| *a -= proj * b);
        let scale = (rr / 100.0 / n.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let est: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + scale * b).collect();
        assert!((si_sdr(&est, &r).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn si_sdr_errors() {
        assert!(si_sdr(&[1.0], &[0.0]).is_err());
        assert!(si_sdr(&[1.0, 2.0], &[1.0]).is_err());
        assert_eq!(si_sdr(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), -SI_SDR_CAP_DB);
    }

    proptest! {
        #[test]
        fn si_sdr_is_scale_invariant(seed in 0u64..1000, c in 1e-3f64..1e3) {
            let r = noise(64, seed);
            let e: Vec<f64> = r.iter().zip(noise(64, seed + 7)).map(|(a, b)| a + 0.3 * b).collect();
            let scaled: Vec<f64> = e.iter().map(|v| c * v).collect();
            prop_assert!((si_sdr(&scaled, &r).unwrap() - si_sdr(&e, &r).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn swapped_sources_are_realigned() {
        let refs = vec![buf(noise(200, 1)), buf(noise(200, 2))];
        let est: Vec<AudioBuffer> = refs.iter().map(|r| buf(r.samples.iter().zip(noise(200, 9)).map(|(a, b)| a + 0.1 * b).collect())).collect();
        let straight = eval_permuted(&est, &refs).unwrap();
        let swapped = eval_permuted(&[est[1].clone(), est[0].clone()], &refs).unwrap();
        assert_eq!(straight.permutation, vec![0, 1]);
        assert_eq!(swapped.permutation, vec![1, 0]);
        assert_eq!(swapped.per_source, vec![straight.per_source[1], straight.per_source[0]]);
        assert_eq!(swapped.mean, straight.mean);
    }

    #[test]
    fn single_source_and_count_errors() {
        let r = vec![buf(noise(10, 1))];
        assert_eq!(eval_permuted(&r, &r).unwrap().permutation, vec![0]);
        assert!(eval_permuted(&r, &[]).is_err());
    }

    /// Hand-written enumeration of the six orderings of three sources.
    #[test]
    fn three_sources_match_exhaustive_oracle() {
        for seed in 0..20u64 {
            let refs: Vec<AudioBuffer> = (0..3).map(|i| buf(noise(128, 100 * seed + i))).collect();
            let est: Vec<AudioBuffer> = (0..3).map(|i| buf(noise(128, 100 * seed + 50 + i)).samples)
                .zip([2usize, 0, 1])
                .map(|(n, j)| buf(refs[j].samples.iter().zip(n).map(|(a, b)| a + 0.8 * b).collect()))
                .collect();
            let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let mut best = (f64::NEG_INFINITY, [0; 3]);
            for o in orders {
                let m = (0..3).map(|i| si_sdr(&est[i].samples, &refs[o[i]].samples).unwrap()).sum::<f64>() / 3.0;
                if m > best.0 {
                    best = (m, o);
                }
            }
            let report = eval_permuted(&est, &refs).unwrap();
            assert_eq!(report.permutation, best.1.to_vec());
            assert_eq!(report.mean, best.0);
            assert_eq!(report.permutation, vec![2, 0, 1]);
        }
    }

    #[test]
    fn blend_endpoints_are_exact() {
        let d = vec![buf(noise(50, 1))];
        let g = vec![buf(noise(50, 2))];
        assert_eq!(blend(&d, &g, 1.0).unwrap(), d);
        assert_eq!(blend(&d, &g, 0.0).unwrap(), g);
        let mid = blend(&d, &g, 0.8).unwrap();
        assert!((mid[0].samples[3] - (0.8 * d[0].samples[3] + 0.2 * g[0].samples[3])).abs() < 1e-15);
        assert!(blend(&d, &g, 1.1).is_err());
        assert!(blend(&d, &g, -0.1).is_err());
        assert!(blend(&d, &[buf(noise(49, 2))], 0.5).is_err());
    }

    #[test]
    fn sweep_shapes() {
        let refs = vec![buf(noise(300, 1)), buf(noise(300, 2))];
        let disc: Vec<AudioBuffer> = refs.iter().enumerate()
            .map(|(i, r)| buf(r.samples.iter().zip(noise(300, 10 + i as u64)).map(|(a, b)| a + 0.5 * b).collect()))
            .collect();
        let grid = xi_grid(10);
        assert_eq!(grid.len(), 11);
        assert_eq!(grid[8], 0.8);

        let flat = blend_sweep(&disc, &disc, &refs, &grid).unwrap();
        assert_eq!(flat.len(), 11);
        assert!(flat.iter().all(|r| (r.mean - flat[0].mean).abs() < 1e-9));
        assert_eq!(flat[10].per_source, eval_permuted(&disc, &refs).unwrap().per_source);

        let curve = blend_sweep(&disc, &refs, &refs, &grid).unwrap();
        for w in curve.windows(2) {
            assert!(w[0].mean > w[1].mean, "{} !> {}", w[0].mean, w[1].mean);
        }
        assert_eq!(curve[0].mean, SI_SDR_CAP_DB);
    }
}
