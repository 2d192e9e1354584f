use rand::{Rng, SeedableRng};

use crate::ensemble::SimRng;

/// Resamples used for every standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Stream of the bootstrap generator, kept apart from trajectory seeds.
const BOOTSTRAP_STREAM: u64 = 0x6f6f_7473_7472_6170;

/// Trajectory-level bootstrap: each resample draws trajectories with
/// replacement, stored as a multiplicity per trajectory so that many
/// statistics can share the same resamples.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    weights: Vec<Vec<u32>>,
}

impl Bootstrap {
    pub fn new(n: usize, resamples: usize, seed: u64) -> Self {
        let mut rng = SimRng::seed_from_u64(seed);
        rng.set_stream(BOOTSTRAP_STREAM);
        let weights = (0..resamples)
            .map(|_| {
                let mut w = vec![0u32; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1;
                }
                w
            })
            .collect();
        Bootstrap { weights }
    }

    /// Standard error of `Σ num / Σ den`, where trajectory `k` contributes
    /// `num[k]` and `den[k]`. Resamples with a zero denominator are skipped.
    pub fn ratio_stderr(&self, num: &[f64], den: &[f64]) -> f64 {
        let stats: Vec<f64> = self
            .weights
            .iter()
            .filter_map(|w| {
                let (mut a, mut b) = (0.0, 0.0);
                for ((&wk, &x), &y) in w.iter().zip(num).zip(den) {
                    if wk != 0 {
                        a += wk as f64 * x;
                        b += wk as f64 * y;
                    }
                }
                (b != 0.0).then(|| a / b)
            })
            .collect();
        std_dev(&stats)
    }
}

fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    var.sqrt()
}
