//! Closed-form laws for backward cluster sizes.
//!
//! Times here are measured in mean free times, so that a tagged particle
//! collides at unit rate. In the idealised picture where each of the `r + 1`
//! particles of a cluster independently meets a fresh particle at unit rate,
//! a given tree `Γ_k` has probability `e^{-t}(1 - e^{-t})^k / k!`; summing
//! over the `k!` trees gives the geometric law `e^{-t}(1 - e^{-t})^k` with
//! mean `e^t - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `k` for which `k!` fits in a `u64`.
pub const MAX_COUNT_K: u64 = 20;

/// Largest `k` accepted by [`enumerate_trees`].
pub const MAX_ENUMERATE_K: usize = 8;

/// Constants of the stretched-exponential tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Elapsed time in mean free times.
    pub t: f64,
    /// Bound constant, `C > 0`.
    #[serde(rename = "C")]
    pub c: f64,
    /// The bound holds for `k > k0`.
    pub k0: u64,
}

impl TheoryParams {
    pub fn new(t: f64, c: f64, k0: u64) -> Result<Self> {
        let p = TheoryParams { t, c, k0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_time(self.t)?;
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!(
                "bound constant C = {} must be positive",
                self.c
            )));
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!(
            "time {t} must be finite and non-negative"
        )));
    }
    Ok(())
}

/// `1 - e^{-t}` without cancellation for small `t`.
fn growth(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// Probability `e^{-t}(1 - e^{-t})^k` that the cluster has `k` members.
pub fn wild_cluster_pmf(k: u64, t: f64) -> Result<f64> {
    check_time(t)?;
    if k == 0 {
        return Ok((-t).exp());
    }
    // Through logarithms so that large k underflows gracefully.
    Ok((-t + k as f64 * growth(t).ln()).exp())
}

/// Mean cluster size `e^t - 1` under [`wild_cluster_pmf`].
pub fn wild_mean_size(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(t.exp_m1())
}

/// Checks that `gamma` is a valid parents list: `1 <= gamma[r-1] <= r`.
pub fn validate_tree(gamma: &[usize]) -> Result<()> {
    for (r, &k) in gamma.iter().enumerate() {
        if k == 0 || k > r + 1 {
            return Err(Error::invalid(format!(
                "parent {k} at position {} is outside 1..={}",
                r + 1,
                r + 1
            )));
        }
    }
    Ok(())
}

/// Probability of the tree `gamma`, the time-ordered integral
/// `∫ e^{-(t - t_1)} e^{-2(t_1 - t_2)} ⋯ e^{-(k+1) t_k}` over
/// `t > t_1 > ⋯ > t_k > 0`, which equals `e^{-t}(1 - e^{-t})^k / k!` for
/// every tree of size `k`.
pub fn tree_weight(gamma: &[usize], t: f64) -> Result<f64> {
    validate_tree(gamma)?;
    let k = gamma.len() as u64;
    let log_factorial: f64 = (1..=k).map(|j| (j as f64).ln()).sum();
    Ok(wild_cluster_pmf(k, t)? * (-log_factorial).exp())
}

/// Number `k!` of parents lists of length `k`.
pub fn count_trees(k: u64) -> Result<u64> {
    if k > MAX_COUNT_K {
        return Err(Error::invalid(format!(
            "{k}! overflows; k must be at most {MAX_COUNT_K}"
        )));
    }
    Ok((1..=k).product())
}

/// All parents lists of length `k` in lexicographic order.
pub fn enumerate_trees(k: usize) -> Result<Vec<Vec<usize>>> {
    if k > MAX_ENUMERATE_K {
        return Err(Error::invalid(format!(
            "refusing to enumerate {k}! trees; k must be at most {MAX_ENUMERATE_K}"
        )));
    }
    let mut trees = vec![Vec::with_capacity(k)];
    for r in 1..=k {
        trees = trees
            .into_iter()
            .flat_map(|prefix| {
                (1..=r).map(move |p| {
                    let mut next = prefix.clone();
                    next.push(p);
                    next
                })
            })
            .collect();
    }
    Ok(trees)
}

/// Tail bound `C t exp(-k^{1/(C t)} / 4)` on the probability of a cluster of
/// size `k`, asserted only for `k > k0`.
pub fn theorem_tail_bound(k: u64, params: &TheoryParams) -> Result<f64> {
    params.validate()?;
    if k <= params.k0 {
        return Err(Error::invalid(format!(
            "the tail bound is only asserted for k > {}, got {k}",
            params.k0
        )));
    }
    let ct = params.c * params.t;
    Ok(ct * (-(k as f64).powf(1.0 / ct) / 4.0).exp())
}

/// The short-time estimate `(C t)^k`.
pub fn rough_bound(k: u64, c: f64, t: f64) -> f64 {
    (c * t).powf(k as f64)
}
