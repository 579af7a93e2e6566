//! Rank-based estimators of extremal dependence.
//!
//! All estimators act on the pseudo-uniforms `u = rank / (n + 1)`, so they
//! are invariant under strictly increasing transforms of each margin. With
//! this convention the event `u > 1 − k/n` selects exactly the `k` largest
//! observations of a column, and that top-`k` set is what the code counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::VariogramMatrix;
use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::tree::NodeId;

/// Column ranks `1..=n` of a data matrix; ties are broken by row index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    n: usize,
    d: usize,
    /// column-major
    ranks: Vec<u32>,
}

impl RankMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn rank(&self, t: usize, i: usize) -> u32 {
        self.ranks[i * self.n + t]
    }

    pub fn column_ranks(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.n..(i + 1) * self.n]
    }

    /// Pseudo-uniform `rank / (n + 1)`.
    #[inline]
    pub fn u(&self, t: usize, i: usize) -> f64 {
        self.rank(t, i) as f64 / (self.n + 1) as f64
    }

    /// Smallest rank inside the top-`k` set of a column.
    #[inline]
    fn top_k_cut(&self, k: usize) -> u32 {
        (self.n + 1 - k) as u32
    }
}

/// Pseudo-uniform transform of every column.
pub fn rank_transform(data: &DataMatrix) -> RankMatrix {
    let (n, d) = (data.n(), data.d());
    let mut ranks = vec![0u32; n * d];
    ranks.par_chunks_mut(n).enumerate().for_each(|(i, col)| {
        let values: Vec<f64> = data.column(i).collect();
        let mut order: Vec<usize> = (0..n).collect();
        // stable: equal values keep ascending row order
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        for (pos, &t) in order.iter().enumerate() {
            col[t] = pos as u32 + 1;
        }
    });
    RankMatrix { n, d, ranks }
}

/// `max(2, ⌊n^0.8⌋)`, capped at `n`; computed exactly in integers.
pub fn default_k(n: usize) -> usize {
    let target = (n as u128).pow(4);
    let mut k = (n as f64).powf(0.8).floor() as u128;
    while (k + 1).pow(5) <= target {
        k += 1;
    }
    while k > 0 && k.pow(5) > target {
        k -= 1;
    }
    (k as usize).max(2).min(n)
}

/// `k = round(q · n)` clamped to `[2, n]`; the flag reports clamping.
pub fn k_from_fraction(q: f64, n: usize) -> (usize, bool) {
    let raw = (q * n as f64).round();
    let k = if raw.is_nan() { 2.0 } else { raw.clamp(2.0, n as f64) } as usize;
    let clamped = raw != k as f64;
    if clamped {
        log::warn!("k = round({q} * {n}) = {raw} clamped to {k}");
    }
    (k, clamped)
}

fn check_node(node: NodeId, d: usize) -> Result<()> {
    if node >= d {
        Err(Error::NodeOutOfRange { node, d })
    } else {
        Ok(())
    }
}

/// Empirical extremal correlation: the fraction of the `k` largest rows of
/// column `i` that are also among the `k` largest of column `j`.
pub fn chi_hat(ranks: &RankMatrix, i: NodeId, j: NodeId, k: usize) -> Result<f64> {
    check_node(i, ranks.d)?;
    check_node(j, ranks.d)?;
    if k < 1 || k > ranks.n {
        return Err(Error::KOutOfRange { k, min: 1, n: ranks.n });
    }
    if i == j {
        return Err(Error::InvalidParameter("chi_hat needs i != j".into()));
    }
    let cut = ranks.top_k_cut(k);
    let count = ranks
        .column_ranks(i)
        .iter()
        .zip(ranks.column_ranks(j))
        .filter(|(&a, &b)| a >= cut && b >= cut)
        .count();
    Ok(count as f64 / k as f64)
}

/// All pairwise `χ̂` at one `k`; unit diagonal.
pub fn chi_hat_matrix(ranks: &RankMatrix, k: usize) -> Result<Vec<Vec<f64>>> {
    let d = ranks.d;
    let mut chi = vec![vec![1.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let c = chi_hat(ranks, i, j, k)?;
            chi[i][j] = c;
            chi[j][i] = c;
        }
    }
    Ok(chi)
}

/// `(q, χ̂(q))` over a grid of tail fractions, `k = round(q·n)` clamped to `[2, n]`.
pub fn chi_curve(ranks: &RankMatrix, i: NodeId, j: NodeId, q_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    q_grid
        .iter()
        .map(|&q| {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidParameter(format!("tail fraction {q} outside (0, 1)")));
            }
            let (k, _) = k_from_fraction(q, ranks.n);
            Ok((q, chi_hat(ranks, i, j, k)?))
        })
        .collect()
}

/// Which rooted variograms went into an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EstimateRoot {
    Node(NodeId),
    Combined(CombinedTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CombinedTag {
    #[serde(rename = "combined")]
    Combined,
}

impl EstimateRoot {
    pub const COMBINED: EstimateRoot = EstimateRoot::Combined(CombinedTag::Combined);
}

/// Empirical extremal variogram, single-root or combined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramEstimate {
    pub d: usize,
    pub root: EstimateRoot,
    pub g: Vec<Vec<f64>>,
    pub k: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl VariogramEstimate {
    #[inline]
    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.g[i][j]
    }

    pub fn to_variogram(&self) -> VariogramMatrix {
        let root = match self.root {
            EstimateRoot::Node(m) => Some(m),
            EstimateRoot::Combined(_) => None,
        };
        VariogramMatrix { d: self.d, root, g: self.g.clone() }
    }
}

fn check_k_for_variogram(k: usize, n: usize) -> Result<()> {
    if k < 2 || k > n {
        Err(Error::KOutOfRange { k, min: 2, n })
    } else {
        Ok(())
    }
}

/// `Γ̂⁽ᵐ⁾`: sample variances (denominator `k`) of
/// `log(1 − u_i) − log(1 − u_j)` over the `k` rows with the largest values
/// in column `m`.
pub fn gamma_hat_rooted(ranks: &RankMatrix, m: NodeId, k: usize) -> Result<VariogramEstimate> {
    check_node(m, ranks.d)?;
    check_k_for_variogram(k, ranks.n)?;
    let (n, d) = (ranks.n, ranks.d);
    let cut = ranks.top_k_cut(k);
    let rows: Vec<usize> = ranks.column_ranks(m).iter().enumerate().filter(|(_, &r)| r >= cut).map(|(t, _)| t).collect();
    debug_assert_eq!(rows.len(), k);
    let scale = (n + 1) as f64;
    // centered log-survival values, column-major over the selected rows
    let centered: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let col = ranks.column_ranks(i);
            let logs: Vec<f64> = rows.iter().map(|&t| ((n as f64 + 1.0 - col[t] as f64) / scale).ln()).collect();
            let mean = logs.iter().sum::<f64>() / k as f64;
            logs.into_iter().map(|x| x - mean).collect()
        })
        .collect();
    let mut g = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i + 1..d {
            let s: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = s / k as f64;
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    Ok(VariogramEstimate { d, root: EstimateRoot::Node(m), g, k, n, weights: None })
}

/// `Σ_m w_m Γ̂⁽ᵐ⁾`, summed in increasing `m`.
pub fn gamma_hat_combined(ranks: &RankMatrix, k: usize, weights: &[f64]) -> Result<VariogramEstimate> {
    let d = ranks.d;
    if weights.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: weights.len() });
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    check_k_for_variogram(k, ranks.n)?;
    let rooted: Vec<Option<VariogramEstimate>> = (0..d)
        .into_par_iter()
        .map(|m| (weights[m] > 0.0).then(|| gamma_hat_rooted(ranks, m, k)).transpose())
        .collect::<Result<_>>()?;
    let mut g = vec![vec![0.0; d]; d];
    for (m, est) in rooted.iter().enumerate() {
        if let Some(est) = est {
            for i in 0..d {
                for j in 0..d {
                    g[i][j] += weights[m] * est.g[i][j];
                }
            }
        }
    }
    Ok(VariogramEstimate { d, root: EstimateRoot::COMBINED, g, k, n: ranks.n, weights: Some(weights.to_vec()) })
}

/// Combined estimate with uniform weights `1/d`.
pub fn gamma_hat_uniform(ranks: &RankMatrix, k: usize) -> Result<VariogramEstimate> {
    let w = vec![1.0 / ranks.d as f64; ranks.d];
    gamma_hat_combined(ranks, k, &w)
}
