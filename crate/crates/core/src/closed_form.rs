//! Population-level quantities of extremal tree models.
//!
//! On a tree the extremal variogram rooted at `m` is an additive tree
//! metric: `Γ⁽ᵐ⁾_ij` is the sum, over the edges on the path between `i` and
//! `j`, of `Var(log W_e)` with each edge oriented away from `m`. For
//! Hüsler–Reiss and logistic edges the orientation does not matter; for
//! Dirichlet edges the conditioning endpoint contributes `ψ⁽¹⁾(α + 1)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Direction, EdgeDistribution, ExtremalTreeModel};
use crate::rng::RandomStream;
use crate::sampling::{EdgeSampler, ModelSampler};
use crate::special::{normal_sf, trigamma};
use crate::tree::{LabeledTree, NodeId};

/// Symmetric `d × d` variogram, optionally tagged with its root.
///
/// `root` is `None` for root-free matrices (Hüsler–Reiss models, fitted
/// trees, combined estimates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramMatrix {
    pub d: usize,
    pub root: Option<NodeId>,
    pub g: Vec<Vec<f64>>,
}

impl VariogramMatrix {
    #[inline]
    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.g[i][j]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `Var(log W_e)` for edge `e` traversed in direction `dir`.
pub fn edge_variogram(edge: &EdgeDistribution, dir: Direction) -> Result<f64> {
    edge.validate()?;
    Ok(match *edge {
        EdgeDistribution::HuslerReiss { gamma } => gamma,
        EdgeDistribution::Logistic { theta } => theta * theta * (trigamma(1.0 - theta)? + PI * PI / 6.0),
        EdgeDistribution::Dirichlet { alpha_u, alpha_v } => {
            let (a_cond, a_child) = EdgeDistribution::dirichlet_shapes(alpha_u, alpha_v, dir);
            trigamma(a_cond + 1.0)? + trigamma(a_child)?
        }
    })
}

/// The extremal variogram `Γ⁽ᵐ⁾` of a tree model.
///
/// Each entry is summed along the path from the smaller to the larger index,
/// so for orientation-free edge families every root yields the bitwise
/// identical matrix.
pub fn model_variogram(model: &ExtremalTreeModel, m: NodeId) -> Result<VariogramMatrix> {
    let d = model.d();
    if m >= d {
        return Err(Error::NodeOutOfRange { node: m, d });
    }
    let rooted = model.tree().rooted(m);
    // oriented contribution of the edge entering each node from its m-side parent
    let mut incoming = vec![0.0; d];
    for &v in rooted.order.iter().skip(1) {
        let p = rooted.parent[v].expect("non-root");
        let (edge, dir) = model.oriented(p, v)?;
        incoming[v] = edge_variogram(&edge, dir)?;
    }
    let edge_value = |a: NodeId, b: NodeId| {
        if rooted.parent[b] == Some(a) {
            incoming[b]
        } else {
            incoming[a]
        }
    };
    let g = path_sum_matrix(model.tree(), edge_value);
    let root = if model.is_all_husler_reiss() { None } else { Some(m) };
    Ok(VariogramMatrix { d, root, g })
}

/// Tree metric with per-edge lengths `edge_len(a, b)` (called with `a`, `b`
/// adjacent). Entry `(i, j)`, `i < j`, is accumulated along the path from `i`
/// to `j`; the matrix is mirrored to keep it exactly symmetric.
pub fn path_sum_matrix(tree: &LabeledTree, edge_len: impl Fn(NodeId, NodeId) -> f64) -> Vec<Vec<f64>> {
    let d = tree.d();
    let mut g = vec![vec![0.0; d]; d];
    for i in 0..d {
        let from_i = tree.rooted(i);
        let mut acc = vec![0.0; d];
        for &v in from_i.order.iter().skip(1) {
            let p = from_i.parent[v].expect("non-root");
            acc[v] = acc[p] + edge_len(p, v);
        }
        for j in i + 1..d {
            g[i][j] = acc[j];
            g[j][i] = acc[j];
        }
    }
    g
}

/// Extremal correlation of a bivariate Hüsler–Reiss pair with variogram `gamma`:
/// `2 − 2Φ(√γ / 2)`.
pub fn hr_chi_from_gamma(gamma: f64) -> Result<f64> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::NegativeGamma(gamma));
    }
    Ok(2.0 * normal_sf(gamma.sqrt() / 2.0))
}

/// Pairwise extremal correlations implied by a Hüsler–Reiss variogram; unit diagonal.
pub fn hr_chi_matrix(g: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    g.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &x)| if i == j { Ok(1.0) } else { hr_chi_from_gamma(x) })
                .collect()
        })
        .collect()
}

/// `Σ⁽ᵐ⁾_ij = ½(Γ_im + Γ_jm − Γ_ij)` over `i, j ≠ m`, as a `(d−1) × (d−1)` matrix.
pub fn sigma_from_gamma(g: &VariogramMatrix, m: NodeId) -> Result<Vec<Vec<f64>>> {
    if m >= g.d {
        return Err(Error::NodeOutOfRange { node: m, d: g.d });
    }
    let idx: Vec<NodeId> = (0..g.d).filter(|&i| i != m).collect();
    Ok(idx
        .iter()
        .map(|&i| idx.iter().map(|&j| 0.5 * (g.g[i][m] + g.g[j][m] - g.g[i][j])).collect())
        .collect())
}

fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let d = m.len();
    DMatrix::from_fn(d, d, |i, j| m[i][j])
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(to_dmatrix(m)).eigenvalues.min()
}

/// Smallest eigenvalue of `−½ P M P` with `P = I − 𝟙𝟙ᵀ/d`.
pub fn cnd_min_eigenvalue(m: &[Vec<f64>]) -> Result<f64> {
    let d = m.len();
    for (i, row) in m.iter().enumerate() {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        for j in 0..i {
            let (a, b) = (m[i][j], m[j][i]);
            if a.is_nan() || (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::NotSymmetric(j, i));
            }
        }
    }
    if d == 0 {
        return Ok(0.0);
    }
    let p = DMatrix::<f64>::identity(d, d) - DMatrix::from_element(d, d, 1.0 / d as f64);
    let mut c = -0.5 * (&p * to_dmatrix(m) * &p);
    // symmetrize away rounding from the products
    c = 0.5 * (&c + c.transpose());
    Ok(SymmetricEigen::new(c).eigenvalues.min())
}

/// True iff `aᵀ M a ≤ 0` for all `a` summing to zero, up to `tol`.
pub fn is_conditionally_negative_definite(m: &[Vec<f64>], tol: f64) -> Result<bool> {
    Ok(cnd_min_eigenvalue(m)? >= -tol)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
}

/// Draws per parallel shard in the Monte-Carlo oracles.
const SHARD: usize = 1 << 16;

/// `χ_hl = E[min(Π_{e ∈ path(h→l)} W_e, 1)]` by Monte Carlo.
pub fn mc_chi(model: &ExtremalTreeModel, h: NodeId, l: NodeId, samples: usize, stream: RandomStream) -> Result<McEstimate> {
    let d = model.d();
    for node in [h, l] {
        if node >= d {
            return Err(Error::NodeOutOfRange { node, d });
        }
    }
    if h == l || samples == 0 {
        return Err(Error::InvalidParameter("mc_chi needs h != l and samples >= 1".into()));
    }
    let path: Vec<EdgeSampler> = model
        .tree()
        .path_edges(h, l)
        .into_iter()
        .map(|(a, b)| {
            let (e, dir) = model.oriented(a, b)?;
            EdgeSampler::new(&e, dir)
        })
        .collect::<Result<_>>()?;
    let shards = samples.div_ceil(SHARD);
    let sums: Vec<(f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream.substream(s as u64).rng();
            let count = SHARD.min(samples - s * SHARD);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let prod: f64 = path.iter().map(|e| e.sample(&mut rng)).product();
                let x = prod.min(1.0);
                s1 += x;
                s2 += x * x;
            }
            (s1, s2)
        })
        .collect();
    let n = samples as f64;
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(McEstimate { value: mean, se: (var / n).sqrt() })
}

/// Marginal law of the simulated coordinates fed to the pre-asymptotic oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginNoise {
    /// `X = Z`: standard Fréchet margins.
    None,
    /// `X = Z + ε` with independent noise `P(ε ≤ x) = exp(−1/x²)`.
    Independent,
}

/// Data generator with known marginal distribution functions.
#[derive(Debug, Clone)]
pub struct PreAsymptoticGenerator {
    sampler: ModelSampler,
    noise: MarginNoise,
    log_sf_table: OnceLock<Vec<f64>>,
}

// log-survival grid over ln x, used for bulk evaluation under noise
const TABLE_LO: f64 = -4.0;
const TABLE_HI: f64 = 18.0;
const TABLE_STEP: f64 = 0.005;

fn frechet_sf(z: f64) -> f64 {
    if z <= 0.0 {
        1.0
    } else {
        -(-1.0 / z).exp_m1()
    }
}

fn noise_density(e: f64) -> f64 {
    if e <= 0.0 {
        0.0
    } else {
        2.0 * e.powi(-3) * (-1.0 / (e * e)).exp()
    }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

impl PreAsymptoticGenerator {
    pub fn new(model: &ExtremalTreeModel, noise: MarginNoise) -> Result<Self> {
        Ok(Self { sampler: ModelSampler::new(model)?, noise, log_sf_table: OnceLock::new() })
    }

    pub fn d(&self) -> usize {
        self.sampler.d()
    }

    /// Marginal survival function `1 − F(x)` (identical for every coordinate).
    pub fn survival(&self, x: f64) -> f64 {
        match self.noise {
            MarginNoise::None => frechet_sf(x),
            MarginNoise::Independent => {
                if x <= 0.0 {
                    return 1.0;
                }
                // P(Z + ε > x) = P(ε > x) + ∫₀ˣ f_ε(e) P(Z > x − e) de
                let tail = -(-1.0 / (x * x)).exp_m1();
                let integrand = |e: f64| noise_density(e) * frechet_sf(x - e);
                // the density is negligible below 0.05; panels refine
                // geometrically towards both ends of [0.05, x]
                let lo = 0.05f64.min(x);
                let mut knots = vec![lo];
                let mut h = 0.1;
                while h < x / 2.0 {
                    knots.push(h.max(lo));
                    h *= 2.0;
                }
                let mut tail_knots = Vec::new();
                let mut h = 0.1;
                while x - h > x / 2.0 {
                    tail_knots.push(x - h);
                    h *= 2.0;
                }
                knots.extend(tail_knots.into_iter().rev());
                knots.push(x);
                knots.dedup_by(|a, b| *a <= *b);
                let tol = 1e-13 * frechet_sf(x);
                let body: f64 = knots.windows(2).map(|k| adaptive_simpson(&integrand, k[0], k[1], tol)).sum();
                tail + body
            }
        }
    }

    /// `ln(1 − F(x))`, interpolated from a lazily built table under noise.
    pub fn log_survival(&self, x: f64) -> f64 {
        if self.noise == MarginNoise::None || x <= 0.0 {
            return self.survival(x).ln();
        }
        let u = (x.ln() - TABLE_LO) / TABLE_STEP;
        let table = self.log_sf_table.get_or_init(|| {
            let len = ((TABLE_HI - TABLE_LO) / TABLE_STEP).round() as usize + 1;
            (0..len)
                .into_par_iter()
                .map(|i| self.survival((TABLE_LO + i as f64 * TABLE_STEP).exp()).ln())
                .collect()
        });
        let base = u.floor() as isize - 1;
        if base < 0 || base as usize + 3 >= table.len() {
            return self.survival(x).ln();
        }
        // cubic Lagrange through the four surrounding nodes
        let s = u - (base + 1) as f64;
        let y = &table[base as usize..base as usize + 4];
        -s * (s - 1.0) * (s - 2.0) / 6.0 * y[0] + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * y[1]
            - (s + 1.0) * s * (s - 2.0) / 2.0 * y[2]
            + (s + 1.0) * s * (s - 1.0) / 6.0 * y[3]
    }

    /// The level `t` with `1 − F(t) = q`.
    pub fn threshold(&self, q: f64) -> f64 {
        match self.noise {
            MarginNoise::None => -1.0 / (1.0 - q).ln(),
            MarginNoise::Independent => {
                let (mut lo, mut hi) = (1e-3, 1.0);
                while self.survival(hi) > q {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = (lo * hi).sqrt();
                    if self.survival(mid) > q {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi / lo - 1.0 < 1e-14 {
                        break;
                    }
                }
                (lo * hi).sqrt()
            }
        }
    }

    fn sample_row<R: rand::Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64], w: &mut [f64]) -> Result<()> {
        self.sampler.max_stable_into(rng, x, w)?;
        if self.noise == MarginNoise::Independent {
            for v in x.iter_mut() {
                *v += (-crate::rng::open_uniform(rng).ln()).powf(-0.5);
            }
        }
        Ok(())
    }

    /// Runs shards of raw draws until `wanted` rows pass `keep`, returning
    /// the mapped values of exactly the first `wanted` kept rows in shard order.
    fn collect_kept<T: Send>(
        &self,
        wanted: usize,
        stream: RandomStream,
        keep: impl Fn(&[f64]) -> Option<T> + Sync,
    ) -> Result<Vec<T>> {
        let d = self.d();
        let batch = rayon::current_num_threads().max(1) * 4;
        let mut out = Vec::with_capacity(wanted);
        let mut next_shard = 0u64;
        while out.len() < wanted {
            let results: Vec<Result<Vec<T>>> = (next_shard..next_shard + batch as u64)
                .into_par_iter()
                .map(|s| {
                    let mut rng = stream.substream(s).rng();
                    let (mut x, mut w) = (vec![0.0; d], vec![0.0; d]);
                    let mut kept = Vec::new();
                    for _ in 0..SHARD {
                        self.sample_row(&mut rng, &mut x, &mut w)?;
                        if let Some(v) = keep(&x) {
                            kept.push(v);
                        }
                    }
                    Ok(kept)
                })
                .collect();
            for r in results {
                out.extend(r?);
            }
            next_shard += batch as u64;
        }
        out.truncate(wanted);
        Ok(out)
    }
}

/// Pre-asymptotic extremal variogram
/// `Var[log(1−F_i(X_i)) − log(1−F_j(X_j)) | F_m(X_m) > 1 − q]` from
/// `kept` conditional draws.
pub fn mc_variogram_pre(
    generator: &PreAsymptoticGenerator,
    m: NodeId,
    i: NodeId,
    j: NodeId,
    q: f64,
    kept: usize,
    stream: RandomStream,
) -> Result<McEstimate> {
    let d = generator.d();
    for node in [m, i, j] {
        if node >= d {
            return Err(Error::NodeOutOfRange { node, d });
        }
    }
    if !(q > 0.0 && q < 1.0) || kept < 2 {
        return Err(Error::InvalidParameter(format!("need q in (0,1) and kept >= 2, got q={q}, kept={kept}")));
    }
    if i == j {
        return Ok(McEstimate { value: 0.0, se: 0.0 });
    }
    let t = generator.threshold(q);
    let raw = generator.collect_kept(kept, stream, |x| (x[m] > t).then(|| (x[i], x[j])))?;
    let diffs: Vec<f64> = raw
        .par_iter()
        .map(|&(xi, xj)| generator.log_survival(xi) - generator.log_survival(xj))
        .collect();
    Ok(variance_with_se(&diffs))
}

/// Pre-asymptotic extremal correlation `P(F_i > 1−q, F_j > 1−q) / q` from `samples` raw draws.
pub fn mc_chi_pre(
    generator: &PreAsymptoticGenerator,
    i: NodeId,
    j: NodeId,
    q: f64,
    samples: usize,
    stream: RandomStream,
) -> Result<McEstimate> {
    if !(q > 0.0 && q < 1.0) || samples == 0 {
        return Err(Error::InvalidParameter(format!("need q in (0,1), got {q}")));
    }
    let t = generator.threshold(q);
    let shards = samples.div_ceil(SHARD);
    let counts: Vec<Result<usize>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream.substream(s as u64).rng();
            let d = generator.d();
            let (mut x, mut w) = (vec![0.0; d], vec![0.0; d]);
            let mut c = 0;
            for _ in 0..SHARD.min(samples - s * SHARD) {
                generator.sample_row(&mut rng, &mut x, &mut w)?;
                if x[i] > t && x[j] > t {
                    c += 1;
                }
            }
            Ok(c)
        })
        .collect();
    let mut total = 0usize;
    for c in counts {
        total += c?;
    }
    let n = samples as f64;
    let p = total as f64 / n;
    Ok(McEstimate { value: p / q, se: (p * (1.0 - p) / n).sqrt() / q })
}

/// Sample variance (denominator N) and its delta-method standard error.
pub fn variance_with_se(xs: &[f64]) -> McEstimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let c = (x - mean) * (x - mean);
        m2 += c;
        m4 += c * c;
    }
    m2 /= n;
    m4 /= n;
    McEstimate { value: m2, se: ((m4 - m2 * m2).max(0.0) / n).sqrt() }
}
