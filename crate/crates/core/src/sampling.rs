//! Exact simulation of extremal tree models.
//!
//! Per-edge extremal functions `W_e` are multiplied along root-to-node paths
//! to give the rooted extremal function `W^m` (so `Y^m = P · W^m`). The
//! associated max-stable vector `Z` with standard Fréchet margins is drawn
//! exactly with the extremal-functions algorithm: for each coordinate `m`,
//! Poisson points `1/ζ` are paired with draws of `W^m` and a proposal is
//! kept only if it does not exceed the current maximum on the coordinates
//! already processed.
//!
//! Batch samplers derive one substream per row, so output does not depend
//! on the number of worker threads.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DataMatrix, Direction, EdgeDistribution, ExtremalTreeModel};
use crate::rng::{open_uniform, unit_exponential, RandomStream};
use crate::tree::NodeId;

/// Default cap on `W`-proposals per max-stable sample, per dimension.
pub const DEFAULT_PROPOSALS_PER_DIM: usize = 10_000;

/// Sampler for one oriented edge `parent → child`.
#[derive(Debug, Clone)]
pub enum EdgeSampler {
    HuslerReiss(Normal<f64>),
    /// `W = (G / E)^θ` with `G ~ Gamma(1−θ, 1)` and `E ~ Exp(1)`; this is the
    /// ratio of the Fréchet(1/θ, 1/Γ(1−θ)) child variable over the
    /// conditioning variable `G^{−θ}/Γ(1−θ)` after the scales cancel.
    Logistic { theta: f64, shape: Gamma<f64> },
    /// `W = U_child / U_parent`.
    Dirichlet { child: Gamma<f64>, parent: Gamma<f64> },
}

fn gamma(shape: f64, scale: f64) -> Result<Gamma<f64>> {
    Gamma::new(shape, scale).map_err(|e| Error::InvalidParameter(format!("gamma({shape}, {scale}): {e}")))
}

impl EdgeSampler {
    pub fn new(edge: &EdgeDistribution, dir: Direction) -> Result<Self> {
        edge.validate()?;
        Ok(match *edge {
            EdgeDistribution::HuslerReiss { gamma } => EdgeSampler::HuslerReiss(
                Normal::new(-gamma / 2.0, gamma.sqrt()).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            ),
            EdgeDistribution::Logistic { theta } => {
                EdgeSampler::Logistic { theta, shape: self::gamma(1.0 - theta, 1.0)? }
            }
            EdgeDistribution::Dirichlet { alpha_u, alpha_v } => {
                let (a_cond, a_child) = EdgeDistribution::dirichlet_shapes(alpha_u, alpha_v, dir);
                EdgeSampler::Dirichlet {
                    child: gamma(a_child, 1.0 / a_child)?,
                    parent: gamma(a_cond + 1.0, 1.0 / a_cond)?,
                }
            }
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EdgeSampler::HuslerReiss(normal) => normal.sample(rng).exp(),
            EdgeSampler::Logistic { theta, shape } => {
                let g = shape.sample(rng);
                let e = unit_exponential(rng);
                (g / e).powf(*theta)
            }
            EdgeSampler::Dirichlet { child, parent } => child.sample(rng) / parent.sample(rng),
        }
    }
}

/// One draw of `W_e` for `edge` traversed in direction `dir`.
pub fn sample_edge_w<R: Rng + ?Sized>(edge: &EdgeDistribution, dir: Direction, rng: &mut R) -> Result<f64> {
    Ok(EdgeSampler::new(edge, dir)?.sample(rng))
}

/// Samples `W^m` for a fixed root by a single pass in BFS order.
#[derive(Debug, Clone)]
pub struct RootedSampler {
    root: NodeId,
    /// Non-root nodes in BFS order, with their parent and incoming edge sampler.
    steps: Vec<(NodeId, NodeId, EdgeSampler)>,
}

impl RootedSampler {
    pub fn new(model: &ExtremalTreeModel, root: NodeId) -> Result<Self> {
        if root >= model.d() {
            return Err(Error::NodeOutOfRange { node: root, d: model.d() });
        }
        let rooted = model.tree().rooted(root);
        let mut steps = Vec::with_capacity(model.d() - 1);
        for &v in rooted.order.iter().skip(1) {
            let p = rooted.parent[v].expect("non-root node has a parent");
            let (edge, dir) = model.oriented(p, v)?;
            steps.push((v, p, EdgeSampler::new(&edge, dir)?));
        }
        Ok(Self { root, steps })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut [f64]) {
        w[self.root] = 1.0;
        for (v, p, edge) in &self.steps {
            w[*v] = w[*p] * edge.sample(rng);
        }
    }

    /// Like [`sample_into`](Self::sample_into) but also records the edge draw
    /// entering each node (`1.0` at the root).
    pub fn sample_traced<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut [f64], edge_draws: &mut [f64]) {
        w[self.root] = 1.0;
        edge_draws[self.root] = 1.0;
        for (v, p, edge) in &self.steps {
            let x = edge.sample(rng);
            edge_draws[*v] = x;
            w[*v] = w[*p] * x;
        }
    }
}

/// All rooted samplers of a model, plus the exact max-stable sampler.
#[derive(Debug, Clone)]
pub struct ModelSampler {
    rooted: Vec<RootedSampler>,
    proposal_cap: usize,
}

impl ModelSampler {
    pub fn new(model: &ExtremalTreeModel) -> Result<Self> {
        let rooted = (0..model.d()).map(|m| RootedSampler::new(model, m)).collect::<Result<_>>()?;
        Ok(Self { rooted, proposal_cap: DEFAULT_PROPOSALS_PER_DIM * model.d() })
    }

    pub fn with_proposal_cap(mut self, cap: usize) -> Self {
        self.proposal_cap = cap;
        self
    }

    pub fn d(&self) -> usize {
        self.rooted.len()
    }

    pub fn rooted(&self, m: NodeId) -> &RootedSampler {
        &self.rooted[m]
    }

    /// One exact draw of the max-stable vector into `z`; returns the number
    /// of `W`-proposals used.
    pub fn max_stable_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64], w: &mut [f64]) -> Result<usize> {
        let d = self.d();
        z.fill(0.0);
        let mut proposals = 0usize;
        for m in 0..d {
            let mut zeta = unit_exponential(rng);
            while 1.0 / zeta > z[m] {
                proposals += 1;
                if proposals > self.proposal_cap {
                    log::warn!("max-stable sampler hit the proposal cap {}", self.proposal_cap);
                    return Err(Error::ProposalCapExceeded { cap: self.proposal_cap });
                }
                self.rooted[m].sample_into(rng, w);
                if (0..m).all(|j| w[j] / zeta < z[j]) {
                    for (zj, &wj) in z.iter_mut().zip(w.iter()) {
                        let y = wj / zeta;
                        if y > *zj {
                            *zj = y;
                        }
                    }
                }
                zeta += unit_exponential(rng);
            }
        }
        Ok(proposals)
    }
}

/// Row-major `n × d` block of simulated values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl SampleMatrix {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(i).step_by(self.d).copied()
    }

    pub fn into_data(self) -> Result<DataMatrix> {
        DataMatrix::new(self.n, self.d, self.values)
    }
}

/// Fills `n` rows in parallel; row `t` uses `stream.substream(t)`.
fn fill_rows<F>(n: usize, d: usize, stream: RandomStream, f: F) -> Result<SampleMatrix>
where
    F: Fn(&mut crate::rng::StreamRng, &mut [f64]) -> Result<()> + Sync,
{
    let mut values = vec![0.0; n * d];
    if d > 0 {
        values
            .par_chunks_mut(d)
            .enumerate()
            .try_for_each(|(t, row)| f(&mut stream.substream(t as u64).rng(), row))?;
    }
    Ok(SampleMatrix { n, d, values })
}

/// One draw of `W^m`.
pub fn sample_w_vector<R: Rng + ?Sized>(model: &ExtremalTreeModel, m: NodeId, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = RootedSampler::new(model, m)?;
    let mut w = vec![0.0; model.d()];
    sampler.sample_into(rng, &mut w);
    Ok(w)
}

/// `n` draws of `Y^m = P · W^m` with `P` standard Pareto.
pub fn sample_y_rooted(model: &ExtremalTreeModel, m: NodeId, n: usize, stream: RandomStream) -> Result<SampleMatrix> {
    let sampler = RootedSampler::new(model, m)?;
    fill_rows(n, model.d(), stream, |rng, row| {
        sampler.sample_into(rng, row);
        let p = 1.0 / open_uniform(rng);
        row.iter_mut().for_each(|x| *x *= p);
        Ok(())
    })
}

/// `n` exact draws of the max-stable vector with standard Fréchet margins.
pub fn sample_max_stable(model: &ExtremalTreeModel, n: usize, stream: RandomStream) -> Result<SampleMatrix> {
    let sampler = ModelSampler::new(model)?;
    sample_max_stable_with(&sampler, n, stream)
}

pub fn sample_max_stable_with(sampler: &ModelSampler, n: usize, stream: RandomStream) -> Result<SampleMatrix> {
    let d = sampler.d();
    fill_rows(n, d, stream, |rng, row| {
        let mut w = vec![0.0; d];
        sampler.max_stable_into(rng, row, &mut w).map(|_| ())
    })
}

/// Noise mechanism added to the max-stable draws.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Independent entries with `P(ε ≤ x) = exp(−1/x²)`.
    N1,
    /// Same margins, dependence from an extremal tree model.
    N2 { noise_model: ExtremalTreeModel },
}

/// `n × d` noise draws with margins `exp(−1/x²)`.
pub fn sample_noise(spec: &NoiseSpec, n: usize, d: usize, stream: RandomStream) -> Result<SampleMatrix> {
    match spec {
        NoiseSpec::N1 => fill_rows(n, d, stream, |rng, row| {
            for x in row.iter_mut() {
                // square root of a standard Fréchet draw
                *x = (-open_uniform(rng).ln()).powf(-0.5);
            }
            Ok(())
        }),
        NoiseSpec::N2 { noise_model } => {
            if noise_model.d() != d {
                return Err(Error::DimensionMismatch { expected: d, got: noise_model.d() });
            }
            let mut z = sample_max_stable(noise_model, n, stream)?;
            z.values.iter_mut().for_each(|x| *x = x.sqrt());
            Ok(z)
        }
    }
}

/// Data in the domain of attraction: `X = Z + ε` rowwise, with `Z` and `ε`
/// drawn from independent substreams.
pub fn sample_domain_of_attraction(
    model: &ExtremalTreeModel,
    spec: &NoiseSpec,
    n: usize,
    stream: RandomStream,
) -> Result<DataMatrix> {
    let d = model.d();
    if let NoiseSpec::N2 { noise_model } = spec {
        if noise_model.d() != d {
            return Err(Error::DimensionMismatch { expected: d, got: noise_model.d() });
        }
    }
    let mut z = sample_max_stable(model, n, stream.substream(0))?;
    let eps = sample_noise(spec, n, d, stream.substream(1))?;
    for (x, e) in z.values.iter_mut().zip(&eps.values) {
        *x += e;
    }
    z.into_data()
}
