//! Simulation-study harness: random tree models, noisy samples in the
//! domain of attraction, and recovery metrics for the tree learners.
//!
//! Every repetition draws from its own stream `(seed, repetition)`, and
//! bootstrap replicates from substreams of the caller's stream, so results do
//! not depend on the number of worker threads.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{default_k, k_from_fraction, rank_transform, RankMatrix};
use crate::learn::{learn_tree, GammaMethod, LearnMethod};
use crate::model::{DataMatrix, EdgeDistribution, ExtremalTreeModel};
use crate::rng::RandomStream;
use crate::sampling::{sample_domain_of_attraction, NoiseSpec};
use crate::tree::{random_tree, tree_equal, LabeledTree, TreeSampling};

/// Hüsler–Reiss edges with `γ ~ Uniform[0.2, 1]`.
pub fn gen_model_m1<R: Rng + ?Sized>(tree: &LabeledTree, rng: &mut R) -> Result<ExtremalTreeModel> {
    let edges = tree
        .edges()
        .iter()
        .map(|&e| Ok((e, EdgeDistribution::husler_reiss(rng.random_range(0.2..=1.0))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    ExtremalTreeModel::new(tree.clone(), edges)
}

/// Dirichlet edges with both shapes drawn from `Uniform[1, 10]`.
pub fn gen_model_m2<R: Rng + ?Sized>(tree: &LabeledTree, rng: &mut R) -> Result<ExtremalTreeModel> {
    let edges = tree
        .edges()
        .iter()
        .map(|&e| {
            let au = rng.random_range(1.0..=10.0);
            let av = rng.random_range(1.0..=10.0);
            Ok((e, EdgeDistribution::dirichlet(au, av)?))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    ExtremalTreeModel::new(tree.clone(), edges)
}

/// Hüsler–Reiss edges all with variogram `lambda`.
pub fn gen_model_hr_fixed(tree: &LabeledTree, lambda: f64) -> Result<ExtremalTreeModel> {
    ExtremalTreeModel::uniform(tree.clone(), EdgeDistribution::husler_reiss(lambda)?)
}

/// Fraction of true edges missing from the estimate.
pub fn edge_error(true_tree: &LabeledTree, est_tree: &LabeledTree) -> Result<f64> {
    if true_tree.d() != est_tree.d() {
        return Err(Error::DimensionMismatch { expected: true_tree.d(), got: est_tree.d() });
    }
    if true_tree.d() < 2 {
        return Ok(0.0);
    }
    Ok(1.0 - true_tree.shared_edges(est_tree) as f64 / (true_tree.d() - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KRule {
    Fixed { k: usize },
    /// `⌊n^0.8⌋`
    Power08,
    /// `k = round(q·n)` for each tail fraction `q`.
    QGrid { q: Vec<f64> },
}

impl KRule {
    /// `(k, q)` pairs for a sample of size `n`.
    pub fn levels(&self, n: usize) -> Vec<(usize, f64)> {
        match self {
            KRule::Fixed { k } => vec![(*k, *k as f64 / n as f64)],
            KRule::Power08 => {
                let k = default_k(n);
                vec![(k, k as f64 / n as f64)]
            }
            KRule::QGrid { q } => q.iter().map(|&q| (k_from_fraction(q, n).0, q)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    M1,
    M2,
    M1Fixed { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    N1,
    /// Noise from an independent random tree with Hüsler–Reiss edges, `γ ~ Uniform[0.2, 1]`.
    N2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMethod {
    Chi,
    GammaRoot,
    GammaCombined,
}

impl ExperimentMethod {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentMethod::Chi => "chi",
            ExperimentMethod::GammaRoot => "gamma-root",
            ExperimentMethod::GammaCombined => "gamma-combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n_list: Vec<usize>,
    pub k_rule: KRule,
    pub model_family: ModelFamily,
    pub noise: NoiseKind,
    pub methods: Vec<ExperimentMethod>,
    pub repetitions: usize,
    pub seed: u64,
    /// Root used by `gamma-root`.
    #[serde(default)]
    pub root: usize,
    /// Weights for `gamma-combined`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub tree_sampling: TreeSampling,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.d < 2 {
            return Err(Error::InvalidDimension(self.d));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.n_list.is_empty() || self.n_list.iter().any(|&n| n < 2) {
            return bad("n_list must be nonempty with every n >= 2".into());
        }
        if self.root >= self.d {
            return Err(Error::NodeOutOfRange { node: self.root, d: self.d });
        }
        if let Some(w) = &self.weights {
            if w.len() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, got: w.len() });
            }
        }
        match &self.k_rule {
            KRule::Fixed { k } => {
                let n_min = *self.n_list.iter().min().unwrap();
                if *k < 2 || *k > n_min {
                    return Err(Error::KOutOfRange { k: *k, min: 2, n: n_min });
                }
            }
            KRule::QGrid { q } => {
                if q.is_empty() || q.iter().any(|&q| !(q > 0.0 && q <= 1.0)) {
                    return bad("q grid must be nonempty with values in (0, 1]".into());
                }
            }
            KRule::Power08 => {}
        }
        if let ModelFamily::M1Fixed { lambda } = self.model_family {
            EdgeDistribution::husler_reiss(lambda)?;
        }
        Ok(())
    }

    fn learn_method(&self, m: ExperimentMethod) -> LearnMethod {
        match m {
            ExperimentMethod::Chi => LearnMethod::Chi,
            ExperimentMethod::GammaRoot => LearnMethod::Gamma(GammaMethod::Rooted(self.root)),
            ExperimentMethod::GammaCombined => match &self.weights {
                Some(w) => LearnMethod::Gamma(GammaMethod::Weighted(w.clone())),
                None => LearnMethod::Gamma(GammaMethod::Combined),
            },
        }
    }

    /// Cells `(method, n, k, q)` in output order.
    fn cells(&self) -> Vec<(ExperimentMethod, usize, usize, f64)> {
        let mut out = Vec::new();
        for &n in &self.n_list {
            for (k, q) in self.k_rule.levels(n) {
                for &m in &self.methods {
                    out.push((m, n, k, q));
                }
            }
        }
        out
    }
}

/// Aggregated metrics for one `(method, n, k)` cell. Standard errors are
/// `sd/√reps` with the population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub method: ExperimentMethod,
    pub n: usize,
    pub k: usize,
    pub q: f64,
    pub err_mean: f64,
    pub err_se: f64,
    pub srr_mean: f64,
    pub srr_se: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<ExperimentCell>,
    /// Learner or simulation failures, each scored as a complete miss.
    pub failures: usize,
}

impl ExperimentResult {
    pub fn cell(&self, method: ExperimentMethod, n: usize) -> Option<&ExperimentCell> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }

    /// CSV with columns `method,n,k,q,err_mean,err_se,srr_mean,srr_se,reps`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(c).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// One repetition's `(edge error, non-recovery)` per cell and its failure count.
fn run_repetition(config: &ExperimentConfig, rep: u64, cells: &[(ExperimentMethod, usize, usize, f64)]) -> (Vec<(f64, f64)>, usize) {
    let stream = RandomStream::new(config.seed, rep);
    let miss = || (1.0, 1.0);
    let setup = (|| -> Result<(LabeledTree, DataMatrix)> {
        let d = config.d;
        let mut rng = stream.substream(0).rng();
        let tree = random_tree(d, config.tree_sampling, &mut rng)?;
        let model = match config.model_family {
            ModelFamily::M1 => gen_model_m1(&tree, &mut rng)?,
            ModelFamily::M2 => gen_model_m2(&tree, &mut rng)?,
            ModelFamily::M1Fixed { lambda } => gen_model_hr_fixed(&tree, lambda)?,
        };
        let noise = match config.noise {
            NoiseKind::N1 => NoiseSpec::N1,
            NoiseKind::N2 => {
                let mut rng = stream.substream(1).rng();
                let noise_tree = random_tree(d, config.tree_sampling, &mut rng)?;
                NoiseSpec::N2 { noise_model: gen_model_m1(&noise_tree, &mut rng)? }
            }
        };
        // rows come from per-row substreams, so prefixes of the largest
        // sample are exactly the smaller samples
        let n_max = *config.n_list.iter().max().unwrap();
        let data = sample_domain_of_attraction(&model, &noise, n_max, stream.substream(2))?;
        Ok((tree, data))
    })();
    let (tree, data) = match setup {
        Ok(x) => x,
        Err(e) => {
            log::warn!("repetition {rep}: simulation failed: {e}");
            return (vec![miss(); cells.len()], cells.len());
        }
    };
    let mut ranks: BTreeMap<usize, RankMatrix> = BTreeMap::new();
    let mut failures = 0;
    let scores = cells
        .iter()
        .map(|&(method, n, k, _)| {
            let r = ranks.entry(n).or_insert_with(|| {
                let rows: Vec<usize> = (0..n).collect();
                rank_transform(&data.select_rows(&rows).expect("prefix of valid data"))
            });
            let scored = learn_tree(r, &config.learn_method(method), k).and_then(|est| {
                let err = edge_error(&tree, &est)?;
                let equal = tree_equal(&tree, &est)?;
                Ok((err, if equal { 0.0 } else { 1.0 }))
            });
            scored.unwrap_or_else(|e| {
                log::warn!("repetition {rep}, {} at n={n}, k={k}: {e}", method.label());
                failures += 1;
                miss()
            })
        })
        .collect();
    (scores, failures)
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone, reps: usize) -> (f64, f64) {
    let r = reps as f64;
    let mean = xs.clone().sum::<f64>() / r;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / r;
    (mean, (var / r).sqrt())
}

/// Runs all repetitions (in parallel) and aggregates per cell in repetition order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let cells = config.cells();
    let per_rep: Vec<(Vec<(f64, f64)>, usize)> = (0..config.repetitions as u64)
        .into_par_iter()
        .map(|rep| run_repetition(config, rep, &cells))
        .collect();
    let reps = config.repetitions;
    let out = cells
        .iter()
        .enumerate()
        .map(|(c, &(method, n, k, q))| {
            let (err_mean, err_se) = mean_se(per_rep.iter().map(|r| r.0[c].0), reps);
            let (srr_mean, srr_se) = mean_se(per_rep.iter().map(|r| r.0[c].1), reps);
            ExperimentCell { method, n, k, q, err_mean, err_se, srr_mean, srr_se, reps }
        })
        .collect();
    Ok(ExperimentResult { cells: out, failures: per_rep.iter().map(|r| r.1).sum() })
}

/// Edge selection frequencies over bootstrap refits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFrequencies {
    pub replicates: usize,
    pub k: usize,
    /// `counts[i][j]`: number of refits containing edge `{i, j}`.
    pub counts: Vec<Vec<usize>>,
    pub frequencies: Vec<Vec<f64>>,
}

/// Resamples rows with replacement `b` times and refits the tree on each
/// resample; replicate `r` draws from `stream.substream(r)`.
pub fn bootstrap_stability(data: &DataMatrix, k: usize, b: usize, method: &LearnMethod, stream: RandomStream) -> Result<EdgeFrequencies> {
    if b == 0 {
        return Err(Error::InvalidParameter("bootstrap needs at least one replicate".into()));
    }
    let (n, d) = (data.n(), data.d());
    if k < 2 || k > n {
        return Err(Error::KOutOfRange { k, min: 2, n });
    }
    let trees: Vec<LabeledTree> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.substream(r).rng();
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            learn_tree(&rank_transform(&data.select_rows(&rows)?), method, k)
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![vec![0usize; d]; d];
    for t in &trees {
        for &(u, v) in t.edges() {
            counts[u][v] += 1;
            counts[v][u] += 1;
        }
    }
    let frequencies = counts.iter().map(|row| row.iter().map(|&c| c as f64 / b as f64).collect()).collect();
    Ok(EdgeFrequencies { replicates: b, k, counts, frequencies })
}
