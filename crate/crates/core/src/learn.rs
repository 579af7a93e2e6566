//! Minimum spanning trees over dependence distances and the plug-in tree
//! learners built on them.
//!
//! Edges are compared by `(weight, min endpoint, max endpoint)`, a strict
//! total order, so the minimum spanning tree is unique under it and Prim's
//! algorithm and exhaustive enumeration agree on ties.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::closed_form::{hr_chi_matrix, path_sum_matrix, VariogramMatrix};
use crate::error::{Error, Result};
use crate::estimators::{chi_hat_matrix, gamma_hat_combined, gamma_hat_rooted, gamma_hat_uniform, RankMatrix};
use crate::model::WeightMatrix;
use crate::tree::{all_labeled_trees, edge_key, LabeledTree, NodeId};

/// Largest dimension accepted by [`mst_bruteforce`].
pub const BRUTEFORCE_MAX_D: usize = 8;

type EdgeRank = (f64, (NodeId, NodeId));

fn cmp_edge(a: &EdgeRank, b: &EdgeRank) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Prim's algorithm from node 0 under the `(weight, edge)` order.
pub fn mst(weights: &WeightMatrix) -> Result<LabeledTree> {
    let d = weights.d();
    if d == 0 {
        return Err(Error::InvalidDimension(0));
    }
    let mut in_tree = vec![false; d];
    in_tree[0] = true;
    let mut best: Vec<EdgeRank> = (0..d).map(|v| (weights.get(0, v), edge_key(0, v))).collect();
    let mut edges = Vec::with_capacity(d - 1);
    for _ in 1..d {
        let v = (0..d)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| cmp_edge(&best[a], &best[b]))
            .expect("nodes remain outside the tree");
        if best[v].0 == f64::INFINITY {
            return Err(Error::NoFiniteTree);
        }
        in_tree[v] = true;
        edges.push(best[v].1);
        for u in 0..d {
            if !in_tree[u] {
                let cand = (weights.get(v, u), edge_key(v, u));
                if cmp_edge(&cand, &best[u]) == Ordering::Less {
                    best[u] = cand;
                }
            }
        }
    }
    LabeledTree::new(d, &edges)
}

/// Exhaustive search over all labeled trees (`d ≤ 8`).
///
/// Minimizes the total weight, summed in ascending order so that trees with
/// the same multiset of weights tie exactly; ties go to the tree whose edge
/// list, sorted by `(weight, edge)`, is lexicographically smallest.
pub fn mst_bruteforce(weights: &WeightMatrix) -> Result<LabeledTree> {
    let d = weights.d();
    if d > BRUTEFORCE_MAX_D {
        return Err(Error::DimensionTooLarge { d, max: BRUTEFORCE_MAX_D });
    }
    if d < 2 {
        return mst(weights);
    }
    let mut best: Option<(f64, Vec<EdgeRank>, LabeledTree)> = None;
    for tree in all_labeled_trees(d)? {
        let mut ranked: Vec<EdgeRank> = tree.edges().iter().map(|&(u, v)| (weights.get(u, v), (u, v))).collect();
        ranked.sort_by(cmp_edge);
        let total: f64 = ranked.iter().map(|e| e.0).sum();
        let better = match &best {
            None => true,
            Some((bt, br, _)) => match total.total_cmp(bt) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => {
                    ranked.iter().zip(br).map(|(a, b)| cmp_edge(a, b)).find(|o| *o != Ordering::Equal)
                        == Some(Ordering::Less)
                }
            },
        };
        if better {
            best = Some((total, ranked, tree));
        }
    }
    let (total, _, tree) = best.expect("at least one tree");
    if total == f64::INFINITY {
        return Err(Error::NoFiniteTree);
    }
    Ok(tree)
}

/// `−log χ`, with `χ = 0 ↦ +∞` and `χ ≥ 1 ↦ 0`.
pub fn chi_distance(chi: f64) -> f64 {
    if chi <= 0.0 {
        f64::INFINITY
    } else if chi >= 1.0 {
        0.0
    } else {
        -chi.ln()
    }
}

/// Which variogram estimate feeds the spanning tree.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaMethod {
    Rooted(NodeId),
    /// Uniform weights `1/d`.
    Combined,
    Weighted(Vec<f64>),
}

/// Structure learner selection.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnMethod {
    Chi,
    Gamma(GammaMethod),
}

impl LearnMethod {
    pub fn label(&self) -> String {
        match self {
            LearnMethod::Chi => "chi".into(),
            LearnMethod::Gamma(GammaMethod::Rooted(m)) => format!("gamma-root={m}"),
            LearnMethod::Gamma(GammaMethod::Combined) => "gamma".into(),
            LearnMethod::Gamma(GammaMethod::Weighted(_)) => "gamma-weighted".into(),
        }
    }
}

/// Distances `−log χ̂_ij` at `k`.
pub fn chi_weights(ranks: &RankMatrix, k: usize) -> Result<WeightMatrix> {
    let chi = chi_hat_matrix(ranks, k)?;
    WeightMatrix::from_fn(ranks.d(), |i, j| chi_distance(chi[i][j]))
}

/// Minimum spanning tree over `−log χ̂`.
pub fn learn_tree_chi(ranks: &RankMatrix, k: usize) -> Result<LabeledTree> {
    mst(&chi_weights(ranks, k)?)
}

/// Variogram estimate selected by `method`.
pub fn gamma_estimate(ranks: &RankMatrix, method: &GammaMethod, k: usize) -> Result<Vec<Vec<f64>>> {
    let est = match method {
        GammaMethod::Rooted(m) => gamma_hat_rooted(ranks, *m, k)?,
        GammaMethod::Combined => gamma_hat_uniform(ranks, k)?,
        GammaMethod::Weighted(w) => gamma_hat_combined(ranks, k, w)?,
    };
    Ok(est.g)
}

/// Minimum spanning tree over an empirical extremal variogram.
pub fn learn_tree_gamma(ranks: &RankMatrix, method: &GammaMethod, k: usize) -> Result<LabeledTree> {
    mst(&WeightMatrix::new(gamma_estimate(ranks, method, k)?)?)
}

pub fn learn_tree(ranks: &RankMatrix, method: &LearnMethod, k: usize) -> Result<LabeledTree> {
    match method {
        LearnMethod::Chi => learn_tree_chi(ranks, k),
        LearnMethod::Gamma(g) => learn_tree_gamma(ranks, g, k),
    }
}

/// Serde adapter for edge-keyed maps written as `{"u-v": value}`.
pub mod edge_map {
    use super::*;

    pub fn serialize<S: Serializer>(map: &BTreeMap<(NodeId, NodeId), f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let m: BTreeMap<String, f64> = map.iter().map(|(&(u, v), &x)| (format!("{u}-{v}"), x)).collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<BTreeMap<(NodeId, NodeId), f64>, D::Error> {
        let m = BTreeMap::<String, f64>::deserialize(de)?;
        m.into_iter()
            .map(|(key, x)| {
                let parsed = key
                    .split_once('-')
                    .and_then(|(a, b)| Some((a.parse::<NodeId>().ok()?, b.parse::<NodeId>().ok()?)));
                parsed
                    .map(|(u, v)| (edge_key(u, v), x))
                    .ok_or_else(|| serde::de::Error::custom(format!("bad edge key {key:?}")))
            })
            .collect()
    }
}

/// Hüsler–Reiss tree fitted from data: per-edge variograms, their
/// path-sum completion and the implied extremal correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedHrTree {
    pub tree: LabeledTree,
    #[serde(with = "edge_map")]
    pub edge_gamma: BTreeMap<(NodeId, NodeId), f64>,
    pub full_gamma: VariogramMatrix,
    pub implied_chi: Vec<Vec<f64>>,
    pub k: usize,
    pub n: usize,
}

/// Completes edge variograms on a tree to the full additive matrix.
pub fn complete_tree_variogram(tree: &LabeledTree, edge_gamma: &BTreeMap<(NodeId, NodeId), f64>) -> Result<VariogramMatrix> {
    for &(u, v) in tree.edges() {
        if !edge_gamma.contains_key(&(u, v)) {
            return Err(Error::MissingEdge(u, v));
        }
    }
    let g = path_sum_matrix(tree, |a, b| edge_gamma[&edge_key(a, b)]);
    Ok(VariogramMatrix { d: tree.d(), root: None, g })
}

/// Learns the tree with the combined variogram and fits Hüsler–Reiss edge parameters.
pub fn fit_hr_tree(ranks: &RankMatrix, k: usize) -> Result<FittedHrTree> {
    let gamma = gamma_hat_uniform(ranks, k)?;
    fit_hr_tree_from(&gamma.g, k, ranks.n())
}

/// Fit from an already computed variogram estimate.
pub fn fit_hr_tree_from(gamma: &[Vec<f64>], k: usize, n: usize) -> Result<FittedHrTree> {
    let tree = mst(&WeightMatrix::new(gamma.to_vec())?)?;
    let edge_gamma: BTreeMap<_, _> = tree.edges().iter().map(|&(u, v)| ((u, v), gamma[u][v])).collect();
    let full_gamma = complete_tree_variogram(&tree, &edge_gamma)?;
    let implied_chi = hr_chi_matrix(&full_gamma.g)?;
    Ok(FittedHrTree { tree, edge_gamma, full_gamma, implied_chi, k, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::is_conditionally_negative_definite;
    use crate::rng::RandomStream;
    use proptest::prelude::*;
    use rand::Rng;

    fn wm(d: usize, pairs: &[((usize, usize), f64)]) -> WeightMatrix {
        let mut w = vec![vec![0.0; d]; d];
        for &((i, j), x) in pairs {
            w[i][j] = x;
            w[j][i] = x;
        }
        WeightMatrix::new(w).unwrap()
    }

    fn random_weights(d: usize, rng: &mut impl Rng, integer: bool) -> WeightMatrix {
        WeightMatrix::from_fn(d, |_, _| if integer { rng.random_range(0..3) as f64 } else { rng.random::<f64>() }).unwrap()
    }

    #[test]
    fn three_node_example() {
        let w = wm(3, &[((0, 1), 1.0), ((0, 2), 2.0), ((1, 2), 3.0)]);
        let t = mst(&w).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(w.tree_weight(&t), 3.0);
        assert_eq!(mst_bruteforce(&w).unwrap(), t);
    }

    #[test]
    fn two_nodes_any_weight() {
        for x in [0.0, 1.5, 1e300] {
            let w = wm(2, &[((0, 1), x)]);
            assert_eq!(mst(&w).unwrap().edges(), &[(0, 1)]);
            assert_eq!(mst_bruteforce(&w).unwrap().edges(), &[(0, 1)]);
        }
    }

    #[test]
    fn equal_weights_give_star_at_zero() {
        for d in 2..=6 {
            let w = WeightMatrix::from_fn(d, |_, _| 1.0).unwrap();
            let t = mst(&w).unwrap();
            assert!(t.edges().iter().all(|&(u, _)| u == 0));
            assert_eq!(mst_bruteforce(&w).unwrap(), t);
        }
    }

    #[test]
    fn infinite_weights() {
        let inf = f64::INFINITY;
        let w = wm(3, &[((0, 1), inf), ((0, 2), 1.0), ((1, 2), 2.0)]);
        assert_eq!(mst(&w).unwrap().edges(), &[(0, 2), (1, 2)]);
        let cut = wm(4, &[((0, 1), 1.0), ((2, 3), 1.0), ((0, 2), inf), ((0, 3), inf), ((1, 2), inf), ((1, 3), inf)]);
        assert_eq!(mst(&cut), Err(Error::NoFiniteTree));
        assert_eq!(mst_bruteforce(&cut), Err(Error::NoFiniteTree));
    }

    #[test]
    fn bruteforce_dimension_limit() {
        let w = WeightMatrix::from_fn(9, |_, _| 1.0).unwrap();
        assert!(matches!(mst_bruteforce(&w), Err(Error::DimensionTooLarge { d: 9, .. })));
    }

    #[test]
    fn prim_matches_bruteforce_d4() {
        let mut rng = RandomStream::from_seed(77).rng();
        for _ in 0..1000 {
            let w = random_weights(4, &mut rng, false);
            let (a, b) = (mst(&w).unwrap(), mst_bruteforce(&w).unwrap());
            assert_eq!(w.tree_weight(&a), w.tree_weight(&b));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn prim_matches_bruteforce_with_heavy_ties() {
        let mut rng = RandomStream::from_seed(78).rng();
        for d in 3..=6 {
            for _ in 0..300 {
                let w = random_weights(d, &mut rng, true);
                assert_eq!(mst(&w).unwrap(), mst_bruteforce(&w).unwrap());
            }
        }
    }

    #[test]
    fn chi_distance_edges() {
        assert_eq!(chi_distance(0.0), f64::INFINITY);
        assert_eq!(chi_distance(1.0).to_bits(), 0.0f64.to_bits());
        assert!((chi_distance(0.5) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn fitted_tree_json_and_invariants() {
        let g = vec![vec![0.0, 0.3, 0.9], vec![0.3, 0.0, 0.5], vec![0.9, 0.5, 0.0]];
        let fit = fit_hr_tree_from(&g, 10, 100).unwrap();
        assert_eq!(fit.tree.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(fit.full_gamma.get(0, 1), 0.3);
        assert_eq!(fit.full_gamma.get(0, 2), 0.8);
        assert!((0..3).all(|i| fit.implied_chi[i][i] == 1.0));
        assert!(is_conditionally_negative_definite(&fit.full_gamma.g, 1e-9).unwrap());
        let s = serde_json::to_string(&fit).unwrap();
        assert!(s.starts_with(r#"{"tree":{"d":3,"edges":[[0,1],[1,2]]},"edge_gamma":{"0-1":0.3,"1-2":0.5}"#));
        let back: FittedHrTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fit);
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }

    proptest! {
        #[test]
        fn oracle_equivalence(d in 3usize..=6, seed in any::<u64>()) {
            let mut rng = RandomStream::from_seed(seed).rng();
            let w = random_weights(d, &mut rng, false);
            let (a, b) = (mst(&w).unwrap(), mst_bruteforce(&w).unwrap());
            prop_assert_eq!(w.tree_weight(&a), w.tree_weight(&b));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn order_preserving_transform_keeps_mst(d in 3usize..=7, seed in any::<u64>()) {
            let mut rng = RandomStream::from_seed(seed).rng();
            let chi: Vec<Vec<f64>> = {
                let w = WeightMatrix::from_fn(d, |_, _| rng.random_range(0.01..0.99)).unwrap();
                w.rows().to_vec()
            };
            let log_w = WeightMatrix::from_fn(d, |i, j| chi_distance(chi[i][j])).unwrap();
            let lin_w = WeightMatrix::from_fn(d, |i, j| 1.0 - chi[i][j]).unwrap();
            prop_assert_eq!(mst(&log_w).unwrap(), mst(&lin_w).unwrap());
        }
    }
}
