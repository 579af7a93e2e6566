//! Edge models, extremal tree models, weight and data matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{check_names, edge_key, LabeledTree, NodeId, TreeDocument};

/// Bivariate extremal-function family attached to one tree edge `{u, v}`, `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum EdgeDistribution {
    HuslerReiss { gamma: f64 },
    Logistic { theta: f64 },
    /// `alpha_u` belongs to the smaller endpoint of the edge.
    Dirichlet { alpha_u: f64, alpha_v: f64 },
}

/// Orientation of an edge `{u, v}` with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `u → v`: the smaller endpoint conditions.
    Forward,
    /// `v → u`.
    Reverse,
}

impl Direction {
    pub fn of(from: NodeId, to: NodeId) -> Self {
        if from < to {
            Direction::Forward
        } else {
            Direction::Reverse
        }
    }
}

impl EdgeDistribution {
    pub fn husler_reiss(gamma: f64) -> Result<Self> {
        let e = EdgeDistribution::HuslerReiss { gamma };
        e.validate()?;
        Ok(e)
    }

    pub fn logistic(theta: f64) -> Result<Self> {
        let e = EdgeDistribution::Logistic { theta };
        e.validate()?;
        Ok(e)
    }

    pub fn dirichlet(alpha_u: f64, alpha_v: f64) -> Result<Self> {
        let e = EdgeDistribution::Dirichlet { alpha_u, alpha_v };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            EdgeDistribution::HuslerReiss { gamma } => gamma > 0.0 && gamma.is_finite(),
            EdgeDistribution::Logistic { theta } => theta > 0.0 && theta < 1.0,
            EdgeDistribution::Dirichlet { alpha_u, alpha_v } => {
                alpha_u > 0.0 && alpha_u.is_finite() && alpha_v > 0.0 && alpha_v.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?}")))
        }
    }

    /// `(conditioning shape, conditioned shape)` for a Dirichlet edge traversed in `dir`.
    pub(crate) fn dirichlet_shapes(alpha_u: f64, alpha_v: f64, dir: Direction) -> (f64, f64) {
        match dir {
            Direction::Forward => (alpha_u, alpha_v),
            Direction::Reverse => (alpha_v, alpha_u),
        }
    }
}

/// A tree with one bivariate edge model per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalTreeModel {
    tree: LabeledTree,
    edge_models: BTreeMap<(NodeId, NodeId), EdgeDistribution>,
}

impl ExtremalTreeModel {
    pub fn new(tree: LabeledTree, edge_models: BTreeMap<(NodeId, NodeId), EdgeDistribution>) -> Result<Self> {
        let mut normalized = BTreeMap::new();
        for (&(u, v), e) in &edge_models {
            e.validate()?;
            if !tree.contains_edge(u, v) {
                return Err(Error::MissingEdge(u, v));
            }
            // a Dirichlet keyed as (v, u) has its shapes listed in that order
            let e = match *e {
                EdgeDistribution::Dirichlet { alpha_u, alpha_v } if u > v => {
                    EdgeDistribution::Dirichlet { alpha_u: alpha_v, alpha_v: alpha_u }
                }
                other => other,
            };
            if normalized.insert(edge_key(u, v), e).is_some() {
                return Err(Error::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        if let Some(&(u, v)) = tree.edges().iter().find(|e| !normalized.contains_key(e)) {
            return Err(Error::MissingEdge(u, v));
        }
        Ok(Self { tree, edge_models: normalized })
    }

    /// The same edge model on every edge.
    pub fn uniform(tree: LabeledTree, edge: EdgeDistribution) -> Result<Self> {
        let models = tree.edges().iter().map(|&e| (e, edge)).collect();
        Self::new(tree, models)
    }

    pub fn tree(&self) -> &LabeledTree {
        &self.tree
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn edge_models(&self) -> &BTreeMap<(NodeId, NodeId), EdgeDistribution> {
        &self.edge_models
    }

    /// Edge model and orientation for the tree edge traversed `from → to`.
    pub fn oriented(&self, from: NodeId, to: NodeId) -> Result<(EdgeDistribution, Direction)> {
        let e = self.edge_models.get(&edge_key(from, to)).ok_or(Error::MissingEdge(from, to))?;
        Ok((*e, Direction::of(from, to)))
    }

    pub fn is_all_husler_reiss(&self) -> bool {
        self.edge_models.values().all(|e| matches!(e, EdgeDistribution::HuslerReiss { .. }))
    }
}

/// Wire form of a model: the tree schema plus `{"edge_models": {"u-v": {...}}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    #[serde(flatten)]
    pub tree: TreeDocument,
    pub edge_models: BTreeMap<String, EdgeDistribution>,
}

impl ModelDocument {
    pub fn from_model(model: &ExtremalTreeModel, names: Option<Vec<String>>) -> Self {
        let mut tree: TreeDocument = model.tree.clone().into();
        tree.names = names;
        let edge_models = model
            .edge_models
            .iter()
            .map(|(&(u, v), e)| (format!("{u}-{v}"), *e))
            .collect();
        Self { tree, edge_models }
    }

    /// Validated model and the optional variable names.
    pub fn into_model(self) -> Result<(ExtremalTreeModel, Option<Vec<String>>)> {
        let names = self.tree.names.clone();
        let tree = LabeledTree::try_from(self.tree)?;
        if let Some(names) = &names {
            check_names(names, tree.d())?;
        }
        let mut models = BTreeMap::new();
        for (key, e) in self.edge_models {
            let parse = |s: &str| {
                s.trim()
                    .parse::<NodeId>()
                    .map_err(|_| Error::InvalidParameter(format!("bad edge key {key:?}")))
            };
            let (a, b) = key
                .split_once('-')
                .ok_or_else(|| Error::InvalidParameter(format!("bad edge key {key:?}")))?;
            models.insert((parse(a)?, parse(b)?), e);
        }
        Ok((ExtremalTreeModel::new(tree, models)?, names))
    }

    pub fn parse(s: &str) -> Result<(ExtremalTreeModel, Option<Vec<String>>)> {
        let doc: ModelDocument = serde_json::from_str(s)?;
        doc.into_model()
    }
}

/// Symmetric nonnegative `d × d` distances with zero diagonal; `+∞` allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn new(w: Vec<Vec<f64>>) -> Result<Self> {
        let d = w.len();
        for (i, row) in w.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            if row[i] != 0.0 {
                return Err(Error::InvalidWeights(format!("nonzero diagonal at {i}")));
            }
            for (j, &x) in row.iter().enumerate() {
                if x.is_nan() || x < 0.0 {
                    return Err(Error::InvalidWeights(format!("entry ({i}, {j}) = {x}")));
                }
                if x != w[j][i] {
                    return Err(Error::NotSymmetric(i, j));
                }
            }
        }
        Ok(Self { w })
    }

    /// Builds a matrix from a symmetric pair function evaluated on `i < j`.
    pub fn from_fn(d: usize, mut f: impl FnMut(NodeId, NodeId) -> f64) -> Result<Self> {
        let mut w = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i + 1..d {
                let x = f(i, j);
                w[i][j] = x;
                w[j][i] = x;
            }
        }
        Self::new(w)
    }

    pub fn d(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.w[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.w
    }

    /// Sum of the weights of the tree's edges.
    pub fn tree_weight(&self, tree: &LabeledTree) -> f64 {
        tree.edges().iter().map(|&(u, v)| self.w[u][v]).sum()
    }
}

/// `n × d` finite observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        if d < 2 {
            return Err(Error::TooFewColumns(d));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, got: values.len() });
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n * d);
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::new(n, d, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.values[t * self.d + i]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(i).step_by(self.d).copied()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Applies `f` to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.n, self.d, self.values.iter().map(|&x| f(x)).collect())
    }

    /// New matrix made of the given rows (with repetition allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        for &t in rows {
            values.extend_from_slice(self.row(t));
        }
        Self::new(rows.len(), self.d, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> LabeledTree {
        LabeledTree::new(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn edge_parameter_ranges() {
        assert!(EdgeDistribution::husler_reiss(0.7).is_ok());
        assert!(EdgeDistribution::husler_reiss(0.0).is_err());
        assert!(EdgeDistribution::logistic(1.0).is_err());
        assert!(EdgeDistribution::logistic(0.0).is_err());
        assert!(EdgeDistribution::logistic(0.999).is_ok());
        assert!(EdgeDistribution::dirichlet(1.0, -2.0).is_err());
        assert!(EdgeDistribution::dirichlet(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn model_needs_exactly_one_entry_per_edge() {
        let hr = EdgeDistribution::husler_reiss(1.0).unwrap();
        let mut m = BTreeMap::new();
        m.insert((0, 1), hr);
        assert_eq!(ExtremalTreeModel::new(chain3(), m.clone()), Err(Error::MissingEdge(1, 2)));
        m.insert((2, 1), hr);
        assert!(ExtremalTreeModel::new(chain3(), m.clone()).is_ok());
        m.insert((1, 2), hr);
        assert!(matches!(ExtremalTreeModel::new(chain3(), m.clone()), Err(Error::DuplicateEdge(1, 2))));
        let mut bad = BTreeMap::new();
        bad.insert((0, 1), hr);
        bad.insert((0, 2), hr);
        assert!(matches!(ExtremalTreeModel::new(chain3(), bad), Err(Error::MissingEdge(..))));
    }

    #[test]
    fn reversed_dirichlet_key_swaps_shapes() {
        let mut m = BTreeMap::new();
        m.insert((1, 0), EdgeDistribution::Dirichlet { alpha_u: 2.0, alpha_v: 5.0 });
        m.insert((1, 2), EdgeDistribution::husler_reiss(1.0).unwrap());
        let model = ExtremalTreeModel::new(chain3(), m).unwrap();
        assert_eq!(
            model.edge_models()[&(0, 1)],
            EdgeDistribution::Dirichlet { alpha_u: 5.0, alpha_v: 2.0 }
        );
        let (_, dir) = model.oriented(1, 0).unwrap();
        assert_eq!(dir, Direction::Reverse);
    }

    #[test]
    fn model_json_round_trip() {
        let mut m = BTreeMap::new();
        m.insert((0, 1), EdgeDistribution::logistic(0.4).unwrap());
        m.insert((1, 2), EdgeDistribution::dirichlet(2.0, 3.0).unwrap());
        let model = ExtremalTreeModel::new(chain3(), m).unwrap();
        let doc = ModelDocument::from_model(&model, Some(vec!["x".into(), "y".into(), "z".into()]));
        let s = serde_json::to_string(&doc).unwrap();
        assert_eq!(
            s,
            r#"{"d":3,"edges":[[0,1],[1,2]],"names":["x","y","z"],"edge_models":{"0-1":{"family":"logistic","theta":0.4},"1-2":{"family":"dirichlet","alpha_u":2.0,"alpha_v":3.0}}}"#
        );
        let (back, names) = ModelDocument::parse(&s).unwrap();
        assert_eq!(back, model);
        assert_eq!(names.unwrap()[2], "z");
        assert!(ModelDocument::parse(r#"{"d":2,"edges":[[0,1]],"edge_models":{"0_1":{"family":"husler_reiss","gamma":1.0}}}"#).is_err());
        assert!(ModelDocument::parse(r#"{"d":2,"edges":[[0,1]],"edge_models":{"0-1":{"family":"logistic","theta":1.5}}}"#).is_err());
    }

    #[test]
    fn weight_matrix_validation() {
        assert!(WeightMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
        assert!(WeightMatrix::new(vec![vec![0.0, f64::INFINITY], vec![f64::INFINITY, 0.0]]).is_ok());
        assert_eq!(
            WeightMatrix::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]),
            Err(Error::NotSymmetric(0, 1))
        );
        assert!(WeightMatrix::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(WeightMatrix::new(vec![vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(WeightMatrix::new(vec![vec![0.0, f64::NAN], vec![f64::NAN, 0.0]]).is_err());
        assert!(WeightMatrix::new(vec![vec![0.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn data_matrix_validation() {
        assert!(DataMatrix::new(1, 2, vec![1.0, 2.0]).is_err());
        assert!(DataMatrix::new(2, 1, vec![1.0, 2.0]).is_err());
        assert!(DataMatrix::new(2, 2, vec![1.0, 2.0, f64::NAN, 0.0]).is_err());
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(x.column(1).collect::<Vec<_>>(), vec![2.0, 4.0, 6.0]);
        assert_eq!(x.row(2), &[5.0, 6.0]);
        assert_eq!(x.select_rows(&[2, 2]).unwrap().values(), &[5.0, 6.0, 5.0, 6.0]);
    }
}
