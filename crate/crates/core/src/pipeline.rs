//! End-to-end analysis of a data file: ingestion, χ̂ diagnostics, tree
//! learning, Hüsler–Reiss fit and bootstrap edge stability.
//!
//! Inputs are expected to be approximately i.i.d. (e.g. already filtered
//! residual series); the only transform offered is the absolute value.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{chi_curve, chi_hat_matrix, gamma_hat_uniform, k_from_fraction, rank_transform};
use crate::experiments::{bootstrap_stability, EdgeFrequencies};
use crate::learn::{fit_hr_tree_from, FittedHrTree, GammaMethod, LearnMethod};
use crate::model::{DataMatrix, WeightMatrix};
use crate::rng::RandomStream;
use crate::tree::{NamedTree, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: bool,
    /// Replace every value by its absolute value.
    pub abs: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',', header: true, abs: false }
    }
}

/// Parsed numeric table with column names (`V0, V1, …` without a header).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: DataMatrix,
    pub names: Vec<String>,
}

pub fn ingest_csv(path: &Path, options: CsvOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(file, options)
}

/// Rows are reported by their 1-based line number in the input, columns 0-based.
pub fn ingest_reader<R: Read>(reader: R, options: CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.header)
        .flexible(false)
        .from_reader(reader);
    let mut names: Option<Vec<String>> = if options.header {
        let h = rdr.headers().map_err(csv_error)?;
        Some(h.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                let cell = cell.trim();
                match cell.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(if options.abs { x.abs() } else { x }),
                    _ => Err(Error::NonNumericCell { row: line, col, value: cell.to_string() }),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let d = names.as_ref().map_or_else(|| rows.first().map_or(0, Vec::len), Vec::len);
    if d < 2 {
        return Err(Error::TooFewColumns(d));
    }
    if rows.len() < 2 {
        return Err(Error::TooFewRows(rows.len()));
    }
    let names = names.take().unwrap_or_else(|| (0..d).map(|i| format!("V{i}")).collect());
    Ok(Dataset { data: DataMatrix::from_rows(&rows)?, names })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::ParseError {
            row: line,
            col: (*expected_len).min(*len) as usize,
            msg: format!("expected {expected_len} fields, found {len}"),
        },
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::ParseError { row: line, col: 0, msg: e.to_string() },
    }
}

/// Default quantile levels for χ̂ curves: `0.80, 0.81, …, 0.99, 0.995, 0.999`.
pub fn default_chi_levels() -> Vec<f64> {
    let mut v: Vec<f64> = (80..=99).map(|p| p as f64 / 100.0).collect();
    v.extend([0.995, 0.999]);
    v
}

/// `1 − level`, rounded to 12 decimals so grid values print cleanly.
pub fn tail_fraction(level: f64) -> f64 {
    ((1.0 - level) * 1e12).round() / 1e12
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    /// Tail fraction `k/n` for learning and fitting.
    pub q: f64,
    /// Bootstrap replicates; 0 skips the bootstrap.
    pub bootstrap: usize,
    pub fit_hr: bool,
    /// Pairs for χ̂ curves; all pairs when absent.
    pub chi_pairs: Option<Vec<(NodeId, NodeId)>>,
    /// Quantile levels `1 − k/n` for χ̂ curves.
    pub chi_levels: Vec<f64>,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { q: 0.05, bootstrap: 0, fit_hr: true, chi_pairs: None, chi_levels: default_chi_levels(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub n: usize,
    pub d: usize,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiCurve {
    pub i: NodeId,
    pub j: NodeId,
    pub chi: Vec<f64>,
}

/// χ̂ evaluated along a grid; `level[t] = 1 − tail_fraction[t]` and
/// `k[t] = round(tail_fraction[t] · n)` clamped to `[2, n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiCurves {
    pub convention: String,
    pub level: Vec<f64>,
    pub tail_fraction: Vec<f64>,
    pub k: Vec<usize>,
    pub curves: Vec<ChiCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiComparison {
    pub i: NodeId,
    pub j: NodeId,
    pub empirical: f64,
    pub implied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub version: String,
    pub input: InputSummary,
    pub q: f64,
    pub k: usize,
    pub chi_curves: ChiCurves,
    pub tree: NamedTree,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<EdgeFrequencies>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_hr: Option<FittedHrTree>,
    /// Empirical χ̂ at `k` against the fitted model's χ, one row per pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_table: Option<Vec<ChiComparison>>,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn run_pipeline(dataset: &Dataset, options: &PipelineOptions) -> Result<PipelineReport> {
    let data = &dataset.data;
    let (n, d) = (data.n(), data.d());
    if dataset.names.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: dataset.names.len() });
    }
    if !(options.q > 0.0 && options.q < 1.0) {
        return Err(Error::InvalidParameter(format!("q = {} outside (0, 1)", options.q)));
    }
    let ranks = rank_transform(data);
    let (k, _) = k_from_fraction(options.q, n);

    let pairs: Vec<(NodeId, NodeId)> = match &options.chi_pairs {
        Some(p) => p.clone(),
        None => (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect(),
    };
    let tail: Vec<f64> = options.chi_levels.iter().map(|&l| tail_fraction(l)).collect();
    let curves = pairs
        .iter()
        .map(|&(i, j)| {
            let chi = chi_curve(&ranks, i, j, &tail)?.into_iter().map(|(_, c)| c).collect();
            Ok(ChiCurve { i, j, chi })
        })
        .collect::<Result<Vec<_>>>()?;
    let chi_curves = ChiCurves {
        convention: "level = 1 - k/n (quantile level); tail_fraction = k/n".into(),
        level: options.chi_levels.clone(),
        k: tail.iter().map(|&t| k_from_fraction(t, n).0).collect(),
        tail_fraction: tail,
        curves,
    };

    let gamma = gamma_hat_uniform(&ranks, k)?;
    let fitted = fit_hr_tree_from(&gamma.g, k, n)?;
    let tree = NamedTree::new(fitted.tree.clone(), Some(dataset.names.clone()))?;
    debug_assert_eq!(fitted.tree, crate::learn::mst(&WeightMatrix::new(gamma.g.clone())?)?);

    let bootstrap = if options.bootstrap > 0 {
        let method = LearnMethod::Gamma(GammaMethod::Combined);
        Some(bootstrap_stability(data, k, options.bootstrap, &method, RandomStream::from_seed(options.seed))?)
    } else {
        None
    };

    let (fitted_hr, chi_table) = if options.fit_hr {
        let emp = chi_hat_matrix(&ranks, k)?;
        let table = (0..d)
            .flat_map(|i| (i + 1..d).map(move |j| (i, j)))
            .map(|(i, j)| ChiComparison { i, j, empirical: emp[i][j], implied: fitted.implied_chi[i][j] })
            .collect();
        (Some(fitted), Some(table))
    } else {
        (None, None)
    };

    Ok(PipelineReport {
        version: crate::VERSION.to_string(),
        input: InputSummary { n, d, names: dataset.names.clone() },
        q: options.q,
        k,
        chi_curves,
        tree,
        bootstrap,
        fitted_hr,
        chi_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str, options: CsvOptions) -> Result<Dataset> {
        ingest_reader(s.as_bytes(), options)
    }

    #[test]
    fn small_csv() {
        let ds = parse("a,b\n1,2\n3,4\n5,6", CsvOptions::default()).unwrap();
        assert_eq!((ds.data.n(), ds.data.d()), (3, 2));
        assert_eq!(ds.names, ["a", "b"]);
        assert_eq!(ds.data.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn headerless_and_abs() {
        let opts = CsvOptions { delimiter: b';', header: false, abs: true };
        let ds = parse("-1;2\n3;-4.5\n", opts).unwrap();
        assert_eq!(ds.names, ["V0", "V1"]);
        assert_eq!(ds.data.row(0), &[1.0, 2.0]);
        assert_eq!(ds.data.row(1), &[3.0, 4.5]);
    }

    #[test]
    fn ingest_errors() {
        let o = CsvOptions::default();
        assert!(matches!(parse("a,b\n1,2\n3\n5,6", o), Err(Error::ParseError { row: 3, .. })));
        assert_eq!(
            parse("a,b\n1,2\n3,x\n", o),
            Err(Error::NonNumericCell { row: 3, col: 1, value: "x".into() })
        );
        assert_eq!(parse("a,b\n1,2\n", o), Err(Error::TooFewRows(1)));
        assert_eq!(parse("a\n1\n2\n", o), Err(Error::TooFewColumns(1)));
        assert!(matches!(parse("a,b\n1,2\n3,nan\n", o), Err(Error::NonNumericCell { .. })));
    }

    fn synthetic(n: usize) -> Dataset {
        use crate::experiments::gen_model_hr_fixed;
        use crate::sampling::{sample_domain_of_attraction, NoiseSpec};
        use crate::tree::LabeledTree;
        let t = LabeledTree::new(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let m = gen_model_hr_fixed(&t, 0.3).unwrap();
        let data = sample_domain_of_attraction(&m, &NoiseSpec::N1, n, RandomStream::from_seed(21)).unwrap();
        Dataset { data, names: ["w", "x", "y", "z"].map(String::from).to_vec() }
    }

    #[test]
    fn report_sections_and_round_trip() {
        let ds = synthetic(3000);
        let report = run_pipeline(&ds, &PipelineOptions::default()).unwrap();
        assert_eq!(report.k, 150);
        assert!(report.bootstrap.is_none());
        assert_eq!(report.tree.tree.edges(), &[(0, 1), (1, 2), (1, 3)]);
        let table = report.chi_table.as_ref().unwrap();
        assert_eq!(table.len(), 6);
        assert!(table.iter().all(|r| (0.0..=1.0).contains(&r.empirical) && (0.0..=1.0).contains(&r.implied)));
        assert_eq!(report.chi_curves.curves.len(), 6);
        assert_eq!(report.chi_curves.level.len(), 22);
        let json = report.to_json().unwrap();
        assert!(!json.contains("\"bootstrap\""));
        let back = PipelineReport::from_json(&json).unwrap();
        assert_eq!(back.to_json().unwrap(), json);

        let opts = PipelineOptions { bootstrap: 5, fit_hr: false, chi_pairs: Some(vec![(0, 2)]), ..Default::default() };
        let report = run_pipeline(&ds, &opts).unwrap();
        assert_eq!(report.bootstrap.as_ref().unwrap().replicates, 5);
        assert!(report.fitted_hr.is_none() && report.chi_table.is_none());
        let json = report.to_json().unwrap();
        assert_eq!(PipelineReport::from_json(&json).unwrap().to_json().unwrap(), json);
    }

    #[test]
    fn k_from_q_recorded() {
        let ds = synthetic(3790);
        let report = run_pipeline(&ds, &PipelineOptions { fit_hr: false, ..Default::default() }).unwrap();
        assert_eq!(report.k, 190);
    }

    #[test]
    fn rejects_bad_q() {
        let ds = synthetic(100);
        for q in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(run_pipeline(&ds, &PipelineOptions { q, ..Default::default() }).is_err());
        }
    }
}
