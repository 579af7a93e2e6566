use std::fmt::Write as _;
use std::path::Path;

use extremal_tree::estimators::{
    chi_curve, default_k, gamma_hat_rooted, gamma_hat_uniform, k_from_fraction, rank_transform,
};
use extremal_tree::experiments::{bootstrap_stability, run_experiment, EdgeFrequencies, ExperimentConfig};
use extremal_tree::learn::{fit_hr_tree, learn_tree, GammaMethod, LearnMethod};
use extremal_tree::model::ModelDocument;
use extremal_tree::pipeline::{
    default_chi_levels, ingest_csv, run_pipeline, tail_fraction, CsvOptions, Dataset,
    PipelineOptions,
};
use extremal_tree::sampling::{sample_domain_of_attraction, sample_max_stable, sample_y_rooted, NoiseSpec};
use extremal_tree::tree::{NamedTree, NodeId};
use extremal_tree::{Error, RandomStream, Result, VERSION};
use serde::Serialize;

use crate::{Cli, Command, InputArgs, KArgs, SimKind};

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    version: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct BootstrapOutput<'a> {
    method: String,
    names: &'a [String],
    #[serde(flatten)]
    frequencies: &'a EdgeFrequencies,
}

fn to_json<T: Serialize>(body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned { version: VERSION, body })?;
    s.push('\n');
    Ok(s)
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, content).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn read_file(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn load(input: &InputArgs) -> Result<Dataset> {
    if !input.delimiter.is_ascii() {
        return Err(Error::InvalidParameter(format!("delimiter {:?} is not ASCII", input.delimiter)));
    }
    let options = CsvOptions { delimiter: input.delimiter as u8, header: !input.no_header, abs: input.abs };
    ingest_csv(&input.input, options)
}

fn resolve_k(k: &KArgs, n: usize) -> Result<usize> {
    match (k.k, k.q) {
        (Some(k), _) => Ok(k),
        (None, Some(q)) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidParameter(format!("q = {q} outside (0, 1)")));
            }
            Ok(k_from_fraction(q, n).0)
        }
        (None, None) => Ok(default_k(n)),
    }
}

fn parse_method(s: &str, d: usize) -> Result<LearnMethod> {
    let bad = || Error::InvalidParameter(format!("unknown method {s:?}"));
    match s.split_once('=') {
        None => match s {
            "chi" => Ok(LearnMethod::Chi),
            "gamma" => Ok(LearnMethod::Gamma(GammaMethod::Combined)),
            _ => Err(bad()),
        },
        Some(("gamma-root", m)) => {
            let m: NodeId = m.parse().map_err(|_| bad())?;
            if m >= d {
                return Err(Error::NodeOutOfRange { node: m, d });
            }
            Ok(LearnMethod::Gamma(GammaMethod::Rooted(m)))
        }
        Some(("gamma-weighted", file)) => {
            let w: Vec<f64> = serde_json::from_str(&read_file(Path::new(file))?)?;
            Ok(LearnMethod::Gamma(GammaMethod::Weighted(w)))
        }
        Some(_) => Err(bad()),
    }
}

fn parse_pairs(pairs: &[String], d: usize) -> Result<Option<Vec<(NodeId, NodeId)>>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    pairs
        .iter()
        .map(|p| {
            let bad = || Error::InvalidParameter(format!("bad pair {p:?}, expected i-j"));
            let (a, b) = p.split_once('-').ok_or_else(bad)?;
            let (i, j): (NodeId, NodeId) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            for v in [i, j] {
                if v >= d {
                    return Err(Error::NodeOutOfRange { node: v, d });
                }
            }
            if i == j {
                return Err(bad());
            }
            Ok((i, j))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn all_pairs(d: usize) -> Vec<(NodeId, NodeId)> {
    (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
}

fn write_csv(names: &[String], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = names.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub(crate) fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    let stream = RandomStream::from_seed(cli.seed);
    match &cli.command {
        Command::Simulate { model, n, kind, root } => {
            let (model, names) = ModelDocument::parse(&read_file(model)?)?;
            let d = model.d();
            let names = names.unwrap_or_else(|| (0..d).map(|i| format!("V{i}")).collect());
            let csv = match kind {
                SimKind::MaxStable | SimKind::Rooted => {
                    let s = if *kind == SimKind::Rooted {
                        sample_y_rooted(&model, *root, *n, stream)?
                    } else {
                        sample_max_stable(&model, *n, stream)?
                    };
                    write_csv(&names, (0..s.n).map(|t| s.row(t).to_vec()))
                }
                SimKind::Noisy => {
                    let x = sample_domain_of_attraction(&model, &NoiseSpec::N1, *n, stream)?;
                    write_csv(&names, (0..x.n()).map(|t| x.row(t).to_vec()))
                }
            };
            emit(out, &csv)
        }
        Command::Estimate { input, k, root } => {
            let ds = load(input)?;
            let ranks = rank_transform(&ds.data);
            let k = resolve_k(k, ranks.n())?;
            let est = if root == "combined" {
                gamma_hat_uniform(&ranks, k)?
            } else {
                let m = root
                    .parse()
                    .map_err(|_| Error::InvalidParameter(format!("--root expects an index or \"combined\", got {root:?}")))?;
                gamma_hat_rooted(&ranks, m, k)?
            };
            emit(out, &to_json(&est)?)
        }
        Command::Learn { input, k, method } => {
            let ds = load(input)?;
            let ranks = rank_transform(&ds.data);
            let k = resolve_k(k, ranks.n())?;
            let tree = learn_tree(&ranks, &parse_method(method, ranks.d())?, k)?;
            emit(out, &to_json(&NamedTree::new(tree, Some(ds.names))?)?)
        }
        Command::ChiCurve { input, pairs, levels } => {
            let ds = load(input)?;
            let ranks = rank_transform(&ds.data);
            let n = ranks.n();
            let pairs = parse_pairs(pairs, ranks.d())?.unwrap_or_else(|| all_pairs(ranks.d()));
            let levels = if levels.is_empty() { default_chi_levels() } else { levels.clone() };
            let tail: Vec<f64> = levels.iter().map(|&l| tail_fraction(l)).collect();
            let mut s = String::from("i,j,name_i,name_j,level,tail_fraction,k,chi\n");
            for (i, j) in pairs {
                for ((level, t), (_, chi)) in levels.iter().zip(&tail).zip(chi_curve(&ranks, i, j, &tail)?) {
                    let k = k_from_fraction(*t, n).0;
                    let _ = writeln!(s, "{i},{j},{},{},{level},{t},{k},{chi}", ds.names[i], ds.names[j]);
                }
            }
            emit(out, &s)
        }
        Command::FitHr { input, k } => {
            let ds = load(input)?;
            let ranks = rank_transform(&ds.data);
            let k = resolve_k(k, ranks.n())?;
            emit(out, &to_json(&fit_hr_tree(&ranks, k)?)?)
        }
        Command::Bootstrap { input, k, method, replicates } => {
            let ds = load(input)?;
            let k = resolve_k(k, ds.data.n())?;
            let learner = parse_method(method, ds.data.d())?;
            let frequencies = bootstrap_stability(&ds.data, k, *replicates, &learner, stream)?;
            let body = BootstrapOutput { method: learner.label(), names: &ds.names, frequencies: &frequencies };
            emit(out, &to_json(&body)?)
        }
        Command::Experiment { config } => {
            let config: ExperimentConfig = serde_json::from_str(&read_file(config)?)?;
            emit(out, &run_experiment(&config)?.to_csv()?)
        }
        Command::Pipeline { input, q, replicates, no_fit, pairs } => {
            let ds = load(input)?;
            let options = PipelineOptions {
                q: *q,
                bootstrap: *replicates,
                fit_hr: !no_fit,
                chi_pairs: parse_pairs(pairs, ds.data.d())?,
                chi_levels: default_chi_levels(),
                seed: cli.seed,
            };
            let mut s = run_pipeline(&ds, &options)?.to_json()?;
            s.push('\n');
            emit(out, &s)
        }
    }
}
