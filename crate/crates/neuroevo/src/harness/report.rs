//! Statistics over persisted traces: per-method final errors, Kruskal-Wallis
//! and pairwise Wilcoxon tests, and family-normalized summary tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::str::FromStr;

use crate::data::ProblemId;
use crate::error::{Error, Result};
use crate::stats::{kruskal_wallis, wilcoxon_ranksum, KwTest};

use super::trace::read_trace;
use super::{Family, Method};

/// Final-error samples grouped by problem, then method, ordered by run index.
pub type FinalErrors = BTreeMap<String, BTreeMap<Method, Vec<f64>>>;

#[derive(Debug, Clone)]
pub struct FamilyEntry {
    pub method: Method,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub norm_mean: f64,
    pub norm_sd: f64,
    /// Smallest normalized mean within the family block.
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct FamilyColumn {
    pub family: Family,
    pub entries: Vec<FamilyEntry>,
}

#[derive(Debug, Clone)]
pub struct StatReport {
    pub problem: String,
    pub methods: Vec<Method>,
    pub samples: BTreeMap<Method, Vec<f64>>,
    pub kruskal: Option<KwTest>,
    pub wilcoxon: Vec<(Method, Method, f64)>,
    pub families: Vec<FamilyColumn>,
}

fn parse_trace_name(name: &str) -> Result<Option<(String, Method, usize)>> {
    let Some(stem) = name.strip_prefix("trace_").and_then(|s| s.strip_suffix(".csv")) else {
        return Ok(None);
    };
    let parts: Vec<&str> = stem.split('_').collect();
    if parts.len() != 3 || !parts[2].starts_with("run") {
        return Err(Error::Config(format!("unrecognized trace file name '{name}'")));
    }
    let problem = parts[0].to_string();
    ProblemId::from_str(&problem)
        .map_err(|_| Error::Config(format!("unknown problem '{problem}' in '{name}'")))?;
    let method = Method::from_str(parts[1])
        .map_err(|_| Error::Config(format!("unknown method '{}' in '{name}'", parts[1])))?;
    let run_index: usize = parts[2][3..]
        .parse()
        .map_err(|_| Error::Config(format!("bad run index in '{name}'")))?;
    Ok(Some((problem, method, run_index)))
}

/// Scans a directory for trace files and extracts each run's final error.
/// Files that do not look like traces are ignored; malformed trace names fail.
pub fn collect_final_errors(dir: &Path) -> Result<FinalErrors> {
    let mut found: BTreeMap<String, BTreeMap<Method, Vec<(usize, f64)>>> = BTreeMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some((problem, method, run_index)) = parse_trace_name(name)? else { continue };
        let file = fs::File::open(entry.path())?;
        let trace = read_trace(BufReader::new(file))?;
        let final_error = trace.final_error().ok_or_else(|| {
            Error::Config(format!("trace file '{name}' has no rows"))
        })?;
        found
            .entry(problem)
            .or_default()
            .entry(method)
            .or_default()
            .push((run_index, final_error));
    }
    let mut out = FinalErrors::new();
    for (problem, methods) in found {
        let mut by_method = BTreeMap::new();
        for (method, mut runs) in methods {
            runs.sort_by_key(|&(idx, _)| idx);
            by_method.insert(method, runs.into_iter().map(|(_, v)| v).collect());
        }
        out.insert(problem, by_method);
    }
    Ok(out)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn family_methods(family: Family) -> ([Method; 3], Method) {
    match family {
        Family::De => ([Method::De, Method::DeInvSb, Method::DeSb], Method::DeSbBf),
        Family::CmaEs => {
            ([Method::CmaEs, Method::CmaEsInvSb, Method::CmaEsSb], Method::CmaEsSbBf)
        }
    }
}

/// Normalizes each family block by the largest mean of its (regular, inv-sb,
/// sb) triple; the brute-force column, when present, uses the same divisor.
/// A family with any member present must have the whole triple.
pub fn normalize_report(samples: &BTreeMap<Method, Vec<f64>>) -> Result<Vec<FamilyColumn>> {
    let mut columns = Vec::new();
    for family in [Family::De, Family::CmaEs] {
        if !samples.keys().any(|m| m.family() == family) {
            continue;
        }
        let (triple, bf) = family_methods(family);
        let mut entries = Vec::new();
        for m in triple {
            let xs = samples.get(&m).ok_or_else(|| {
                Error::Config(format!(
                    "family {} is missing '{}'; cannot normalize",
                    family.name(),
                    m
                ))
            })?;
            let (mean, sd) = mean_sd(xs);
            entries.push(FamilyEntry {
                method: m,
                n: xs.len(),
                mean,
                sd,
                norm_mean: 0.0,
                norm_sd: 0.0,
                best: false,
            });
        }
        if let Some(xs) = samples.get(&bf) {
            let (mean, sd) = mean_sd(xs);
            entries.push(FamilyEntry {
                method: bf,
                n: xs.len(),
                mean,
                sd,
                norm_mean: 0.0,
                norm_sd: 0.0,
                best: false,
            });
        }
        let divisor = entries[..3].iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max);
        for e in &mut entries {
            if divisor > 0.0 {
                e.norm_mean = e.mean / divisor;
                e.norm_sd = e.sd / divisor;
            } else {
                // All means zero: every entry ties at the reference value.
                e.norm_mean = 1.0;
                e.norm_sd = 0.0;
            }
        }
        let best_idx = entries
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.norm_mean.total_cmp(&b.1.norm_mean))
            .map(|(i, _)| i)
            .unwrap();
        entries[best_idx].best = true;
        columns.push(FamilyColumn { family, entries });
    }
    Ok(columns)
}

/// Builds the full statistics block for one problem.
pub fn build_report(problem: &str, samples: &BTreeMap<Method, Vec<f64>>) -> Result<StatReport> {
    let methods: Vec<Method> = samples.keys().copied().collect();
    let kruskal = if methods.len() >= 2 {
        let groups: Vec<Vec<f64>> = methods.iter().map(|m| samples[m].clone()).collect();
        Some(kruskal_wallis(&groups)?)
    } else {
        None
    };
    let mut wilcoxon = Vec::new();
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            let p = wilcoxon_ranksum(&samples[&methods[i]], &samples[&methods[j]])?;
            wilcoxon.push((methods[i], methods[j], p));
        }
    }
    let families = normalize_report(samples)?;
    Ok(StatReport {
        problem: problem.to_string(),
        methods,
        samples: samples.clone(),
        kruskal,
        wilcoxon,
        families,
    })
}

pub fn render_report(report: &StatReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("problem: {}\n", report.problem));
    for col in &report.families {
        out.push_str(&format!("  family {}:\n", col.family.name()));
        out.push_str("    method            n     mean          sd            normalized\n");
        for e in &col.entries {
            let marker = if e.best { " *best*" } else { "" };
            out.push_str(&format!(
                "    {:<16} {:>4}  {:<12.6e}  {:<12.6e}  {:.4} +- {:.4}{}\n",
                e.method.name(),
                e.n,
                e.mean,
                e.sd,
                e.norm_mean,
                e.norm_sd,
                marker
            ));
        }
    }
    match &report.kruskal {
        Some(kw) => {
            out.push_str(&format!("  kruskal-wallis: H = {:.6}, p = {:.6}\n", kw.h, kw.p))
        }
        None => out.push_str("  kruskal-wallis: needs at least two methods\n"),
    }
    if !report.wilcoxon.is_empty() {
        out.push_str("  wilcoxon rank-sum p-values:\n");
        for (a, b, p) in &report.wilcoxon {
            out.push_str(&format!("    {} vs {}: {:.6}\n", a.name(), b.name(), p));
        }
    }
    out
}
