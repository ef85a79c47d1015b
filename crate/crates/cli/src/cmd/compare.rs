use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use triage_core::engine::trace::read_trace_csv;
use triage_core::evalstats::{scott_knott, wilcoxon_signed_rank, CompareMetric, RankedGroups, WilcoxonResult};

use crate::fsutil::write_atomic;
use crate::{CompareArgs, TestArg};

pub const SIGNIFICANCE: f64 = 0.05;

/// Per-timestep values of `metric` from one trace file.
pub fn trace_series(path: &Path, metric: CompareMetric) -> Result<Vec<f64>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = read_trace_csv(f).with_context(|| format!("parsing {}", path.display()))?;
    rows.iter()
        .map(|r| {
            r.metric(metric).with_context(|| {
                format!("{}: timestep {} has no {} value", path.display(), r.t, metric.as_str())
            })
        })
        .collect()
}

/// Display names for trace paths: file stems, made unique with a suffix.
pub fn trace_names(paths: &[PathBuf]) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(paths.len());
    for p in paths {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        let mut name = stem.clone();
        let mut n = 2;
        while names.contains(&name) {
            name = format!("{stem}#{n}");
            n += 1;
        }
        names.push(name);
    }
    names
}

pub fn scott_knott_report(groups: &[(String, Vec<f64>)]) -> Result<RankedGroups> {
    if groups.len() < 2 {
        bail!("scott-knott needs at least 2 traces, got {}", groups.len());
    }
    Ok(scott_knott(groups)?)
}

pub fn wilcoxon_report(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        bail!("wilcoxon pairs timesteps, but the traces have {} and {} rows", a.len(), b.len());
    }
    Ok(wilcoxon_signed_rank(a, b)?)
}

pub fn run(args: &CompareArgs) -> Result<()> {
    let metric: CompareMetric = args.metric.into();
    let names = trace_names(&args.traces);
    let series = args
        .traces
        .iter()
        .map(|p| trace_series(p, metric))
        .collect::<Result<Vec<_>>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    match args.test {
        TestArg::ScottKnott => {
            let groups: Vec<(String, Vec<f64>)> = names.into_iter().zip(series).collect();
            let ranked = scott_knott_report(&groups)?;
            println!("scott-knott on {} ({} rank(s))", metric.as_str(), ranked.rank_count());
            println!("{:>4}  {:<24} {:>10} {:>10}", "rank", "trace", "mean", "sd");
            w.write_record(["trace", "mean", "sd", "rank"])?;
            for g in &ranked.groups {
                println!("{:>4}  {:<24} {:>10.4} {:>10.4}", g.rank, g.name, g.mean, g.std_dev);
                w.write_record([g.name.clone(), g.mean.to_string(), g.std_dev.to_string(), g.rank.to_string()])?;
            }
        }
        TestArg::Wilcoxon => {
            if series.len() != 2 {
                bail!("wilcoxon needs exactly 2 traces, got {}", series.len());
            }
            let r = wilcoxon_report(&series[0], &series[1])?;
            let significant = r.p_two_sided <= SIGNIFICANCE;
            println!(
                "wilcoxon on {}: {} vs {}  n={} W+={} W-={} p={:.6} ({}){}",
                metric.as_str(),
                names[0],
                names[1],
                r.n,
                r.w_plus,
                r.w_minus,
                r.p_two_sided,
                if r.exact { "exact" } else { "normal approx." },
                if significant { "  significant at 0.05" } else { "" }
            );
            w.write_record(["a", "b", "n", "w_plus", "w_minus", "statistic", "p_two_sided", "exact", "significant"])?;
            w.write_record([
                names[0].clone(),
                names[1].clone(),
                r.n.to_string(),
                r.w_plus.to_string(),
                r.w_minus.to_string(),
                r.statistic.to_string(),
                r.p_two_sided.to_string(),
                r.exact.to_string(),
                significant.to_string(),
            ])?;
        }
    }
    if let Some(out) = &args.out {
        write_atomic(out, &w.into_inner()?)?;
    }
    Ok(())
}
