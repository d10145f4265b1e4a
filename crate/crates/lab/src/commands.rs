//! Subcommand implementations. Each returns a process exit code: 0 for
//! success or PASS, 1 for FAIL; errors map to 2 in `main`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use adascale_core::analysis::MeanCi;
use adascale_core::engine::{run, Executor, Sequential, Trace};

use crate::compare::{compare_gains, gain_csv};
use crate::config::ExperimentSpec;
use crate::error::{LabError, Result};
use crate::output::{fmt_f64, runs_csv, trace_csv, write_atomic, Summary};
use crate::suites::{run_suite, Check, Suite};

/// Output directory: the command line wins over the config file.
pub fn out_dir(spec: &ExperimentSpec, cli: Option<&Path>) -> Result<PathBuf> {
    cli.map(Path::to_path_buf)
        .or_else(|| spec.out.clone())
        .ok_or_else(|| LabError::Usage("no output directory (pass --out or set `out`)".into()))
}

/// Seeds: the command line wins over the config file; the default is seed 1.
pub fn resolve_seeds(
    spec: &ExperimentSpec,
    count: Option<u64>,
    list: Option<&[u64]>,
) -> Result<Vec<u64>> {
    let seeds = match (count, list) {
        (Some(_), Some(_)) => {
            return Err(LabError::Usage("give either --seeds or --seed-list".into()))
        }
        (Some(0), None) => return Err(LabError::Usage("--seeds must be at least 1".into())),
        (Some(n), None) => (1..=n).collect(),
        (None, Some(l)) => l.to_vec(),
        (None, None) if spec.seeds.is_empty() => vec![1],
        (None, None) => spec.seeds.clone(),
    };
    if seeds.is_empty() {
        return Err(LabError::Usage("seed list is empty".into()));
    }
    Ok(seeds)
}

/// Run every seed of one experiment.
pub fn train_runs<E: Executor>(
    spec: &ExperimentSpec,
    seeds: &[u64],
    exec: &E,
) -> Result<Vec<Trace>> {
    let (obj, w0) = spec.build()?;
    let runs = exec.map(seeds.len(), |k| {
        run(&obj, w0.clone(), &spec.train_config(seeds[k]), &Sequential)
    });
    Ok(runs
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Write one trace per seed, the per-seed record, the summary and a copy of
/// the configuration.
pub fn write_training(dir: &Path, spec: &ExperimentSpec, traces: &[Trace]) -> Result<Summary> {
    for t in traces {
        write_atomic(
            &dir.join(format!("trace_seed{}.csv", t.seed)),
            &trace_csv(t),
        )?;
    }
    write_atomic(&dir.join("runs.csv"), &runs_csv(traces))?;
    let summary = Summary::of(traces);
    write_atomic(&dir.join("summary.csv"), &summary.to_csv())?;
    let echo = ExperimentSpec {
        seeds: traces.iter().map(|t| t.seed).collect(),
        out: None,
        ..spec.clone()
    };
    write_atomic(&dir.join("config.toml"), &echo.to_toml()?)?;
    Ok(summary)
}

pub fn cmd_train<E: Executor>(
    spec: &ExperimentSpec,
    dir: &Path,
    seeds: &[u64],
    exec: &E,
) -> Result<i32> {
    let traces = train_runs(spec, seeds, exec)?;
    let summary = write_training(dir, spec, &traces)?;
    match summary.objective {
        Some((mean, std)) => println!(
            "trained {} seed(s): final F {} (std {}), iterations {}",
            traces.len(),
            fmt_f64(mean),
            fmt_f64(std),
            fmt_f64(summary.iterations.0)
        ),
        None => println!(
            "trained {} seed(s): {} diverged, final F N/A",
            traces.len(),
            summary.diverged
        ),
    }
    Ok(0)
}

pub fn cmd_sweep<E: Executor>(
    spec: &ExperimentSpec,
    dir: &Path,
    seeds: &[u64],
    exec: &E,
) -> Result<i32> {
    let points = spec.sweep_points()?;
    let mut matrix = String::new();
    let seed_text: Vec<String> = seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(matrix, "# seeds={}", seed_text.join(" "));
    let label_names: Vec<&str> = points[0].labels.iter().map(|(k, _)| *k).collect();
    let _ = writeln!(
        matrix,
        "{},final_F_mean,final_F_std,total_iterations_mean,total_iterations_std,diverged",
        label_names.join(",")
    );
    for (i, point) in points.iter().enumerate() {
        let traces = train_runs(&point.spec, seeds, exec)?;
        let summary = write_training(&dir.join(format!("point_{i:03}")), &point.spec, &traces)?;
        let values: Vec<&str> = point.labels.iter().map(|(_, v)| v.as_str()).collect();
        let (f_mean, f_std) = match summary.objective {
            Some((m, s)) => (fmt_f64(m), fmt_f64(s)),
            None => ("N/A".into(), "N/A".into()),
        };
        let _ = writeln!(
            matrix,
            "{},{f_mean},{f_std},{},{},{}",
            values.join(","),
            fmt_f64(summary.iterations.0),
            fmt_f64(summary.iterations.1),
            summary.diverged
        );
    }
    write_atomic(&dir.join("matrix.csv"), &matrix)?;
    println!(
        "swept {} point(s) x {} seed(s) into {}",
        points.len(),
        seeds.len(),
        dir.display()
    );
    Ok(0)
}

pub fn cmd_gain_compare<E: Executor>(
    spec: &ExperimentSpec,
    dir: &Path,
    seeds: &[u64],
    exec: &E,
) -> Result<i32> {
    let compare = spec.compare.unwrap_or_default();
    let (obj, w0) = spec.build()?;
    let results = exec.map(seeds.len(), |k| {
        compare_gains(
            &obj,
            w0.clone(),
            &spec.train_config(seeds[k]),
            compare.every,
            compare.n_batches,
            &Sequential,
        )
    });
    for (seed, res) in seeds.iter().zip(results) {
        let (_, rows) = res?;
        write_atomic(
            &dir.join(format!("gain_seed{seed}.csv")),
            &gain_csv(*seed, &rows),
        )?;
        let errs: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.analytic.map(|a| (r.online - a).abs() / a))
            .collect();
        if errs.is_empty() {
            println!("seed {seed}: {} comparison rows", rows.len());
        } else {
            println!(
                "seed {seed}: {} comparison rows, mean |online/analytic - 1| = {}",
                rows.len(),
                fmt_f64(MeanCi::of(&errs).mean)
            );
        }
    }
    Ok(0)
}

/// Run a suite, print one line per check and a per-criterion digest.
pub fn cmd_verify<E: Executor>(suite: Suite, exec: &E, report: Option<&Path>) -> Result<i32> {
    let checks = run_suite(suite, exec)?;
    let text = format_report(&checks);
    print!("{text}");
    let _ = std::io::stdout().flush();
    if let Some(path) = report {
        write_atomic(path, &text)?;
    }
    Ok(if checks.iter().all(|c| c.pass) { 0 } else { 1 })
}

pub fn format_report(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let _ = writeln!(out, "{c}");
    }
    let mut criteria: Vec<u8> = checks.iter().map(|c| c.criterion).collect();
    criteria.sort_unstable();
    criteria.dedup();
    let _ = writeln!(out, "--");
    for k in criteria {
        let of_k: Vec<&Check> = checks.iter().filter(|c| c.criterion == k).collect();
        let passed = of_k.iter().filter(|c| c.pass).count();
        let _ = writeln!(
            out,
            "criterion {k:>2}: {} ({passed}/{} checks)",
            if passed == of_k.len() { "PASS" } else { "FAIL" },
            of_k.len()
        );
    }
    out
}
