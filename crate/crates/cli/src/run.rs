//! `otmap run`: train and evaluate every block of a config file.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use otmap::eval::{run_experiment, write_results_csv, write_summary_json};
use otmap::Profile;

use crate::config::ConfigFile;

/// Environment variable consulted for the worker count when `--threads` is
/// absent. Falls back to the config's `threads`, then to all logical cores.
pub const THREADS_ENV: &str = "OTMAP_THREADS";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub profile: Option<Profile>,
    pub threads: Option<usize>,
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub label: String,
    pub results: PathBuf,
    pub summary: PathBuf,
}

fn thread_count(flag: Option<usize>, from_config: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = flag {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        return Ok(Some(t));
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let t: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow!("{THREADS_ENV}={v:?} is not a positive integer"))?;
        if t == 0 {
            bail!("{THREADS_ENV} must be at least 1");
        }
        return Ok(Some(t));
    }
    Ok(from_config)
}

pub fn run(opts: &RunOptions) -> Result<Vec<BlockOutput>> {
    let file = ConfigFile::load(&opts.config)?;
    let blocks = file.blocks(opts.profile)?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| file.out_dir.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set out_dir in the config"))?;
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut outputs: Vec<BlockOutput> = Vec::new();
    for b in &blocks {
        let stem = b.file_stem();
        let results = out_dir.join(format!("{stem}.results.csv"));
        let summary = out_dir.join(format!("{stem}.summary.json"));
        if let Some(prev) = outputs.iter().find(|o| o.results == results) {
            bail!("{} duplicates {}: both resolve to {}", b.label, prev.label, results.display());
        }
        if !opts.force {
            for p in [&results, &summary] {
                if p.exists() {
                    bail!("{} exists; pass --force to overwrite", p.display());
                }
            }
        }
        outputs.push(BlockOutput {
            label: b.label.clone(),
            results,
            summary,
        });
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(opts.threads, file.threads)? {
        pool = pool.num_threads(t);
    }
    let pool = pool.build()?;

    for (b, out) in blocks.iter().zip(&outputs) {
        eprintln!(
            "{}: {} reps of d={} {} {} {} n={} N={} ({:?} profile)",
            b.label,
            b.config.repetitions,
            b.config.dim,
            b.config.source.name(),
            b.config.map.name(),
            b.config.estimator.name(),
            b.config.n,
            b.config.big_n,
            b.config.profile
        );
        let report = pool
            .install(|| run_experiment(&b.config))
            .map_err(|e| anyhow!("{}: {e}", b.label))?;
        write_to(&out.results, |w| write_results_csv(w, &report, file.record_timing))?;
        write_to(&out.summary, |w| write_summary_json(w, &report))?;
        eprintln!(
            "{}: mean {:.6} sd {:.6} in {:.1}s -> {}",
            b.label,
            report.mean,
            report.sd,
            report.total_wall_time_seconds,
            out.results.display()
        );
        if let Some(f) = report.failed.first() {
            bail!(
                "{}: {} of {} repetitions failed; first was repetition {}: {}",
                b.label,
                report.failed.len(),
                b.config.repetitions,
                f.rep,
                f.error
            );
        }
    }
    Ok(outputs)
}

fn write_to(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> otmap::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w).with_context(|| format!("writing {}", path.display()))?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}
