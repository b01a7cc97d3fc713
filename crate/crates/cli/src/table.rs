//! `otmap table`: pool result files into one row per experiment cell.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use otmap::eval::{format_f64, mean_sd, read_results_csv};

pub const TABLE_HEADER: &str = "estimator,source,map,dim,n,N,mean,sd,reps";

type Cell = (String, String, String, usize, usize, usize);

/// Files matching `pattern`, in sorted path order.
pub fn matching_files(pattern: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in glob::glob(pattern).with_context(|| format!("bad glob pattern {pattern:?}"))? {
        let p = entry?;
        if p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        bail!("no files match {pattern:?}");
    }
    Ok(files)
}

/// Writes the table and returns the number of cells. Losses from several
/// files for the same cell are pooled before taking mean and SD.
pub fn table(pattern: &str, out: &Path) -> Result<usize> {
    let mut cells: BTreeMap<Cell, Vec<f64>> = BTreeMap::new();
    for f in matching_files(pattern)? {
        let rows = read_results_csv(&f).with_context(|| format!("reading {}", f.display()))?;
        for r in rows {
            cells
                .entry((r.estimator, r.source, r.map, r.dim, r.n, r.big_n))
                .or_default()
                .push(r.l2_loss);
        }
    }
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(out).with_context(|| format!("creating {}", out.display()))?,
    );
    writeln!(w, "{TABLE_HEADER}")?;
    for ((est, src, map, dim, n, big_n), losses) in &cells {
        let (mean, sd) = mean_sd(losses);
        writeln!(
            w,
            "{est},{src},{map},{dim},{n},{big_n},{},{},{}",
            format_f64(mean),
            format_f64(sd),
            losses.len()
        )?;
    }
    w.flush()?;
    Ok(cells.len())
}
