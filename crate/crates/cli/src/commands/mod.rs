//! One module per subcommand. Every command writes under
//! `<output_dir>/<command>/` and returns its results in memory as well.

pub mod calibrate;
pub mod estimate;
pub mod explore;
pub mod report;
pub mod ten_arm;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use accsurf_core::rng::derive_seed;
use accsurf_core::world::{sample_world, SyntheticWorld};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Worker threads for grid cells.
    pub jobs: usize,
    /// Continue exploration runs from saved state when present.
    pub resume: bool,
    /// Stop each exploration run after this many rounds in this invocation.
    pub max_rounds: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            resume: false,
            max_rounds: None,
        }
    }
}

/// Pool tags, combined with the run seed.
pub(crate) mod tag {
    pub const EVAL: u64 = 11;
    pub const LABELED: u64 = 12;
    pub const SEED_SET: u64 = 13;
    pub const POOL: u64 = 14;
    pub const TEST: u64 = 15;
}

pub(crate) fn pool_tag(seed: u64, t: u64) -> u64 {
    derive_seed(seed, &[t])
}

pub(crate) fn world(cfg: &ExperimentConfig) -> CliResult<SyntheticWorld> {
    sample_world(&cfg.world, cfg.world_seed).map_err(|e| CliError::Config(e.to_string()))
}

/// Runs `f` over `cells` on `jobs` threads, keeping cell order.
pub(crate) fn par_cells<C, T, F>(jobs: usize, cells: &[C], f: F) -> CliResult<Vec<T>>
where
    C: Sync,
    T: Send,
    F: Fn(&C) -> CliResult<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(&f).collect())
}

pub(crate) fn out_dir(cfg: &ExperimentConfig, sub: &str) -> CliResult<PathBuf> {
    let dir = cfg.output_dir.join(sub);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

pub(crate) fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(path, e))
}

/// Serializes `rows` as a headed CSV file.
pub(crate) fn write_rows<T: serde::Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> CliResult<()> {
    let csv_err = |source| CliError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes the resolved configuration next to a command's outputs.
pub(crate) fn write_config(cfg: &ExperimentConfig, dir: &Path) -> CliResult<()> {
    write_text(&dir.join("config.json"), &cfg.to_json()?)
}

pub(crate) fn core_err(cell: &str) -> impl Fn(accsurf_core::Error) -> CliError + '_ {
    move |e| CliError::in_cell(cell, e)
}
