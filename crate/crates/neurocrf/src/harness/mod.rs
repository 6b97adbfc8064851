//! Multi-model benchmark orchestration.
//!
//! Both benchmarks follow the same scheme: build one model per class
//! (per word, per user) for each requested architecture and iteration,
//! evaluate it against self and non-self test sets, and aggregate rows
//! into per-model averages, per-architecture mean ± standard deviation,
//! and paired significance tests between architectures. Every random
//! choice flows from seeds derived with [`seeds::derive_seeds`] and
//! recorded in a manifest, so any single row can be re-derived and
//! reproduced bit for bit. Experiment units are independent and run on
//! a bounded worker pool; output ordering is canonical (sorted), not
//! execution order.

pub mod ocr;
pub mod report;
pub mod seeds;
pub mod sessions;

use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::types::{Architecture, HyperParams};

/// What to run: architectures × iterations over a corpus, with the
/// sampling and training knobs used by every unit.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub architectures: Vec<Architecture>,
    pub iterations: usize,
    pub base_seed: u64,
    pub hyper: HyperParams,
    /// Fraction of a word's instances used for training.
    pub train_ratio: f64,
    /// Impostor sample size per experiment.
    pub nonself_count: usize,
    /// Bounded worker count; `None` uses the default pool.
    pub workers: Option<usize>,
    /// Restrict to these model ids (words or users) when present.
    pub model_filter: Option<Vec<String>>,
    /// Restrict the word benchmark to words of exactly this length.
    pub length_filter: Option<usize>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            architectures: Architecture::ALL.to_vec(),
            iterations: 5,
            base_seed: 0,
            hyper: HyperParams::default(),
            train_ratio: 2.0 / 3.0,
            nonself_count: 100,
            workers: None,
            model_filter: None,
            length_filter: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.architectures.is_empty() {
            return Err(Error::invalid("at least one architecture required"));
        }
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::invalid("train ratio outside (0, 1)"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("worker count must be >= 1"));
        }
        self.hyper.validate()
    }

    fn wants_model(&self, model_id: &str) -> bool {
        match &self.model_filter {
            Some(keep) => keep.iter().any(|m| m == model_id),
            None => true,
        }
    }
}

/// One experiment unit's outcome with the seeds that reproduce it.
#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub model_id: String,
    pub architecture: Architecture,
    pub iteration: usize,
    pub metrics: MetricsReport,
    pub partition_seed: u64,
    pub train_seed: u64,
}

/// Self/non-self score scatter for one model, plot-ready.
#[derive(Debug, Clone)]
pub struct ScoreScatter {
    pub model_id: String,
    pub architecture: Architecture,
    /// `(score, class)` pairs; class 1 = self, 0 = non-self.
    pub points: Vec<(f64, u8)>,
}

/// Everything a benchmark produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    /// Sorted by (architecture, model id, iteration).
    pub rows: Vec<ExperimentRow>,
    pub per_model: Vec<report::PerModelRow>,
    pub aggregates: Vec<report::AggregateRow>,
    pub significance: Vec<report::SignificanceRow>,
    /// First-iteration score scatters per model.
    pub scatters: Vec<ScoreScatter>,
    /// Human-readable notices for skipped units.
    pub skipped: Vec<String>,
}

/// Run row computations on a bounded rayon pool when a worker count is
/// given, otherwise on the global pool.
pub(crate) fn with_worker_pool<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
