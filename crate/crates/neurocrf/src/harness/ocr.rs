//! Word-authentication benchmark over an assembled OCR corpus.
//!
//! A model is built for each word and tested against its own held-out
//! instances (self) and a sample of same-length instances of other
//! words (non-self). Units are (word, architecture, iteration); the
//! partition seed depends only on (word, iteration), so all
//! architectures see identical partitions and the significance tests
//! compare like with like.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::ocr::{partition_word_experiment, sequence_word};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_with_scores, MetricsReport};
use crate::harness::report::assemble;
use crate::harness::seeds::derive_seeds;
use crate::harness::{
    with_worker_pool, BenchmarkConfig, BenchmarkOutput, ExperimentRow, ScoreScatter,
};
use crate::training::{train, TrainConfig};
use crate::types::{Architecture, Dataset, HyperParams, LabeledSequence};

/// Word-grouped view of an OCR corpus, the input to experiment units.
#[derive(Debug, Clone)]
pub struct OcrCorpusIndex {
    alphabet: crate::types::LabelAlphabet,
    feature_dim: usize,
    by_word: BTreeMap<String, Vec<LabeledSequence>>,
}

impl OcrCorpusIndex {
    /// Group a corpus by word string (sorted, so iteration order is
    /// canonical).
    pub fn build(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::invalid("empty corpus"));
        }
        let mut by_word: BTreeMap<String, Vec<LabeledSequence>> = BTreeMap::new();
        for seq in &dataset.sequences {
            by_word
                .entry(sequence_word(&dataset.alphabet, seq))
                .or_default()
                .push(seq.clone());
        }
        Ok(OcrCorpusIndex {
            alphabet: dataset.alphabet.clone(),
            feature_dim: dataset.feature_dim,
            by_word,
        })
    }

    /// Distinct words in sorted order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.by_word.keys().map(String::as_str)
    }

    pub fn word_instances(&self, word: &str) -> Option<&[LabeledSequence]> {
        self.by_word.get(word).map(Vec::as_slice)
    }

    /// All instances of *other* words with the same length; the
    /// impostor pool for `word`.
    pub fn same_length_pool(&self, word: &str) -> Vec<LabeledSequence> {
        self.by_word
            .iter()
            .filter(|(w, _)| w.as_str() != word && w.chars().count() == word.chars().count())
            .flat_map(|(_, seqs)| seqs.iter().cloned())
            .collect()
    }

    fn dataset_with(&self, sequences: Vec<LabeledSequence>) -> Result<Dataset> {
        Dataset::new(self.alphabet.clone(), sequences, self.feature_dim)
    }
}

/// One fully seeded experiment unit: partition, train, evaluate.
///
/// Returns the metrics, the self and non-self score lists, and whether
/// the impostor pool fell short of the requested sample size. Calling
/// this with seeds from the manifest reproduces the corresponding
/// results row bit for bit.
pub fn run_ocr_experiment(
    index: &OcrCorpusIndex,
    word: &str,
    architecture: Architecture,
    hyper: &HyperParams,
    train_ratio: f64,
    nonself_count: usize,
    partition_seed: u64,
    train_seed: u64,
) -> Result<(MetricsReport, Vec<f64>, Vec<f64>, bool)> {
    let instances = index
        .word_instances(word)
        .ok_or_else(|| Error::invalid(format!("word {word:?} not in the corpus")))?;
    let pool = index.same_length_pool(word);
    let partition =
        partition_word_experiment(instances, &pool, train_ratio, nonself_count, partition_seed)?;
    if partition.self_test.is_empty() {
        return Err(Error::ExperimentSkip(format!(
            "word {word:?} has too few instances for a held-out test"
        )));
    }
    let shortfall = partition.nonself_shortfall;

    let train_set = index.dataset_with(partition.train)?;
    let mut config = TrainConfig::new(architecture);
    config.hyper = hyper.clone();
    config.model_id = word.to_string();
    let (model, _) = train(&train_set, &config, train_seed)?;

    let self_test = index.dataset_with(partition.self_test)?;
    let nonself_test = index.dataset_with(partition.nonself_sample)?;
    let (metrics, self_scores, nonself_scores) =
        evaluate_with_scores(&model, &self_test, &nonself_test)?;
    Ok((metrics, self_scores, nonself_scores, shortfall))
}

/// Run the full word benchmark: every word × architecture × iteration,
/// in parallel, with canonical output ordering.
pub fn run_ocr_benchmark(dataset: &Dataset, config: &BenchmarkConfig) -> Result<BenchmarkOutput> {
    config.validate()?;
    let index = OcrCorpusIndex::build(dataset)?;

    let mut skipped = Vec::new();
    let mut words = Vec::new();
    for word in index.words() {
        if let Some(len) = config.length_filter {
            if word.chars().count() != len {
                continue;
            }
        }
        if !config.wants_model(word) {
            continue;
        }
        if index.same_length_pool(word).is_empty() {
            skipped.push(format!("{word}: no other words of the same length"));
            continue;
        }
        let n = index.word_instances(word).map_or(0, <[_]>::len);
        if n < 2 || (config.train_ratio * n as f64).ceil() as usize >= n {
            skipped.push(format!("{word}: too few instances for a held-out test"));
            continue;
        }
        words.push(word.to_string());
    }

    let mut units = Vec::new();
    for word in &words {
        for &architecture in &config.architectures {
            for iteration in 0..config.iterations {
                units.push((word.clone(), architecture, iteration));
            }
        }
    }

    let results: Result<Vec<(ExperimentRow, Option<ScoreScatter>, bool)>> =
        with_worker_pool(config.workers, || {
            units
                .par_iter()
                .map(|(word, architecture, iteration)| {
                    let seeds = derive_seeds(config.base_seed, *iteration, word);
                    let (metrics, self_scores, nonself_scores, shortfall) = run_ocr_experiment(
                        &index,
                        word,
                        *architecture,
                        &config.hyper,
                        config.train_ratio,
                        config.nonself_count,
                        seeds.partition_seed,
                        seeds.train_seed,
                    )?;
                    let row = ExperimentRow {
                        model_id: word.clone(),
                        architecture: *architecture,
                        iteration: *iteration,
                        metrics,
                        partition_seed: seeds.partition_seed,
                        train_seed: seeds.train_seed,
                    };
                    let scatter = (*iteration == 0).then(|| ScoreScatter {
                        model_id: word.clone(),
                        architecture: *architecture,
                        points: self_scores
                            .iter()
                            .map(|&s| (s, 1u8))
                            .chain(nonself_scores.iter().map(|&s| (s, 0u8)))
                            .collect(),
                    });
                    Ok((row, scatter, shortfall))
                })
                .collect()
        })?;
    let results = results?;

    let mut rows = Vec::with_capacity(results.len());
    let mut scatters = Vec::new();
    let mut short_words: Vec<String> = Vec::new();
    for (row, scatter, shortfall) in results {
        if shortfall && !short_words.contains(&row.model_id) {
            short_words.push(row.model_id.clone());
        }
        rows.push(row);
        scatters.extend(scatter);
    }
    short_words.sort();
    for word in short_words {
        skipped.push(format!(
            "{word}: impostor pool smaller than the requested sample"
        ));
    }
    Ok(assemble(rows, scatters, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{synthetic_ocr, SyntheticOcrConfig};

    fn tiny_corpus() -> Dataset {
        let config = SyntheticOcrConfig {
            shape: vec![(3, 3, 27), (4, 2, 12)],
            seed: 11,
            words: crate::data::synthetic::WordInventory::Random,
            ..SyntheticOcrConfig::default()
        };
        synthetic_ocr(&config).unwrap()
    }

    fn quick_config() -> BenchmarkConfig {
        let mut config = BenchmarkConfig::default();
        config.architectures = vec![Architecture::CrfPrcpt];
        config.iterations = 2;
        config.hyper.max_sgd_examples = 40;
        config.nonself_count = 10;
        config.workers = Some(2);
        config
    }

    #[test]
    fn index_groups_words_and_pools() {
        let corpus = tiny_corpus();
        let index = OcrCorpusIndex::build(&corpus).unwrap();
        let words: Vec<&str> = index.words().collect();
        assert_eq!(words.len(), 5);
        let three: Vec<&str> = words.iter().copied().filter(|w| w.len() == 3).collect();
        assert_eq!(three.len(), 3);
        // A length-3 word's pool holds every instance of the other two.
        let pool = index.same_length_pool(three[0]);
        assert_eq!(pool.len(), 27 - index.word_instances(three[0]).unwrap().len());
        assert!(pool
            .iter()
            .all(|s| sequence_word(&corpus.alphabet, s) != three[0]));
    }

    #[test]
    fn benchmark_is_deterministic_and_canonical() {
        let corpus = tiny_corpus();
        let config = quick_config();
        let a = run_ocr_benchmark(&corpus, &config).unwrap();
        let b = run_ocr_benchmark(&corpus, &config).unwrap();
        let lines_a: Vec<String> = a.rows.iter().map(|r| r.results_line()).collect();
        let lines_b: Vec<String> = b.rows.iter().map(|r| r.results_line()).collect();
        assert_eq!(lines_a, lines_b);
        assert_eq!(a.rows.len(), 5 * 2);

        let mut sorted = lines_a.clone();
        sorted.sort();
        assert_eq!(lines_a, sorted, "rows not in canonical order");
        // Impostor pools here are smaller than the requested sample.
        assert!(!a.skipped.is_empty());
    }

    #[test]
    fn any_row_rederives_from_its_seeds() {
        let corpus = tiny_corpus();
        let config = quick_config();
        let output = run_ocr_benchmark(&corpus, &config).unwrap();
        let index = OcrCorpusIndex::build(&corpus).unwrap();
        for row in output.rows.iter().step_by(3) {
            let (metrics, _, _, _) = run_ocr_experiment(
                &index,
                &row.model_id,
                row.architecture,
                &config.hyper,
                config.train_ratio,
                config.nonself_count,
                row.partition_seed,
                row.train_seed,
            )
            .unwrap();
            assert_eq!(
                metrics.csv_fields(),
                row.metrics.csv_fields(),
                "row for {} not reproducible",
                row.model_id
            );
        }
    }

    #[test]
    fn filters_restrict_the_unit_set() {
        let corpus = tiny_corpus();
        let mut config = quick_config();
        config.iterations = 1;
        config.length_filter = Some(4);
        let output = run_ocr_benchmark(&corpus, &config).unwrap();
        assert_eq!(output.rows.len(), 2);
        assert!(output.rows.iter().all(|r| r.model_id.len() == 4));

        let keep = output.rows[0].model_id.clone();
        config.length_filter = None;
        config.model_filter = Some(vec![keep.clone()]);
        let output = run_ocr_benchmark(&corpus, &config).unwrap();
        assert_eq!(output.rows.len(), 1);
        assert_eq!(output.rows[0].model_id, keep);
    }

    #[test]
    fn lonely_length_is_skipped_with_notice() {
        let config = SyntheticOcrConfig {
            shape: vec![(3, 2, 12), (5, 1, 6)],
            seed: 3,
            words: crate::data::synthetic::WordInventory::Random,
            ..SyntheticOcrConfig::default()
        };
        let corpus = synthetic_ocr(&config).unwrap();
        let mut bench = quick_config();
        bench.iterations = 1;
        let output = run_ocr_benchmark(&corpus, &bench).unwrap();
        assert_eq!(output.rows.len(), 2, "only the length-3 words run");
        assert!(output
            .skipped
            .iter()
            .any(|n| n.contains("no other words of the same length")));
    }

    #[test]
    fn scatters_cover_iteration_zero_models() {
        let corpus = tiny_corpus();
        let mut config = quick_config();
        config.iterations = 2;
        let output = run_ocr_benchmark(&corpus, &config).unwrap();
        assert_eq!(output.scatters.len(), 5);
        for scatter in &output.scatters {
            assert!(scatter.points.iter().any(|&(_, c)| c == 1));
            assert!(scatter.points.iter().any(|&(_, c)| c == 0));
        }
    }
}
