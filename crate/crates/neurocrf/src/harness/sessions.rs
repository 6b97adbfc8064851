//! User-authentication benchmark over an event log.
//!
//! Each user's events are segmented into sessions, filtered to the
//! modeled length band, and split by time into train and test periods.
//! The n-gram vocabulary is built on the user's train period only, so
//! no test text leaks into the features. A model trained on the user's
//! train sequences is evaluated against the user's own test sequences
//! (self) and every other user's test sequences (non-self), the latter
//! featurized with the target user's vocabulary — an impostor is seen
//! through the model owner's eyes.

use std::collections::BTreeMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;

use crate::data::sessions::{
    build_ngram_vocab, corpus_alphabet, segment_sessions, sequences_to_dataset,
    sessions_to_sequences, temporal_split, SessionEvent, MAX_SESSION_LEN, MIN_SESSION_LEN,
    NGRAMS_PER_LABEL, SESSION_GAP_SECONDS,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_with_scores, MetricsReport};
use crate::harness::report::{assemble, sanitize};
use crate::harness::seeds::derive_seeds;
use crate::harness::{
    with_worker_pool, BenchmarkConfig, BenchmarkOutput, ExperimentRow, ScoreScatter,
};
use crate::training::{train, TrainConfig};
use crate::types::{Architecture, Dataset, HyperParams, LabeledSequence};

/// Knobs of the per-user data pipeline (not the training loop).
#[derive(Debug, Clone)]
pub struct SessionPipelineConfig {
    pub gap_seconds: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub n_range: RangeInclusive<usize>,
    pub ngram_cap: usize,
    pub train_fraction: f64,
}

impl Default for SessionPipelineConfig {
    fn default() -> Self {
        SessionPipelineConfig {
            gap_seconds: SESSION_GAP_SECONDS,
            min_len: MIN_SESSION_LEN,
            max_len: MAX_SESSION_LEN,
            n_range: 1..=2,
            ngram_cap: NGRAMS_PER_LABEL,
            train_fraction: 0.9,
        }
    }
}

impl SessionPipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len < 1 || self.max_len < self.min_len {
            return Err(Error::invalid("session length band empty"));
        }
        if self.n_range.is_empty() {
            return Err(Error::invalid("n-gram range empty"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train fraction outside (0, 1)"));
        }
        Ok(())
    }
}

/// One user's fully prepared experiment: datasets plus the manifests
/// that document how they were derived.
#[derive(Debug, Clone)]
pub struct UserExperiment {
    pub user: String,
    pub train: Dataset,
    pub self_test: Dataset,
    pub nonself_test: Dataset,
    /// Deterministic description of the n-gram vocabulary.
    pub vocab_manifest: String,
    /// Deterministic description of the train/test sequence split.
    pub split_manifest: String,
}

/// All prepared users (sorted by user id) plus skip notices.
#[derive(Debug, Clone)]
pub struct SessionExperimentSet {
    pub users: Vec<UserExperiment>,
    pub skipped: Vec<String>,
}

fn split_manifest(user: &str, train: &Dataset, test: &Dataset) -> String {
    let mut out = String::from("session-split v1\n");
    out.push_str(&format!("user {user}\n"));
    for (tag, ds) in [("train", train), ("test", test)] {
        out.push_str(&format!("{tag} {}\n", ds.sequences.len()));
        for seq in &ds.sequences {
            out.push_str(&format!("{} {}\n", seq.sequence_id, seq.observations.len()));
        }
    }
    out
}

/// Segment, filter, split, and featurize every user of an event log.
///
/// Users whose usable sequences cannot produce a non-empty temporal
/// test split are skipped with a notice, as are users left without any
/// non-self test sequences.
pub fn prepare_session_experiments(
    events: &[SessionEvent],
    pipeline: &SessionPipelineConfig,
) -> Result<SessionExperimentSet> {
    pipeline.validate()?;
    if events.is_empty() {
        return Err(Error::InsufficientData("event log is empty".into()));
    }
    let alphabet = corpus_alphabet(events)?;

    let mut by_user: BTreeMap<&str, Vec<SessionEvent>> = BTreeMap::new();
    for event in events {
        by_user.entry(&event.user).or_default().push(event.clone());
    }

    let mut skipped = Vec::new();
    // First pass: per-user usable sequences and their temporal split.
    let mut splits: BTreeMap<&str, (Vec<Vec<SessionEvent>>, Vec<Vec<SessionEvent>>)> =
        BTreeMap::new();
    for (user, user_events) in &by_user {
        let sessions = segment_sessions(user_events, pipeline.gap_seconds);
        let usable = sessions_to_sequences(&sessions, pipeline.min_len, pipeline.max_len);
        if usable.len() < 2 {
            skipped.push(format!(
                "{user}: only {} usable sequence(s) of length {}..={}",
                usable.len(),
                pipeline.min_len,
                pipeline.max_len
            ));
            continue;
        }
        let (train_seqs, test_seqs) = temporal_split(usable, pipeline.train_fraction)?;
        if test_seqs.is_empty() {
            skipped.push(format!(
                "{user}: {} usable sequences leave an empty test period",
                train_seqs.len()
            ));
            continue;
        }
        splits.insert(user, (train_seqs, test_seqs));
    }

    // Second pass: featurize with each retained user's own vocabulary.
    let mut users = Vec::new();
    for (user, (train_seqs, test_seqs)) in &splits {
        let train_events: Vec<SessionEvent> =
            train_seqs.iter().flatten().cloned().collect();
        let vocab = build_ngram_vocab(&train_events, pipeline.n_range.clone(), pipeline.ngram_cap);

        let train = sequences_to_dataset(user, train_seqs, &vocab, &alphabet)?;
        let self_test = sequences_to_dataset(user, test_seqs, &vocab, &alphabet)?;

        let mut nonself_seqs: Vec<LabeledSequence> = Vec::new();
        for (other, (_, other_tests)) in &splits {
            if other == user {
                continue;
            }
            let ds = sequences_to_dataset(other, other_tests, &vocab, &alphabet)?;
            nonself_seqs.extend(ds.sequences);
        }
        if nonself_seqs.is_empty() {
            skipped.push(format!("{user}: no other users' test sequences to impost"));
            continue;
        }
        let nonself_test = Dataset::new(alphabet.clone(), nonself_seqs, vocab.observation_dim())?;

        let split_manifest = split_manifest(user, &train, &self_test);
        users.push(UserExperiment {
            user: user.to_string(),
            train,
            self_test,
            nonself_test,
            vocab_manifest: vocab.to_manifest(),
            split_manifest,
        });
    }
    Ok(SessionExperimentSet { users, skipped })
}

/// Train and evaluate one user's model; seeds from the manifest
/// reproduce the corresponding row bit for bit (the pipeline itself is
/// deterministic, so only the training seed matters here).
pub fn run_session_experiment(
    experiment: &UserExperiment,
    architecture: Architecture,
    hyper: &HyperParams,
    train_seed: u64,
) -> Result<(MetricsReport, Vec<f64>, Vec<f64>)> {
    let mut config = TrainConfig::new(architecture);
    config.hyper = hyper.clone();
    config.model_id = experiment.user.clone();
    let (model, _) = train(&experiment.train, &config, train_seed)?;
    evaluate_with_scores(&model, &experiment.self_test, &experiment.nonself_test)
}

/// Run the full user benchmark: every prepared user × architecture ×
/// iteration, in parallel, with canonical output ordering.
pub fn run_sessions_benchmark(
    events: &[SessionEvent],
    config: &BenchmarkConfig,
    pipeline: &SessionPipelineConfig,
) -> Result<BenchmarkOutput> {
    config.validate()?;
    let prepared = prepare_session_experiments(events, pipeline)?;
    let mut skipped = prepared.skipped;

    let selected: Vec<&UserExperiment> = prepared
        .users
        .iter()
        .filter(|u| config.wants_model(&u.user))
        .collect();

    let mut units = Vec::new();
    for experiment in &selected {
        for &architecture in &config.architectures {
            for iteration in 0..config.iterations {
                units.push((*experiment, architecture, iteration));
            }
        }
    }

    let results: Result<Vec<(ExperimentRow, Option<ScoreScatter>)>> =
        with_worker_pool(config.workers, || {
            units
                .par_iter()
                .map(|(experiment, architecture, iteration)| {
                    let seeds = derive_seeds(config.base_seed, *iteration, &experiment.user);
                    let (metrics, self_scores, nonself_scores) = run_session_experiment(
                        experiment,
                        *architecture,
                        &config.hyper,
                        seeds.train_seed,
                    )?;
                    let row = ExperimentRow {
                        model_id: experiment.user.clone(),
                        architecture: *architecture,
                        iteration: *iteration,
                        metrics,
                        partition_seed: seeds.partition_seed,
                        train_seed: seeds.train_seed,
                    };
                    let scatter = (*iteration == 0).then(|| ScoreScatter {
                        model_id: experiment.user.clone(),
                        architecture: *architecture,
                        points: self_scores
                            .iter()
                            .map(|&s| (s, 1u8))
                            .chain(nonself_scores.iter().map(|&s| (s, 0u8)))
                            .collect(),
                    });
                    Ok((row, scatter))
                })
                .collect()
        })?;
    let results = results?;

    let mut rows = Vec::with_capacity(results.len());
    let mut scatters = Vec::new();
    for (row, scatter) in results {
        rows.push(row);
        scatters.extend(scatter);
    }
    // Session-pipeline skips are data facts, not unit outcomes; keep
    // them even when a model filter narrowed the run.
    skipped.sort();
    Ok(assemble(rows, scatters, skipped))
}

/// Persist each user's vocabulary and split manifests under
/// `out_dir/vocab/` and `out_dir/splits/`.
pub fn write_session_manifests(out_dir: &Path, prepared: &SessionExperimentSet) -> Result<()> {
    let vocab_dir = out_dir.join("vocab");
    let split_dir = out_dir.join("splits");
    for dir in [&vocab_dir, &split_dir] {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for experiment in &prepared.users {
        let stem = sanitize(&experiment.user);
        let vocab_path = vocab_dir.join(format!("{stem}.txt"));
        fs::write(&vocab_path, &experiment.vocab_manifest)
            .map_err(|e| Error::io(&vocab_path, e))?;
        let split_path = split_dir.join(format!("{stem}.txt"));
        fs::write(&split_path, &experiment.split_manifest)
            .map_err(|e| Error::io(&split_path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{synthetic_sessions, SyntheticSessionsConfig};

    fn tiny_log() -> Vec<SessionEvent> {
        let config = SyntheticSessionsConfig {
            users: 3,
            sessions_per_user: 30,
            seed: 5,
            ..SyntheticSessionsConfig::default()
        };
        synthetic_sessions(&config)
    }

    fn quick_config() -> BenchmarkConfig {
        let mut config = BenchmarkConfig::default();
        config.architectures = vec![Architecture::CrfPrcpt];
        config.iterations = 1;
        config.hyper.max_sgd_examples = 30;
        config.workers = Some(2);
        config
    }

    #[test]
    fn preparation_builds_disjoint_periods_per_user() {
        let events = tiny_log();
        let prepared =
            prepare_session_experiments(&events, &SessionPipelineConfig::default()).unwrap();
        assert_eq!(prepared.users.len(), 3);
        for experiment in &prepared.users {
            assert!(!experiment.train.is_empty());
            assert!(!experiment.self_test.is_empty());
            assert!(!experiment.nonself_test.is_empty());
            // Temporal split: every train sequence starts no later than
            // every test sequence (ids embed the start timestamp).
            let start_of = |id: &str| -> i64 {
                id.split('@').nth(1).unwrap().split('#').next().unwrap().parse().unwrap()
            };
            let max_train = experiment
                .train
                .sequences
                .iter()
                .map(|s| start_of(&s.sequence_id))
                .max()
                .unwrap();
            let min_test = experiment
                .self_test
                .sequences
                .iter()
                .map(|s| start_of(&s.sequence_id))
                .min()
                .unwrap();
            assert!(max_train <= min_test);
            // Non-self sequences come from the other users.
            assert!(experiment
                .nonself_test
                .sequences
                .iter()
                .all(|s| !s.sequence_id.starts_with(&experiment.user)));
            assert!(experiment.vocab_manifest.starts_with("ngram-vocab v1"));
            assert!(experiment.split_manifest.starts_with("session-split v1"));
        }
    }

    #[test]
    fn sparse_user_is_skipped_with_notice() {
        let mut events = tiny_log();
        // A user with three short sessions: none reaches the length
        // band, so the user cannot be modeled.
        for k in 0..3 {
            for j in 0..3 {
                events.push(SessionEvent {
                    user: "visitor".into(),
                    timestamp: 1_704_067_200 + k * 50_000 + j * 60,
                    label: "news".into(),
                    text: "idle visit".into(),
                });
            }
        }
        let prepared =
            prepare_session_experiments(&events, &SessionPipelineConfig::default()).unwrap();
        assert_eq!(prepared.users.len(), 3);
        assert!(prepared
            .skipped
            .iter()
            .any(|n| n.starts_with("visitor:")));
    }

    #[test]
    fn benchmark_deterministic_and_rederivable() {
        let events = tiny_log();
        let config = quick_config();
        let pipeline = SessionPipelineConfig::default();
        let a = run_sessions_benchmark(&events, &config, &pipeline).unwrap();
        let b = run_sessions_benchmark(&events, &config, &pipeline).unwrap();
        let lines: Vec<String> = a.rows.iter().map(|r| r.results_line()).collect();
        assert_eq!(
            lines,
            b.rows.iter().map(|r| r.results_line()).collect::<Vec<_>>()
        );
        assert_eq!(a.rows.len(), 3);

        let prepared = prepare_session_experiments(&events, &pipeline).unwrap();
        for row in &a.rows {
            let experiment = prepared
                .users
                .iter()
                .find(|u| u.user == row.model_id)
                .unwrap();
            let (metrics, _, _) = run_session_experiment(
                experiment,
                row.architecture,
                &config.hyper,
                row.train_seed,
            )
            .unwrap();
            assert_eq!(metrics.csv_fields(), row.metrics.csv_fields());
        }
    }

    #[test]
    fn manifests_written_per_user() {
        let events = tiny_log();
        let prepared =
            prepare_session_experiments(&events, &SessionPipelineConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_session_manifests(dir.path(), &prepared).unwrap();
        for experiment in &prepared.users {
            let stem = sanitize(&experiment.user);
            assert!(dir.path().join("vocab").join(format!("{stem}.txt")).exists());
            let split = std::fs::read_to_string(
                dir.path().join("splits").join(format!("{stem}.txt")),
            )
            .unwrap();
            assert_eq!(split, experiment.split_manifest);
        }
    }
}
