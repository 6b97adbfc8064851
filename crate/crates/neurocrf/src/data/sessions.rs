//! Event-log sessions: segmentation, n-gram vocabularies, featurization
//! and temporal splitting.
//!
//! The input is a generic per-user event log: `(user, timestamp, label,
//! text)` records, e.g. posts tagged with a category and a subject line.
//! Events split into sessions at pauses longer than one hour; sessions
//! of 4–6 events become training sequences whose observations encode
//! hour-of-day, day-of-week and the presence of the most common per-label
//! word n-grams from the subject text. All derived structures are
//! deterministic functions of their inputs so experiments reproduce
//! exactly.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use chrono::{DateTime, Datelike, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, LabelAlphabet, LabeledSequence, Observation};

/// Pause (seconds) that ends a session.
pub const SESSION_GAP_SECONDS: u64 = 3600;
/// Shortest session kept as a training sequence.
pub const MIN_SESSION_LEN: usize = 4;
/// Longest kept length; longer sessions are truncated to this.
pub const MAX_SESSION_LEN: usize = 6;
/// Most common n-grams kept per label.
pub const NGRAMS_PER_LABEL: usize = 100;
/// Hour-of-day one-hot block plus day-of-week one-hot block.
pub const TIME_FEATURE_BINS: usize = 24 + 7;

/// One timestamped, labeled, captioned user action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub user: String,
    /// Seconds since the Unix epoch, non-negative.
    pub timestamp: i64,
    pub label: String,
    pub text: String,
}

/// A maximal run of one user's events with no gap above the delimiter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user: String,
    pub events: Vec<SessionEvent>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn start_timestamp(&self) -> i64 {
        self.events[0].timestamp
    }
}

/// Read an event log: comma-separated with a `user,timestamp,label,text`
/// header, text quoted as needed.
pub fn load_events(path: impl AsRef<Path>) -> Result<Vec<SessionEvent>> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| csv_error(&path_str, &e))?;
    let mut events = Vec::new();
    for record in reader.deserialize::<SessionEvent>() {
        let event = record.map_err(|e| csv_error(&path_str, &e))?;
        if event.timestamp < 0 {
            return Err(Error::invalid(format!(
                "negative timestamp {} for user {}",
                event.timestamp, event.user
            )));
        }
        events.push(event);
    }
    Ok(events)
}

fn csv_error(path: &str, err: &csv::Error) -> Error {
    let line = err
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or_default();
    Error::Parse {
        path: path.to_string(),
        line,
        message: err.to_string(),
    }
}

/// Write an event log in the format [`load_events`] reads.
pub fn write_events(events: &[SessionEvent], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let path_str = path.display().to_string();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(&path_str, &e))?;
    for event in events {
        writer.serialize(event).map_err(|e| csv_error(&path_str, &e))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path_str, e))
}

/// Split one user's events into sessions: sort by timestamp, then start
/// a new session whenever the gap from the previous event exceeds
/// `gap_seconds`.
pub fn segment_sessions(events: &[SessionEvent], gap_seconds: u64) -> Vec<Session> {
    if events.is_empty() {
        return Vec::new();
    }
    debug_assert!(
        events.iter().all(|e| e.user == events[0].user),
        "segment_sessions expects a single user's events"
    );
    let mut sorted: Vec<SessionEvent> = events.to_vec();
    sorted.sort_by_key(|e| e.timestamp);

    let mut sessions = Vec::new();
    let mut current: Vec<SessionEvent> = Vec::new();
    for event in sorted {
        if let Some(last) = current.last() {
            if (event.timestamp - last.timestamp) as u64 > gap_seconds {
                sessions.push(Session {
                    user: last.user.clone(),
                    events: std::mem::take(&mut current),
                });
            }
        }
        current.push(event);
    }
    sessions.push(Session {
        user: current[0].user.clone(),
        events: current,
    });
    sessions
}

/// Keep sessions of length at least `min_len`; truncate longer ones to
/// their first `max_len` events.
pub fn sessions_to_sequences(
    sessions: &[Session],
    min_len: usize,
    max_len: usize,
) -> Vec<Vec<SessionEvent>> {
    sessions
        .iter()
        .filter(|s| s.len() >= min_len)
        .map(|s| s.events[..s.len().min(max_len)].to_vec())
        .collect()
}

/// Lowercased word n-grams of `text` for every n in the range, joined
/// with single spaces.
pub fn extract_ngrams(text: &str, n_range: &RangeInclusive<usize>) -> Vec<String> {
    let tokens: Vec<String> = text
        .split_whitespace()
        .map(str::to_lowercase)
        .collect();
    let mut out = Vec::new();
    for n in n_range.clone() {
        if n == 0 || n > tokens.len() {
            continue;
        }
        for window in tokens.windows(n) {
            out.push(window.join(" "));
        }
    }
    out
}

/// Per-label most-common n-grams plus the global feature index they map
/// to. Construction is deterministic: frequency ties break
/// lexicographically and the global index is the sorted union of all
/// kept n-grams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramVocabulary {
    per_label: BTreeMap<String, Vec<(String, usize)>>,
    ordered: Vec<String>,
    index: HashMap<String, usize>,
    n_range: RangeInclusive<usize>,
}

impl NgramVocabulary {
    /// Number of n-gram feature slots.
    pub fn len(&self) -> usize {
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    /// Width of a featurized observation: time bins plus n-gram slots.
    pub fn observation_dim(&self) -> usize {
        TIME_FEATURE_BINS + self.len()
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    /// Feature-slot order: lexicographically sorted kept n-grams.
    pub fn ngrams(&self) -> &[String] {
        &self.ordered
    }

    /// Kept `(ngram, count)` lists per label, most frequent first.
    pub fn per_label(&self) -> &BTreeMap<String, Vec<(String, usize)>> {
        &self.per_label
    }

    pub fn n_range(&self) -> &RangeInclusive<usize> {
        &self.n_range
    }

    /// Deterministic text manifest for reproducibility records.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        writeln!(out, "ngram-vocab v1").unwrap();
        writeln!(out, "range {} {}", self.n_range.start(), self.n_range.end()).unwrap();
        writeln!(out, "features {}", self.ordered.len()).unwrap();
        for (i, ng) in self.ordered.iter().enumerate() {
            writeln!(out, "{i}\t{ng}").unwrap();
        }
        for (label, kept) in &self.per_label {
            writeln!(out, "label {label} {}", kept.len()).unwrap();
            for (ng, count) in kept {
                writeln!(out, "{count}\t{ng}").unwrap();
            }
        }
        out
    }
}

/// Count n-grams per label over training-period events and keep the
/// `cap_per_label` most common for each label.
pub fn build_ngram_vocab(
    events: &[SessionEvent],
    n_range: RangeInclusive<usize>,
    cap_per_label: usize,
) -> NgramVocabulary {
    let mut counts: BTreeMap<&str, HashMap<String, usize>> = BTreeMap::new();
    for event in events {
        let bucket = counts.entry(event.label.as_str()).or_default();
        for ngram in extract_ngrams(&event.text, &n_range) {
            *bucket.entry(ngram).or_default() += 1;
        }
    }
    let mut per_label = BTreeMap::new();
    for (label, bucket) in counts {
        let mut ranked: Vec<(String, usize)> = bucket.into_iter().collect();
        // most frequent first; ties lexicographic for determinism
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap_per_label);
        per_label.insert(label.to_string(), ranked);
    }
    let mut ordered: Vec<String> = per_label
        .values()
        .flatten()
        .map(|(ng, _)| ng.clone())
        .collect();
    ordered.sort();
    ordered.dedup();
    let index = ordered
        .iter()
        .enumerate()
        .map(|(i, ng)| (ng.clone(), i))
        .collect();
    NgramVocabulary {
        per_label,
        ordered,
        index,
        n_range,
    }
}

/// Binary observation `[hour one-hot ⊕ weekday one-hot ⊕ n-gram
/// indicators]`. Hours and weekdays are UTC; Monday is day 0.
pub fn featurize_event(event: &SessionEvent, vocab: &NgramVocabulary) -> Result<Observation> {
    let when = DateTime::from_timestamp(event.timestamp, 0).ok_or_else(|| {
        Error::invalid(format!("timestamp {} out of range", event.timestamp))
    })?;
    let mut bits = vec![0u8; vocab.observation_dim()];
    bits[when.hour() as usize] = 1;
    bits[24 + when.weekday().num_days_from_monday() as usize] = 1;
    for ngram in extract_ngrams(&event.text, vocab.n_range()) {
        if let Some(slot) = vocab.index_of(&ngram) {
            bits[TIME_FEATURE_BINS + slot] = 1;
        }
    }
    Ok(Observation::from_bits(&bits))
}

/// Earliest `⌈fraction·N⌉` sequences (by first-event timestamp) to
/// train, the rest to test. The sort is stable, so equal timestamps
/// preserve input order.
pub fn temporal_split(
    sequences: Vec<Vec<SessionEvent>>,
    train_fraction: f64,
) -> Result<(Vec<Vec<SessionEvent>>, Vec<Vec<SessionEvent>>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if sequences.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "temporal split needs at least 2 sequences, found {}",
            sequences.len()
        )));
    }
    let mut ordered = sequences;
    ordered.sort_by_key(|s| s.first().map(|e| e.timestamp));
    let n_train = (train_fraction * ordered.len() as f64).ceil() as usize;
    let test = ordered.split_off(n_train.min(ordered.len()));
    Ok((ordered, test))
}

fn entropy_bits(counts: impl IntoIterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: usize = counts.iter().sum();
    let total = total as f64;
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p.log2()
        })
        .sum::<f64>()
}

fn label_counts<'a>(labels: impl Iterator<Item = &'a str>) -> HashMap<&'a str, usize> {
    let mut counts = HashMap::new();
    for label in labels {
        *counts.entry(label).or_insert(0) += 1;
    }
    counts
}

/// Shannon entropy (bits) of the label distribution at one position,
/// over sessions long enough to reach it.
pub fn label_entropy_at_position(sessions: &[Session], position: usize) -> Result<f64> {
    let counts = label_counts(
        sessions
            .iter()
            .filter_map(|s| s.events.get(position))
            .map(|e| e.label.as_str()),
    );
    if counts.is_empty() {
        return Err(Error::Undefined(format!(
            "no session reaches position {position}"
        )));
    }
    Ok(entropy_bits(counts.into_values()))
}

/// Shannon entropy (bits) of all labels pooled from sessions of exactly
/// the given length.
pub fn label_entropy_for_length(sessions: &[Session], length: usize) -> Result<f64> {
    let counts = label_counts(
        sessions
            .iter()
            .filter(|s| s.len() == length)
            .flat_map(|s| s.events.iter())
            .map(|e| e.label.as_str()),
    );
    if counts.is_empty() {
        return Err(Error::Undefined(format!(
            "no sessions of length {length}"
        )));
    }
    Ok(entropy_bits(counts.into_values()))
}

/// Number of sessions per length, ascending.
pub fn length_histogram(sessions: &[Session]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for s in sessions {
        *hist.entry(s.len()).or_insert(0) += 1;
    }
    hist
}

/// Sorted distinct labels across a whole event log; the shared decode
/// alphabet for all users' models.
pub fn corpus_alphabet(events: &[SessionEvent]) -> Result<LabelAlphabet> {
    let mut labels: Vec<String> = events.iter().map(|e| e.label.clone()).collect();
    labels.sort();
    labels.dedup();
    LabelAlphabet::new(labels)
}

/// Featurize event sequences into a decodable dataset. Every event's
/// label must be present in the alphabet.
pub fn sequences_to_dataset(
    user: &str,
    event_seqs: &[Vec<SessionEvent>],
    vocab: &NgramVocabulary,
    alphabet: &LabelAlphabet,
) -> Result<Dataset> {
    let mut sequences = Vec::with_capacity(event_seqs.len());
    for (i, events) in event_seqs.iter().enumerate() {
        let mut observations = Vec::with_capacity(events.len());
        let mut labels = Vec::with_capacity(events.len());
        for event in events {
            observations.push(featurize_event(event, vocab)?);
            labels.push(alphabet.index_of(&event.label).ok_or_else(|| {
                Error::invalid(format!(
                    "label {:?} not in the decode alphabet",
                    event.label
                ))
            })?);
        }
        let start = events.first().map(|e| e.timestamp).unwrap_or_default();
        sequences.push(LabeledSequence::new(
            observations,
            labels,
            format!("{user}@{start}#{i}"),
        )?);
    }
    Dataset::new(alphabet.clone(), sequences, vocab.observation_dim())
}
