//! Seeded synthetic corpora for experiments and tests.
//!
//! Two generators live here. The letter-image generator builds a corpus
//! with the same shape as the public handwriting set (word lengths,
//! distinct words per length, instances per length): letters are drawn
//! from a shared stroke dictionary in a few handwriting styles each,
//! and instances are noisy copies, so per-class word models face a
//! recognizable but non-trivial task. The event-log
//! generator simulates a handful of users with distinct habits — core
//! interest labels, transition patterns, favorite posting hours and
//! wording — producing a log on which per-user authentication is
//! learnable. Both are deterministic functions of their configs.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::ocr::OCR_PIXELS;
use crate::data::sessions::SessionEvent;
use crate::error::{Error, Result};
use crate::types::{Dataset, LabelAlphabet, LabeledSequence, Observation};

/// `(word length, distinct words, total instances)` rows mirroring the
/// published letter corpus' word-length distribution.
pub const STANDARD_OCR_SHAPE: [(usize, usize, usize); 11] = [
    (3, 9, 1283),
    (5, 4, 568),
    (6, 6, 768),
    (7, 5, 695),
    (8, 6, 750),
    (9, 8, 1047),
    (10, 5, 584),
    (11, 3, 304),
    (12, 2, 298),
    (13, 3, 313),
    (14, 3, 266),
];

/// Common English words, enough of each length for the standard shape.
/// Two properties matter. Same-length words share letters (at matching
/// and shifted positions), so an impostor word lights up some of a
/// model's letter detectors. And most words past length four repeat a
/// letter with different continuations ("letter": t is followed by t
/// and by e), so the label chain alone cannot resolve the sequence and
/// per-class training has to keep refining the observation networks
/// instead of stopping as soon as the transition pattern is memorized.
pub const STANDARD_WORDS: [&str; 54] = [
    "and", "the", "his", "her", "was", "for", "not", "are", "but", // 3
    "never", "seven", "paper", "state", // 5
    "people", "little", "letter", "better", "summer", "sister", // 6
    "between", "thought", "evening", "morning", "science", // 7
    "together", "remember", "business", "tomorrow", "interest", "anything", // 8
    "different", "community", "structure", "challenge", "beginning", "statement", "attention",
    "continued", // 9
    "everything", "difference", "government", "literature", "technology", // 10
    "information", "temperature", "development", // 11
    "championship", "neighborhood", // 12
    "understanding", "international", "opportunities", // 13
    "responsibility", "characteristic", "administration", // 14
];

/// Where the generator takes its word strings from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordInventory {
    /// Fixed English words from [`STANDARD_WORDS`]; same-length words
    /// overlap in letters, as real words do.
    English,
    /// Uniformly random letter strings; no systematic letter sharing.
    Random,
}

/// Knobs for the synthetic letter-image corpus.
#[derive(Debug, Clone)]
pub struct SyntheticOcrConfig {
    pub seed: u64,
    /// Per-pixel probability that a background pixel speckles on.
    /// Drives task difficulty; prototype pixels are only ever lost to
    /// ink variation, not to this noise.
    pub noise: f64,
    /// Ink variation between instances: each word instance draws an ink
    /// level `1 - U(0, ink_range)` and prototype pixels survive with
    /// that probability before pixel noise applies — bold and faint
    /// pens across a whole word. Saturated squashing detectors shrug
    /// off missing ink until a cliff, while an unbounded linear score
    /// tracks ink mass, so faint genuine instances drift toward the
    /// impostor score range.
    pub ink_range: f64,
    /// Target probability of an ON pixel in a letter prototype.
    pub prototype_density: f64,
    /// Distinct ways to write each letter. Every letter's extra styles
    /// swap one stroke of its base prototype for a style-private
    /// stroke, like allographs in real handwriting. A single linear
    /// template has to average the styles of a letter, while a hidden
    /// layer can dedicate units to each.
    pub styles_per_letter: usize,
    /// `(word length, distinct words, total instances)` rows.
    pub shape: Vec<(usize, usize, usize)>,
    pub words: WordInventory,
}

impl Default for SyntheticOcrConfig {
    fn default() -> Self {
        SyntheticOcrConfig {
            seed: 0,
            noise: 0.15,
            ink_range: 0.45,
            prototype_density: 0.35,
            styles_per_letter: 1,
            shape: STANDARD_OCR_SHAPE.to_vec(),
            words: WordInventory::English,
        }
    }
}

impl SyntheticOcrConfig {
    /// Only the shortest-word row; a fast smoke-test corpus.
    pub fn length_three_only(mut self) -> Self {
        self.shape.retain(|(len, _, _)| *len == 3);
        self
    }
}

fn inventory_words(shape: &[(usize, usize, usize)]) -> Result<Vec<Vec<String>>> {
    let mut taken: HashMap<usize, usize> = HashMap::new();
    let mut rows = Vec::with_capacity(shape.len());
    for (len, count, _) in shape {
        let pool: Vec<&str> = STANDARD_WORDS
            .iter()
            .copied()
            .filter(|w| w.len() == *len)
            .collect();
        let offset = taken.entry(*len).or_default();
        if *offset + count > pool.len() {
            return Err(Error::InvalidArgument(format!(
                "inventory has {} length-{len} words, shape wants {}",
                pool.len(),
                *offset + count
            )));
        }
        rows.push(
            pool[*offset..*offset + count]
                .iter()
                .map(|w| w.to_string())
                .collect(),
        );
        *offset += count;
    }
    Ok(rows)
}

fn random_words(
    shape: &[(usize, usize, usize)],
    alphabet: &LabelAlphabet,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<String>> {
    let mut used = std::collections::HashSet::new();
    let mut rows = Vec::with_capacity(shape.len());
    for (len, count, _) in shape {
        let mut row_words = Vec::with_capacity(*count);
        while row_words.len() < *count {
            let word: String = (0..*len)
                .map(|_| {
                    alphabet
                        .label(rng.random_range(0..alphabet.len()))
                        .unwrap()
                        .chars()
                        .next()
                        .unwrap()
                })
                .collect();
            if used.insert(word.clone()) {
                row_words.push(word);
            }
        }
        rows.push(row_words);
    }
    rows
}

/// Shared stroke dictionary size. Each letter is the union of three
/// distinct strokes from this pool, so specific letter pairs share
/// most of their ink (as c/e or i/l do in print) and an impostor word
/// partially excites a model's letter detectors — the property that
/// makes word authentication harder than letter recognition.
const STROKE_POOL: usize = 16;
const STROKES_PER_LETTER: usize = 3;

/// All `k`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

/// Style prototypes per letter: each style is the union of a distinct
/// random subset of shared strokes. Stroke density is set so a
/// prototype's expected ON fraction matches `prototype_density`.
fn letter_prototypes(
    config: &SyntheticOcrConfig,
    letters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Vec<u8>>>> {
    let styles = config.styles_per_letter.max(1);
    let mut combos = subsets(STROKE_POOL, STROKES_PER_LETTER);
    if combos.len() < letters * styles {
        return Err(Error::InvalidArgument(format!(
            "the stroke pool gives only {} prototypes for {letters} letters x {styles} styles",
            combos.len(),
        )));
    }
    let stroke_density =
        1.0 - (1.0 - config.prototype_density).powf(1.0 / STROKES_PER_LETTER as f64);
    let strokes: Vec<Vec<u8>> = (0..STROKE_POOL)
        .map(|_| {
            (0..OCR_PIXELS)
                .map(|_| u8::from(rng.random_bool(stroke_density)))
                .collect()
        })
        .collect();
    combos.shuffle(rng);
    Ok((0..letters)
        .map(|letter| {
            (0..styles)
                .map(|style| {
                    let mut prototype = vec![0u8; OCR_PIXELS];
                    for &s in &combos[letter * styles + style] {
                        for (p, &bit) in prototype.iter_mut().zip(&strokes[s]) {
                            *p |= bit;
                        }
                    }
                    prototype
                })
                .collect()
        })
        .collect())
}

/// Generate the letter-image corpus described by `config`.
pub fn synthetic_ocr(config: &SyntheticOcrConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let alphabet = LabelAlphabet::lowercase_letters();

    let prototypes = letter_prototypes(config, alphabet.len(), &mut rng)?;

    // Word strings per shape row, as label-index vectors.
    let word_rows = match config.words {
        WordInventory::English => inventory_words(&config.shape)?,
        WordInventory::Random => random_words(&config.shape, &alphabet, &mut rng),
    };
    let words_by_row: Vec<Vec<Vec<usize>>> = word_rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|w| {
                    w.chars()
                        .map(|c| alphabet.index_of(&c.to_string()).unwrap())
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut sequences = Vec::new();
    let mut instance_counter = 0usize;
    for ((_, count, total), row_words) in config.shape.iter().zip(&words_by_row) {
        // Spread the row's instances as evenly as the counts allow.
        let base = total / count;
        let extra = total % count;
        for (w, word) in row_words.iter().enumerate() {
            let n_instances = base + usize::from(w < extra);
            let word_str: String = word
                .iter()
                .map(|&l| alphabet.label(l).unwrap())
                .collect();
            for _ in 0..n_instances {
                // One pen for the whole word instance.
                let ink = if config.ink_range > 0.0 {
                    1.0 - rng.random_range(0.0..=config.ink_range)
                } else {
                    1.0
                };
                let observations: Vec<Observation> = word
                    .iter()
                    .map(|&letter| {
                        let styles = &prototypes[letter];
                        let style = &styles[rng.random_range(0..styles.len())];
                        let bits: Vec<u8> = style
                            .iter()
                            .map(|&b| {
                                let b = if b == 1 && !rng.random_bool(ink) { 0 } else { b };
                                if b == 0 && rng.random_bool(config.noise) {
                                    1
                                } else {
                                    b
                                }
                            })
                            .collect();
                        Observation::from_bits(&bits)
                    })
                    .collect();
                sequences.push(LabeledSequence::new(
                    observations,
                    word.clone(),
                    format!("{word_str}#{instance_counter}"),
                )?);
                instance_counter += 1;
            }
        }
    }
    Dataset::new(alphabet, sequences, OCR_PIXELS)
}

const SESSION_LABELS: [&str; 15] = [
    "news", "sports", "music", "movies", "tech", "food", "travel", "games", "books", "art",
    "science", "history", "fitness", "finance", "nature",
];

const ADJECTIVES: [&str; 8] = [
    "daily", "weekly", "new", "classic", "top", "quick", "big", "small",
];

const NOUNS: [&str; 8] = [
    "update", "review", "question", "story", "guide", "thread", "poll", "tips",
];

/// One shared pool of subject-line filler; every label draws its topic
/// words here, so different users' wording overlaps partially instead
/// of being trivially disjoint.
fn topic_word(i: usize) -> &'static str {
    if i % 16 < 8 {
        ADJECTIVES[i % 16]
    } else {
        NOUNS[i % 16 - 8]
    }
}

/// Number of topic words in each label's pool. Pools are large on
/// purpose: two labels mostly share *words* and differ in the habitual
/// word *order*, so the telling evidence is which pairs are adjacent,
/// not how many familiar words appear.
const LABEL_POOL: usize = 12;

/// The k-th topic word of a label's pool, in the label's habitual
/// order. Pools of different labels overlap by several words.
fn label_topic(label_idx: usize, k: usize) -> &'static str {
    topic_word((5 * label_idx + 3 * (k % LABEL_POOL)) % 16)
}

/// The k-th word a label's pool leaves out, again in a habitual order;
/// chatty lines pad with these.
fn label_spare(label_idx: usize, k: usize) -> &'static str {
    let mut in_pool = [false; 16];
    for j in 0..LABEL_POOL {
        in_pool[(5 * label_idx + 3 * j) % 16] = true;
    }
    let spares: Vec<usize> = (0..16).filter(|&i| !in_pool[i]).collect();
    topic_word(spares[k % spares.len()])
}

/// Knobs for the synthetic multi-user event log.
#[derive(Debug, Clone)]
pub struct SyntheticSessionsConfig {
    pub seed: u64,
    pub users: usize,
    pub sessions_per_user: usize,
    /// Epoch seconds of the first possible session.
    pub start_timestamp: i64,
    pub span_days: i64,
    /// Per-event probability of staying on the user's core-label habit
    /// rather than wandering to a random label for one event.
    pub core_affinity: f64,
}

impl Default for SyntheticSessionsConfig {
    fn default() -> Self {
        SyntheticSessionsConfig {
            seed: 0,
            users: 5,
            sessions_per_user: 150,
            start_timestamp: 1_704_067_200, // 2024-01-01T00:00:00Z
            span_days: 120,
            core_affinity: 0.72,
        }
    }
}

/// Session-length weights, singletons dominating with a usable band of
/// 5–6-event sessions (7s and 8s truncate into it). Drive-by visits of
/// one to three events are common but fall below the modelling floor.
const LENGTH_WEIGHTS: [(usize, u32); 7] = [
    (1, 30),
    (2, 10),
    (3, 8),
    (5, 22),
    (6, 18),
    (7, 6),
    (8, 2),
];

fn draw_length(rng: &mut ChaCha8Rng) -> usize {
    let total: u32 = LENGTH_WEIGHTS.iter().map(|(_, w)| w).sum();
    let mut roll = rng.random_range(0..total);
    for (len, w) in LENGTH_WEIGHTS {
        if roll < w {
            return len;
        }
        roll -= w;
    }
    unreachable!()
}

/// Generate the multi-user event log described by `config`, sorted by
/// timestamp. Each user gets four core labels walked along a personal
/// branching habit (every label has two possible follow-ups, so the
/// label order alone never pins down a session), two favorite posting
/// hours and favored wording, and sessions swing between terse and
/// verbose subject lines the way real posting moods do.
pub fn synthetic_sessions(config: &SyntheticSessionsConfig) -> Vec<SessionEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut events = Vec::new();

    for u in 0..config.users {
        let user = format!("user{u:02}");
        // Cores advance two labels per user around a ten-label ring, so
        // each user shares half their specialty with the next one and a
        // reader can never lean on label identity alone.
        let core: Vec<usize> = (0..4).map(|k| (2 * u + k) % 10).collect();
        // Personal habit: a settled loop through the core labels with a
        // single fork. From the first core label the user goes to either
        // the second or the third, both of which lead into the fourth,
        // which leads back to the first. The rest of the order is
        // predictable; only the fork position forces a reader to look
        // at the events themselves.
        let follow_ups: [[usize; 2]; 4] = [[1, 2], [3, 3], [3, 3], [0, 0]];
        // Two off-core labels the user wanders to now and then. Each is
        // another user's home turf, so wandering also plants each user's
        // occasional posts inside somebody else's specialty.
        let extras: [usize; 2] = [
            (3 * u + 4) % SESSION_LABELS.len(),
            (3 * u + 11) % SESSION_LABELS.len(),
        ];
        let favorite_hours = [(7 + 3 * u) % 24, (20 + 2 * u) % 24];
        // Each user leans on two adjectives; wording separates users
        // even when labels overlap.
        let favorite_adjectives = [
            ADJECTIVES[(2 * u) % ADJECTIVES.len()],
            ADJECTIVES[(2 * u + 1) % ADJECTIVES.len()],
        ];

        // Session start times: spread over the span, then pushed apart
        // so consecutive sessions never merge across the one-hour gap.
        let mut starts: Vec<i64> = (0..config.sessions_per_user)
            .map(|_| {
                let day = rng.random_range(0..config.span_days);
                let hour = if rng.random_bool(0.8) {
                    *favorite_hours.choose(&mut rng).unwrap() as i64
                } else {
                    rng.random_range(0..24)
                };
                let minute = rng.random_range(0..60);
                config.start_timestamp + day * 86_400 + hour * 3600 + minute * 60
            })
            .collect();
        starts.sort_unstable();

        let mut previous_end = i64::MIN / 2;
        for start in starts {
            // Keep a clear pause after the previous session (its events
            // span at most ~2 hours).
            let start = start.max(previous_end + 2 * SESSION_GAP_MARGIN);
            let length = draw_length(&mut rng);
            let mut t = start;
            // Every session opens on the first core label and then walks
            // the habit loop; individual events sometimes wander to a
            // random label and the loop resumes afterwards. One posting
            // mood per session: plain subjects, or chatty padded ones.
            let wordiness = rng.random_range(0..3);
            let mut position = 0;
            for _ in 0..length {
                let label_idx = if rng.random_bool(config.core_affinity) {
                    let l = core[position];
                    position = follow_ups[position][rng.random_range(0..2)];
                    l
                } else if rng.random_bool(0.85) {
                    extras[rng.random_range(0..extras.len())]
                } else {
                    rng.random_range(0..SESSION_LABELS.len())
                };
                events.push(SessionEvent {
                    user: user.clone(),
                    timestamp: t,
                    label: SESSION_LABELS[label_idx].to_string(),
                    text: subject_line(&mut rng, label_idx, &favorite_adjectives, wordiness),
                });
                t += rng.random_range(60..900);
            }
            previous_end = t;
        }
    }
    events.sort_by(|a, b| (a.timestamp, &a.user).cmp(&(b.timestamp, &b.user)));
    events
}

const SESSION_GAP_MARGIN: i64 = 3600;

/// Subject text for one event. Every line opens the same way for a
/// given label — favorite adjective, label word, then the label's topic
/// words in their usual order — so a label's core wording recurs
/// verbatim, the way people reuse their own phrasing. In a chatty mood
/// (`wordiness == 2`) the user pads the line with a second adjective
/// and the off-pool topic words.
fn subject_line(
    rng: &mut ChaCha8Rng,
    label_idx: usize,
    favorite_adjectives: &[&str; 2],
    wordiness: usize,
) -> String {
    let mut words: Vec<&str> = Vec::new();
    words.push(favorite_adjectives[rng.random_range(0..2)]);
    words.push(SESSION_LABELS[label_idx]);
    for k in 0..LABEL_POOL {
        words.push(label_topic(label_idx, k));
    }
    if wordiness == 2 {
        words.push(favorite_adjectives[rng.random_range(0..2)]);
        for k in 0..4 {
            words.push(label_spare(label_idx, k));
        }
    }
    words.join(" ")
}

/// Shuffled copy of a dataset's sequences; handy for building mixed
/// fixtures deterministically.
pub fn shuffled_sequences(dataset: &Dataset, seed: u64) -> Vec<LabeledSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seqs = dataset.sequences.clone();
    seqs.shuffle(&mut rng);
    seqs
}
