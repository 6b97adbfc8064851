//! Letter-image corpus loading and word-experiment partitioning.
//!
//! The input is the tab-separated letter-record format: one record per
//! line with fields `id`, `letter`, `next_id`, `word_id`, `position`,
//! `fold`, then 128 binary pixel values (a 16×8 raster). Records chain
//! into words through `next_id`, with `-1` closing a word. The fold
//! field is ignored here; experiments use seeded random partitions
//! instead of the published folds.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Dataset, LabelAlphabet, LabeledSequence, Observation};

/// One letter record as stored in the corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OcrRecord {
    pub letter_id: i64,
    pub letter: char,
    pub next_id: i64,
    pub word_id: i64,
    pub position: i64,
    pub fold: i64,
    pub pixels: Vec<u8>,
}

pub const OCR_PIXELS: usize = 128;

fn parse_line(path: &str, line_no: usize, line: &str) -> Result<OcrRecord> {
    let err = |message: String| Error::Parse {
        path: path.to_string(),
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line
        .split('\t')
        .filter(|f| !f.is_empty())
        .collect();
    if fields.len() != 6 + OCR_PIXELS {
        return Err(err(format!(
            "expected {} tab-separated fields, found {}",
            6 + OCR_PIXELS,
            fields.len()
        )));
    }
    let int = |i: usize, name: &str| -> Result<i64> {
        fields[i]
            .parse()
            .map_err(|_| err(format!("bad {name} value {:?}", fields[i])))
    };
    let letter = {
        let f = fields[1];
        let mut chars = f.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_lowercase() => c,
            _ => return Err(err(format!("bad letter value {f:?}"))),
        }
    };
    let mut pixels = Vec::with_capacity(OCR_PIXELS);
    for f in &fields[6..] {
        match *f {
            "0" => pixels.push(0),
            "1" => pixels.push(1),
            other => return Err(err(format!("bad pixel value {other:?}"))),
        }
    }
    Ok(OcrRecord {
        letter_id: int(0, "id")?,
        letter,
        next_id: int(2, "next_id")?,
        word_id: int(3, "word_id")?,
        position: int(4, "position")?,
        fold: int(5, "fold")?,
        pixels,
    })
}

/// Parse every record in a letter file.
pub fn load_ocr_records(path: impl AsRef<Path>) -> Result<Vec<OcrRecord>> {
    let path = path.as_ref();
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_line(&path_str, i + 1, line)?);
    }
    Ok(records)
}

/// Assemble records into word sequences by following `next_id` chains.
///
/// Records of one word are consecutive in the file; each record's
/// `next_id` must equal the following record's `letter_id`, and `-1`
/// ends the word. Sequence ids take the form `word#instance_index` so
/// the word string stays recoverable.
pub fn assemble_words(records: &[OcrRecord]) -> Result<Dataset> {
    let alphabet = LabelAlphabet::lowercase_letters();
    let mut sequences = Vec::new();
    let mut current: Vec<&OcrRecord> = Vec::new();
    let mut instance_counter = 0usize;
    for (i, rec) in records.iter().enumerate() {
        if let Some(prev) = current.last() {
            if prev.next_id != rec.letter_id {
                return Err(Error::Structure(format!(
                    "record {} (id {}) expected next id {}, found {}",
                    i, prev.letter_id, prev.next_id, rec.letter_id
                )));
            }
        }
        current.push(rec);
        if rec.next_id == -1 {
            let word: String = current.iter().map(|r| r.letter).collect();
            let labels: Vec<usize> = current
                .iter()
                .map(|r| {
                    alphabet
                        .index_of(&r.letter.to_string())
                        .expect("parser admits only a-z")
                })
                .collect();
            let observations: Vec<Observation> = current
                .iter()
                .map(|r| Observation::from_bits(&r.pixels))
                .collect();
            sequences.push(LabeledSequence::new(
                observations,
                labels,
                format!("{word}#{instance_counter}"),
            )?);
            instance_counter += 1;
            current.clear();
        }
    }
    if !current.is_empty() {
        return Err(Error::Structure(format!(
            "file ended inside a word: {} trailing records after id {}",
            current.len(),
            current.last().unwrap().letter_id
        )));
    }
    Dataset::new(alphabet, sequences, OCR_PIXELS)
}

/// Load a letter file into a dataset of word sequences.
pub fn load_ocr(path: impl AsRef<Path>) -> Result<Dataset> {
    let records = load_ocr_records(&path)?;
    assemble_words(&records)
}

/// The word a sequence spells, recovered from its labels.
pub fn sequence_word(alphabet: &LabelAlphabet, seq: &LabeledSequence) -> String {
    seq.labels
        .iter()
        .map(|&l| alphabet.label(l).unwrap_or("?"))
        .collect()
}

/// Write a dataset back out in the letter-record format. Ids are
/// renumbered sequentially; positions are 1-based; fold is 0.
pub fn write_ocr(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let mut next_free_id: i64 = 1;
    for (word_id, seq) in dataset.sequences.iter().enumerate() {
        for (pos, (obs, &label)) in seq.observations.iter().zip(&seq.labels).enumerate() {
            let letter = dataset.alphabet.label(label).ok_or_else(|| {
                Error::invalid(format!("label index {label} has no letter"))
            })?;
            if letter.len() != 1 || !letter.as_bytes()[0].is_ascii_lowercase() {
                return Err(Error::invalid(format!(
                    "alphabet entry {letter:?} is not a lowercase letter"
                )));
            }
            let id = next_free_id;
            next_free_id += 1;
            let next_id = if pos + 1 == seq.len() { -1 } else { next_free_id };
            out.push_str(&format!(
                "{id}\t{letter}\t{next_id}\t{}\t{}\t0",
                word_id + 1,
                pos + 1
            ));
            for v in obs.features() {
                out.push('\t');
                out.push(if *v != 0.0 { '1' } else { '0' });
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// A word's experiment split: train and self-test partitions of its own
/// instances plus a sample of same-length impostor instances.
#[derive(Debug, Clone)]
pub struct WordPartition {
    pub train: Vec<LabeledSequence>,
    pub self_test: Vec<LabeledSequence>,
    pub nonself_sample: Vec<LabeledSequence>,
    /// True when fewer impostors were available than requested.
    pub nonself_shortfall: bool,
}

/// Seeded split of one word's instances into `ratio` train and the rest
/// test, plus up to `nonself_count` impostor instances drawn uniformly
/// without replacement from same-length words.
pub fn partition_word_experiment(
    word_instances: &[LabeledSequence],
    other_words_same_length: &[LabeledSequence],
    ratio: f64,
    nonself_count: usize,
    seed: u64,
) -> Result<WordPartition> {
    if word_instances.is_empty() {
        return Err(Error::invalid("word has no instances"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("ratio {ratio} outside (0, 1)")));
    }
    if other_words_same_length.is_empty() {
        return Err(Error::ExperimentSkip(
            "no other words of the same length".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..word_instances.len()).collect();
    order.shuffle(&mut rng);
    let n_train = (ratio * word_instances.len() as f64).ceil() as usize;
    let train = order[..n_train]
        .iter()
        .map(|&i| word_instances[i].clone())
        .collect();
    let self_test = order[n_train..]
        .iter()
        .map(|&i| word_instances[i].clone())
        .collect();

    let mut pool: Vec<usize> = (0..other_words_same_length.len()).collect();
    pool.shuffle(&mut rng);
    let take = nonself_count.min(pool.len());
    let nonself_sample = pool[..take]
        .iter()
        .map(|&i| other_words_same_length[i].clone())
        .collect();

    Ok(WordPartition {
        train,
        self_test,
        nonself_sample,
        nonself_shortfall: take < nonself_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn pixel_fields(fill: u8) -> String {
        std::iter::repeat_n(fill.to_string(), OCR_PIXELS)
            .collect::<Vec<_>>()
            .join("\t")
    }

    /// Two words: "cat" (ids 1-3) and "on" (ids 4-5).
    fn fixture_file(dir: &Path) -> std::path::PathBuf {
        let lines = [
            format!("1\tc\t2\t1\t1\t0\t{}", pixel_fields(0)),
            format!("2\ta\t3\t1\t2\t0\t{}", pixel_fields(1)),
            format!("3\tt\t-1\t1\t3\t0\t{}", pixel_fields(0)),
            format!("4\to\t5\t2\t1\t0\t{}", pixel_fields(1)),
            format!("5\tn\t-1\t2\t2\t0\t{}", pixel_fields(0)),
        ];
        let path = dir.join("letters.data");
        fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    #[test]
    fn loads_hand_built_two_word_file() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = load_ocr(fixture_file(dir.path())).unwrap();
        assert_eq!(dataset.len(), 2);
        assert_eq!(dataset.feature_dim, OCR_PIXELS);
        assert_eq!(sequence_word(&dataset.alphabet, &dataset.sequences[0]), "cat");
        assert_eq!(sequence_word(&dataset.alphabet, &dataset.sequences[1]), "on");
        assert_eq!(dataset.sequences[0].len(), 3);
        assert_eq!(dataset.sequences[1].len(), 2);
        // pixels survive: second letter of "cat" was all ones
        assert!(dataset.sequences[0].observations[1]
            .features()
            .iter()
            .all(|v| *v == 1.0));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.data");
        fs::write(
            &path,
            format!("1\tc\t-1\t1\t1\t0\t{}\n2\tX\t-1\t1\t1\t0\t{}", pixel_fields(0), pixel_fields(0)),
        )
        .unwrap();
        let err = load_ocr(&path).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("letter"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn broken_chain_is_a_structural_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.data");
        // next_id 99 does not match the following record's id 2
        fs::write(
            &path,
            format!(
                "1\tc\t99\t1\t1\t0\t{}\n2\ta\t-1\t1\t2\t0\t{}",
                pixel_fields(0),
                pixel_fields(0)
            ),
        )
        .unwrap();
        assert!(matches!(load_ocr(&path), Err(Error::Structure(_))));

        // a file ending mid-word is also structural
        let path = dir.path().join("trunc.data");
        fs::write(&path, format!("1\tc\t2\t1\t1\t0\t{}", pixel_fields(0))).unwrap();
        assert!(matches!(load_ocr(&path), Err(Error::Structure(_))));
    }

    #[test]
    fn write_then_load_round_trips_labels_and_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = load_ocr(fixture_file(dir.path())).unwrap();
        let copy_path = dir.path().join("copy.data");
        write_ocr(&dataset, &copy_path).unwrap();
        let back = load_ocr(&copy_path).unwrap();
        assert_eq!(dataset.len(), back.len());
        for (a, b) in dataset.sequences.iter().zip(&back.sequences) {
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.observations, b.observations);
        }
    }

    #[test]
    fn partition_sizes_follow_the_ratio() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = load_ocr(fixture_file(dir.path())).unwrap();
        let word = vec![dataset.sequences[0].clone(); 150];
        let others = vec![dataset.sequences[1].clone(); 60];
        let p = partition_word_experiment(&word, &others, 2.0 / 3.0, 100, 7).unwrap();
        assert_eq!(p.train.len(), 100);
        assert_eq!(p.self_test.len(), 50);
        // pool smaller than requested: clamp with the shortfall flag
        assert_eq!(p.nonself_sample.len(), 60);
        assert!(p.nonself_shortfall);

        let p2 = partition_word_experiment(&word, &others, 2.0 / 3.0, 30, 7).unwrap();
        assert_eq!(p2.nonself_sample.len(), 30);
        assert!(!p2.nonself_shortfall);
    }

    #[test]
    fn partition_is_deterministic_per_seed_and_covers_instances() {
        let word: Vec<LabeledSequence> = (0..30)
            .map(|i| {
                let mut bits = vec![0u8; OCR_PIXELS];
                bits[i % OCR_PIXELS] = 1;
                LabeledSequence::new(
                    vec![Observation::from_bits(&bits)],
                    vec![i % 26],
                    format!("w#{i}"),
                )
                .unwrap()
            })
            .collect();
        let others = word.clone();
        let a = partition_word_experiment(&word, &others, 2.0 / 3.0, 10, 42).unwrap();
        let b = partition_word_experiment(&word, &others, 2.0 / 3.0, 10, 42).unwrap();
        let ids = |v: &[LabeledSequence]| -> Vec<String> {
            v.iter().map(|s| s.sequence_id.clone()).collect()
        };
        assert_eq!(ids(&a.train), ids(&b.train));
        assert_eq!(ids(&a.self_test), ids(&b.self_test));
        assert_eq!(ids(&a.nonself_sample), ids(&b.nonself_sample));

        let c = partition_word_experiment(&word, &others, 2.0 / 3.0, 10, 43).unwrap();
        assert_ne!(ids(&a.train), ids(&c.train));

        // train + self_test is a permutation of the instances
        let mut seen: HashMap<String, usize> = HashMap::new();
        for s in a.train.iter().chain(&a.self_test) {
            *seen.entry(s.sequence_id.clone()).or_default() += 1;
        }
        assert_eq!(seen.len(), 30);
        assert!(seen.values().all(|&v| v == 1));

        // impostors drawn without replacement
        let mut non: HashMap<String, usize> = HashMap::new();
        for s in &a.nonself_sample {
            *non.entry(s.sequence_id.clone()).or_default() += 1;
        }
        assert!(non.values().all(|&v| v == 1));
    }

    #[test]
    fn partition_skips_without_same_length_peers() {
        let seq = LabeledSequence::new(
            vec![Observation::from_bits(&vec![0u8; OCR_PIXELS])],
            vec![0],
            "a#0",
        )
        .unwrap();
        let err = partition_word_experiment(&[seq], &[], 0.5, 10, 0).unwrap_err();
        assert!(matches!(err, Error::ExperimentSkip(_)));
    }
}
