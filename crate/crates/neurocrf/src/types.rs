//! Shared domain types: label alphabets, observations, sequences, datasets
//! and model descriptors.
//!
//! Everything here is immutable after construction and safe to share across
//! threads without synchronization.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered set of distinct label names plus a reserved START slot.
///
/// Labels occupy indices `0..len()`. The START tag is an extra edge-input
/// slot at index `len()`; it is never a decode output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAlphabet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelAlphabet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("alphabet must contain at least one label"));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() {
                return Err(Error::invalid("empty label name"));
            }
            if label.contains('\n') || label.contains('\r') {
                return Err(Error::invalid(format!(
                    "label {label:?} contains a line break"
                )));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate label {label:?}")));
            }
        }
        Ok(LabelAlphabet { labels, index })
    }

    /// The 26 lowercase letters `a..z`, the alphabet used by the OCR task.
    pub fn lowercase_letters() -> Self {
        let labels = (b'a'..=b'z').map(|c| (c as char).to_string()).collect();
        LabelAlphabet::new(labels).expect("letters are distinct")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty label sets
    }

    /// Index of the START tag: one past the last real label.
    pub fn start_index(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Predecessor label in an edge factor: either a real label or START.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrevLabel {
    Start,
    Label(usize),
}

impl PrevLabel {
    /// Slot in the `num_labels + 1`-wide one-hot edge encoding.
    pub fn one_hot_index(self, num_labels: usize) -> usize {
        match self {
            PrevLabel::Start => num_labels,
            PrevLabel::Label(i) => i,
        }
    }
}

impl fmt::Display for PrevLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrevLabel::Start => write!(f, "START"),
            PrevLabel::Label(i) => write!(f, "{i}"),
        }
    }
}

/// Fixed-length vector of binary indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    features: Vec<f64>,
}

impl Observation {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("observation must have at least one feature"));
        }
        if let Some(bad) = features.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::invalid(format!(
                "observation features must be 0 or 1, got {bad}"
            )));
        }
        Ok(Observation { features })
    }

    /// Build from raw bits without the 0/1 scan. Used by loaders that
    /// already guarantee binary values.
    pub fn from_bits(bits: &[u8]) -> Self {
        Observation {
            features: bits.iter().map(|&b| if b != 0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// Observations paired with gold label indices; the unit of training
/// and decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub observations: Vec<Observation>,
    pub labels: Vec<usize>,
    pub sequence_id: String,
}

impl LabeledSequence {
    pub fn new(
        observations: Vec<Observation>,
        labels: Vec<usize>,
        sequence_id: impl Into<String>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("sequence must have at least one position"));
        }
        if observations.len() != labels.len() {
            return Err(Error::invalid(format!(
                "sequence has {} observations but {} labels",
                observations.len(),
                labels.len()
            )));
        }
        Ok(LabeledSequence {
            observations,
            labels,
            sequence_id: sequence_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// A validated collection of sequences over one alphabet and feature width.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub alphabet: LabelAlphabet,
    pub sequences: Vec<LabeledSequence>,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn new(
        alphabet: LabelAlphabet,
        sequences: Vec<LabeledSequence>,
        feature_dim: usize,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        for seq in &sequences {
            for obs in &seq.observations {
                if obs.dim() != feature_dim {
                    return Err(Error::DimensionMismatch {
                        expected: feature_dim,
                        got: obs.dim(),
                        context: format!("observation in sequence {}", seq.sequence_id),
                    });
                }
            }
            if let Some(&bad) = seq.labels.iter().find(|&&l| l >= alphabet.len()) {
                return Err(Error::invalid(format!(
                    "sequence {} has label index {bad} outside alphabet of size {}",
                    seq.sequence_id,
                    alphabet.len()
                )));
            }
        }
        Ok(Dataset {
            alphabet,
            sequences,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Same alphabet and feature width, different sequence selection.
    pub fn with_sequences(&self, sequences: Vec<LabeledSequence>) -> Result<Self> {
        Dataset::new(self.alphabet.clone(), sequences, self.feature_dim)
    }
}

/// The three factor-network architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    CrfMlp,
    CrfRnn,
    CrfPrcpt,
}

impl Architecture {
    pub const ALL: [Architecture; 3] =
        [Architecture::CrfMlp, Architecture::CrfRnn, Architecture::CrfPrcpt];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::CrfMlp => "crf-mlp",
            Architecture::CrfRnn => "crf-rnn",
            Architecture::CrfPrcpt => "crf-prcpt",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crf-mlp" => Ok(Architecture::CrfMlp),
            "crf-rnn" => Ok(Architecture::CrfRnn),
            "crf-prcpt" => Ok(Architecture::CrfPrcpt),
            other => Err(Error::invalid(format!(
                "unknown architecture {other:?} (expected crf-mlp, crf-rnn or crf-prcpt)"
            ))),
        }
    }
}

/// Training hyperparameters with the defaults used throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub regularization: f64,
    pub max_sgd_examples: usize,
    pub init_stddev: f64,
    pub minibatch: usize,
    pub rng_seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.5,
            regularization: 0.001,
            max_sgd_examples: 1000,
            init_stddev: 0.000_15,
            minibatch: 5,
            rng_seed: 0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::invalid("regularization must be >= 0"));
        }
        if self.max_sgd_examples < 1 {
            return Err(Error::invalid("max_sgd_examples must be >= 1"));
        }
        if !(self.init_stddev > 0.0) {
            return Err(Error::invalid("init_stddev must be > 0"));
        }
        if self.minibatch < 1 {
            return Err(Error::invalid("minibatch must be >= 1"));
        }
        Ok(())
    }
}

/// Shapes and hyperparameters fully describing one model before
/// weight initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescriptor {
    pub architecture: Architecture,
    pub feature_dim: usize,
    pub num_labels: usize,
    /// Width of the observation (or Elman) hidden layer. Unused by
    /// CRF-PRCPT. The edge network of CRF-MLP sizes its own hidden
    /// layer from its input width.
    pub hidden_size: usize,
    pub hyper: HyperParams,
}

impl ModelDescriptor {
    /// Descriptor with the default hidden width `(n_inputs + n_outputs) / 4`.
    pub fn new(architecture: Architecture, feature_dim: usize, num_labels: usize) -> Result<Self> {
        ModelDescriptor::with_hyper(architecture, feature_dim, num_labels, HyperParams::default())
    }

    pub fn with_hyper(
        architecture: Architecture,
        feature_dim: usize,
        num_labels: usize,
        hyper: HyperParams,
    ) -> Result<Self> {
        if feature_dim == 0 || num_labels == 0 {
            return Err(Error::invalid("feature_dim and num_labels must be positive"));
        }
        hyper.validate()?;
        Ok(ModelDescriptor {
            architecture,
            feature_dim,
            num_labels,
            hidden_size: hidden_size(feature_dim, num_labels),
            hyper,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_labels == 0 {
            return Err(Error::invalid("feature_dim and num_labels must be positive"));
        }
        if self.hidden_size == 0 && self.architecture != Architecture::CrfPrcpt {
            return Err(Error::invalid("hidden_size must be positive"));
        }
        self.hyper.validate()
    }
}

/// Hidden layer width `(n_inputs + n_outputs) / 4`, floored, minimum 1.
pub fn hidden_size(n_inputs: usize, n_outputs: usize) -> usize {
    debug_assert!(n_inputs >= 1 && n_outputs >= 1);
    ((n_inputs + n_outputs) / 4).max(1)
}

/// One-hot vector of length `size + 1`; `index == size` selects the
/// START slot.
pub fn one_hot(index: usize, size: usize) -> Result<Vec<f64>> {
    if index > size {
        return Err(Error::invalid(format!(
            "one_hot index {index} out of range 0..={size}"
        )));
    }
    let mut v = vec![0.0; size + 1];
    v[index] = 1.0;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hidden_size_quarter_rule_examples() {
        assert_eq!(hidden_size(128, 26), 38);
        assert_eq!(hidden_size(3, 1), 1);
        assert_eq!(hidden_size(100, 100), 50);
        // floor with minimum 1
        assert_eq!(hidden_size(1, 1), 1);
    }

    #[test]
    fn one_hot_basic() {
        assert_eq!(one_hot(0, 3).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(one_hot(3, 3).unwrap(), vec![0.0, 0.0, 0.0, 1.0]); // START slot
        assert_eq!(one_hot(2, 3).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(one_hot(4, 3).is_err());
    }

    #[test]
    fn alphabet_rejects_duplicates() {
        let err = LabelAlphabet::new(vec!["a".into(), "a".into()]);
        assert!(err.is_err());
    }

    #[test]
    fn alphabet_start_index_is_past_the_end() {
        let a = LabelAlphabet::lowercase_letters();
        assert_eq!(a.len(), 26);
        assert_eq!(a.start_index(), 26);
        assert_eq!(a.index_of("a"), Some(0));
        assert_eq!(a.index_of("z"), Some(25));
        assert_eq!(a.label(25), Some("z"));
        assert_eq!(a.label(26), None);
    }

    #[test]
    fn sequence_rejects_length_mismatch() {
        let obs = vec![Observation::from_bits(&[1, 0])];
        let err = LabeledSequence::new(obs, vec![0, 1], "s");
        assert!(err.is_err());
    }

    #[test]
    fn dataset_rejects_bad_dimension_and_labels() {
        let alphabet = LabelAlphabet::new(vec!["x".into(), "y".into()]).unwrap();
        let good = LabeledSequence::new(
            vec![Observation::from_bits(&[1, 0]), Observation::from_bits(&[0, 1])],
            vec![0, 1],
            "ok",
        )
        .unwrap();
        assert!(Dataset::new(alphabet.clone(), vec![good.clone()], 2).is_ok());

        let wrong_dim = LabeledSequence::new(vec![Observation::from_bits(&[1])], vec![0], "bad")
            .unwrap();
        assert!(matches!(
            Dataset::new(alphabet.clone(), vec![wrong_dim], 2),
            Err(Error::DimensionMismatch { .. })
        ));

        let wrong_label =
            LabeledSequence::new(vec![Observation::from_bits(&[1, 0])], vec![2], "bad").unwrap();
        assert!(Dataset::new(alphabet, vec![wrong_label], 2).is_err());
    }

    #[test]
    fn architecture_round_trips_through_names() {
        for arch in Architecture::ALL {
            assert_eq!(arch.name().parse::<Architecture>().unwrap(), arch);
        }
        assert!("mlp".parse::<Architecture>().is_err());
    }

    #[test]
    fn hyper_defaults_are_validated() {
        HyperParams::default().validate().unwrap();
        let mut h = HyperParams::default();
        h.learning_rate = 0.0;
        assert!(h.validate().is_err());
    }

    proptest! {
        #[test]
        fn one_hot_sums_to_one(size in 1usize..40, frac in 0.0f64..1.0) {
            let index = ((size as f64 + 1.0) * frac) as usize;
            let index = index.min(size);
            let v = one_hot(index, size).unwrap();
            prop_assert_eq!(v.len(), size + 1);
            prop_assert_eq!(v.iter().sum::<f64>(), 1.0);
        }

        #[test]
        fn hidden_size_is_monotone(a in 1usize..500, b in 1usize..500, da in 0usize..50, db in 0usize..50) {
            prop_assert!(hidden_size(a + da, b + db) >= hidden_size(a, b));
        }
    }
}
