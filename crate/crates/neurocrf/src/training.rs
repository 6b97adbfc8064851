//! Error-triggered SGD training loops.
//!
//! Each presented sequence is decoded with Viterbi under the current
//! weights; updates happen only at positions where the decoded label
//! disagrees with the gold label. The MLP-based architectures take one
//! square-loss backpropagation step with weight elimination per error
//! position; the perceptron collects error records into a mini-batch
//! applied every `minibatch`-th error. Training stops after
//! `max_sgd_examples` sequence presentations, or earlier once a full
//! decode pass over the training set makes no label errors.
//!
//! A single run is strictly sequential (update order matters); distinct
//! models train in parallel with independent seeds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decoder::{viterbi, DecodeResult};
use crate::error::{Error, Result};
use crate::model::NeuroCrfModel;
use crate::neural::{init_weights, perceptron_accumulate_and_apply, ModelNets, PerceptronError};
use crate::types::{one_hot, Architecture, Dataset, HyperParams, LabeledSequence, PrevLabel};

/// Distinguishes the shuffle stream from the init stream for one seed.
const SHUFFLE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// What to train and when to test for convergence.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub architecture: Architecture,
    pub hyper: HyperParams,
    /// Sequences between full-trainset error checks; `None` checks once
    /// per cycle through the shuffled training set.
    pub convergence_check_period: Option<usize>,
    /// Identifier stamped into the trained model (the word or user the
    /// model authenticates).
    pub model_id: String,
}

impl TrainConfig {
    pub fn new(architecture: Architecture) -> Self {
        TrainConfig {
            architecture,
            hyper: HyperParams::default(),
            convergence_check_period: None,
            model_id: "model".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.convergence_check_period == Some(0) {
            return Err(Error::invalid("convergence_check_period must be >= 1"));
        }
        self.hyper.validate()
    }
}

/// One convergence-check observation during training.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub sequences_consumed: usize,
    pub token_errors: usize,
    pub converged: bool,
}

impl TraceRecord {
    /// Line-delimited structured form for persisting training traces.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace record serializes")
    }
}

/// How a training run ended.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Sequence presentations consumed; never exceeds `max_sgd_examples`.
    pub sequences_consumed: usize,
    /// True if a full decode pass over the training set made no errors.
    pub converged: bool,
    /// Fraction of training-set tokens mislabeled by the final model.
    pub final_train_token_error: f64,
    /// One record per convergence check, in order.
    pub trace: Vec<TraceRecord>,
}

/// Token errors an independent decode pass makes over a whole dataset.
pub fn dataset_token_errors(model: &NeuroCrfModel, dataset: &Dataset) -> Result<usize> {
    let mut errors = 0;
    for seq in &dataset.sequences {
        let decoded = viterbi(model, &seq.observations)?;
        errors += decoded
            .labels
            .iter()
            .zip(&seq.labels)
            .filter(|(a, b)| a != b)
            .count();
    }
    Ok(errors)
}

fn dataset_token_count(dataset: &Dataset) -> usize {
    dataset.sequences.iter().map(LabeledSequence::len).sum()
}

/// One-hot target over the real labels only (no START slot).
fn target_vec(label: usize, num_labels: usize) -> Vec<f64> {
    let mut v = vec![0.0; num_labels];
    v[label] = 1.0;
    v
}

/// Decode one sequence and apply the architecture's update at every
/// error position. The perceptron's pending mini-batch survives across
/// sequences; it is applied whenever it reaches `minibatch` entries.
fn train_one_sequence(
    model: &mut NeuroCrfModel,
    seq: &LabeledSequence,
    pending: &mut Vec<PerceptronError>,
    hyper: &HyperParams,
) -> Result<()> {
    let decoded = viterbi(model, &seq.observations)?.labels;
    let y = model.num_labels();
    let eta = hyper.learning_rate;
    let lambda = hyper.regularization;

    match model.nets_mut() {
        ModelNets::Mlp { observation, edge } => {
            for t in 0..seq.len() {
                if decoded[t] == seq.labels[t] {
                    continue;
                }
                let target = target_vec(seq.labels[t], y);
                observation.update(seq.observations[t].features(), &target, eta, lambda)?;
                // edge pairs use the gold predecessor (teacher forcing)
                let prev = if t == 0 {
                    PrevLabel::Start
                } else {
                    PrevLabel::Label(seq.labels[t - 1])
                };
                let edge_input = one_hot(prev.one_hot_index(y), y)?;
                edge.update(&edge_input, &target, eta, lambda)?;
            }
        }
        ModelNets::Rnn(net) => {
            // Contexts depend only on the observation prefix; fix them
            // from the pre-update weights before applying any step.
            let mut contexts = Vec::with_capacity(seq.len());
            contexts.push(net.initial_context());
            for t in 0..seq.len() - 1 {
                let (_, ctx) = net.forward(seq.observations[t].features(), &contexts[t])?;
                contexts.push(ctx);
            }
            for t in 0..seq.len() {
                if decoded[t] == seq.labels[t] {
                    continue;
                }
                let target = target_vec(seq.labels[t], y);
                net.update(
                    seq.observations[t].features(),
                    &contexts[t],
                    &target,
                    eta,
                    lambda,
                )?;
            }
        }
        ModelNets::Perceptron(net) => {
            for t in 0..seq.len() {
                if decoded[t] == seq.labels[t] {
                    continue;
                }
                // the perceptron conditions on its own decoded history
                let prev = if t == 0 {
                    PrevLabel::Start
                } else {
                    PrevLabel::Label(decoded[t - 1])
                };
                pending.push(PerceptronError {
                    input: net.input_vector(seq.observations[t].features(), prev),
                    predicted: decoded[t],
                    gold: seq.labels[t],
                });
                if pending.len() == hyper.minibatch {
                    perceptron_accumulate_and_apply(net, pending, eta);
                    pending.clear();
                }
            }
        }
    }
    Ok(())
}

/// Train one model on a dataset.
///
/// Weights are initialized from `seed`; presentation order is a seeded
/// shuffle, redrawn each cycle. Identical `(dataset, config, seed)`
/// reproduce the model bit for bit.
pub fn train(
    dataset: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<(NeuroCrfModel, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    let mut hyper = config.hyper.clone();
    hyper.rng_seed = seed;
    let descriptor = crate::types::ModelDescriptor::with_hyper(
        config.architecture,
        dataset.feature_dim,
        dataset.alphabet.len(),
        hyper.clone(),
    )?;
    let nets = init_weights(&descriptor, seed)?;
    let mut model = NeuroCrfModel::new(
        config.model_id.clone(),
        descriptor,
        dataset.alphabet.clone(),
        nets,
    )?;

    let n = dataset.len();
    let period = config.convergence_check_period.unwrap_or(n).max(1);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_SEED_SALT);
    let mut order: Vec<usize> = (0..n).collect();
    let mut pending: Vec<PerceptronError> = Vec::new();
    let mut trace = Vec::new();

    // A model may already decode everything correctly; don't touch it.
    let initial_errors = dataset_token_errors(&model, dataset)?;
    let mut converged = initial_errors == 0;
    let mut last_errors = initial_errors;
    let mut consumed = 0usize;
    let mut checked_at = 0usize;
    trace.push(TraceRecord {
        sequences_consumed: 0,
        token_errors: initial_errors,
        converged,
    });

    let mut since_check = 0usize;
    'training: while !converged && consumed < hyper.max_sgd_examples {
        order.shuffle(&mut shuffle_rng);
        for &idx in &order {
            if consumed == hyper.max_sgd_examples {
                break;
            }
            train_one_sequence(&mut model, &dataset.sequences[idx], &mut pending, &hyper)?;
            consumed += 1;
            since_check += 1;
            if since_check == period {
                since_check = 0;
                last_errors = dataset_token_errors(&model, dataset)?;
                checked_at = consumed;
                converged = last_errors == 0;
                trace.push(TraceRecord {
                    sequences_consumed: consumed,
                    token_errors: last_errors,
                    converged,
                });
                if converged {
                    break 'training;
                }
            }
        }
    }

    if checked_at != consumed {
        last_errors = dataset_token_errors(&model, dataset)?;
        converged = last_errors == 0;
        trace.push(TraceRecord {
            sequences_consumed: consumed,
            token_errors: last_errors,
            converged,
        });
    }

    let report = TrainReport {
        sequences_consumed: consumed,
        converged,
        final_train_token_error: last_errors as f64 / dataset_token_count(dataset) as f64,
        trace,
    };
    Ok((model, report))
}

/// Decode a sequence and return its raw trellis score, approximate
/// probability and labels; the score is what calibration consumes.
pub fn score_sequence(
    model: &NeuroCrfModel,
    observations: &[crate::types::Observation],
) -> Result<DecodeResult> {
    viterbi(model, observations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LabelAlphabet, Observation};

    fn alphabet(n: usize) -> LabelAlphabet {
        LabelAlphabet::new((0..n).map(|i| format!("l{i}")).collect()).unwrap()
    }

    /// Two labels, each perfectly indicated by one of two feature bits.
    fn separable_dataset() -> Dataset {
        let seqs = vec![
            LabeledSequence::new(
                vec![
                    Observation::from_bits(&[1, 0]),
                    Observation::from_bits(&[0, 1]),
                    Observation::from_bits(&[1, 0]),
                    Observation::from_bits(&[0, 1]),
                ],
                vec![0, 1, 0, 1],
                "s0",
            )
            .unwrap(),
            LabeledSequence::new(
                vec![
                    Observation::from_bits(&[0, 1]),
                    Observation::from_bits(&[0, 1]),
                    Observation::from_bits(&[1, 0]),
                ],
                vec![1, 1, 0],
                "s1",
            )
            .unwrap(),
        ];
        Dataset::new(alphabet(2), seqs, 2).unwrap()
    }

    #[test]
    fn converges_on_separable_data_for_all_architectures() {
        for arch in Architecture::ALL {
            let config = TrainConfig::new(arch);
            let (model, report) = train(&separable_dataset(), &config, 17).unwrap();
            assert!(report.converged, "{arch} did not converge: {report:?}");
            assert!(report.sequences_consumed <= 1000);
            assert_eq!(report.final_train_token_error, 0.0);
            // the stop condition is verifiable by an independent pass
            assert_eq!(dataset_token_errors(&model, &separable_dataset()).unwrap(), 0);
        }
    }

    #[test]
    fn single_label_dataset_converges_without_touching_weights() {
        let seqs = vec![LabeledSequence::new(
            vec![Observation::from_bits(&[1, 0]), Observation::from_bits(&[0, 1])],
            vec![0, 0],
            "only",
        )
        .unwrap()];
        let dataset = Dataset::new(alphabet(1), seqs, 2).unwrap();
        let config = TrainConfig::new(Architecture::CrfMlp);
        let (model, report) = train(&dataset, &config, 5).unwrap();
        assert!(report.converged);
        assert_eq!(report.sequences_consumed, 0);
        assert_eq!(report.trace.len(), 1);

        // weights equal the fresh initialization: nothing was updated
        let fresh = init_weights(model.descriptor(), 5).unwrap();
        assert_eq!(model.nets(), &fresh);
    }

    #[test]
    fn same_seed_reproduces_model_bits_and_report() {
        let dataset = separable_dataset();
        for arch in Architecture::ALL {
            let config = TrainConfig::new(arch);
            let (m1, r1) = train(&dataset, &config, 404).unwrap();
            let (m2, r2) = train(&dataset, &config, 404).unwrap();
            assert_eq!(m1.serialize(), m2.serialize());
            assert_eq!(r1, r2);
            let (m3, _) = train(&dataset, &config, 405).unwrap();
            assert_ne!(m1.serialize(), m3.serialize(), "{arch} ignored the seed");
        }
    }

    #[test]
    fn never_consumes_more_than_max_examples() {
        // Unseparable data: the two feature patterns appear under both
        // labels, so training cannot reach zero errors.
        let seqs = vec![
            LabeledSequence::new(
                vec![Observation::from_bits(&[1, 0]), Observation::from_bits(&[1, 0])],
                vec![0, 1],
                "a",
            )
            .unwrap(),
            LabeledSequence::new(
                vec![Observation::from_bits(&[0, 1]), Observation::from_bits(&[0, 1])],
                vec![1, 0],
                "b",
            )
            .unwrap(),
        ];
        let dataset = Dataset::new(alphabet(2), seqs, 2).unwrap();
        let mut config = TrainConfig::new(Architecture::CrfMlp);
        config.hyper.max_sgd_examples = 7;
        let (_, report) = train(&dataset, &config, 1).unwrap();
        assert_eq!(report.sequences_consumed, 7);
        assert!(!report.converged);
        assert!(report.final_train_token_error > 0.0);
        // the final trace entry reflects the closing decode pass
        let last = report.trace.last().unwrap();
        assert_eq!(last.sequences_consumed, 7);
        assert!(!last.converged);
    }

    #[test]
    fn perceptron_partial_batch_is_dropped_and_biases_never_move() {
        // One presentation of a length-3 sequence makes at most 3 errors,
        // fewer than the batch size of 5: no update may be applied.
        let seqs = vec![LabeledSequence::new(
            vec![
                Observation::from_bits(&[1, 0]),
                Observation::from_bits(&[0, 1]),
                Observation::from_bits(&[1, 1]),
            ],
            vec![0, 1, 0],
            "s",
        )
        .unwrap()];
        let dataset = Dataset::new(alphabet(2), seqs, 2).unwrap();
        let mut config = TrainConfig::new(Architecture::CrfPrcpt);
        config.hyper.max_sgd_examples = 1;
        let (model, _) = train(&dataset, &config, 3).unwrap();
        let fresh = init_weights(model.descriptor(), 3).unwrap();
        assert_eq!(model.nets(), &fresh);

        // With minibatch = 1 every error updates weights, but biases are
        // scored yet never trained.
        let mut config = TrainConfig::new(Architecture::CrfPrcpt);
        config.hyper.minibatch = 1;
        config.hyper.max_sgd_examples = 50;
        let (model, report) = train(&dataset, &config, 3).unwrap();
        assert!(report.trace[0].token_errors > 0, "nothing to train on");
        let (ModelNets::Perceptron(trained), ModelNets::Perceptron(init)) =
            (model.nets(), &fresh)
        else {
            panic!()
        };
        assert_ne!(trained.output.weights(), init.output.weights());
        assert_eq!(trained.output.bias(), init.output.bias());
    }

    #[test]
    fn convergence_check_period_controls_trace_density() {
        let dataset = separable_dataset();
        let mut config = TrainConfig::new(Architecture::CrfMlp);
        config.convergence_check_period = Some(1);
        let (_, per_seq) = train(&dataset, &config, 2).unwrap();
        // one initial check plus one per consumed sequence
        assert_eq!(per_seq.trace.len(), per_seq.sequences_consumed + 1);
        for (i, rec) in per_seq.trace.iter().enumerate() {
            assert_eq!(rec.sequences_consumed, i);
        }

        config.convergence_check_period = Some(0);
        assert!(train(&dataset, &config, 2).is_err());
    }

    #[test]
    fn trace_records_serialize_as_json_lines() {
        let rec = TraceRecord {
            sequences_consumed: 12,
            token_errors: 3,
            converged: false,
        };
        assert_eq!(
            rec.to_json_line(),
            r#"{"sequences_consumed":12,"token_errors":3,"converged":false}"#
        );
    }

    #[test]
    fn score_sequence_delegates_to_viterbi() {
        let dataset = separable_dataset();
        let (model, _) = train(&dataset, &TrainConfig::new(Architecture::CrfMlp), 9).unwrap();
        let obs = &dataset.sequences[0].observations;
        let direct = viterbi(&model, obs).unwrap();
        let wrapped = score_sequence(&model, obs).unwrap();
        assert_eq!(direct, wrapped);
    }

    #[test]
    fn rejects_empty_dataset() {
        let dataset = Dataset::new(alphabet(2), vec![], 2).unwrap();
        let err = train(&dataset, &TrainConfig::new(Architecture::CrfRnn), 0);
        assert!(err.is_err());
    }
}
