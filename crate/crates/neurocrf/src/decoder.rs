//! Linear-chain Viterbi decoding over neural factor scores.
//!
//! The trellis at step `t` holds one entry per candidate label with the
//! best accumulated score and a back-pointer. Step scores are additive
//! per-label energies produced by the architecture's networks; the
//! decoded path maximizes their sum. The returned probability is the
//! approximation `exp(score) / Σ_y exp(α_y[n])` over final-step
//! accumulated scores only, computed with a max-shift.
//!
//! Decoding is a pure function of `(model, observations)`; a shared
//! read-only model may serve many decodes concurrently.

use crate::error::{Error, Result};
use crate::model::NeuroCrfModel;
use crate::neural::{ModelNets, PerceptronNet};
use crate::types::{one_hot, Observation, PrevLabel};

/// Best path into one candidate label at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEntry {
    pub to: usize,
    pub from: PrevLabel,
    pub score: f64,
}

/// Per-step best-path entries for the whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTable {
    pub steps: Vec<Vec<AlphaEntry>>,
}

/// Decoded labels with the accumulated trellis score and the
/// approximate sequence probability.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub labels: Vec<usize>,
    pub score: f64,
    pub probability: f64,
}

/// State carried across steps by architectures that have any: the Elman
/// context vector. It advances once per time step from the observation
/// alone, so it is shared by all label hypotheses and the trellis stays
/// label-independent for CRF-RNN.
#[derive(Debug, Clone, PartialEq)]
pub enum CarriedState {
    Stateless,
    Context(Vec<f64>),
}

impl CarriedState {
    /// The state before the first observation: zero context for CRF-RNN,
    /// nothing for the others.
    pub fn initial(model: &NeuroCrfModel) -> CarriedState {
        match model.nets() {
            ModelNets::Rnn(net) => CarriedState::Context(net.initial_context()),
            _ => CarriedState::Stateless,
        }
    }
}

/// Additive score of each candidate label at one step, for a given
/// predecessor hypothesis.
///
/// - CRF-MLP: observation-net score of `x_t` plus edge-net score of
///   `one_hot(prev)`.
/// - CRF-RNN: recurrent-net score of `(x_t, context)`; the predecessor
///   hypothesis is irrelevant.
/// - CRF-PRCPT: perceptron score of `[x_t ⊕ one_hot(prev)]`.
pub fn step_scores(
    model: &NeuroCrfModel,
    x_t: &Observation,
    prev_label: PrevLabel,
    carried_state: &CarriedState,
) -> Result<Vec<f64>> {
    let y = model.num_labels();
    match (model.nets(), carried_state) {
        (ModelNets::Mlp { observation, edge }, _) => {
            let obs = observation.forward(x_t.features())?.scores;
            let edge = edge.forward(&one_hot(prev_label.one_hot_index(y), y)?)?.scores;
            Ok(obs.iter().zip(&edge).map(|(a, b)| a + b).collect())
        }
        (ModelNets::Rnn(net), CarriedState::Context(context)) => {
            Ok(net.forward(x_t.features(), context)?.0)
        }
        (ModelNets::Rnn(_), CarriedState::Stateless) => Err(Error::invalid(
            "recurrent model decoded without a context state",
        )),
        (ModelNets::Perceptron(net), _) => net.scores(x_t.features(), prev_label),
    }
}

/// Step scores with the per-decode and per-step work hoisted out of the
/// predecessor loop.
enum StepTable<'a> {
    /// CRF-MLP: observation scores once per step; edge scores per
    /// predecessor, computed once per decode.
    ObsPlusEdge { obs: Vec<f64>, edge: &'a [Vec<f64>] },
    /// CRF-RNN: one shared row, the predecessor does not matter.
    Shared(Vec<f64>),
    /// CRF-PRCPT: observation part plus bias once per step; the
    /// predecessor contributes a single weight-column lookup.
    Perceptron { base: Vec<f64>, net: &'a PerceptronNet },
}

impl StepTable<'_> {
    #[inline]
    fn score(&self, prev: PrevLabel, label: usize, num_labels: usize) -> f64 {
        match self {
            StepTable::ObsPlusEdge { obs, edge } => {
                obs[label] + edge[prev.one_hot_index(num_labels)][label]
            }
            StepTable::Shared(scores) => scores[label],
            StepTable::Perceptron { base, net } => {
                let slot = net.feature_dim() + prev.one_hot_index(num_labels);
                base[label] + net.output.weight(label, slot)
            }
        }
    }
}

/// Per-decode precomputation: for CRF-MLP, the edge network only ever
/// sees the `|Y| + 1` one-hot inputs, so its forwards are evaluated once
/// here instead of once per (step, predecessor).
struct ScoreProvider<'m> {
    model: &'m NeuroCrfModel,
    edgepreds: Vec<Vec<f64>>,
}

impl<'m> ScoreProvider<'m> {
    fn new(model: &'m NeuroCrfModel) -> Result<Self> {
        let y = model.num_labels();
        let edgepreds = match model.nets() {
            ModelNets::Mlp { edge, .. } => (0..=y)
                .map(|p| Ok(edge.forward(&one_hot(p, y)?)?.scores))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        Ok(ScoreProvider { model, edgepreds })
    }

    /// Scores for one step plus the state the next step will carry.
    fn step(
        &self,
        x_t: &Observation,
        state: &CarriedState,
    ) -> Result<(StepTable<'_>, CarriedState)> {
        match (self.model.nets(), state) {
            (ModelNets::Mlp { observation, .. }, _) => Ok((
                StepTable::ObsPlusEdge {
                    obs: observation.forward(x_t.features())?.scores,
                    edge: &self.edgepreds,
                },
                CarriedState::Stateless,
            )),
            (ModelNets::Rnn(net), CarriedState::Context(context)) => {
                let (scores, new_context) = net.forward(x_t.features(), context)?;
                Ok((StepTable::Shared(scores), CarriedState::Context(new_context)))
            }
            (ModelNets::Rnn(_), CarriedState::Stateless) => Err(Error::invalid(
                "recurrent model decoded without a context state",
            )),
            (ModelNets::Perceptron(net), _) => {
                let d = net.feature_dim();
                if x_t.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: x_t.dim(),
                        context: "perceptron input".into(),
                    });
                }
                let mut base = net.output.bias().to_vec();
                for (label, acc) in base.iter_mut().enumerate() {
                    let row = &net.output.weights()
                        [label * net.output.n_in()..label * net.output.n_in() + d];
                    let mut sum = 0.0;
                    for (w, xi) in row.iter().zip(x_t.features()) {
                        sum += w * xi;
                    }
                    *acc += sum;
                }
                Ok((StepTable::Perceptron { base, net }, CarriedState::Stateless))
            }
        }
    }
}

fn best_transitions(
    table: &StepTable<'_>,
    alpha_prev: &[AlphaEntry],
    num_labels: usize,
) -> Vec<AlphaEntry> {
    (0..num_labels)
        .map(|label| {
            let mut best_from = PrevLabel::Label(alpha_prev[0].to);
            let mut best_score = f64::NEG_INFINITY;
            for prev in alpha_prev {
                let s = prev.score + table.score(PrevLabel::Label(prev.to), label, num_labels);
                // strict inequality: ties go to the lowest predecessor index
                if s > best_score {
                    best_score = s;
                    best_from = PrevLabel::Label(prev.to);
                }
            }
            AlphaEntry {
                to: label,
                from: best_from,
                score: best_score,
            }
        })
        .collect()
}

/// One trellis transition: for every candidate label, the best extension
/// of the previous step's entries. Returns the new entries and the state
/// the following step must carry.
pub fn forward_step(
    model: &NeuroCrfModel,
    x_t: &Observation,
    alpha_prev: &[AlphaEntry],
    carried_state: &CarriedState,
) -> Result<(Vec<AlphaEntry>, CarriedState)> {
    if alpha_prev.is_empty() {
        return Err(Error::invalid("forward_step needs previous entries"));
    }
    let provider = ScoreProvider::new(model)?;
    let (table, next_state) = provider.step(x_t, carried_state)?;
    Ok((best_transitions(&table, alpha_prev, model.num_labels()), next_state))
}

/// Full decode: initialize from START, run the forward recursion, pick
/// the best final label (ties to the lowest index), backtrack, and
/// attach the approximate sequence probability.
pub fn viterbi(model: &NeuroCrfModel, observations: &[Observation]) -> Result<DecodeResult> {
    viterbi_with_table(model, observations).map(|(result, _)| result)
}

/// As [`viterbi`], also returning the full alpha table.
pub fn viterbi_with_table(
    model: &NeuroCrfModel,
    observations: &[Observation],
) -> Result<(DecodeResult, AlphaTable)> {
    if observations.is_empty() {
        return Err(Error::invalid("cannot decode an empty sequence"));
    }
    for obs in observations {
        if obs.dim() != model.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.feature_dim(),
                got: obs.dim(),
                context: "observation width vs model".into(),
            });
        }
    }
    let y = model.num_labels();
    let provider = ScoreProvider::new(model)?;

    let mut state = CarriedState::initial(model);
    let (table, next) = provider.step(&observations[0], &state)?;
    let mut steps = Vec::with_capacity(observations.len());
    steps.push(
        (0..y)
            .map(|label| AlphaEntry {
                to: label,
                from: PrevLabel::Start,
                score: table.score(PrevLabel::Start, label, y),
            })
            .collect::<Vec<_>>(),
    );
    state = next;

    for x_t in &observations[1..] {
        let (table, next) = provider.step(x_t, &state)?;
        let entries = best_transitions(&table, steps.last().unwrap(), y);
        steps.push(entries);
        state = next;
    }

    let final_step = steps.last().unwrap();
    let mut best = &final_step[0];
    for entry in &final_step[1..] {
        if entry.score > best.score {
            best = entry;
        }
    }
    let score = best.score;
    let probability = sequence_probability(final_step, score);

    // Backtrack through the stored from-pointers.
    let mut labels = vec![0usize; steps.len()];
    let mut cursor = best;
    for t in (0..steps.len()).rev() {
        labels[t] = cursor.to;
        if t > 0 {
            let PrevLabel::Label(prev) = cursor.from else {
                return Err(Error::Structure(
                    "START pointer before the first step".into(),
                ));
            };
            cursor = &steps[t - 1][prev];
        }
    }

    Ok((
        DecodeResult {
            labels,
            score,
            probability,
        },
        AlphaTable { steps },
    ))
}

/// `exp(score − m) / Σ_y exp(α_y − m)` over the final step's entries,
/// with `m` the maximum entry score. Always in `(0, 1]`.
pub fn sequence_probability(alpha_final: &[AlphaEntry], score: f64) -> f64 {
    let m = alpha_final
        .iter()
        .map(|e| e.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = alpha_final.iter().map(|e| (e.score - m).exp()).sum();
    (score - m).exp() / denom
}
