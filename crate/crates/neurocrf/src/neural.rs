//! From-scratch neural kernels backing the CRF factor scores.
//!
//! Three architectures share these pieces: a single-hidden-layer MLP with
//! sigmoid hidden units and linear (energy) outputs, an Elman recurrent
//! network whose previous hidden activations are appended to the next
//! input, and a single-layer perceptron over `[observation ⊕ previous
//! label]`. The MLP variants train with one backpropagation step of the
//! square loss per error position, modulated by weight elimination:
//!
//! ```text
//! w_ij <- w_ij - eta * x_i * (delta_j + 2*lambda*w_ij / (1 + w_ij^2)^2)
//! ```
//!
//! where `x_i` is the presynaptic activation of the connection (1 for
//! biases). The perceptron trains on 0/1 prediction differences averaged
//! over a mini-batch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::{hidden_size, Architecture, ModelDescriptor, PrevLabel};

/// Standard logistic function.
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weight-elimination penalty `2*lambda*w / (1 + w^2)^2`.
///
/// Vanishes at `w = 0` and as `|w| -> inf`; small weights are pushed
/// toward zero while large ones are left alone.
pub fn weight_elimination_term(w: f64, lambda: f64) -> f64 {
    let d = 1.0 + w * w;
    2.0 * lambda * w / (d * d)
}

/// Fully connected layer, weights stored row-major `[n_out][n_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        DenseLayer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    /// Rebuild a layer from stored weights (row-major) and biases.
    pub fn from_parts(n_in: usize, n_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != n_in * n_out {
            return Err(Error::DimensionMismatch {
                expected: n_in * n_out,
                got: weights.len(),
                context: "layer weight count".into(),
            });
        }
        if bias.len() != n_out {
            return Err(Error::DimensionMismatch {
                expected: n_out,
                got: bias.len(),
                context: "layer bias count".into(),
            });
        }
        let layer = DenseLayer {
            n_in,
            n_out,
            weights,
            bias,
        };
        if !layer.is_finite() {
            return Err(Error::invalid("layer parameters must be finite"));
        }
        Ok(layer)
    }

    /// Every weight and bias drawn i.i.d. from `N(0, stddev)`.
    pub fn init(n_in: usize, n_out: usize, stddev: f64, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, stddev).expect("stddev validated upstream");
        DenseLayer {
            n_in,
            n_out,
            weights: (0..n_in * n_out).map(|_| normal.sample(rng)).collect(),
            bias: (0..n_out).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weights[out * self.n_in + input]
    }

    pub fn weight_mut(&mut self, out: usize, input: usize) -> &mut f64 {
        &mut self.weights[out * self.n_in + input]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|w| w.is_finite())
    }

    /// `W·[a ⊕ b] + bias` without materializing the concatenation.
    pub fn affine_parts(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len() + b.len(), self.n_in);
        let mut out = self.bias.clone();
        for (o, acc) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let (ra, rb) = row.split_at(a.len());
            let mut sum = 0.0;
            for (w, x) in ra.iter().zip(a) {
                sum += w * x;
            }
            for (w, x) in rb.iter().zip(b) {
                sum += w * x;
            }
            *acc += sum;
        }
        out
    }

    /// `W·x + bias`.
    pub fn affine(&self, input: &[f64]) -> Vec<f64> {
        self.affine_parts(input, &[])
    }
}

/// Forward-pass activations of a two-layer network, kept for backprop.
#[derive(Debug, Clone)]
pub struct MlpForward {
    pub hidden: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Single-hidden-layer perceptron: sigmoid hidden units, linear outputs.
///
/// The linear outputs are the factor energies; no softmax is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl Mlp {
    pub fn init(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        stddev: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Mlp {
            hidden: DenseLayer::init(n_in, n_hidden, stddev, rng),
            output: DenseLayer::init(n_hidden, n_out, stddev, rng),
        }
    }

    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Mlp {
            hidden: DenseLayer::zeros(n_in, n_hidden),
            output: DenseLayer::zeros(n_hidden, n_out),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<MlpForward> {
        if x.len() != self.hidden.n_in {
            return Err(Error::DimensionMismatch {
                expected: self.hidden.n_in,
                got: x.len(),
                context: "mlp input".into(),
            });
        }
        Ok(self.forward_parts(x, &[]))
    }

    fn forward_parts(&self, a: &[f64], b: &[f64]) -> MlpForward {
        let mut hidden = self.hidden.affine_parts(a, b);
        for h in hidden.iter_mut() {
            *h = sigmoid(*h);
        }
        let scores = self.output.affine(&hidden);
        MlpForward { hidden, scores }
    }

    /// One backpropagation step of the square loss `0.5 * sum (score_k -
    /// target_k)^2` with the weight-elimination penalty on every
    /// connection. `target` is the one-hot of the gold label.
    pub fn update(&mut self, x: &[f64], target: &[f64], eta: f64, lambda: f64) -> Result<()> {
        if x.len() != self.hidden.n_in {
            return Err(Error::DimensionMismatch {
                expected: self.hidden.n_in,
                got: x.len(),
                context: "mlp update input".into(),
            });
        }
        backprop_two_layer(&mut self.hidden, &mut self.output, x, &[], target, eta, lambda);
        Ok(())
    }
}

/// Deltas computed with pre-update weights, then both layers updated.
fn backprop_two_layer(
    hidden: &mut DenseLayer,
    output: &mut DenseLayer,
    in_a: &[f64],
    in_b: &[f64],
    target: &[f64],
    eta: f64,
    lambda: f64,
) {
    debug_assert_eq!(target.len(), output.n_out);
    let mut h = hidden.affine_parts(in_a, in_b);
    for v in h.iter_mut() {
        *v = sigmoid(*v);
    }
    let scores = output.affine(&h);

    // Square-loss gradient at the linear outputs.
    let delta_out: Vec<f64> = scores.iter().zip(target).map(|(s, t)| s - t).collect();

    // Backpropagated through the output weights, times the sigmoid slope.
    let mut delta_hidden = vec![0.0; hidden.n_out];
    for (k, dh) in delta_hidden.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, dj) in delta_out.iter().enumerate() {
            acc += dj * output.weight(j, k);
        }
        *dh = acc * h[k] * (1.0 - h[k]);
    }

    for (j, dj) in delta_out.iter().enumerate() {
        let row = &mut output.weights[j * output.n_in..(j + 1) * output.n_in];
        for (w, hk) in row.iter_mut().zip(&h) {
            *w -= eta * hk * (dj + weight_elimination_term(*w, lambda));
        }
        let b = &mut output.bias[j];
        *b -= eta * (dj + weight_elimination_term(*b, lambda));
    }

    for (k, dk) in delta_hidden.iter().enumerate() {
        let row = &mut hidden.weights[k * hidden.n_in..(k + 1) * hidden.n_in];
        let (row_a, row_b) = row.split_at_mut(in_a.len());
        for (w, xi) in row_a.iter_mut().zip(in_a) {
            *w -= eta * xi * (dk + weight_elimination_term(*w, lambda));
        }
        for (w, xi) in row_b.iter_mut().zip(in_b) {
            *w -= eta * xi * (dk + weight_elimination_term(*w, lambda));
        }
        let b = &mut hidden.bias[k];
        *b -= eta * (dk + weight_elimination_term(*b, lambda));
    }

    debug_assert!(hidden.is_finite() && output.is_finite());
}

/// Elman network: the hidden layer reads `[input ⊕ context]` where the
/// context is the previous step's hidden activations. The context is
/// caller-managed state; it depends only on the observation prefix,
/// never on label hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct ElmanNet {
    pub hidden: DenseLayer,
    pub output: DenseLayer,
}

impl ElmanNet {
    pub fn init(
        n_features: usize,
        n_hidden: usize,
        n_out: usize,
        stddev: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        ElmanNet {
            hidden: DenseLayer::init(n_features + n_hidden, n_hidden, stddev, rng),
            output: DenseLayer::init(n_hidden, n_out, stddev, rng),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.n_out
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden.n_in - self.hidden.n_out
    }

    /// All-zero context for the start of a sequence.
    pub fn initial_context(&self) -> Vec<f64> {
        vec![0.0; self.hidden_width()]
    }

    pub fn forward(&self, x: &[f64], context: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() + context.len() != self.hidden.n_in {
            return Err(Error::DimensionMismatch {
                expected: self.hidden.n_in,
                got: x.len() + context.len(),
                context: "elman input ⊕ context".into(),
            });
        }
        let mut h = self.hidden.affine_parts(x, context);
        for v in h.iter_mut() {
            *v = sigmoid(*v);
        }
        let scores = self.output.affine(&h);
        Ok((scores, h))
    }

    /// Single-step backpropagation treating the context as a constant
    /// input; no backpropagation through time.
    pub fn update(
        &mut self,
        x: &[f64],
        context: &[f64],
        target: &[f64],
        eta: f64,
        lambda: f64,
    ) -> Result<()> {
        if x.len() + context.len() != self.hidden.n_in {
            return Err(Error::DimensionMismatch {
                expected: self.hidden.n_in,
                got: x.len() + context.len(),
                context: "elman update input ⊕ context".into(),
            });
        }
        backprop_two_layer(&mut self.hidden, &mut self.output, x, context, target, eta, lambda);
        Ok(())
    }
}

/// Single linear layer over `[observation ⊕ one_hot(previous label)]`,
/// START included as the extra one-hot slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronNet {
    pub output: DenseLayer,
}

impl PerceptronNet {
    pub fn init(n_features: usize, n_labels: usize, stddev: f64, rng: &mut ChaCha8Rng) -> Self {
        PerceptronNet {
            output: DenseLayer::init(n_features + n_labels + 1, n_labels, stddev, rng),
        }
    }

    pub fn num_labels(&self) -> usize {
        self.output.n_out
    }

    pub fn feature_dim(&self) -> usize {
        self.output.n_in - self.output.n_out - 1
    }

    /// `W·[x ⊕ one_hot(prev)] + b`, computed by column selection.
    pub fn scores(&self, x: &[f64], prev: PrevLabel) -> Result<Vec<f64>> {
        let d = self.feature_dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
                context: "perceptron input".into(),
            });
        }
        let slot = d + prev.one_hot_index(self.num_labels());
        let mut out = self.output.bias.clone();
        for (o, acc) in out.iter_mut().enumerate() {
            let row = &self.output.weights[o * self.output.n_in..(o + 1) * self.output.n_in];
            let mut sum = 0.0;
            for (w, xi) in row[..d].iter().zip(x) {
                sum += w * xi;
            }
            *acc += sum + row[slot];
        }
        Ok(out)
    }

    /// The input vector `[x ⊕ one_hot(prev)]` an error record stores.
    pub fn input_vector(&self, x: &[f64], prev: PrevLabel) -> Vec<f64> {
        let d = self.feature_dim();
        debug_assert_eq!(x.len(), d);
        let mut input = vec![0.0; self.output.n_in];
        input[..d].copy_from_slice(x);
        input[d + prev.one_hot_index(self.num_labels())] = 1.0;
        input
    }
}

/// One decoding mistake: the full input vector at the position, the
/// decoded label and the gold label.
#[derive(Debug, Clone)]
pub struct PerceptronError {
    pub input: Vec<f64>,
    pub predicted: usize,
    pub gold: usize,
}

/// Apply one averaged mini-batch of 0/1-loss updates: for each entry the
/// per-output error is `gold_k - predicted_k`, and the weight delta is
/// `eta` times the batch mean of the error/input outer products.
/// An empty batch is a no-op; biases are left untouched.
pub fn perceptron_accumulate_and_apply(
    net: &mut PerceptronNet,
    errors: &[PerceptronError],
    eta: f64,
) {
    if errors.is_empty() {
        return;
    }
    let n_in = net.output.n_in;
    let scale = eta / errors.len() as f64;
    for e in errors {
        if e.predicted == e.gold {
            continue;
        }
        debug_assert_eq!(e.input.len(), n_in);
        {
            let row = &mut net.output.weights[e.gold * n_in..(e.gold + 1) * n_in];
            for (w, xi) in row.iter_mut().zip(&e.input) {
                *w += scale * xi;
            }
        }
        {
            let row = &mut net.output.weights[e.predicted * n_in..(e.predicted + 1) * n_in];
            for (w, xi) in row.iter_mut().zip(&e.input) {
                *w -= scale * xi;
            }
        }
    }
    debug_assert!(net.output.is_finite());
}

/// The weight containers of one model, by architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelNets {
    /// Two MLPs: one scoring observations, one scoring label transitions.
    Mlp { observation: Mlp, edge: Mlp },
    Rnn(ElmanNet),
    Perceptron(PerceptronNet),
}

impl ModelNets {
    pub fn architecture(&self) -> Architecture {
        match self {
            ModelNets::Mlp { .. } => Architecture::CrfMlp,
            ModelNets::Rnn(_) => Architecture::CrfRnn,
            ModelNets::Perceptron(_) => Architecture::CrfPrcpt,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            ModelNets::Mlp { observation, edge } => {
                observation.hidden.is_finite()
                    && observation.output.is_finite()
                    && edge.hidden.is_finite()
                    && edge.output.is_finite()
            }
            ModelNets::Rnn(net) => net.hidden.is_finite() && net.output.is_finite(),
            ModelNets::Perceptron(net) => net.output.is_finite(),
        }
    }
}

/// Fresh weights for a descriptor, every parameter i.i.d. `N(0,
/// init_stddev)`. Deterministic for a fixed seed.
pub fn init_weights(descriptor: &ModelDescriptor, seed: u64) -> Result<ModelNets> {
    descriptor.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = descriptor.feature_dim;
    let y = descriptor.num_labels;
    let sd = descriptor.hyper.init_stddev;
    Ok(match descriptor.architecture {
        Architecture::CrfMlp => ModelNets::Mlp {
            observation: Mlp::init(d, descriptor.hidden_size, y, sd, &mut rng),
            edge: Mlp::init(y + 1, hidden_size(y + 1, y), y, sd, &mut rng),
        },
        Architecture::CrfRnn => {
            ModelNets::Rnn(ElmanNet::init(d, descriptor.hidden_size, y, sd, &mut rng))
        }
        Architecture::CrfPrcpt => ModelNets::Perceptron(PerceptronNet::init(d, y, sd, &mut rng)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::one_hot;
    use approx::assert_relative_eq;

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Loss the updates descend: 0.5 * sum (score - target)^2.
    fn square_loss(hidden: &DenseLayer, output: &DenseLayer, input: &[f64], target: &[f64]) -> f64 {
        let mut h = hidden.affine(input);
        for v in h.iter_mut() {
            *v = sigmoid(*v);
        }
        let scores = output.affine(&h);
        scores
            .iter()
            .zip(target)
            .map(|(s, t)| 0.5 * (s - t) * (s - t))
            .sum()
    }

    /// Central finite differences of the square loss for every parameter
    /// of the given net. Independent of the backprop path.
    fn finite_difference_grads(net: &Mlp, input: &[f64], target: &[f64], eps: f64) -> Vec<f64> {
        let mut grads = Vec::new();
        let n_params = net.hidden.weights.len()
            + net.hidden.bias.len()
            + net.output.weights.len()
            + net.output.bias.len();
        for p in 0..n_params {
            let mut plus = net.clone();
            let mut minus = net.clone();
            *param_mut(&mut plus, p) += eps;
            *param_mut(&mut minus, p) -= eps;
            let lp = square_loss(&plus.hidden, &plus.output, input, target);
            let lm = square_loss(&minus.hidden, &minus.output, input, target);
            grads.push((lp - lm) / (2.0 * eps));
        }
        grads
    }

    fn param_mut(net: &mut Mlp, mut idx: usize) -> &mut f64 {
        let nw = net.hidden.weights.len();
        if idx < nw {
            return &mut net.hidden.weights[idx];
        }
        idx -= nw;
        let nb = net.hidden.bias.len();
        if idx < nb {
            return &mut net.hidden.bias[idx];
        }
        idx -= nb;
        let ow = net.output.weights.len();
        if idx < ow {
            return &mut net.output.weights[idx];
        }
        idx -= ow;
        &mut net.output.bias[idx]
    }

    fn param(net: &Mlp, idx: usize) -> f64 {
        *param_mut(&mut net.clone(), idx)
    }

    #[test]
    fn forward_zero_net_gives_half_hidden_zero_scores() {
        let net = Mlp::zeros(3, 2, 2);
        let out = net.forward(&[1.0, 0.0, 1.0]).unwrap();
        assert_eq!(out.hidden, vec![0.5, 0.5]);
        assert_eq!(out.scores, vec![0.0, 0.0]);
    }

    #[test]
    fn forward_hand_computed_single_unit() {
        // w1 = 1, w2 = 2, biases 0, x = [0] => score = 2 * sigmoid(0) = 1.
        let mut net = Mlp::zeros(1, 1, 1);
        *net.hidden.weight_mut(0, 0) = 1.0;
        *net.output.weight_mut(0, 0) = 2.0;
        let out = net.forward(&[0.0]).unwrap();
        assert_relative_eq!(out.scores[0], 1.0);
        // and with x = [1]: 2 * sigmoid(1)
        let out = net.forward(&[1.0]).unwrap();
        assert_relative_eq!(out.scores[0], 2.0 * sigmoid(1.0));
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let net = Mlp::zeros(3, 2, 2);
        assert!(matches!(
            net.forward(&[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn weight_elimination_values() {
        // w = 1, lambda = 0.001: 2 * 0.001 * 1 / (1 + 1)^2 = 0.0005
        assert_relative_eq!(weight_elimination_term(1.0, 0.001), 0.0005);
        assert_eq!(weight_elimination_term(0.0, 0.001), 0.0);
        assert!(weight_elimination_term(1e6, 0.001).abs() < 1e-14);
    }

    #[test]
    fn weight_elimination_peaks_near_one_over_sqrt3() {
        let lambda = 0.01;
        let peak = 1.0 / 3.0f64.sqrt();
        let at_peak = weight_elimination_term(peak, lambda).abs();
        for i in 1..200 {
            let w = i as f64 * 0.05;
            assert!(weight_elimination_term(w, lambda).abs() <= at_peak + 1e-12);
        }
        // symmetric and odd
        assert_relative_eq!(
            weight_elimination_term(-peak, lambda),
            -weight_elimination_term(peak, lambda)
        );
    }

    #[test]
    fn update_matches_finite_differences_at_lambda_zero() {
        let mut rng = seeded(7);
        for case in 0..20 {
            let net = Mlp::init(3, 2, 2, 0.4, &mut rng);
            let x = [1.0, 0.0, 1.0];
            let target = one_hot(case % 2, 1).unwrap(); // length-2 one-hot
            let eta = 0.05;
            let fd = finite_difference_grads(&net, &x, &target, 1e-4);

            let mut updated = net.clone();
            updated.update(&x, &target, eta, 0.0).unwrap();
            for (p, g) in fd.iter().enumerate() {
                let implied = (param(&net, p) - param(&updated, p)) / eta;
                let denom = g.abs().max(implied.abs()).max(1e-8);
                assert!(
                    ((implied - g) / denom).abs() < 1e-4,
                    "param {p}: implied {implied} vs fd {g}"
                );
            }
        }
    }

    #[test]
    fn update_applies_penalty_through_presynaptic_activation() {
        // Zero input and zero target: deltas vanish at every node except
        // the output bias path, so hidden-weight movement comes only from
        // the eta * x_i * penalty term, which is zero when x_i = 0.
        let mut net = Mlp::zeros(2, 1, 1);
        *net.hidden.weight_mut(0, 0) = 1.0;
        *net.hidden.weight_mut(0, 1) = 1.0;
        net.update(&[0.0, 1.0], &[0.0], 1.0, 0.001).unwrap();
        // x_0 = 0: untouched by both gradient and penalty.
        assert_eq!(net.hidden.weight(0, 0), 1.0);
        // x_1 = 1: moved at least by the penalty.
        assert!(net.hidden.weight(0, 1) != 1.0);
    }

    #[test]
    fn elman_zero_net_and_zero_context() {
        let net = ElmanNet {
            hidden: DenseLayer::zeros(4, 2),
            output: DenseLayer::zeros(2, 3),
        };
        let ctx = net.initial_context();
        assert_eq!(ctx, vec![0.0, 0.0]);
        let (scores, new_ctx) = net.forward(&[1.0, 0.0], &ctx).unwrap();
        assert_eq!(scores, vec![0.0, 0.0, 0.0]);
        assert_eq!(new_ctx, vec![0.5, 0.5]);
    }

    #[test]
    fn elman_context_changes_scores_for_identical_inputs() {
        let mut rng = seeded(11);
        let net = ElmanNet::init(2, 2, 2, 0.5, &mut rng);
        let x = [1.0, 0.0];
        let ctx0 = net.initial_context();
        let (s0, ctx1) = net.forward(&x, &ctx0).unwrap();
        let (s1, _) = net.forward(&x, &ctx1).unwrap();
        assert_ne!(s0, s1);
    }

    #[test]
    fn elman_update_with_zero_context_equals_widened_mlp_update() {
        let mut rng = seeded(3);
        let elman = ElmanNet::init(2, 2, 2, 0.3, &mut rng);
        let mlp = Mlp {
            hidden: elman.hidden.clone(),
            output: elman.output.clone(),
        };

        let mut elman_up = elman.clone();
        elman_up
            .update(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 0.0], 0.1, 0.001)
            .unwrap();

        let mut mlp_up = mlp;
        mlp_up
            .update(&[1.0, 1.0, 0.0, 0.0], &[1.0, 0.0], 0.1, 0.001)
            .unwrap();

        assert_eq!(elman_up.hidden, mlp_up.hidden);
        assert_eq!(elman_up.output, mlp_up.output);
    }

    #[test]
    fn elman_update_matches_finite_differences_with_fixed_context() {
        let mut rng = seeded(19);
        let net = ElmanNet::init(2, 2, 2, 0.4, &mut rng);
        let x = [1.0, 0.0];
        let ctx = [0.3, -0.2];
        let target = [0.0, 1.0];
        let eta = 0.05;
        let eps = 1e-4;

        // Reuse the MLP harness over the concatenated input.
        let as_mlp = Mlp {
            hidden: net.hidden.clone(),
            output: net.output.clone(),
        };
        let full_input = [x[0], x[1], ctx[0], ctx[1]];
        let fd = finite_difference_grads(&as_mlp, &full_input, &target, eps);

        let mut updated = net.clone();
        updated.update(&x, &ctx, &target, eta, 0.0).unwrap();
        let updated_mlp = Mlp {
            hidden: updated.hidden,
            output: updated.output,
        };
        for (p, g) in fd.iter().enumerate() {
            let implied = (param(&as_mlp, p) - param(&updated_mlp, p)) / eta;
            let denom = g.abs().max(implied.abs()).max(1e-8);
            assert!(((implied - g) / denom).abs() < 1e-4);
        }
    }

    #[test]
    fn perceptron_scores_by_hand() {
        // d = 1, |Y| = 2: input layout [x, prev0, prev1, START].
        let mut net = PerceptronNet {
            output: DenseLayer::zeros(4, 2),
        };
        let w = [[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]];
        for (o, row) in w.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                *net.output.weight_mut(o, i) = *v;
            }
        }
        net.output.bias_mut()[0] = 0.5;

        let s = net.scores(&[1.0], PrevLabel::Start).unwrap();
        assert_eq!(s, vec![1.0 + 4.0 + 0.5, 5.0 + 8.0]);
        let s = net.scores(&[1.0], PrevLabel::Label(0)).unwrap();
        assert_eq!(s, vec![1.0 + 2.0 + 0.5, 5.0 + 6.0]);
        // changing prev only shifts by the one-hot column difference
        let s1 = net.scores(&[1.0], PrevLabel::Label(1)).unwrap();
        assert_eq!(s1[0] - s[0], 3.0 - 2.0);
        assert_eq!(s1[1] - s[1], 7.0 - 6.0);
    }

    #[test]
    fn perceptron_scores_match_explicit_concatenation() {
        let mut rng = seeded(23);
        let net = PerceptronNet::init(3, 2, 0.5, &mut rng);
        for prev in [PrevLabel::Start, PrevLabel::Label(0), PrevLabel::Label(1)] {
            let x = [1.0, 0.0, 1.0];
            let direct = net.scores(&x, prev).unwrap();
            let concat = net.input_vector(&x, prev);
            let explicit = net.output.affine(&concat);
            assert_eq!(direct, explicit);
        }
    }

    #[test]
    fn perceptron_batch_update_hand_case() {
        // x = e1 (second unit), predicted 0, gold 1, eta = 1:
        // w[1][1] += 1, w[0][1] -= 1, everything else unchanged.
        let mut net = PerceptronNet {
            output: DenseLayer::zeros(4, 2),
        };
        let err = PerceptronError {
            input: vec![0.0, 1.0, 0.0, 0.0],
            predicted: 0,
            gold: 1,
        };
        perceptron_accumulate_and_apply(&mut net, &[err], 1.0);
        assert_eq!(net.output.weight(1, 1), 1.0);
        assert_eq!(net.output.weight(0, 1), -1.0);
        for o in 0..2 {
            for i in [0usize, 2, 3] {
                assert_eq!(net.output.weight(o, i), 0.0);
            }
        }
        assert_eq!(net.output.bias(), &[0.0, 0.0]);
    }

    #[test]
    fn perceptron_batch_mean_not_sum() {
        let make_err = || PerceptronError {
            input: vec![1.0, 0.0, 0.0, 0.0],
            predicted: 0,
            gold: 1,
        };
        let mut one = PerceptronNet {
            output: DenseLayer::zeros(4, 2),
        };
        perceptron_accumulate_and_apply(&mut one, &[make_err()], 0.5);
        let mut two = PerceptronNet {
            output: DenseLayer::zeros(4, 2),
        };
        perceptron_accumulate_and_apply(&mut two, &[make_err(), make_err()], 0.5);
        assert_eq!(one.output.weights(), two.output.weights());
    }

    #[test]
    fn perceptron_agreeing_entries_are_no_ops() {
        let mut net = PerceptronNet {
            output: DenseLayer::zeros(4, 2),
        };
        let err = PerceptronError {
            input: vec![1.0, 1.0, 0.0, 0.0],
            predicted: 1,
            gold: 1,
        };
        perceptron_accumulate_and_apply(&mut net, &[err], 1.0);
        assert!(net.output.weights().iter().all(|w| *w == 0.0));
        perceptron_accumulate_and_apply(&mut net, &[], 1.0); // empty: no-op
        assert!(net.output.weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn init_weights_deterministic_and_architecture_shaped() {
        let desc = ModelDescriptor::new(Architecture::CrfMlp, 8, 3).unwrap();
        let a = init_weights(&desc, 42).unwrap();
        let b = init_weights(&desc, 42).unwrap();
        assert_eq!(a, b);
        let c = init_weights(&desc, 43).unwrap();
        assert_ne!(a, c);

        match a {
            ModelNets::Mlp { observation, edge } => {
                assert_eq!(observation.hidden.n_in(), 8);
                assert_eq!(observation.output.n_out(), 3);
                assert_eq!(edge.hidden.n_in(), 4); // |Y| + START
                assert_eq!(edge.hidden.n_out(), hidden_size(4, 3));
                assert_eq!(edge.output.n_out(), 3);
            }
            _ => panic!("wrong arch"),
        }

        let desc = ModelDescriptor::new(Architecture::CrfRnn, 8, 3).unwrap();
        match init_weights(&desc, 1).unwrap() {
            ModelNets::Rnn(net) => {
                assert_eq!(net.feature_dim(), 8);
                assert_eq!(net.hidden_width(), desc.hidden_size);
            }
            _ => panic!("wrong arch"),
        }

        let desc = ModelDescriptor::new(Architecture::CrfPrcpt, 8, 3).unwrap();
        match init_weights(&desc, 1).unwrap() {
            ModelNets::Perceptron(net) => {
                assert_eq!(net.feature_dim(), 8);
                assert_eq!(net.num_labels(), 3);
                assert_eq!(net.output.n_in(), 8 + 3 + 1);
            }
            _ => panic!("wrong arch"),
        }
    }

    #[test]
    fn init_weights_sample_statistics() {
        // Large sample mean ~ 0 and stddev ~ init_stddev.
        let mut hyper = crate::types::HyperParams::default();
        hyper.init_stddev = 0.000_15;
        let desc = ModelDescriptor::with_hyper(Architecture::CrfPrcpt, 999, 999, hyper).unwrap();
        let nets = init_weights(&desc, 5).unwrap();
        let ModelNets::Perceptron(net) = nets else {
            panic!()
        };
        let ws = net.output.weights();
        let n = ws.len() as f64;
        assert!(ws.len() > 1_000_000);
        let mean = ws.iter().sum::<f64>() / n;
        let var = ws.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 3e-6, "mean {mean}");
        let sd = var.sqrt();
        assert!((sd - 0.000_15).abs() / 0.000_15 < 0.02, "stddev {sd}");
    }
}
