//! The trained artifact: weights plus everything needed to use them.
//!
//! A model couples one architecture's weight containers with the label
//! alphabet and the descriptor it was built from, so decoding never has
//! to guess dimensions. Models persist as a self-describing text format
//! (versioned header, architecture tag, dimensions, then row-major
//! weight arrays in decimal). `f64` values are written with Rust's
//! shortest round-trip formatting, so save/load reproduces weights
//! bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::{DenseLayer, ElmanNet, Mlp, ModelNets, PerceptronNet};
use crate::types::{hidden_size, Architecture, HyperParams, LabelAlphabet, ModelDescriptor};

const FORMAT_HEADER: &str = "neurocrf model v1";

/// A per-class sequence model: descriptor, alphabet, and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuroCrfModel {
    model_id: String,
    descriptor: ModelDescriptor,
    alphabet: LabelAlphabet,
    nets: ModelNets,
}

impl NeuroCrfModel {
    pub fn new(
        model_id: impl Into<String>,
        descriptor: ModelDescriptor,
        alphabet: LabelAlphabet,
        nets: ModelNets,
    ) -> Result<Self> {
        let model_id = model_id.into();
        if model_id.is_empty() || model_id.contains(['\n', '\r']) {
            return Err(Error::invalid("model id must be non-empty, single-line"));
        }
        descriptor.validate()?;
        if alphabet.len() != descriptor.num_labels {
            return Err(Error::DimensionMismatch {
                expected: descriptor.num_labels,
                got: alphabet.len(),
                context: "alphabet size vs descriptor".into(),
            });
        }
        if nets.architecture() != descriptor.architecture {
            return Err(Error::invalid(format!(
                "weights are {} but descriptor says {}",
                nets.architecture(),
                descriptor.architecture
            )));
        }
        check_shapes(&descriptor, &nets)?;
        Ok(NeuroCrfModel {
            model_id,
            descriptor,
            alphabet,
            nets,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn architecture(&self) -> Architecture {
        self.descriptor.architecture
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    pub fn alphabet(&self) -> &LabelAlphabet {
        &self.alphabet
    }

    pub fn num_labels(&self) -> usize {
        self.descriptor.num_labels
    }

    pub fn feature_dim(&self) -> usize {
        self.descriptor.feature_dim
    }

    pub fn nets(&self) -> &ModelNets {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut ModelNets {
        &mut self.nets
    }

    /// Render the model in the versioned text format.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let h = &self.descriptor.hyper;
        writeln!(out, "{FORMAT_HEADER}").unwrap();
        writeln!(out, "model-id {}", self.model_id).unwrap();
        writeln!(out, "architecture {}", self.descriptor.architecture).unwrap();
        writeln!(out, "feature-dim {}", self.descriptor.feature_dim).unwrap();
        writeln!(out, "num-labels {}", self.descriptor.num_labels).unwrap();
        writeln!(out, "hidden-size {}", self.descriptor.hidden_size).unwrap();
        writeln!(
            out,
            "hyper {} {} {} {} {} {}",
            h.learning_rate,
            h.regularization,
            h.max_sgd_examples,
            h.init_stddev,
            h.minibatch,
            h.rng_seed
        )
        .unwrap();
        writeln!(out, "labels {}", self.alphabet.len()).unwrap();
        for label in self.alphabet.labels() {
            writeln!(out, "{label}").unwrap();
        }
        match &self.nets {
            ModelNets::Mlp { observation, edge } => {
                write_layer(&mut out, "observation-hidden", &observation.hidden);
                write_layer(&mut out, "observation-output", &observation.output);
                write_layer(&mut out, "edge-hidden", &edge.hidden);
                write_layer(&mut out, "edge-output", &edge.output);
            }
            ModelNets::Rnn(net) => {
                write_layer(&mut out, "recurrent-hidden", &net.hidden);
                write_layer(&mut out, "recurrent-output", &net.output);
            }
            ModelNets::Perceptron(net) => {
                write_layer(&mut out, "perceptron-output", &net.output);
            }
        }
        writeln!(out, "end").unwrap();
        out
    }

    /// Parse the text format; `source` only labels error messages.
    pub fn deserialize(text: &str, source: &str) -> Result<Self> {
        let mut lines = Cursor::new(text, source);
        lines.expect_exact(FORMAT_HEADER)?;
        let model_id = lines.expect_prefixed("model-id")?.to_string();
        let architecture: Architecture = lines
            .expect_prefixed("architecture")?
            .parse()
            .map_err(|e: Error| lines.err_at(e.to_string()))?;
        let feature_dim = lines.parse_field::<usize>("feature-dim")?;
        let num_labels = lines.parse_field::<usize>("num-labels")?;
        let hidden = lines.parse_field::<usize>("hidden-size")?;
        let hyper_line = lines.expect_prefixed("hyper")?.to_string();
        let hyper = parse_hyper(&hyper_line).map_err(|m| lines.err_at(m))?;
        let label_count = lines.parse_field::<usize>("labels")?;
        let mut labels = Vec::with_capacity(label_count);
        for _ in 0..label_count {
            labels.push(lines.next_line()?.to_string());
        }
        let alphabet = LabelAlphabet::new(labels)?;

        let mut descriptor =
            ModelDescriptor::with_hyper(architecture, feature_dim, num_labels, hyper)?;
        descriptor.hidden_size = hidden;
        descriptor.validate()?;

        let nets = match architecture {
            Architecture::CrfMlp => ModelNets::Mlp {
                observation: Mlp {
                    hidden: read_layer(&mut lines, "observation-hidden")?,
                    output: read_layer(&mut lines, "observation-output")?,
                },
                edge: Mlp {
                    hidden: read_layer(&mut lines, "edge-hidden")?,
                    output: read_layer(&mut lines, "edge-output")?,
                },
            },
            Architecture::CrfRnn => ModelNets::Rnn(ElmanNet {
                hidden: read_layer(&mut lines, "recurrent-hidden")?,
                output: read_layer(&mut lines, "recurrent-output")?,
            }),
            Architecture::CrfPrcpt => ModelNets::Perceptron(PerceptronNet {
                output: read_layer(&mut lines, "perceptron-output")?,
            }),
        };
        lines.expect_exact("end")?;
        NeuroCrfModel::new(model_id, descriptor, alphabet, nets)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.serialize()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::deserialize(&text, &path.display().to_string())
    }
}

fn check_shapes(descriptor: &ModelDescriptor, nets: &ModelNets) -> Result<()> {
    let d = descriptor.feature_dim;
    let y = descriptor.num_labels;
    let h = descriptor.hidden_size;
    let check = |ok: bool, what: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("model weight shape mismatch: {what}")))
        }
    };
    match nets {
        ModelNets::Mlp { observation, edge } => {
            check(observation.hidden.n_in() == d, "observation hidden inputs")?;
            check(observation.hidden.n_out() == h, "observation hidden units")?;
            check(observation.output.n_in() == h, "observation output inputs")?;
            check(observation.output.n_out() == y, "observation outputs")?;
            check(edge.hidden.n_in() == y + 1, "edge hidden inputs")?;
            check(
                edge.hidden.n_out() == hidden_size(y + 1, y),
                "edge hidden units",
            )?;
            check(edge.output.n_in() == edge.hidden.n_out(), "edge output inputs")?;
            check(edge.output.n_out() == y, "edge outputs")?;
        }
        ModelNets::Rnn(net) => {
            check(net.feature_dim() == d, "recurrent feature inputs")?;
            check(net.hidden_width() == h, "recurrent hidden units")?;
            check(net.output.n_in() == h, "recurrent output inputs")?;
            check(net.output.n_out() == y, "recurrent outputs")?;
        }
        ModelNets::Perceptron(net) => {
            check(net.feature_dim() == d, "perceptron feature inputs")?;
            check(net.num_labels() == y, "perceptron outputs")?;
        }
    }
    Ok(())
}

fn write_layer(out: &mut String, name: &str, layer: &DenseLayer) {
    writeln!(out, "layer {name} {} {}", layer.n_in(), layer.n_out()).unwrap();
    for o in 0..layer.n_out() {
        let row = &layer.weights()[o * layer.n_in()..(o + 1) * layer.n_in()];
        push_row(out, row);
    }
    push_row(out, layer.bias());
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").unwrap();
    }
    out.push('\n');
}

fn read_layer(lines: &mut Cursor, name: &str) -> Result<DenseLayer> {
    let header = lines.expect_prefixed("layer")?.to_string();
    let mut parts = header.split_whitespace();
    let got_name = parts.next().unwrap_or("");
    if got_name != name {
        return Err(lines.err_at(format!("expected layer {name}, found {got_name}")));
    }
    let n_in: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| lines.err_at("bad layer input count".to_string()))?;
    let n_out: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| lines.err_at("bad layer output count".to_string()))?;
    let mut weights = Vec::with_capacity(n_in * n_out);
    for _ in 0..n_out {
        lines.parse_row(n_in, &mut weights)?;
    }
    let mut bias = Vec::with_capacity(n_out);
    lines.parse_row(n_out, &mut bias)?;
    DenseLayer::from_parts(n_in, n_out, weights, bias)
}

fn parse_hyper(line: &str) -> std::result::Result<HyperParams, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(format!("hyper line needs 6 fields, found {}", fields.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        fields[i]
            .parse()
            .map_err(|_| format!("bad hyper field {:?}", fields[i]))
    };
    let int = |i: usize| -> std::result::Result<u64, String> {
        fields[i]
            .parse()
            .map_err(|_| format!("bad hyper field {:?}", fields[i]))
    };
    Ok(HyperParams {
        learning_rate: num(0)?,
        regularization: num(1)?,
        max_sgd_examples: int(2)? as usize,
        init_stddev: num(3)?,
        minibatch: int(4)? as usize,
        rng_seed: int(5)?,
    })
}

/// Line iterator carrying position info for parse diagnostics.
struct Cursor<'a> {
    lines: std::str::Lines<'a>,
    source: &'a str,
    line_no: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        Cursor {
            lines: text.lines(),
            source,
            line_no: 0,
        }
    }

    fn err_at(&self, message: String) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: self.line_no,
            message,
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| self.err_at("unexpected end of file".to_string()))
    }

    fn expect_exact(&mut self, expected: &str) -> Result<()> {
        let line = self.next_line()?;
        if line.trim_end() != expected {
            return Err(self.err_at(format!("expected {expected:?}, found {line:?}")));
        }
        Ok(())
    }

    fn expect_prefixed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line()?;
        match line.strip_prefix(key).map(str::trim) {
            Some(rest) if line.starts_with(key) => Ok(rest),
            _ => Err(self.err_at(format!("expected a {key:?} line, found {line:?}"))),
        }
    }

    fn parse_field<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let value = self.expect_prefixed(key)?;
        value
            .parse()
            .map_err(|_| self.err_at(format!("bad {key} value {value:?}")))
    }

    fn parse_row(&mut self, expected: usize, into: &mut Vec<f64>) -> Result<()> {
        let line = self.next_line()?;
        let before = into.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| self.err_at(format!("bad number {tok:?}")))?;
            into.push(v);
        }
        if into.len() - before != expected {
            return Err(self.err_at(format!(
                "expected {expected} values, found {}",
                into.len() - before
            )));
        }
        Ok(())
    }
}
