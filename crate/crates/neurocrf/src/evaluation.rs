//! Score calibration and the authentication metrics suite.
//!
//! A trained model ranks sequences by their raw trellis score. To turn
//! that ranking into accept/reject decisions, an ordinary least squares
//! line is fit regressing the class value (self = 1, non-self = 0) on
//! the score; the threshold is the score where the line crosses 0.5.
//! The fit's r² doubles as a quality measure of the model's separation.
//! From the thresholded decisions come the false rejection rate (FRR),
//! false acceptance rate (FAR), their balanced accuracy
//! `100 − (FRR + FAR)/2`, the pooled token accuracy over self
//! sequences, and the F-score combining the two accuracies.
//!
//! Calibration is fit and evaluated on the same validation scores — a
//! deliberate approximation, not a leakage bug.

use crate::decoder::DecodeResult;
use crate::error::{Error, Result};
use crate::model::NeuroCrfModel;
use crate::training::score_sequence;
use crate::types::Dataset;

/// Least-squares line of class-on-score with its decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    pub slope: f64,
    pub intercept: f64,
    /// Score where `slope·s + intercept = 0.5`. With positive slope,
    /// scores at or above the threshold classify as self.
    pub threshold: f64,
    /// Coefficient of determination of the fit, in `[0, 1]`.
    pub r_square: f64,
}

/// One model's evaluation against a self and a non-self test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub frr: f64,
    pub far: f64,
    /// `100 − (frr + far)/2`.
    pub accuracy: f64,
    pub r_square: f64,
    /// Percent of correctly labeled positions, pooled over the self set.
    pub token_accuracy: f64,
    /// Harmonic mean of `accuracy` and `token_accuracy` as fractions.
    pub f_score: f64,
    /// Set when every score was identical and no threshold exists; the
    /// rates then reflect the accept-everything convention.
    pub degenerate_fit: bool,
}

impl MetricsReport {
    /// One comma-separated results row:
    /// `model-id,architecture,frr,far,accuracy,r_square,token_accuracy,f_score`.
    /// Numbers use full round-trip precision so rows are reproducible
    /// bit for bit.
    pub fn csv_row(&self, model_id: &str, architecture: &str) -> String {
        format!("{},{},{}", model_id, architecture, self.csv_fields())
    }

    /// Just the six metric columns, in header order.
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.frr, self.far, self.accuracy, self.r_square, self.token_accuracy, self.f_score
        )
    }

    /// Header matching [`MetricsReport::csv_row`].
    pub fn csv_header() -> &'static str {
        "model_id,architecture,frr,far,accuracy,r_square,token_accuracy,f_score"
    }
}

/// Fit the calibration line on validation scores.
///
/// Returns a degenerate-fit error when the scores carry no usable
/// signal: all values identical, or a fit with exactly zero slope (the
/// line never crosses 0.5).
pub fn fit_calibration(self_scores: &[f64], nonself_scores: &[f64]) -> Result<CalibrationModel> {
    if self_scores.is_empty() || nonself_scores.is_empty() {
        return Err(Error::invalid(
            "calibration needs scores from both classes",
        ));
    }
    let n = (self_scores.len() + nonself_scores.len()) as f64;
    let scores = self_scores.iter().chain(nonself_scores.iter());
    let classes = std::iter::repeat_n(1.0, self_scores.len())
        .chain(std::iter::repeat_n(0.0, nonself_scores.len()));

    let mean_s = scores.clone().sum::<f64>() / n;
    let mean_c = self_scores.len() as f64 / n;
    let mut var_s = 0.0;
    let mut var_c = 0.0;
    let mut cov = 0.0;
    for (s, c) in scores.zip(classes) {
        let ds = s - mean_s;
        let dc = c - mean_c;
        var_s += ds * ds;
        var_c += dc * dc;
        cov += ds * dc;
    }
    if var_s == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = cov / var_s;
    if slope == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let intercept = mean_c - slope * mean_s;
    Ok(CalibrationModel {
        slope,
        intercept,
        threshold: (0.5 - intercept) / slope,
        r_square: cov * cov / (var_s * var_c),
    })
}

/// False rejection and false acceptance rates (percent) at the
/// calibrated threshold. With positive slope, a score at or above the
/// threshold accepts; the orientation flips with negative slope. A
/// score exactly at the threshold always accepts.
pub fn frr_far(
    self_scores: &[f64],
    nonself_scores: &[f64],
    calibration: &CalibrationModel,
) -> (f64, f64) {
    let t = calibration.threshold;
    let accepts = |s: f64| {
        if calibration.slope >= 0.0 {
            s >= t
        } else {
            s <= t
        }
    };
    let rejected_self = self_scores.iter().filter(|s| !accepts(**s)).count();
    let accepted_nonself = nonself_scores.iter().filter(|s| accepts(**s)).count();
    (
        100.0 * rejected_self as f64 / self_scores.len() as f64,
        100.0 * accepted_nonself as f64 / nonself_scores.len() as f64,
    )
}

/// Balanced accuracy `100 − (frr + far)/2`.
pub fn accuracy_from_rates(frr: f64, far: f64) -> f64 {
    100.0 - (frr + far) / 2.0
}

/// Percent of positions labeled correctly, pooled over all sequences.
pub fn token_accuracy(decoded: &[Vec<usize>], gold: &[Vec<usize>]) -> Result<f64> {
    if decoded.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: decoded.len(),
            context: "decoded vs gold sequence count".into(),
        });
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (d, g) in decoded.iter().zip(gold) {
        if d.len() != g.len() {
            return Err(Error::DimensionMismatch {
                expected: g.len(),
                got: d.len(),
                context: "decoded vs gold sequence length".into(),
            });
        }
        total += g.len();
        correct += d.iter().zip(g).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Err(Error::Undefined(
            "token accuracy over an empty sequence set".into(),
        ));
    }
    Ok(100.0 * correct as f64 / total as f64)
}

/// Harmonic mean of the two percentages expressed as fractions:
/// `2ab/(a+b)` with `a = accuracy/100`, `b = token_accuracy/100`.
pub fn f_score(accuracy: f64, token_accuracy: f64) -> Result<f64> {
    for v in [accuracy, token_accuracy] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::invalid(format!("rate {v} outside [0, 100]")));
        }
    }
    let a = accuracy / 100.0;
    let b = token_accuracy / 100.0;
    if a + b == 0.0 {
        return Err(Error::Undefined(
            "f-score of two zero rates".into(),
        ));
    }
    Ok(2.0 * a * b / (a + b))
}

/// Metrics from already-computed scores and token accuracy. A
/// degenerate calibration (all scores identical) is absorbed into a
/// marked report using the accept-everything convention rather than
/// failing the whole experiment.
pub fn evaluate_scored(
    self_scores: &[f64],
    nonself_scores: &[f64],
    token_acc: f64,
) -> Result<MetricsReport> {
    let (frr, far, r_square, degenerate) =
        match fit_calibration(self_scores, nonself_scores) {
            Ok(cal) => {
                let (frr, far) = frr_far(self_scores, nonself_scores, &cal);
                (frr, far, cal.r_square, false)
            }
            Err(Error::DegenerateFit) => (0.0, 100.0, 0.0, true),
            Err(other) => return Err(other),
        };
    let accuracy = accuracy_from_rates(frr, far);
    Ok(MetricsReport {
        frr,
        far,
        accuracy,
        r_square,
        token_accuracy: token_acc,
        f_score: f_score(accuracy, token_acc)?,
        degenerate_fit: degenerate,
    })
}

/// Score both test sets, fit calibration on those very scores, and
/// report all metrics. Token accuracy is computed on the self set only
/// (non-self gold labels belong to other classes and are not decoded
/// targets of this model). Also returns the raw score lists for plot
/// output.
pub fn evaluate_with_scores(
    model: &NeuroCrfModel,
    self_test: &Dataset,
    nonself_test: &Dataset,
) -> Result<(MetricsReport, Vec<f64>, Vec<f64>)> {
    if self_test.is_empty() || nonself_test.is_empty() {
        return Err(Error::invalid("evaluation needs non-empty test sets"));
    }
    let self_results: Vec<DecodeResult> = self_test
        .sequences
        .iter()
        .map(|seq| score_sequence(model, &seq.observations))
        .collect::<Result<_>>()?;
    let self_scores: Vec<f64> = self_results.iter().map(|r| r.score).collect();
    let decoded: Vec<Vec<usize>> = self_results.into_iter().map(|r| r.labels).collect();
    let gold: Vec<Vec<usize>> = self_test
        .sequences
        .iter()
        .map(|s| s.labels.clone())
        .collect();
    let token_acc = token_accuracy(&decoded, &gold)?;

    let nonself_scores: Vec<f64> = nonself_test
        .sequences
        .iter()
        .map(|seq| score_sequence(model, &seq.observations).map(|r| r.score))
        .collect::<Result<_>>()?;

    let report = evaluate_scored(&self_scores, &nonself_scores, token_acc)?;
    Ok((report, self_scores, nonself_scores))
}

/// As [`evaluate_with_scores`], keeping only the report.
pub fn evaluate_model(
    model: &NeuroCrfModel,
    self_test: &Dataset,
    nonself_test: &Dataset,
) -> Result<MetricsReport> {
    evaluate_with_scores(model, self_test, nonself_test).map(|(report, _, _)| report)
}
