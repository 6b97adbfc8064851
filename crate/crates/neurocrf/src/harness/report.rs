//! Aggregation and on-disk layout of benchmark results.
//!
//! Three levels of summary sit above the raw rows: per-model averages
//! over iterations (the unit plotted per word or per user), per-
//! architecture mean ± sample standard deviation over those averages,
//! and paired two-sided t-tests between architectures on the same
//! model set. Writers emit plain comma-separated text with full
//! round-trip float precision so files are reproducible bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::harness::{BenchmarkOutput, ExperimentRow};
use crate::types::Architecture;

/// The six reported metrics as one point; used for both means and
/// standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub frr: f64,
    pub far: f64,
    pub accuracy: f64,
    pub r_square: f64,
    pub token_accuracy: f64,
    pub f_score: f64,
}

impl MetricsSummary {
    fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.frr, self.far, self.accuracy, self.r_square, self.token_accuracy, self.f_score
        )
    }
}

/// Mean metrics for one (architecture, model) over its iterations.
#[derive(Debug, Clone)]
pub struct PerModelRow {
    pub model_id: String,
    pub architecture: Architecture,
    pub iterations: usize,
    pub mean: MetricsSummary,
}

/// Mean ± standard deviation over the per-model averages of one
/// architecture.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub architecture: Architecture,
    pub models: usize,
    pub mean: MetricsSummary,
    pub std: MetricsSummary,
}

/// Paired two-sided t-test between two architectures on one metric.
#[derive(Debug, Clone)]
pub struct SignificanceRow {
    pub metric: String,
    pub architecture_a: Architecture,
    pub architecture_b: Architecture,
    /// Number of paired models.
    pub models: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub p: f64,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Paired two-sided t-test on matched samples; returns `(t, p)`.
///
/// A zero-variance difference vector short-circuits: identical samples
/// give `p = 1`, a constant non-zero shift gives `p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::invalid("paired samples differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData(
            "paired t-test needs at least two pairs".into(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean_d, sd_d) = mean_std(&diffs);
    if sd_d == 0.0 {
        return Ok(if mean_d == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean_d), 0.0)
        });
    }
    let n = diffs.len() as f64;
    let t = mean_d / (sd_d / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::invalid(format!("t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok((t, p.clamp(0.0, 1.0)))
}

fn metric_values(reports: &[&MetricsReport], pick: impl Fn(&MetricsReport) -> f64) -> Vec<f64> {
    reports.iter().map(|r| pick(r)).collect()
}

fn summary_of(reports: &[&MetricsReport]) -> (MetricsSummary, MetricsSummary) {
    let (frr_m, frr_s) = mean_std(&metric_values(reports, |r| r.frr));
    let (far_m, far_s) = mean_std(&metric_values(reports, |r| r.far));
    let (acc_m, acc_s) = mean_std(&metric_values(reports, |r| r.accuracy));
    let (r2_m, r2_s) = mean_std(&metric_values(reports, |r| r.r_square));
    let (tok_m, tok_s) = mean_std(&metric_values(reports, |r| r.token_accuracy));
    let (f_m, f_s) = mean_std(&metric_values(reports, |r| r.f_score));
    (
        MetricsSummary {
            frr: frr_m,
            far: far_m,
            accuracy: acc_m,
            r_square: r2_m,
            token_accuracy: tok_m,
            f_score: f_m,
        },
        MetricsSummary {
            frr: frr_s,
            far: far_s,
            accuracy: acc_s,
            r_square: r2_s,
            token_accuracy: tok_s,
            f_score: f_s,
        },
    )
}

fn summary_points(rows: &[&PerModelRow], pick: impl Fn(&MetricsSummary) -> f64) -> Vec<f64> {
    rows.iter().map(|r| pick(&r.mean)).collect()
}

/// Collapse raw rows into per-model averages and per-architecture
/// aggregates. Rows must already be in canonical order.
pub fn summarize(rows: &[ExperimentRow]) -> (Vec<PerModelRow>, Vec<AggregateRow>) {
    let mut grouped: BTreeMap<(String, String), Vec<&ExperimentRow>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry((row.architecture.name().to_string(), row.model_id.clone()))
            .or_default()
            .push(row);
    }
    let mut per_model = Vec::new();
    for ((_, model_id), unit_rows) in &grouped {
        let reports: Vec<&MetricsReport> = unit_rows.iter().map(|r| &r.metrics).collect();
        let (mean, _) = summary_of(&reports);
        per_model.push(PerModelRow {
            model_id: model_id.clone(),
            architecture: unit_rows[0].architecture,
            iterations: unit_rows.len(),
            mean,
        });
    }

    let mut aggregates = Vec::new();
    for arch in Architecture::ALL {
        let arch_rows: Vec<&PerModelRow> = per_model
            .iter()
            .filter(|r| r.architecture == arch)
            .collect();
        if arch_rows.is_empty() {
            continue;
        }
        let mut mean = MetricsSummary {
            frr: 0.0,
            far: 0.0,
            accuracy: 0.0,
            r_square: 0.0,
            token_accuracy: 0.0,
            f_score: 0.0,
        };
        let mut std = mean;
        let fields: [(fn(&MetricsSummary) -> f64, fn(&mut MetricsSummary) -> &mut f64); 6] = [
            (|s| s.frr, |s| &mut s.frr),
            (|s| s.far, |s| &mut s.far),
            (|s| s.accuracy, |s| &mut s.accuracy),
            (|s| s.r_square, |s| &mut s.r_square),
            (|s| s.token_accuracy, |s| &mut s.token_accuracy),
            (|s| s.f_score, |s| &mut s.f_score),
        ];
        for (get, set) in fields {
            let (m, s) = mean_std(&summary_points(&arch_rows, get));
            *set(&mut mean) = m;
            *set(&mut std) = s;
        }
        aggregates.push(AggregateRow {
            architecture: arch,
            models: arch_rows.len(),
            mean,
            std,
        });
    }
    (per_model, aggregates)
}

/// Paired significance tests over per-model averages for every
/// architecture pair present, on accuracy and token accuracy. Pairs
/// are matched on model id; pairs with fewer than two common models
/// are omitted.
pub fn significance(per_model: &[PerModelRow]) -> Vec<SignificanceRow> {
    let mut by_arch: BTreeMap<&str, BTreeMap<&str, &MetricsSummary>> = BTreeMap::new();
    for row in per_model {
        by_arch
            .entry(row.architecture.name())
            .or_default()
            .insert(&row.model_id, &row.mean);
    }
    let present: Vec<Architecture> = Architecture::ALL
        .into_iter()
        .filter(|a| by_arch.contains_key(a.name()))
        .collect();

    let metrics: [(&str, fn(&MetricsSummary) -> f64); 2] = [
        ("accuracy", |s| s.accuracy),
        ("token_accuracy", |s| s.token_accuracy),
    ];
    let mut out = Vec::new();
    for (i, &arch_a) in present.iter().enumerate() {
        for &arch_b in &present[i + 1..] {
            let side_a = &by_arch[arch_a.name()];
            let side_b = &by_arch[arch_b.name()];
            let common: Vec<&str> = side_a
                .keys()
                .filter(|m| side_b.contains_key(*m))
                .copied()
                .collect();
            if common.len() < 2 {
                continue;
            }
            for (metric, pick) in metrics {
                let values_a: Vec<f64> = common.iter().map(|m| pick(side_a[m])).collect();
                let values_b: Vec<f64> = common.iter().map(|m| pick(side_b[m])).collect();
                let (mean_a, _) = mean_std(&values_a);
                let (mean_b, _) = mean_std(&values_b);
                let (t, p) = match paired_t_test(&values_a, &values_b) {
                    Ok(tp) => tp,
                    Err(_) => continue,
                };
                out.push(SignificanceRow {
                    metric: metric.to_string(),
                    architecture_a: arch_a,
                    architecture_b: arch_b,
                    models: common.len(),
                    mean_a,
                    mean_b,
                    t,
                    p,
                });
            }
        }
    }
    out
}

/// Sort rows into the canonical (architecture, model id, iteration)
/// order and assemble the full output bundle.
pub fn assemble(
    mut rows: Vec<ExperimentRow>,
    mut scatters: Vec<crate::harness::ScoreScatter>,
    skipped: Vec<String>,
) -> BenchmarkOutput {
    rows.sort_by(|a, b| {
        (a.architecture.name(), &a.model_id, a.iteration).cmp(&(
            b.architecture.name(),
            &b.model_id,
            b.iteration,
        ))
    });
    scatters.sort_by(|a, b| {
        (a.architecture.name(), &a.model_id).cmp(&(b.architecture.name(), &b.model_id))
    });
    let (per_model, aggregates) = summarize(&rows);
    let significance = significance(&per_model);
    BenchmarkOutput {
        rows,
        per_model,
        aggregates,
        significance,
        scatters,
        skipped,
    }
}

/// Header of `results.csv`.
pub const RESULTS_HEADER: &str =
    "model_id,architecture,iteration,frr,far,accuracy,r_square,token_accuracy,f_score";
/// Header of `seeds.csv`, the manifest that reproduces any row.
pub const SEEDS_HEADER: &str = "model_id,architecture,iteration,partition_seed,train_seed";

impl ExperimentRow {
    /// One `results.csv` line.
    pub fn results_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.model_id,
            self.architecture.name(),
            self.iteration,
            self.metrics.csv_fields()
        )
    }

    /// One `seeds.csv` line.
    pub fn seeds_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.model_id,
            self.architecture.name(),
            self.iteration,
            self.partition_seed,
            self.train_seed
        )
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Make a model id safe as a file name component.
pub(crate) fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write the whole bundle under `out_dir`:
///
/// * `results.csv` — one row per (model, architecture, iteration)
/// * `seeds.csv` — the seed manifest matching `results.csv` rows
/// * `per_model.csv` — per-model iteration averages
/// * `aggregates.csv` — per-architecture mean/std columns
/// * `significance.csv` — paired t-tests between architectures
/// * `skipped.txt` — notices, only when something was skipped
/// * `plot/<architecture>/<model>.txt` — `score class` pairs
pub fn write_benchmark_output(out_dir: &Path, output: &BenchmarkOutput) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut results = String::from(RESULTS_HEADER);
    let mut seeds = String::from(SEEDS_HEADER);
    for row in &output.rows {
        results.push('\n');
        results.push_str(&row.results_line());
        seeds.push('\n');
        seeds.push_str(&row.seeds_line());
    }
    results.push('\n');
    seeds.push('\n');
    write_file(&out_dir.join("results.csv"), &results)?;
    write_file(&out_dir.join("seeds.csv"), &seeds)?;

    let mut per_model = String::from(
        "model_id,architecture,iterations,frr,far,accuracy,r_square,token_accuracy,f_score",
    );
    for row in &output.per_model {
        per_model.push('\n');
        per_model.push_str(&format!(
            "{},{},{},{}",
            row.model_id,
            row.architecture.name(),
            row.iterations,
            row.mean.csv_fields()
        ));
    }
    per_model.push('\n');
    write_file(&out_dir.join("per_model.csv"), &per_model)?;

    let mut aggregates = String::from(
        "architecture,models,mean_frr,std_frr,mean_far,std_far,mean_accuracy,std_accuracy,\
         mean_r_square,std_r_square,mean_token_accuracy,std_token_accuracy,\
         mean_f_score,std_f_score",
    );
    for row in &output.aggregates {
        aggregates.push('\n');
        aggregates.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.architecture.name(),
            row.models,
            row.mean.frr,
            row.std.frr,
            row.mean.far,
            row.std.far,
            row.mean.accuracy,
            row.std.accuracy,
            row.mean.r_square,
            row.std.r_square,
            row.mean.token_accuracy,
            row.std.token_accuracy,
            row.mean.f_score,
            row.std.f_score
        ));
    }
    aggregates.push('\n');
    write_file(&out_dir.join("aggregates.csv"), &aggregates)?;

    let mut significance =
        String::from("metric,architecture_a,architecture_b,models,mean_a,mean_b,t,p");
    for row in &output.significance {
        significance.push('\n');
        significance.push_str(&format!(
            "{},{},{},{},{},{},{},{}",
            row.metric,
            row.architecture_a.name(),
            row.architecture_b.name(),
            row.models,
            row.mean_a,
            row.mean_b,
            row.t,
            row.p
        ));
    }
    significance.push('\n');
    write_file(&out_dir.join("significance.csv"), &significance)?;

    if !output.skipped.is_empty() {
        let mut notices = output.skipped.join("\n");
        notices.push('\n');
        write_file(&out_dir.join("skipped.txt"), &notices)?;
    }

    for scatter in &output.scatters {
        let dir = out_dir.join("plot").join(scatter.architecture.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut body = String::from("score class\n");
        for (score, class) in &scatter.points {
            body.push_str(&format!("{score} {class}\n"));
        }
        write_file(&dir.join(format!("{}.txt", sanitize(&scatter.model_id))), &body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(accuracy: f64, token: f64) -> MetricsReport {
        MetricsReport {
            frr: 0.0,
            far: 0.0,
            accuracy,
            r_square: 1.0,
            token_accuracy: token,
            f_score: 0.0,
            degenerate_fit: false,
        }
    }

    fn row(model: &str, arch: Architecture, iteration: usize, accuracy: f64) -> ExperimentRow {
        ExperimentRow {
            model_id: model.into(),
            architecture: arch,
            iteration,
            metrics: report(accuracy, accuracy),
            partition_seed: 1,
            train_seed: 2,
        }
    }

    #[test]
    fn mean_std_matches_hand_computation() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert!((m - 5.0).abs() < 1e-12);
        // Sample variance of this classic set is 32/7.
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.5]), (3.5, 0.0));
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }

    #[test]
    fn paired_t_known_example() {
        // Differences 1,2,3,4,5: mean 3, sd sqrt(2.5), t = 3/(sd/sqrt 5).
        let a = [11.0, 22.0, 33.0, 44.0, 55.0];
        let b = [10.0, 20.0, 30.0, 40.0, 50.0];
        let (t, p) = paired_t_test(&a, &b).unwrap();
        let expect_t = 3.0 / ((2.5f64).sqrt() / (5.0f64).sqrt());
        assert!((t - expect_t).abs() < 1e-12);
        // t ≈ 4.2426 with 4 degrees of freedom → p ≈ 0.0132.
        assert!((p - 0.0132).abs() < 5e-4, "p = {p}");
    }

    #[test]
    fn paired_t_degenerate_cases() {
        let same = [1.0, 2.0, 3.0];
        assert_eq!(paired_t_test(&same, &same).unwrap(), (0.0, 1.0));
        let shifted = [2.0, 3.0, 4.0];
        let (t, p) = paired_t_test(&shifted, &same).unwrap();
        assert!(t.is_infinite() && t > 0.0);
        assert_eq!(p, 0.0);
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn summarize_groups_and_aggregates() {
        let rows = vec![
            row("and", Architecture::CrfMlp, 0, 90.0),
            row("and", Architecture::CrfMlp, 1, 94.0),
            row("the", Architecture::CrfMlp, 0, 80.0),
            row("the", Architecture::CrfMlp, 1, 84.0),
            row("and", Architecture::CrfPrcpt, 0, 70.0),
        ];
        let (per_model, aggregates) = summarize(&rows);
        assert_eq!(per_model.len(), 3);
        let and_mlp = per_model
            .iter()
            .find(|r| r.model_id == "and" && r.architecture == Architecture::CrfMlp)
            .unwrap();
        assert_eq!(and_mlp.iterations, 2);
        assert!((and_mlp.mean.accuracy - 92.0).abs() < 1e-12);

        assert_eq!(aggregates.len(), 2);
        let mlp = aggregates
            .iter()
            .find(|a| a.architecture == Architecture::CrfMlp)
            .unwrap();
        assert_eq!(mlp.models, 2);
        // Per-model means 92 and 82 → mean 87, sample std sqrt(50).
        assert!((mlp.mean.accuracy - 87.0).abs() < 1e-12);
        assert!((mlp.std.accuracy - 50.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn significance_pairs_on_common_models() {
        let rows = vec![
            row("and", Architecture::CrfMlp, 0, 90.0),
            row("the", Architecture::CrfMlp, 0, 85.0),
            row("cat", Architecture::CrfMlp, 0, 95.0),
            row("and", Architecture::CrfPrcpt, 0, 80.0),
            row("the", Architecture::CrfPrcpt, 0, 70.0),
            // "cat" missing on the perceptron side: dropped from pairing.
        ];
        let (per_model, _) = summarize(&rows);
        let sig = significance(&per_model);
        // Two metrics for the one architecture pair with >= 2 common models.
        assert_eq!(sig.len(), 2);
        assert_eq!(sig[0].models, 2);
        assert_eq!(sig[0].architecture_a, Architecture::CrfMlp);
        assert_eq!(sig[0].architecture_b, Architecture::CrfPrcpt);
        assert!((sig[0].mean_a - 87.5).abs() < 1e-12);
        assert!((sig[0].mean_b - 75.0).abs() < 1e-12);
        assert!(sig[0].t > 0.0);
    }

    #[test]
    fn assemble_sorts_canonically() {
        let rows = vec![
            row("the", Architecture::CrfPrcpt, 1, 1.0),
            row("the", Architecture::CrfPrcpt, 0, 1.0),
            row("and", Architecture::CrfMlp, 0, 1.0),
            row("zoo", Architecture::CrfMlp, 0, 1.0),
        ];
        let output = assemble(rows, Vec::new(), Vec::new());
        let order: Vec<(String, usize)> = output
            .rows
            .iter()
            .map(|r| {
                (
                    format!("{}/{}", r.architecture.name(), r.model_id),
                    r.iteration,
                )
            })
            .collect();
        assert_eq!(
            order,
            vec![
                ("crf-mlp/and".to_string(), 0),
                ("crf-mlp/zoo".to_string(), 0),
                ("crf-prcpt/the".to_string(), 0),
                ("crf-prcpt/the".to_string(), 1),
            ]
        );
    }

    #[test]
    fn written_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row("and", Architecture::CrfMlp, 0, 90.0),
            row("and", Architecture::CrfMlp, 1, 92.0),
            row("the", Architecture::CrfMlp, 0, 85.0),
            row("the", Architecture::CrfMlp, 1, 87.0),
        ];
        let scatters = vec![crate::harness::ScoreScatter {
            model_id: "and".into(),
            architecture: Architecture::CrfMlp,
            points: vec![(1.5, 1), (-0.25, 0)],
        }];
        let output = assemble(rows, scatters, vec!["note".into()]);
        write_benchmark_output(dir.path(), &output).unwrap();

        let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let lines: Vec<&str> = results.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("and,crf-mlp,0,"));

        let seeds = std::fs::read_to_string(dir.path().join("seeds.csv")).unwrap();
        assert!(seeds.lines().nth(1).unwrap().ends_with(",1,2"));

        let plot = std::fs::read_to_string(
            dir.path().join("plot").join("crf-mlp").join("and.txt"),
        )
        .unwrap();
        assert_eq!(plot, "score class\n1.5 1\n-0.25 0\n");

        assert!(dir.path().join("aggregates.csv").exists());
        assert!(dir.path().join("significance.csv").exists());
        assert_eq!(
            std::fs::read_to_string(dir.path().join("skipped.txt")).unwrap(),
            "note\n"
        );
    }

    #[test]
    fn sanitize_keeps_safe_characters() {
        assert_eq!(sanitize("user01@17#3"), "user01_17_3");
        assert_eq!(sanitize("plain-word_9"), "plain-word_9");
    }
}
