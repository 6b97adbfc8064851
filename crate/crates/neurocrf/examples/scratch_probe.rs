//! Temporary diagnostic: training health and score separation for one user.

use neurocrf::data::synthetic::{synthetic_sessions, SyntheticSessionsConfig};
use neurocrf::harness::sessions::{prepare_session_experiments, SessionPipelineConfig};
use neurocrf::neural::ModelNets;
use neurocrf::training::{score_sequence, train, TrainConfig};
use neurocrf::types::Architecture;

fn main() {
    let events = synthetic_sessions(&SyntheticSessionsConfig::default());
    let prepared =
        prepare_session_experiments(&events, &SessionPipelineConfig::default()).unwrap();
    for exp in prepared.users.iter().take(2) {
        println!(
            "\n#### user={} train={} self={} nonself={} dim={} labels={}",
            exp.user,
            exp.train.sequences.len(),
            exp.self_test.sequences.len(),
            exp.nonself_test.sequences.len(),
            exp.train.feature_dim,
            exp.train.alphabet.len()
        );
        for arch in [Architecture::CrfMlp, Architecture::CrfRnn, Architecture::CrfPrcpt] {
            let mut config = TrainConfig::new(arch);
            config.model_id = exp.user.clone();
            let (model, report) = train(&exp.train, &config, 42).unwrap();
            let trace: Vec<usize> = report.trace.iter().map(|t| t.token_errors).collect();
            println!(
                "== {arch:?} consumed={} converged={} err={:.3} trace={:?}",
                report.sequences_consumed, report.converged, report.final_train_token_error, trace
            );
            if let ModelNets::Mlp { observation, .. } = model.nets() {
                let probe = exp.train.sequences[0].observations[1].features();
                let fwd = observation.forward(probe).unwrap();
                let hmax = fwd.hidden.iter().fold(0.0_f64, |m, &h| m.max(h));
                println!("   obs hidden max on-manifold: {hmax:.4}");
            }
            let stat = |ds: &neurocrf::types::Dataset| {
                let per: Vec<f64> = ds
                    .sequences
                    .iter()
                    .map(|s| {
                        let out = score_sequence(&model, &s.observations).unwrap();
                        out.score / s.labels.len() as f64
                    })
                    .collect();
                let mean = per.iter().sum::<f64>() / per.len() as f64;
                let lo = per.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = per.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (mean, lo, hi)
            };
            let (sm, sl, sh) = stat(&exp.self_test);
            let (nm, nl, nh) = stat(&exp.nonself_test);
            println!("   self/token  mean {sm:.3} range [{sl:.3},{sh:.3}]");
            println!("   nonself/tok mean {nm:.3} range [{nl:.3},{nh:.3}]");
        }
    }
}
