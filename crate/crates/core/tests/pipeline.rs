use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

use mmfnd::encoders::{load_precomputed, tokenize, write_precomputed, PrecomputedItem};
use mmfnd::numerics::RngState;
use mmfnd::pipeline::projection::{covariance, to_csv, POWER_TOL};
use mmfnd::pipeline::synth::LATENT_DIM;
use mmfnd::pipeline::{
    load_jsonl, pca, project_dataset, synth_generate, train, write_jsonl, Confusion, MetricsReport, Split,
    SynthConfig, TrainConfig,
};
use mmfnd::{Ablation, Execution};

#[test]
fn embedding_file_round_trips_bit_exactly() {
    let mut rng = RngState::new(3);
    let items: Vec<PrecomputedItem> = (0..100)
        .map(|i| PrecomputedItem {
            id: format!("item-{i}"),
            text_vec: (i % 3 != 0).then(|| rng.normal_vec(6, 1e3)),
            image_vec: rng.normal_vec(5, 1e-3),
            desc_vecs: (i % 2 == 0).then(|| (0..i % 4).map(|_| rng.normal_vec(6, 1.0)).collect()),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.jsonl");
    write_precomputed(&path, &items).unwrap();
    let back = load_precomputed(&path).unwrap();
    assert_eq!(back.len(), 100);
    for item in &items {
        let got = &back[&item.id];
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&got.image_vec), bits(&item.image_vec));
        assert_eq!(got, item);
    }
}

#[test]
fn dataset_file_round_trips_losslessly() {
    let out = synth_generate(&SynthConfig { n_train: 500, n_test: 10, ..SynthConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    write_jsonl(&path, &out.train.items).unwrap();
    let (back, report) = load_jsonl(&path, Split::Train).unwrap();
    assert!(report.skipped.is_empty());
    assert_eq!(back.items, out.train.items);
    let first = std::fs::read(&path).unwrap();
    write_jsonl(&path, &back.items).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
}

#[test]
fn metrics_match_formulas() {
    let mut rng = RngState::new(11);
    for _ in 0..500 {
        let c = Confusion {
            tp: rng.below(50),
            fp: rng.below(50),
            fn_: rng.below(50),
            tn: rng.below(50),
        };
        let r = MetricsReport::from_confusion(c);
        let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
        let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        let f1 = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let close = |a: f64, b: f64| assert!((a - b).abs() <= 1e-12, "{a} vs {b} for {c:?}");
        close(r.accuracy, div(tp + tn, tp + fp + fn_ + tn));
        let (pf, rf) = (div(tp, tp + fp), div(tp, tp + fn_));
        let (pr, rr) = (div(tn, tn + fn_), div(tn, tn + fp));
        close(r.fake.precision, pf);
        close(r.fake.recall, rf);
        close(r.fake.f1, f1(pf, rf));
        close(r.real.precision, pr);
        close(r.real.recall, rr);
        close(r.real.f1, f1(pr, rr));
        for m in [r.accuracy, r.fake.f1, r.real.f1, r.macro_avg().f1] {
            assert!((0.0..=1.0).contains(&m));
        }
    }
}

#[test]
fn metrics_from_labels_count_fake_as_positive() {
    let r = MetricsReport::from_labels(&[1, 1, 0, 0, 1], &[1, 0, 0, 1, 1]);
    assert_eq!((r.confusion.tp, r.confusion.fp, r.confusion.fn_, r.confusion.tn), (2, 1, 1, 1));
    let empty = MetricsReport::from_labels(&[0, 0], &[0, 0]);
    assert_eq!(empty.fake.precision, 0.0);
    assert!(!empty.warnings.is_empty());
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    for seed in 0..40u64 {
        let mut rng = RngState::new(seed);
        let d = 2 + rng.below(7);
        let n = 30 + rng.below(50);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| rng.normal() * 0.6f64.powi(j as i32) * 3.0 + j as f64).collect())
            .collect();
        let k = d.min(3);
        let fit = pca(&rows, k, POWER_TOL).unwrap();

        let (_, cov) = covariance(&rows).unwrap();
        let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[i][j]));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (c, &idx) in order.iter().take(k).enumerate() {
            let want = eig.eigenvectors.column(idx);
            let got = &fit.components[c];
            let sign = if want.iter().zip(got).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - sign * b).abs() < 1e-6, "seed {seed} component {c}: {a} vs {}", sign * b);
            }
            assert!((fit.variances[c] - eig.eigenvalues[idx]).abs() < 1e-6 * eig.eigenvalues[idx].max(1.0));
        }
        let ratio = fit.explained_ratio();
        assert!(ratio.windows(2).all(|w| w[0] >= w[1]));
    }
}

/// Text topic from topic-word counts, image latent from the least-squares
/// inverse of the image basis, compared by cosine and thresholded.
#[test]
fn synthetic_consistency_is_linearly_detectable() {
    let cfg = SynthConfig::default();
    let out = synth_generate(&cfg).unwrap();
    let topic_of: HashMap<&str, usize> = out
        .topic_words
        .iter()
        .enumerate()
        .flat_map(|(k, ws)| ws.iter().map(move |w| (w.as_str(), k)))
        .collect();
    let b = DMatrix::from_row_slice(cfg.d_raw, LATENT_DIM, out.image_basis.data());
    let pinv = b.pseudo_inverse(1e-12).unwrap();
    let score = |item: &mmfnd::pipeline::NewsItem| {
        let mut hist = vec![0.0; cfg.topics];
        for w in tokenize(&item.text) {
            if let Some(&k) = topic_of.get(w.as_str()) {
                hist[k] += 1.0;
            }
        }
        let z = &pinv * nalgebra::DVector::from_column_slice(&item.image_vec);
        let z = &z.as_slice()[..cfg.topics];
        let dot: f64 = hist.iter().zip(z).map(|(a, b)| a * b).sum();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        dot / (n(&hist) * n(z))
    };
    let train: Vec<(f64, u8)> = out.train.items.iter().map(|x| (score(x), x.label)).collect();
    let acc = |t: f64, xs: &[(f64, u8)]| {
        xs.iter().filter(|(s, y)| u8::from(*s < t) == *y).count() as f64 / xs.len() as f64
    };
    let best = (0..=200)
        .map(|i| -1.0 + i as f64 / 100.0)
        .max_by(|a, b| acc(*a, &train).total_cmp(&acc(*b, &train)))
        .unwrap();
    let test: Vec<(f64, u8)> = out.test.items.iter().map(|x| (score(x), x.label)).collect();
    let a = acc(best, &test);
    assert!(a >= 0.8, "probe accuracy {a}");
}

fn tiny() -> (mmfnd::pipeline::SynthOutput, TrainConfig) {
    let out = synth_generate(&SynthConfig { n_train: 160, n_test: 40, ..SynthConfig::default() }).unwrap();
    let cfg = TrainConfig { d: 12, epochs: 4, batch: 16, lr: 5e-3, ..TrainConfig::default() };
    (out, cfg)
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let (out, cfg) = tiny();
    let a = train(&cfg, &out.train, Execution::Serial, |_| {}).unwrap();
    let b = train(&cfg, &out.train, Execution::Parallel, |_| {}).unwrap();
    assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
    assert!(a.curve.iter().all(|s| s.loss.is_finite() && s.loss > 0.0));
    assert!(a.curve.last().unwrap().loss < a.curve[0].loss);

    let serial = a.model.evaluate(&out.test, Execution::Serial).unwrap();
    let parallel = a.model.evaluate(&out.test, Execution::Parallel).unwrap();
    assert_eq!(
        serde_json::to_string(&serial).unwrap(),
        serde_json::to_string(&parallel).unwrap()
    );
}

#[test]
fn every_ablation_trains() {
    let (out, cfg) = tiny();
    for ablation in Ablation::ALL {
        let cfg = TrainConfig { ablation, epochs: 2, ..cfg.clone() };
        let o = train(&cfg, &out.train, Execution::Parallel, |_| {}).unwrap();
        let report = o.model.evaluate(&out.test, Execution::Parallel).unwrap();
        assert_eq!(report.confusion.total(), out.test.len());
        if !ablation.uses_interaction() {
            assert_eq!(o.curve[0].contrastive, 0.0);
        }
    }
}

#[test]
fn projection_covers_every_item() {
    let (out, cfg) = tiny();
    let o = train(&TrainConfig { epochs: 1, ..cfg }, &out.train, Execution::Parallel, |_| {}).unwrap();
    let proj = project_dataset(&o.model, &out.test, Execution::Parallel).unwrap();
    assert_eq!(proj.points.len(), out.test.len());
    assert!(proj.explained_ratio[0] >= proj.explained_ratio[1]);
    assert_eq!(to_csv(&proj.points).lines().count(), out.test.len() + 1);
}

#[test]
fn model_file_round_trips() {
    let (out, cfg) = tiny();
    let o = train(&TrainConfig { epochs: 1, ..cfg }, &out.train, Execution::Parallel, |_| {}).unwrap();
    let json = o.model.to_json().unwrap();
    let back = mmfnd::pipeline::TrainedModel::from_json(&json).unwrap();
    assert_eq!(back.to_json().unwrap(), json);
    let a = o.model.evaluate(&out.test, Execution::Serial).unwrap();
    let b = back.evaluate(&out.test, Execution::Serial).unwrap();
    assert_eq!(a, b);
}
