//! Module outputs against step-by-step evaluations written with plain loops.
//! Nothing here calls into `mmfnd::numerics::ops`.

use mmfnd::align::{contrastive_objective, similarity_matrix, Modality, SharedSpaceParams};
use mmfnd::enrich::EnhanceParams;
use mmfnd::fuse::{detection_loss, fuse, FusionParams, GateMode};
use mmfnd::interact::InteractionParams;
use mmfnd::model::{gradcheck_case, Ablation, Objective};
use mmfnd::numerics::{RngState, Tensor};
use mmfnd::Execution;

const TOL: f64 = 1e-10;
const INSTANCES: u64 = 200;

type Mat = Vec<Vec<f64>>;

fn randn(rng: &mut RngState, shape: &[usize]) -> Tensor {
    Tensor::new(shape.to_vec(), rng.normal_vec(shape.iter().product(), 1.0)).unwrap()
}

fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn mv(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn softmax(x: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

fn unit(x: &[f64]) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter().map(|v| v / n).collect()
}

fn assert_vec(what: &str, got: &[f64], want: &[f64]) {
    assert_eq!(got.len(), want.len(), "{what}");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= TOL, "{what}[{i}]: {g} vs {w}");
    }
}

#[test]
fn enhancement_matches_loops() {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let d = 1 + rng.below(8);
        let n_e = 1 + rng.below(3);
        let (wt, wd) = (randn(&mut rng, &[d, d]), randn(&mut rng, &[d, d]));
        let r = randn(&mut rng, &[d]);
        let m = randn(&mut rng, &[n_e, d]);
        let p = EnhanceParams::from_values(wt.clone(), wd.clone());
        let (out, trace) = p.enhance(&r, Some(&m)).unwrap();

        let rows = mat(&m);
        let scores: Vec<f64> = rows
            .iter()
            .map(|row| (0..d).map(|k| row[k] * r.data()[k]).sum())
            .collect();
        let att = softmax(&scores);
        let mut pooled = vec![0.0; d];
        for k in 0..d {
            for i in 0..n_e {
                pooled[k] += att[i] * rows[i][k];
            }
            pooled[k] /= n_e as f64;
        }
        let want = plus(&mv(&mat(&wt), r.data()), &mv(&mat(&wd), &pooled));
        assert_vec("att", trace.unwrap().att.data(), &att);
        assert_vec("r~t", out.data(), &want);

        let (alone, none) = p.enhance(&r, None).unwrap();
        assert!(none.is_none());
        assert_vec("no descriptions", alone.data(), &mv(&mat(&wt), r.data()));
    }
}

#[test]
fn alignment_and_infonce_match_loops() {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let d = 2 + rng.below(7);
        let n = 1 + rng.below(4);
        let tau = [0.07, 0.3, 1.0, 2.5][rng.below(4)];
        let p = SharedSpaceParams::from_values(
            randn(&mut rng, &[d, d]),
            randn(&mut rng, &[d]),
            randn(&mut rng, &[d, d]),
            randn(&mut rng, &[d]),
        );
        let mut ev = Vec::new();
        let mut et = Vec::new();
        for _ in 0..n {
            let rt = randn(&mut rng, &[d]);
            let rv = randn(&mut rng, &[d]);
            let got_t = p.shared_encode(&rt, Modality::Text).unwrap();
            let got_v = p.shared_encode(&rv, Modality::Image).unwrap();
            let want_t = unit(&plus(&mv(&mat(&p.w_st.value), rt.data()), p.b_st.value.data()));
            let want_v = unit(&plus(&mv(&mat(&p.w_sv.value), rv.data()), p.b_sv.value.data()));
            assert_vec("e_t", got_t.data(), &want_t);
            assert_vec("e_v", got_v.data(), &want_v);
            et.push(want_t);
            ev.push(want_v);
        }

        let sim = |a: &Mat, b: &Mat| -> Mat {
            a.iter()
                .map(|ai| {
                    let logits: Vec<f64> = b
                        .iter()
                        .map(|bj| ai.iter().zip(bj).map(|(x, y)| x * y).sum::<f64>() / tau)
                        .collect();
                    softmax(&logits)
                })
                .collect()
        };
        let p_v2t = sim(&ev, &et);
        let p_t2v = sim(&et, &ev);
        let dir = |p: &Mat| -(0..n).map(|i| p[i][i].ln()).sum::<f64>() / n as f64;
        let want = 0.5 * (dir(&p_v2t) + dir(&p_t2v));

        let ev_t = Tensor::from_rows(&ev).unwrap();
        let et_t = Tensor::from_rows(&et).unwrap();
        let out = contrastive_objective(&ev_t, &et_t, tau).unwrap();
        assert_vec("P v->t", out.p_v2t.data(), &p_v2t.concat());
        assert_vec("P t->v", out.p_t2v.data(), &p_t2v.concat());
        assert!((out.loss.total - want).abs() <= TOL, "L_c {} vs {want}", out.loss.total);
    }
}

#[test]
fn infonce_pinned_orthogonal_pair() {
    let e = Tensor::identity(2);
    let p = similarity_matrix(&e, &e, 1.0).unwrap();
    let diag = std::f64::consts::E / (std::f64::consts::E + 1.0);
    assert!((p.get(0, 0) - diag).abs() < 1e-12);
    assert!((p.get(0, 0) - 0.73106).abs() < 1e-5);
    let out = contrastive_objective(&e, &e, 1.0).unwrap();
    assert!((out.loss.total - (-diag.ln())).abs() < 1e-12);
    assert!((out.loss.total - 0.31326).abs() < 1e-5, "{}", out.loss.total);
    assert_eq!(out.loss.v2t, out.loss.t2v);
}

#[test]
fn infonce_singleton_and_identical() {
    let one = Tensor::matrix(1, 3, vec![0.0, 0.6, 0.8]).unwrap();
    assert_eq!(contrastive_objective(&one, &one, 0.07).unwrap().loss.total, 0.0);
    let same = Tensor::from_rows(&vec![vec![0.6, 0.8]; 3]).unwrap();
    let p = similarity_matrix(&same, &same, 0.07).unwrap();
    assert!(p.data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
}

#[test]
fn temperature_limit_approaches_ln_n() {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let n = 2 + rng.below(7);
        let d = 2 + rng.below(7);
        let rows = |rng: &mut RngState| {
            let r: Mat = (0..n).map(|_| unit(&rng.normal_vec(d, 1.0))).collect();
            Tensor::from_rows(&r).unwrap()
        };
        let (ev, et) = (rows(&mut rng), rows(&mut rng));
        let l = contrastive_objective(&ev, &et, 1e6).unwrap().loss.total;
        assert!((l - (n as f64).ln()).abs() < 1e-3, "N={n}: {l}");
    }
}

#[test]
fn interaction_matches_loops() {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let d = 2 + rng.below(7);
        let p = InteractionParams::from_values(
            randn(&mut rng, &[d, d]),
            randn(&mut rng, &[d]),
            randn(&mut rng, &[d, d]),
            randn(&mut rng, &[d]),
        );
        let mt = unit(&rng.normal_vec(d, 1.0));
        let mv_ = unit(&rng.normal_vec(d, 1.0));
        let trace = p.interact(&Tensor::vector(mt.clone()), &Tensor::vector(mv_.clone())).unwrap();

        let s = (d as f64).sqrt();
        let att = |a: &[f64], b: &[f64]| -> Mat {
            (0..d)
                .map(|i| softmax(&(0..d).map(|j| a[i] * b[j] / s).collect::<Vec<_>>()))
                .collect()
        };
        let f_t2v = att(&mt, &mv_);
        let f_v2t = att(&mv_, &mt);
        let mf_v: Vec<f64> = (0..d).map(|i| (0..d).map(|j| f_t2v[i][j] * mv_[j]).sum()).collect();
        let mf_t: Vec<f64> = (0..d).map(|i| (0..d).map(|j| f_v2t[i][j] * mt[j]).sum()).collect();
        let mut m_f = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                m_f[i][j] = mf_v[i] * mf_t[j];
            }
        }
        let pooled: Vec<f64> = (0..d)
            .map(|j| (0..d).map(|i| m_f[i][j]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let hidden = relu(&plus(&mv(&mat(&p.w1.value), &pooled), p.b1.value.data()));
        let r_f = plus(&mv(&mat(&p.w2.value), &hidden), p.b2.value.data());

        assert_vec("f_t2v", trace.f_t2v.data(), &f_t2v.concat());
        assert_vec("f_v2t", trace.f_v2t.data(), &f_v2t.concat());
        assert_vec("mf_v", trace.mf_v.data(), &mf_v);
        assert_vec("mf_t", trace.mf_t.data(), &mf_t);
        assert_vec("m_f", trace.m_f.data(), &m_f.concat());
        assert_vec("pooled", trace.pooled.data(), &pooled);
        assert_vec("r_f", trace.r_f.data(), &r_f);
    }
}

#[test]
fn interaction_hand_values() {
    let e1 = Tensor::vector(vec![1.0, 0.0]);
    let (f, g) = mmfnd::interact::cross_attention(&e1, &e1).unwrap();
    assert!((f.get(0, 0) - 0.6698).abs() < 1e-4 && (f.get(0, 1) - 0.3302).abs() < 1e-4);
    assert_eq!((f.get(1, 0), f.get(1, 1)), (0.5, 0.5));
    assert_eq!(f, g);
    let m_f = mmfnd::numerics::ops::outer(&e1, &Tensor::vector(vec![0.0, 2.0]));
    let (pooled, _) = mmfnd::numerics::ops::max_pool(&m_f, 0).unwrap();
    assert_eq!(pooled.data(), &[0.0, 2.0]);
}

#[test]
fn fusion_matches_loops() {
    for seed in 0..INSTANCES {
        let mut rng = RngState::new(seed);
        let d = 1 + rng.below(8);
        let p = FusionParams::from_values(
            randn(&mut rng, &[3, d]),
            randn(&mut rng, &[3]),
            randn(&mut rng, &[d, 3 * d]),
            randn(&mut rng, &[d]),
            randn(&mut rng, &[2, d]),
            randn(&mut rng, &[2]),
        );
        let rt = rng.normal_vec(d, 1.0);
        let rv = rng.normal_vec(d, 1.0);
        let rf = rng.normal_vec(d, 1.0);
        let tr = p
            .forward(
                &Tensor::vector(rt.clone()),
                &Tensor::vector(rv.clone()),
                Some(&Tensor::vector(rf.clone())),
                GateMode::Adaptive,
            )
            .unwrap();

        let mean: Vec<f64> = (0..d).map(|k| (rt[k] + rv[k] + rf[k]) / 3.0).collect();
        let gates: Vec<f64> = plus(&mv(&mat(&p.gate_w.value), &mean), p.gate_b.value.data())
            .iter()
            .map(|z| 1.0 / (1.0 + (-z).exp()))
            .collect();
        let mut x = Vec::new();
        for (g, r) in gates.iter().zip([&rt, &rv, &rf]) {
            x.extend(r.iter().map(|v| g * v));
        }
        let hidden = relu(&plus(&mv(&mat(&p.cls_w1.value), &x), p.cls_b1.value.data()));
        let logits = plus(&mv(&mat(&p.cls_w2.value), &hidden), p.cls_b2.value.data());
        let probs = softmax(&logits);

        assert_vec("mean", tr.mean.data(), &mean);
        assert_vec("gates", tr.gates.data(), &gates);
        assert_vec("x~", tr.fused.data(), &x);
        assert_vec("probs", tr.probs.data(), &probs);
        let label = u8::from(logits[1] > logits[0]);
        assert_eq!(tr.prediction().label, label);
        let y = rng.below(2) as u8;
        let want = if y == 1 { -probs[1].ln() } else { -(1.0 - probs[1]).ln() };
        assert!((detection_loss(&[probs[0], probs[1]], y) - want).abs() <= TOL);
    }
}

#[test]
fn fusion_hand_values() {
    let d = 2;
    let zero = FusionParams::from_values(
        Tensor::zeros(&[3, d]),
        Tensor::zeros(&[3]),
        Tensor::zeros(&[d, 3 * d]),
        Tensor::zeros(&[d]),
        Tensor::zeros(&[2, d]),
        Tensor::zeros(&[2]),
    );
    let x = Tensor::vector(vec![1.0, -2.0]);
    let tr = zero.forward(&x, &x, Some(&x), GateMode::Adaptive).unwrap();
    assert_eq!(tr.gates.data(), &[0.5; 3]);
    assert_eq!(tr.mean.data(), x.data());
    assert_eq!(tr.probs.data(), &[0.5, 0.5]);
    assert_eq!(tr.prediction().label, 0);
    assert_eq!(fuse(&x, &x, Some(&x), [0.0; 3]).data(), &[0.0; 6]);
    assert!((detection_loss(&[0.5, 0.5], 1) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((detection_loss(&[0.1, 0.9], 0) - 2.302585).abs() < 1e-6);
    assert!(detection_loss(&[0.0, 1.0], 1) < 1e-11);
}

#[test]
fn batch_loss_is_mean_detection_plus_contrastive() {
    for seed in 0..20 {
        let case = gradcheck_case(6, 4, 2, seed, 0.0, Ablation::None).unwrap();
        let lambda_c = 0.7;
        let obj = Objective { tau: 0.2, lambda_c, ablation: Ablation::None };
        let batch = case.batch();
        let got = case.params.batch_loss(&batch, &obj, Execution::Serial).unwrap();

        let fwd: Vec<_> = batch
            .iter()
            .map(|x| case.params.forward_item(x, Ablation::None).unwrap())
            .collect();
        let l_d = fwd
            .iter()
            .zip(&batch)
            .map(|(f, x)| detection_loss(&f.prediction().probs, x.label))
            .sum::<f64>()
            / batch.len() as f64;
        let stack = |pick: fn(&mmfnd::model::Aligned) -> &Tensor| {
            let rows: Mat = fwd.iter().map(|f| pick(f.aligned.as_ref().unwrap()).data().to_vec()).collect();
            Tensor::from_rows(&rows).unwrap()
        };
        let l_c = contrastive_objective(&stack(|a| &a.e_v), &stack(|a| &a.e_t), 0.2)
            .unwrap()
            .loss
            .total;
        assert!((got.detection - l_d).abs() <= TOL);
        assert!((got.contrastive - l_c).abs() <= TOL);
        assert!((got.total - (lambda_c * l_c + l_d)).abs() <= TOL);
    }
}
