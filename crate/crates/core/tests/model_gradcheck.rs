use mmfnd::model::{gradcheck_case, gradcheck_model};
use mmfnd::numerics::DEFAULT_STEP;
use mmfnd::{Ablation, Execution, Objective};

#[test]
fn every_parameter_of_every_variant() {
    for ablation in Ablation::ALL {
        for seed in 0..5 {
            let case = gradcheck_case(8, 4, 2, seed, 1e-3, ablation).unwrap();
            let obj = Objective { tau: 0.07, lambda_c: 1.0, ablation };
            let errs = gradcheck_model(&case.params, &case.batch(), &obj, DEFAULT_STEP, Execution::Parallel).unwrap();
            assert_eq!(errs.len(), case.params.params().len());
            for (name, err) in errs {
                assert!(err < 1e-4, "{ablation} seed {seed}: {name} rel err {err:e}");
            }
        }
    }
}

#[test]
fn corrupted_gradient_is_detected() {
    let case = gradcheck_case(4, 2, 1, 7, 1e-3, Ablation::None).unwrap();
    let obj = Objective { tau: 0.5, lambda_c: 1.0, ablation: Ablation::None };
    let batch = case.batch();
    let (_, grads) = case.params.batch_gradients(&batch, &obj, Execution::Serial).unwrap();
    let p = &case.params.fusion.cls_b2;
    let mut wrong = grads.fusion.cls_b2.data().to_vec();
    wrong[0] += 0.1;
    let start = p.value.data().to_vec();
    let mut probe = case.params.clone();
    let f = |x: &[f64]| {
        probe.fusion.cls_b2.value.data_mut().copy_from_slice(x);
        probe.batch_loss(&batch, &obj, Execution::Serial).map(|l| l.total)
    };
    let err = mmfnd::numerics::finite_diff_check(f, &start, &wrong, DEFAULT_STEP).unwrap();
    assert!(err > 1e-2, "{err}");
}
