use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mmfnd::encoders::Vocabulary;
use mmfnd::numerics::RngState;
use mmfnd::pipeline::{synth_generate, SynthConfig};
use mmfnd::{Ablation, Execution, ModelDims, ModelParams, Objective};

fn setup() -> (ModelParams, Vec<mmfnd::ModelInput>) {
    let out = synth_generate(&SynthConfig { n_train: 256, n_test: 10, ..SynthConfig::default() }).unwrap();
    let vocab = Vocabulary::build(out.train.corpus());
    let inputs = out.train.model_inputs(&vocab, 64).unwrap();
    let dims = ModelDims { d: 64, vocab: vocab.len(), d_raw: out.train.image_dim() };
    let params = ModelParams::init(dims, &mut RngState::new(1)).unwrap();
    (params, inputs)
}

fn bench(c: &mut Criterion) {
    let (params, inputs) = setup();
    let objective = Objective { tau: 0.07, lambda_c: 1.0, ablation: Ablation::None };
    let batch: Vec<_> = inputs.iter().take(64).collect();

    let mut g = c.benchmark_group("predict_256");
    for exec in [Execution::Serial, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| params.predict(&inputs, Ablation::None, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("gradients_64");
    for exec in [Execution::Serial, Execution::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| params.batch_gradients(&batch, &objective, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
