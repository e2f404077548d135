use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fedlab_core::data::{synth_generate, SynthSpec};
use fedlab_core::fedcore::{aggregate_fedavg, aggregation_weights, local_train, ClientState, FederationConfig};
use fedlab_core::model::{forward, init_params, loss_grad_into, ModelConfig, ModelInput, ParamVector};
use fedlab_core::numkernel::{Mat, Rng};
use fedlab_core::path;

fn model_kernels(c: &mut Criterion) {
    let cfg = ModelConfig::desk();
    let mut rng = Rng::derive(0, &path!["bench"]);
    let params = init_params(&cfg, &mut rng).unwrap();
    let x = Mat::from_fn(cfg.seq_len, cfg.feat_dim, |_, _| rng.normal());
    c.bench_function("bilstm_forward_desk", |b| {
        b.iter(|| forward(black_box(&params), &cfg, ModelInput::new(black_box(&x))).unwrap())
    });
    let mut grad = params.zeros_like();
    c.bench_function("bilstm_forward_backward_desk", |b| {
        b.iter(|| loss_grad_into(black_box(&params), &cfg, ModelInput::new(&x), 1, 1.0, &mut grad).unwrap())
    });
}

fn aggregation(c: &mut Criterion) {
    let cfg = ModelConfig::desk();
    let locals: Vec<ParamVector> = (0..51u64)
        .map(|k| init_params(&cfg, &mut Rng::derive(k, &path!["local"])).unwrap())
        .collect();
    let refs: Vec<&ParamVector> = locals.iter().collect();
    let sizes: Vec<usize> = (0..51).map(|k| 5 + k % 40).collect();
    let weights = aggregation_weights(&sizes).unwrap();
    c.bench_function("fedavg_51_clients_desk", |b| {
        b.iter(|| aggregate_fedavg(black_box(&refs), black_box(&weights)).unwrap())
    });
}

fn local_training(c: &mut Criterion) {
    let model = ModelConfig::desk();
    let user = synth_generate(&SynthSpec { n_users: 1, mean_samples: 25.0, ..SynthSpec::default() }, 0)
        .unwrap()
        .remove(0);
    let global = init_params(&model, &mut Rng::derive(0, &path!["init"])).unwrap();
    let fed = FederationConfig { local_epochs: 1, client_lr: 0.1, ..FederationConfig::default() };
    let mut group = c.benchmark_group("local_train");
    group.sample_size(20);
    group.bench_function("one_epoch_batch4_desk", |b| {
        b.iter(|| {
            let mut st = ClientState::new(user.clone());
            local_train(&mut st, &global, &fed, &model, &mut Rng::derive(1, &path!["c"])).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, model_kernels, aggregation, local_training);
criterion_main!(benches);
