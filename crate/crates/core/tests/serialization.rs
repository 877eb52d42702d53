//! Model-state serialization is round-trip stable: a restored model is
//! equal to the original and continues its trajectory identically.

use driftbench_core::continual::{ContinualConfig, ContinualLearner};
use driftbench_core::linear::var_fit;
use driftbench_core::neural::{net_init, net_online_step, train_offline, NetConfig};
use driftbench_core::numerics::Tensor;
use driftbench_core::timebase::WindowBatch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn batch(n: usize, window: usize, width: usize, seed: u64) -> WindowBatch {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * window * width).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    WindowBatch::from_parts(window, width, 1, x, y).unwrap()
}

#[test]
fn linear_model_round_trip() {
    let model = var_fit(&batch(40, 2, 3, 1), 1e-6).unwrap().with_online(1e-3);
    let json = serde_json::to_string(&model).unwrap();
    let restored: driftbench_core::linear::LinearModel = serde_json::from_str(&json).unwrap();
    assert_eq!(model, restored);

    let x: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
    assert_eq!(model.predict(&x).unwrap(), restored.predict(&x).unwrap());
}

#[test]
fn net_state_round_trip_resumes_identically() {
    let config = NetConfig {
        blocks: 2,
        channels: 4,
        kernel: 2,
        features: 3,
        window: 8,
        horizon: 1,
        activation: driftbench_core::neural::Activation::Relu,
        seed: 9,
    };
    let mut state = net_init(config).unwrap();
    train_offline(&mut state, &batch(30, 8, 3, 2), 2, 8, 1e-3).unwrap();

    let json = serde_json::to_string(&state).unwrap();
    let mut restored: driftbench_core::neural::NetState = serde_json::from_str(&json).unwrap();
    assert_eq!(state, restored);

    // Optimizer moments survive, so further steps stay in lockstep.
    let x = Tensor::new(8, 3, (0..24).map(|i| (i as f64 * 0.21).cos()).collect()).unwrap();
    for _ in 0..5 {
        net_online_step(&mut state, &x, &[0.3], 1e-3).unwrap();
        net_online_step(&mut restored, &x, &[0.3], 1e-3).unwrap();
    }
    assert_eq!(state, restored);
}

#[test]
fn continual_learner_round_trip_with_populated_memory() {
    let config = NetConfig {
        blocks: 1,
        channels: 3,
        kernel: 2,
        features: 2,
        window: 8,
        horizon: 1,
        activation: driftbench_core::neural::Activation::Relu,
        seed: 4,
    };
    let net = net_init(config).unwrap();
    let cl = ContinualConfig {
        gamma: 0.1,
        gamma_prime: 0.99,
        tau: 0.3,
        memory_slots: 4,
        compress_dim: 8,
        blend: 0.9,
    };
    let mut learner = ContinualLearner::new(net, cl).unwrap();
    let x = Tensor::new(8, 2, (0..16).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    for step in 0..120 {
        let y = if step % 2 == 0 { [5.0] } else { [-5.0] };
        learner.step(&x, &y, 1e-3).unwrap();
    }
    assert!(
        !learner.memories()[0].is_empty(),
        "expected the alternating targets to populate the memory"
    );

    let json = serde_json::to_string(&learner).unwrap();
    let mut restored: ContinualLearner = serde_json::from_str(&json).unwrap();
    assert_eq!(learner, restored);

    for step in 0..20 {
        let y = if step % 2 == 0 { [5.0] } else { [-5.0] };
        learner.step(&x, &y, 1e-3).unwrap();
        restored.step(&x, &y, 1e-3).unwrap();
    }
    assert_eq!(learner, restored);
}
