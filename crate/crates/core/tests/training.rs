mod common;

use disparity_core::loss::LossWeightSchedule;
use disparity_core::network::{Model, ParamStore};
use disparity_core::train::{
    adam_step, load_checkpoint, make_batch, schedule, AdamState, OptimizerConfig, TrainConfig, Trainer, CHECKPOINT_MAGIC,
};
use disparity_core::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn train_config(epochs: [usize; 4]) -> TrainConfig {
    let mut cfg = TrainConfig::desk();
    cfg.batch_size = 2;
    cfg.schedule = LossWeightSchedule::with_epochs(epochs);
    cfg.preprocess.crop_h = 64;
    cfg.preprocess.crop_w = 64;
    cfg
}

fn trainer(epochs: [usize; 4]) -> Trainer {
    Trainer::new(Model::new(common::tiny_network()).unwrap(), train_config(epochs)).unwrap()
}

/// Textbook bias-corrected Adam on f(θ) = Σ (θ - 3)².
fn reference_adam(theta0: &[f64], steps: usize, lr: f64) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut theta = theta0.to_vec();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    for t in 1..=steps {
        for i in 0..theta.len() {
            let g = 2.0 * (theta[i] - 3.0);
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let mh = m[i] / (1.0 - b1.powi(t as i32));
            let vh = v[i] / (1.0 - b2.powi(t as i32));
            theta[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    theta
}

#[test]
fn adam_matches_reference() {
    let init = [0.5, -2.0, 7.25];
    let mut store = ParamStore::<f64>::new();
    let id = store.add("theta", Tensor::from_vec([1, 1, 1, 3], init.to_vec()).unwrap());
    let mut state = AdamState::new(&store);
    let cfg = OptimizerConfig::default();
    for _ in 0..10 {
        let grad = store.get(id).map(|t| 2.0 * (t - 3.0));
        adam_step(&mut store, &[Some(grad)], &mut state, 0.1, &cfg).unwrap();
    }
    let want = reference_adam(&init, 10, 0.1);
    for (got, want) in store.get(id).data().iter().zip(&want) {
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
    assert_eq!(state.step, 10);
}

#[test]
fn adam_requires_every_gradient() {
    let mut store = ParamStore::<f64>::new();
    store.add("a", Tensor::zeros([1, 1, 1, 1]));
    store.add("b", Tensor::zeros([1, 1, 1, 1]));
    let mut state = AdamState::new(&store);
    let err = adam_step(&mut store, &[Some(Tensor::ones([1, 1, 1, 1])), None], &mut state, 0.1, &OptimizerConfig::default()).unwrap_err();
    assert!(matches!(&err, Error::Contract(m) if m.contains('b')), "{err}");
}

#[test]
fn desk_schedule_rounds() {
    let cfg = TrainConfig::desk();
    assert_eq!(cfg.schedule.total_epochs(), 23);
    let s = schedule(&cfg.schedule, &cfg.optimizer, 3, 4).unwrap();
    assert_eq!(s.weights[0], 0.8);
}

#[test]
fn crops_follow_the_epoch_rng() {
    let samples = common::stereo_samples(2, 1);
    let refs: Vec<_> = samples.iter().collect();
    let a = make_batch(&refs, Some((32, 48)), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = make_batch(&refs, Some((32, 48)), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a.0.shape().dims(), [2, 3, 32, 48]);
    assert_eq!(a, b);
}

#[test]
fn training_is_deterministic() {
    let data = common::stereo_samples(4, 10);
    let mut a = trainer([1, 0, 0, 0]);
    let mut b = trainer([1, 0, 0, 0]);
    let la = a.run(&data, &[], None, &mut ()).unwrap();
    let lb = b.run(&data, &[], None, &mut ()).unwrap();
    assert_eq!(la[0].train_loss, lb[0].train_loss);
    assert_eq!(a.model.params.values(), b.model.params.values());
    assert!(a.is_finished());
}

#[test]
fn checkpoint_roundtrip_is_byte_identical() {
    let data = common::stereo_samples(2, 20);
    let mut t = trainer([1, 1, 1, 1]);
    t.run(&data, &[], Some(1), &mut ()).unwrap();
    let bytes = t.checkpoint().unwrap();
    assert!(bytes.starts_with(CHECKPOINT_MAGIC));
    let ck = load_checkpoint::<f32>(&bytes).unwrap();
    assert_eq!(ck.state, t.state);
    let resumed = Trainer::resume(Model::new(common::tiny_network()).unwrap(), train_config([1, 1, 1, 1]), ck).unwrap();
    assert_eq!(resumed.checkpoint().unwrap(), bytes);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let train = common::stereo_samples(4, 30);
    let test = common::stereo_samples(2, 40);
    let epochs = [1, 1, 0, 1];

    let mut full = trainer(epochs);
    let full_logs = full.run(&train, &test, None, &mut ()).unwrap();

    let mut first = trainer(epochs);
    let mut logs = first.run(&train, &test, Some(2), &mut ()).unwrap();
    let ck = load_checkpoint::<f32>(&first.checkpoint().unwrap()).unwrap();
    drop(first);
    let mut second = Trainer::resume(Model::new(common::tiny_network()).unwrap(), train_config(epochs), ck).unwrap();
    logs.extend(second.run(&train, &test, None, &mut ()).unwrap());

    assert_eq!(logs.len(), 3);
    for (a, b) in logs.iter().zip(&full_logs) {
        assert_eq!((a.round, a.epoch, a.step), (b.round, b.epoch, b.step));
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.test_epe.to_bits(), b.test_epe.to_bits());
    }
    assert_eq!(second.model.params.values(), full.model.params.values());
    assert_eq!(second.adam, full.adam);
}

#[test]
fn restore_rejects_other_architecture() {
    let bytes = trainer([1, 0, 0, 0]).checkpoint().unwrap();
    let other = disparity_core::network::NetworkConfig {
        base_channels: 8,
        ..common::tiny_network()
    };
    let err = load_checkpoint::<f32>(&bytes).unwrap().restore(&mut Model::new(other).unwrap()).unwrap_err();
    assert!(matches!(&err, Error::Config(m) if m.contains("base_channels")), "{err}");

    let mut cfg = train_config([1, 0, 0, 0]);
    cfg.seed = 99;
    let ck = load_checkpoint::<f32>(&bytes).unwrap();
    assert!(matches!(Trainer::resume(Model::new(common::tiny_network()).unwrap(), cfg, ck), Err(Error::Config(_))));
}

#[test]
fn damaged_checkpoints_are_format_errors() {
    let bytes = trainer([1, 0, 0, 0]).checkpoint().unwrap();
    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    for bad in [&bytes[..bytes.len() - 3], &bytes[..20], &wrong_magic[..], b"garbage"] {
        assert!(matches!(load_checkpoint::<f32>(bad), Err(Error::Format { .. })));
    }
}

#[test]
fn single_batch_overfits() {
    let data = common::stereo_samples(2, 50);
    let refs: Vec<_> = data.iter().collect();
    let (l, r, g) = make_batch(&refs, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut t = trainer([50, 0, 0, 0]);
    let setting = schedule(&t.config.schedule, &t.config.optimizer, 1, 0).unwrap();
    let losses: Vec<f64> = (0..50).map(|_| t.step(&l, &r, &g, &setting).unwrap().0).collect();
    let (first, last) = (losses[0], losses[49]);
    assert!(last < 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn non_finite_input_is_a_numerical_error() {
    let data = common::stereo_samples(1, 60);
    let mut t = trainer([1, 0, 0, 0]);
    let before = t.model.params.values().to_vec();
    let left = data[0].left.map(|_| f32::NAN);
    let setting = schedule(&t.config.schedule, &t.config.optimizer, 1, 0).unwrap();
    let err = t.step(&left, &data[0].right, &data[0].gt, &setting).unwrap_err();
    assert!(matches!(err, Error::Numerical(_)));
    assert_eq!(t.model.params.values(), &before[..]);
}
