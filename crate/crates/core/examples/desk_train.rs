//! Trains the desk preset on generated stereograms and prints per-epoch
//! metrics. Environment overrides: `N_TRAIN`, `N_TEST`, `MAX_D`, `EPOCHS`
//! (comma list), `LR`, `CORR_STAGE`, `CORR_D`, `MAX_CH`.

use disparity_core::data::{gen_random_dot_stereogram, DisparityField};
use disparity_core::loss::LossWeightSchedule;
use disparity_core::network::{Model, NetworkConfig};
use disparity_core::train::{evaluate, PreparedSample, TrainConfig, Trainer};

fn env<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> disparity_core::Result<()> {
    let n_train: usize = env("N_TRAIN", 200);
    let n_test: usize = env("N_TEST", 40);
    let max_d: f64 = env("MAX_D", 12.0);
    let mut cfg = TrainConfig::desk();
    if let Ok(e) = std::env::var("EPOCHS") {
        let v: Vec<usize> = e.split(',').map(|x| x.parse().unwrap()).collect();
        cfg.schedule = LossWeightSchedule::with_epochs([v[0], v[1], v[2], v[3]]);
    }
    cfg.optimizer.initial_lr = env("LR", cfg.optimizer.initial_lr);
    let mut net = NetworkConfig::desk();
    net.correlation_after_stage = env("CORR_STAGE", net.correlation_after_stage);
    net.corr.max_range = env("CORR_D", net.corr.max_range);
    net.max_channels = env("MAX_CH", net.max_channels);
    let field = DisparityField::Layered { min: 0.0, max: max_d, objects: 2 };
    let gen = |seed: u64| gen_random_dot_stereogram(64, 128, &field, seed);
    let train: Vec<_> = (0..n_train as u64).map(gen).collect::<Result<_, _>>()?;
    let test: Vec<_> = (0..n_test as u64).map(|i| gen(1_000_000 + i)).collect::<Result<_, _>>()?;
    let train = PreparedSample::prepare_all(&train, &cfg.preprocess)?;
    let test = PreparedSample::prepare_all(&test, &cfg.preprocess)?;
    let model = Model::new(net)?;
    println!("params {}", model.num_params());
    let base = evaluate(&model, &test, 4)?;
    println!("untrained epe {:.3} d1 {:.3}", base.epe, base.d1);
    let mut trainer = Trainer::new(model, cfg)?;
    struct Print;
    impl disparity_core::train::TrainObserver for Print {
        fn on_epoch(&mut self, l: &disparity_core::train::EpochLog) -> disparity_core::Result<()> {
            println!(
                "round {} epoch {} loss {:.4} train_epe {:.3} test_epe {:.3} d1 {:.3} ({:.1}s)",
                l.round, l.epoch, l.train_loss, l.train_epe, l.test_epe, l.test_d1, l.seconds
            );
            Ok(())
        }
    }
    trainer.run(&train, &test, None, &mut Print)?;
    for d in [0.0, 2.0, 4.0, 8.0] {
        let s = gen_random_dot_stereogram(64, 128, &DisparityField::Constant(d), 77)?;
        let p = PreparedSample::new(&s, &trainer.config.preprocess)?;
        let pred = disparity_core::train::predict_disparity(&trainer.model, &p.left, &p.right)?;
        let mut v = pred.into_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("shift {d}: median {:.3}", v[v.len() / 2]);
    }
    Ok(())
}
