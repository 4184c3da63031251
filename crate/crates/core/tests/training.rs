use proptest::prelude::*;
use scorefp_core::score_net::{sliced_loss, train, LossInputs, ScoreNet, TrainConfig, TrainMode};
use scorefp_core::{FieldSeries, ImageField, ScoreField, SdeSpec, TimeGrid};

fn small_config(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        epochs: 15,
        hidden: vec![8, 6],
        seed: 11,
        mode,
        ..TrainConfig::default()
    }
}

fn ramp(h: usize, w: usize) -> ImageField {
    ImageField::from_fn(h, w, |i, j| ((i * w + j) as f64 / (h * w) as f64).sqrt()).unwrap()
}

#[test]
fn fixed_seed_reproduces_trace_and_parameters() {
    let x = ramp(4, 4);
    let grid = TimeGrid::new(1.0, 12).unwrap();
    let sde = SdeSpec::zero_drift(1.0).unwrap();
    let scores = ScoreField(FieldSeries::zeros(4, 4, grid));
    let cfg = small_config(TrainMode::Embedded);
    let a = train(Some(&scores), &x, &sde, grid, &cfg).unwrap();
    let b = train(Some(&scores), &x, &sde, grid, &cfg).unwrap();
    assert_eq!(a.loss_trace.len(), 15);
    assert_eq!(a, b);

    let other = TrainConfig { seed: 12, ..cfg };
    let c = train(Some(&scores), &x, &sde, grid, &other).unwrap();
    assert_ne!(a.loss_trace, c.loss_trace);
}

#[test]
fn modes_agree_without_transport() {
    let x = ramp(3, 5);
    let grid = TimeGrid::new(0.5, 9).unwrap();
    let sde = SdeSpec::zero_drift(0.7).unwrap();
    let scores = ScoreField(FieldSeries::zeros(3, 5, grid));
    let emb = train(Some(&scores), &x, &sde, grid, &small_config(TrainMode::Embedded)).unwrap();
    let base = train(None, &x, &sde, grid, &small_config(TrainMode::Baseline)).unwrap();
    assert_eq!(emb, base);
}

#[test]
fn modes_differ_once_scores_move_the_image() {
    let x = ramp(3, 3);
    let grid = TimeGrid::new(1.0, 6).unwrap();
    let sde = SdeSpec::zero_drift(1.0).unwrap();
    let data = (0..grid.steps() + 1).flat_map(|n| (0..9).map(move |k| 0.1 * (n + k) as f64)).collect();
    let scores = ScoreField(FieldSeries::new(3, 3, grid, data).unwrap());
    let emb = train(Some(&scores), &x, &sde, grid, &small_config(TrainMode::Embedded)).unwrap();
    let base = train(Some(&scores), &x, &sde, grid, &small_config(TrainMode::Baseline)).unwrap();
    assert_ne!(emb.loss_trace, base.loss_trace);
}

#[test]
fn training_lowers_the_loss_on_a_tiny_problem() {
    let x = ramp(3, 3);
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let sde = SdeSpec::zero_drift(1.0).unwrap();
    let cfg = TrainConfig {
        epochs: 400,
        hidden: vec![16, 16],
        learning_rate: 1e-2,
        mode: TrainMode::Baseline,
        ..TrainConfig::default()
    };
    let out = train(None, &x, &sde, grid, &cfg).unwrap();
    let head: f64 = out.loss_trace[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = out.loss_trace[380..].iter().sum::<f64>() / 20.0;
    assert!(tail < 0.9 * head, "{head} -> {tail}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_nonnegative(
        seed in any::<u64>(),
        x in prop::collection::vec(-2.0f64..2.0, 4),
        z in prop::collection::vec(-3.0f64..3.0, 4),
        t in 0.0f64..1.0,
        lambda in 1e-3f64..1.0,
        g in 0.05f64..3.0,
    ) {
        let net = ScoreNet::init(4, &[5], seed).unwrap();
        let inputs = LossInputs { x: &x, z: &z, t, t_final: 1.0, lambda, g };
        let (loss, grads) = sliced_loss(&net, &inputs).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!(grads.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_is_deterministic_and_shaped(seed in any::<u64>(), x in prop::collection::vec(0.0f64..1.0, 9), t in 0.0f64..2.0) {
        let net = ScoreNet::init(9, &[7, 7], seed).unwrap();
        let a = net.forward(&x, t, 2.0).unwrap();
        let b = net.forward(&x, t, 2.0).unwrap();
        prop_assert_eq!(a.len(), 9);
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
