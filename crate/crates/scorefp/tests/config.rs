use proptest::prelude::*;
use scorefp::config::{BoundaryKind, SdeKind};
use scorefp::{Mode, RunConfig};
use scorefp_core::fp_solver::Boundary;
use scorefp_core::kde::Bandwidth;
use scorefp_core::score_net::TrainMode;

#[test]
fn defaults() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.steps, 100);
    assert_eq!(cfg.t_final, 1.0);
    assert_eq!(cfg.targets, vec![0.99, 0.98, 0.95, 0.90]);
    assert_eq!(cfg.learning_rate, 1e-3);
    assert_eq!(cfg.hidden, vec![128, 128]);
    assert_eq!((cfg.lambda_min, cfg.lambda_max), (0.01, 0.5));
    assert_eq!((cfg.tol, cfg.max_iters), (1e-6, 50));
    assert_eq!(cfg.solver().boundary, Boundary::Truncate);
    assert_eq!(cfg.kde().bandwidth, Bandwidth::Scott);
    assert_eq!(cfg.snapshots, 10);
    cfg.validate().unwrap();
}

#[test]
fn partial_files_fill_in_defaults() {
    let cfg = RunConfig::from_json(r#"{"sigma": 0.5, "mode": "baseline", "kde_bandwidth": 2.0, "boundary": "reflect"}"#).unwrap();
    assert_eq!(cfg.sigma, 0.5);
    assert_eq!(cfg.mode, Mode::Baseline);
    assert_eq!(cfg.train_config(cfg.mode).mode, TrainMode::Baseline);
    assert_eq!(cfg.kde().bandwidth, Bandwidth::Fixed(2.0));
    assert_eq!(cfg.boundary, BoundaryKind::Reflect);
    assert_eq!(cfg.steps, 100);
}

#[test]
fn invalid_files_are_rejected() {
    assert!(RunConfig::from_json(r#"{"sigmaa": 1}"#).is_err());
    assert!(RunConfig::from_json(r#"{"steps": 0}"#).is_err());
    assert!(RunConfig::from_json(r#"{"lambda_min": 0.6}"#).is_err());
    assert!(RunConfig::from_json(r#"{"sde": "vp-like", "beta": -1}"#).is_err());
    assert!(RunConfig::from_json(r#"{"snapshots": 101}"#).is_err());
    assert!(RunConfig::from_json("not json").is_err());
}

proptest! {
    #[test]
    fn serialization_round_trips(
        sigma in 0.0f64..5.0,
        steps in 10usize..500,
        seed in any::<u64>(),
        epochs in 0usize..5000,
        vp in any::<bool>(),
        bandwidth in prop::option::of(0.5f64..8.0),
        hidden in prop::collection::vec(1usize..300, 1..4),
    ) {
        let cfg = RunConfig {
            sigma,
            steps,
            seed,
            epochs,
            sde: if vp { SdeKind::VpLike } else { SdeKind::ZeroDrift },
            kde_bandwidth: bandwidth,
            hidden,
            ..RunConfig::default()
        };
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
