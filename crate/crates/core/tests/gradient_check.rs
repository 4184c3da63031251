mod common;

use common::Lcg;
use scorefp_core::score_net::{sliced_loss, LossInputs, ScoreNet};

const STEP: f64 = 1e-5;

/// Relative error of the analytic gradient against central differences,
/// with a small absolute floor for parameters whose gradient is ~0.
fn worst_relative_error(net: &ScoreNet, inputs: &LossInputs<'_>) -> f64 {
    let (_, analytic) = sliced_loss(net, inputs).unwrap();
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for k in 0..net.num_params() {
        let base = net.params()[k];
        probe.params_mut()[k] = base + STEP;
        let (up, _) = sliced_loss(&probe, inputs).unwrap();
        probe.params_mut()[k] = base - STEP;
        let (down, _) = sliced_loss(&probe, inputs).unwrap();
        probe.params_mut()[k] = base;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

fn random_net(sizes: Vec<usize>, rng: &mut Lcg) -> ScoreNet {
    let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    ScoreNet::new(sizes, (0..count).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

#[test]
fn micro_network_gradient() {
    let mut rng = Lcg(1);
    let net = random_net(vec![2, 1, 1, 1], &mut rng);
    assert_eq!(net.num_params(), 7);
    let inputs = LossInputs {
        x: &[0.4],
        z: &[-0.8],
        t: 0.3,
        t_final: 1.0,
        lambda: 0.2,
        g: 0.9,
    };
    let err = worst_relative_error(&net, &inputs);
    assert!(err <= 1e-4, "relative error {err:e}");
}

#[test]
fn random_micro_networks_gradient() {
    let mut rng = Lcg(99);
    let mut trials = 0;
    let mut worst = 0.0_f64;
    while trials < 24 {
        let dim = 1 + (rng.next_f64() * 3.0) as usize;
        let depth = 1 + (rng.next_f64() * 2.0) as usize;
        let mut sizes = vec![dim + 1];
        sizes.extend((0..depth).map(|_| 1 + (rng.next_f64() * 4.0) as usize));
        sizes.push(dim);
        let count: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if count > 50 {
            continue;
        }
        let net = random_net(sizes, &mut rng);
        let x: Vec<f64> = (0..dim).map(|_| rng.next_f64()).collect();
        let z: Vec<f64> = (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let inputs = LossInputs {
            x: &x,
            z: &z,
            t: rng.next_f64(),
            t_final: 1.0,
            lambda: rng.uniform(0.01, 0.5),
            g: rng.uniform(0.3, 2.0),
        };
        worst = worst.max(worst_relative_error(&net, &inputs));
        trials += 1;
    }
    eprintln!("worst relative gradient error over {trials} trials: {worst:e}");
    assert!(worst <= 1e-4);
}
