//! Helpers shared by integration test targets.

use emokd::distill::{
    loss_gradients, sample_total_loss, DistillHead, DistillHeadConfig, DistillHyperparams,
};
use emokd::{one_hot, LabelSpace, LogitVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const KINK_MARGIN: f64 = 1e-2;

pub fn space(c: usize) -> LabelSpace {
    let names = ["c0", "c1", "c2", "c3"];
    LabelSpace::new(&format!("k{c}"), &names[..c]).unwrap()
}

/// Smallest |pre-activation| over the hidden layers.
fn kink_distance(head: &DistillHead, x: &[f64]) -> f64 {
    let mut h = ndarray::Array1::from(x.to_vec());
    let mut closest = f64::INFINITY;
    let n = head.layers.len();
    for (k, layer) in head.layers.iter().enumerate() {
        let z = layer.forward(h.view());
        if k + 1 < n {
            closest = z.iter().fold(closest, |m, v| m.min(v.abs()));
        }
        h = z.mapv(|v| v.max(0.0));
    }
    closest
}

fn flatten(grads: &[emokd::distill::Dense]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|g| {
            g.weight
                .iter()
                .chain(g.bias.iter())
                .copied()
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Returns the worst relative error over every parameter for every (alpha, tau).
pub fn check_head(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=8);
    let c = rng.random_range(2..=4);
    let hidden: Vec<usize> = (0..rng.random_range(0..=2))
        .map(|_| rng.random_range(1..=6))
        .collect();
    let head = DistillHead::init(DistillHeadConfig::new(d, hidden, c), space(c), seed).unwrap();

    let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    for _ in 0..1000 {
        if kink_distance(&head, &x) > KINK_MARGIN {
            break;
        }
        x = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    }
    assert!(
        kink_distance(&head, &x) > KINK_MARGIN,
        "head {seed}: could not draw a sample away from ReLU kinks"
    );

    let teacher = LogitVector::new(
        space(c),
        (0..c).map(|_| rng.random_range(-3.0..3.0)).collect(),
    )
    .unwrap();
    let target = one_hot(&format!("c{}", rng.random_range(0..c)), &space(c)).unwrap();
    let base = head.params();

    let mut worst: f64 = 0.0;
    for alpha in [0.0, 0.5, 1.0] {
        for tau in [1.0, 2.0, 4.0] {
            let hp = DistillHyperparams {
                alpha,
                tau,
                ..Default::default()
            };
            let analytic = flatten(&loss_gradients(&x, &head, &teacher, &target, &hp).unwrap());
            assert_eq!(analytic.len(), base.len());
            let mut probe = head.clone();
            for k in 0..base.len() {
                let mut p = base.clone();
                p[k] += STEP;
                probe.set_params(&p).unwrap();
                let up = sample_total_loss(&x, &probe, &teacher, &target, &hp).unwrap();
                p[k] -= 2.0 * STEP;
                probe.set_params(&p).unwrap();
                let down = sample_total_loss(&x, &probe, &teacher, &target, &hp).unwrap();
                let numeric = (up - down) / (2.0 * STEP);
                let err =
                    (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(err);
            }
        }
    }
    worst
}
