//! AdamW against a reference trace and its closed-form limits.

use pansharp_core::params::ParamStore;
use pansharp_core::trainer::{AdamW, OptimizerState, TrainConfig};
use pansharp_tensor::{Shape, Tensor};

// Printed by `python3 tests/oracles/adamw.py`.
const TRACE: [[f64; 2]; 10] = [
    [0.8990000003846154, -1.89800000125],
    [0.7985648494705686, -1.7962235637415154],
    [0.6990954019987907, -1.6947586761511657],
    [0.6010761954439836, -1.5936992186703458],
    [0.5050866645107484, -1.493145628832364],
    [0.41180927744421325, -1.3932057786888097],
    [0.3220311271020756, -1.2939961109213198],
    [0.23663445250520465, -1.1956430753517986],
    [0.15657128015763216, -1.0982848884749148],
    [0.08281879261432497, -1.002073602188447],
];

fn store(values: &[f64]) -> ParamStore {
    let mut s = ParamStore::new();
    s.insert("theta", Tensor::new(Shape::vector(values.len()), values.to_vec()).unwrap()).unwrap();
    s
}

#[test]
fn ten_step_quadratic_trace_matches_reference() {
    let mut params = store(&[1.0, -2.0]);
    let mut state = OptimizerState::new(&params);
    let opt = AdamW::default();
    for want in TRACE {
        let p = params.by_name("theta").unwrap().data().to_vec();
        let g = vec![3.0 * p[0] + 0.2 * p[1], 0.5 * p[1] + 0.2 * p[0]];
        let g = Tensor::new(Shape::vector(2), g).unwrap();
        opt.step(&mut params, &[g], &mut state, 0.1, 0.01).unwrap();
        let got = params.by_name("theta").unwrap().data();
        for k in 0..2 {
            assert!((got[k] - want[k]).abs() <= 1e-12, "step {}: {} vs {}", state.step, got[k], want[k]);
        }
    }
}

#[test]
fn zero_gradient_only_shrinks() {
    let mut params = store(&[2.0, -0.5]);
    let mut state = OptimizerState::new(&params);
    let (lr, wd) = (0.01, 0.1);
    AdamW::default()
        .step(&mut params, &[Tensor::zeros(Shape::vector(2))], &mut state, lr, wd)
        .unwrap();
    let got = params.by_name("theta").unwrap().data();
    assert_eq!(got, &[2.0 * (1.0 - lr * wd), -0.5 * (1.0 - lr * wd)]);
}

#[test]
fn constant_gradient_steps_have_magnitude_lr() {
    let mut params = store(&[0.0, 0.0]);
    let mut state = OptimizerState::new(&params);
    let g = Tensor::new(Shape::vector(2), vec![0.3, -7.0]).unwrap();
    let lr = 1e-3;
    let mut prev = vec![0.0, 0.0];
    for _ in 0..50 {
        AdamW::default().step(&mut params, std::slice::from_ref(&g), &mut state, lr, 0.0).unwrap();
        let now = params.by_name("theta").unwrap().data().to_vec();
        assert!(now[0] < prev[0] && now[1] > prev[1]);
        for k in 0..2 {
            assert!(((now[k] - prev[k]).abs() - lr).abs() < 1e-9);
        }
        prev = now;
    }
}

#[test]
fn mismatched_gradients_are_rejected() {
    let mut params = store(&[1.0, 1.0]);
    let mut state = OptimizerState::new(&params);
    let bad = Tensor::zeros(Shape::vector(3));
    assert!(AdamW::default().step(&mut params, &[bad], &mut state, 0.1, 0.0).is_err());
    assert!(AdamW::default().step(&mut params, &[], &mut state, 0.1, 0.0).is_err());
}

#[test]
fn schedule_divides_both_rates_at_the_decay_point() {
    let cfg = TrainConfig { total_iters: 10, lr: 1e-3, weight_decay: 1e-5, ..TrainConfig::default() };
    assert_eq!(cfg.schedule(4), (1e-3, 1e-5));
    assert_eq!(cfg.schedule(5), (1e-3 / 10.0, 1e-5 / 10.0));
}
