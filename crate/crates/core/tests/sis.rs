//! Shift-invariant spectral losses: in-range translations cost nothing,
//! out-of-range ones do, and both stages agree with an 81-shift brute force.

use pansharp_core::losses::{edge_loss, luminance};
use pansharp_tensor::ops::align::shift_min_abs;
use pansharp_tensor::{Shape, ShiftMinMode, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;
use common::*;

#[test]
fn fam_loss_vanishes_for_every_in_range_shift() {
    let x = random_image(1, 20, 20);
    for i in -4..=4 {
        for j in -4..=4 {
            let shifted = translate(&x, i, j);
            let map = shift_min_abs(&shifted, &x, 4, 1, ShiftMinMode::PerChannel).unwrap();
            assert_eq!(interior_max(&map.values, 4), 0.0, "shift ({i},{j})");
        }
    }
    assert_eq!(sis_fam(&translate(&x, 3, -4), &x), 0.0);
}

#[test]
fn psm_loss_vanishes_for_every_in_range_stride_four_shift() {
    let x = random_image(2, 48, 48);
    for i in -4..=4 {
        for j in -4..=4 {
            let shifted = translate(&x, 4 * i, 4 * j);
            let map = shift_min_abs(&shifted, &x, 4, 4, ShiftMinMode::PerChannel).unwrap();
            assert_eq!(interior_max(&map.values, 16), 0.0, "shift ({},{})", 4 * i, 4 * j);
        }
    }
}

#[test]
fn loss_is_exactly_the_mean_of_the_minimum_map() {
    let (a, b) = (random_image(3, 12, 12), random_image(4, 12, 12));
    let map = shift_min_abs(&a, &b, 4, 1, ShiftMinMode::PerChannel).unwrap();
    assert_eq!(sis_fam(&a, &b), map.values.sum() / map.values.len() as f64);
}

#[test]
fn out_of_range_shift_on_checkerboard_costs() {
    let (lo, hi) = (0.1, 0.9);
    let board = Tensor::from_fn(Shape::new(1, 64, 64, 3), |_, y, x, _| if (y / 16 + x / 16) % 2 == 0 { lo } else { hi });
    let loss = sis_fam(&translate(&board, 6, 0), &board);
    assert!(loss > 0.05 * (hi - lo), "loss {loss}");
}

#[test]
fn psm_stride_cannot_absorb_a_two_pixel_shift() {
    let stripes = Tensor::from_fn(Shape::new(1, 48, 32, 3), |_, y, _, _| if (y / 2) % 2 == 0 { 0.0 } else { 1.0 });
    let shifted = translate(&stripes, 2, 0);
    let loss = sis_psm(&shifted, &stripes);
    assert!(loss > 0.05, "loss {loss}");
    let map = shift_min_abs(&shifted, &stripes, 4, 4, ShiftMinMode::PerChannel).unwrap();
    for y in 16..32 {
        assert!((0..32).all(|x| map.values.at(0, y, x, 0) == 1.0));
    }
}

#[test]
fn both_stages_match_the_brute_force_oracle() {
    for seed in 0..4 {
        let (a, b) = (random_image(10 + seed, 10, 11), random_image(20 + seed, 10, 11));
        assert!((sis_fam(&a, &b) - brute_force(&a, &b, 1)).abs() <= 1e-10);
        let (a, b) = (random_image(30 + seed, 24, 20), random_image(40 + seed, 24, 20));
        assert!((sis_psm(&a, &b) - brute_force(&a, &b, 4)).abs() <= 1e-10);
    }
}

#[test]
fn identical_inputs_cost_nothing() {
    let x = random_image(5, 8, 8);
    assert_eq!(sis_fam(&x, &x), 0.0);
    assert_eq!(sis_psm(&x, &x), 0.0);
}

#[test]
fn edge_loss_matches_loop_oracle() {
    let pred = random_image(6, 9, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pan = Tensor::from_fn(Shape::new(1, 9, 7, 1), |_, _, _, _| rng.gen::<f64>());
    let lum = |y: usize, x: usize| (0..3).map(|c| pred.at(0, y, x, c)).sum::<f64>() / 3.0;
    let mut total = 0.0;
    for y in 0..9 {
        for x in 0..7 {
            let (lgx, pgx) = if x + 1 < 7 { (lum(y, x + 1) - lum(y, x), pan.at(0, y, x + 1, 0) - pan.at(0, y, x, 0)) } else { (0.0, 0.0) };
            let (lgy, pgy) = if y + 1 < 9 { (lum(y + 1, x) - lum(y, x), pan.at(0, y + 1, x, 0) - pan.at(0, y, x, 0)) } else { (0.0, 0.0) };
            total += (lgx.abs() - pgx.abs()).abs() + (lgy.abs() - pgy.abs()).abs();
        }
    }
    let want = total / (9 * 7 * 2) as f64;
    let got = scalar(|t| {
        let (p, r) = (t.constant(pred.clone()), t.constant(pan.clone()));
        edge_loss(t, p, r)
    });
    assert!((got - want).abs() <= 1e-10);
}

#[test]
fn luminance_is_the_channel_mean() {
    let x = Tensor::new(Shape::new(1, 1, 1, 3), vec![0.3, 0.6, 0.9]).unwrap();
    let l = scalar(|t| {
        let v = t.constant(x.clone());
        let l = luminance(t, v)?;
        t.mean(l)
    });
    assert!((l - 0.6).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sis_is_bounded_by_plain_l1(seed in any::<u64>()) {
        let (a, b) = (random_image(seed, 8, 8), random_image(seed ^ 1, 8, 8));
        let l1 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        let s = sis_fam(&a, &b);
        prop_assert!(s >= 0.0);
        prop_assert!(s <= l1 + 1e-15);
    }
}
