use pansharp_tensor::gradcheck::{op_suite, GradCheckConfig};

#[test]
fn every_op_matches_central_differences_on_two_seeds() {
    for seed in [1, 2] {
        let reports = op_suite(seed, &GradCheckConfig::default()).unwrap();
        assert!(reports.len() >= 25);
        for r in &reports {
            assert!(r.passed(), "seed {seed}: {r:?}");
        }
    }
}

