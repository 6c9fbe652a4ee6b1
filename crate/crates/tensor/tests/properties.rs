use pansharp_tensor::ops;
use pansharp_tensor::{Padding, Shape, Tensor};
use proptest::prelude::*;

fn tensor(shape: Shape) -> impl Strategy<Value = Tensor> {
    proptest::collection::vec(-3.0f64..3.0, shape.len()).prop_map(move |d| Tensor::new(shape, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_sums_to_one_and_ignores_offsets(x in tensor(Shape::new(1, 2, 3, 81)), shift in -20.0f64..20.0) {
        let s = ops::softmax_channels(&x).unwrap();
        for px in s.data().chunks_exact(81) {
            prop_assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let moved = ops::softmax_channels(&x.map(|v| v + shift)).unwrap();
        prop_assert!(moved.max_abs_diff(&s) < 1e-12);
    }

    #[test]
    fn pixel_shuffle_inverts_space_to_channel(x in tensor(Shape::new(2, 8, 12, 1))) {
        let round = ops::pixel_shuffle(&ops::space_to_channel(&x, 4).unwrap(), 4).unwrap();
        prop_assert_eq!(round, x);
    }

    #[test]
    fn forward_ops_are_pure(x in tensor(Shape::new(1, 5, 5, 2)), k in tensor(Shape::new(3, 3, 2, 2))) {
        let b = Tensor::zeros(Shape::vector(2));
        let a1 = ops::conv2d(&x, &k, &b, Padding::Replicate).unwrap();
        let a2 = ops::conv2d(&x, &k, &b, Padding::Replicate).unwrap();
        prop_assert_eq!(a1.data(), a2.data());
        let r1 = ops::resize_bilinear(&x, 20, 20).unwrap();
        let r2 = ops::resize_bilinear(&x, 20, 20).unwrap();
        prop_assert_eq!(r1.data(), r2.data());
    }
}
