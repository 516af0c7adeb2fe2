//! Property tests over randomized inputs.

use proptest::prelude::*;

use rawpipe_core::bayer::{pack, reduce_green_sampling, unpack, BayerFrame, CfaPattern};
use rawpipe_core::gge::{gamma_of_alpha, GAMMA_MAX_DEFAULT, GAMMA_MIN_DEFAULT};
use rawpipe_core::nn::{concat_channels, split_channels};
use rawpipe_core::tensor::Tensor;

fn frame_strategy() -> impl Strategy<Value = BayerFrame> {
    (1usize..=8, 1usize..=8, 0u16..512, 0u16..8)
        .prop_flat_map(|(th, tw, black, span_step)| {
            let white = black + 256 + span_step * 7919;
            let count = 4 * th * tw;
            (
                Just((2 * tw, 2 * th, black, white)),
                proptest::collection::vec(black..=white, count),
            )
        })
        .prop_map(|((w, h, black, white), samples)| {
            BayerFrame::new(w, h, samples, CfaPattern::Rggb, black, white).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn pack_unpack_is_exact_for_in_range_samples(frame in frame_strategy()) {
        let packed = pack(&frame);
        prop_assert!(packed.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let back = unpack(&packed, frame.black_level(), frame.white_level()).unwrap();
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn green_reduction_is_idempotent_and_preserves_rb(frame in frame_strategy()) {
        let packed = pack(&frame);
        let reduced = reduce_green_sampling(&packed);
        prop_assert_eq!(reduced.plane(1), reduced.plane(2));
        prop_assert_eq!(reduced.plane(0), packed.plane(0));
        prop_assert_eq!(reduced.plane(3), packed.plane(3));
        prop_assert_eq!(reduce_green_sampling(&reduced), reduced);
    }

    #[test]
    fn gamma_stays_bounded_and_monotone(a in -8.0f64..8.0, b in -8.0f64..8.0) {
        let ga = gamma_of_alpha(a, GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT).unwrap();
        let gb = gamma_of_alpha(b, GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT).unwrap();
        prop_assert!(ga > GAMMA_MIN_DEFAULT && ga < GAMMA_MAX_DEFAULT);
        if a < b {
            prop_assert!(ga < gb);
        }
    }

    #[test]
    fn concat_then_split_recovers_inputs(
        ca in 1usize..4,
        cb in 0usize..4,
        h in 1usize..5,
        w in 1usize..5,
        seedlike in 0u32..1000,
    ) {
        let fill = |c: usize, offset: f32| {
            let data: Vec<f32> = (0..c * h * w)
                .map(|i| offset + (i as f32) * 0.25 + seedlike as f32)
                .collect();
            Tensor::from_vec(&[1, c, h, w], data).unwrap()
        };
        let a = fill(ca, 0.0);
        let b = fill(cb, 1000.0);
        let cat = concat_channels(&a, &b).unwrap();
        let (ra, rb) = split_channels(&cat, ca).unwrap();
        prop_assert_eq!(ra, a);
        prop_assert_eq!(rb, b);
    }
}
