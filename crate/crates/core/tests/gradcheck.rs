mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backprop_matches_central_differences(seed in any::<u64>()) {
        let err = common::max_gradient_error(seed);
        prop_assert!(err < common::GRAD_TOL, "seed {seed}: relative error {err:e}");
    }
}
