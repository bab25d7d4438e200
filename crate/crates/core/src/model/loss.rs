/// Huber loss and its derivative with respect to the prediction.
///
/// Quadratic `r²/2` for `|r| ≤ δ`, linear `δ(|r| − δ/2)` beyond, where
/// `r = prediction − target`.
pub fn huber_loss(prediction: f64, target: f64, delta: f64) -> (f64, f64) {
    debug_assert!(delta > 0.0);
    let r = prediction - target;
    if r.abs() <= delta {
        (0.5 * r * r, r)
    } else {
        (delta * (r.abs() - 0.5 * delta), delta * r.signum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branch_examples() {
        assert_eq!(huber_loss(0.3, 0.3, 1.0), (0.0, 0.0));
        assert_eq!(huber_loss(0.5, 0.0, 1.0), (0.125, 0.5));
        assert_eq!(huber_loss(2.0, 0.0, 1.0), (1.5, 1.0));
        assert_eq!(huber_loss(-2.0, 0.0, 1.0), (1.5, -1.0));
    }

    #[test]
    fn branches_meet_at_delta() {
        for delta in [0.1, 1.0, 2.5] {
            let (inside, _) = huber_loss(delta, 0.0, delta);
            let (outside, _) = huber_loss(delta + 1e-12, 0.0, delta);
            assert_eq!(inside, delta * delta / 2.0);
            assert!((outside - delta * delta / 2.0).abs() < 1e-11);
        }
    }

    proptest! {
        #[test]
        fn non_negative_with_bounded_slope(p in -10.0f64..10.0, t in -10.0f64..10.0, delta in 0.01f64..5.0) {
            let (loss, grad) = huber_loss(p, t, delta);
            prop_assert!(loss >= 0.0);
            prop_assert!(grad.abs() <= delta);
        }
    }
}
