//! Extended Mallows distance.
//!
//! Summing the coupling cost over every joint distribution with the given
//! marginals (instead of taking the minimum) reduces, on samples, to the
//! double sum `Σᵢ Σⱼ |xᵢ − yⱼ|ᵗ`. That raw sum is what gets optimized.

use alloc::vec::Vec;

use super::{Gradient, ProjectedSamples};
use crate::{Error, Result};

/// `Σᵢ Σⱼ |xᵢ − yⱼ|ᵗ`.
///
/// For `t = 2` this uses the expanded form
/// `k·Σxᵢ² + n·Σyⱼ² − 2(Σxᵢ)(Σyⱼ)` in `O(n + k)`. Both samples are first
/// shifted by the pooled mean, which leaves the double sum unchanged and
/// keeps the expansion free of cancellation.
pub fn mallows_value(s: &ProjectedSamples, t: u32) -> Result<f64> {
    match t {
        0 => Err(Error::UnsupportedOrder(0)),
        2 => Ok(squared_sum(s.x(), s.y())),
        _ => Ok(generic_sum(s.x(), s.y(), t)),
    }
}

pub(crate) fn squared_sum(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let k = y.len() as f64;
    let shift = (x.iter().sum::<f64>() + y.iter().sum::<f64>()) / (n + k);
    let (mut sx, mut sxx) = (0.0, 0.0);
    for &v in x {
        let d = v - shift;
        sx += d;
        sxx += d * d;
    }
    let (mut sy, mut syy) = (0.0, 0.0);
    for &v in y {
        let d = v - shift;
        sy += d;
        syy += d * d;
    }
    (k * sxx + n * syy - 2.0 * sx * sy).max(0.0)
}

fn generic_sum(x: &[f64], y: &[f64], t: u32) -> f64 {
    let t = t as f64;
    x.iter()
        .map(|&a| y.iter().map(|&b| libm::pow((a - b).abs(), t)).sum::<f64>())
        .sum()
}

/// `∂/∂xᵢ = 2(k·xᵢ − Σⱼ yⱼ)`, `∂/∂yⱼ = 2(n·yⱼ − Σᵢ xᵢ)`, in `O(n + k)`.
/// Only `t = 2` is supported.
pub fn mallows_gradient(s: &ProjectedSamples, t: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    if t != 2 {
        return Err(Error::UnsupportedOrder(t));
    }
    let g = squared_gradient(s.x(), s.y());
    Ok((g.dx, g.dy))
}

pub(crate) fn squared_gradient(x: &[f64], y: &[f64]) -> Gradient {
    let n = x.len() as f64;
    let k = y.len() as f64;
    let sum_x: f64 = x.iter().sum();
    let sum_y: f64 = y.iter().sum();
    Gradient {
        value: squared_sum(x, y),
        dx: x.iter().map(|&v| 2.0 * (k * v - sum_y)).collect(),
        dy: y.iter().map(|&v| 2.0 * (n * v - sum_x)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn brute_force(x: &[f64], y: &[f64], t: i32) -> f64 {
        let mut s = 0.0;
        for a in x {
            for b in y {
                s += (a - b).abs().powi(t);
            }
        }
        s
    }

    fn samples(x: Vec<f64>, y: Vec<f64>) -> ProjectedSamples {
        ProjectedSamples::new(x, y).unwrap()
    }

    #[test]
    fn identical_constants_give_zero() {
        for c in [0.0, 1.5, -3.25, 1e6] {
            let s = samples(vec![c, c], vec![c, c]);
            assert_eq!(mallows_value(&s, 2).unwrap(), 0.0);
        }
    }

    #[test]
    fn hand_double_sum() {
        // (0-2)² + (1-2)² + (0-2)² + (1-2)² with y duplicated to meet k ≥ 2.
        let s = samples(vec![0.0, 1.0], vec![2.0, 2.0]);
        assert_relative_eq!(mallows_value(&s, 2).unwrap(), 10.0, max_relative = 1e-15);
        // Single-y form of the same sum: x = {0, 1}, y = {2} → 5.
        assert_relative_eq!(squared_sum(&[0.0, 1.0], &[2.0]), 5.0, max_relative = 1e-15);
    }

    #[test]
    fn other_orders_use_double_sum() {
        let s = samples(vec![0.0, 1.0], vec![3.0, -1.0]);
        assert_relative_eq!(mallows_value(&s, 1).unwrap(), 3.0 + 1.0 + 2.0 + 2.0);
        assert_relative_eq!(mallows_value(&s, 3).unwrap(), 27.0 + 1.0 + 8.0 + 8.0);
        assert!(mallows_gradient(&s, 3).is_err());
    }

    #[test]
    fn gradient_hand_values() {
        assert_eq!(squared_gradient(&[0.0], &[0.0]).dx, vec![0.0]);
        let g = squared_gradient(&[1.0], &[0.0]);
        assert_eq!((g.dx, g.dy), (vec![2.0], vec![-2.0]));
    }

    #[test]
    fn fifty_by_thirty_seven_matches_brute_force() {
        let mut rng = crate::rng::stream(5, 0, 0);
        use rand::Rng;
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..37).map(|_| rng.random_range(-1.0..5.0)).collect();
        let s = samples(x.clone(), y.clone());
        assert_relative_eq!(
            mallows_value(&s, 2).unwrap(),
            brute_force(&x, &y, 2),
            max_relative = 1e-9
        );
    }

    proptest! {
        #[test]
        fn fast_form_equals_double_sum(
            x in proptest::collection::vec(-100f64..100.0, 2..60),
            y in proptest::collection::vec(-100f64..100.0, 2..60),
        ) {
            let s = samples(x.clone(), y.clone());
            let fast = mallows_value(&s, 2).unwrap();
            let slow = brute_force(&x, &y, 2);
            prop_assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1e-300));
        }

        #[test]
        fn symmetric_in_roles(
            x in proptest::collection::vec(-10f64..10.0, 2..20),
            y in proptest::collection::vec(-10f64..10.0, 2..20),
        ) {
            let a = mallows_value(&samples(x.clone(), y.clone()), 2).unwrap();
            let b = mallows_value(&samples(y, x), 2).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }
}
