//! Quadratic measure `∫ (p(z) − q(z))² dz` between Gaussian kernel density
//! estimates, expanded into four pairwise kernel sums:
//!
//! ```text
//! 1/n² Σᵢ Σⱼ κ_σX(xᵢ − xⱼ) + 1/k² Σᵢ Σⱼ κ_σY(yᵢ − yⱼ)
//!   − 1/(nk) Σᵢ Σⱼ κ_σY(xᵢ − yⱼ) − 1/(nk) Σᵢ Σⱼ κ_σX(xᵢ − yⱼ)
//! ```
//!
//! with `κ_σ(d) = exp(−d²/2σ²) / (σ√(2π))`. Cost is `O(n² + k² + nk)`.

use alloc::vec;
use alloc::vec::Vec;

use super::{Bandwidths, Gradient, ProjectedSamples};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy)]
struct Kernel {
    norm: f64,
    inv_two_var: f64,
    inv_var: f64,
}

impl Kernel {
    fn new(sigma: f64) -> Self {
        Self {
            norm: INV_SQRT_2PI / sigma,
            inv_two_var: 0.5 / (sigma * sigma),
            inv_var: 1.0 / (sigma * sigma),
        }
    }

    #[inline]
    fn value(&self, d: f64) -> f64 {
        self.norm * libm::exp(-d * d * self.inv_two_var)
    }

    /// `(κ(d), κ'(d))`.
    #[inline]
    fn with_slope(&self, d: f64) -> (f64, f64) {
        let k = self.value(d);
        (k, -d * self.inv_var * k)
    }
}

pub fn quadratic_value(s: &ProjectedSamples, bw: &Bandwidths) -> f64 {
    value(s.x(), s.y(), bw)
}

/// Exact partial derivatives of [`quadratic_value`] with the bandwidths held
/// fixed.
pub fn quadratic_gradient(s: &ProjectedSamples, bw: &Bandwidths) -> (Vec<f64>, Vec<f64>) {
    let g = value_and_gradient(s.x(), s.y(), bw);
    (g.dx, g.dy)
}

fn self_sum(z: &[f64], k: Kernel) -> f64 {
    let mut off = 0.0;
    for (i, &a) in z.iter().enumerate() {
        for &b in &z[i + 1..] {
            off += k.value(a - b);
        }
    }
    z.len() as f64 * k.norm + 2.0 * off
}

pub(crate) fn value(x: &[f64], y: &[f64], bw: &Bandwidths) -> f64 {
    let kx = Kernel::new(bw.sigma_x);
    let ky = Kernel::new(bw.sigma_y);
    let n = x.len() as f64;
    let k = y.len() as f64;
    let same = bw.sigma_x == bw.sigma_y;
    let mut cross = 0.0;
    for &a in x {
        for &b in y {
            let d = a - b;
            cross += if same { 2.0 * kx.value(d) } else { kx.value(d) + ky.value(d) };
        }
    }
    self_sum(x, kx) / (n * n) + self_sum(y, ky) / (k * k) - cross / (n * k)
}

pub(crate) fn value_and_gradient(x: &[f64], y: &[f64], bw: &Bandwidths) -> Gradient {
    let kx = Kernel::new(bw.sigma_x);
    let ky = Kernel::new(bw.sigma_y);
    let n = x.len() as f64;
    let k = y.len() as f64;
    let mut dx = vec![0.0; x.len()];
    let mut dy = vec![0.0; y.len()];

    let mut sx = 0.0;
    let wx = 2.0 / (n * n);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let (v, s) = kx.with_slope(x[i] - x[j]);
            sx += v;
            dx[i] += wx * s;
            dx[j] -= wx * s;
        }
    }
    let mut sy = 0.0;
    let wy = 2.0 / (k * k);
    for i in 0..y.len() {
        for j in (i + 1)..y.len() {
            let (v, s) = ky.with_slope(y[i] - y[j]);
            sy += v;
            dy[i] += wy * s;
            dy[j] -= wy * s;
        }
    }
    let same = bw.sigma_x == bw.sigma_y;
    let wc = 1.0 / (n * k);
    let mut cross = 0.0;
    for (i, &a) in x.iter().enumerate() {
        for (j, &b) in y.iter().enumerate() {
            let d = a - b;
            let (v, s) = if same {
                let (v, s) = kx.with_slope(d);
                (2.0 * v, 2.0 * s)
            } else {
                let (v1, s1) = kx.with_slope(d);
                let (v2, s2) = ky.with_slope(d);
                (v1 + v2, s1 + s2)
            };
            cross += v;
            dx[i] -= wc * s;
            dy[j] += wc * s;
        }
    }
    let value = (n * kx.norm + 2.0 * sx) / (n * n) + (k * ky.norm + 2.0 * sy) / (k * k) - wc * cross;
    Gradient { value, dx, dy }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn bw(a: f64, b: f64) -> Bandwidths {
        Bandwidths::new(a, b).unwrap()
    }

    /// Direct four-term evaluation with full double sums.
    fn reference(x: &[f64], y: &[f64], b: &Bandwidths) -> f64 {
        let kern = |d: f64, s: f64| (-d * d / (2.0 * s * s)).exp() / (s * (2.0 * core::f64::consts::PI).sqrt());
        let (n, k) = (x.len() as f64, y.len() as f64);
        let mut t = [0.0; 4];
        for a in x {
            for c in x {
                t[0] += kern(a - c, b.sigma_x);
            }
        }
        for a in y {
            for c in y {
                t[1] += kern(a - c, b.sigma_y);
            }
        }
        for a in x {
            for c in y {
                t[2] += kern(a - c, b.sigma_y);
                t[3] += kern(a - c, b.sigma_x);
            }
        }
        t[0] / (n * n) + t[1] / (k * k) - t[2] / (n * k) - t[3] / (n * k)
    }

    #[test]
    fn identical_samples_cancel() {
        let x = [0.1, -0.7, 2.3, 0.9];
        let v = value(&x, &x, &bw(0.8, 0.8));
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_points_closed_form() {
        for w in [0.0f64, 0.5, 1.0, 3.0] {
            let expected = 2.0 * INV_SQRT_2PI * (1.0 - (-w * w / 2.0).exp());
            assert_abs_diff_eq!(value(&[0.0], &[w], &bw(1.0, 1.0)), expected, epsilon = 1e-15);
        }
        assert_eq!(value(&[0.0], &[0.0], &bw(1.0, 1.0)), 0.0);
    }

    #[test]
    fn matches_reference_and_gradient_agrees() {
        let mut rng = crate::rng::stream(3, 0, 0);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..15).map(|_| rng.random_range(-0.5..1.5)).collect();
        let b = bw(0.4, 0.7);
        let g = value_and_gradient(&x, &y, &b);
        assert_abs_diff_eq!(g.value, reference(&x, &y, &b), epsilon = 1e-13);
        assert_abs_diff_eq!(g.value, value(&x, &y, &b), epsilon = 1e-13);
    }

    #[test]
    fn symmetric_stationary_gradient_sums_to_zero() {
        let x = [0.3, -0.2, 1.1, 0.6, -0.9];
        let g = value_and_gradient(&x, &x, &bw(0.5, 0.5));
        assert_abs_diff_eq!(g.dx.iter().sum::<f64>(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.dy.iter().sum::<f64>(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn permutation_invariant() {
        let x = [0.3, -0.2, 1.1, 0.6];
        let y = [0.1, 0.5, -0.4];
        let b = bw(0.6, 0.9);
        let v = quadratic_value(&ProjectedSamples::new(x.to_vec(), y.to_vec()).unwrap(), &b);
        let xp = [1.1, 0.3, 0.6, -0.2];
        let yp = [-0.4, 0.1, 0.5];
        let vp = quadratic_value(&ProjectedSamples::new(xp.to_vec(), yp.to_vec()).unwrap(), &b);
        assert_abs_diff_eq!(v, vp, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn nonnegative_for_equal_bandwidths(
            x in proptest::collection::vec(-3f64..3.0, 2..25),
            y in proptest::collection::vec(-3f64..3.0, 2..25),
            s in 0.05f64..3.0,
        ) {
            prop_assert!(value(&x, &y, &bw(s, s)) >= -1e-10);
        }

        #[test]
        fn gradient_translation_invariant(
            x in proptest::collection::vec(-3f64..3.0, 2..15),
            y in proptest::collection::vec(-3f64..3.0, 2..15),
            c in -10f64..10.0,
        ) {
            let b = bw(0.7, 1.3);
            let g = value_and_gradient(&x, &y, &b);
            let xs: Vec<f64> = x.iter().map(|v| v + c).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
            let h = value_and_gradient(&xs, &ys, &b);
            for (a, b) in g.dx.iter().zip(&h.dx).chain(g.dy.iter().zip(&h.dy)) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
