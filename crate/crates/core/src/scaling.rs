//! The scaling factor β that brings `vᵀY` onto the domain of `uᵀX`.
//!
//! With attributes rescaled to `[0, 1]`, `|uᵀx| ≤ √m̄` for a unit `u` with
//! `m̄` non-zero entries. Setting `β = √(m̄/l̄)` gives `βvᵀy` the same bound.

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BetaMode {
    /// `β = √(m̄/l̄)`, reset at every iteration.
    #[default]
    Rule,
    /// β is optimized alongside the directions, starting from the rule value.
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingMode {
    pub mode: BetaMode,
    /// Entries with magnitude at or below this count as zero.
    pub zero_threshold: f64,
}

impl Default for ScalingMode {
    fn default() -> Self {
        Self {
            mode: BetaMode::Rule,
            zero_threshold: 1e-8,
        }
    }
}

impl ScalingMode {
    pub fn optimized() -> Self {
        Self {
            mode: BetaMode::Optimized,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zero_threshold >= 0.0 && self.zero_threshold.is_finite()) {
            return Err(Error::InvalidConfig("zero threshold must be >= 0".into()));
        }
        Ok(())
    }

    pub fn beta(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        beta_rule(u, v, self.zero_threshold)
    }
}

/// `Γ = diag(β₁, …, β_r)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalingMatrix {
    betas: Vec<f64>,
}

impl ScalingMatrix {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.iter().any(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::InvalidConfig("scaling factors must be finite and non-zero".into()));
        }
        Ok(Self { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }
}

/// Number of entries of `w / ‖w‖` with magnitude above `threshold`.
///
/// Counting on the normalized vector keeps the count independent of the
/// iterate's length, which matters for the unconstrained formulations.
pub fn nonzero_count(w: &[f64], threshold: f64) -> usize {
    let norm = libm::sqrt(w.iter().map(|x| x * x).sum::<f64>());
    if !(norm > 0.0 && norm.is_finite()) {
        return 0;
    }
    w.iter().filter(|x| libm::fabs(**x) / norm > threshold).count()
}

/// `√(m̄/l̄)` where `m̄`, `l̄` count the non-zero entries of `u` and `v`.
pub fn beta_rule(u: &[f64], v: &[f64], threshold: f64) -> Result<f64> {
    let m = nonzero_count(u, threshold);
    let l = nonzero_count(v, threshold);
    if m == 0 || l == 0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(libm::sqrt(m as f64 / l as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn four_to_one_gives_two() {
        assert_eq!(beta_rule(&[0.5, 0.5, 0.5, 0.5], &[1.0, 0.0], 1e-8), Ok(2.0));
    }

    #[test]
    fn equal_counts_give_one() {
        assert_eq!(beta_rule(&[0.6, 0.8, 0.0], &[0.0, 0.3, 0.9], 1e-8), Ok(1.0));
    }

    #[test]
    fn tiny_entries_excluded() {
        assert_eq!(nonzero_count(&[0.7, 0.7, 1e-12, 0.0], 1e-8), 2);
    }

    #[test]
    fn count_ignores_length() {
        let u = [3e-9, 1e-9, 2e-9];
        assert_eq!(nonzero_count(&u, 1e-8), 3);
        assert_eq!(beta_rule(&u, &[5.0, 0.0, 0.0], 1e-8), Ok(libm::sqrt(3.0)));
    }

    #[test]
    fn all_zero_is_degenerate() {
        assert_eq!(beta_rule(&[0.0, 0.0], &[1.0], 1e-8), Err(Error::DegenerateDirection));
        assert_eq!(beta_rule(&[1.0], &[0.0; 3], 1e-8), Err(Error::DegenerateDirection));
    }

    #[test]
    fn scaling_matrix_rejects_zero() {
        assert!(ScalingMatrix::new(vec![1.0, 0.0]).is_err());
        assert_eq!(ScalingMatrix::new(vec![2.0, 0.5]).unwrap().betas(), &[2.0, 0.5]);
    }

    fn unit_on_support(raw: &[f64], support: &[bool]) -> Vec<f64> {
        let mut u: Vec<f64> = raw.iter().zip(support).map(|(r, s)| if *s { *r } else { 0.0 }).collect();
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= n);
        u
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn projections_share_a_domain(
            ru in proptest::collection::vec(0.05f64..1.0, 8),
            su in proptest::collection::vec(any::<bool>(), 8),
            signs_u in proptest::collection::vec(any::<bool>(), 8),
            rv in proptest::collection::vec(0.05f64..1.0, 5),
            sv in proptest::collection::vec(any::<bool>(), 5),
            x in proptest::collection::vec(0f64..=1.0, 8),
            y in proptest::collection::vec(0f64..=1.0, 5),
        ) {
            let mut su = su;
            su[0] = true;
            let mut sv = sv;
            sv[0] = true;
            let ru: Vec<f64> = ru.iter().zip(&signs_u).map(|(r, s)| if *s { -r } else { *r }).collect();
            let u = unit_on_support(&ru, &su);
            let v = unit_on_support(&rv, &sv);
            let m_bar = nonzero_count(&u, 1e-8) as f64;
            let xs: Vec<f64> = x.iter().zip(&su).map(|(x, s)| if *s { *x } else { 0.0 }).collect();
            let ys: Vec<f64> = y.iter().zip(&sv).map(|(y, s)| if *s { *y } else { 0.0 }).collect();
            let ux: f64 = u.iter().zip(&xs).map(|(a, b)| a * b).sum();
            prop_assert!(ux.abs() <= m_bar.sqrt() + 1e-12);
            let beta = beta_rule(&u, &v, 1e-8).unwrap();
            let vy: f64 = v.iter().zip(&ys).map(|(a, b)| a * b).sum();
            prop_assert!((beta * vy).abs() <= m_bar.sqrt() + 1e-12);
        }

        #[test]
        fn zero_padding_leaves_divergences_unchanged(
            x in proptest::collection::vec(0f64..1.0, 12),
            y in proptest::collection::vec(0f64..1.0, 12),
            pad in 1usize..4,
        ) {
            use crate::divergence::{mallows_value, quadratic_value, Bandwidths, ProjectedSamples};
            // 4 × 3 and 6 × 2 data, then the same with `pad` extra noise columns.
            let u = [0.6, -0.48, 0.64];
            let v = [0.8, 0.6];
            let project = |rows: &[f64], cols: usize, extra: usize, w: &[f64]| -> Vec<f64> {
                rows.chunks(cols)
                    .map(|r| {
                        let mut full: Vec<f64> = r.to_vec();
                        full.extend((0..extra).map(|i| 0.37 * (i + 1) as f64));
                        let mut wp = w.to_vec();
                        wp.extend(core::iter::repeat_n(0.0, extra));
                        full.iter().zip(&wp).map(|(a, b)| a * b).sum()
                    })
                    .collect()
            };
            let beta = beta_rule(&u, &v, 1e-8).unwrap();
            let base = ProjectedSamples::new(
                project(&x, 3, 0, &u),
                project(&y, 2, 0, &v).iter().map(|t| beta * t).collect(),
            ).unwrap();
            let mut up = u.to_vec();
            up.extend(core::iter::repeat_n(0.0, pad));
            let mut vp = v.to_vec();
            vp.extend(core::iter::repeat_n(0.0, pad));
            let beta_p = beta_rule(&up, &vp, 1e-8).unwrap();
            prop_assert_eq!(beta, beta_p);
            let padded = ProjectedSamples::new(
                project(&x, 3, pad, &u),
                project(&y, 2, pad, &v).iter().map(|t| beta_p * t).collect(),
            ).unwrap();
            prop_assert_eq!(&base, &padded);
            let bw = Bandwidths::new(0.3, 0.3).unwrap();
            prop_assert_eq!(mallows_value(&base, 2).unwrap(), mallows_value(&padded, 2).unwrap());
            prop_assert_eq!(quadratic_value(&base, &bw), quadratic_value(&padded, &bw));
        }
    }
}
