//! Covariance-level simulation of a pure lossy channel acting on one arm of a
//! two-mode squeezed vacuum.
//!
//! Conventions: quadrature ordering `(x1, p1, x2, p2)`, vacuum covariance equal
//! to the identity. Mode 1 is the one sent through the channel.

use nalgebra::{Matrix2, SMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Minimum eigenvalue of `sigma + i*Omega` accepted as physical.
pub const PHYSICAL_TOL: f64 = -1e-9;

/// Loss parameter of a pure lossy channel, `0 <= eta <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Transmissivity(f64);

impl Transmissivity {
    pub fn new(eta: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&eta) {
            Ok(Self(eta))
        } else {
            Err(Error::invalid(format!("transmissivity {eta} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Two-mode squeezing strength, `r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SqueezeParam(f64);

impl SqueezeParam {
    pub fn new(r: f64) -> Result<Self> {
        if r >= 0.0 && r.is_finite() {
            Ok(Self(r))
        } else {
            Err(Error::invalid(format!("squeezing {r} must be finite and >= 0")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Largest value the `sigma_11` feature can take, `cosh(2r)`.
    pub fn feature_max(self) -> f64 {
        (2.0 * self.0).cosh()
    }
}

/// A 4x4 real covariance matrix of a two-mode Gaussian state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix4(pub [[f64; 4]; 4]);

impl CovMatrix4 {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self(m)
    }

    pub fn from_diagonal(d: [f64; 4]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            m[i][i] = d[i];
        }
        Self(m)
    }

    pub fn entries(&self) -> &[[f64; 4]; 4] {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i])))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.transpose()) <= tol
    }

    /// Row-major copy of the 16 entries.
    pub fn to_flat(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for i in 0..4 {
            out[4 * i..4 * i + 4].copy_from_slice(&self.0[i]);
        }
        out
    }

    /// Smallest eigenvalue of the Hermitian matrix `sigma + i*Omega`.
    pub fn min_uncertainty_eigenvalue(&self) -> f64 {
        // H = A + iB is Hermitian with A symmetric and B antisymmetric; the real
        // matrix [[A, -B], [B, A]] has the eigenvalues of H, each twice.
        let omega = symplectic_form();
        let mut embed = SMatrix::<f64, 8, 8>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let a = self.0[i][j];
                let b = omega[i][j];
                embed[(i, j)] = a;
                embed[(i + 4, j + 4)] = a;
                embed[(i, j + 4)] = -b;
                embed[(i + 4, j)] = b;
            }
        }
        SymmetricEigen::new(embed).eigenvalues.min()
    }
}

/// Block-diagonal symplectic form with 2x2 blocks `[[0, 1], [-1, 0]]`.
pub fn symplectic_form() -> [[f64; 4]; 4] {
    [[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]]
}

/// Action of a pure lossy channel on a single-mode covariance: `X s X^T + Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMatrices {
    pub x: Matrix2<f64>,
    pub y: Matrix2<f64>,
}

impl ChannelMatrices {
    pub fn apply_single_mode(&self, sigma: &Matrix2<f64>) -> Matrix2<f64> {
        self.x * sigma * self.x.transpose() + self.y
    }
}

/// Covariance of the two-mode squeezed vacuum with squeezing `r`.
pub fn tmsv_covariance(r: SqueezeParam) -> CovMatrix4 {
    let c = (2.0 * r.0).cosh();
    let s = (2.0 * r.0).sinh();
    CovMatrix4([[c, 0.0, s, 0.0], [0.0, c, 0.0, -s], [s, 0.0, c, 0.0], [0.0, -s, 0.0, c]])
}

pub fn lossy_channel_matrices(eta: Transmissivity) -> ChannelMatrices {
    ChannelMatrices { x: Matrix2::identity() * eta.0.sqrt(), y: Matrix2::identity() * (1.0 - eta.0) }
}

/// Sends mode 1 of `sigma` through the lossy channel:
/// `(X + I) sigma (X + I)^T + (Y + 0)` with `+` the direct sum.
pub fn apply_lossy_first_mode(sigma: &CovMatrix4, eta: Transmissivity) -> Result<CovMatrix4> {
    if !sigma.is_symmetric(1e-12) {
        return Err(Error::invalid("covariance matrix is not symmetric"));
    }
    let min_eig = sigma.min_uncertainty_eigenvalue();
    if min_eig < PHYSICAL_TOL {
        return Err(Error::Unphysical { min_eigenvalue: min_eig });
    }
    let ch = lossy_channel_matrices(eta);
    let mut s = SMatrix::<f64, 4, 4>::identity();
    s.fixed_view_mut::<2, 2>(0, 0).copy_from(&ch.x);
    let mut y = SMatrix::<f64, 4, 4>::zeros();
    y.fixed_view_mut::<2, 2>(0, 0).copy_from(&ch.y);

    let m = SMatrix::<f64, 4, 4>::from_fn(|i, j| sigma.0[i][j]);
    let out = s * m * s.transpose() + y;
    let mut e = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            // symmetrize away rounding asymmetry
            e[i][j] = 0.5 * (out[(i, j)] + out[(j, i)]);
        }
    }
    Ok(CovMatrix4(e))
}

/// Closed-form Choi-state covariance of the lossy channel at squeezing `r`.
pub fn choi_covariance(eta: Transmissivity, r: SqueezeParam) -> CovMatrix4 {
    let c = (2.0 * r.0).cosh();
    let s = (2.0 * r.0).sinh();
    let e = eta.0;
    let d = e * c + (1.0 - e);
    let o = e.sqrt() * s;
    CovMatrix4([[d, 0.0, o, 0.0], [0.0, d, 0.0, -o], [o, 0.0, c, 0.0], [0.0, -o, 0.0, c]])
}

/// Entry (1,1) of the Choi covariance: the scalar fed to every learner.
pub fn feature_sigma11(eta: Transmissivity, r: SqueezeParam) -> f64 {
    eta.0 * (2.0 * r.0).cosh() + (1.0 - eta.0)
}

/// Inverse of [`feature_sigma11`] for fixed `r > 0`.
pub fn invert_feature(f: f64, r: SqueezeParam) -> Result<Transmissivity> {
    if r.0 <= 0.0 {
        return Err(Error::invalid("feature map is degenerate at r = 0"));
    }
    let c = (2.0 * r.0).cosh();
    // allow rounding slop at both ends of the range
    let slop = 4.0 * f64::EPSILON * c;
    if !(f >= 1.0 - slop && f <= c + slop) {
        return Err(Error::invalid(format!("feature {f} outside [1, cosh 2r = {c}]")));
    }
    let eta = ((f - 1.0) / (c - 1.0)).clamp(0.0, 1.0);
    Ok(Transmissivity(eta))
}

pub fn check_physical(sigma: &CovMatrix4) -> bool {
    sigma.min_uncertainty_eigenvalue() >= PHYSICAL_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // cosh 2, sinh 2 (independently evaluated)
    const COSH2: f64 = 3.762_195_691_083_631_4;
    const SINH2: f64 = 3.626_860_407_847_019;

    fn eta(v: f64) -> Transmissivity {
        Transmissivity::new(v).unwrap()
    }

    fn sq(v: f64) -> SqueezeParam {
        SqueezeParam::new(v).unwrap()
    }

    #[test]
    fn tmsv_values() {
        assert_eq!(tmsv_covariance(sq(0.0)), CovMatrix4::identity());
        let m = tmsv_covariance(sq(1.0));
        assert_abs_diff_eq!(m.get(0, 0), COSH2, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(3, 3), COSH2, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(0, 2), SINH2, epsilon = 1e-12);
        assert_abs_diff_eq!(m.get(1, 3), -SINH2, epsilon = 1e-12);
        assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn channel_matrices() {
        let full = lossy_channel_matrices(eta(1.0));
        assert_eq!(full.x, Matrix2::identity());
        assert_eq!(full.y, Matrix2::zeros());
        let erase = lossy_channel_matrices(eta(0.0));
        assert_eq!(erase.x, Matrix2::zeros());
        assert_eq!(erase.y, Matrix2::identity());
        let q = lossy_channel_matrices(eta(0.25));
        assert_eq!(q.x, Matrix2::identity() * 0.5);
        assert_eq!(q.y, Matrix2::identity() * 0.75);
        assert!(Transmissivity::new(1.5).is_err());
        assert!(Transmissivity::new(-0.1).is_err());
    }

    #[test]
    fn lossy_action() {
        let t = tmsv_covariance(sq(0.8));
        let same = apply_lossy_first_mode(&t, eta(1.0)).unwrap();
        assert!(same.max_abs_diff(&t) < 1e-12);

        let vac = apply_lossy_first_mode(&CovMatrix4::identity(), eta(0.3)).unwrap();
        assert!(vac.max_abs_diff(&CovMatrix4::identity()) < 1e-15);

        let half = apply_lossy_first_mode(&tmsv_covariance(sq(1.0)), eta(0.5)).unwrap();
        assert!(half.max_abs_diff(&choi_covariance(eta(0.5), sq(1.0))) < 1e-12);

        let bad = CovMatrix4::from_diagonal([0.5; 4]);
        assert!(matches!(apply_lossy_first_mode(&bad, eta(0.5)), Err(Error::Unphysical { .. })));
    }

    #[test]
    fn choi_values() {
        for r in [0.0, 0.3, 1.0, 2.5] {
            assert!(choi_covariance(eta(1.0), sq(r)).max_abs_diff(&tmsv_covariance(sq(r))) < 1e-15);
        }
        let erased = choi_covariance(eta(0.0), sq(1.0));
        let expect = CovMatrix4::from_diagonal([1.0, 1.0, COSH2, COSH2]);
        assert!(erased.max_abs_diff(&expect) < 1e-12);

        let half = choi_covariance(eta(0.5), sq(1.0));
        assert_abs_diff_eq!(half.get(0, 0), 2.381_097_845_541_815_7, epsilon = 1e-12);
        assert_abs_diff_eq!(half.get(0, 2), 2.564_577_588_805_635, epsilon = 1e-12);
        assert_abs_diff_eq!(half.get(1, 3), -2.564_577_588_805_635, epsilon = 1e-12);
    }

    #[test]
    fn feature_and_inverse() {
        assert_eq!(feature_sigma11(eta(0.0), sq(1.0)), 1.0);
        assert_abs_diff_eq!(feature_sigma11(eta(1.0), sq(1.0)), COSH2, epsilon = 1e-12);
        assert_abs_diff_eq!(feature_sigma11(eta(0.5), sq(1.0)), 2.381_097_845_541_815_7, epsilon = 1e-12);

        for r in [0.1, 1.0, 2.0] {
            let r = sq(r);
            assert_eq!(invert_feature(1.0, r).unwrap().value(), 0.0);
            assert_abs_diff_eq!(invert_feature(r.feature_max(), r).unwrap().value(), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(invert_feature(2.381_097_845_541_815_7, sq(1.0)).unwrap().value(), 0.5, epsilon = 1e-12);
        assert!(invert_feature(2.0, sq(0.0)).is_err());
        assert!(invert_feature(0.5, sq(1.0)).is_err());
        assert!(invert_feature(COSH2 + 0.1, sq(1.0)).is_err());
    }

    #[test]
    fn physicality() {
        assert!(check_physical(&CovMatrix4::identity()));
        assert!(check_physical(&tmsv_covariance(sq(1.0))));
        let bad = CovMatrix4::from_diagonal([0.5; 4]);
        assert!(!check_physical(&bad));
        // each 2x2 block [[0.5, i], [-i, 0.5]] has eigenvalues 0.5 +/- 1
        assert_abs_diff_eq!(bad.min_uncertainty_eigenvalue(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_mode_channel_preserves_vacuum() {
        let ch = lossy_channel_matrices(eta(0.37));
        let out = ch.apply_single_mode(&Matrix2::identity());
        assert!((out - Matrix2::identity()).abs().max() < 1e-15);
    }
}
