//! Fisher information on the tangent space of the simplex and the
//! Cramér–Rao, Assouad and symmetrization bounds built on it.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::channel::{chi2_divergence, Channel};
use crate::error::{Error, Result};
use crate::numeric::csum;

/// Relative eigenvalue floor below which the Fisher matrix counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Largest `d` for which the Assouad cube is listed.
pub const CUBE_MAX_D: usize = 16;

fn check_simplex(theta: &[f64], d: usize) -> Result<()> {
    if theta.len() != d {
        return Err(Error::LengthMismatch { expected: d, got: theta.len() });
    }
    if let Some((i, v)) = theta.iter().enumerate().find(|(_, v)| !(**v >= -1e-12) || !v.is_finite()) {
        return Err(Error::SimplexViolation(format!("coordinate {i} is {v}")));
    }
    let s = csum(theta);
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::SimplexViolation(format!("coordinates sum to {s}")));
    }
    Ok(())
}

/// Output distribution `q_theta = theta^T W`.
pub fn output_law(ch: &Channel, theta: &[f64]) -> Result<Vec<f64>> {
    check_simplex(theta, ch.d())?;
    Ok((0..ch.num_outputs())
        .map(|y| csum(&(0..ch.d()).map(|x| theta[x] * ch.prob(x, y)).collect::<Vec<_>>()))
        .collect())
}

/// Chi-square divergence between the output laws at two simplex points.
pub fn mixture_chi2(ch: &Channel, theta: &[f64], theta_alt: &[f64]) -> Result<f64> {
    let q = output_law(ch, theta)?;
    if let Some(y) = q.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateMixture(y));
    }
    Ok(chi2_divergence(&output_law(ch, theta_alt)?, &q))
}

/// Orthonormal basis of the sum-zero hyperplane, as a `d x (d-1)` matrix.
pub fn helmert_basis(d: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(d, d - 1);
    for k in 1..d {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            h[(i, k - 1)] = 1.0 / norm;
        }
        h[(k, k - 1)] = -(k as f64) / norm;
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherInfo {
    pub matrix: DMatrix<f64>,
    pub n: u64,
    pub theta: Vec<f64>,
}

impl FisherInfo {
    pub fn d(&self) -> usize {
        self.theta.len()
    }

    /// Eigenvalues of the restriction to the tangent space, ascending.
    pub fn tangent_eigenvalues(&self) -> Vec<f64> {
        let h = helmert_basis(self.d());
        let restricted = h.transpose() * &self.matrix * h;
        let mut ev: Vec<f64> = SymmetricEigen::new(restricted).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Trace on the tangent space.
    pub fn tangent_trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// `tr_T I^{-1}`, or `SingularFisher` when an eigenvalue falls below the floor.
    pub fn inverse_trace(&self) -> Result<f64> {
        let ev = self.tangent_eigenvalues();
        let max = ev.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) || ev.iter().any(|&e| e <= SINGULAR_TOL * max) {
            return Err(Error::SingularFisher);
        }
        Ok(csum(&ev.iter().map(|e| 1.0 / e).collect::<Vec<_>>()))
    }

    /// `w^T I w`.
    pub fn quadratic_form(&self, w: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(w);
        (v.transpose() * &self.matrix * v)[(0, 0)]
    }
}

/// `n P_T W diag(q_theta)^{-1} W^T P_T`.
pub fn fisher_info(ch: &Channel, theta: &[f64], n: u64) -> Result<FisherInfo> {
    let q = output_law(ch, theta)?;
    if let Some(y) = q.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateMixture(y));
    }
    let d = ch.d();
    let ny = ch.num_outputs();
    let scaled = DMatrix::from_fn(d, ny, |x, y| ch.prob(x, y) / q[y].sqrt());
    let m = &scaled * scaled.transpose();
    let proj = DMatrix::identity(d, d) - DMatrix::from_element(d, d, 1.0 / d as f64);
    let mut matrix = &proj * m * &proj * n as f64;
    // enforce exact symmetry
    matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(FisherInfo { matrix, n, theta: theta.to_vec() })
}

/// Near-vertex evaluation point `(1 - (d-1) rho, rho, ..., rho)`.
pub fn near_vertex(d: usize, rho: f64) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho < 1.0 / (d - 1) as f64) {
        return Err(Error::BadRho(rho));
    }
    let mut t = vec![rho; d];
    t[0] = 1.0 - (d - 1) as f64 * rho;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrBound {
    /// `(d-1)(1-(d-1)rho) / (n chi_star)`.
    pub formula: f64,
    /// `tr_T I^{-1}` at the near-vertex point.
    pub trace: f64,
}

pub fn cr_bound(ch: &Channel, n: u64, rho: f64) -> Result<CrBound> {
    let d = ch.d();
    let theta = near_vertex(d, rho)?;
    let fi = fisher_info(ch, &theta, n)?;
    let trace = fi.inverse_trace()?;
    let chi = ch.chi_star();
    let df = (d - 1) as f64;
    Ok(CrBound { formula: df * (1.0 - df * rho) / (n as f64 * chi), trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssouadBound {
    pub value: f64,
    pub delta: f64,
    /// False when the canonical side length was infeasible and the largest
    /// admissible side was used instead.
    pub regime_ok: bool,
    /// True when `delta * sqrt(n chi_star) >= 1`.
    pub vacuous: bool,
}

fn assouad_value(d: usize, delta: f64, n_chi: f64) -> f64 {
    (d - 1) as f64 / 8.0 * delta * delta * (1.0 - delta * n_chi.sqrt())
}

/// Largest admissible cube side `1 / (4(d-1))`.
pub fn max_cube_delta(d: usize) -> f64 {
    1.0 / (4.0 * (d - 1) as f64)
}

fn check_delta(d: usize, delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= max_cube_delta(d) * (1.0 + 1e-12) {
        Ok(())
    } else {
        Err(Error::BadDelta(delta))
    }
}

pub fn assouad_bound(ch: &Channel, n: u64, delta: Option<f64>) -> Result<AssouadBound> {
    let d = ch.d();
    let chi = ch.chi_star();
    if !(chi > 0.0) {
        return Err(Error::ZeroInformation);
    }
    let n_chi = n as f64 * chi;
    let (delta, regime_ok) = match delta {
        Some(dl) => {
            check_delta(d, dl)?;
            (dl, true)
        }
        None => {
            if n_chi >= 4.0 * ((d - 1) as f64).powi(2) {
                (1.0 / (2.0 * n_chi.sqrt()), true)
            } else {
                (max_cube_delta(d), false)
            }
        }
    };
    let value = assouad_value(d, delta, n_chi);
    Ok(AssouadBound { value, delta, regime_ok, vacuous: delta * n_chi.sqrt() >= 1.0 })
}

/// Vertices of the Assouad cube, indexed by the bits of `v`.
pub fn assouad_cube(d: usize, delta: f64) -> Result<Vec<Vec<f64>>> {
    if d > CUBE_MAX_D {
        return Err(Error::TooManyVertices(d - 1));
    }
    if d < 2 {
        return Err(Error::BadParams("need d >= 2".into()));
    }
    check_delta(d, delta)?;
    Ok((0..1usize << (d - 1)).map(|v| cube_vertex(d, delta, v)).collect())
}

/// Vertex for the bit pattern `v` (bit `j-1` is coordinate `j`).
pub fn cube_vertex(d: usize, delta: f64, v: usize) -> Vec<f64> {
    let mut t = vec![0.0; d];
    for (j, tj) in t.iter_mut().enumerate().skip(1) {
        *tj = delta * (1.0 + ((v >> (j - 1)) & 1) as f64);
    }
    t[0] = 1.0 - t[1..].iter().sum::<f64>();
    t
}

/// Average chi-square over all ordered pairs of distinct inputs.
pub fn symmetrized_chi2(ch: &Channel) -> f64 {
    let d = ch.d();
    let m = ch.chi2_matrix();
    let all: Vec<f64> = (0..d)
        .flat_map(|a| (0..d).filter(move |&b| b != a).map(move |b| (a, b)))
        .map(|(a, b)| m[a][b])
        .collect();
    csum(&all) / (d * (d - 1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetrizedFisher {
    /// Common tangent eigenvalue of the symmetrized channel at uniform.
    pub alpha: f64,
    /// `tr_T I(W_sym)^{-1} = (d-1)^2 / tr_T I(W)`.
    pub inv_trace_symmetrized: f64,
    /// `tr_T I(W)^{-1}`.
    pub inv_trace_original: f64,
}

pub fn symmetrized_fisher_uniform(ch: &Channel, n: u64) -> Result<SymmetrizedFisher> {
    let d = ch.d();
    let fi = fisher_info(ch, &vec![1.0 / d as f64; d], n)?;
    let inv_trace_original = fi.inverse_trace()?;
    let df = (d - 1) as f64;
    let alpha = fi.tangent_trace() / df;
    Ok(SymmetrizedFisher { alpha, inv_trace_symmetrized: df / alpha, inv_trace_original })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsReport {
    pub cr: f64,
    pub cr_trace: f64,
    pub assouad: f64,
    pub regime_ok: bool,
    pub chi_star: f64,
}

pub fn bounds_report(ch: &Channel, n: u64, rho: f64) -> Result<BoundsReport> {
    let cr = cr_bound(ch, n, rho)?;
    let asd = assouad_bound(ch, n, None)?;
    Ok(BoundsReport {
        cr: cr.formula,
        cr_trace: cr.trace,
        assouad: asd.value,
        regime_ok: asd.regime_ok,
        chi_star: ch.chi_star(),
    })
}
