//! Scaling integrals of the tail analysis plus velocity-sphere quadrature.
//!
//! The two pole integrals evaluate
//!   int_{-inf}^0 |y|^alpha / (1 + (a |y|^b1)^2)      dy = c1 a^(-(alpha+1)/b1)
//!   int_{-inf}^0 |y|^alpha / sqrt(1 + (a |y|^b2)^2)  dy = c2 a^(-(alpha+1)/b2)
//! via the substitution z = a |y|^b, either from the closed-form constants
//! or by direct adaptive quadrature of the z-integral (the oracle route).

use crate::error::{FrackinError, Result};
use crate::quad;
use statrs::function::gamma::gamma;

/// Closed form of c1: pi / (2 b1 sin(pi (alpha+1) / (2 b1))).
pub fn c1_closed_form(alpha: f64, beta1: f64) -> Result<f64> {
    check_pole2(alpha, beta1)?;
    let p = (alpha + 1.0) / beta1;
    Ok(std::f64::consts::PI / (2.0 * beta1 * (std::f64::consts::PI * p / 2.0).sin()))
}

/// c1 by direct quadrature of (1/b1) int_0^inf z^(p-1)/(1+z^2) dz.
pub fn c1_quadrature(alpha: f64, beta1: f64) -> Result<f64> {
    check_pole2(alpha, beta1)?;
    let p = (alpha + 1.0) / beta1;
    // [0,1] with the singular factor absorbed; [1,inf) via z -> 1/u, under
    // which z^{p-1}/(1+z^2) dz becomes u^{1-p}/(1+u^2) du on [0,1]
    let (lo, _) = quad::power_weighted_unit(|z| 1.0 / (1.0 + z * z), p - 1.0, 1e-12)?;
    let (hi, _) = quad::power_weighted_unit(|u| 1.0 / (1.0 + u * u), 1.0 - p, 1e-12)?;
    Ok((lo + hi) / beta1)
}

/// Closed form of c2 via the Beta function:
/// (1/b2) * Gamma(p/2) Gamma((1-p)/2) / (2 Gamma(1/2)), p = (alpha+1)/b2.
pub fn c2_closed_form(alpha: f64, beta2: f64) -> Result<f64> {
    check_pole1(alpha, beta2)?;
    let p = (alpha + 1.0) / beta2;
    Ok(gamma(p / 2.0) * gamma((1.0 - p) / 2.0) / (2.0 * beta2 * gamma(0.5)))
}

/// c2 by direct quadrature of (1/b2) int_0^inf z^(p-1)/sqrt(1+z^2) dz.
pub fn c2_quadrature(alpha: f64, beta2: f64) -> Result<f64> {
    check_pole1(alpha, beta2)?;
    let p = (alpha + 1.0) / beta2;
    let (lo, _) = quad::power_weighted_unit(|z| 1.0 / (1.0 + z * z).sqrt(), p - 1.0, 1e-12)?;
    // z = 1/u: z^{p-1} (1+z^2)^{-1/2} dz = u^{-p} (1+u^2)^{-1/2} du
    let (hi, _) = quad::power_weighted_unit(|u| 1.0 / (1.0 + u * u).sqrt(), -p, 1e-12)?;
    Ok((lo + hi) / beta2)
}

fn check_pole2(alpha: f64, beta1: f64) -> Result<()> {
    if beta1 <= 0.0 {
        return Err(FrackinError::ParameterRange(format!("beta1 > 0 violated: {beta1}")));
    }
    let ap1 = alpha + 1.0;
    if !(ap1 > 0.0) {
        return Err(FrackinError::ParameterRange(format!("alpha + 1 > 0 violated: {ap1}")));
    }
    if !(ap1 < 2.0 * beta1) {
        return Err(FrackinError::ParameterRange(format!(
            "alpha + 1 < 2 beta1 violated: {ap1} vs {}",
            2.0 * beta1
        )));
    }
    Ok(())
}

fn check_pole1(alpha: f64, beta2: f64) -> Result<()> {
    if beta2 <= 0.0 {
        return Err(FrackinError::ParameterRange(format!("beta2 > 0 violated: {beta2}")));
    }
    let ap1 = alpha + 1.0;
    if !(ap1 > 0.0) {
        return Err(FrackinError::ParameterRange(format!("alpha + 1 > 0 violated: {ap1}")));
    }
    if !(ap1 < beta2) {
        return Err(FrackinError::ParameterRange(format!(
            "alpha + 1 < beta2 violated: {ap1} vs {beta2}"
        )));
    }
    Ok(())
}

/// First lemma integral (squared pole), closed-form route.
pub fn lemma_integral_pole2(alpha: f64, beta1: f64, a: f64) -> Result<f64> {
    if a <= 0.0 {
        return Err(FrackinError::ParameterRange(format!("a > 0 violated: {a}")));
    }
    Ok(c1_closed_form(alpha, beta1)? * a.powf(-(alpha + 1.0) / beta1))
}

/// Second lemma integral (square-root pole), closed-form route.
pub fn lemma_integral_pole1(alpha: f64, beta2: f64, a: f64) -> Result<f64> {
    if a <= 0.0 {
        return Err(FrackinError::ParameterRange(format!("a > 0 violated: {a}")));
    }
    Ok(c2_closed_form(alpha, beta2)? * a.powf(-(alpha + 1.0) / beta2))
}

/// Velocity nodes on the sphere of radius v0 with normalized weights.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub dim: usize,
    /// Node velocities; the second component is zero when dim == 1.
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    /// Transport-relevant component v . e_x of node i.
    pub fn v1(&self, i: usize) -> f64 {
        self.nodes[i][0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted moment sum w_i |v1_i|^p.
    pub fn abs_moment(&self, p: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v[0].abs().powf(p))
            .sum()
    }
}

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev initial guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p0 / pp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Builds the velocity quadrature.
///
/// dim = 1: the two-point set {-v0, +v0} with equal weights.
/// dim = 2: composite Gauss-Legendre on four quarter arcs, each mapped by
/// the smoothing s(t) = t - sin(2 pi t)/(2 pi) so the rule handles the
/// |cos theta|^p moments of the limit constant accurately. Antipodal nodes
/// are constructed by literal negation so odd moments cancel exactly.
pub fn build_sphere_quadrature(dim: usize, v0: f64, order: usize) -> Result<SphereQuadrature> {
    if order < 2 || order % 2 != 0 {
        return Err(FrackinError::InvalidInput(format!(
            "order must be even and >= 2 (antipodal symmetry), got {order}"
        )));
    }
    if v0 <= 0.0 {
        return Err(FrackinError::InvalidInput(format!("v0 must be positive, got {v0}")));
    }
    match dim {
        1 => Ok(SphereQuadrature {
            dim,
            nodes: vec![[-v0, 0.0], [v0, 0.0]],
            weights: vec![0.5, 0.5],
        }),
        2 => {
            let per_arc = (order / 4).max(2);
            let (xg, wg) = gauss_legendre(per_arc);
            let two_pi = 2.0 * std::f64::consts::PI;
            let mut half_nodes = Vec::with_capacity(2 * per_arc);
            let mut half_weights = Vec::with_capacity(2 * per_arc);
            // first two quarter arcs [0, pi/2] and [pi/2, pi]; the rest by negation
            for arc in 0..2 {
                let th0 = arc as f64 * std::f64::consts::FRAC_PI_2;
                for k in 0..per_arc {
                    let t = 0.5 * (xg[k] + 1.0);
                    let wt = 0.5 * wg[k];
                    let s = t - (two_pi * t).sin() / two_pi;
                    let ds = 1.0 - (two_pi * t).cos();
                    let theta = th0 + std::f64::consts::FRAC_PI_2 * s;
                    half_nodes.push([v0 * theta.cos(), v0 * theta.sin()]);
                    half_weights.push(wt * ds * std::f64::consts::FRAC_PI_2 / two_pi);
                }
            }
            let mut nodes = half_nodes.clone();
            let mut weights = half_weights.clone();
            for (v, w) in half_nodes.iter().zip(&half_weights) {
                nodes.push([-v[0], -v[1]]);
                weights.push(*w);
            }
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            Ok(SphereQuadrature { dim, nodes, weights })
        }
        d => Err(FrackinError::InvalidInput(format!("dim must be 1 or 2, got {d}"))),
    }
}

/// Closed form of int_V |v . e|^p dv over the normalized sphere measure.
///
/// dim = 1: v0^p. dim = 2: v0^p Gamma((p+1)/2) / (sqrt(pi) Gamma(p/2 + 1)).
pub fn sphere_abs_moment(dim: usize, v0: f64, p: f64) -> Result<f64> {
    match dim {
        1 => Ok(v0.powf(p)),
        2 => Ok(v0.powf(p) * gamma((p + 1.0) / 2.0)
            / (std::f64::consts::PI.sqrt() * gamma(p / 2.0 + 1.0))),
        d => Err(FrackinError::InvalidInput(format!("dim must be 1 or 2, got {d}"))),
    }
}

pub use crate::quad::improper_fat_tail_integral;
