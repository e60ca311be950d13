//! The coefficient family (Q0, Lambda, D), the dual weight chi0, and the
//! derived constants mu, B0, C^-, nu.
//!
//! Q0, Lambda and D are exact power laws outside |y| = m0 + blend_width and
//! C^1 Hermite blends to a flat interior inside. The interior amplitude of
//! Q0 is solved so that Q0 integrates to one. chi0 is the increasing bounded
//! solution of the dual problem d/dy (D Q0 d/dy chi0) = 0, evaluated by
//! quadrature with tail substitution; its left tail is C^- |y|^(sigma-n)
//! with C^- = 1/(c^- A1 (n - sigma)).

use crate::error::{FrackinError, Result};
use crate::integrals;
use crate::quad;

/// Cubic Hermite interpolant on [a, b] with endpoint values and slopes.
fn hermite(a: f64, b: f64, va: f64, sa: f64, vb: f64, sb: f64, y: f64) -> f64 {
    let h = b - a;
    let t = (y - a) / h;
    let t2 = t * t;
    let omt = 1.0 - t;
    (1.0 + 2.0 * t) * omt * omt * va
        + t * omt * omt * h * sa
        + t2 * (3.0 - 2.0 * t) * vb
        + t2 * (t - 1.0) * h * sb
}

fn hermite_deriv(a: f64, b: f64, va: f64, sa: f64, vb: f64, sb: f64, y: f64) -> f64 {
    let h = b - a;
    let t = (y - a) / h;
    let dt = 1.0 / h;
    let d_h00 = 6.0 * t * (t - 1.0);
    let d_h10 = 3.0 * t * t - 4.0 * t + 1.0;
    let d_h01 = -d_h00;
    let d_h11 = 3.0 * t * t - 2.0 * t;
    (d_h00 * va + d_h10 * h * sa + d_h01 * vb + d_h11 * h * sb) * dt
}

/// Structural parameters plus the resolved interior amplitude of Q0.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_exp: f64,
    pub s_exp: f64,
    pub m0: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub a0: f64,
    pub a1: f64,
    pub v0: f64,
    /// Width of the C^1 blend across |y| = m0.
    pub interior_blend_width: f64,
    /// Tumbling rate on y >= -m0 (the O(1) branch; config hook).
    pub lambda_interior: f64,
    /// Interior amplitude of Q0, solved so that Q0 integrates to one.
    pub q0_interior_amplitude: f64,
}

/// Raw structural parameters before the normalization solve.
#[derive(Debug, Clone)]
pub struct CoefficientParams {
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_exp: f64,
    pub s_exp: f64,
    pub m0: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub a0: f64,
    pub a1: f64,
    pub v0: f64,
    pub interior_blend_width: f64,
    pub lambda_interior: f64,
}

impl CoefficientParams {
    /// The reference parameter set used across the experiment suite.
    pub fn reference() -> Self {
        CoefficientParams {
            sigma: 1.5,
            beta: 2.0,
            gamma: 2.0,
            n_exp: 2.5,
            s_exp: 1.3,
            m0: 2.0,
            c_plus: 0.25,
            c_minus: 0.25,
            a0: 1.0,
            a1: 0.1,
            v0: 1.0,
            interior_blend_width: 0.5,
            lambda_interior: 1.4,
        }
    }
}

/// One named inequality check with its two sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub name: &'static str,
    pub left: f64,
    pub right: f64,
}

/// Outcome of the parameter-range validation.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub ok: bool,
    pub violated: Vec<Violation>,
}

impl ValidationReport {
    /// Fixed-column text table of every violated inequality.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.ok {
            out.push_str("parameter range: ok\n");
        } else {
            out.push_str("parameter range: FAILED\n");
            out.push_str(&format!("{:<24} {:>14} {:>14}\n", "inequality", "left", "right"));
            for v in &self.violated {
                out.push_str(&format!("{:<24} {:>14.6} {:>14.6}\n", v.name, v.left, v.right));
            }
        }
        out
    }
}

/// Checks the structural fields before any inequality is evaluated.
fn check_structural(p: &CoefficientParams) -> Result<()> {
    let fields = [
        ("sigma", p.sigma),
        ("beta", p.beta),
        ("gamma", p.gamma),
        ("n_exp", p.n_exp),
        ("s_exp", p.s_exp),
        ("m0", p.m0),
        ("c_plus", p.c_plus),
        ("c_minus", p.c_minus),
        ("a0", p.a0),
        ("a1", p.a1),
        ("v0", p.v0),
        ("interior_blend_width", p.interior_blend_width),
        ("lambda_interior", p.lambda_interior),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(FrackinError::InvalidInput(format!("{name} is not finite")));
        }
    }
    for (name, v) in [
        ("c_plus", p.c_plus),
        ("c_minus", p.c_minus),
        ("a0", p.a0),
        ("a1", p.a1),
        ("v0", p.v0),
        ("interior_blend_width", p.interior_blend_width),
        ("lambda_interior", p.lambda_interior),
    ] {
        if v <= 0.0 {
            return Err(FrackinError::InvalidInput(format!("{name} must be positive, got {v}")));
        }
    }
    if p.m0 <= 1.0 {
        return Err(FrackinError::InvalidInput(format!("m0 must exceed 1, got {}", p.m0)));
    }
    Ok(())
}

/// Evaluates the admissibility inequalities on the exponents.
///
/// The checks are order-independent; the report lists each failed
/// inequality by name with both sides.
pub fn validate_parameters(p: &CoefficientParams) -> Result<ValidationReport> {
    check_structural(p)?;
    let mut violated = Vec::new();
    let mut check = |name: &'static str, left: f64, right: f64| {
        if !(left > right) {
            violated.push(Violation { name, left, right });
        }
    };
    check("n > sigma", p.n_exp, p.sigma);
    check("sigma > 1", p.sigma, 1.0);
    check("s > 1", p.s_exp, 1.0);
    check(
        "gamma > (n-sigma)/2 + 1",
        p.gamma,
        0.5 * (p.n_exp - p.sigma) + 1.0,
    );
    check("beta > n - 1", p.beta, p.n_exp - 1.0);
    check("beta + n - 1 > s*beta", p.beta + p.n_exp - 1.0, p.s_exp * p.beta);
    check("s*beta > beta + sigma - 1", p.s_exp * p.beta, p.beta + p.sigma - 1.0);
    let mu = (p.n_exp - 1.0) / p.beta;
    if !(mu > 0.0 && mu < 1.0) {
        violated.push(Violation {
            name: "mu in (0,1)",
            left: mu,
            right: f64::NAN,
        });
    }
    Ok(ValidationReport {
        ok: violated.is_empty(),
        violated,
    })
}

impl CoefficientSet {
    /// Builds the set, solving the interior Q0 amplitude by bisection so
    /// that the total mass is one.
    pub fn new(p: CoefficientParams) -> Result<Self> {
        let report = validate_parameters(&p)?;
        if !report.ok {
            let names: Vec<_> = report.violated.iter().map(|v| v.name).collect();
            return Err(FrackinError::ParameterRange(names.join(", ")));
        }
        let edge = p.m0 + p.interior_blend_width;
        // exact tail mass of c |y|^-sigma beyond the blend edge, per side
        let tail = |c: f64| c * edge.powf(1.0 - p.sigma) / (p.sigma - 1.0);
        let tails = tail(p.c_minus) + tail(p.c_plus);
        if tails >= 1.0 {
            return Err(FrackinError::InvalidInput(format!(
                "Q0 tail mass {tails:.6} >= 1: no positive interior amplitude can normalize"
            )));
        }
        let mass_of = |amp: f64| -> Result<f64> {
            let set = Self::with_interior_amplitude(p.clone(), amp)?;
            let (mid, _) = quad::integrate(|y| set.eval_q0(y), -edge, edge, 1e-13)?;
            Ok(tails + mid)
        };
        // bisection: the interior mass is monotone increasing in the amplitude
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        while mass_of(hi)? < 1.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(FrackinError::InvalidInput(
                    "Q0 normalization solve failed to bracket".into(),
                ));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass_of(mid)? < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 * hi.max(1.0) {
                break;
            }
        }
        let set = Self::with_interior_amplitude(p, 0.5 * (lo + hi))?;
        set.check_blend_positivity()?;
        Ok(set)
    }

    /// Builds the set with an explicit interior amplitude. The Q0
    /// normalization invariant is not enforced on this path; it exists for
    /// toy configurations in tests and scaling studies.
    pub fn with_interior_amplitude(p: CoefficientParams, amp: f64) -> Result<Self> {
        check_structural(&p)?;
        if amp <= 0.0 {
            return Err(FrackinError::InvalidInput(format!(
                "interior amplitude must be positive, got {amp}"
            )));
        }
        Ok(CoefficientSet {
            sigma: p.sigma,
            beta: p.beta,
            gamma: p.gamma,
            n_exp: p.n_exp,
            s_exp: p.s_exp,
            m0: p.m0,
            c_plus: p.c_plus,
            c_minus: p.c_minus,
            a0: p.a0,
            a1: p.a1,
            v0: p.v0,
            interior_blend_width: p.interior_blend_width,
            lambda_interior: p.lambda_interior,
            q0_interior_amplitude: amp,
        })
    }

    pub fn params(&self) -> CoefficientParams {
        CoefficientParams {
            sigma: self.sigma,
            beta: self.beta,
            gamma: self.gamma,
            n_exp: self.n_exp,
            s_exp: self.s_exp,
            m0: self.m0,
            c_plus: self.c_plus,
            c_minus: self.c_minus,
            a0: self.a0,
            a1: self.a1,
            v0: self.v0,
            interior_blend_width: self.interior_blend_width,
            lambda_interior: self.lambda_interior,
        }
    }

    /// Outer edge of the blend region.
    pub fn blend_edge(&self) -> f64 {
        self.m0 + self.interior_blend_width
    }

    fn check_blend_positivity(&self) -> Result<()> {
        let edge = self.blend_edge();
        for k in 0..=128 {
            let t = k as f64 / 128.0;
            for y in [
                -edge + t * self.interior_blend_width,
                self.m0 + t * self.interior_blend_width,
            ] {
                if self.eval_q0(y) <= 0.0 || self.eval_d(y) <= 0.0 || self.eval_lambda(y) <= 0.0 {
                    return Err(FrackinError::InvalidInput(format!(
                        "blend produced a non-positive coefficient at y = {y}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Equilibrium law of the internal state.
    pub fn eval_q0(&self, y: f64) -> f64 {
        let edge = self.blend_edge();
        let amp = self.q0_interior_amplitude;
        if y >= edge {
            self.c_plus * y.powf(-self.sigma)
        } else if y <= -edge {
            self.c_minus * (-y).powf(-self.sigma)
        } else if y.abs() <= self.m0 {
            amp
        } else if y > 0.0 {
            let vb = self.c_plus * edge.powf(-self.sigma);
            let sb = -self.sigma * self.c_plus * edge.powf(-self.sigma - 1.0);
            hermite(self.m0, edge, amp, 0.0, vb, sb, y)
        } else {
            let va = self.c_minus * edge.powf(-self.sigma);
            let sa = self.sigma * self.c_minus * edge.powf(-self.sigma - 1.0);
            hermite(-edge, -self.m0, va, sa, amp, 0.0, y)
        }
    }

    /// d/dy of Q0 (used by the particle drift).
    pub fn eval_q0_deriv(&self, y: f64) -> f64 {
        let edge = self.blend_edge();
        let amp = self.q0_interior_amplitude;
        if y >= edge {
            -self.sigma * self.c_plus * y.powf(-self.sigma - 1.0)
        } else if y <= -edge {
            self.sigma * self.c_minus * (-y).powf(-self.sigma - 1.0)
        } else if y.abs() <= self.m0 {
            0.0
        } else if y > 0.0 {
            let vb = self.c_plus * edge.powf(-self.sigma);
            let sb = -self.sigma * self.c_plus * edge.powf(-self.sigma - 1.0);
            hermite_deriv(self.m0, edge, amp, 0.0, vb, sb, y)
        } else {
            let va = self.c_minus * edge.powf(-self.sigma);
            let sa = self.sigma * self.c_minus * edge.powf(-self.sigma - 1.0);
            hermite_deriv(-edge, -self.m0, va, sa, amp, 0.0, y)
        }
    }

    /// Tumbling frequency: |y|^-beta on the left tail, flat interior.
    pub fn eval_lambda(&self, y: f64) -> f64 {
        let edge = self.blend_edge();
        if y >= -self.m0 {
            self.lambda_interior
        } else if y <= -edge {
            (-y).powf(-self.beta)
        } else {
            let va = edge.powf(-self.beta);
            let sa = self.beta * edge.powf(-self.beta - 1.0);
            hermite(-edge, -self.m0, va, sa, self.lambda_interior, 0.0, y)
        }
    }

    /// Supremum of the tumbling frequency (thinning bound).
    pub fn lambda_max(&self) -> f64 {
        // the left blend is monotone between its endpoint values for the
        // families we construct; sample it to be safe
        let edge = self.blend_edge();
        let mut m: f64 = self.lambda_interior.max(edge.powf(-self.beta));
        for k in 0..=64 {
            let y = -edge + (k as f64 / 64.0) * self.interior_blend_width;
            m = m.max(self.eval_lambda(y));
        }
        m
    }

    /// Internal-state diffusivity: A1 |y|^(n+1) tails, flat interior.
    pub fn eval_d(&self, y: f64) -> f64 {
        let edge = self.blend_edge();
        let d_int = self.a1 * self.m0.powf(self.n_exp + 1.0);
        let ay = y.abs();
        if ay >= edge {
            self.a1 * ay.powf(self.n_exp + 1.0)
        } else if ay <= self.m0 {
            d_int
        } else {
            let vb = self.a1 * edge.powf(self.n_exp + 1.0);
            let sb = self.a1 * (self.n_exp + 1.0) * edge.powf(self.n_exp);
            if y > 0.0 {
                hermite(self.m0, edge, d_int, 0.0, vb, sb, y)
            } else {
                hermite(-edge, -self.m0, vb, -sb, d_int, 0.0, y)
            }
        }
    }

    /// d/dy of D (used by the particle drift).
    pub fn eval_d_deriv(&self, y: f64) -> f64 {
        let edge = self.blend_edge();
        let d_int = self.a1 * self.m0.powf(self.n_exp + 1.0);
        let ay = y.abs();
        if ay >= edge {
            self.a1 * (self.n_exp + 1.0) * ay.powf(self.n_exp) * y.signum()
        } else if ay <= self.m0 {
            0.0
        } else {
            let vb = self.a1 * edge.powf(self.n_exp + 1.0);
            let sb = self.a1 * (self.n_exp + 1.0) * edge.powf(self.n_exp);
            if y > 0.0 {
                hermite_deriv(self.m0, edge, d_int, 0.0, vb, sb, y)
            } else {
                hermite_deriv(-edge, -self.m0, vb, -sb, d_int, 0.0, y)
            }
        }
    }

    /// Elementwise map of `eval_q0` (and siblings) over a slice.
    pub fn eval_q0_many(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.eval_q0(y)).collect()
    }
    pub fn eval_lambda_many(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.eval_lambda(y)).collect()
    }
    pub fn eval_d_many(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.eval_d(y)).collect()
    }

    /// mu = (n-1)/beta.
    pub fn mu(&self) -> f64 {
        (self.n_exp - 1.0) / self.beta
    }

    /// Left-tail amplitude of chi0: C^- = 1/(c^- A1 (n-sigma)).
    pub fn c_minus_chi(&self) -> f64 {
        1.0 / (self.c_minus * self.a1 * (self.n_exp - self.sigma))
    }

    fn inv_dq(&self, y: f64) -> f64 {
        1.0 / (self.eval_d(y) * self.eval_q0(y))
    }

    /// chi0(y) = int_{-inf}^y 1/(D Q0); increasing and bounded.
    ///
    /// The improper left piece is computed by tail-substitution quadrature
    /// (the integrand there is an exact power law), the finite pieces by
    /// adaptive quadrature. Relative accuracy ~1e-10.
    pub fn eval_chi0(&self, y: f64) -> Result<f64> {
        let tol = 1e-11;
        let edge = self.blend_edge();
        if y <= -edge {
            let (v, _) = quad::fat_tail_lower(|z| self.inv_dq(z), y, tol)?;
            return Ok(v);
        }
        let (anchor, _) = quad::fat_tail_lower(|z| self.inv_dq(z), -edge, tol)?;
        if y <= edge {
            let (mid, _) = quad::integrate(|z| self.inv_dq(z), -edge, y, tol)?;
            return Ok(anchor + mid);
        }
        // y beyond the right edge: full middle plus a finite tail piece
        let (mid, _) = quad::integrate(|z| self.inv_dq(z), -edge, edge, tol)?;
        let (beyond, _) = quad::fat_tail_upper(|z| self.inv_dq(z), edge, tol)?;
        if y.is_infinite() {
            return Ok(anchor + mid + beyond);
        }
        let (rest, _) = quad::fat_tail_upper(|z| self.inv_dq(z), y, tol)?;
        Ok(anchor + mid + beyond - rest)
    }

    /// chi0(+inf) = int_R 1/(D Q0); the constant of the deviation bound is
    /// its square root.
    pub fn chi0_infinity(&self) -> Result<f64> {
        self.eval_chi0(f64::INFINITY)
    }

    /// B0 = int Q0 chi0 dy (the normalized velocity measure contributes a
    /// factor of one).
    pub fn compute_b0(&self) -> Result<f64> {
        self.compute_b0_with_tol(1e-10)
    }

    pub fn compute_b0_with_tol(&self, tol: f64) -> Result<f64> {
        let edge = self.blend_edge();
        let cm = self.c_minus_chi();
        // left tail: Q0 chi0 = c^- C^- |y|^(-n) exactly
        let left = self.c_minus * cm * edge.powf(1.0 - self.n_exp) / (self.n_exp - 1.0);
        let (mid, _) = quad::integrate(
            |y| {
                let chi = self.eval_chi0(y).unwrap_or(f64::NAN);
                self.eval_q0(y) * chi
            },
            -edge,
            edge,
            tol,
        )?;
        // right tail: Q0 (chi_inf - K y^(sigma-n)) with K = 1/(c+ A1 (n-sigma))
        let chi_inf = self.chi0_infinity()?;
        let kp = 1.0 / (self.c_plus * self.a1 * (self.n_exp - self.sigma));
        let right = self.c_plus * chi_inf * edge.powf(1.0 - self.sigma) / (self.sigma - 1.0)
            - self.c_plus * kp * edge.powf(1.0 - self.n_exp) / (self.n_exp - 1.0);
        Ok(left + mid + right)
    }

    /// nu assembled from the closed-form tail constant:
    /// nu = c^- C^- c1(alpha = beta - n, beta1 = beta) * int_V |v1|^(1+mu) dv / B0.
    ///
    /// The closed-form c1 is cross-checked against direct quadrature on
    /// every call.
    pub fn compute_nu(&self, dim: usize) -> Result<f64> {
        let alpha = self.beta - self.n_exp;
        let c1_closed = integrals::c1_closed_form(alpha, self.beta)?;
        let c1_quad = integrals::c1_quadrature(alpha, self.beta)?;
        let rel = ((c1_closed - c1_quad) / c1_closed).abs();
        if rel > 1e-8 {
            return Err(FrackinError::QuadratureNonConvergence {
                context: "c1 closed form vs quadrature".into(),
                requested: 1e-8,
                achieved: rel,
            });
        }
        let vmom = integrals::sphere_abs_moment(dim, self.v0, 1.0 + self.mu())?;
        let b0 = self.compute_b0()?;
        Ok(self.c_minus * self.c_minus_chi() * c1_closed * vmom / b0)
    }
}

/// Scale-separation context: eps plus the derived constants.
#[derive(Debug, Clone)]
pub struct ScalingContext {
    pub eps: f64,
    pub mu: f64,
    pub nu: f64,
    pub b0: f64,
    pub c_minus_chi: f64,
    pub dim: usize,
}

impl ScalingContext {
    pub fn new(coeffs: &CoefficientSet, eps: f64, dim: usize) -> Result<Self> {
        if eps <= 0.0 {
            return Err(FrackinError::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        if dim != 1 && dim != 2 {
            return Err(FrackinError::InvalidInput(format!("dim must be 1 or 2, got {dim}")));
        }
        let mu = coeffs.mu();
        Ok(ScalingContext {
            eps,
            mu,
            nu: coeffs.compute_nu(dim)?,
            b0: coeffs.compute_b0()?,
            c_minus_chi: coeffs.c_minus_chi(),
            dim,
        })
    }

    /// Coefficient of v . grad_x in macroscopic time.
    pub fn transport_coeff(&self) -> f64 {
        self.eps.powf(-self.mu)
    }

    /// Coefficient of the internal-state diffusion in macroscopic time.
    pub fn ydiff_coeff(&self, s_exp: f64) -> f64 {
        self.eps.powf(s_exp - 1.0 - self.mu)
    }

    /// Coefficient of the tumbling relaxation in macroscopic time.
    pub fn relax_coeff(&self) -> f64 {
        self.eps.powf(-1.0 - self.mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_set() -> CoefficientSet {
        CoefficientSet::new(CoefficientParams::reference()).unwrap()
    }

    #[test]
    fn validator_reference_ok() {
        let p = CoefficientParams::reference();
        let r = validate_parameters(&p).unwrap();
        assert!(r.ok, "{:?}", r.violated);
        assert_relative_eq!((p.n_exp - 1.0) / p.beta, 0.75);
    }

    #[test]
    fn validator_s_too_small() {
        let mut p = CoefficientParams::reference();
        p.s_exp = 1.2;
        let r = validate_parameters(&p).unwrap();
        assert!(!r.ok);
        assert_eq!(r.violated.len(), 1);
        assert_eq!(r.violated[0].name, "s*beta > beta + sigma - 1");
        assert_relative_eq!(r.violated[0].left, 2.4);
        assert_relative_eq!(r.violated[0].right, 2.5);
    }

    #[test]
    fn validator_sigma_boundary() {
        let mut p = CoefficientParams::reference();
        p.sigma = 1.0;
        let r = validate_parameters(&p).unwrap();
        assert!(!r.ok);
        let names: Vec<_> = r.violated.iter().map(|v| v.name).collect();
        assert_eq!(names, vec!["sigma > 1"]);
    }

    #[test]
    fn validator_mu_boundary() {
        // n = 1 + beta puts mu exactly at 1
        let mut p = CoefficientParams::reference();
        p.n_exp = 3.0;
        let r = validate_parameters(&p).unwrap();
        assert!(!r.ok);
        let names: Vec<_> = r.violated.iter().map(|v| v.name).collect();
        assert!(names.contains(&"beta > n - 1"));
        assert!(names.contains(&"mu in (0,1)"));
    }

    #[test]
    fn validator_rejects_nonfinite() {
        let mut p = CoefficientParams::reference();
        p.a1 = f64::NAN;
        assert!(matches!(
            validate_parameters(&p),
            Err(FrackinError::InvalidInput(_))
        ));
        let mut p = CoefficientParams::reference();
        p.c_plus = -1.0;
        assert!(matches!(
            validate_parameters(&p),
            Err(FrackinError::InvalidInput(_))
        ));
    }

    #[test]
    fn q0_normalized_and_tails_exact() {
        let c = reference_set();
        // exact tail branch
        assert_relative_eq!(c.eval_q0(-4.0), 0.25 * 4.0_f64.powf(-1.5), epsilon = 1e-15);
        assert_relative_eq!(c.eval_q0(5.0), 0.25 * 5.0_f64.powf(-1.5), epsilon = 1e-15);
        // normalization within quadrature tolerance
        let edge = c.blend_edge();
        let (mid, _) = quad::integrate(|y| c.eval_q0(y), -edge, edge, 1e-12).unwrap();
        let tail = |cc: f64| cc * edge.powf(1.0 - c.sigma) / (c.sigma - 1.0);
        let total = mid + tail(c.c_plus) + tail(c.c_minus);
        assert_relative_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lambda_and_d_tails_exact() {
        let c = reference_set();
        assert_relative_eq!(c.eval_lambda(-10.0), 0.01, epsilon = 1e-15);
        assert_eq!(c.eval_lambda(3.0), c.lambda_interior);
        // D example: A1 = 1 yields 5^3.5 at y = 5
        let mut p = CoefficientParams::reference();
        p.a1 = 1.0;
        let c1 = CoefficientSet::with_interior_amplitude(p, 0.07).unwrap();
        assert_relative_eq!(c1.eval_d(5.0), 5.0_f64.powf(3.5), epsilon = 1e-12);
        assert_relative_eq!(5.0_f64.powf(3.5), 279.508, epsilon = 1e-3);
    }

    #[test]
    fn coefficients_are_c1_across_blends() {
        let c = reference_set();
        let edge = c.blend_edge();
        // derivative continuity across each joint (one-sided values agree)
        let delta = 1e-9;
        let fd = |f: &dyn Fn(f64) -> f64, y: f64| {
            let h = 1e-7 * y.abs().max(1.0);
            (f(y + h) - f(y - h)) / (2.0 * h)
        };
        let q0f = |y: f64| c.eval_q0(y);
        let df = |y: f64| c.eval_d(y);
        let lf = |y: f64| c.eval_lambda(y);
        let fns: [&dyn Fn(f64) -> f64; 3] = [&q0f, &df, &lf];
        for y0 in [-edge, -c.m0, c.m0, edge] {
            for f in fns {
                let l = fd(f, y0 - 2e-6);
                let r = fd(f, y0 + 2e-6);
                let scale = l.abs().max(r.abs()).max(1.0);
                assert!(
                    (l - r).abs() / scale < 1e-4,
                    "derivative jump at {y0}: left {l} right {r}"
                );
                // value continuity
                assert!(
                    (f(y0 - delta) - f(y0 + delta)).abs() < 1e-8 * f(y0).abs().max(1e-3),
                    "value jump at {y0}"
                );
            }
        }
        // analytic derivatives match finite differences inside the blends
        for y0 in [
            -c.m0 - 0.5 * c.interior_blend_width,
            c.m0 + 0.5 * c.interior_blend_width,
            -4.0,
            3.0,
            0.3,
        ] {
            let dq = fd(&|y| c.eval_q0(y), y0);
            assert_relative_eq!(dq, c.eval_q0_deriv(y0), epsilon = 1e-6, max_relative = 1e-5);
            let dd = fd(&|y| c.eval_d(y), y0);
            assert_relative_eq!(dd, c.eval_d_deriv(y0), epsilon = 1e-6, max_relative = 1e-5);
        }
    }

    #[test]
    fn vectorized_matches_scalar() {
        let c = reference_set();
        let ys: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.37).collect();
        for (i, v) in c.eval_q0_many(&ys).iter().enumerate() {
            assert_eq!(*v, c.eval_q0(ys[i]));
        }
        for (i, v) in c.eval_lambda_many(&ys).iter().enumerate() {
            assert_eq!(*v, c.eval_lambda(ys[i]));
        }
        for (i, v) in c.eval_d_many(&ys).iter().enumerate() {
            assert_eq!(*v, c.eval_d(ys[i]));
        }
    }

    #[test]
    fn chi0_tail_value_and_toy_example() {
        // toy pure-tail: c- = A1 = 1 gives C^- = 1 and chi0(-10) = 0.1
        let mut p = CoefficientParams::reference();
        p.a1 = 1.0;
        p.c_minus = 1.0;
        let c = CoefficientSet::with_interior_amplitude(p, 0.05).unwrap();
        assert_relative_eq!(c.c_minus_chi(), 1.0);
        let v = c.eval_chi0(-10.0).unwrap();
        assert_relative_eq!(v, 0.1, epsilon = 1e-8);
    }

    #[test]
    fn chi0_monotone_and_bounded() {
        let c = reference_set();
        let edge = c.blend_edge();
        let chi_edge_l = c.eval_chi0(-edge).unwrap();
        let chi_0 = c.eval_chi0(0.0).unwrap();
        let chi_inf = c.chi0_infinity().unwrap();
        assert!(chi_edge_l < chi_0 && chi_0 < chi_inf);
        assert!(chi_inf.is_finite());
        // random pair monotonicity
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..25 {
            let y1 = -50.0 + 100.0 * rnd();
            let y2 = -50.0 + 100.0 * rnd();
            let (lo, hi) = if y1 < y2 { (y1, y2) } else { (y2, y1) };
            let a = c.eval_chi0(lo).unwrap();
            let b = c.eval_chi0(hi).unwrap();
            assert!(a <= b + 1e-12, "chi0 not monotone: chi({lo})={a} > chi({hi})={b}");
        }
    }

    #[test]
    fn dual_equation_holds_in_tail() {
        // D Q0 d/dy chi0 = 1 pointwise in the left tail
        let c = reference_set();
        let edge = c.blend_edge();
        let mut state = 12345_u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let y = -2.0 * edge - 200.0 * rnd();
            let h = 1e-4 * y.abs();
            let dchi = (c.eval_chi0(y + h).unwrap() - c.eval_chi0(y - h).unwrap()) / (2.0 * h);
            let prod = c.eval_d(y) * c.eval_q0(y) * dchi;
            assert_relative_eq!(prod, 1.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn b0_positive_and_tolerance_consistent() {
        let c = reference_set();
        let b0a = c.compute_b0_with_tol(1e-8).unwrap();
        let b0b = c.compute_b0_with_tol(1e-11).unwrap();
        assert!(b0a > 0.0);
        assert_relative_eq!(b0a, b0b, epsilon = 1e-8, max_relative = 1e-8);
    }

    #[test]
    fn nu_invariant_under_d_amplitude() {
        // C^- and B0 both scale as 1/A1, so nu must not move
        let mut p1 = CoefficientParams::reference();
        p1.a1 = 0.1;
        let mut p2 = CoefficientParams::reference();
        p2.a1 = 1.7;
        let n1 = CoefficientSet::new(p1).unwrap().compute_nu(1).unwrap();
        let n2 = CoefficientSet::new(p2).unwrap().compute_nu(1).unwrap();
        assert_relative_eq!(n1, n2, epsilon = 1e-8, max_relative = 1e-8);
    }

    #[test]
    fn nu_invariant_under_global_q0_scaling() {
        // scaling (c-, c+, interior amplitude) together leaves nu fixed
        let p = CoefficientParams::reference();
        let base = CoefficientSet::new(p.clone()).unwrap();
        let lam = 1.9;
        let mut p2 = p;
        p2.c_minus *= lam;
        p2.c_plus *= lam;
        let scaled =
            CoefficientSet::with_interior_amplitude(p2, base.q0_interior_amplitude * lam).unwrap();
        let n1 = base.compute_nu(1).unwrap();
        let n2 = scaled.compute_nu(1).unwrap();
        assert_relative_eq!(n1, n2, epsilon = 1e-8, max_relative = 1e-8);
    }

    #[test]
    fn nu_c_minus_dependence_is_consistent() {
        // nu(c-) with C^- and B0 recomputed: the tail product c- C^- is
        // amplitude-free, so the dependence enters through B0 alone.
        let mut p1 = CoefficientParams::reference();
        p1.c_minus = 0.25;
        let mut p2 = CoefficientParams::reference();
        p2.c_minus = 0.5;
        let s1 = CoefficientSet::with_interior_amplitude(p1, 0.06).unwrap();
        let s2 = CoefficientSet::with_interior_amplitude(p2, 0.06).unwrap();
        let n1 = s1.compute_nu(1).unwrap();
        let n2 = s2.compute_nu(1).unwrap();
        let b1 = s1.compute_b0().unwrap();
        let b2 = s2.compute_b0().unwrap();
        // c- C^- is invariant, so nu2/nu1 must equal b1/b2 exactly
        assert_relative_eq!(n2 / n1, b1 / b2, epsilon = 1e-8, max_relative = 1e-8);
        assert!((n2 - n1).abs() > 1e-4, "dependence through B0 should be visible");
    }

    #[test]
    fn mu_examples() {
        let mut p = CoefficientParams::reference();
        p.n_exp = 1.2;
        let c = CoefficientSet::with_interior_amplitude(p, 0.07).unwrap();
        assert_relative_eq!(c.mu(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn integrability_constant_matches_chi_infinity() {
        let c = reference_set();
        let chi_inf = c.chi0_infinity().unwrap();
        // direct two-sided improper integral of 1/(D Q0)
        let (left, _) = quad::fat_tail_lower(|y| 1.0 / (c.eval_d(y) * c.eval_q0(y)), -1.0, 1e-11).unwrap();
        let (mid, _) = quad::integrate(|y| 1.0 / (c.eval_d(y) * c.eval_q0(y)), -1.0, 1.0, 1e-11).unwrap();
        let (right, _) = quad::fat_tail_upper(|y| 1.0 / (c.eval_d(y) * c.eval_q0(y)), 1.0, 1e-11).unwrap();
        assert_relative_eq!(chi_inf, left + mid + right, epsilon = 1e-8, max_relative = 1e-8);
    }
}
