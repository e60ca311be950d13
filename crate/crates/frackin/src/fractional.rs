//! Spectral solver for the limiting equation
//! d/dt rho + nu (-Laplace)^((1+mu)/2) rho = 0 on the periodic box,
//! plus the whole-line self-similar profile for tail diagnostics.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{FrackinError, Result};
use crate::grid::MacroField;
use crate::quad;

/// Problem data for the periodic fractional heat equation.
#[derive(Debug, Clone)]
pub struct FractionalProblem {
    pub nu: f64,
    /// Fractional order 1 + mu of the multiplier |xi|^order.
    pub order: f64,
    pub length: f64,
    pub rho0: MacroField,
}

impl FractionalProblem {
    pub fn new(nu: f64, order: f64, rho0: MacroField) -> Result<Self> {
        if nu <= 0.0 {
            return Err(FrackinError::InvalidInput(format!("nu must be positive, got {nu}")));
        }
        if !(order > 0.0 && order <= 2.0) {
            return Err(FrackinError::InvalidInput(format!(
                "order must lie in (0, 2], got {order}"
            )));
        }
        let length = rho0.length;
        Ok(FractionalProblem { nu, order, length, rho0 })
    }

    /// rho(t) via the Fourier multiplier exp(-nu |xi_k|^order t).
    pub fn solve(&self, t: f64) -> Result<MacroField> {
        if t < 0.0 {
            return Err(FrackinError::InvalidInput(format!("t must be nonnegative, got {t}")));
        }
        let n = self.rho0.nx();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let mut buf: Vec<Complex64> = self
            .rho0
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let xi = 2.0 * std::f64::consts::PI * kk / self.length;
            *c *= (-self.nu * xi.abs().powf(self.order) * t).exp();
        }
        ifft.process(&mut buf);
        let scale = 1.0 / n as f64;
        let max_im = buf.iter().map(|c| c.im.abs()).fold(0.0_f64, f64::max) * scale;
        let max_re = buf.iter().map(|c| c.re.abs()).fold(0.0_f64, f64::max) * scale;
        if max_im > 1e-12 * max_re.max(1.0) {
            return Err(FrackinError::SolverAbort(format!(
                "fractional solve produced imaginary residual {max_im:.3e}"
            )));
        }
        Ok(MacroField::new(
            buf.iter().map(|c| c.re * scale).collect(),
            self.length,
            "fractional density",
        ))
    }
}

/// Whole-line fundamental solution of the fractional heat semigroup at time
/// t, sampled on `x_grid`:
///   p(t, x) = (1/pi) int_0^inf exp(-nu xi^order t) cos(xi x) dxi.
///
/// The oscillatory integral is summed over half-periods with adaptive
/// panels under the decaying envelope.
pub fn self_similar_profile(order: f64, nu: f64, t: f64, x_grid: &[f64]) -> Result<Vec<f64>> {
    if t <= 0.0 {
        return Err(FrackinError::InvalidInput(format!("t must be positive, got {t}")));
    }
    if !(order > 0.0 && order <= 2.0) || nu <= 0.0 {
        return Err(FrackinError::InvalidInput(
            "order must lie in (0, 2] and nu must be positive".into(),
        ));
    }
    // envelope support: exp(-nu xi^order t) < 1e-18 beyond xi_max
    let xi_max = (42.0 / (nu * t)).powf(1.0 / order);
    let mut out = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let ax = x.abs();
        let value = if ax * xi_max < 4.0 {
            // few oscillations: one adaptive pass
            let (v, _) = quad::integrate(
                |xi: f64| (-nu * xi.powf(order) * t).exp() * (xi * ax).cos(),
                0.0,
                xi_max,
                1e-11,
            )?;
            v
        } else {
            // sum half-period panels [k pi / x, (k+1) pi / x]
            let halfp = std::f64::consts::PI / ax;
            let npanels = (xi_max / halfp).ceil() as usize;
            let mut acc = 0.0;
            for k in 0..npanels {
                let a = k as f64 * halfp;
                let b = ((k + 1) as f64 * halfp).min(xi_max);
                let (v, _) = quad::integrate(
                    |xi: f64| (-nu * xi.powf(order) * t).exp() * (xi * ax).cos(),
                    a,
                    b,
                    1e-10,
                )?;
                acc += v;
                if b >= xi_max {
                    break;
                }
            }
            acc
        };
        out.push(value / std::f64::consts::PI);
    }
    Ok(out)
}
