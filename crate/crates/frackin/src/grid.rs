//! Phase-space grids and the spatial density container.

use crate::coefficients::CoefficientSet;
use crate::error::{FrackinError, Result};
use crate::integrals::SphereQuadrature;

/// A 1-D spatial density on the periodic box [0, L).
#[derive(Debug, Clone, PartialEq)]
pub struct MacroField {
    pub values: Vec<f64>,
    pub length: f64,
    pub label: String,
}

impl MacroField {
    pub fn new(values: Vec<f64>, length: f64, label: impl Into<String>) -> Self {
        MacroField {
            values,
            length,
            label: label.into(),
        }
    }

    pub fn nx(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    /// Cell-center coordinates.
    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx()).map(|i| (i as f64 + 0.5) * dx).collect()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    pub fn l1_distance(&self, other: &MacroField) -> f64 {
        assert_eq!(self.nx(), other.nx(), "field lengths differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.dx()
    }

    pub fn l2_distance(&self, other: &MacroField) -> f64 {
        assert_eq!(self.nx(), other.nx(), "field lengths differ");
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * self.dx())
        .sqrt()
    }
}

/// Graded internal-state grid: faces y = m0 sinh(u) with u uniform, so the
/// fat tails get a fixed number of cells per dyadic band.
#[derive(Debug, Clone)]
pub struct YGrid {
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub y_max: f64,
}

impl YGrid {
    pub fn sinh_graded(ny: usize, y_max: f64, scale: f64) -> Result<Self> {
        if ny < 8 {
            return Err(FrackinError::InvalidInput(format!("ny must be >= 8, got {ny}")));
        }
        if y_max <= scale {
            return Err(FrackinError::InvalidInput(format!(
                "y_max {y_max} must exceed the grading scale {scale}"
            )));
        }
        let u_max = (y_max / scale).asinh();
        let mut faces = Vec::with_capacity(ny + 1);
        for k in 0..=ny {
            let u = -u_max + 2.0 * u_max * k as f64 / ny as f64;
            faces.push(scale * u.sinh());
        }
        // pin the outer faces exactly
        faces[0] = -y_max;
        faces[ny] = y_max;
        let centers: Vec<f64> = (0..ny).map(|j| 0.5 * (faces[j] + faces[j + 1])).collect();
        let widths: Vec<f64> = (0..ny).map(|j| faces[j + 1] - faces[j]).collect();
        for j in 0..ny {
            if widths[j] <= 0.0 {
                return Err(FrackinError::InvalidInput("y grid not strictly monotone".into()));
            }
        }
        Ok(YGrid {
            faces,
            centers,
            widths,
            y_max,
        })
    }

    pub fn ny(&self) -> usize {
        self.centers.len()
    }

    /// Cells per dyadic band in the tail (ln 2 over the u-step; the ratio
    /// of consecutive outer cell widths is exp(du) on a sinh grid).
    pub fn cells_per_dyadic_band(&self) -> f64 {
        let r = self.widths[0] / self.widths[1];
        std::f64::consts::LN_2 / r.ln()
    }
}

/// Default y-truncation: the smallest Y with Q0 tail mass below `tail_tol`.
pub fn default_y_max(coeffs: &CoefficientSet, tail_tol: f64) -> f64 {
    // (c+ + c-) Y^(1-sigma) / (sigma - 1) = tail_tol
    let c = coeffs.c_plus + coeffs.c_minus;
    ((c / ((coeffs.sigma - 1.0) * tail_tol)).powf(1.0 / (coeffs.sigma - 1.0)))
        .max(4.0 * coeffs.blend_edge())
}

/// Q0 mass beyond +/- y (exact tail formula).
pub fn tail_mass_beyond(coeffs: &CoefficientSet, y: f64) -> f64 {
    (coeffs.c_plus + coeffs.c_minus) * y.powf(1.0 - coeffs.sigma) / (coeffs.sigma - 1.0)
}

/// The full phase grid of the kinetic solver.
#[derive(Debug, Clone)]
pub struct PhaseGrid {
    pub length: f64,
    pub nx: usize,
    pub v_quad: SphereQuadrature,
    pub y: YGrid,
    pub dt: f64,
}

impl PhaseGrid {
    pub fn new(length: f64, nx: usize, v_quad: SphereQuadrature, y: YGrid, dt: f64) -> Result<Self> {
        if nx < 8 {
            return Err(FrackinError::InvalidInput(format!("nx must be >= 8, got {nx}")));
        }
        if length <= 0.0 || dt <= 0.0 {
            return Err(FrackinError::InvalidInput("length and dt must be positive".into()));
        }
        Ok(PhaseGrid {
            length,
            nx,
            v_quad,
            y,
            dt,
        })
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn x_centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.nx).map(|i| (i as f64 + 0.5) * dx).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientParams, CoefficientSet};
    use approx::assert_relative_eq;

    #[test]
    fn sinh_grid_covers_and_grades() {
        let g = YGrid::sinh_graded(160, 1e8, 2.0).unwrap();
        assert_eq!(g.faces.len(), 161);
        assert_relative_eq!(g.faces[0], -1e8);
        assert_relative_eq!(g.faces[160], 1e8);
        // believe three-ish cells per dyadic band at the acceptance resolution
        let cpb = g.cells_per_dyadic_band();
        assert!(cpb > 2.8 && cpb < 3.5, "cells per band = {cpb}");
        // strictly monotone faces
        for j in 0..160 {
            assert!(g.faces[j] < g.faces[j + 1]);
        }
    }

    #[test]
    fn default_truncation_tail_mass() {
        let c = CoefficientSet::new(CoefficientParams::reference()).unwrap();
        let y = default_y_max(&c, 1e-4);
        let mass = tail_mass_beyond(&c, y);
        assert!(mass <= 1.0001e-4, "tail mass {mass}");
        assert_relative_eq!(y, 1e8, epsilon = 1e-6);
    }

    #[test]
    fn macro_field_metrics() {
        let a = MacroField::new(vec![1.0, 2.0, 3.0, 2.0], 4.0, "a");
        let b = MacroField::new(vec![1.0, 1.0, 3.0, 4.0], 4.0, "b");
        assert_relative_eq!(a.integral(), 8.0);
        assert_relative_eq!(a.l1_distance(&b), 3.0);
        assert_relative_eq!(a.l2_distance(&b), (5.0_f64).sqrt());
    }
}
