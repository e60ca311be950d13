//! Deterministic solver for the scaled kinetic equation in (t, x, v, y).
//!
//! Strang splitting per step: exact tumbling relaxation (half), implicit
//! finite-volume internal-state diffusion (half), MUSCL or upwind transport
//! (full), then the two halves again in reverse. The y-discretization keeps
//! Q0 as the exact discrete equilibrium and conserves mass in flux form;
//! the weighted density uses the discrete dual weight (the grid solution of
//! the dual problem), which the y-substep conserves up to boundary terms.

use ndarray::{Array3, Axis};
use rayon::prelude::*;

use crate::coefficients::{CoefficientSet, ScalingContext};
use crate::error::{FrackinError, Result};
use crate::grid::{MacroField, PhaseGrid};

/// Transport scheme for the x-substep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Upwind,
    MusclMinmod,
}

/// Phase density on the grid at one instant.
#[derive(Debug, Clone)]
pub struct KineticState {
    /// q over (x-cell, v-node, y-cell).
    pub q: Array3<f64>,
    pub time: f64,
    pub ctx: ScalingContext,
    /// Initial-data constant: max of the three bounds of the separable datum.
    pub b_init: f64,
    /// Sharp sup bound max_x rho0 (the maximum principle constant).
    pub b_sup: f64,
}

/// Precomputed per-run machinery for stepping a state.
pub struct Stepper {
    pub grid: PhaseGrid,
    pub coeffs: CoefficientSet,
    pub ctx: ScalingContext,
    pub transport: Transport,
    q0: Vec<f64>,
    lambda: Vec<f64>,
    chi_dual: Vec<f64>,
    /// Half-step relaxation factors exp(-Lambda dt/2 eps^(-1-mu)).
    relax_half: Vec<f64>,
    /// Face conductances (D Q0)_face / delta_face, zero at the boundaries.
    face_w: Vec<f64>,
    /// Prefactored tridiagonal solve for the half-step implicit y-update.
    tri: Tridiag,
    /// kappa * dt/2 with kappa = eps^(s-1-mu).
    ktau: f64,
    courant: Vec<f64>,
    b0_grid: f64,
}

/// Thomas-algorithm workspace for a constant tridiagonal system.
struct Tridiag {
    /// Superdiagonal multipliers from the forward elimination prefactor.
    cp: Vec<f64>,
    diag: Vec<f64>,
    lower: Vec<f64>,
}

impl Tridiag {
    fn factor(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        let n = diag.len();
        let mut cp = vec![0.0; n];
        cp[0] = upper[0] / diag[0];
        for i in 1..n {
            cp[i] = upper[i] / (diag[i] - lower[i] * cp[i - 1]);
        }
        Tridiag { cp, diag, lower }
    }

    /// Solves in place; `rhs` becomes the solution.
    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= self.diag[0];
        for i in 1..n {
            let m = self.diag[i] - self.lower[i] * self.cp[i - 1];
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.cp[i] * rhs[i + 1];
        }
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

impl Stepper {
    pub fn new(
        grid: PhaseGrid,
        coeffs: CoefficientSet,
        ctx: ScalingContext,
        transport: Transport,
    ) -> Result<Self> {
        let ny = grid.y.ny();
        let q0: Vec<f64> = grid.y.centers.iter().map(|&y| coeffs.eval_q0(y)).collect();
        let lambda: Vec<f64> = grid.y.centers.iter().map(|&y| coeffs.eval_lambda(y)).collect();
        let dq: Vec<f64> = grid
            .y
            .centers
            .iter()
            .map(|&y| coeffs.eval_d(y) * coeffs.eval_q0(y))
            .collect();
        // harmonic-mean face conductances
        let mut face_w = vec![0.0; ny + 1];
        for j in 1..ny {
            let hm = 2.0 / (1.0 / dq[j - 1] + 1.0 / dq[j]);
            face_w[j] = hm / (grid.y.centers[j] - grid.y.centers[j - 1]);
        }
        // discrete dual weight: unit flux across every interior face,
        // anchored to chi0 at the leftmost cell center
        let mut chi_dual = vec![0.0; ny];
        chi_dual[0] = coeffs.eval_chi0(grid.y.centers[0])?;
        for j in 1..ny {
            chi_dual[j] = chi_dual[j - 1] + 1.0 / face_w[j];
        }
        let b0_grid: f64 = (0..ny).map(|j| chi_dual[j] * q0[j] * grid.y.widths[j]).sum();

        // CFL check for the transport substep
        let cmax = grid
            .v_quad
            .nodes
            .iter()
            .map(|v| v[0].abs())
            .fold(0.0_f64, f64::max)
            * ctx.transport_coeff();
        let cfl = cmax * grid.dt / grid.dx();
        if cfl > 1.0 {
            return Err(FrackinError::TimeStep(format!(
                "transport CFL {cfl:.3} > 1; reduce dt to {:.3e}",
                0.9 * grid.dx() / cmax
            )));
        }
        let courant: Vec<f64> = grid
            .v_quad
            .nodes
            .iter()
            .map(|v| v[0] * ctx.transport_coeff() * grid.dt / grid.dx())
            .collect();

        let relax_rate = ctx.relax_coeff();
        let relax_half: Vec<f64> = lambda
            .iter()
            .map(|&l| (-l * 0.5 * grid.dt * relax_rate).exp())
            .collect();

        let ktau = ctx.ydiff_coeff(coeffs.s_exp) * 0.5 * grid.dt;
        let mass: Vec<f64> = (0..ny).map(|j| q0[j] * grid.y.widths[j]).collect();
        let mut lower = vec![0.0; ny];
        let mut upper = vec![0.0; ny];
        let mut diag = vec![0.0; ny];
        for j in 0..ny {
            diag[j] = mass[j] + ktau * (face_w[j] + face_w[j + 1]);
            if j > 0 {
                lower[j] = -ktau * face_w[j];
            }
            if j + 1 < ny {
                upper[j] = -ktau * face_w[j + 1];
            }
        }
        let tri = Tridiag::factor(lower, diag, upper);

        Ok(Stepper {
            grid,
            coeffs,
            ctx,
            transport,
            q0,
            lambda,
            chi_dual,
            relax_half,
            face_w,
            tri,
            ktau,
            courant,
            b0_grid,
        })
    }

    /// Suggested dt: transport CFL and relaxation-resolution bound.
    ///
    /// The splitting multiplies the bulk absorption by (z/2) coth(z/2) with
    /// z = Lambda dt eps^(-1-mu); theta_relax keeps z small so the split
    /// flux stays within a fraction of a percent of the resolved one.
    pub fn suggested_dt(
        coeffs: &CoefficientSet,
        ctx: &ScalingContext,
        dx: f64,
        cfl: f64,
        theta_relax: f64,
    ) -> f64 {
        let cmax = coeffs.v0 * ctx.transport_coeff();
        let dt_cfl = cfl * dx / cmax;
        let dt_relax = theta_relax / (coeffs.lambda_max() * ctx.relax_coeff());
        dt_cfl.min(dt_relax)
    }

    pub fn q0_grid(&self) -> &[f64] {
        &self.q0
    }

    pub fn lambda_grid(&self) -> &[f64] {
        &self.lambda
    }

    pub fn chi_dual(&self) -> &[f64] {
        &self.chi_dual
    }

    /// Grid-consistent normalization sum chi Q0 h (discrete B0).
    pub fn b0_grid(&self) -> f64 {
        self.b0_grid
    }

    pub fn face_conductances(&self) -> &[f64] {
        &self.face_w
    }

    /// Separable initial state q = rho0(x) Q0(y).
    pub fn init_state(&self, rho0: &MacroField) -> Result<KineticState> {
        if rho0.nx() != self.grid.nx {
            return Err(FrackinError::InvalidInput(format!(
                "rho0 has {} cells, grid has {}",
                rho0.nx(),
                self.grid.nx
            )));
        }
        if rho0.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(FrackinError::InvalidInput("rho0 must be nonnegative and finite".into()));
        }
        let nv = self.grid.v_quad.len();
        let ny = self.grid.y.ny();
        let mut q = Array3::zeros((self.grid.nx, nv, ny));
        for (i, mut plane) in q.axis_iter_mut(Axis(0)).enumerate() {
            for v in 0..nv {
                for j in 0..ny {
                    plane[[v, j]] = rho0.values[i] * self.q0[j];
                }
            }
        }
        let max_rho = rho0.values.iter().cloned().fold(0.0_f64, f64::max);
        let dx = self.grid.dx();
        let int_rho: f64 = rho0.values.iter().sum::<f64>() * dx;
        let int_rho2: f64 = rho0.values.iter().map(|r| r * r).sum::<f64>() * dx;
        // the common constant dominating all three initial bounds
        let b_init = max_rho.max(int_rho).max(int_rho2);
        Ok(KineticState {
            q,
            time: 0.0,
            ctx: self.ctx.clone(),
            b_init,
            b_sup: max_rho,
        })
    }

    fn relax_half_step(&self, state: &mut KineticState) {
        let nv = self.grid.v_quad.len();
        let weights = &self.grid.v_quad.weights;
        let relax = &self.relax_half;
        state
            .q
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut plane| {
                let ny = relax.len();
                let mut avg = vec![0.0; ny];
                for v in 0..nv {
                    for j in 0..ny {
                        avg[j] += weights[v] * plane[[v, j]];
                    }
                }
                for v in 0..nv {
                    for j in 0..ny {
                        let a = avg[j];
                        plane[[v, j]] = a + relax[j] * (plane[[v, j]] - a);
                    }
                }
            });
    }

    /// Implicit half-step of the y-diffusion, flux-form update so plain
    /// mass telescopes exactly.
    fn ydiff_half_step(&self, state: &mut KineticState) {
        let ny = self.grid.y.ny();
        let widths = &self.grid.y.widths;
        let face_w = &self.face_w;
        let ktau = self.ktau;
        let tri = &self.tri;
        let q0 = &self.q0;
        let anchor = ny / 2;
        state
            .q
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut plane| {
                let nv = plane.shape()[0];
                let mut rhs = vec![0.0; ny];
                let mut flux = vec![0.0; ny + 1];
                for v in 0..nv {
                    // solve for the deviation e = g - c from an anchor
                    // constant; constants are in the exact kernel of the
                    // discrete operator, so equilibrium fibers stay put
                    // bit-for-bit and the huge tail conductances never see
                    // roundoff-scale gradients.
                    let c = plane[[v, anchor]] / q0[anchor];
                    for j in 0..ny {
                        rhs[j] = (plane[[v, j]] - c * q0[j]) * widths[j];
                    }
                    tri.solve(&mut rhs);
                    // rhs now holds e+; fluxes of g+ equal fluxes of e+
                    for j in 1..ny {
                        flux[j] = face_w[j] * (rhs[j] - rhs[j - 1]);
                    }
                    for j in 0..ny {
                        let div = flux[j + 1] - flux[j];
                        plane[[v, j]] += ktau * div / widths[j];
                    }
                }
            });
    }

    fn transport_step(&self, state: &mut KineticState) {
        let nx = self.grid.nx;
        let scheme = self.transport;
        let nv = self.grid.v_quad.len();
        let ny = self.grid.y.ny();
        // layout is (x, v, y) row-major: index = (ix * nv + iv) * ny + iy
        let stride = nv * ny;
        let snapshot: Vec<f64> = state.q.as_slice().expect("contiguous state").to_vec();
        let updated: Vec<Vec<f64>> = (0..nv * ny)
            .into_par_iter()
            .map(|fib| {
                let (v, j) = (fib / ny, fib % ny);
                let lam = self.courant[v];
                let mut fiber = vec![0.0; nx];
                for (ix, f) in fiber.iter_mut().enumerate() {
                    *f = snapshot[ix * stride + v * ny + j];
                }
                let mut flux = vec![0.0; nx];
                match scheme {
                    Transport::Upwind => {
                        if lam > 0.0 {
                            for ix in 0..nx {
                                flux[ix] = lam * fiber[ix];
                            }
                        } else {
                            for ix in 0..nx {
                                flux[ix] = lam * fiber[(ix + 1) % nx];
                            }
                        }
                    }
                    Transport::MusclMinmod => {
                        if lam > 0.0 {
                            for ix in 0..nx {
                                let qm = fiber[(ix + nx - 1) % nx];
                                let qc = fiber[ix];
                                let qp = fiber[(ix + 1) % nx];
                                let slope = minmod(qp - qc, qc - qm);
                                flux[ix] = lam * (qc + 0.5 * (1.0 - lam) * slope);
                            }
                        } else {
                            for ix in 0..nx {
                                let qc = fiber[(ix + 1) % nx];
                                let qm = fiber[ix];
                                let qp = fiber[(ix + 2) % nx];
                                let slope = minmod(qp - qc, qc - qm);
                                flux[ix] = lam * (qc - 0.5 * (1.0 + lam) * slope);
                            }
                        }
                    }
                }
                let mut out = fiber;
                for ix in 0..nx {
                    out[ix] -= flux[ix] - flux[(ix + nx - 1) % nx];
                }
                out
            })
            .collect();
        let q = state.q.as_slice_mut().expect("contiguous state");
        for (fib, fiber) in updated.iter().enumerate() {
            let (v, j) = (fib / ny, fib % ny);
            let base = v * ny + j;
            for (ix, val) in fiber.iter().enumerate() {
                q[ix * stride + base] = *val;
            }
        }
    }

    /// Advances one Strang step: R(dt/2) Y(dt/2) T(dt) Y(dt/2) R(dt/2).
    pub fn step(&self, state: &mut KineticState) -> Result<()> {
        self.relax_half_step(state);
        self.ydiff_half_step(state);
        self.transport_step(state);
        self.ydiff_half_step(state);
        self.relax_half_step(state);
        state.time += self.grid.dt;
        let min = state.q.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -1e-13 * state.b_sup {
            return Err(FrackinError::SolverAbort(format!(
                "negative density {min:.3e} at t = {:.4}",
                state.time
            )));
        }
        if !min.is_finite() {
            return Err(FrackinError::SolverAbort(format!(
                "non-finite density at t = {:.4}",
                state.time
            )));
        }
        Ok(())
    }

    /// Weighted density (1/B0) int int chi0 q dy dv, with the discrete dual
    /// weight and the grid-consistent normalization.
    pub fn weighted_density(&self, state: &KineticState) -> MacroField {
        let nv = self.grid.v_quad.len();
        let ny = self.grid.y.ny();
        let weights = &self.grid.v_quad.weights;
        let values: Vec<f64> = state
            .q
            .axis_iter(Axis(0))
            .map(|plane| {
                let mut acc = 0.0;
                for v in 0..nv {
                    for j in 0..ny {
                        acc += weights[v] * plane[[v, j]] * self.chi_dual[j] * self.grid.y.widths[j];
                    }
                }
                acc / self.b0_grid
            })
            .collect();
        MacroField::new(values, self.grid.length, "weighted density")
    }

    /// Plain spatial density rho = int <q> dy.
    pub fn plain_density(&self, state: &KineticState) -> MacroField {
        let nv = self.grid.v_quad.len();
        let ny = self.grid.y.ny();
        let weights = &self.grid.v_quad.weights;
        let values: Vec<f64> = state
            .q
            .axis_iter(Axis(0))
            .map(|plane| {
                let mut acc = 0.0;
                for v in 0..nv {
                    for j in 0..ny {
                        acc += weights[v] * plane[[v, j]] * self.grid.y.widths[j];
                    }
                }
                acc
            })
            .collect();
        MacroField::new(values, self.grid.length, "plain density")
    }

    /// Relative entropy int q^2 / Q0 over the whole phase space.
    pub fn relative_entropy(&self, state: &KineticState) -> f64 {
        let dx = self.grid.dx();
        let weights = &self.grid.v_quad.weights;
        let ny = self.grid.y.ny();
        let nv = self.grid.v_quad.len();
        let mut acc = 0.0;
        for plane in state.q.axis_iter(Axis(0)) {
            for v in 0..nv {
                for j in 0..ny {
                    let q = plane[[v, j]];
                    acc += weights[v] * q * q / self.q0[j] * self.grid.y.widths[j];
                }
            }
        }
        acc * dx
    }

    /// Total plain mass int q dx dv dy.
    pub fn total_mass(&self, state: &KineticState) -> f64 {
        let dx = self.grid.dx();
        let weights = &self.grid.v_quad.weights;
        let ny = self.grid.y.ny();
        let nv = self.grid.v_quad.len();
        let mut acc = 0.0;
        for plane in state.q.axis_iter(Axis(0)) {
            for v in 0..nv {
                for j in 0..ny {
                    acc += weights[v] * plane[[v, j]] * self.grid.y.widths[j];
                }
            }
        }
        acc * dx
    }

    /// Total weighted mass int chi0 q (discrete dual weight, unnormalized).
    pub fn weighted_mass(&self, state: &KineticState) -> f64 {
        self.weighted_density(state).integral() * self.b0_grid
    }

    /// Instantaneous dissipation quadratic forms (the integrands of the
    /// a priori estimates, without their epsilon prefactors):
    /// I_y = int D Q0 (d_y (q/Q0))^2 and I_L = int Lambda (q - <q>)^2 / Q0.
    pub fn dissipation_forms(&self, state: &KineticState) -> (f64, f64) {
        let dx = self.grid.dx();
        let weights = &self.grid.v_quad.weights;
        let ny = self.grid.y.ny();
        let nv = self.grid.v_quad.len();
        let mut iy = 0.0;
        let mut il = 0.0;
        for plane in state.q.axis_iter(Axis(0)) {
            for v in 0..nv {
                // face flux form of the y quadratic form
                for j in 1..ny {
                    let gl = plane[[v, j - 1]] / self.q0[j - 1];
                    let gr = plane[[v, j]] / self.q0[j];
                    iy += weights[v] * self.face_w[j] * (gr - gl) * (gr - gl);
                }
            }
            let mut avg = vec![0.0; ny];
            for v in 0..nv {
                for j in 0..ny {
                    avg[j] += weights[v] * plane[[v, j]];
                }
            }
            for v in 0..nv {
                for j in 0..ny {
                    let d = plane[[v, j]] - avg[j];
                    il += weights[v] * self.lambda[j] * d * d / self.q0[j] * self.grid.y.widths[j];
                }
            }
        }
        (iy * dx, il * dx)
    }

    /// Discrete energy budget between two states one step apart.
    ///
    /// Returns (dE, Diss_y, Diss_Lambda) with the dissipations defined as
    /// d/dt of the squared norm, i.e. twice the quadratic forms times their
    /// macroscopic-time coefficients, averaged trapezoidally, so that
    /// dE + dt (Diss_y + Diss_Lambda) = O(dt^2) for resolved steps.
    pub fn entropy_budget(&self, before: &KineticState, after: &KineticState) -> (f64, f64, f64) {
        let de = self.relative_entropy(after) - self.relative_entropy(before);
        let (iy0, il0) = self.dissipation_forms(before);
        let (iy1, il1) = self.dissipation_forms(after);
        let ky = self.ctx.ydiff_coeff(self.coeffs.s_exp);
        let kl = self.ctx.relax_coeff();
        let diss_y = ky * (iy0 + iy1);
        let diss_l = kl * (il0 + il1);
        (de, diss_y, diss_l)
    }

    /// Exact entropy decrement of one isolated relaxation substep of
    /// length tau starting from `state` (closed-form exponential).
    pub fn relaxation_entropy_drop(&self, state: &KineticState, tau: f64) -> f64 {
        let dx = self.grid.dx();
        let weights = &self.grid.v_quad.weights;
        let ny = self.grid.y.ny();
        let nv = self.grid.v_quad.len();
        let rate = self.ctx.relax_coeff();
        let mut acc = 0.0;
        for plane in state.q.axis_iter(Axis(0)) {
            let mut avg = vec![0.0; ny];
            for v in 0..nv {
                for j in 0..ny {
                    avg[j] += weights[v] * plane[[v, j]];
                }
            }
            for v in 0..nv {
                for j in 0..ny {
                    let d = plane[[v, j]] - avg[j];
                    let decay = (-2.0 * self.lambda[j] * rate * tau).exp();
                    acc += weights[v] * (1.0 - decay) * d * d / self.q0[j] * self.grid.y.widths[j];
                }
            }
        }
        -acc * dx
    }

    /// Applies only the relaxation substep (testing hook).
    pub fn relax_only(&self, state: &mut KineticState, tau: f64) {
        let rate = self.ctx.relax_coeff();
        let relax: Vec<f64> = self
            .lambda
            .iter()
            .map(|&l| (-l * tau * rate).exp())
            .collect();
        let nv = self.grid.v_quad.len();
        let ny = self.grid.y.ny();
        let weights = &self.grid.v_quad.weights;
        for mut plane in state.q.axis_iter_mut(Axis(0)) {
            let mut avg = vec![0.0; ny];
            for v in 0..nv {
                for j in 0..ny {
                    avg[j] += weights[v] * plane[[v, j]];
                }
            }
            for v in 0..nv {
                for j in 0..ny {
                    let a = avg[j];
                    plane[[v, j]] = a + relax[j] * (plane[[v, j]] - a);
                }
            }
        }
    }

    /// Applies only the implicit y-diffusion half step (testing hook).
    pub fn ydiff_only_half(&self, state: &mut KineticState) {
        self.ydiff_half_step(state);
    }

    /// Sup of q / (B Q0) over the grid.
    pub fn sup_ratio(&self, state: &KineticState, b: f64) -> f64 {
        let ny = self.grid.y.ny();
        let nv = self.grid.v_quad.len();
        let mut m = 0.0_f64;
        for plane in state.q.axis_iter(Axis(0)) {
            for v in 0..nv {
                for j in 0..ny {
                    m = m.max(plane[[v, j]] / (b * self.q0[j]));
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientParams, CoefficientSet, ScalingContext};
    use crate::grid::{default_y_max, PhaseGrid, YGrid};
    use crate::integrals::build_sphere_quadrature;
    use approx::assert_relative_eq;

    fn setup(eps: f64, nx: usize, ny: usize, transport: Transport) -> (Stepper, MacroField) {
        let coeffs = CoefficientSet::new(CoefficientParams::reference()).unwrap();
        let ctx = ScalingContext::new(&coeffs, eps, 1).unwrap();
        let y_max = default_y_max(&coeffs, 1e-4);
        let y = YGrid::sinh_graded(ny, y_max, coeffs.m0).unwrap();
        let vq = build_sphere_quadrature(1, coeffs.v0, 2).unwrap();
        let length = 2.0 * std::f64::consts::PI;
        let dt = Stepper::suggested_dt(&coeffs, &ctx, length / nx as f64, 0.85, 0.15);
        let grid = PhaseGrid::new(length, nx, vq, y, dt).unwrap();
        let stepper = Stepper::new(grid, coeffs, ctx, transport).unwrap();
        let xc = stepper.grid.x_centers();
        let rho0 = MacroField::new(
            xc.iter().map(|&x| 1.0 + 0.5 * (x).cos()).collect(),
            length,
            "rho0",
        );
        (stepper, rho0)
    }

    #[test]
    fn init_is_separable_and_bounded() {
        let (st, rho0) = setup(0.1, 16, 64, Transport::MusclMinmod);
        let state = st.init_state(&rho0).unwrap();
        // q = rho0 Q0, v-independent
        for (i, plane) in state.q.axis_iter(Axis(0)).enumerate() {
            for j in [0usize, 10, 63] {
                assert_relative_eq!(plane[[0, j]], rho0.values[i] * st.q0_grid()[j]);
                assert_eq!(plane[[0, j]], plane[[1, j]]);
            }
        }
        let max_rho = rho0.values.iter().cloned().fold(0.0_f64, f64::max);
        assert_relative_eq!(state.b_sup, max_rho);
        // weighted mass at t=0 equals mean(rho0) * L * B0_grid
        let wm = st.weighted_mass(&state);
        let l = st.grid.length;
        assert_relative_eq!(wm, l * st.b0_grid(), epsilon = 1e-10 * wm.abs());
        // entropy at t=0 equals int rho0^2 dx times the discrete Q0 mass
        let q0_mass: f64 = st
            .q0_grid()
            .iter()
            .zip(&st.grid.y.widths)
            .map(|(q, h)| q * h)
            .sum();
        let int_rho2: f64 = rho0.values.iter().map(|r| r * r).sum::<f64>() * rho0.dx();
        assert_relative_eq!(
            st.relative_entropy(&state),
            int_rho2 * q0_mass,
            epsilon = 1e-12 * int_rho2
        );
        // negative rho0 rejected
        let bad = MacroField::new(vec![-1.0; 16], st.grid.length, "bad");
        assert!(st.init_state(&bad).is_err());
    }

    #[test]
    fn constant_state_is_stationary() {
        let (st, _) = setup(0.1, 16, 64, Transport::MusclMinmod);
        let rho0 = MacroField::new(vec![1.0; 16], st.grid.length, "flat");
        let mut state = st.init_state(&rho0).unwrap();
        let before = state.q.clone();
        for _ in 0..5 {
            st.step(&mut state).unwrap();
        }
        let num = state
            .q
            .iter()
            .zip(before.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        let den = before.iter().cloned().fold(0.0_f64, f64::max);
        assert!(num / den <= 1e-10, "stationarity residual {}", num / den);
    }

    #[test]
    fn relaxation_decay_is_exact_exponential() {
        let (st, rho0) = setup(0.2, 16, 64, Transport::MusclMinmod);
        let mut state = st.init_state(&rho0).unwrap();
        // imprint v-anisotropy: scale one velocity branch
        for mut plane in state.q.axis_iter_mut(Axis(0)) {
            for j in 0..st.grid.y.ny() {
                plane[[0, j]] *= 1.3;
            }
        }
        let weights = st.grid.v_quad.weights.clone();
        let before = state.q.clone();
        let tau = 0.01;
        st.relax_only(&mut state, tau);
        let rate = st.ctx.relax_coeff();
        for (i, plane) in state.q.axis_iter(Axis(0)).enumerate() {
            for j in [0usize, 20, 40, 63] {
                let avg = weights[0] * before[[i, 0, j]] + weights[1] * before[[i, 1, j]];
                let expect = avg
                    + (-st.lambda_grid()[j] * rate * tau).exp() * (before[[i, 0, j]] - avg);
                assert_relative_eq!(plane[[0, j]], expect, epsilon = 1e-13 * expect.abs());
                // v-average preserved pointwise
                let avg_after = weights[0] * plane[[0, j]] + weights[1] * plane[[1, j]];
                assert_relative_eq!(avg_after, avg, epsilon = 1e-13 * avg.abs());
            }
        }
    }

    #[test]
    fn ydiffusion_conserves_mass_and_dissipates_entropy() {
        let (st, rho0) = setup(0.1, 8, 96, Transport::MusclMinmod);
        let mut state = st.init_state(&rho0).unwrap();
        // tilt away from equilibrium: bump a y-band
        for mut plane in state.q.axis_iter_mut(Axis(0)) {
            for v in 0..2 {
                for j in 40..48 {
                    plane[[v, j]] *= 1.5;
                }
            }
        }
        let m0 = st.total_mass(&state);
        let e0 = st.relative_entropy(&state);
        for _ in 0..10 {
            let e_prev = st.relative_entropy(&state);
            st.ydiff_only_half(&mut state);
            let e_next = st.relative_entropy(&state);
            assert!(e_next <= e_prev * (1.0 + 1e-14), "entropy rose in y-substep");
        }
        let m1 = st.total_mass(&state);
        assert_relative_eq!(m1, m0, epsilon = 1e-13 * m0);
        assert!(st.relative_entropy(&state) < e0);
        // q = c Q0 is an exact fixed point
        let flat = MacroField::new(vec![2.0; 8], st.grid.length, "flat");
        let mut eq = st.init_state(&flat).unwrap();
        let before = eq.q.clone();
        st.ydiff_only_half(&mut eq);
        let rel = eq
            .q
            .iter()
            .zip(before.iter())
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0_f64, f64::max);
        assert!(rel < 1e-12, "equilibrium moved by {rel}");
    }

    #[test]
    fn full_step_conserves_mass_and_entropy_monotone() {
        for transport in [Transport::Upwind, Transport::MusclMinmod] {
            let (st, rho0) = setup(0.1, 32, 96, transport);
            let mut state = st.init_state(&rho0).unwrap();
            let m0 = st.total_mass(&state);
            let mut e_prev = st.relative_entropy(&state);
            for _ in 0..20 {
                st.step(&mut state).unwrap();
                let m = st.total_mass(&state);
                assert_relative_eq!(m, m0, epsilon = 1e-12 * m0);
                let e = st.relative_entropy(&state);
                assert!(
                    e <= e_prev * (1.0 + 1e-12),
                    "entropy rose: {e} > {e_prev} ({transport:?})"
                );
                e_prev = e;
            }
            // max principle with the sharp initial bound
            assert!(st.sup_ratio(&state, state.b_sup) <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn weighted_density_matches_rho0_at_t0_and_mass_conserved() {
        let (st, rho0) = setup(0.1, 32, 96, Transport::MusclMinmod);
        let mut state = st.init_state(&rho0).unwrap();
        let wd = st.weighted_density(&state);
        for i in 0..32 {
            assert_relative_eq!(wd.values[i], rho0.values[i], epsilon = 1e-12);
        }
        let w0 = st.weighted_mass(&state);
        for _ in 0..30 {
            st.step(&mut state).unwrap();
        }
        let w1 = st.weighted_mass(&state);
        assert_relative_eq!(w1, w0, epsilon = 1e-10 * w0);
    }

    #[test]
    fn homogeneous_run_weighted_density_flat() {
        let (st, _) = setup(0.2, 16, 64, Transport::MusclMinmod);
        let rho0 = MacroField::new(vec![1.7; 16], st.grid.length, "flat");
        let mut state = st.init_state(&rho0).unwrap();
        for _ in 0..10 {
            st.step(&mut state).unwrap();
        }
        let wd = st.weighted_density(&state);
        for v in &wd.values {
            assert_relative_eq!(*v, 1.7, epsilon = 1e-10);
        }
    }

    #[test]
    fn entropy_budget_closes() {
        // relaxation-only budget closes to high accuracy at small tau
        let (st, rho0) = setup(1.0, 8, 64, Transport::MusclMinmod);
        let mut state = st.init_state(&rho0).unwrap();
        for mut plane in state.q.axis_iter_mut(Axis(0)) {
            for j in 0..64 {
                plane[[0, j]] *= 1.4;
            }
        }
        let e0 = st.relative_entropy(&state);
        let tau = 1e-4;
        // closed-form drop of the exact substep
        let predicted = st.relaxation_entropy_drop(&state, tau);
        let before = state.clone();
        st.relax_only(&mut state, tau);
        let de = st.relative_entropy(&state) - e0;
        assert_relative_eq!(de, predicted, epsilon = 1e-12 * e0);
        // trapezoid budget: dE + tau * Diss_L ~ 0 to O((rate*tau)^3)
        let (_, il0) = st.dissipation_forms(&before);
        let (_, il1) = st.dissipation_forms(&state);
        let diss = st.ctx.relax_coeff() * (il0 + il1);
        let closure = (de + tau * diss).abs() / de.abs();
        assert!(closure < 1e-6, "budget closure {closure}");
    }

    #[test]
    fn full_step_budget_within_splitting_error() {
        // the residual is splitting error plus the transport scheme's own
        // numerical dissipation; both shrink under refinement
        let mut resids = Vec::new();
        for (nx, ny) in [(32usize, 64usize), (64, 96)] {
            let (st, rho0) = setup(0.2, nx, ny, Transport::MusclMinmod);
            let mut state = st.init_state(&rho0).unwrap();
            for _ in 0..3 {
                st.step(&mut state).unwrap();
            }
            let before = state.clone();
            st.step(&mut state).unwrap();
            let (de, dy, dl) = st.entropy_budget(&before, &state);
            assert!(dy >= 0.0 && dl >= 0.0);
            // the scheme only ever dissipates beyond the accounted terms
            let resid = de + st.grid.dt * (dy + dl);
            assert!(resid <= 1e-12 * de.abs(), "budget residual has wrong sign: {resid}");
            resids.push((resid.abs(), de.abs(), st.grid.dt * (dy + dl)));
        }
        eprintln!("budget refinement: {resids:?}");
        // refinement shrinks the relative residual
        let r0 = resids[0].0 / resids[0].1;
        let r1 = resids[1].0 / resids[1].1;
        assert!(r1 < r0, "residual did not shrink: {r0} -> {r1}");
        assert!(r1 < 0.2, "relative residual too large at fine grid: {r1}");
    }

    #[test]
    fn stationary_budget_is_zero() {
        let (st, _) = setup(0.2, 8, 64, Transport::MusclMinmod);
        let rho0 = MacroField::new(vec![1.0; 8], st.grid.length, "flat");
        let mut state = st.init_state(&rho0).unwrap();
        let before = state.clone();
        st.step(&mut state).unwrap();
        let (de, dy, dl) = st.entropy_budget(&before, &state);
        let e = st.relative_entropy(&before);
        assert!(de.abs() < 1e-12 * e);
        assert!(dy.abs() < 1e-12 * e && dl.abs() < 1e-12 * e);
    }

    #[test]
    fn cfl_violation_refused() {
        let coeffs = CoefficientSet::new(CoefficientParams::reference()).unwrap();
        let ctx = ScalingContext::new(&coeffs, 0.05, 1).unwrap();
        let y = YGrid::sinh_graded(32, 1e6, coeffs.m0).unwrap();
        let vq = build_sphere_quadrature(1, coeffs.v0, 2).unwrap();
        let grid = PhaseGrid::new(1.0, 16, vq, y, 1.0).unwrap();
        match Stepper::new(grid, coeffs, ctx, Transport::Upwind) {
            Err(FrackinError::TimeStep(msg)) => assert!(msg.contains("reduce dt")),
            Err(e) => panic!("expected CFL refusal, got {e:?}"),
            Ok(_) => panic!("expected CFL refusal, got a stepper"),
        }
    }

    #[test]
    fn pure_ydiffusion_entropy_decreases_from_bump() {
        let (st, _) = setup(0.1, 8, 96, Transport::MusclMinmod);
        let rho0 = MacroField::new(vec![1.0; 8], st.grid.length, "flat");
        let mut state = st.init_state(&rho0).unwrap();
        // delta-like bump times a Q0 tilt
        let jmid = 48;
        for mut plane in state.q.axis_iter_mut(Axis(0)) {
            for v in 0..2 {
                plane[[v, jmid]] *= 3.0;
            }
        }
        let mut prev = st.relative_entropy(&state);
        for _ in 0..20 {
            st.ydiff_only_half(&mut state);
            let e = st.relative_entropy(&state);
            assert!(e < prev, "entropy must strictly decrease");
            prev = e;
        }
    }
}
