//! Monte Carlo simulation of the microscopic velocity-jump process:
//! ballistic runs at speed v0 interrupted by tumbles at rate
//! Lambda(Y) eps^(-1-mu), with the internal state following the Ito
//! diffusion whose stationary law is Q0.
//!
//! Tumble times are exact (Poisson thinning against the global bound
//! sup Lambda); the internal state uses Euler-Maruyama with a per-particle
//! adaptive step tied to the local relaxation scale, reflecting at +/- y_max.
//! Every particle owns a counter-based stream keyed by (seed, index), so
//! results do not depend on how the ensemble is partitioned across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coefficients::{CoefficientSet, ScalingContext};
use crate::error::{FrackinError, Result};
use crate::grid::MacroField;
use crate::quad;

/// One walker: slab position, velocity on the sphere, internal state.
#[derive(Debug, Clone, Copy)]
pub struct Particle {
    pub x: f64,
    pub v: [f64; 2],
    pub y: f64,
    pub run_start_time: f64,
}

/// The ensemble plus its stream bookkeeping.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    pub time: f64,
    pub seed: u64,
    pub ctx: ScalingContext,
    pub y_max: f64,
    /// Completed run durations (macroscopic time), when logging is on.
    pub run_log: Option<Vec<f64>>,
}

/// Simulation controls; the defaults are the production path.
#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Adaptive step safety fraction of the local relaxation time.
    pub theta: f64,
    /// Hard cap on the internal-state step (macroscopic time).
    pub dt_cap: f64,
    /// Freeze the internal state (two-level thinning control runs).
    pub freeze_internal: bool,
    /// Log completed run durations.
    pub log_runs: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            theta: 0.05,
            dt_cap: f64::INFINITY,
            freeze_internal: false,
            log_runs: false,
        }
    }
}

/// Tabulated inverse CDF of Q0 with exact power-law tail inversion.
pub struct Q0Sampler {
    knots_u: Vec<f64>,
    knots_y: Vec<f64>,
    u_left: f64,
    u_right: f64,
    sigma: f64,
    c_minus: f64,
    c_plus: f64,
    y_max: f64,
}

impl Q0Sampler {
    pub fn build(coeffs: &CoefficientSet, y_max: f64, knots: usize) -> Result<Self> {
        let edge = coeffs.blend_edge();
        let sigma = coeffs.sigma;
        // exact tail CDF values at the blend edges
        let u_left = coeffs.c_minus * edge.powf(1.0 - sigma) / (sigma - 1.0);
        let u_right = 1.0 - coeffs.c_plus * edge.powf(1.0 - sigma) / (sigma - 1.0);
        // cumulative quadrature over the middle on a fine uniform grid
        let mut ys = Vec::with_capacity(knots);
        let mut us = Vec::with_capacity(knots);
        let mut acc = u_left;
        ys.push(-edge);
        us.push(acc);
        let n = knots.max(256);
        let h = 2.0 * edge / n as f64;
        for k in 0..n {
            let a = -edge + k as f64 * h;
            let b = a + h;
            let (m, _) = quad::integrate(|y| coeffs.eval_q0(y), a, b, 1e-12)?;
            acc += m;
            ys.push(b);
            us.push(acc);
        }
        Ok(Q0Sampler {
            knots_u: us,
            knots_y: ys,
            u_left,
            u_right,
            sigma,
            c_minus: coeffs.c_minus,
            c_plus: coeffs.c_plus,
            y_max,
        })
    }

    /// Inverse CDF; u in (0,1).
    pub fn sample(&self, u: f64) -> f64 {
        let y = if u <= self.u_left {
            // c^- |y|^(1-sigma)/(sigma-1) = u
            -((self.sigma - 1.0) * u / self.c_minus).powf(1.0 / (1.0 - self.sigma))
        } else if u >= self.u_right {
            ((self.sigma - 1.0) * (1.0 - u) / self.c_plus).powf(1.0 / (1.0 - self.sigma))
        } else {
            // monotone table lookup with linear interpolation
            let idx = self.knots_u.partition_point(|&k| k < u);
            let i = idx.clamp(1, self.knots_u.len() - 1);
            let (u0, u1) = (self.knots_u[i - 1], self.knots_u[i]);
            let (y0, y1) = (self.knots_y[i - 1], self.knots_y[i]);
            y0 + (u - u0) / (u1 - u0) * (y1 - y0)
        };
        y.clamp(-self.y_max, self.y_max)
    }

    /// CDF for Kolmogorov-Smirnov checks (exact tails, table interior).
    pub fn cdf(&self, y: f64) -> f64 {
        let edge = *self.knots_y.last().unwrap();
        if y <= -edge {
            self.c_minus * (-y).powf(1.0 - self.sigma) / (self.sigma - 1.0)
        } else if y >= edge {
            1.0 - self.c_plus * y.powf(1.0 - self.sigma) / (self.sigma - 1.0)
        } else {
            let idx = self.knots_y.partition_point(|&k| k < y);
            let i = idx.clamp(1, self.knots_y.len() - 1);
            let (y0, y1) = (self.knots_y[i - 1], self.knots_y[i]);
            let (u0, u1) = (self.knots_u[i - 1], self.knots_u[i]);
            u0 + (y - y0) / (y1 - y0) * (u1 - u0)
        }
    }
}

fn stream_for(seed: u64, index: u64) -> ChaCha12Rng {
    // SplitMix-style mix so neighboring indices decorrelate
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut w = z;
        w = (w ^ (w >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        w = (w ^ (w >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        w ^= w >> 31;
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

impl ParticleEnsemble {
    /// Draws N particles with x ~ rho0 (inverse CDF), v uniform on the
    /// sphere and y ~ Q0.
    pub fn init(
        coeffs: &CoefficientSet,
        ctx: ScalingContext,
        rho0: &MacroField,
        n: usize,
        y_max: f64,
        seed: u64,
        log_runs: bool,
    ) -> Result<Self> {
        let sampler = Q0Sampler::build(coeffs, y_max, 8192)?;
        // cumulative table of rho0 over cells for x-sampling
        let dx = rho0.dx();
        let total: f64 = rho0.values.iter().sum::<f64>() * dx;
        if total <= 0.0 {
            return Err(FrackinError::InvalidInput("rho0 must have positive mass".into()));
        }
        let mut cum = Vec::with_capacity(rho0.nx() + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for &v in &rho0.values {
            acc += v * dx / total;
            cum.push(acc);
        }
        let particles: Vec<Particle> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_for(seed, i as u64);
                let ux: f64 = rng.gen();
                let k = cum.partition_point(|&c| c < ux).clamp(1, rho0.nx()) - 1;
                let frac = (ux - cum[k]) / (cum[k + 1] - cum[k]);
                let x = (k as f64 + frac) * dx;
                let v = sample_velocity(&mut rng, ctx.dim, 1.0);
                let uy: f64 = rng.gen();
                let y = sampler.sample(uy);
                Particle {
                    x,
                    v,
                    y,
                    run_start_time: 0.0,
                }
            })
            .collect();
        Ok(ParticleEnsemble {
            particles,
            time: 0.0,
            seed,
            ctx,
            y_max,
            run_log: if log_runs { Some(Vec::new()) } else { None },
        })
    }
}

fn sample_velocity<R: Rng>(rng: &mut R, dim: usize, v0: f64) -> [f64; 2] {
    match dim {
        1 => {
            if rng.gen::<bool>() {
                [v0, 0.0]
            } else {
                [-v0, 0.0]
            }
        }
        _ => {
            let theta: f64 = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
            [v0 * theta.cos(), v0 * theta.sin()]
        }
    }
}

/// Ito drift of the internal state: b = kappa (D' + D (ln Q0)').
fn drift(coeffs: &CoefficientSet, kappa: f64, y: f64) -> f64 {
    kappa * (coeffs.eval_d_deriv(y) + coeffs.eval_d(y) * coeffs.eval_q0_deriv(y) / coeffs.eval_q0(y))
}

/// Local step bound: a fraction of the band-relaxation time at depth y,
/// also limited so the drift cannot jump more than a band fraction.
fn local_dt(coeffs: &CoefficientSet, kappa: f64, y: f64, theta: f64) -> f64 {
    let scale = (coeffs.m0 * coeffs.m0 + y * y).sqrt();
    let d = coeffs.eval_d(y);
    let tau_diff = 0.25 * scale * scale / (2.0 * kappa * d);
    let b = drift(coeffs, kappa, y).abs().max(1e-300);
    let tau_drift = 0.25 * scale / b;
    theta * tau_diff.min(tau_drift)
}

/// Advances the ensemble to time T.
pub fn simulate(ens: &mut ParticleEnsemble, coeffs: &CoefficientSet, t_end: f64, opts: &SimOptions) -> Result<()> {
    if t_end < ens.time {
        return Err(FrackinError::InvalidInput("t_end before current time".into()));
    }
    let kappa = ens.ctx.ydiff_coeff(coeffs.s_exp);
    // refuse a cap that cannot resolve the drift near the truncation edge
    if opts.dt_cap.is_finite() {
        let bound = local_dt(coeffs, kappa, ens.y_max, 1.0);
        if opts.dt_cap > bound && !opts.freeze_internal {
            return Err(FrackinError::TimeStep(format!(
                "dt_sde cap {:.3e} exceeds the drift stability bound {bound:.3e} near y_max",
                opts.dt_cap
            )));
        }
    }
    let lam_max = coeffs.lambda_max();
    let jump_rate = lam_max * ens.ctx.relax_coeff();
    let trans = ens.ctx.transport_coeff();
    let dim = ens.ctx.dim;
    let v0 = coeffs.v0;
    let y_max = ens.y_max;
    let seed = ens.seed;
    let t0 = ens.time;
    let log_runs = ens.run_log.is_some();
    let theta = opts.theta;
    let freeze = opts.freeze_internal;
    let dt_cap = opts.dt_cap;

    let results: Vec<(Particle, Vec<f64>)> = ens
        .particles
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            // stream continues deterministically from a phase counter so
            // repeated calls with the same seed and times are reproducible
            let mut rng = stream_for(seed, i as u64 ^ 0x5bf0_3635_u64.wrapping_mul((t0.to_bits() >> 17) | 1));
            let mut part = *p;
            let mut runs = Vec::new();
            let mut t = t0;
            let mut next_candidate = t + rand_exp(&mut rng) / jump_rate;
            while t < t_end {
                let target = next_candidate.min(t_end);
                // advance the internal state and position to `target`
                while t < target {
                    let dt = if freeze {
                        target - t
                    } else {
                        local_dt(coeffs, kappa, part.y, theta)
                            .min(dt_cap)
                            .min(target - t)
                    };
                    if !freeze {
                        let b = drift(coeffs, kappa, part.y);
                        let dcoef = (2.0 * kappa * coeffs.eval_d(part.y)).sqrt();
                        let dw: f64 = rng.sample::<f64, _>(StandardNormal) * dt.sqrt();
                        let mut ynew = part.y + b * dt + dcoef * dw;
                        // reflect at the truncation barriers
                        loop {
                            if ynew > y_max {
                                ynew = 2.0 * y_max - ynew;
                            } else if ynew < -y_max {
                                ynew = -2.0 * y_max - ynew;
                            } else {
                                break;
                            }
                        }
                        part.y = ynew;
                    }
                    part.x += trans * part.v[0] * dt;
                    t += dt;
                }
                if (next_candidate - t).abs() < 1e-14 && t < t_end {
                    // candidate event: accept with probability Lambda/sup
                    let u: f64 = rng.gen();
                    if u < coeffs.eval_lambda(part.y) / lam_max {
                        if log_runs {
                            runs.push(t - part.run_start_time);
                        }
                        part.v = sample_velocity(&mut rng, dim, v0);
                        part.run_start_time = t;
                    }
                    next_candidate = t + rand_exp(&mut rng) / jump_rate;
                }
            }
            (part, runs)
        })
        .collect();

    ens.time = t_end;
    let mut log_acc = Vec::new();
    for (i, (p, runs)) in results.into_iter().enumerate() {
        ens.particles[i] = p;
        log_acc.extend(runs);
    }
    if let Some(log) = ens.run_log.as_mut() {
        log.extend(log_acc);
    }
    Ok(())
}

fn rand_exp<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen::<f64>();
    -(1.0 - u).ln()
}

/// Periodic histogram of particle positions, normalized to unit mass.
pub fn empirical_density(ens: &ParticleEnsemble, length: f64, bins: usize) -> MacroField {
    let mut counts = vec![0.0_f64; bins];
    let h = length / bins as f64;
    for p in &ens.particles {
        let mut x = p.x.rem_euclid(length);
        if x >= length {
            x -= length;
        }
        let k = ((x / h) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let n = ens.particles.len() as f64;
    for c in &mut counts {
        *c /= n * h;
    }
    MacroField::new(counts, length, "empirical density")
}

/// Kolmogorov-Smirnov statistic of `samples` against the CDF `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// Hill tail-exponent estimate with a bootstrap confidence interval and a
/// stability flag.
#[derive(Debug, Clone)]
pub struct TailEstimate {
    pub exponent: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// False when the estimate drifts with the order-statistic fraction
    /// (light tails drift upward as k shrinks).
    pub heavy_tail: bool,
    pub k_used: usize,
}

fn hill_at(sorted_desc: &[f64], k: usize) -> f64 {
    let xk = sorted_desc[k];
    let s: f64 = sorted_desc[..k].iter().map(|x| (x / xk).ln()).sum();
    k as f64 / s
}

/// Hill estimator on the largest k_fraction of the samples.
pub fn run_tail_estimate(run_log: &[f64], k_fraction: f64, seed: u64) -> Result<TailEstimate> {
    let m = run_log.len();
    if m < 1000 {
        return Err(FrackinError::InvalidInput(format!(
            "tail estimation needs at least 1000 runs, got {m}"
        )));
    }
    let mut sorted: Vec<f64> = run_log.iter().cloned().filter(|x| *x > 0.0).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = ((m as f64 * k_fraction) as usize).clamp(10, sorted.len() - 1);
    let alpha = hill_at(&sorted, k);
    // estimator drift between k and k/2 flags non-polynomial tails
    let alpha_half = hill_at(&sorted, (k / 2).max(10));
    let heavy_tail = ((alpha_half - alpha) / alpha).abs() < 0.08;
    // percentile bootstrap
    let mut rng = stream_for(seed, 0xb005_u64);
    let nboot = 200;
    let mut boots = Vec::with_capacity(nboot);
    for _ in 0..nboot {
        let mut resample: Vec<f64> = (0..m).map(|_| sorted[rng.gen_range(0..m)]).collect();
        resample.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let kk = k.min(resample.len() - 1);
        boots.push(hill_at(&resample, kk));
    }
    boots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(TailEstimate {
        exponent: alpha,
        ci_low: boots[(0.025 * nboot as f64) as usize],
        ci_high: boots[(0.975 * nboot as f64) as usize],
        heavy_tail,
        k_used: k,
    })
}
