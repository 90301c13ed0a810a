//! Local stability of a replica-symmetric solution.
//!
//! Each population member carries a squared-perturbation weight that is
//! propagated through the linearised updates alongside the host run. The
//! growth rate of the mean weight per sweep estimates the largest eigenvalue
//! of the linearised map; negative means stable.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{field_to_magnetization_jacobian, ChipSensitivity};
use crate::popdyn::{ChipDraw, Disorder, Population, RsSolution, UserDraw};

/// Log growth recorded when every weight vanished in a half sweep.
pub const FROZEN_LOG_GROWTH: f64 = -1.0e3;
pub const DEFAULT_BURN_IN: usize = 50;
pub const DEFAULT_WINDOW: usize = 200;

/// Perturbation weights and the per-sweep log growth factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationState {
    /// Weights attached to `W`.
    pub user_weights: Vec<f64>,
    /// Weights attached to `What`.
    pub chip_weights: Vec<f64>,
    /// `(ln rho_chip, ln rho_user)` per sweep, before renormalisation.
    pub trace: Vec<(f64, f64)>,
}

impl PerturbationState {
    /// Weights initialised as squared standard normals.
    pub fn new<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let mut draw = || {
            let z: f64 = rng.sample(StandardNormal);
            z * z
        };
        let user_weights = (0..size).map(|_| draw()).collect();
        let chip_weights = (0..size).map(|_| draw()).collect();
        PerturbationState {
            user_weights,
            chip_weights,
            trace: Vec::new(),
        }
    }

    /// Installs new chip-side weights, renormalised to mean one; returns `ln rho`.
    pub fn set_chip_weights(&mut self, w: Vec<f64>) -> f64 {
        self.chip_weights = w;
        renormalize(&mut self.chip_weights)
    }

    pub fn set_user_weights(&mut self, w: Vec<f64>) -> f64 {
        self.user_weights = w;
        renormalize(&mut self.user_weights)
    }

    pub fn record(&mut self, chip: f64, user: f64) {
        self.trace.push((chip, user));
    }
}

fn renormalize(w: &mut [f64]) -> f64 {
    let rho = w.iter().sum::<f64>() / w.len() as f64;
    if rho > 0.0 && rho.is_finite() {
        w.iter_mut().for_each(|v| *v /= rho);
        rho.ln()
    } else {
        w.iter_mut().for_each(|v| *v = 1.0);
        FROZEN_LOG_GROWTH
    }
}

/// Chip update plus `vhat = sum_j v_j (d xhat / d x_j)^2`.
pub fn perturbed_chip_update<R: Rng + ?Sized>(
    w: &Population,
    user_weights: &[f64],
    coupling: f64,
    disorder: &Disorder,
    draw: &mut ChipDraw,
    sens: &mut ChipSensitivity,
    rng: &mut R,
) -> (f64, f64) {
    draw.sample(w, disorder, &disorder.chip_excess, rng);
    sens.compute(draw.received(), coupling, draw.target_gain, &draw.gains, &draw.fields);
    let v = draw
        .indices
        .iter()
        .zip(&draw.fields)
        .enumerate()
        .map(|(j, (&i, &h))| user_weights[i] * sens.magnetization_derivative(j, h).powi(2))
        .sum();
    (sens.field, v)
}

/// User update plus `v = sum_c vhat_c (d x / d xhat_c)^2`.
pub fn perturbed_user_update<R: Rng + ?Sized>(
    what: &Population,
    chip_weights: &[f64],
    disorder: &Disorder,
    draw: &mut UserDraw,
    rng: &mut R,
) -> (f64, f64) {
    draw.sample(what, &disorder.user_excess, rng);
    let h = draw.field();
    let v = draw
        .indices
        .iter()
        .zip(&draw.fields)
        .map(|(&c, &u)| chip_weights[c] * field_to_magnetization_jacobian(h, u).powi(2))
        .sum();
    (h, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    /// Full-cycle growth measured at the chip phase.
    pub chip: f64,
    pub chip_se: f64,
    /// Full-cycle growth measured at the user phase.
    pub user: f64,
    pub user_se: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub window: usize,
}

impl LambdaEstimate {
    /// Sign not resolved at two standard errors.
    pub fn is_noisy(&self) -> bool {
        self.mean.abs() < 2.0 * self.mean_se
    }

    pub fn is_stable(&self) -> bool {
        self.mean < 0.0
    }
}

fn batch_mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let batches = if n >= 20 { 10 } else { n };
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let (_, se) = crate::math::mean_and_se(&means);
    (mean, se)
}

/// Growth rate over the last `window` sweeps of a trace.
pub fn estimate_lambda(trace: &[(f64, f64)], window: usize) -> Result<LambdaEstimate> {
    if window < 2 || window + 1 > trace.len() {
        return Err(Error::Window {
            window,
            available: trace.len().saturating_sub(1),
        });
    }
    let start = trace.len() - window;
    let user: Vec<f64> = (start..trace.len()).map(|t| trace[t].0 + trace[t].1).collect();
    let chip: Vec<f64> = (start..trace.len()).map(|t| trace[t - 1].1 + trace[t].0).collect();
    let both: Vec<f64> = user.iter().zip(&chip).map(|(a, b)| 0.5 * (a + b)).collect();
    let (u, u_se) = batch_mean_and_se(&user);
    let (c, c_se) = batch_mean_and_se(&chip);
    let (m, m_se) = batch_mean_and_se(&both);
    Ok(LambdaEstimate {
        chip: c,
        chip_se: c_se,
        user: u,
        user_se: u_se,
        mean: m,
        mean_se: m_se,
        window,
    })
}

/// Continues a copy of the solution with perturbation tracking and estimates
/// the growth rate after `burn_in` sweeps over `window` sweeps.
pub fn solution_lambda(sol: &RsSolution, burn_in: usize, window: usize) -> Result<LambdaEstimate> {
    let mut state = sol.state.clone();
    state.enable_stability();
    state.run(burn_in + window + 1);
    let trace = &state.perturbation().expect("stability enabled").trace;
    estimate_lambda(trace, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::CodeEnsemble;
    use crate::popdyn::{Init, ModelParams, PopulationDynamics, Side};
    use crate::rng;

    #[test]
    fn renormalised_weights_have_unit_mean() {
        let mut r = rng::stream(1, 2);
        let mut p = PerturbationState::new(1000, &mut r);
        let w: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt() * 3.7).collect();
        let lr = p.set_chip_weights(w);
        assert!(lr.is_finite());
        let mean = p.chip_weights.iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 1e-12);
        assert_eq!(p.set_user_weights(vec![0.0; 1000]), FROZEN_LOG_GROWTH);
    }

    #[test]
    fn saturated_user_side_freezes() {
        // Perturbations cannot pass through inputs with |x| = 1.
        let p = ModelParams::at_psd_db(CodeEnsemble::regular(3, 3), 10.0);
        let d = Disorder::new(&p);
        let what = Population::ferromagnetic(10, Side::Chip);
        let mut draw = UserDraw::default();
        let (_, v) = perturbed_user_update(&what, &[1.0; 10], &d, &mut draw, &mut rng::stream(0, 0));
        assert!(v < 1e-30);
    }

    #[test]
    fn chip_weight_matches_finite_difference() {
        let p = ModelParams::at_psd_db(CodeEnsemble::regular(3, 4), 3.0);
        let d = Disorder::new(&p);
        let w = Population::from_fields(vec![0.3, -0.7, 1.1, 0.05], Side::User);
        let mut draw = ChipDraw::default();
        let mut sens = ChipSensitivity::default();
        let mut r = rng::stream(4, 4);
        let weights = [0.5, 1.5, 2.0, 0.25];
        let (u, v) = perturbed_chip_update(&w, &weights, p.coupling(), &d, &mut draw, &mut sens, &mut r);
        let eps = 1e-6;
        let mut expect = 0.0;
        for j in 0..draw.fields.len() {
            let mut xs: Vec<f64> = draw.fields.iter().map(|h| h.tanh()).collect();
            xs[j] += eps;
            let up = crate::kernel::chip_magnetization(draw.received(), p.coupling(), draw.target_gain, &draw.gains, &xs);
            xs[j] -= 2.0 * eps;
            let dn = crate::kernel::chip_magnetization(draw.received(), p.coupling(), draw.target_gain, &draw.gains, &xs);
            let der = (up - dn) / (2.0 * eps);
            expect += weights[draw.indices[j]] * der * der;
        }
        assert!((v - expect).abs() < 1e-6 * (1.0 + expect), "{v} vs {expect}");
        assert!((u - sens.field).abs() < 1e-15);
    }

    #[test]
    fn lambda_window_and_cycle_definitions() {
        let trace: Vec<(f64, f64)> = (0..11).map(|t| (-0.1 * t as f64, 0.05)).collect();
        let est = estimate_lambda(&trace, 10).unwrap();
        let user_expect = (1..11).map(|t| -0.1 * t as f64 + 0.05).sum::<f64>() / 10.0;
        assert!((est.user - user_expect).abs() < 1e-12);
        assert!((est.chip - user_expect).abs() < 1e-12);
        assert!(estimate_lambda(&trace, 11).is_err());
    }

    #[test]
    fn paramagnetic_solution_is_stable() {
        let p = ModelParams::at_psd_db(CodeEnsemble::regular(3, 3), -5.0);
        let mut run = PopulationDynamics::new(p, 4000, Init::Random, 2);
        run.run(50);
        let sol = RsSolution {
            state: run,
            converged: true,
        };
        let est = solution_lambda(&sol, 10, 40).unwrap();
        assert!(est.mean < 0.0, "{est:?}");
    }

    #[test]
    fn tracking_is_deterministic() {
        let p = ModelParams::at_psd_db(CodeEnsemble::regular(3, 3), 6.0);
        let sol = RsSolution {
            state: PopulationDynamics::new(p, 500, Init::Ferromagnetic, 5),
            converged: false,
        };
        let a = solution_lambda(&sol, 2, 5).unwrap();
        let b = solution_lambda(&sol, 2, 5).unwrap();
        assert_eq!(a, b);
    }
}
