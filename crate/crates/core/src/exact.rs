//! Brute-force posterior by enumeration of all `2^K` bit configurations.
//!
//! Used as the reference for BP on small graphs and for the thermodynamic
//! identities. Configurations are visited in Gray-code order so that each
//! step flips one user and only that user's chip residuals change.

use crate::bp::FactorGraph;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;

pub const DEFAULT_USER_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    pub marginals: Vec<f64>,
    pub log_partition: f64,
    /// Posterior mean of `H`.
    pub mean_energy: f64,
    /// `-sum_tau p ln p`, computed directly from the enumerated probabilities.
    pub entropy: f64,
}

impl ExactPosterior {
    /// Free energy per chip, `-ln Z / (N beta)`.
    pub fn free_energy_per_chip(&self, chips: usize, beta: f64) -> f64 {
        -self.log_partition / (chips as f64 * beta)
    }
}

pub fn enumerate_posterior(graph: &FactorGraph) -> Result<ExactPosterior> {
    enumerate_posterior_capped(graph, DEFAULT_USER_CAP)
}

pub fn enumerate_posterior_capped(graph: &FactorGraph, cap: usize) -> Result<ExactPosterior> {
    let k = graph.users();
    if k > cap || k >= usize::BITS as usize - 1 {
        return Err(Error::EnumerationCap { users: k, cap });
    }
    let beta = graph.beta();
    let inv_two_sigma_sq = 1.0 / (2.0 * graph.sigma_sq());
    let configs = 1usize << k;
    let mut tau = vec![1i8; k];
    let mut residual = graph.residuals(&tau);
    // Per user: (chip, gain) pairs.
    let mut user_chips: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    for a in 0..graph.chips() {
        for e in graph.chip_edges(a) {
            user_chips[graph.edge_user(e)].push((a, graph.edge_gain(e)));
        }
    }
    let mut energies = Vec::with_capacity(configs);
    for step in 0..configs {
        if step > 0 {
            let j = step.trailing_zeros() as usize;
            let old = f64::from(tau[j]);
            tau[j] = -tau[j];
            for &(a, g) in &user_chips[j] {
                residual[a] += 2.0 * g * old;
            }
        }
        let h = residual.iter().map(|r| r * r).sum::<f64>() * inv_two_sigma_sq;
        energies.push(h);
    }
    let log_w: Vec<f64> = energies.iter().map(|h| -beta * h).collect();
    let log_z = log_sum_exp(&log_w);
    let mut marginals = vec![0.0; k];
    let mut mean_energy = 0.0;
    let mut entropy = 0.0;
    let mut gray = 0usize;
    for (step, (&lw, &h)) in log_w.iter().zip(&energies).enumerate() {
        if step > 0 {
            gray ^= 1 << step.trailing_zeros();
        }
        let lp = lw - log_z;
        let p = lp.exp();
        mean_energy += p * h;
        if p > 0.0 {
            entropy -= p * lp;
        }
        for (i, m) in marginals.iter_mut().enumerate() {
            if gray & (1 << i) == 0 {
                *m += p;
            } else {
                *m -= p;
            }
        }
    }
    Ok(ExactPosterior {
        marginals,
        log_partition: log_z,
        mean_energy,
        entropy,
    })
}
