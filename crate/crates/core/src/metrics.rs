//! Performance and thermodynamic measures of replica-symmetric solutions.
//!
//! Free energy, energy and entropy are per chip with natural logarithms;
//! spectral efficiency and mutual information are in bits per chip.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::kernel::chip_field;
use crate::math::{binary_entropy_bits_of_field, ln_cosh, ln_one_plus_tanh_product, LogSumExp, Moments};
use crate::popdyn::{error_indicator, ChipDraw, Disorder, ModelParams, Population, RsSolution};
use crate::rng::{self, derive_seed, tag};
use crate::stability::LambdaEstimate;
use rand::Rng;

pub const DEFAULT_SAMPLES: usize = 1_000_000;

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    fn of(m: &Moments) -> Self {
        Estimate {
            value: m.mean(),
            se: m.standard_error(),
        }
    }
}

/// `ln sum_tau exp(-k r^2 + sum h tau)` for a chip with all neighbours summed
/// over, `r = y - sum xi tau`, and the posterior mean of `r^2`.
fn chip_trace(y: f64, coupling: f64, gains: &[f64], fields: &[f64]) -> (f64, f64) {
    let n = gains.len();
    let mut s: f64 = gains.iter().sum();
    let mut t: f64 = fields.iter().sum();
    let mut logs = Vec::with_capacity(1 << n);
    let mut r2 = Vec::with_capacity(1 << n);
    let mut state: u32 = 0;
    for step in 0..(1u32 << n) {
        if step > 0 {
            let j = step.trailing_zeros() as usize;
            state ^= 1 << j;
            let sign = if state & (1 << j) != 0 { -2.0 } else { 2.0 };
            s += sign * gains[j];
            t += sign * fields[j];
        }
        let r = y - s;
        logs.push(-coupling * r * r + t);
        r2.push(r * r);
    }
    let mut acc = LogSumExp::new();
    logs.iter().for_each(|&v| acc.add(v));
    let z = acc.value();
    let mean_r2 = logs.iter().zip(&r2).map(|(&l, &q)| (l - z).exp() * q).sum();
    (z, mean_r2)
}

/// Samples of the chip term: `(ln Tr chi, posterior mean energy of the chip)`.
fn chip_term_samples(w: &Population, params: &ModelParams, samples: usize, seed: u64) -> (Moments, Moments) {
    let disorder = Disorder::new(params);
    let mut r = rng::stream(seed, tag::ESTIMATE);
    let mut draw = ChipDraw::default();
    let mut lt = Moments::default();
    let mut en = Moments::default();
    let k = params.coupling();
    for _ in 0..samples {
        draw.sample(w, &disorder, &disorder.chip_full, &mut r);
        let y = draw.omega + draw.gains.iter().sum::<f64>();
        let (z, r2) = chip_trace(y, k, &draw.gains, &draw.fields);
        let norm: f64 = draw.fields.iter().map(|&h| ln_cosh(h)).sum();
        lt.push(z - norm);
        en.push(r2 / (2.0 * params.sigma0_sq));
    }
    (lt, en)
}

/// Components of the free energy, each an average over samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergy {
    /// `-L ln 2 + <ln Tr chi>`.
    pub chip_term: Estimate,
    /// `-L <ln(1 + x xhat)>`.
    pub edge_term: Estimate,
    /// `alpha <ln(prod(1 + xhat) + prod(1 - xhat))>`.
    pub user_term: Estimate,
    pub f: Estimate,
}

/// Free energy per chip of a pair of populations.
pub fn free_energy_rs(w: &Population, what: &Population, params: &ModelParams, samples: usize, seed: u64) -> Result<FreeEnergy> {
    if samples < 2 || w.is_empty() || what.is_empty() {
        return Err(Error::Config("free energy needs at least two samples and non-empty populations".into()));
    }
    let l = params.ensemble.chip_degree;
    let alpha = params.ensemble.load();
    let disorder = Disorder::new(params);
    let ((chip, _), (edge, user)) = rayon::join(
        || chip_term_samples(w, params, samples, derive_seed(&[seed, 1])),
        || {
            rayon::join(
                || {
                    let mut r = rng::stream(derive_seed(&[seed, 2]), tag::ESTIMATE);
                    let mut m = Moments::default();
                    for _ in 0..samples {
                        let (_, h) = w.pick(&mut r);
                        let (_, u) = what.pick(&mut r);
                        m.push(ln_one_plus_tanh_product(h, u));
                    }
                    m
                },
                || {
                    let mut r = rng::stream(derive_seed(&[seed, 3]), tag::ESTIMATE);
                    let mut m = Moments::default();
                    for _ in 0..samples {
                        let c = disorder.user_full.sample(&mut r);
                        let mut sum = 0.0;
                        let mut norm = 0.0;
                        for _ in 0..c {
                            let (_, u) = what.pick(&mut r);
                            sum += u;
                            norm += ln_cosh(u);
                        }
                        m.push(LN_2 + ln_cosh(sum) - norm);
                    }
                    m
                },
            )
        },
    );
    let chip_term = Estimate {
        value: -l * LN_2 + chip.mean(),
        se: chip.standard_error(),
    };
    let edge_term = Estimate {
        value: -l * edge.mean(),
        se: l * edge.standard_error(),
    };
    let user_term = Estimate {
        value: alpha * user.mean(),
        se: alpha * user.standard_error(),
    };
    let g = chip_term.value + edge_term.value + user_term.value;
    let se = (chip_term.se.powi(2) + edge_term.se.powi(2) + user_term.se.powi(2)).sqrt();
    Ok(FreeEnergy {
        chip_term,
        edge_term,
        user_term,
        f: Estimate {
            value: -g / params.beta,
            se: se / params.beta,
        },
    })
}

/// Energy per chip: exactly 1/2 in Nishimori mode, sampled otherwise.
pub fn energy_rs(w: &Population, params: &ModelParams, samples: usize, seed: u64) -> Estimate {
    if params.is_nishimori() {
        Estimate::exact(0.5)
    } else {
        energy_sampled(w, params, samples, seed)
    }
}

/// Posterior mean of `(omega + sum (1 - tau) xi)^2 / (2 sigma0^2)` over sampled chips.
pub fn energy_sampled(w: &Population, params: &ModelParams, samples: usize, seed: u64) -> Estimate {
    let (_, en) = chip_term_samples(w, params, samples, derive_seed(&[seed, 1]));
    Estimate::of(&en)
}

/// `s = beta (e - f)` and `nu = alpha - s / ln 2`.
pub fn entropy_and_nu(f: f64, e: f64, beta: f64, alpha: f64) -> (f64, f64) {
    let s = beta * (e - f);
    (s, alpha - s / LN_2)
}

/// Fraction of negative overlaps, ties counting one half.
pub fn ber(overlaps: &[f64]) -> f64 {
    overlaps.iter().map(|&m| error_indicator(m)).sum::<f64>() / overlaps.len() as f64
}

/// Bit error rate with the last chip message integrated out exactly against
/// the empirical distribution of `What`.
pub fn ber_conditional(what: &Population, disorder: &Disorder, samples: usize, seed: u64) -> Estimate {
    let mut sorted = what.fields().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut r = rng::stream(seed, tag::ESTIMATE);
    let mut m = Moments::default();
    for _ in 0..samples {
        let c = disorder.user_full.sample(&mut r);
        if c == 0 {
            m.push(0.5);
            continue;
        }
        let mut s = 0.0;
        for _ in 1..c {
            s += what.pick(&mut r).1;
        }
        let below = sorted.partition_point(|&u| u < -s);
        let upto = sorted.partition_point(|&u| u <= -s);
        m.push((below as f64 + 0.5 * (upto - below) as f64) / n);
    }
    Estimate::of(&m)
}

/// Bit error rate with every chip message recomputed from `W`.
///
/// Each chip noise comes from an even mixture of the true law and the true
/// law shifted to the single-user error boundary `omega = -xi_0`, and is
/// reweighted by the likelihood ratio (at most 2 per chip). The single-user
/// decision on the same noise serves as a control variate with its exact
/// conditional mean `erfc(sqrt(sum xi^2 / 2 sigma0^2)) / 2`, so only the
/// excess over the interference-free error is sampled. Resolves rates far
/// below `1 / M`.
pub fn ber_importance(w: &Population, params: &ModelParams, disorder: &Disorder, samples: usize, seed: u64) -> Estimate {
    let mut r = rng::stream(seed, tag::ESTIMATE);
    let mut draw = ChipDraw::default();
    let k = params.coupling();
    let two_var = 2.0 * params.sigma0_sq;
    let mut m = Moments::default();
    for _ in 0..samples {
        let c = disorder.user_full.sample(&mut r);
        if c == 0 {
            m.push(0.5);
            continue;
        }
        let mut h = 0.0;
        let mut h_single = 0.0;
        let mut energy = 0.0;
        let mut log_weight = 0.0;
        for _ in 0..c {
            draw.sample(w, disorder, &disorder.chip_excess, &mut r);
            let xi = draw.target_gain;
            if r.random::<bool>() {
                draw.omega -= xi;
            }
            let om = draw.omega;
            // ln of shifted over true density at omega
            let a = (om * om - (om + xi) * (om + xi)) / two_var;
            let softplus = if a > 0.0 { a + (-a).exp().ln_1p() } else { a.exp().ln_1p() };
            log_weight += LN_2 - softplus;
            h += chip_field(draw.received(), k, xi, &draw.gains, &draw.fields);
            h_single += xi * (om + xi);
            energy += xi * xi;
        }
        let control = 0.5 * erfc((energy / two_var).sqrt());
        let excess = error_indicator(h) - error_indicator(h_single);
        m.push(control + if excess != 0.0 { excess * log_weight.exp() } else { 0.0 });
    }
    Estimate::of(&m)
}

/// Signal-to-noise ratio of one user, `(1 / alpha) / (2 sigma0^2)`.
pub fn user_snr(sigma0_sq: f64, alpha: f64) -> f64 {
    1.0 / (2.0 * alpha * sigma0_sq)
}

/// Bit error rate of a single user alone on the Gaussian channel.
pub fn single_user_ber(sigma0_sq: f64, alpha: f64) -> f64 {
    0.5 * erfc(user_snr(sigma0_sq, alpha).sqrt())
}

/// Multiuser efficiency: the SNR fraction a lone user would need for the same
/// error rate. Returns `(1, true)` when `p_b = 0`.
pub fn mue(p_b: f64, sigma0_sq: f64, alpha: f64) -> Result<(f64, bool)> {
    if !(0.0..=0.5 + 1e-12).contains(&p_b) {
        return Err(Error::Config(format!("bit error rate {p_b} outside [0, 1/2]")));
    }
    if p_b == 0.0 {
        return Ok((1.0, true));
    }
    let q = erfc_inv((2.0 * p_b).min(1.0));
    Ok((q * q / user_snr(sigma0_sq, alpha), false))
}

/// `alpha (1 - <H2((1 + m) / 2)>)` in bits per chip.
pub fn mutual_info(overlaps: &[f64], alpha: f64) -> f64 {
    let h = overlaps
        .iter()
        .map(|&m| binary_entropy_bits_of_field(crate::math::field_of(m)))
        .sum::<f64>()
        / overlaps.len() as f64;
    alpha * (1.0 - h)
}

/// [`mutual_info`] from overlap fields, with a standard error.
pub fn mutual_info_fields(fields: &[f64], alpha: f64) -> Estimate {
    let mut m = Moments::default();
    fields.iter().for_each(|&h| m.push(1.0 - binary_entropy_bits_of_field(h)));
    Estimate {
        value: alpha * m.mean(),
        se: alpha * m.standard_error(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionTag {
    Good,
    Bad,
    Unique,
}

impl fmt::Display for SolutionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolutionTag::Good => "good",
            SolutionTag::Bad => "bad",
            SolutionTag::Unique => "unique",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Samples per free-energy term.
    pub samples: usize,
    pub overlap_samples: usize,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            samples: DEFAULT_SAMPLES,
            overlap_samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub psd_db: f64,
    pub f: Estimate,
    pub e: Estimate,
    pub s: Estimate,
    pub nu: Estimate,
    pub mi: Estimate,
    pub p_b: Estimate,
    pub mue: f64,
    pub mue_saturated: bool,
    pub lambda: Option<LambdaEstimate>,
    pub solution: SolutionTag,
    pub converged: bool,
    pub sweeps: usize,
}

pub const CSV_HEADER: &str = "psd_db,f,f_se,e,s,s_se,nu,mi,mi_se,p_b,mue,lambda,lambda_se,solution,converged,sweeps";

impl PerformanceReport {
    pub fn evaluate(sol: &RsSolution, tag: SolutionTag, lambda: Option<LambdaEstimate>, opts: &MetricOptions, seed: u64) -> Result<Self> {
        let params = *sol.params();
        let st = &sol.state;
        let alpha = params.ensemble.load();
        let fe = free_energy_rs(st.user_population(), st.chip_population(), &params, opts.samples, seed)?;
        let e = energy_rs(st.user_population(), &params, opts.samples, derive_seed(&[seed, 4]));
        let (s, nu) = entropy_and_nu(fe.f.value, e.value, params.beta, alpha);
        let s_se = params.beta * (fe.f.se.powi(2) + e.se.powi(2)).sqrt();
        let mut r = rng::stream(derive_seed(&[seed, 5]), tag::ESTIMATE);
        let fields = st.overlap_fields(opts.overlap_samples, &mut r);
        let mi = mutual_info_fields(&fields, alpha);
        let p_b = ber_importance(st.user_population(), &params, st.disorder(), opts.overlap_samples, derive_seed(&[seed, 6]));
        let (mue_value, saturated) = mue(p_b.value.min(0.5), params.sigma0_sq, alpha)?;
        Ok(PerformanceReport {
            psd_db: params.psd_db(),
            f: fe.f,
            e,
            s: Estimate { value: s, se: s_se },
            nu: Estimate {
                value: nu,
                se: s_se / LN_2,
            },
            mi,
            p_b,
            mue: mue_value,
            mue_saturated: saturated,
            lambda,
            solution: tag,
            converged: sol.converged,
            sweeps: sol.sweeps(),
        })
    }

    /// Negative entropy, i.e. spectral efficiency above the load.
    pub fn negative_entropy(&self) -> bool {
        self.s.value < 0.0
    }

    pub fn csv_row(&self) -> String {
        let (l, lse) = self.lambda.map_or((f64::NAN, f64::NAN), |l| (l.mean, l.mean_se));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.psd_db,
            self.f.value,
            self.f.se,
            self.e.value,
            self.s.value,
            self.s.se,
            self.nu.value,
            self.mi.value,
            self.mi.se,
            self.p_b.value,
            self.mue,
            l,
            lse,
            self.solution,
            self.converged,
            self.sweeps
        )
    }
}

/// The report with the smaller spectral efficiency.
pub fn thermodynamic<'a>(a: &'a PerformanceReport, b: &'a PerformanceReport) -> &'a PerformanceReport {
    if b.nu.value < a.nu.value {
        b
    } else {
        a
    }
}
