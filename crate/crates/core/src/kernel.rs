//! Chip- and user-side cavity updates in the field domain.
//!
//! A chip with received value `y`, coupling `k = beta / (2 sigma^2)` and
//! neighbours `l` with gains `xi_l` and incoming fields `h_l` sends to a target
//! neighbour `0` (gain `xi_0`) the field
//!
//! ```text
//! u = 1/2 ln [ sum_{tau: tau_0=+1} w(tau) / sum_{tau: tau_0=-1} w(tau) ]
//! w(tau) = exp(-k (y - xi_0 tau_0 - sum_l xi_l tau_l)^2 + sum_l h_l tau_l)
//! ```
//!
//! which is the log-domain form of the trace ratio with weights
//! `prod_l (1 + tau_l x_l)`, `x_l = tanh h_l`. Population dynamics uses the
//! same kernel with the gauged received value `y = omega + sum_l xi_l`.

use crate::math::{ln_cosh, LogSumExp};

/// Maximum incoming degree handled by the fixed-size scratch buffers.
pub const MAX_KERNEL_DEGREE: usize = 24;

/// Field sent by a chip to one neighbour.
pub fn chip_field(y: f64, coupling: f64, target_gain: f64, gains: &[f64], fields: &[f64]) -> f64 {
    debug_assert_eq!(gains.len(), fields.len());
    let n = gains.len();
    let mut s: f64 = gains.iter().sum();
    let mut t: f64 = fields.iter().sum();
    let mut plus = LogSumExp::new();
    let mut minus = LogSumExp::new();
    let mut state: u32 = 0;
    for step in 0..(1u32 << n) {
        if step > 0 {
            let j = step.trailing_zeros() as usize;
            state ^= 1 << j;
            let sign = if state & (1 << j) != 0 { -2.0 } else { 2.0 };
            s += sign * gains[j];
            t += sign * fields[j];
        }
        let rp = y - s - target_gain;
        let rm = y - s + target_gain;
        plus.add(-coupling * rp * rp + t);
        minus.add(-coupling * rm * rm + t);
    }
    0.5 * (plus.value() - minus.value())
}

/// Chip field together with `d u / d h_j` for every incoming neighbour.
#[derive(Debug, Clone, Default)]
pub struct ChipSensitivity {
    /// Log weights, then conditional probabilities.
    log_w: Vec<f64>,
    pub field: f64,
    /// `d u / d h_j`.
    pub field_derivatives: Vec<f64>,
}

impl ChipSensitivity {
    pub fn compute(&mut self, y: f64, coupling: f64, target_gain: f64, gains: &[f64], fields: &[f64]) {
        let n = gains.len();
        let configs = 1usize << n;
        // index = (mask << 1) | (tau_0 == -1); mask bit j set <=> tau_j = -1
        self.log_w.clear();
        self.log_w.resize(2 * configs, 0.0);
        for mask in 0..configs {
            let mut s = 0.0;
            let mut t = 0.0;
            for j in 0..n {
                let tau = if mask & (1 << j) != 0 { -1.0 } else { 1.0 };
                s += gains[j] * tau;
                t += fields[j] * tau;
            }
            let rp = y - s - target_gain;
            let rm = y - s + target_gain;
            self.log_w[mask << 1] = -coupling * rp * rp + t;
            self.log_w[(mask << 1) | 1] = -coupling * rm * rm + t;
        }
        let mut plus = LogSumExp::new();
        let mut minus = LogSumExp::new();
        for (i, &v) in self.log_w.iter().enumerate() {
            if i & 1 == 0 {
                plus.add(v);
            } else {
                minus.add(v);
            }
        }
        let a_plus = plus.value();
        let a_minus = minus.value();
        self.field = 0.5 * (a_plus - a_minus);
        // conditional probabilities given tau_0, stored in place of the log weights
        for (i, v) in self.log_w.iter_mut().enumerate() {
            *v = (*v - if i & 1 == 0 { a_plus } else { a_minus }).exp();
        }
        self.field_derivatives.clear();
        for j in 0..n {
            let bit = 1usize << (j + 1);
            // Sum only the probabilities of the less likely value of tau_j,
            // which avoids cancelling two numbers close to one.
            let rare_is_minus = fields[j] >= 0.0;
            let (mut p_plus, mut p_minus) = (0.0, 0.0);
            for (i, &p) in self.log_w.iter().enumerate() {
                if (i & bit != 0) == rare_is_minus {
                    if i & 1 == 0 {
                        p_plus += p;
                    } else {
                        p_minus += p;
                    }
                }
            }
            let d = if rare_is_minus { p_minus - p_plus } else { p_plus - p_minus };
            self.field_derivatives.push(d);
        }
    }

    /// `d x_out / d x_j` in the magnetisation domain.
    pub fn magnetization_derivative(&self, j: usize, incoming_field: f64) -> f64 {
        field_to_magnetization_jacobian(self.field, incoming_field) * self.field_derivatives[j]
    }
}

/// `(1 - tanh^2 out) / (1 - tanh^2 in)`, evaluated without overflow.
#[inline]
pub fn field_to_magnetization_jacobian(out_field: f64, in_field: f64) -> f64 {
    (2.0 * (ln_cosh(in_field) - ln_cosh(out_field))).exp()
}

/// User-side combination: the outgoing field is the sum of incoming fields.
#[inline]
pub fn user_field(fields: &[f64]) -> f64 {
    fields.iter().sum()
}

/// Magnetisation form of the user update,
/// `[prod(1+x) - prod(1-x)] / [prod(1+x) + prod(1-x)]`.
pub fn user_magnetization(incoming: &[f64]) -> f64 {
    let h: f64 = incoming.iter().map(|&x| crate::math::field_of(x)).sum();
    h.tanh()
}

/// Magnetisation form of the chip update; inputs are clamped to `|x| <= 1 - 1e-12`.
pub fn chip_magnetization(y: f64, coupling: f64, target_gain: f64, gains: &[f64], incoming: &[f64]) -> f64 {
    let fields: Vec<f64> = incoming.iter().map(|&x| crate::math::field_of(x)).collect();
    chip_field(y, coupling, target_gain, gains, &fields).tanh()
}
