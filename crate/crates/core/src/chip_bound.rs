//! Zero-noise mutual information of a single chip.
//!
//! A chip with `L~` users, BPSK gains and no noise loses, on average over
//! gains and bits, `h(L~) = <log2 #{tau : sum xi tau = sum xi b}>` bits. The
//! mutual information between the bits and the chip output is `L~ - h(L~)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest degree handled by the closed form (binomials stay exact in `u128`).
pub const MAX_CLOSED_FORM_DEGREE: usize = 64;
pub const MAX_BRUTE_FORCE_DEGREE: usize = 16;
const POISSON_TAIL: f64 = 1e-12;

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Explicit finite chip-degree distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipEnsembleSpec {
    pub table: Vec<(usize, f64)>,
    pub mean: f64,
}

impl ChipEnsembleSpec {
    pub fn new(table: Vec<(usize, f64)>, mean: f64) -> Result<Self> {
        let total: f64 = table.iter().map(|t| t.1).sum();
        let m: f64 = table.iter().map(|&(k, p)| k as f64 * p).sum();
        if table.iter().any(|t| t.1 < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble(format!("chip degree probabilities sum to {total}")));
        }
        if (m - mean).abs() > 1e-10 * mean.max(1.0) {
            return Err(Error::InvalidEnsemble(format!("table mean {m} differs from {mean}")));
        }
        if let Some(&(k, _)) = table.iter().find(|t| t.0 > MAX_CLOSED_FORM_DEGREE) {
            return Err(Error::ChipDegreeCap {
                degree: k,
                cap: MAX_CLOSED_FORM_DEGREE,
            });
        }
        Ok(ChipEnsembleSpec { table, mean })
    }

    pub fn regular(l: usize) -> Self {
        ChipEnsembleSpec {
            table: vec![(l, 1.0)],
            mean: l as f64,
        }
    }

    /// Poisson degrees truncated where the remaining tail mass drops below
    /// `1e-12`, then renormalised.
    pub fn poisson(mean: f64) -> Result<Self> {
        let mut table = Vec::new();
        let mut p = (-mean).exp();
        let mut cum = 0.0;
        let mut k = 0;
        while 1.0 - cum >= POISSON_TAIL && k <= MAX_CLOSED_FORM_DEGREE {
            table.push((k, p));
            cum += p;
            k += 1;
            p *= mean / k as f64;
        }
        table.iter_mut().for_each(|t| t.1 /= cum);
        let m = table.iter().map(|&(k, p)| k as f64 * p).sum();
        let spec = ChipEnsembleSpec::new(table, m)?;
        if (m - mean).abs() > 1e-9 * mean.max(1.0) {
            return Err(Error::InvalidEnsemble(format!("truncated Poisson mean {m} for {mean}")));
        }
        Ok(spec)
    }
}

/// Average chip entropy `h(L~)` from the closed form
/// `sum_p 2^-L~ C(L~,p) log2 sum_i C(L~-p,i) C(p,i)`.
pub fn chip_entropy(l: usize) -> Result<f64> {
    if l > MAX_CLOSED_FORM_DEGREE {
        return Err(Error::ChipDegreeCap {
            degree: l,
            cap: MAX_CLOSED_FORM_DEGREE,
        });
    }
    let scale = 0.5f64.powi(l as i32);
    let mut h = 0.0;
    for p in 0..=l {
        let inner: u128 = (0..=p.min(l - p)).map(|i| binomial(l - p, i) * binomial(p, i)).sum();
        h += scale * binomial(l, p) as f64 * (inner as f64).log2();
    }
    Ok(h)
}

/// `I = L - <h(L~)>` in bits.
pub fn chip_mi_zero_noise(spec: &ChipEnsembleSpec) -> Result<f64> {
    let mut loss = 0.0;
    for &(k, p) in &spec.table {
        loss += p * chip_entropy(k)?;
    }
    Ok(spec.mean - loss)
}

/// `h(L~)` by enumerating every gain pattern, bit pattern and candidate
/// configuration with `+-1` gains.
pub fn chip_entropy_brute_force(l: usize) -> Result<f64> {
    if l > MAX_BRUTE_FORCE_DEGREE {
        return Err(Error::ChipDegreeCap {
            degree: l,
            cap: MAX_BRUTE_FORCE_DEGREE,
        });
    }
    let patterns = 1usize << l;
    let mut hist = vec![0u64; 2 * l + 1];
    // weighted[c] = number of (xi, b) pairs whose matching set has c members
    let mut weighted = vec![0u64; patterns + 1];
    for xi in 0..patterns {
        hist.iter_mut().for_each(|h| *h = 0);
        let sign = |j: usize| if xi & (1 << j) != 0 { -1i64 } else { 1 };
        let mut s: i64 = (0..l).map(sign).sum();
        let mut state = 0usize;
        for step in 0..patterns {
            if step > 0 {
                let j = step.trailing_zeros() as usize;
                state ^= 1 << j;
                s += if state & (1 << j) != 0 { -2 * sign(j) } else { 2 * sign(j) };
            }
            hist[(s + l as i64) as usize] += 1;
        }
        // each b lands in the bin of its own sum, so bin s is hit hist[s] times
        for &c in &hist {
            weighted[c as usize] += c;
        }
    }
    let total = (patterns as f64) * (patterns as f64);
    Ok(weighted
        .iter()
        .enumerate()
        .filter(|(c, n)| *c > 1 && **n > 0)
        .map(|(c, &n)| n as f64 * (c as f64).log2())
        .sum::<f64>()
        / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityRow {
    pub degree: usize,
    pub entropy_bits: f64,
    pub mi_bits: f64,
    /// `h(L~+1) + h(L~-1) - 2 h(L~)`.
    pub entropy_second_difference: f64,
    /// Second difference of `L~ - h(L~)`.
    pub mi_second_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub rows: Vec<ConcavityRow>,
    /// Every second difference of `L~ - h(L~)` is non-positive.
    pub mi_concave: bool,
    pub entropy_convex: bool,
}

/// Second-difference table of the brute-force chip entropy for `1 <= L~ < l_max`.
pub fn chip_concavity_check(l_max: usize) -> Result<ConcavityReport> {
    let h = (0..=l_max).map(chip_entropy_brute_force).collect::<Result<Vec<f64>>>()?;
    let rows: Vec<ConcavityRow> = (1..l_max)
        .map(|k| {
            let d2 = h[k + 1] + h[k - 1] - 2.0 * h[k];
            ConcavityRow {
                degree: k,
                entropy_bits: h[k],
                mi_bits: k as f64 - h[k],
                entropy_second_difference: d2,
                mi_second_difference: -d2,
            }
        })
        .collect();
    let tol = 1e-12;
    Ok(ConcavityReport {
        mi_concave: rows.iter().all(|r| r.mi_second_difference <= tol),
        entropy_convex: rows.iter().all(|r| r.entropy_second_difference >= -tol),
        rows,
    })
}

/// One row of the bound table for mean degree `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub mean_degree: usize,
    pub ensemble: &'static str,
    pub mi_bits: f64,
    pub loss_bits: f64,
}

/// Regular and Poisson rows for `L = 1..=l_max`.
pub fn bound_table(l_max: usize) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for l in 1..=l_max {
        for (name, spec) in [("regular", ChipEnsembleSpec::regular(l)), ("poisson", ChipEnsembleSpec::poisson(l as f64)?)] {
            let mi = chip_mi_zero_noise(&spec)?;
            rows.push(BoundRow {
                mean_degree: l,
                ensemble: name,
                mi_bits: mi,
                loss_bits: l as f64 - mi,
            });
        }
    }
    Ok(rows)
}

pub const BOUND_CSV_HEADER: &str = "L,ensemble,I_bits,loss_bits";

pub fn bound_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from(BOUND_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.mean_degree, r.ensemble, r.mi_bits, r.loss_bits));
    }
    out
}

/// Log-log slope of the information per user, `I / L~`, between two degrees.
pub fn mi_per_user_slope(lo: usize, hi: usize) -> Result<f64> {
    let f = |k: usize| chip_entropy(k).map(|h| ((k as f64 - h) / k as f64).ln());
    Ok((f(hi)? - f(lo)?) / ((hi as f64).ln() - (lo as f64).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_degree_values() {
        assert_eq!(chip_entropy_brute_force(1).unwrap(), 0.0);
        assert!((chip_entropy_brute_force(2).unwrap() - 0.5).abs() < 1e-15);
        assert!((chip_mi_zero_noise(&ChipEnsembleSpec::regular(1)).unwrap() - 1.0).abs() < 1e-15);
        assert!((chip_mi_zero_noise(&ChipEnsembleSpec::regular(2)).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(chip_entropy_brute_force(0).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for l in 0..=12 {
            let a = chip_entropy(l).unwrap();
            let b = chip_entropy_brute_force(l).unwrap();
            assert!((a - b).abs() < 1e-12, "L~={l}: {a} vs {b}");
            let mi = chip_mi_zero_noise(&ChipEnsembleSpec::regular(l)).unwrap();
            assert!((mi - (l as f64 - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_sum_is_vandermonde() {
        for l in 0..=40 {
            for p in 0..=l {
                let inner: u128 = (0..=p.min(l - p)).map(|i| binomial(l - p, i) * binomial(p, i)).sum();
                assert_eq!(inner, binomial(l, p));
            }
        }
    }

    #[test]
    fn regular_beats_poisson() {
        for l in 2..=6 {
            let r = chip_mi_zero_noise(&ChipEnsembleSpec::regular(l)).unwrap();
            let p = chip_mi_zero_noise(&ChipEnsembleSpec::poisson(l as f64).unwrap()).unwrap();
            assert!(r > p, "L={l}: {r} vs {p}");
        }
    }

    #[test]
    fn regular_mi_increases_with_degree() {
        let v: Vec<f64> = (1..=20).map(|l| chip_mi_zero_noise(&ChipEnsembleSpec::regular(l)).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn concavity_table() {
        let rep = chip_concavity_check(10).unwrap();
        assert!(rep.mi_concave);
        assert!(rep.entropy_convex);
        assert_eq!(rep.rows.len(), 9);
        assert!((rep.rows[1].entropy_second_difference - (chip_entropy(3).unwrap() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        assert!(ChipEnsembleSpec::new(vec![(1, 0.5), (2, 0.4)], 1.3).is_err());
        assert!(ChipEnsembleSpec::new(vec![(1, 0.5), (3, 0.5)], 2.0).is_ok());
        assert!(ChipEnsembleSpec::new(vec![(1, 0.5), (3, 0.5)], 2.5).is_err());
        assert!(ChipEnsembleSpec::new(vec![(70, 1.0)], 70.0).is_err());
        let p = ChipEnsembleSpec::poisson(10.0).unwrap();
        let total: f64 = p.table.iter().map(|t| t.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(chip_entropy_brute_force(17).is_err());
    }

    #[test]
    fn jensen_gap_vanishes_for_point_mass() {
        let spec = ChipEnsembleSpec::new(vec![(3, 1.0)], 3.0).unwrap();
        assert_eq!(chip_mi_zero_noise(&spec).unwrap(), chip_mi_zero_noise(&ChipEnsembleSpec::regular(3)).unwrap());
    }

    #[test]
    fn bound_csv_layout() {
        let rows = bound_table(3).unwrap();
        assert_eq!(rows.len(), 6);
        let csv = bound_csv(&rows);
        assert!(csv.starts_with("L,ensemble,I_bits,loss_bits\n1,regular,1,0\n"));
        assert!(mi_per_user_slope(4, 12).unwrap() < -0.5);
    }
}
