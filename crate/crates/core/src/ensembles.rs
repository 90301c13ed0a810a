//! Sparse signature ensembles.
//!
//! A signature matrix `s` has one row per chip and one column per user. Each
//! non-zero entry is a gain factor `xi` drawn from a symmetric distribution of
//! mean square `1/L`. Three ensembles differ in how degrees are constrained:
//!
//! * `regular`: every chip has exactly `L` users and every user `C` chips;
//! * `partly_regular`: every user has exactly `C` chips, chip degrees Poisson(L);
//! * `irregular`: each entry present independently with probability `C/N`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag, SimRng};

const MAX_RESAMPLES: usize = 50;
const POISSON_TAIL: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Regular,
    PartlyRegular,
    Irregular,
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnsembleKind::Regular => "regular",
            EnsembleKind::PartlyRegular => "partly_regular",
            EnsembleKind::Irregular => "irregular",
        })
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(EnsembleKind::Regular),
            "partly_regular" | "partly-regular" => Ok(EnsembleKind::PartlyRegular),
            "irregular" => Ok(EnsembleKind::Irregular),
            other => Err(Error::parse("ensemble kind", format!("unknown kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    /// `±scale` with equal probability.
    Bpsk,
    /// Always `+scale`.
    Constant,
}

impl FromStr for GainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpsk" => Ok(GainKind::Bpsk),
            "constant" => Ok(GainKind::Constant),
            other => Err(Error::parse("gain kind", format!("unknown kind {other:?}"))),
        }
    }
}

/// Distribution of the non-zero signature entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainDistribution {
    pub kind: GainKind,
    pub scale: f64,
}

impl GainDistribution {
    /// Gains normalised to mean square `1 / chip_degree`.
    pub fn normalized(kind: GainKind, chip_degree: f64) -> Self {
        GainDistribution {
            kind,
            scale: 1.0 / chip_degree.sqrt(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            GainKind::Bpsk => {
                if rng.random::<bool>() {
                    self.scale
                } else {
                    -self.scale
                }
            }
            GainKind::Constant => self.scale,
        }
    }

    pub fn mean_square(&self) -> f64 {
        self.scale * self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Chip,
    User,
}

/// A degree distribution over the non-negative integers.
#[derive(Debug, Clone, PartialEq)]
pub enum DegreeDistribution {
    PointMass(usize),
    Poisson { mean: f64, cdf: Vec<f64> },
}

impl DegreeDistribution {
    pub fn point(k: usize) -> Self {
        DegreeDistribution::PointMass(k)
    }

    pub fn poisson(mean: f64) -> Self {
        let mut cdf = Vec::new();
        let mut p = (-mean).exp();
        let mut acc = 0.0;
        let mut k = 0usize;
        loop {
            acc += p;
            cdf.push(acc);
            k += 1;
            p *= mean / k as f64;
            if 1.0 - acc < POISSON_TAIL && k as f64 > mean {
                break;
            }
            if k > 10_000 {
                break;
            }
        }
        DegreeDistribution::Poisson { mean, cdf }
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match self {
            DegreeDistribution::PointMass(d) => f64::from(u8::from(*d == k)),
            DegreeDistribution::Poisson { mean, .. } => {
                if *mean == 0.0 {
                    return f64::from(u8::from(k == 0));
                }
                let ln = k as f64 * mean.ln() - mean - ln_factorial(k);
                ln.exp()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DegreeDistribution::PointMass(d) => *d as f64,
            DegreeDistribution::Poisson { mean, .. } => *mean,
        }
    }

    pub fn max_degree(&self) -> usize {
        match self {
            DegreeDistribution::PointMass(d) => *d,
            DegreeDistribution::Poisson { cdf, .. } => cdf.len() - 1,
        }
    }

    /// `(degree, probability)` pairs, truncated where the remaining tail mass
    /// falls below `tail`.
    pub fn table(&self, tail: f64) -> Vec<(usize, f64)> {
        match self {
            DegreeDistribution::PointMass(d) => vec![(*d, 1.0)],
            DegreeDistribution::Poisson { .. } => {
                let mut out = Vec::new();
                let mut acc = 0.0;
                let mut k = 0;
                while 1.0 - acc >= tail || (k as f64) <= self.mean() {
                    let p = self.pmf(k);
                    out.push((k, p));
                    acc += p;
                    k += 1;
                    if k > 10_000 {
                        break;
                    }
                }
                out
            }
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            DegreeDistribution::PointMass(d) => *d,
            DegreeDistribution::Poisson { cdf, .. } => {
                let u: f64 = rng.random();
                cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
            }
        }
    }
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// Degree structure and gain law of a code ensemble, independent of size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeEnsemble {
    pub kind: EnsembleKind,
    /// Mean number of chips per user, `C`.
    pub user_degree: f64,
    /// Mean number of users per chip, `L`.
    pub chip_degree: f64,
    pub gain: GainKind,
}

impl CodeEnsemble {
    pub fn new(kind: EnsembleKind, user_degree: f64, chip_degree: f64) -> Result<Self> {
        let e = CodeEnsemble {
            kind,
            user_degree,
            chip_degree,
            gain: GainKind::Bpsk,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn regular(c: usize, l: usize) -> Self {
        CodeEnsemble {
            kind: EnsembleKind::Regular,
            user_degree: c as f64,
            chip_degree: l as f64,
            gain: GainKind::Bpsk,
        }
    }

    pub fn with_gain(mut self, gain: GainKind) -> Self {
        self.gain = gain;
        self
    }

    /// Users per chip, `alpha = L / C`.
    pub fn load(&self) -> f64 {
        self.chip_degree / self.user_degree
    }

    pub fn gain_distribution(&self) -> GainDistribution {
        GainDistribution::normalized(self.gain, self.chip_degree)
    }

    pub fn validate(&self) -> Result<()> {
        let (c, l) = (self.user_degree, self.chip_degree);
        if !(c.is_finite() && c > 0.0 && l.is_finite() && l > 0.0) {
            return Err(Error::InvalidEnsemble(format!("C = {c} and L = {l} must be positive")));
        }
        let integral = |v: f64| v.fract() == 0.0;
        match self.kind {
            EnsembleKind::Regular if !(integral(c) && integral(l)) => Err(Error::InvalidEnsemble(
                format!("regular ensemble needs integer C and L, got {c} and {l}"),
            )),
            EnsembleKind::PartlyRegular if !integral(c) => Err(Error::InvalidEnsemble(format!(
                "partly regular ensemble needs integer C, got {c}"
            ))),
            _ => Ok(()),
        }
    }

    /// Full or excess degree distribution for one side of the graph.
    pub fn degree_distribution(&self, role: Role, excess: bool) -> DegreeDistribution {
        let (fixed, mean) = match (self.kind, role) {
            (EnsembleKind::Regular, Role::Chip) => (true, self.chip_degree),
            (EnsembleKind::Regular | EnsembleKind::PartlyRegular, Role::User) => {
                (true, self.user_degree)
            }
            (_, Role::Chip) => (false, self.chip_degree),
            (EnsembleKind::Irregular, Role::User) => (false, self.user_degree),
        };
        if fixed {
            let d = mean as usize;
            DegreeDistribution::point(if excess { d.saturating_sub(1) } else { d })
        } else {
            // Poisson excess equals the full distribution.
            DegreeDistribution::poisson(mean)
        }
    }
}

/// A code ensemble at a concrete system size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub ensemble: CodeEnsemble,
    /// Chips, `N`.
    pub chips: usize,
    /// Users, `K`.
    pub users: usize,
}

impl EnsembleSpec {
    pub fn new(ensemble: CodeEnsemble, chips: usize, users: usize) -> Result<Self> {
        let spec = EnsembleSpec {
            ensemble,
            chips,
            users,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Regular `C:L` code with `chips` chips and the matching number of users.
    pub fn regular(c: usize, l: usize, chips: usize) -> Result<Self> {
        if (chips * l) % c != 0 {
            return Err(Error::InvalidEnsemble(format!(
                "N*L = {} not divisible by C = {c}",
                chips * l
            )));
        }
        Self::new(CodeEnsemble::regular(c, l), chips, chips * l / c)
    }

    pub fn load(&self) -> f64 {
        self.users as f64 / self.chips as f64
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        let (n, k) = (self.chips, self.users);
        if n == 0 || k == 0 {
            return Err(Error::InvalidEnsemble("N and K must be positive".into()));
        }
        let c = self.ensemble.user_degree;
        let l = self.ensemble.chip_degree;
        if self.ensemble.kind == EnsembleKind::Regular {
            let (ci, li) = (c as usize, l as usize);
            if k * ci != n * li {
                return Err(Error::Infeasible {
                    users_times_c: k * ci,
                    chips_times_l: n * li,
                });
            }
            if ci > n || li > k {
                return Err(Error::InvalidEnsemble(format!(
                    "degrees C = {ci}, L = {li} exceed sizes N = {n}, K = {k}"
                )));
            }
            return Ok(());
        }
        let lhs = k as f64 * c;
        let rhs = n as f64 * l;
        if (lhs - rhs).abs() > 1e-9 * rhs {
            return Err(Error::InvalidEnsemble(format!(
                "load mismatch: K/N = {} but L/C = {}",
                k as f64 / n as f64,
                l / c
            )));
        }
        if c > n as f64 {
            return Err(Error::InvalidEnsemble(format!("C = {c} exceeds N = {n}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub chip: usize,
    pub user: usize,
    pub gain: f64,
}

/// Sparse chip-by-user signature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureMatrix {
    pub chips: usize,
    pub users: usize,
    pub kind: EnsembleKind,
    pub user_degree: f64,
    pub chip_degree: f64,
    /// Sorted by `(chip, user)`, at most one entry per pair.
    pub entries: Vec<Entry>,
}

impl SignatureMatrix {
    /// Builds a matrix from arbitrary entries; rejects repeated pairs.
    pub fn from_entries(
        chips: usize,
        users: usize,
        kind: EnsembleKind,
        user_degree: f64,
        chip_degree: f64,
        mut entries: Vec<Entry>,
    ) -> Result<Self> {
        entries.sort_by(|a, b| (a.chip, a.user).cmp(&(b.chip, b.user)));
        for w in entries.windows(2) {
            if (w[0].chip, w[0].user) == (w[1].chip, w[1].user) {
                return Err(Error::InvalidEnsemble(format!(
                    "repeated entry ({}, {})",
                    w[0].chip, w[0].user
                )));
            }
        }
        for e in &entries {
            if e.chip >= chips || e.user >= users {
                return Err(Error::InvalidEnsemble(format!(
                    "entry ({}, {}) outside {chips}x{users}",
                    e.chip, e.user
                )));
            }
            if e.gain == 0.0 || !e.gain.is_finite() {
                return Err(Error::InvalidEnsemble(format!("entry gain {} is not a nonzero finite value", e.gain)));
            }
        }
        Ok(SignatureMatrix {
            chips,
            users,
            kind,
            user_degree,
            chip_degree,
            entries,
        })
    }

    pub fn chip_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.chips];
        for e in &self.entries {
            d[e.chip] += 1;
        }
        d
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.users];
        for e in &self.entries {
            d[e.user] += 1;
        }
        d
    }

    /// `y = s b` without noise.
    pub fn apply(&self, bits: &[i8]) -> Vec<f64> {
        let mut y = vec![0.0; self.chips];
        for e in &self.entries {
            y[e.chip] += e.gain * f64::from(bits[e.user]);
        }
        y
    }

    /// Text form: header `N K kind C L`, then `mu k xi` per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {}\n",
            self.chips, self.users, self.kind, self.user_degree, self.chip_degree
        );
        for e in &self.entries {
            out.push_str(&format!("{} {} {:.16e}\n", e.chip, e.user, e.gain));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("matrix header", "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(Error::parse("matrix header", format!("expected 5 fields, got {header:?}")));
        }
        let chips = parse_field(h[0], "N")?;
        let users = parse_field(h[1], "K")?;
        let kind: EnsembleKind = h[2].parse()?;
        let user_degree = parse_field(h[3], "C")?;
        let chip_degree = parse_field(h[4], "L")?;
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::parse(format!("matrix line {}", i + 2), format!("{line:?}")));
            }
            entries.push(Entry {
                chip: parse_field(f[0], "mu")?,
                user: parse_field(f[1], "k")?,
                gain: parse_field(f[2], "xi")?,
            });
        }
        Self::from_entries(chips, users, kind, user_degree, chip_degree, entries)
    }
}

pub(crate) fn parse_field<T: FromStr>(s: &str, what: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.parse::<T>()
        .map_err(|e| Error::parse(what.to_string(), format!("{s:?}: {e}")))
}

/// Samples a signature matrix from the ensemble; deterministic in `seed`.
pub fn sample_signature(spec: &EnsembleSpec, seed: u64) -> Result<SignatureMatrix> {
    spec.validate()?;
    let mut structure_rng = rng::stream(seed, tag::STRUCTURE);
    let pairs = match spec.ensemble.kind {
        EnsembleKind::Regular => regular_structure(spec, &mut structure_rng)?,
        EnsembleKind::PartlyRegular => partly_regular_structure(spec, &mut structure_rng),
        EnsembleKind::Irregular => irregular_structure(spec, &mut structure_rng),
    };
    let gains = spec.ensemble.gain_distribution();
    let mut gain_rng = rng::stream(seed, tag::GAINS);
    let mut entries: Vec<Entry> = pairs
        .into_iter()
        .map(|(chip, user)| Entry { chip, user, gain: 0.0 })
        .collect();
    entries.sort_by(|a, b| (a.chip, a.user).cmp(&(b.chip, b.user)));
    for e in &mut entries {
        e.gain = gains.sample(&mut gain_rng);
    }
    SignatureMatrix::from_entries(
        spec.chips,
        spec.users,
        spec.ensemble.kind,
        spec.ensemble.user_degree,
        spec.ensemble.chip_degree,
        entries,
    )
}

/// Configuration model with parallel-edge repair by double edge swaps.
fn regular_structure(spec: &EnsembleSpec, rng: &mut SimRng) -> Result<Vec<(usize, usize)>> {
    let c = spec.ensemble.user_degree as usize;
    let l = spec.ensemble.chip_degree as usize;
    let edges = spec.users * c;
    for _ in 0..MAX_RESAMPLES {
        let mut chip_stubs: Vec<usize> = (0..spec.chips).flat_map(|a| std::iter::repeat_n(a, l)).collect();
        // Fisher-Yates on the chip side; user stubs stay in order.
        for i in (1..chip_stubs.len()).rev() {
            let j = rng.random_range(0..=i);
            chip_stubs.swap(i, j);
        }
        let mut pairs: Vec<(usize, usize)> = chip_stubs
            .into_iter()
            .enumerate()
            .map(|(stub, chip)| (chip, stub / c))
            .collect();
        if repair_parallel_edges(&mut pairs, 100 * edges, rng) {
            return Ok(pairs);
        }
    }
    Err(Error::RepairFailed {
        attempts: MAX_RESAMPLES,
    })
}

/// Removes repeated `(chip, user)` pairs while preserving every degree.
/// Returns false if the swap budget runs out.
fn repair_parallel_edges(pairs: &mut [(usize, usize)], budget: usize, rng: &mut SimRng) -> bool {
    let mut count: HashMap<(usize, usize), u32> = HashMap::with_capacity(pairs.len());
    for &p in pairs.iter() {
        *count.entry(p).or_insert(0) += 1;
    }
    let mut bad: Vec<usize> = Vec::new();
    let mut seen: HashMap<(usize, usize), u32> = HashMap::new();
    for (i, &p) in pairs.iter().enumerate() {
        let s = seen.entry(p).or_insert(0);
        *s += 1;
        if *s > 1 {
            bad.push(i);
        }
    }
    let mut attempts = 0;
    while let Some(&e) = bad.last() {
        if attempts >= budget {
            return false;
        }
        attempts += 1;
        let f = rng.random_range(0..pairs.len());
        let (a, i) = pairs[e];
        let (b, j) = pairs[f];
        if a == b || i == j {
            continue;
        }
        if count.contains_key(&(a, j)) || count.contains_key(&(b, i)) {
            continue;
        }
        for old in [(a, i), (b, j)] {
            let n = count.get_mut(&old).expect("edge present");
            *n -= 1;
            if *n == 0 {
                count.remove(&old);
            }
        }
        pairs[e] = (a, j);
        pairs[f] = (b, i);
        count.insert((a, j), 1);
        count.insert((b, i), 1);
        bad.pop();
        // `f` may itself have been a recorded duplicate; it is now simple.
        if let Some(pos) = bad.iter().position(|&x| x == f) {
            bad.swap_remove(pos);
        }
    }
    true
}

fn partly_regular_structure(spec: &EnsembleSpec, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let c = spec.ensemble.user_degree as usize;
    let mut pairs = Vec::with_capacity(spec.users * c);
    for user in 0..spec.users {
        for chip in index::sample(rng, spec.chips, c) {
            pairs.push((chip, user));
        }
    }
    pairs
}

/// Independent Bernoulli(C/N) entries, visited by geometric skipping.
fn irregular_structure(spec: &EnsembleSpec, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let p = spec.ensemble.user_degree / spec.chips as f64;
    let total = spec.chips as u64 * spec.users as u64;
    let mut pairs = Vec::new();
    if p >= 1.0 {
        for chip in 0..spec.chips {
            for user in 0..spec.users {
                pairs.push((chip, user));
            }
        }
        return pairs;
    }
    let log_q = (-p).ln_1p();
    let mut pos: u64 = 0;
    loop {
        let u: f64 = rng.random();
        // Number of failures before the next success.
        let skip = ((1.0 - u).ln() / log_q).floor();
        if !skip.is_finite() || skip >= (total - pos) as f64 {
            break;
        }
        pos += skip as u64;
        pairs.push(((pos / spec.users as u64) as usize, (pos % spec.users as u64) as usize));
        pos += 1;
        if pos >= total {
            break;
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mean_and_se;

    #[test]
    fn regular_small_has_exact_degrees() {
        let spec = EnsembleSpec::new(CodeEnsemble::regular(3, 3), 8, 8).unwrap();
        for seed in 0..20 {
            let s = sample_signature(&spec, seed).unwrap();
            assert_eq!(s.entries.len(), 24);
            assert!(s.chip_degrees().iter().all(|&d| d == 3));
            assert!(s.user_degrees().iter().all(|&d| d == 3));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = EnsembleSpec::regular(6, 3, 40).unwrap();
        assert_eq!(sample_signature(&spec, 11).unwrap(), sample_signature(&spec, 11).unwrap());
        assert_ne!(sample_signature(&spec, 11).unwrap(), sample_signature(&spec, 12).unwrap());
    }

    #[test]
    fn infeasible_regular_rejected() {
        let err = EnsembleSpec::new(CodeEnsemble::regular(3, 3), 8, 9).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn non_integer_regular_rejected() {
        assert!(CodeEnsemble::new(EnsembleKind::Regular, 2.5, 3.0).is_err());
        assert!(CodeEnsemble::new(EnsembleKind::PartlyRegular, 2.5, 3.0).is_err());
        assert!(CodeEnsemble::new(EnsembleKind::Irregular, 2.5, 3.0).is_ok());
    }

    #[test]
    fn irregular_zero_degree_fraction_is_poisson() {
        let e = CodeEnsemble::new(EnsembleKind::Irregular, 3.0, 3.0).unwrap();
        let spec = EnsembleSpec::new(e, 10_000, 10_000).unwrap();
        let s = sample_signature(&spec, 5).unwrap();
        let zero = s.user_degrees().iter().filter(|&&d| d == 0).count() as f64 / 1e4;
        assert!((zero - (-3.0f64).exp()).abs() < 0.01, "zero fraction {zero}");
        let mean_row = s.entries.len() as f64 / 1e4;
        assert!((mean_row - 3.0).abs() < 0.1);
    }

    #[test]
    fn partly_regular_column_degrees_fixed_rows_poisson() {
        let e = CodeEnsemble::new(EnsembleKind::PartlyRegular, 3.0, 3.0).unwrap();
        let spec = EnsembleSpec::new(e, 10_000, 10_000).unwrap();
        let s = sample_signature(&spec, 6).unwrap();
        assert!(s.user_degrees().iter().all(|&d| d == 3));
        let rows: Vec<f64> = s.chip_degrees().iter().map(|&d| d as f64).collect();
        let (mean, _) = mean_and_se(&rows);
        let var = rows.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rows.len() - 1) as f64;
        assert!((var - 3.0).abs() < 0.2, "row variance {var}");
    }

    #[test]
    fn bpsk_gains_have_exact_mean_square() {
        let spec = EnsembleSpec::regular(3, 3, 3000).unwrap();
        let s = sample_signature(&spec, 1).unwrap();
        let ms = s.entries.iter().map(|e| e.gain * e.gain).sum::<f64>() / s.entries.len() as f64;
        assert!((ms - 1.0 / 3.0).abs() < 1e-12);
        let mean = s.entries.iter().map(|e| e.gain).sum::<f64>() / s.entries.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!(s.entries.iter().all(|e| e.gain != 0.0));
    }

    #[test]
    fn degree_distributions() {
        let reg = CodeEnsemble::regular(3, 3);
        assert_eq!(reg.degree_distribution(Role::Chip, true), DegreeDistribution::PointMass(2));
        assert_eq!(reg.degree_distribution(Role::User, false), DegreeDistribution::PointMass(3));
        let irr = CodeEnsemble::new(EnsembleKind::Irregular, 3.0, 3.0).unwrap();
        let full = irr.degree_distribution(Role::Chip, false);
        let excess = irr.degree_distribution(Role::Chip, true);
        assert_eq!(full, excess);
        assert!((excess.pmf(2) - 4.5 * (-3.0f64).exp()).abs() < 1e-15);
        let pr = CodeEnsemble::new(EnsembleKind::PartlyRegular, 3.0, 3.0).unwrap();
        assert_eq!(pr.degree_distribution(Role::User, true), DegreeDistribution::PointMass(2));
        assert!(matches!(pr.degree_distribution(Role::Chip, true), DegreeDistribution::Poisson { .. }));
    }

    #[test]
    fn poisson_sampler_matches_mean() {
        let d = DegreeDistribution::poisson(3.0);
        let mut r = rng::stream(1, 0);
        let n = 200_000;
        let s: usize = (0..n).map(|_| d.sample(&mut r)).sum();
        assert!((s as f64 / n as f64 - 3.0).abs() < 0.02);
        let table = d.table(1e-12);
        let mass: f64 = table.iter().map(|(_, p)| p).sum();
        assert!((1.0 - mass).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let spec = EnsembleSpec::regular(3, 3, 30).unwrap();
        let mut s = sample_signature(&spec, 2).unwrap();
        s.entries[0].gain = 0.1 + 0.2;
        let back = SignatureMatrix::from_text(&s.to_text()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn malformed_text_rejected() {
        assert!(SignatureMatrix::from_text("").is_err());
        assert!(SignatureMatrix::from_text("2 2 regular 1 1\n0 0\n").is_err());
        assert!(SignatureMatrix::from_text("2 2 regular 1 1\n0 0 1.0\n0 0 1.0\n").is_err());
    }
}
