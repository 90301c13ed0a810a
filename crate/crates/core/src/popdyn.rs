//! Population dynamics for the replica-symmetric saddle-point equations.
//!
//! Two populations of `M` cavity fields stand in for the distributions of
//! user-to-chip messages (`W`, magnetisations `x`) and chip-to-user messages
//! (`What`, magnetisations `xhat`). One sweep recomputes every chip-side value
//! sequentially from freshly sampled quenched disorder and random members of
//! `W`, then every user-side value from random members of `What`. All
//! quantities are in the gauge where the sent bits are all `+1`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{parse_field, CodeEnsemble, DegreeDistribution, GainDistribution, Role};
use crate::error::{Error, Result};
use crate::kernel::{chip_field, ChipSensitivity};
use crate::math::{magnetization, SATURATED_FIELD};
use crate::rng::{self, derive_seed, tag, SimRng};
use crate::stability::{PerturbationState, FROZEN_LOG_GROWTH};

pub const DEFAULT_POPULATION: usize = 50_000;
pub const DEFAULT_MAX_SWEEPS: usize = 2_000;
/// Sweeps after which the random-initialised branch is measured when two solutions coexist.
pub const BAD_SOLUTION_SWEEPS: usize = 500;
pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `W`: user-to-chip messages.
    User,
    /// `What`: chip-to-user messages.
    Chip,
}

impl Side {
    fn label(self) -> &'static str {
        match self {
            Side::User => "user",
            Side::Chip => "chip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Random,
    Ferromagnetic,
}

/// A population of cavity fields. Magnetisations are `tanh` of the stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    fields: Vec<f64>,
    side: Side,
}

impl Population {
    pub fn ferromagnetic(size: usize, side: Side) -> Self {
        Population {
            fields: vec![SATURATED_FIELD; size],
            side,
        }
    }

    /// Magnetisations uniform on `(-1, 1)`.
    pub fn random<R: Rng + ?Sized>(size: usize, side: Side, rng: &mut R) -> Self {
        let fields = (0..size)
            .map(|_| crate::math::field_of(rng.random_range(-1.0..1.0)))
            .collect();
        Population { fields, side }
    }

    pub fn from_fields(fields: Vec<f64>, side: Side) -> Self {
        Population { fields, side }
    }

    pub fn from_magnetizations(values: &[f64], side: Side) -> Self {
        Population {
            fields: values.iter().map(|&x| crate::math::field_of(x)).collect(),
            side,
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn magnetizations(&self) -> impl Iterator<Item = f64> + '_ {
        self.fields.iter().map(|&h| magnetization(h))
    }

    pub fn mean_magnetization(&self) -> f64 {
        self.magnetizations().sum::<f64>() / self.len() as f64
    }

    #[inline]
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let i = rng.random_range(0..self.fields.len());
        (i, self.fields[i])
    }

    /// Checkpoint text: header `M role sweep`, then one stored field per line.
    pub fn to_text(&self, sweep: usize) -> String {
        let mut out = format!("{} {} {}\n", self.len(), self.side.label(), sweep);
        for h in &self.fields {
            out.push_str(&format!("{h:.16e}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<(Self, usize)> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::parse("population header", "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(Error::parse("population header", format!("{header:?}")));
        }
        let size: usize = parse_field(h[0], "M")?;
        let side = match h[1] {
            "user" => Side::User,
            "chip" => Side::Chip,
            other => return Err(Error::parse("population role", format!("{other:?}"))),
        };
        let sweep: usize = parse_field(h[2], "sweep")?;
        let fields = lines.map(|l| parse_field(l, "population value")).collect::<Result<Vec<f64>>>()?;
        if fields.len() != size {
            return Err(Error::Dimension {
                what: "population values",
                expected: size,
                got: fields.len(),
            });
        }
        Ok((Population { fields, side }, sweep))
    }
}

/// Channel and model parameters of one population-dynamics run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub ensemble: CodeEnsemble,
    /// True noise variance.
    pub sigma0_sq: f64,
    /// Inverse temperature; the model noise variance is `sigma0_sq / beta`.
    pub beta: f64,
}

impl ModelParams {
    pub fn nishimori(ensemble: CodeEnsemble, sigma0_sq: f64) -> Self {
        ModelParams {
            ensemble,
            sigma0_sq,
            beta: 1.0,
        }
    }

    pub fn at_psd_db(ensemble: CodeEnsemble, psd_db: f64) -> Self {
        Self::nishimori(ensemble, crate::channel::sigma0_sq_from_psd_db(psd_db))
    }

    pub fn is_nishimori(&self) -> bool {
        self.beta == 1.0
    }

    /// `beta / (2 sigma0^2)`.
    pub fn coupling(&self) -> f64 {
        self.beta / (2.0 * self.sigma0_sq)
    }

    pub fn psd_db(&self) -> f64 {
        10.0 * (1.0 / (2.0 * self.sigma0_sq)).log10()
    }
}

/// Pre-built degree and gain distributions for a run.
#[derive(Debug, Clone)]
pub struct Disorder {
    pub chip_excess: DegreeDistribution,
    pub chip_full: DegreeDistribution,
    pub user_excess: DegreeDistribution,
    pub user_full: DegreeDistribution,
    pub gains: GainDistribution,
    pub sigma0: f64,
}

impl Disorder {
    pub fn new(params: &ModelParams) -> Self {
        let e = &params.ensemble;
        Disorder {
            chip_excess: e.degree_distribution(Role::Chip, true),
            chip_full: e.degree_distribution(Role::Chip, false),
            user_excess: e.degree_distribution(Role::User, true),
            user_full: e.degree_distribution(Role::User, false),
            gains: e.gain_distribution(),
            sigma0: params.sigma0_sq.sqrt(),
        }
    }

    #[inline]
    pub fn noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sigma0 * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Quenched draws for one chip-side update.
#[derive(Debug, Clone, Default)]
pub struct ChipDraw {
    pub target_gain: f64,
    pub gains: Vec<f64>,
    pub fields: Vec<f64>,
    pub indices: Vec<usize>,
    pub omega: f64,
}

impl ChipDraw {
    /// Samples `L~` from the excess degree distribution, `L~ + 1` gains, one
    /// noise value and `L~` members of `w`.
    pub fn sample<R: Rng + ?Sized>(&mut self, w: &Population, disorder: &Disorder, degree: &DegreeDistribution, rng: &mut R) {
        let d = degree.sample(rng);
        self.gains.clear();
        self.fields.clear();
        self.indices.clear();
        self.target_gain = disorder.gains.sample(rng);
        for _ in 0..d {
            self.gains.push(disorder.gains.sample(rng));
        }
        self.omega = disorder.noise(rng);
        for _ in 0..d {
            let (i, h) = w.pick(rng);
            self.indices.push(i);
            self.fields.push(h);
        }
    }

    /// Gauged received value `omega + sum of all gains`.
    pub fn received(&self) -> f64 {
        self.omega + self.target_gain + self.gains.iter().sum::<f64>()
    }
}

/// Quenched draws for one user-side update.
#[derive(Debug, Clone, Default)]
pub struct UserDraw {
    pub fields: Vec<f64>,
    pub indices: Vec<usize>,
}

impl UserDraw {
    pub fn sample<R: Rng + ?Sized>(&mut self, what: &Population, degree: &DegreeDistribution, rng: &mut R) {
        let d = degree.sample(rng);
        self.fields.clear();
        self.indices.clear();
        for _ in 0..d {
            let (i, h) = what.pick(rng);
            self.indices.push(i);
            self.fields.push(h);
        }
    }

    pub fn field(&self) -> f64 {
        self.fields.iter().sum()
    }
}

/// One new chip-side field.
pub fn chip_update<R: Rng + ?Sized>(w: &Population, params: &ModelParams, disorder: &Disorder, draw: &mut ChipDraw, rng: &mut R) -> f64 {
    draw.sample(w, disorder, &disorder.chip_excess, rng);
    chip_field(draw.received(), params.coupling(), draw.target_gain, &draw.gains, &draw.fields)
}

/// One new user-side field; zero excess degree gives zero.
pub fn user_update<R: Rng + ?Sized>(what: &Population, disorder: &Disorder, draw: &mut UserDraw, rng: &mut R) -> f64 {
    draw.sample(what, &disorder.user_excess, rng);
    draw.field()
}

/// Summary statistics of the overlap distribution used for convergence tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_m: f64,
    pub mean_m_se: f64,
    pub mean_m2: f64,
    pub mean_m2_se: f64,
    pub p_b: f64,
    pub p_b_se: f64,
}

impl Summary {
    fn components(&self) -> [(f64, f64); 3] {
        [
            (self.mean_m, self.mean_m_se),
            (self.mean_m2, self.mean_m2_se),
            (self.p_b, self.p_b_se),
        ]
    }

    /// All components within `z` combined standard errors.
    pub fn agrees_with(&self, other: &Summary, z: f64) -> bool {
        self.components().iter().zip(other.components().iter()).all(|(a, b)| {
            let se = (a.1 * a.1 + b.1 * b.1).sqrt();
            (a.0 - b.0).abs() <= z * se
        })
    }
}

/// Running state of one population-dynamics run.
#[derive(Debug, Clone)]
pub struct PopulationDynamics {
    params: ModelParams,
    disorder: Disorder,
    init: Init,
    seed: u64,
    w: Population,
    what: Population,
    rng: SimRng,
    measure_rng: SimRng,
    sweeps: usize,
    chip_draw: ChipDraw,
    user_draw: UserDraw,
    sensitivity: ChipSensitivity,
    perturbation: Option<PerturbationState>,
}

impl PopulationDynamics {
    pub fn new(params: ModelParams, size: usize, init: Init, seed: u64) -> Self {
        let run_seed = derive_seed(&[seed, init as u64]);
        let mut rng = rng::stream(run_seed, tag::DYNAMICS);
        let (w, what) = match init {
            Init::Ferromagnetic => (
                Population::ferromagnetic(size, Side::User),
                Population::ferromagnetic(size, Side::Chip),
            ),
            Init::Random => {
                let w = Population::random(size, Side::User, &mut rng);
                let what = Population::random(size, Side::Chip, &mut rng);
                (w, what)
            }
        };
        PopulationDynamics {
            disorder: Disorder::new(&params),
            params,
            init,
            seed,
            w,
            what,
            rng,
            measure_rng: rng::stream(run_seed, tag::MEASURE),
            sweeps: 0,
            chip_draw: ChipDraw::default(),
            user_draw: UserDraw::default(),
            sensitivity: ChipSensitivity::default(),
            perturbation: None,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn disorder(&self) -> &Disorder {
        &self.disorder
    }

    pub fn init(&self) -> Init {
        self.init
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn user_population(&self) -> &Population {
        &self.w
    }

    pub fn chip_population(&self) -> &Population {
        &self.what
    }

    pub fn perturbation(&self) -> Option<&PerturbationState> {
        self.perturbation.as_ref()
    }

    /// Starts tracking squared perturbations; weights drawn as `z^2`.
    pub fn enable_stability(&mut self) {
        let mut r = rng::stream(derive_seed(&[self.seed, self.init as u64, self.sweeps as u64]), tag::PERTURB);
        self.perturbation = Some(PerturbationState::new(self.w.len(), &mut r));
    }

    /// One alternating sweep: all chip-side values, then all user-side values.
    pub fn sweep(&mut self) {
        let m = self.what.len();
        let coupling = self.params.coupling();
        match self.perturbation.as_mut() {
            None => {
                for a in 0..m {
                    let u = chip_update(&self.w, &self.params, &self.disorder, &mut self.chip_draw, &mut self.rng);
                    self.what.fields[a] = u;
                }
                for i in 0..self.w.len() {
                    let h = user_update(&self.what, &self.disorder, &mut self.user_draw, &mut self.rng);
                    self.w.fields[i] = h;
                }
            }
            Some(p) => {
                let mut chip_weights = Vec::with_capacity(m);
                for a in 0..m {
                    let (u, v) = crate::stability::perturbed_chip_update(
                        &self.w,
                        &p.user_weights,
                        coupling,
                        &self.disorder,
                        &mut self.chip_draw,
                        &mut self.sensitivity,
                        &mut self.rng,
                    );
                    self.what.fields[a] = u;
                    chip_weights.push(v);
                }
                let chip_log_growth = p.set_chip_weights(chip_weights);
                let mut user_weights = Vec::with_capacity(self.w.len());
                for i in 0..self.w.len() {
                    let (h, v) = crate::stability::perturbed_user_update(
                        &self.what,
                        &p.chip_weights,
                        &self.disorder,
                        &mut self.user_draw,
                        &mut self.rng,
                    );
                    self.w.fields[i] = h;
                    user_weights.push(v);
                }
                let user_log_growth = p.set_user_weights(user_weights);
                p.record(chip_log_growth.max(FROZEN_LOG_GROWTH), user_log_growth.max(FROZEN_LOG_GROWTH));
            }
        }
        self.sweeps += 1;
    }

    pub fn run(&mut self, sweeps: usize) {
        for _ in 0..sweeps {
            self.sweep();
        }
    }

    /// Overlap summary from `draws` samples, using the run's measurement
    /// stream. Standard errors include the finite-population term: each draw
    /// reuses about `C` of the `M` members, so the population itself
    /// contributes a variance of roughly `C / M` times the sample variance.
    pub fn summary(&mut self, draws: usize) -> Summary {
        let mut s = crate::math::Moments::default();
        let mut s2 = crate::math::Moments::default();
        let mut e = crate::math::Moments::default();
        let mut draw = UserDraw::default();
        for _ in 0..draws {
            draw.sample(&self.what, &self.disorder.user_full, &mut self.measure_rng);
            let h = draw.field();
            let m = magnetization(h);
            s.push(m);
            s2.push(m * m);
            e.push(error_indicator(h));
        }
        let inflate = (1.0 + draws as f64 * self.disorder.user_full.mean() / self.what.len() as f64).sqrt();
        Summary {
            mean_m: s.mean(),
            mean_m_se: s.standard_error() * inflate,
            mean_m2: s2.mean(),
            mean_m2_se: s2.standard_error() * inflate,
            p_b: e.mean(),
            p_b_se: e.standard_error() * inflate,
        }
    }

    /// Overlap fields `sum_{c <= C~} u_c` with `C~` from the full user degree distribution.
    pub fn overlap_fields<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Vec<f64> {
        overlap_fields(&self.what, &self.disorder.user_full, samples, rng)
    }

    /// Writes `w.pop`, `what.pop` and `state.json` into `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        write("w.pop", self.w.to_text(self.sweeps))?;
        write("what.pop", self.what.to_text(self.sweeps))?;
        let state = CheckpointState {
            params: self.params,
            init: self.init,
            seed: self.seed,
            sweeps: self.sweeps,
            rng: RngState::of(&self.rng),
            measure_rng: RngState::of(&self.measure_rng),
        };
        write("state.json", serde_json::to_string_pretty(&state).expect("serialisable state"))
    }

    /// Restores a run saved by [`save_checkpoint`](Self::save_checkpoint);
    /// continuing it reproduces the uninterrupted run bit for bit.
    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(p, e))
        };
        let state: CheckpointState = serde_json::from_str(&read("state.json")?)
            .map_err(|e| Error::parse("state.json", e.to_string()))?;
        let (w, sw) = Population::from_text(&read("w.pop")?)?;
        let (what, sh) = Population::from_text(&read("what.pop")?)?;
        if sw != state.sweeps || sh != state.sweeps || w.side != Side::User || what.side != Side::Chip {
            return Err(Error::parse("checkpoint", "population headers disagree with state"));
        }
        Ok(PopulationDynamics {
            disorder: Disorder::new(&state.params),
            params: state.params,
            init: state.init,
            seed: state.seed,
            w,
            what,
            rng: state.rng.restore(),
            measure_rng: state.measure_rng.restore(),
            sweeps: state.sweeps,
            chip_draw: ChipDraw::default(),
            user_draw: UserDraw::default(),
            sensitivity: ChipSensitivity::default(),
            perturbation: None,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointState {
    params: ModelParams,
    init: Init,
    seed: u64,
    sweeps: usize,
    rng: RngState,
    measure_rng: RngState,
}

#[derive(Debug, Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn of(r: &SimRng) -> Self {
        RngState {
            seed: r.get_seed(),
            stream: r.get_stream(),
            word_pos: r.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> SimRng {
        use rand::SeedableRng;
        let mut r = SimRng::from_seed(self.seed);
        r.set_stream(self.stream);
        r.set_word_pos(self.word_pos.parse().unwrap_or(0));
        r
    }
}

/// `(1 - sign h) / 2` with `sign 0` contributing one half.
#[inline]
pub fn error_indicator(h: f64) -> f64 {
    if h > 0.0 {
        0.0
    } else if h < 0.0 {
        1.0
    } else {
        0.5
    }
}

pub fn overlap_fields<R: Rng + ?Sized>(what: &Population, degree: &DegreeDistribution, samples: usize, rng: &mut R) -> Vec<f64> {
    let mut draw = UserDraw::default();
    (0..samples)
        .map(|_| {
            draw.sample(what, degree, rng);
            draw.field()
        })
        .collect()
}

/// Samples of the overlap `m` from a solution's chip-side population.
pub fn overlap_distribution<R: Rng + ?Sized>(sol: &RsSolution, samples: usize, rng: &mut R) -> Vec<f64> {
    sol.state
        .overlap_fields(samples, rng)
        .into_iter()
        .map(magnetization)
        .collect()
}

/// Outcome of a single-initialisation run.
#[derive(Debug, Clone)]
pub struct RsSolution {
    pub state: PopulationDynamics,
    pub converged: bool,
}

impl RsSolution {
    pub fn init(&self) -> Init {
        self.state.init()
    }

    pub fn sweeps(&self) -> usize {
        self.state.sweeps()
    }

    pub fn params(&self) -> &ModelParams {
        self.state.params()
    }
}

/// Heuristic convergence settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCriterion {
    pub summary_draws: usize,
    /// Agreement tolerance in combined standard errors.
    pub z: f64,
    pub consecutive: usize,
    pub max_sweeps: usize,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        ConvergenceCriterion {
            summary_draws: 10_000,
            z: 3.0,
            consecutive: 10,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// Single-initialisation solve. Stops once the overlap summary agrees with
/// the one `consecutive` sweeps earlier for `consecutive` sweeps in a row.
pub fn solve_rs(params: ModelParams, size: usize, init: Init, criterion: &ConvergenceCriterion, seed: u64) -> RsSolution {
    let mut state = PopulationDynamics::new(params, size, init, seed);
    let lag = criterion.consecutive.max(1);
    let mut history: Vec<Summary> = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    while state.sweeps() < criterion.max_sweeps {
        state.sweep();
        let s = state.summary(criterion.summary_draws);
        if history.len() >= lag && s.agrees_with(&history[history.len() - lag], criterion.z) {
            streak += 1;
        } else {
            streak = 0;
        }
        history.push(s);
        if streak >= criterion.consecutive {
            converged = true;
            break;
        }
    }
    RsSolution { state, converged }
}

/// Both initialisations run in lockstep.
#[derive(Debug, Clone)]
pub struct DualOutcome {
    pub ferromagnetic: RsSolution,
    pub random: RsSolution,
    /// First sweep of the agreement streak, if the runs met.
    pub convergence_time: Option<usize>,
    /// Random-initialised branch after exactly [`BAD_SOLUTION_SWEEPS`] sweeps.
    pub random_at_budget: Option<PopulationDynamics>,
    /// Overlap fields of each branch pooled over the `consecutive` sweeps after
    /// the runs met, or over the final `consecutive` sweeps if they did not.
    pub pooled_ferromagnetic: Vec<f64>,
    pub pooled_random: Vec<f64>,
}

impl DualOutcome {
    /// `|Delta P_b| + KS` between the pooled overlap samples.
    pub fn distance(&self) -> f64 {
        overlap_distance(&self.pooled_ferromagnetic, &self.pooled_random)
    }
}

/// Runs both initialisations in lockstep. `pool_draws` overlap samples per
/// branch are collected evenly over `consecutive` sweeps: those following
/// the agreement streak, or the last ones before the sweep budget runs out.
pub fn solve_dual(params: ModelParams, size: usize, criterion: &ConvergenceCriterion, pool_draws: usize, seed: u64) -> DualOutcome {
    let mut ferro = PopulationDynamics::new(params, size, Init::Ferromagnetic, seed);
    let mut random = PopulationDynamics::new(params, size, Init::Random, seed);
    let depth = criterion.consecutive.max(1);
    let per_sweep = pool_draws.div_ceil(depth);
    let mut pool_rng = rng::stream(derive_seed(&[seed, 0x9001]), tag::ESTIMATE);
    let mut pool_f: std::collections::VecDeque<Vec<f64>> = Default::default();
    let mut pool_r: std::collections::VecDeque<Vec<f64>> = Default::default();
    let mut snapshot = None;
    let mut streak = 0;
    let mut start = 0;
    let mut met = None;
    let mut settled = 0;
    while met.is_some() || ferro.sweeps() < criterion.max_sweeps {
        ferro.sweep();
        random.sweep();
        let t = ferro.sweeps();
        if t == BAD_SOLUTION_SWEEPS {
            snapshot = Some(random.clone());
        }
        if pool_f.len() == depth {
            pool_f.pop_front();
            pool_r.pop_front();
        }
        pool_f.push_back(ferro.overlap_fields(per_sweep, &mut pool_rng));
        pool_r.push_back(random.overlap_fields(per_sweep, &mut pool_rng));
        if met.is_some() {
            settled += 1;
            if settled == depth {
                break;
            }
            continue;
        }
        let sf = ferro.summary(criterion.summary_draws);
        let sr = random.summary(criterion.summary_draws);
        if sf.agrees_with(&sr, criterion.z) {
            if streak == 0 {
                start = t;
            }
            streak += 1;
        } else {
            streak = 0;
        }
        if streak >= criterion.consecutive {
            met = Some(start);
            // the distance uses only sweeps after the runs met
            pool_f.clear();
            pool_r.clear();
        }
    }
    let converged = met.is_some();
    DualOutcome {
        ferromagnetic: RsSolution {
            state: ferro,
            converged,
        },
        random: RsSolution {
            state: random,
            converged,
        },
        convergence_time: met,
        random_at_budget: snapshot,
        pooled_ferromagnetic: pool_f.into_iter().flatten().collect(),
        pooled_random: pool_r.into_iter().flatten().collect(),
    }
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0, 0);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Single,
    Coexist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoexistenceVerdict {
    pub psd_db: f64,
    pub classification: Classification,
    /// `|Delta P_b| + KS` between the overlap samples of the two branches.
    pub distance: f64,
    /// Sweeps until the two branches met; `None` when they did not.
    pub convergence_time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub population: usize,
    pub criterion: ConvergenceCriterion,
    pub distance_draws: usize,
    pub distance_threshold: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            population: DEFAULT_POPULATION,
            criterion: ConvergenceCriterion::default(),
            distance_draws: 100_000,
            distance_threshold: DEFAULT_DISTANCE_THRESHOLD,
        }
    }
}

/// `|Delta P_b| + KS` between two samples of overlap fields. The KS
/// statistic is the same for fields and magnetisations.
pub fn overlap_distance(a: &[f64], b: &[f64]) -> f64 {
    let pb = |v: &[f64]| v.iter().map(|&h| error_indicator(h)).sum::<f64>() / v.len() as f64;
    (pb(a) - pb(b)).abs() + ks_distance(a, b)
}

/// Seed used for the run at one grid point.
pub fn point_seed(seed: u64, psd_db: f64) -> u64 {
    derive_seed(&[seed, psd_db.to_bits()])
}

/// Classifies one PSD value; also returns the dual-run outcome.
pub fn classify_point(ensemble: CodeEnsemble, psd_db: f64, opts: &ClassifyOptions, seed: u64) -> (CoexistenceVerdict, DualOutcome) {
    let params = ModelParams::at_psd_db(ensemble, psd_db);
    let s = point_seed(seed, psd_db);
    let outcome = solve_dual(params, opts.population, &opts.criterion, opts.distance_draws, s);
    let distance = outcome.distance();
    let single = outcome.convergence_time.is_some() && distance < opts.distance_threshold;
    let verdict = CoexistenceVerdict {
        psd_db,
        classification: if single {
            Classification::Single
        } else {
            Classification::Coexist
        },
        distance,
        convergence_time: if single {
            outcome.convergence_time.map(|t| t as f64)
        } else {
            None
        },
    };
    (verdict, outcome)
}

/// Dual-initialisation classification over a sorted PSD grid.
pub fn classify_coexistence(ensemble: CodeEnsemble, psd_grid: &[f64], opts: &ClassifyOptions, seed: u64) -> Result<Vec<CoexistenceVerdict>> {
    if psd_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("PSD grid must be sorted".into()));
    }
    Ok(psd_grid
        .par_iter()
        .map(|&p| classify_point(ensemble, p, opts, seed).0)
        .collect())
}

/// Location of the first single-to-coexist flip: midpoint of the bracketing grid points.
pub fn onset(verdicts: &[CoexistenceVerdict]) -> Option<(f64, f64)> {
    verdicts.windows(2).find_map(|w| {
        (w[0].classification == Classification::Single && w[1].classification == Classification::Coexist)
            .then_some((w[0].psd_db, w[1].psd_db))
    })
}

/// Power law `t = A (psd_c - psd)^(-exponent)` fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub critical_psd_db: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least squares of `ln t` on `ln(psd_c - psd)` with `psd_c` fixed.
pub fn fit_power_law_at(points: &[(f64, f64)], critical: f64) -> Option<PowerLawFit> {
    let data: Vec<(f64, f64)> = points
        .iter()
        .filter(|(p, t)| *p < critical && *t > 0.0)
        .map(|&(p, t)| ((critical - p).ln(), t.ln()))
        .collect();
    if data.len() < 3 {
        return None;
    }
    let n = data.len() as f64;
    let mx = data.iter().map(|d| d.0).sum::<f64>() / n;
    let my = data.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = data.iter().map(|d| (d.0 - mx).powi(2)).sum();
    let sxy: f64 = data.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    let syy: f64 = data.iter().map(|d| (d.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(PowerLawFit {
        exponent: -slope,
        critical_psd_db: critical,
        prefactor: intercept.exp(),
        r_squared,
        points: data.len(),
    })
}

/// Joint fit: scans `psd_c` over `[lo, hi]` and keeps the best log-log fit.
pub fn fit_power_law(points: &[(f64, f64)], lo: f64, hi: f64) -> Option<PowerLawFit> {
    let steps = 400;
    (0..=steps)
        .filter_map(|i| {
            let c = lo + (hi - lo) * i as f64 / steps as f64;
            fit_power_law_at(points, c)
        })
        .filter(|f| f.points == points.iter().filter(|p| p.1 > 0.0).count())
        .max_by(|a, b| a.r_squared.total_cmp(&b.r_squared))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::EnsembleKind;

    fn params_33(psd: f64) -> ModelParams {
        ModelParams::at_psd_db(CodeEnsemble::regular(3, 3), psd)
    }

    #[test]
    fn empty_chip_update_two_state_formula() {
        // L~ = 0: xhat = tanh(beta xi (omega + xi) / sigma^2)
        let e = CodeEnsemble::regular(3, 1);
        let p = ModelParams::nishimori(e, 0.4);
        let d = Disorder::new(&p);
        assert_eq!(d.chip_excess, DegreeDistribution::PointMass(0));
        let w = Population::ferromagnetic(4, Side::User);
        let mut draw = ChipDraw::default();
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let u = chip_update(&w, &p, &d, &mut draw, &mut r);
            let xi = draw.target_gain;
            let expect = (xi * (draw.omega + xi) / 0.4).tanh();
            let direct = {
                let wp = (-(draw.omega).powi(2) / 0.8).exp();
                let wm = (-(draw.omega + 2.0 * xi).powi(2) / 0.8).exp();
                (wp - wm) / (wp + wm)
            };
            assert!((u.tanh() - expect).abs() < 1e-14);
            assert!((u.tanh() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn saturated_inputs_noise_free() {
        // All W values 1, omega = 0: only the target spin is free.
        let xi = 1.0 / 3f64.sqrt();
        let sigma_sq = 0.2;
        let u = chip_field(xi + 2.0 * xi, 1.0 / (2.0 * sigma_sq), xi, &[xi, xi], &[SATURATED_FIELD; 2]);
        assert!((u.tanh() - (xi * xi / sigma_sq).tanh()).abs() < 1e-12);
        let u0 = chip_field(3.0 * xi, 1.0 / (2.0 * 1e-4), xi, &[xi, xi], &[SATURATED_FIELD; 2]);
        assert_eq!(u0.tanh(), 1.0);
    }

    #[test]
    fn zero_inputs_give_symmetric_distribution() {
        // Symmetric over the sent bits; the gauge maps bit b0 to a sign flip.
        let p = ModelParams::nishimori(CodeEnsemble::regular(3, 3), 1e-3);
        let d = Disorder::new(&p);
        let w = Population::from_fields(vec![0.0; 100], Side::User);
        let mut draw = ChipDraw::default();
        let mut r = rng::stream(5, 0);
        let mut vals = Vec::new();
        for _ in 0..40_000 {
            draw.sample(&w, &d, &d.chip_excess, &mut r);
            let bits: Vec<f64> = (0..=draw.gains.len()).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
            let y = draw.target_gain * bits[0] + draw.gains.iter().zip(&bits[1..]).map(|(g, b)| g * b).sum::<f64>();
            let u = chip_field(y, p.coupling(), draw.target_gain, &draw.gains, &draw.fields);
            let gauged_gains: Vec<f64> = draw.gains.iter().zip(&bits[1..]).map(|(g, b)| g * b).collect();
            let g = chip_field(y, p.coupling(), draw.target_gain * bits[0], &gauged_gains, &draw.fields);
            assert!((g - bits[0] * u).abs() < 1e-9);
            vals.push(u.tanh());
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let pos = vals.iter().filter(|&&v| v > 1e-12).count() as f64;
        let neg = vals.iter().filter(|&&v| v < -1e-12).count() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((pos - neg).abs() / (pos + neg) < 0.03);
    }

    #[test]
    fn user_update_examples() {
        let d = Disorder::new(&params_33(5.0));
        let mut draw = UserDraw::default();
        let mut r = rng::stream(1, 1);
        let ones = Population::ferromagnetic(10, Side::Chip);
        assert_eq!(user_update(&ones, &d, &mut draw, &mut r).tanh(), 1.0);
        let fixed = Population::from_magnetizations(&[0.6; 5], Side::Chip);
        let x = user_update(&fixed, &d, &mut draw, &mut r).tanh();
        assert!((x - 0.88235).abs() < 1e-5);
        let single = CodeEnsemble::regular(2, 2);
        let d2 = Disorder::new(&ModelParams::at_psd_db(single, 5.0));
        let p3 = Population::from_magnetizations(&[0.3; 3], Side::Chip);
        assert!((user_update(&p3, &d2, &mut draw, &mut r).tanh() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn excess_degrees_used_in_updates() {
        let d = Disorder::new(&params_33(5.0));
        assert_eq!(d.chip_excess, DegreeDistribution::PointMass(2));
        assert_eq!(d.user_excess, DegreeDistribution::PointMass(2));
        assert_eq!(d.user_full, DegreeDistribution::PointMass(3));
        let mut draw = ChipDraw::default();
        let w = Population::ferromagnetic(10, Side::User);
        draw.sample(&w, &d, &d.chip_excess, &mut rng::stream(1, 1));
        assert_eq!(draw.gains.len(), 2);
    }

    #[test]
    fn overlap_examples() {
        let e = CodeEnsemble::regular(3, 3);
        let d = Disorder::new(&ModelParams::at_psd_db(e, 5.0));
        let mut r = rng::stream(2, 2);
        let ones = Population::ferromagnetic(50, Side::Chip);
        assert!(overlap_fields(&ones, &d.user_full, 100, &mut r).iter().all(|h| h.tanh() == 1.0));
        let zeros = Population::from_fields(vec![0.0; 50], Side::Chip);
        assert!(overlap_fields(&zeros, &d.user_full, 100, &mut r).iter().all(|&h| h == 0.0));
        let irr = CodeEnsemble::new(EnsembleKind::Irregular, 3.0, 3.0).unwrap();
        let di = Disorder::new(&ModelParams::at_psd_db(irr, 5.0));
        let f = overlap_fields(&ones, &di.user_full, 100_000, &mut r);
        let zero = f.iter().filter(|&&h| h == 0.0).count() as f64 / 1e5;
        assert!(zero >= (-3.0f64).exp() - 0.003, "zero mass {zero}");
    }

    #[test]
    fn values_stay_bounded_and_nishimori_bias() {
        let mut run = PopulationDynamics::new(params_33(4.0), 2000, Init::Random, 3);
        for _ in 0..30 {
            run.sweep();
            assert!(run.chip_population().fields().iter().all(|h| h.is_finite()));
            assert!(run.user_population().magnetizations().all(|x| (-1.0..=1.0).contains(&x)));
        }
        assert!(run.chip_population().mean_magnetization() >= -0.01);
    }

    #[test]
    fn ferro_init_values_are_one() {
        let run = PopulationDynamics::new(params_33(4.0), 100, Init::Ferromagnetic, 3);
        assert!(run.user_population().magnetizations().all(|x| x == 1.0));
        assert!(run.chip_population().magnetizations().all(|x| x == 1.0));
    }

    #[test]
    fn paramagnetic_limit_both_inits_agree() {
        let c = ConvergenceCriterion {
            max_sweeps: 200,
            ..Default::default()
        };
        let out = solve_dual(params_33(-10.0), 5000, &c, 10_000, 4);
        assert!(out.convergence_time.is_some());
        let s = out.ferromagnetic.state.clone().summary(50_000);
        assert!(s.p_b > 0.3, "p_b {}", s.p_b);
    }

    #[test]
    fn single_run_reaches_stationarity() {
        let c = ConvergenceCriterion {
            max_sweeps: 300,
            ..Default::default()
        };
        let sol = solve_rs(params_33(6.0), 5000, Init::Ferromagnetic, &c, 1);
        assert!(sol.converged);
        assert!(sol.sweeps() < 300);
    }

    #[test]
    fn checkpoint_resume_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = PopulationDynamics::new(params_33(7.0), 500, Init::Random, 9);
        a.run(3);
        a.save_checkpoint(dir.path()).unwrap();
        let mut b = PopulationDynamics::load_checkpoint(dir.path()).unwrap();
        a.run(4);
        b.run(4);
        assert_eq!(a.user_population(), b.user_population());
        assert_eq!(a.chip_population(), b.chip_population());
        assert_eq!(a.summary(100), b.summary(100));
    }

    #[test]
    fn population_text_rejects_wrong_count() {
        assert!(Population::from_text("3 user 0\n0.1\n0.2\n").is_err());
        assert!(Population::from_text("1 nope 0\n0.1\n").is_err());
    }

    #[test]
    fn ks_distance_basics() {
        let a = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert!((ks_distance(&[0.0, 2.0], &[1.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn power_law_fit_recovers_exponent() {
        let pts: Vec<(f64, f64)> = [0.02f64, 0.05, 0.1, 0.3, 1.0, 3.0]
            .iter()
            .map(|d| (10.23 - d, 40.0 * d.powf(-0.59)))
            .collect();
        let fit = fit_power_law(&pts, 10.0, 10.5).unwrap();
        assert!((fit.exponent - 0.59).abs() < 0.01);
        assert!((fit.critical_psd_db - 10.23).abs() < 0.01);
        let fixed = fit_power_law_at(&pts, 10.23).unwrap();
        assert!((fixed.exponent - 0.59).abs() < 1e-9);
    }

    #[test]
    fn unsorted_grid_rejected() {
        let r = classify_coexistence(CodeEnsemble::regular(3, 3), &[2.0, 1.0], &ClassifyOptions::default(), 0);
        assert!(r.is_err());
    }
}
