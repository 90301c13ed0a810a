//! Parameter sweeps, finite-instance campaigns and run manifests.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bp::{bp_decode, BpOptions, FactorGraph};
use crate::channel::{random_bits, sigma0_sq_from_psd_db, transmit};
use crate::chip_bound::{bound_csv, bound_table};
use crate::ensembles::{sample_signature, CodeEnsemble, EnsembleKind, EnsembleSpec, GainKind};
use crate::error::{Error, Result};
use crate::metrics::{MetricOptions, PerformanceReport, SolutionTag, CSV_HEADER};
use crate::popdyn::{classify_point, point_seed, ClassifyOptions, Classification, ConvergenceCriterion, CoexistenceVerdict, RsSolution, BAD_SOLUTION_SWEEPS};
use crate::rng::derive_seed;
use crate::stability::{solution_lambda, DEFAULT_BURN_IN, DEFAULT_WINDOW};

/// Model variance used when the channel is noiseless.
pub const NOISELESS_MODEL_VARIANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Popdyn,
    Stability,
    Metrics,
    BpInstance,
    ChipBound,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "popdyn" => Ok(Task::Popdyn),
            "stability" => Ok(Task::Stability),
            "metrics" => Ok(Task::Metrics),
            "bp_instance" => Ok(Task::BpInstance),
            "chip_bound" => Ok(Task::ChipBound),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub name: String,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub tasks: Vec<Task>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            name: "sweep".into(),
            seeds: vec![1],
            threads: 0,
            output_dir: PathBuf::from("out"),
            tasks: vec![Task::Popdyn, Task::Metrics, Task::Stability],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleEntry {
    pub kind: EnsembleKind,
    /// Chips per user.
    pub c: f64,
    /// Users per chip.
    pub l: f64,
    pub gain: GainKind,
}

impl Default for EnsembleEntry {
    fn default() -> Self {
        EnsembleEntry {
            kind: EnsembleKind::Regular,
            c: 3.0,
            l: 3.0,
            gain: GainKind::Bpsk,
        }
    }
}

impl EnsembleEntry {
    pub fn code(&self) -> Result<CodeEnsemble> {
        Ok(CodeEnsemble::new(self.kind, self.c, self.l)?.with_gain(self.gain))
    }

    /// File-name label such as `regular_C3_L6`.
    pub fn label(&self) -> String {
        format!("{}_C{}_L{}", self.kind, self.c, self.l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Explicit PSD values in dB; overrides start/stop/step when non-empty.
    pub values: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            start: 0.0,
            stop: 12.0,
            step: 1.0,
            values: Vec::new(),
        }
    }
}

impl GridSection {
    pub fn points(&self) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        if !(self.step > 0.0) || self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopdynSection {
    pub population: usize,
    pub max_sweeps: usize,
    pub summary_draws: usize,
    pub z: f64,
    pub consecutive: usize,
    pub distance_draws: usize,
    pub distance_threshold: f64,
}

impl Default for PopdynSection {
    fn default() -> Self {
        let c = ClassifyOptions::default();
        PopdynSection {
            population: c.population,
            max_sweeps: c.criterion.max_sweeps,
            summary_draws: c.criterion.summary_draws,
            z: c.criterion.z,
            consecutive: c.criterion.consecutive,
            distance_draws: c.distance_draws,
            distance_threshold: c.distance_threshold,
        }
    }
}

impl PopdynSection {
    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions {
            population: self.population,
            criterion: ConvergenceCriterion {
                summary_draws: self.summary_draws,
                z: self.z,
                consecutive: self.consecutive,
                max_sweeps: self.max_sweeps,
            },
            distance_draws: self.distance_draws,
            distance_threshold: self.distance_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub burn_in: usize,
    pub window: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            burn_in: DEFAULT_BURN_IN,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub samples: usize,
    pub overlap_samples: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let m = MetricOptions::default();
        MetricsSection {
            samples: m.samples,
            overlap_samples: m.overlap_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpSection {
    pub chips: usize,
    pub trials: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    pub damping: f64,
}

impl Default for BpSection {
    fn default() -> Self {
        let o = BpOptions::default();
        BpSection {
            chips: 1500,
            trials: 200,
            max_sweeps: o.max_sweeps,
            tol: o.tol,
            damping: o.damping,
        }
    }
}

impl BpSection {
    pub fn options(&self) -> BpOptions {
        BpOptions {
            max_sweeps: self.max_sweeps,
            tol: self.tol,
            damping: self.damping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipBoundSection {
    pub l_max: usize,
}

impl Default for ChipBoundSection {
    fn default() -> Self {
        ChipBoundSection { l_max: 10 }
    }
}

/// Full sweep configuration, read from TOML with one table per section and
/// an `[[ensemble]]` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub run: RunSection,
    pub grid: GridSection,
    pub popdyn: PopdynSection,
    pub stability: StabilitySection,
    pub metrics: MetricsSection,
    pub bp: BpSection,
    pub chip_bound: ChipBoundSection,
    pub ensemble: Vec<EnsembleEntry>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            run: RunSection::default(),
            grid: GridSection::default(),
            popdyn: PopdynSection::default(),
            stability: StabilitySection::default(),
            metrics: MetricsSection::default(),
            bp: BpSection::default(),
            chip_bound: ChipBoundSection::default(),
            ensemble: vec![EnsembleEntry::default()],
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn has(&self, task: Task) -> bool {
        self.run.tasks.contains(&task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.tasks.is_empty() {
            return Err(Error::Config("no tasks selected".into()));
        }
        let needs_grid = self.run.tasks.iter().any(|t| *t != Task::ChipBound);
        if needs_grid {
            let grid = self.grid.points();
            if grid.is_empty() {
                return Err(Error::Config("PSD grid is empty".into()));
            }
            if grid.iter().any(|p| p.is_nan()) {
                return Err(Error::Config("PSD grid contains NaN".into()));
            }
            if self.ensemble.is_empty() {
                return Err(Error::Config("no ensembles given".into()));
            }
            for e in &self.ensemble {
                e.code()?;
            }
        }
        let distinct: BTreeSet<u64> = self.run.seeds.iter().copied().collect();
        if self.run.seeds.is_empty() || distinct.len() != self.run.seeds.len() {
            return Err(Error::Config("seeds must be non-empty and distinct".into()));
        }
        if self.popdyn.population < 2 || self.popdyn.consecutive == 0 {
            return Err(Error::Config("population needs at least two members and a positive streak".into()));
        }
        Ok(())
    }

    pub fn sha256(&self) -> String {
        hex(&Sha256::digest(self.to_toml().as_bytes()))
    }
}

/// Named configurations for the standard figures.
pub fn recipe(name: &str) -> Result<SweepConfig> {
    let mut c = SweepConfig::default();
    c.run.name = name.to_string();
    match name {
        "fig2" => {
            c.ensemble = vec![EnsembleEntry::default()];
            c.grid = GridSection {
                start: 0.0,
                stop: 12.0,
                step: 1.0,
                values: Vec::new(),
            };
        }
        "fig4" => {
            c.ensemble = [4.0, 5.0, 6.0]
                .iter()
                .map(|&l| EnsembleEntry {
                    l,
                    ..Default::default()
                })
                .collect();
            c.grid = GridSection {
                start: 6.0,
                stop: 14.0,
                step: 0.5,
                values: Vec::new(),
            };
        }
        "fig5" => {
            c.run.tasks = vec![Task::ChipBound];
            c.chip_bound.l_max = 10;
        }
        other => return Err(Error::Config(format!("unknown recipe {other:?}"))),
    }
    Ok(c)
}

pub const RECIPES: [&str; 3] = ["fig2", "fig4", "fig5"];

/// Hex encoding of a digest.
pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Result of a finite-instance BP campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub psd_db: f64,
    pub trials: usize,
    pub bits: usize,
    /// Bit errors, ties counting one half.
    pub errors: f64,
    pub ber: f64,
    /// Standard error from the spread between trials.
    pub ber_se: f64,
    /// 95% Wilson interval on the pooled bits.
    pub wilson: (f64, f64),
    pub nonconverged: usize,
}

pub const CAMPAIGN_CSV_HEADER: &str = "psd_db,trials,bits,errors,ber,ber_se,ci_low,ci_high,nonconverged";

impl CampaignResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.psd_db, self.trials, self.bits, self.errors, self.ber, self.ber_se, self.wilson.0, self.wilson.1, self.nonconverged
        )
    }
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: f64, n: f64, z: f64) -> (f64, f64) {
    if n <= 0.0 {
        return (0.0, 1.0);
    }
    let p = successes / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Samples `trials` instances of `spec`, decodes each with BP and pools the bit errors.
/// An infinite PSD is the noiseless channel, decoded with model variance
/// [`NOISELESS_MODEL_VARIANCE`].
pub fn bp_instance_campaign(spec: &EnsembleSpec, psd_db: f64, trials: usize, opts: &BpOptions, seed: u64) -> Result<CampaignResult> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::Config("campaign needs at least one trial".into()));
    }
    let sigma0_sq = sigma0_sq_from_psd_db(psd_db);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = derive_seed(&[seed, t as u64]);
            let matrix = sample_signature(spec, s)?;
            let bits = random_bits(matrix.users, s);
            let inst = transmit(&matrix, &bits, sigma0_sq, s)?;
            let graph = if sigma0_sq > 0.0 {
                FactorGraph::nishimori(&matrix, &inst)?
            } else {
                FactorGraph::new(&matrix, &inst.received, NOISELESS_MODEL_VARIANCE, 1.0)?
            };
            let res = bp_decode(&graph, opts);
            let errors: f64 = res
                .estimates
                .iter()
                .zip(&bits)
                .map(|(&e, &b)| if e == 0 { 0.5 } else if e != b { 1.0 } else { 0.0 })
                .sum();
            Ok((errors, bits.len(), res.converged))
        })
        .collect::<Result<Vec<_>>>()?;
    let bits: usize = per_trial.iter().map(|t| t.1).sum();
    let errors: f64 = per_trial.iter().map(|t| t.0).sum();
    let rates: Vec<f64> = per_trial.iter().map(|t| t.0 / t.1 as f64).collect();
    let (ber, ber_se) = crate::math::mean_and_se(&rates);
    Ok(CampaignResult {
        psd_db,
        trials,
        bits,
        errors,
        ber,
        ber_se,
        wilson: wilson_interval(errors, bits as f64, 1.96),
        nonconverged: per_trial.iter().filter(|t| !t.2).count(),
    })
}

/// Reports for one classified grid point: one row when the solution is
/// unique, a good and a bad row when two coexist.
pub fn point_reports(
    ensemble: CodeEnsemble,
    psd_db: f64,
    config: &SweepConfig,
    seed: u64,
) -> Result<(CoexistenceVerdict, Vec<PerformanceReport>)> {
    let opts = config.popdyn.classify_options();
    let (verdict, outcome) = classify_point(ensemble, psd_db, &opts, seed);
    let mut sols: Vec<(SolutionTag, RsSolution)> = Vec::new();
    match verdict.classification {
        Classification::Single => sols.push((SolutionTag::Unique, outcome.ferromagnetic)),
        Classification::Coexist => {
            let bad = match outcome.random_at_budget {
                Some(state) => RsSolution { state, converged: false },
                None => {
                    let mut state = outcome.random.state;
                    state.run(BAD_SOLUTION_SWEEPS.saturating_sub(state.sweeps()));
                    RsSolution { state, converged: false }
                }
            };
            sols.push((SolutionTag::Good, outcome.ferromagnetic));
            sols.push((SolutionTag::Bad, bad));
        }
    }
    let mut reports = Vec::new();
    if !(config.has(Task::Metrics) || config.has(Task::Stability)) {
        return Ok((verdict, reports));
    }
    let mopts = MetricOptions {
        samples: config.metrics.samples,
        overlap_samples: config.metrics.overlap_samples,
    };
    let base = point_seed(seed, psd_db);
    for (i, (tag, sol)) in sols.iter().enumerate() {
        let lambda = if config.has(Task::Stability) {
            Some(solution_lambda(sol, config.stability.burn_in, config.stability.window)?)
        } else {
            None
        };
        reports.push(PerformanceReport::evaluate(sol, *tag, lambda, &mopts, derive_seed(&[base, i as u64, 0x3e7]))?);
    }
    Ok((verdict, reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SweepConfig,
    pub config_sha: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<String>,
    pub wallclock: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Partial,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Partial => 1,
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "ok",
            RunStatus::Partial => "partial",
        })
    }
}

struct Sink {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Sink {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha: hex(&Sha256::digest(body.as_bytes())),
        });
        Ok(())
    }
}

/// Runs every selected task, writes CSV artifacts and `manifest.json` into
/// the output directory. Failed points are listed in the manifest and make
/// the status partial.
pub fn run_sweep(config: &SweepConfig) -> Result<(Manifest, RunStatus)> {
    config.validate()?;
    let started = Instant::now();
    let dir = config.run.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut sink = Sink {
        dir: dir.clone(),
        artifacts: Vec::new(),
    };
    let mut failures = Vec::new();
    let grid = config.grid.points();
    let popdyn_like = config.has(Task::Popdyn) || config.has(Task::Metrics) || config.has(Task::Stability);

    for entry in if popdyn_like || config.has(Task::BpInstance) { config.ensemble.as_slice() } else { &[] } {
        let code = entry.code()?;
        for &seed in &config.run.seeds {
            if popdyn_like {
                let results: Vec<(f64, Result<(CoexistenceVerdict, Vec<PerformanceReport>)>)> =
                    pool.install(|| grid.par_iter().map(|&p| (p, point_reports(code, p, config, seed))).collect());
                let mut verdicts = format!("psd_db,classification,distance,convergence_time\n");
                let mut perf = format!("{CSV_HEADER}\n");
                for (p, r) in results {
                    match r {
                        Ok((v, reports)) => {
                            let class = match v.classification {
                                Classification::Single => "single",
                                Classification::Coexist => "coexist",
                            };
                            let t = v.convergence_time.map_or("nan".to_string(), |t| t.to_string());
                            verdicts.push_str(&format!("{},{},{},{}\n", v.psd_db, class, v.distance, t));
                            for rep in reports {
                                perf.push_str(&rep.csv_row());
                                perf.push('\n');
                            }
                        }
                        Err(e) => failures.push(format!("{} seed {seed} psd {p}: {e}", entry.label())),
                    }
                }
                if config.has(Task::Popdyn) {
                    sink.write(&format!("coexistence_{}_seed{seed}.csv", entry.label()), &verdicts)?;
                }
                if config.has(Task::Metrics) || config.has(Task::Stability) {
                    sink.write(&format!("performance_{}_seed{seed}.csv", entry.label()), &perf)?;
                }
            }
            if config.has(Task::BpInstance) {
                let mut body = format!("{CAMPAIGN_CSV_HEADER}\n");
                let spec = EnsembleSpec::new(code, config.bp.chips, (config.bp.chips as f64 * code.load()).round() as usize);
                match spec {
                    Ok(spec) => {
                        for &p in &grid {
                            match pool.install(|| bp_instance_campaign(&spec, p, config.bp.trials, &config.bp.options(), point_seed(seed, p))) {
                                Ok(r) => {
                                    body.push_str(&r.csv_row());
                                    body.push('\n');
                                }
                                Err(e) => failures.push(format!("bp {} seed {seed} psd {p}: {e}", entry.label())),
                            }
                        }
                    }
                    Err(e) => failures.push(format!("bp {}: {e}", entry.label())),
                }
                sink.write(&format!("bp_{}_seed{seed}.csv", entry.label()), &body)?;
            }
        }
    }
    if config.has(Task::ChipBound) {
        match bound_table(config.chip_bound.l_max) {
            Ok(rows) => sink.write("chip_bound.csv", &bound_csv(&rows))?,
            Err(e) => failures.push(format!("chip bound: {e}")),
        }
    }
    let status = if failures.is_empty() { RunStatus::Ok } else { RunStatus::Partial };
    let manifest = Manifest {
        config: config.clone(),
        config_sha: config.sha256(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: config.run.seeds.clone(),
        artifacts: sink.artifacts,
        failures,
        wallclock: started.elapsed().as_secs_f64(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok((manifest, status))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = SweepConfig::default();
        let text = c.to_toml();
        assert!(text.contains("[popdyn]"));
        assert_eq!(SweepConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c = SweepConfig::from_toml("[grid]\nvalues = [1.0, 2.0]\n[[ensemble]]\nkind = \"irregular\"\nc = 3.0\nl = 1.5\n").unwrap();
        assert_eq!(c.grid.points(), vec![1.0, 2.0]);
        assert_eq!(c.popdyn, PopdynSection::default());
        assert_eq!(c.ensemble[0].kind, EnsembleKind::Irregular);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SweepConfig::from_toml("[run]\nseeds = [1, 1]\n").is_err());
        assert!(SweepConfig::from_toml("[grid]\nstart = 3.0\nstop = 1.0\n").is_err());
        assert!(SweepConfig::from_toml("[nonsense]\nx = 1\n").is_err());
        assert!(SweepConfig::from_toml("[[ensemble]]\nkind = \"regular\"\nc = 2.5\nl = 3.0\n").is_err());
    }

    #[test]
    fn grid_points_inclusive() {
        let g = GridSection {
            start: 0.0,
            stop: 12.0,
            step: 1.0,
            values: Vec::new(),
        };
        assert_eq!(g.points().len(), 13);
        assert_eq!(*g.points().last().unwrap(), 12.0);
    }

    #[test]
    fn recipes_exist() {
        for r in RECIPES {
            recipe(r).unwrap().validate().unwrap();
        }
        assert_eq!(recipe("fig4").unwrap().ensemble.len(), 3);
        assert!(recipe("fig9").is_err());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0.0, 100.0, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50.0, 100.0, 1.96);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn noiseless_tree_campaign_is_error_free() {
        let spec = EnsembleSpec::regular(3, 3, 300).unwrap();
        let r = bp_instance_campaign(&spec, f64::INFINITY, 3, &BpOptions::default(), 1).unwrap();
        assert_eq!(r.errors, 0.0);
    }

    #[test]
    fn noise_dominated_campaign() {
        let spec = EnsembleSpec::regular(3, 3, 300).unwrap();
        let r = bp_instance_campaign(&spec, -10.0, 10, &BpOptions::default(), 2).unwrap();
        // a lone user already errs a third of the time at this noise level
        let floor = crate::metrics::single_user_ber(sigma0_sq_from_psd_db(-10.0), 1.0);
        assert!((floor - 0.327).abs() < 1e-3);
        assert!(r.ber > floor - 3.0 * r.ber_se && r.ber < 0.5, "{r:?}");
    }
}
