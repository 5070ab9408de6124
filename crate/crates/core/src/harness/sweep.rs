use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::checkpoint::save_orbitals;
use super::config::Config;
use super::fit::{fit_slope, SlopeFit};
use crate::density_matrix::{alpha_functional, slater_dm, trace_distance_low_rank};
use crate::diagnostics::{deviation_norms_with, vsq_sup_with};
use crate::error::{Error, ErrorClass, Result};
use crate::free_phase::FreePhaseTrajectory;
use crate::grid::Grid;
use crate::hartree::{step_count, HartreeOptions, HartreePropagator};
use crate::kernel::Sign;
use crate::orbitals::{is_closed_shell, modulated_family, OrbitalSet};

/// Every metric a run can record, in CSV column order.
pub const OBSERVABLES: [&str; 12] = [
    "alpha",
    "d0",
    "d1",
    "energy",
    "grad_phi_over_t",
    "grad_phi_sup",
    "gram_dev",
    "kinetic",
    "phase_identity",
    "trace_dist",
    "vsq_sup",
    "vsq_sup_hartree",
];

/// `trace_dist` costs a `2N`-dimensional factorization per observation and is
/// opt-in.
pub fn default_observables() -> Vec<String> {
    OBSERVABLES.iter().filter(|o| **o != "trace_dist").map(|o| o.to_string()).collect()
}

pub const DEFAULT_PARTICLES: [usize; 7] = [7, 19, 33, 57, 93, 123, 179];

/// One Hartree plus free-with-phase trajectory from the modulated family in a
/// box of side `N^{1/3}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n_particles: usize,
    pub grid: usize,
    pub eps: f64,
    pub sign: Sign,
    pub dt: f64,
    pub t_final: f64,
    pub every: usize,
    pub exchange: bool,
    pub observables: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_particles: 7,
            grid: 24,
            eps: 0.1,
            sign: Sign::Plus,
            dt: 1e-3,
            t_final: 0.1,
            every: 10,
            exchange: false,
            observables: default_observables(),
        }
    }
}

const RUN_KEYS: [&str; 9] = ["N", "grid", "eps", "sign", "dt", "t_final", "every", "exchange", "observables"];

impl RunConfig {
    fn apply(&mut self, cfg: &Config, section: &str) -> Result<()> {
        if section == "evolve" {
            if let Some(v) = cfg.parsed("evolve", "N")? {
                self.n_particles = v;
            }
        }
        if let Some(v) = cfg.parsed(section, "grid")? {
            self.grid = v;
        }
        if let Some(v) = cfg.parsed(section, "eps")? {
            self.eps = v;
        }
        if let Some(v) = cfg.parsed(section, "sign")? {
            self.sign = v;
        }
        if let Some(v) = cfg.parsed(section, "dt")? {
            self.dt = v;
        }
        if let Some(v) = cfg.parsed(section, "t_final")? {
            self.t_final = v;
        }
        if let Some(v) = cfg.parsed(section, "every")? {
            self.every = v;
        }
        if let Some(v) = cfg.flag(section, "exchange")? {
            self.exchange = v;
        }
        if let Some(v) = cfg.list::<String>(section, "observables")? {
            self.observables = v;
        }
        Ok(())
    }

    /// Reads the `evolve` section (and bare keys) over the defaults.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys("evolve", &[&RUN_KEYS[..], &["out"]].concat())?;
        let mut run = Self::default();
        run.apply(cfg, "evolve")?;
        Ok(run)
    }

    pub fn box_length(&self) -> f64 {
        (self.n_particles as f64).cbrt()
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid, self.box_length())
    }

    pub fn options(&self) -> HartreeOptions {
        HartreeOptions::new(self.dt).with_exchange(self.exchange)
    }

    /// Observables sorted and deduplicated: the CSV column order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = self.observables.clone();
        cols.sort();
        cols.dedup();
        cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter("N must be at least 1".into()));
        }
        let grid = self.grid()?;
        if self.n_particles > grid.len() {
            return Err(Error::Capacity(format!(
                "N = {} exceeds the {} modes of an n = {} grid",
                self.n_particles,
                grid.len(),
                self.grid
            )));
        }
        self.options().validate(&grid)?;
        step_count(self.t_final, self.dt)?;
        if self.observables.is_empty() {
            return Err(Error::InvalidParameter("no observables selected".into()));
        }
        for o in &self.observables {
            if !OBSERVABLES.contains(&o.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "unknown observable {o:?} (known: {})",
                    OBSERVABLES.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        format!("N{:04}", self.n_particles)
    }
}

/// Scalar metrics of one run at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub run_id: String,
    pub t: f64,
    pub metrics: BTreeMap<String, f64>,
}

impl MetricsRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    prop: &'a HartreePropagator,
    columns: Vec<String>,
}

impl Recorder<'_> {
    fn wants(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    fn record(&self, step: usize, h: &OrbitalSet, fp: &FreePhaseTrajectory) -> Result<MetricsRecord> {
        let t = step as f64 * self.cfg.dt;
        let spectral = self.prop.spectral();
        let mut m = BTreeMap::new();
        if self.wants("energy") || self.wants("kinetic") {
            let e = self.prop.energy_parts(h)?;
            m.insert("energy".to_string(), e.total());
            m.insert("kinetic".to_string(), e.kinetic);
        }
        if self.wants("gram_dev") {
            m.insert("gram_dev".to_string(), h.gram_deviation());
        }
        if self.wants("vsq_sup") {
            m.insert("vsq_sup".to_string(), vsq_sup_with(spectral, &fp.free().density())?.restored);
        }
        if self.wants("vsq_sup_hartree") {
            m.insert("vsq_sup_hartree".to_string(), vsq_sup_with(spectral, &h.density())?.restored);
        }
        if self.wants("grad_phi_sup") || self.wants("grad_phi_over_t") {
            let g = fp.phase().gradients().sup_grad;
            m.insert("grad_phi_sup".to_string(), g);
            m.insert("grad_phi_over_t".to_string(), if step == 0 { 0.0 } else { g / t });
        }
        if self.wants("phase_identity") {
            m.insert("phase_identity".to_string(), fp.phase().laplacian_identity_residual());
        }
        let needs_phased = ["d0", "d1", "alpha", "trace_dist"].iter().any(|c| self.wants(c));
        if needs_phased {
            let phased = fp.phased()?;
            if self.wants("d0") || self.wants("d1") {
                let d = deviation_norms_with(spectral, h, &phased)?;
                m.insert("d0".to_string(), d.d0);
                m.insert("d1".to_string(), d.d1);
            }
            if self.wants("alpha") {
                m.insert("alpha".to_string(), alpha_functional(h, &phased)?);
            }
            if self.wants("trace_dist") {
                m.insert("trace_dist".to_string(), trace_distance_low_rank(&slater_dm(h)?, &slater_dm(&phased)?)?);
            }
        }
        m.retain(|k, _| self.columns.contains(k));
        if let Some((k, v)) = m.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numerical(format!("metric {k} is {v} at t = {t}")));
        }
        Ok(MetricsRecord { run_id: self.cfg.run_id(), t, metrics: m })
    }
}

/// Runs one configuration, recording at step 0, every `every` steps and at
/// the end (`every = 0` records only the end points).
pub fn run_trajectory(cfg: &RunConfig) -> Result<(Vec<MetricsRecord>, OrbitalSet)> {
    cfg.validate()?;
    let init = modulated_family(cfg.n_particles, cfg.grid()?, cfg.eps)?.with_sign(cfg.sign);
    let prop = HartreePropagator::new(&init, cfg.options())?;
    let mut fp = FreePhaseTrajectory::new(&init, cfg.dt)?;
    let rec = Recorder { cfg, prop: &prop, columns: cfg.columns() };
    let steps = step_count(cfg.t_final, cfg.dt)?;
    let mut h = init.clone();
    let mut records = vec![rec.record(0, &h, &fp)?];
    let mut done = 0;
    while done < steps {
        let chunk = if cfg.every == 0 { steps - done } else { cfg.every.min(steps - done) };
        prop.advance(&mut h, chunk, done)?;
        for _ in 0..chunk {
            fp.step()?;
        }
        done += chunk;
        records.push(rec.record(done, &h, &fp)?);
    }
    Ok((records, h))
}

/// `run_id,t,<columns>` with 17 significant digits.
pub fn format_csv(columns: &[String], records: &[MetricsRecord]) -> String {
    let mut out = String::from("run_id,t");
    for c in columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{},{:.16e}", r.run_id, r.t);
        for c in columns {
            match r.get(c) {
                Some(v) => {
                    let _ = write!(out, ",{v:.16e}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a CSV written by [`format_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::InvalidInput("empty CSV".into()))?.split(',').collect();
    if header.len() < 2 || header[0] != "run_id" || header[1] != "t" {
        return Err(Error::InvalidInput("CSV header must start with run_id,t".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(Error::InvalidInput(format!("CSV row {} has {} cells", i + 2, cells.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("CSV row {}: {s:?}: {e}", i + 2)))
            };
            let mut metrics = BTreeMap::new();
            for (name, cell) in header[2..].iter().zip(&cells[2..]) {
                if !cell.is_empty() {
                    metrics.insert(name.to_string(), num(cell)?);
                }
            }
            Ok(MetricsRecord { run_id: cells[0].to_string(), t: num(cells[1])?, metrics })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub particles: Vec<usize>,
    pub run: RunConfig,
    /// Recorded in the summary; the sweep itself draws no random numbers.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            particles: DEFAULT_PARTICLES.to_vec(),
            run: RunConfig::default(),
            seed: 0,
            out: PathBuf::from("sweep_out"),
        }
    }
}

impl SweepConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys("sweep", &[&RUN_KEYS[..], &["out", "seed"]].concat())?;
        let mut s = Self::default();
        s.run.apply(cfg, "sweep")?;
        if let Some(v) = cfg.list("sweep", "N")? {
            s.particles = v;
        }
        if let Some(v) = cfg.parsed("sweep", "seed")? {
            s.seed = v;
        }
        if let Some(v) = cfg.get("sweep", "out") {
            s.out = PathBuf::from(v);
        }
        Ok(s)
    }

    pub fn run_for(&self, n_particles: usize) -> RunConfig {
        RunConfig { n_particles, ..self.run.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one N".into()));
        }
        let mut seen = self.particles.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.particles.len() {
            return Err(Error::InvalidParameter("sweep N list has duplicates".into()));
        }
        for &n in &self.particles {
            if !is_closed_shell(n) {
                return Err(Error::InvalidParameter(format!("N = {n} is not a closed shell")));
            }
            self.run_for(n).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStatus {
    pub run_id: String,
    pub n_particles: usize,
    pub box_length: f64,
    pub status: String,
    pub error: Option<String>,
    pub error_class: Option<String>,
    pub csv: Option<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub name: String,
    /// Time at which `y` is sampled in every run.
    pub t: f64,
    /// `(N, y)`
    pub points: Vec<(f64, f64)>,
    pub fit: Option<SlopeFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSettings {
    pub particles: Vec<usize>,
    pub grid: usize,
    pub eps: f64,
    pub sign: Sign,
    pub dt: f64,
    pub t_final: f64,
    pub every: usize,
    pub exchange: bool,
    pub observables: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub settings: SweepSettings,
    pub runs: Vec<RunStatus>,
    pub slopes: Vec<SlopeReport>,
}

impl SweepSummary {
    /// First failed run's error class, if any.
    pub fn failure(&self) -> Option<ErrorClass> {
        self.runs.iter().find_map(|r| match r.error_class.as_deref() {
            Some("validation") => Some(ErrorClass::Validation),
            Some("numerical") => Some(ErrorClass::Numerical),
            Some(_) => Some(ErrorClass::Io),
            None => None,
        })
    }

    pub fn slope(&self, name: &str) -> Option<&SlopeReport> {
        self.slopes.iter().find(|s| s.name == name)
    }
}

fn class_name(e: &Error) -> &'static str {
    match e.class() {
        ErrorClass::Validation => "validation",
        ErrorClass::Numerical => "numerical",
        ErrorClass::Io => "io",
    }
}

/// Writes `<id>.csv` per run and `summary.json` into `cfg.out`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let results: Vec<(RunConfig, Result<Vec<MetricsRecord>>)> = cfg
        .particles
        .par_iter()
        .map(|&n| {
            let run = cfg.run_for(n);
            let out = run_trajectory(&run).and_then(|(records, _)| {
                let path = cfg.out.join(format!("{}.csv", run.run_id()));
                std::fs::write(&path, format_csv(&run.columns(), &records))?;
                Ok(records)
            });
            (run, out)
        })
        .collect();

    let mut runs = Vec::new();
    let mut ok: Vec<(usize, Vec<MetricsRecord>)> = Vec::new();
    for (run, res) in results {
        let mut status = RunStatus {
            run_id: run.run_id(),
            n_particles: run.n_particles,
            box_length: run.box_length(),
            status: "ok".into(),
            error: None,
            error_class: None,
            csv: None,
            rows: 0,
        };
        match res {
            Ok(records) => {
                status.csv = Some(format!("{}.csv", run.run_id()));
                status.rows = records.len();
                ok.push((run.n_particles, records));
            }
            Err(e) => {
                status.status = "error".into();
                status.error_class = Some(class_name(&e).into());
                status.error = Some(e.to_string());
            }
        }
        runs.push(status);
    }

    let summary = SweepSummary {
        settings: SweepSettings {
            particles: cfg.particles.clone(),
            grid: cfg.run.grid,
            eps: cfg.run.eps,
            sign: cfg.run.sign,
            dt: cfg.run.dt,
            t_final: cfg.run.t_final,
            every: cfg.run.every,
            exchange: cfg.run.exchange,
            observables: cfg.run.columns(),
            seed: cfg.seed,
        },
        runs,
        slopes: slopes(&cfg.run, &ok),
    };
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidState(format!("summary serialization failed: {e}")))?;
    json.push('\n');
    std::fs::write(cfg.out.join("summary.json"), json)?;
    Ok(summary)
}

/// Log-log slopes against `N`:
/// - `vsq_sup` at `t = 0`;
/// - `grad_phi_sup`, `grad_phi_over_t` and `d0 / N^{1/3}` at the final time.
pub fn slopes(run: &RunConfig, results: &[(usize, Vec<MetricsRecord>)]) -> Vec<SlopeReport> {
    // (name, metric, sampled at t = 0, divided by N^{1/3})
    let specs = [
        ("vsq_sup", "vsq_sup", true, false),
        ("grad_phi_sup", "grad_phi_sup", false, false),
        ("grad_phi_over_t", "grad_phi_over_t", false, false),
        ("d0_over_cbrt_n", "d0", false, true),
    ];
    let columns = run.columns();
    specs
        .iter()
        .filter(|(_, metric, _, _)| columns.iter().any(|c| c == metric))
        .map(|&(name, metric, at_start, per_cbrt)| {
            let t = if at_start { 0.0 } else { run.t_final };
            let points: Vec<(f64, f64)> = results
                .iter()
                .filter_map(|(n, recs)| {
                    let rec = if at_start { recs.first() } else { recs.last() };
                    let y = rec?.get(metric)?;
                    let x = *n as f64;
                    Some((x, if per_cbrt { y / x.cbrt() } else { y }))
                })
                .collect();
            let (fit, error) = match fit_slope(&points) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            SlopeReport { name: name.into(), t, points, fit, error }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOutput {
    pub records: Vec<MetricsRecord>,
    pub csv: PathBuf,
    pub checkpoint: PathBuf,
}

/// Single trajectory: `<id>.csv` plus the final Hartree orbitals as
/// `<id>.fmfd`.
pub fn run_evolve(cfg: &RunConfig, out: &Path) -> Result<EvolveOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let (records, last) = run_trajectory(cfg)?;
    let csv = out.join(format!("{}.csv", cfg.run_id()));
    std::fs::write(&csv, format_csv(&cfg.columns(), &records))?;
    let checkpoint = out.join(format!("{}.fmfd", cfg.run_id()));
    save_orbitals(&last, &checkpoint)?;
    Ok(EvolveOutput { records, csv, checkpoint })
}
