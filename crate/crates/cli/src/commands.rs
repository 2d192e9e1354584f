use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};

use hscluster::cluster::{ibf_round_trip, random_ibf_variables, RoundTrip};
use hscluster::dynamics::{evolve_with, EngineOptions, StopCondition};
use hscluster::ensemble::{sample_trajectory, EnsembleConfig, SimRng};
use hscluster::harness::{
    cluster_size_experiment, estimate_mean_free_time, kinetic_mean_free_time,
    percolation_experiment, write_cluster_tables, write_mfp_table, write_percolation_table,
    ExperimentConfig,
};
use hscluster::io::{save_log, save_state, shortest, Table};
use hscluster::theory::{
    rough_bound, theorem_tail_bound, wild_cluster_pmf, wild_mean_size, TheoryParams,
};

use crate::settings::Settings;

#[derive(Debug)]
pub enum Failure {
    /// The settings do not describe a valid run.
    Usage(String),
    Runtime(hscluster::Error),
}

impl From<hscluster::Error> for Failure {
    fn from(e: hscluster::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

/// What a finished command leaves behind.
pub struct Outcome {
    /// The settings the command actually used, defaults filled in.
    pub settings: Settings,
    pub summary: toml::Table,
    pub files: Vec<PathBuf>,
    /// Lines for the terminal.
    pub report: Vec<String>,
    /// The run completed but its check failed.
    pub check_failed: Option<String>,
}

impl Outcome {
    fn new(settings: Settings) -> Self {
        Outcome {
            settings,
            summary: toml::Table::new(),
            files: Vec::new(),
            report: Vec::new(),
            check_failed: None,
        }
    }

    fn record(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }
}

fn ensemble(s: &Settings) -> Result<EnsembleConfig, Failure> {
    EnsembleConfig::new(s.n(), s.beta(), s.seed()).map_err(usage)
}

fn positive_time(name: &str, value: f64) -> Result<f64, Failure> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(usage(format!(
            "--{name} must be positive and finite, got {value}"
        )))
    }
}

/// Settings shared by every simulating command, defaults filled in.
fn simulation_settings(s: &Settings) -> Settings {
    Settings {
        n: Some(s.n()),
        beta: Some(s.beta()),
        seed: Some(s.seed()),
        units: Some(s.units()),
        cell_list: Some(s.cell_list.unwrap_or(s.n() >= 500)),
        ..Settings::default()
    }
}

/// Factor from `--t`/`--grid` units to simulation time.
fn time_scale(s: &Settings) -> Result<f64, Failure> {
    let scale = s.time_scale();
    if scale.is_finite() {
        Ok(scale)
    } else {
        Err(usage(
            "mean-free-time units need at least two particles; use --units sim",
        ))
    }
}

fn experiment(s: &Settings, workers: usize) -> Result<ExperimentConfig, Failure> {
    let scale = time_scale(s)?;
    let grid = s
        .grid
        .clone()
        .unwrap_or_default()
        .iter()
        .map(|g| g * scale)
        .collect();
    let mut cfg = ExperimentConfig::new(ensemble(s)?, s.samples.unwrap_or(100), grid);
    cfg.root_average = s.root_average.unwrap_or(true);
    cfg.cell_list = s.cell_list.unwrap_or(cfg.cell_list);
    cfg.workers = workers;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn simulate(given: &Settings, out: &Path) -> Result<Outcome, Failure> {
    let s = Settings {
        t: Some(given.t.unwrap_or(1.0)),
        ..simulation_settings(given)
    };
    let cfg = ensemble(&s)?;
    let t_end = positive_time("t", s.t.unwrap() * time_scale(&s)?)?;
    let options = EngineOptions {
        cell_list: s.cell_list.unwrap(),
    };
    let initial = sample_trajectory(&cfg, 0)?;
    let (last, log) = evolve_with(initial.clone(), StopCondition::Time(t_end), options)?;

    let mut outcome = Outcome::new(s);
    for (name, state) in [("initial_state.txt", &initial), ("final_state.txt", &last)] {
        save_state(out.join(name), state)?;
        outcome.files.push(out.join(name));
    }
    save_log(out.join("log.txt"), &log)?;
    outcome.files.push(out.join("log.txt"));

    let drift = (last.kinetic_energy() / initial.kinetic_energy() - 1.0).abs();
    outcome.record("t_end", t_end);
    outcome.record("events", log.events.len() as i64);
    outcome.record("energy_relative_drift", drift);
    outcome.report.push(format!(
        "{} collisions up to t = {} (relative energy drift {drift:.1e})",
        log.events.len(),
        shortest(t_end)
    ));
    Ok(outcome)
}

pub fn clusters(given: &Settings, out: &Path, workers: usize) -> Result<Outcome, Failure> {
    let s = Settings {
        grid: Some(given.grid.clone().unwrap_or_else(|| vec![0.5, 1.0, 1.5])),
        samples: Some(given.samples.unwrap_or(100)),
        root_average: Some(given.root_average.unwrap_or(true)),
        ..simulation_settings(given)
    };
    let cfg = experiment(&s, workers)?;
    let exp = cluster_size_experiment(&cfg)?;

    let mut outcome = Outcome::new(s);
    outcome.files = write_cluster_tables(out, &exp)?;
    outcome.record(
        "kinetic_mean_free_time",
        kinetic_mean_free_time(cfg.ensemble.n_particles, cfg.ensemble.beta),
    );
    outcome.record("lambda", exp.rate.lambda);
    outcome.record("lambda_stderr", exp.rate.stderr);
    outcome.record("collisions", exp.rate.collisions as i64);
    outcome.record("monotone_violations", exp.monotone_violations as i64);
    if let Some((lo, hi)) = exp.growth_bracket(2.0) {
        outcome.record("growth_rate_min", lo);
        outcome.record("growth_rate_max", hi);
    }
    outcome.report.push(format!(
        "fitted collision rate {} ± {} per particle",
        shortest(exp.rate.lambda),
        shortest(exp.rate.stderr)
    ));
    for p in exp.series() {
        outcome.report.push(format!(
            "t = {:<10.4} t_hat = {:<8.4} S = {:.4} ± {:.4} (e^t_hat - 1 = {:.4})",
            p.t, p.t_hat, p.mean, p.stderr, p.wild
        ));
    }
    if exp.monotone_violations > 0 {
        outcome.check_failed = Some(format!(
            "{} cluster sizes decreased in time",
            exp.monotone_violations
        ));
    }
    Ok(outcome)
}

pub fn percolation(given: &Settings, out: &Path, workers: usize) -> Result<Outcome, Failure> {
    let s = Settings {
        grid: Some(
            given
                .grid
                .clone()
                .unwrap_or_else(|| (1..=8).map(|k| 0.5 * k as f64).collect()),
        ),
        samples: Some(given.samples.unwrap_or(10)),
        ..simulation_settings(given)
    };
    let cfg = experiment(&s, workers)?;
    let exp = percolation_experiment(&cfg)?;
    let tau = kinetic_mean_free_time(cfg.ensemble.n_particles, cfg.ensemble.beta);

    let mut outcome = Outcome::new(s);
    outcome.files.push(write_percolation_table(out, &exp)?);
    outcome.record("kinetic_mean_free_time", tau);
    outcome.record("lambda", exp.rate.lambda);
    outcome.record("monotone_violations", exp.monotone_violations as i64);
    for p in &exp.points {
        outcome.report.push(format!(
            "t = {:<10.4} largest fraction {:.4} ± {:.4}, largest backward cluster {:.1}",
            p.t, p.fraction, p.stderr, p.max_backward
        ));
    }
    match exp.crossing(0.5) {
        Some(p) => {
            outcome.record("crossing_time", p.t);
            outcome.record("crossing_time_kinetic_units", p.t / tau);
            outcome.record("crossing_max_backward", p.max_backward);
            outcome.report.push(format!(
                "largest cluster exceeds half the particles at t = {} ({:.3} kinetic mean free times)",
                shortest(p.t),
                p.t / tau
            ));
        }
        None => outcome
            .report
            .push("largest cluster stays below half the particles".into()),
    }
    Ok(outcome)
}

pub fn mfp(given: &Settings, out: &Path, workers: usize) -> Result<Outcome, Failure> {
    let s = Settings {
        t: Some(given.t.unwrap_or(5.0)),
        samples: Some(given.samples.unwrap_or(100)),
        ..simulation_settings(given)
    };
    let cfg = ensemble(&s)?;
    let horizon = positive_time("t", s.t.unwrap() * time_scale(&s)?)?;
    let samples = s.samples.unwrap();
    if samples < 10 {
        return Err(usage(format!(
            "--samples must be at least 10, got {samples}"
        )));
    }
    let m = estimate_mean_free_time(&cfg, samples, horizon, s.cell_list.unwrap(), workers)?;

    let mut outcome = Outcome::new(s);
    outcome.files.push(write_mfp_table(out, &m)?);
    outcome.record("tau", m.tau);
    outcome.record("tau_stderr", m.stderr);
    outcome.record("kinetic", m.kinetic);
    outcome.report.push(format!(
        "mean free time {} ± {} (kinetic theory {})",
        shortest(m.tau),
        shortest(m.stderr),
        shortest(m.kinetic)
    ));
    Ok(outcome)
}

pub fn theory(given: &Settings, out: &Path) -> Result<Outcome, Failure> {
    let s = Settings {
        t: Some(given.t.unwrap_or(1.0)),
        c: Some(given.c.unwrap_or(1.0)),
        k0: Some(given.k0.unwrap_or(0)),
        kmax: Some(given.kmax.unwrap_or(20)),
        ..Settings::default()
    };
    let params = TheoryParams::new(s.t.unwrap(), s.c.unwrap(), s.k0.unwrap()).map_err(usage)?;
    let kmax = s.kmax.unwrap();

    let mut wild = Table::new(&["k", "probability", "tail"]);
    let growth = -(-params.t).exp_m1();
    for k in 0..=kmax {
        let p = wild_cluster_pmf(k, params.t)?;
        wild.push(vec![
            k.to_string(),
            shortest(p),
            shortest(growth.powf(k as f64)),
        ]);
    }
    let mut bound = Table::new(&["k", "bound", "rough"]);
    for k in params.k0 + 1..=kmax {
        bound.push(vec![
            k.to_string(),
            shortest(theorem_tail_bound(k, &params)?),
            shortest(rough_bound(k, params.c, params.t)),
        ]);
    }

    let mut outcome = Outcome::new(s);
    for (name, table) in [("wild.csv", wild), ("bound.csv", bound)] {
        table.save(out.join(name))?;
        outcome.files.push(out.join(name));
    }
    let mean = wild_mean_size(params.t)?;
    outcome.record("wild_mean_size", mean);
    outcome
        .report
        .push(format!("mean cluster size e^t - 1 = {}", shortest(mean)));
    Ok(outcome)
}

pub fn ibf_roundtrip(given: &Settings, out: &Path) -> Result<Outcome, Failure> {
    let s = Settings {
        t: Some(given.t.unwrap_or(1.0)),
        samples: Some(given.samples.unwrap_or(100)),
        kmax: Some(given.kmax.unwrap_or(4)),
        eps: Some(given.eps.unwrap_or(0.1)),
        seed: Some(given.seed()),
        ..Settings::default()
    };
    let t = positive_time("t", s.t.unwrap())?;
    let eps = positive_time("eps", s.eps.unwrap())?;
    let kmax = s.kmax.unwrap() as usize;
    if kmax == 0 {
        return Err(usage("--kmax must be at least 1"));
    }

    let mut rng = SimRng::seed_from_u64(s.seed.unwrap());
    let mut table = Table::new(&["draw", "n", "outcome", "max_time_error"]);
    let (mut recovered, mut ambiguous, mut mismatched) = (0, 0, 0);
    for draw in 0..s.samples.unwrap() {
        let n = rng.random_range(1..=kmax);
        let vars = random_ibf_variables(&mut rng, n, t, 0.0, eps)?;
        let (label, error) = match ibf_round_trip(&vars, eps)? {
            RoundTrip::Recovered { max_time_error } => {
                recovered += 1;
                ("recovered", shortest(max_time_error))
            }
            RoundTrip::Ambiguous => {
                ambiguous += 1;
                ("ambiguous", String::new())
            }
            RoundTrip::Mismatch { .. } => {
                mismatched += 1;
                ("mismatch", String::new())
            }
        };
        table.push(vec![draw.to_string(), n.to_string(), label.into(), error]);
    }

    let mut outcome = Outcome::new(s);
    table.save(out.join("ibf_roundtrip.csv"))?;
    outcome.files.push(out.join("ibf_roundtrip.csv"));
    outcome.record("recovered", recovered as i64);
    outcome.record("ambiguous", ambiguous as i64);
    outcome.record("mismatched", mismatched as i64);
    outcome.report.push(format!(
        "{recovered} recovered, {ambiguous} ambiguous (extra collisions), {mismatched} mismatched"
    ));
    if mismatched > 0 {
        outcome.check_failed = Some(format!("{mismatched} flows were not recovered"));
    }
    Ok(outcome)
}
