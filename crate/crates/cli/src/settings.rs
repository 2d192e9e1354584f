use std::path::Path;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use hscluster::harness::{kinetic_mean_free_time, RunManifest};
use hscluster::io::load_text;

/// How `--t` and `--grid` are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Multiples of the kinetic-theory mean free time.
    Mfp,
    /// Simulation time.
    Sim,
}

/// Parameters that determine a run's results. Each can come from the
/// command line or from a configuration file (a plain TOML table with these
/// keys, or the manifest of an earlier run); the command line wins.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Number of particles; the diameter is N^{-1/2}.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,

    /// Inverse temperature.
    #[arg(long, global = true, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,

    /// Run length (simulate, mfp), flow duration (ibf-roundtrip) or time in
    /// mean free times (theory).
    #[arg(long, global = true, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,

    /// Comma-separated query times.
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        num_args = 1,
        allow_negative_numbers = true
    )]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,

    /// Unit of `--t` and `--grid` for simulating commands.
    #[arg(long, global = true, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub units: Option<Units>,

    /// Number of independent trajectories, or of round-trip draws.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Count the cluster of every particle instead of particle 0 only.
    #[arg(long, global = true, value_name = "BOOL")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_average: Option<bool>,

    /// Use cell lists in the collision search (default for N >= 500).
    #[arg(long, global = true, value_name = "BOOL")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell_list: Option<bool>,

    /// Largest cluster size in theory tables, or largest flow size in
    /// round-trip draws.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmax: Option<u64>,

    /// Constant of the tail bound.
    #[arg(
        long = "C",
        global = true,
        value_name = "C",
        allow_negative_numbers = true
    )]
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,

    /// The tail bound is tabulated for k > k0.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<u64>,

    /// Sphere diameter of round-trip flows.
    #[arg(long, global = true, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl Settings {
    /// Reads a configuration file. A manifest contributes its `settings`
    /// table.
    pub fn load(path: &Path) -> Result<Settings, String> {
        let text = load_text(path).map_err(|e| e.to_string())?;
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let settings = if table.contains_key("settings") {
            RunManifest::from_toml(&text)
                .map_err(|e| format!("{}: {e}", path.display()))?
                .settings
        } else {
            table
        };
        settings
            .try_into()
            .map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Values of `self`, falling back to `base` where unset.
    pub fn or(self, base: Settings) -> Settings {
        Settings {
            n: self.n.or(base.n),
            beta: self.beta.or(base.beta),
            t: self.t.or(base.t),
            grid: self.grid.or(base.grid),
            units: self.units.or(base.units),
            samples: self.samples.or(base.samples),
            seed: self.seed.or(base.seed),
            root_average: self.root_average.or(base.root_average),
            cell_list: self.cell_list.or(base.cell_list),
            kmax: self.kmax.or(base.kmax),
            c: self.c.or(base.c),
            k0: self.k0.or(base.k0),
            eps: self.eps.or(base.eps),
        }
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("settings are plain values")
    }

    pub fn n(&self) -> usize {
        self.n.unwrap_or(1000)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(1)
    }

    pub fn units(&self) -> Units {
        self.units.unwrap_or(Units::Mfp)
    }

    /// Factor turning `--t` and `--grid` values into simulation time.
    pub fn time_scale(&self) -> f64 {
        match self.units() {
            Units::Mfp => kinetic_mean_free_time(self.n(), self.beta()),
            Units::Sim => 1.0,
        }
    }
}
