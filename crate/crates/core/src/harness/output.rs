use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    ClusterExperiment, MeanFreeTime, PercolationExperiment, PercolationPoint, SeriesPoint,
};
use crate::error::{Error, Result};
use crate::io::{load_text, save_text, shortest, Table};
use crate::theory::wild_cluster_pmf;

pub fn histogram_file_name(index: usize) -> String {
    format!("histogram_{index:03}.csv")
}

fn parents_label(parents: &[usize]) -> String {
    parents
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("-")
}

/// Writes one histogram per grid time, the mean-size series and the tree
/// census into `dir`; returns the files written.
pub fn write_cluster_tables(dir: &Path, exp: &ClusterExperiment) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut save = |name: &str, table: Table| -> Result<()> {
        let path = dir.join(name);
        table.save(&path)?;
        written.push(path);
        Ok(())
    };
    for (g, h) in exp.histograms.iter().enumerate() {
        let mut table = Table::new(&["k", "count", "probability", "stderr", "wild"]);
        for (&k, &count) in &h.counts {
            table.push(vec![
                k.to_string(),
                count.to_string(),
                shortest(h.probability(k)),
                shortest(h.probability_stderr[&k]),
                shortest(wild_cluster_pmf(k as u64, h.t_hat)?),
            ]);
        }
        save(&histogram_file_name(g), table)?;
    }

    let mut series = Table::new(&["t", "S", "stderr", "t_hat", "wild"]);
    for p in exp.series() {
        series.push(vec![
            shortest(p.t),
            shortest(p.mean),
            shortest(p.stderr),
            shortest(p.t_hat),
            shortest(p.wild),
        ]);
    }
    save("series.csv", series)?;

    let mut trees = Table::new(&["t", "k", "parents", "count", "frequency"]);
    let mut census = Table::new(&["t", "k", "clusters", "chi2", "dof"]);
    for at_t in &exp.census {
        for c in at_t {
            census.push(vec![
                shortest(c.t),
                c.k.to_string(),
                c.clusters.to_string(),
                shortest(c.chi2),
                c.dof.to_string(),
            ]);
            for tree in &c.trees {
                trees.push(vec![
                    shortest(c.t),
                    c.k.to_string(),
                    parents_label(&tree.parents),
                    tree.count.to_string(),
                    shortest(c.frequency(&tree.parents)),
                ]);
            }
        }
    }
    save("trees.csv", trees)?;
    save("census.csv", census)?;
    Ok(written)
}

pub fn write_percolation_table(dir: &Path, exp: &PercolationExperiment) -> Result<PathBuf> {
    let mut table = Table::new(&[
        "t",
        "fraction",
        "stderr",
        "t_hat",
        "min",
        "max",
        "max_backward",
    ]);
    for p in &exp.points {
        table.push(
            [
                p.t,
                p.fraction,
                p.stderr,
                p.t_hat,
                p.min,
                p.max,
                p.max_backward,
            ]
            .map(shortest)
            .to_vec(),
        );
    }
    let path = dir.join("percolation.csv");
    table.save(&path)?;
    Ok(path)
}

pub fn write_mfp_table(dir: &Path, mfp: &MeanFreeTime) -> Result<PathBuf> {
    let mut table = Table::new(&[
        "tau",
        "stderr",
        "collisions",
        "particle_time",
        "kinetic",
        "horizon",
        "samples",
    ]);
    table.push(vec![
        shortest(mfp.tau),
        shortest(mfp.stderr),
        mfp.collisions.to_string(),
        shortest(mfp.particle_time),
        shortest(mfp.kinetic),
        shortest(mfp.horizon),
        mfp.samples.to_string(),
    ]);
    let path = dir.join("mfp.csv");
    table.save(&path)?;
    Ok(path)
}

/// Rows `(k, count, probability, stderr)` of a histogram table.
pub fn read_histogram_table(path: impl AsRef<Path>) -> Result<Vec<(usize, u64, f64, f64)>> {
    let table = Table::load(path)?;
    let k = table.column_f64("k")?;
    let count = table.column_f64("count")?;
    let p = table.column_f64("probability")?;
    let se = table.column_f64("stderr")?;
    Ok((0..k.len())
        .map(|r| (k[r] as usize, count[r] as u64, p[r], se[r]))
        .collect())
}

pub fn read_series_table(path: impl AsRef<Path>) -> Result<Vec<SeriesPoint>> {
    let table = Table::load(path)?;
    let [t, mean, stderr, t_hat, wild] =
        ["t", "S", "stderr", "t_hat", "wild"].map(|c| table.column_f64(c));
    let (t, mean, stderr, t_hat, wild) = (t?, mean?, stderr?, t_hat?, wild?);
    Ok((0..t.len())
        .map(|r| SeriesPoint {
            t: t[r],
            t_hat: t_hat[r],
            mean: mean[r],
            stderr: stderr[r],
            wild: wild[r],
        })
        .collect())
}

pub fn read_percolation_table(path: impl AsRef<Path>) -> Result<Vec<PercolationPoint>> {
    let table = Table::load(path)?;
    let cols = [
        "t",
        "fraction",
        "stderr",
        "t_hat",
        "min",
        "max",
        "max_backward",
    ]
    .map(|c| table.column_f64(c))
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((0..cols[0].len())
        .map(|r| PercolationPoint {
            t: cols[0][r],
            fraction: cols[1][r],
            stderr: cols[2][r],
            t_hat: cols[3][r],
            min: cols[4][r],
            max: cols[5][r],
            max_backward: cols[6][r],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Software {
    pub name: String,
    pub version: String,
}

impl Default for Software {
    fn default() -> Self {
        Software {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix_seconds: u64,
    pub elapsed_seconds: f64,
}

/// Everything needed to repeat a run: the command, its complete settings
/// (re-readable as a configuration file), a summary of headline results and
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub settings: toml::Table,
    #[serde(default)]
    pub summary: toml::Table,
    pub software: Software,
    pub wall_clock: WallClock,
}

impl RunManifest {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot encode manifest: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(0, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_text(path, &self.to_toml()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RunManifest::from_toml(&load_text(path)?)
    }
}
