//! Text formats for collision logs, particle states and result tables.
//!
//! Logs and states are whitespace-separated with one record per line and a
//! leading `#` header of `key=value` pairs; every float is written with 17
//! significant digits so that reading back reproduces it exactly. Result
//! tables are comma-separated with a header row, floats in their shortest
//! round-trip form.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dynamics::{CollisionEvent, CollisionLog, ParticleState, SystemState};
use crate::error::{Error, Result};
use crate::torus::TorusVector;
use crate::vector::Vec3;

const LOG_MAGIC: &str = "hscluster-log";
const STATE_MAGIC: &str = "hscluster-state";

/// Column names of a log record.
pub const LOG_COLUMNS: &str = "time i j omega_x omega_y omega_z \
    vi_pre_x vi_pre_y vi_pre_z vj_pre_x vj_pre_y vj_pre_z \
    vi_post_x vi_post_y vi_post_z vj_post_x vj_post_y vj_post_z";

/// Column names of a state record.
pub const STATE_COLUMNS: &str = "x y z vx vy vz";

/// Float with 17 significant digits.
fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

/// Float in the shortest form that parses back to the same value.
pub fn shortest(x: f64) -> String {
    format!("{x:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn with_path<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

pub fn write_log(w: &mut impl Write, log: &CollisionLog) -> std::io::Result<()> {
    writeln!(
        w,
        "# {LOG_MAGIC} N={} eps={} start={} duration={} events={}",
        log.n_particles,
        exact(log.eps),
        exact(log.start_time),
        exact(log.duration),
        log.events.len()
    )?;
    writeln!(w, "# {LOG_COLUMNS}")?;
    for e in &log.events {
        write!(w, "{} {} {}", exact(e.time), e.i, e.j)?;
        for v in [e.omega, e.v_i_pre, e.v_j_pre, e.v_i_post, e.v_j_post] {
            write!(w, " {} {} {}", exact(v[0]), exact(v[1]), exact(v[2]))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_log(path: impl AsRef<Path>, log: &CollisionLog) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    with_path(path, write_log(&mut w, log).and_then(|_| w.flush()))
}

/// Parsed `# magic key=value ...` line.
struct Header {
    fields: HashMap<String, String>,
}

impl Header {
    fn parse(line: &str, magic: &str) -> Result<Self> {
        let mut words = line
            .strip_prefix('#')
            .ok_or_else(|| Error::parse(1, "missing header line"))?
            .split_whitespace();
        if words.next() != Some(magic) {
            return Err(Error::parse(1, format!("expected a {magic} header")));
        }
        let fields = words
            .map(|w| {
                w.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::parse(1, format!("malformed header field {w:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Header { fields })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .fields
            .get(key)
            .ok_or_else(|| Error::parse(1, format!("header lacks {key}")))?;
        raw.parse()
            .map_err(|_| Error::parse(1, format!("bad value {raw:?} for {key}")))
    }
}

/// Non-comment lines with their 1-based line numbers.
fn records(lines: &[String]) -> impl Iterator<Item = (usize, &str)> {
    lines
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn numbers<T: std::str::FromStr>(line_no: usize, line: &str, expected: usize) -> Result<Vec<T>> {
    let words: Vec<&str> = line.split_whitespace().collect();
    if words.len() != expected {
        return Err(Error::parse(
            line_no,
            format!("expected {expected} fields, found {}", words.len()),
        ));
    }
    words
        .iter()
        .map(|w| {
            w.parse()
                .map_err(|_| Error::parse(line_no, format!("cannot parse {w:?}")))
        })
        .collect()
}

fn read_lines(r: impl BufRead) -> Result<Vec<String>> {
    r.lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::parse(0, e.to_string()))
}

fn vec3(x: &[f64]) -> Vec3 {
    [x[0], x[1], x[2]]
}

pub fn read_log(r: impl BufRead) -> Result<CollisionLog> {
    let lines = read_lines(r)?;
    let header = Header::parse(lines.first().map_or("", String::as_str), LOG_MAGIC)?;
    let n_particles: usize = header.get("N")?;
    let expected: usize = header.get("events")?;
    let mut events = Vec::with_capacity(expected);
    let mut previous = f64::NEG_INFINITY;
    for (line_no, line) in records(&lines) {
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.len() != 18 {
            return Err(Error::parse(
                line_no,
                format!("expected 18 fields, found {}", words.len()),
            ));
        }
        let index = |w: &str| -> Result<usize> {
            let p: usize = w
                .parse()
                .map_err(|_| Error::parse(line_no, format!("bad particle index {w:?}")))?;
            if p >= n_particles {
                return Err(Error::parse(line_no, format!("particle {p} out of range")));
            }
            Ok(p)
        };
        let (i, j) = (index(words[1])?, index(words[2])?);
        let mut floats = Vec::with_capacity(16);
        for w in std::iter::once(words[0]).chain(words[3..].iter().copied()) {
            floats.push(
                w.parse::<f64>()
                    .map_err(|_| Error::parse(line_no, format!("cannot parse {w:?}")))?,
            );
        }
        if floats[0] < previous {
            return Err(Error::parse(line_no, "events out of time order"));
        }
        previous = floats[0];
        events.push(CollisionEvent {
            time: floats[0],
            i,
            j,
            omega: vec3(&floats[1..4]),
            v_i_pre: vec3(&floats[4..7]),
            v_j_pre: vec3(&floats[7..10]),
            v_i_post: vec3(&floats[10..13]),
            v_j_post: vec3(&floats[13..16]),
        });
    }
    if events.len() != expected {
        return Err(Error::parse(
            lines.len(),
            format!("header announces {expected} events, found {}", events.len()),
        ));
    }
    Ok(CollisionLog {
        events,
        n_particles,
        eps: header.get("eps")?,
        start_time: header.get("start")?,
        duration: header.get("duration")?,
    })
}

pub fn load_log(path: impl AsRef<Path>) -> Result<CollisionLog> {
    read_log(open(path.as_ref())?)
}

/// Writes the state synchronised to its clock.
pub fn write_state(w: &mut impl Write, state: &SystemState) -> std::io::Result<()> {
    writeln!(
        w,
        "# {STATE_MAGIC} N={} eps={} time={}",
        state.len(),
        exact(state.eps),
        exact(state.current_time)
    )?;
    writeln!(w, "# {STATE_COLUMNS}")?;
    for p in &state.particles {
        let x = p.position_at(state.current_time);
        let v = p.velocity;
        writeln!(
            w,
            "{} {} {} {} {} {}",
            exact(x.x()),
            exact(x.y()),
            exact(x.z()),
            exact(v[0]),
            exact(v[1]),
            exact(v[2])
        )?;
    }
    Ok(())
}

pub fn save_state(path: impl AsRef<Path>, state: &SystemState) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    with_path(path, write_state(&mut w, state).and_then(|_| w.flush()))
}

pub fn read_state(r: impl BufRead) -> Result<SystemState> {
    let lines = read_lines(r)?;
    let header = Header::parse(lines.first().map_or("", String::as_str), STATE_MAGIC)?;
    let n: usize = header.get("N")?;
    let time: f64 = header.get("time")?;
    let mut particles = Vec::with_capacity(n);
    for (line_no, line) in records(&lines) {
        let x: Vec<f64> = numbers(line_no, line, 6)?;
        let position =
            TorusVector::wrap(vec3(&x[..3])).map_err(|e| Error::parse(line_no, e.to_string()))?;
        let mut p = ParticleState::new(position, vec3(&x[3..]))
            .map_err(|e| Error::parse(line_no, e.to_string()))?;
        p.last_update = time;
        particles.push(p);
    }
    if particles.len() != n {
        return Err(Error::parse(
            lines.len(),
            format!("header announces {n} particles, found {}", particles.len()),
        ));
    }
    let mut state = SystemState::new(particles, header.get("eps")?)?;
    state.current_time = time;
    Ok(state)
}

pub fn load_state(path: impl AsRef<Path>) -> Result<SystemState> {
    read_state(open(path.as_ref())?)
}

/// A comma-separated table with a header row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if its width differs from the header's, which
    /// is a programming error rather than a data error.
    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width differs from header"
        );
        self.rows.push(row);
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(1, format!("no column named {name}")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>> {
        let c = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[c].as_str()).collect())
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>> {
        let c = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r[c].parse()
                    .map_err(|_| Error::parse(k + 2, format!("cannot parse {:?} in {name}", r[c])))
            })
            .collect()
    }

    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read(r: impl BufRead) -> Result<Self> {
        let lines = read_lines(r)?;
        let mut it = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = it.next().ok_or_else(|| Error::parse(1, "empty table"))?;
        let header: Vec<String> = first.split(',').map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (k, line) in it {
            let row: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
            if row.len() != header.len() {
                return Err(Error::parse(
                    k + 1,
                    format!("expected {} fields, found {}", header.len(), row.len()),
                ));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = create(path)?;
        with_path(path, self.write(&mut w).and_then(|_| w.flush()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Table::read(open(path.as_ref())?)
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn save_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    with_path(path, w.write_all(text.as_bytes()).and_then(|_| w.flush()))
}

pub fn load_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
