//! Demand traces: CSV ingestion, the named reference instances and a
//! synthetic bursty-demand generator.
//!
//! The on-disk format is a headed CSV with one row per (quantum, user):
//!
//! ```text
//! quantum,user,demand
//! 0,A,3
//! 0,B,2
//! ```
//!
//! Quanta are 0-based. Users are ordered by first appearance. Cells that
//! never appear default to zero demand.

mod config_file;
mod examples;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

pub use config_file::{parse_config, FairShareSpec, FileConfig};
pub use examples::{gen_example, Example, EXAMPLE_NAMES};
pub use synthetic::{cv_of, gen_synthetic, BurstParams};

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: negative demand {value}")]
    NegativeDemand { line: u64, value: String },
    #[error("line {line}: duplicate entry for quantum {quantum}, user {user}")]
    Duplicate {
        line: u64,
        quantum: u64,
        user: String,
    },
    #[error("no quanta")]
    NoQuanta,
    #[error("unknown example {0:?}")]
    UnknownExample(String),
    #[error("example {name} needs n >= {min}, got {n}")]
    InstanceTooSmall { name: String, min: usize, n: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("trace shape mismatch: {0}")]
    Shape(String),
}

/// Units of the demand column when loading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemandUnits {
    Slices,
    /// Bytes, rounded up to whole slices of the given size in MiB.
    Bytes {
        slice_mb: u64,
    },
}

/// Per-quantum, per-user integer demands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandTrace {
    users: Vec<String>,
    /// `demand[t][u]`.
    demand: Vec<Vec<u64>>,
}

impl DemandTrace {
    pub fn new(users: Vec<String>, demand: Vec<Vec<u64>>) -> Result<Self, TraceError> {
        if let Some((t, row)) = demand
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != users.len())
        {
            return Err(TraceError::Shape(format!(
                "quantum {t} has {} entries for {} users",
                row.len(),
                users.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = users.iter().find(|u| !seen.insert(*u)) {
            return Err(TraceError::Shape(format!("duplicate user {dup}")));
        }
        Ok(DemandTrace { users, demand })
    }

    /// Builds a trace from per-user columns (`columns[u][t]`).
    pub fn from_columns(users: Vec<String>, columns: &[Vec<u64>]) -> Result<Self, TraceError> {
        let quanta = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != quanta) || columns.len() != users.len() {
            return Err(TraceError::Shape("ragged columns".into()));
        }
        let demand = (0..quanta)
            .map(|t| columns.iter().map(|c| c[t]).collect())
            .collect();
        DemandTrace::new(users, demand)
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_quanta(&self) -> usize {
        self.demand.len()
    }

    pub fn user_index(&self, name: &str) -> Option<usize> {
        self.users.iter().position(|u| u == name)
    }

    /// Demands of every user in quantum `t`.
    pub fn quantum(&self, t: usize) -> &[u64] {
        &self.demand[t]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.demand
    }

    pub fn get(&self, t: usize, user: usize) -> u64 {
        self.demand[t][user]
    }

    /// Demands of one user over time.
    pub fn column(&self, user: usize) -> Vec<u64> {
        self.demand.iter().map(|row| row[user]).collect()
    }

    /// Copy of the trace with one user's demands replaced.
    pub fn with_column(&self, user: usize, column: &[u64]) -> Result<Self, TraceError> {
        if column.len() != self.n_quanta() || user >= self.n_users() {
            return Err(TraceError::Shape(
                "replacement column has the wrong length".into(),
            ));
        }
        let mut out = self.clone();
        for (row, d) in out.demand.iter_mut().zip(column) {
            row[user] = *d;
        }
        Ok(out)
    }

    /// Sum over all quanta of each user's demand.
    pub fn totals(&self) -> Vec<u64> {
        (0..self.n_users())
            .map(|u| self.demand.iter().map(|r| r[u]).sum())
            .collect()
    }

    /// Writes every cell, zeros included, in quantum-major order.
    pub fn save<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        let mut out = csv::Writer::from_writer(writer);
        let io_err = |e: csv::Error| TraceError::Io {
            path: "<output>".into(),
            source: e.into(),
        };
        out.write_record(["quantum", "user", "demand"])
            .map_err(io_err)?;
        for (t, row) in self.demand.iter().enumerate() {
            for (user, d) in self.users.iter().zip(row) {
                out.write_record([t.to_string(), user.clone(), d.to_string()])
                    .map_err(io_err)?;
            }
        }
        out.flush().map_err(|e| TraceError::Io {
            path: "<output>".into(),
            source: e,
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_path(&self, path: &Path) -> Result<(), TraceError> {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        self.save(io::BufWriter::new(file))
    }
}

fn io_error(path: &Path, source: io::Error) -> TraceError {
    TraceError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses a trace whose demand column counts slices.
pub fn load_trace<R: Read>(reader: R) -> Result<DemandTrace, TraceError> {
    load_trace_with(reader, DemandUnits::Slices)
}

pub fn load_trace_path(path: &Path) -> Result<DemandTrace, TraceError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    load_trace(io::BufReader::new(file))
}

pub fn load_trace_with<R: Read>(reader: R, units: DemandUnits) -> Result<DemandTrace, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(TraceError::NoQuanta);
    }
    if headers.iter().collect::<Vec<_>>() != ["quantum", "user", "demand"] {
        return Err(TraceError::Malformed {
            line: 1,
            message: "expected header `quantum,user,demand`".into(),
        });
    }

    let mut users: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells: BTreeMap<(u64, usize), u64> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| TraceError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(TraceError::Malformed {
                line,
                message: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let quantum: u64 = record[0].parse().map_err(|_| TraceError::Malformed {
            line,
            message: format!("bad quantum {:?}", &record[0]),
        })?;
        let user = record[1].to_string();
        if user.is_empty() {
            return Err(TraceError::Malformed {
                line,
                message: "empty user".into(),
            });
        }
        let raw = &record[2];
        let value: i128 = raw.parse().map_err(|_| TraceError::Malformed {
            line,
            message: format!("bad demand {raw:?}"),
        })?;
        if value < 0 {
            return Err(TraceError::NegativeDemand {
                line,
                value: raw.to_string(),
            });
        }
        let demand = match units {
            DemandUnits::Slices => u64::try_from(value).map_err(|_| TraceError::Malformed {
                line,
                message: format!("demand {raw} too large"),
            })?,
            DemandUnits::Bytes { slice_mb } => {
                let slice = (slice_mb.max(1) as i128) << 20;
                ((value + slice - 1) / slice) as u64
            }
        };
        let u = *index.entry(user.clone()).or_insert_with(|| {
            users.push(user.clone());
            users.len() - 1
        });
        if cells.insert((quantum, u), demand).is_some() {
            return Err(TraceError::Duplicate {
                line,
                quantum,
                user,
            });
        }
    }
    let Some(last) = cells.keys().map(|(q, _)| *q).max() else {
        return Err(TraceError::NoQuanta);
    };
    let mut demand = vec![vec![0u64; users.len()]; last as usize + 1];
    for ((q, u), d) in cells {
        demand[q as usize][u] = d;
    }
    DemandTrace::new(users, demand)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_single_quantum() {
        let t = load_trace("quantum,user,demand\n0,A,3\n0,B,2\n0,C,1\n".as_bytes()).unwrap();
        assert_eq!(t.n_quanta(), 1);
        assert_eq!(t.users(), ["A", "B", "C"]);
        assert_eq!(t.quantum(0), [3, 2, 1]);
    }

    #[test]
    fn empty_input_has_no_quanta() {
        assert!(matches!(
            load_trace("".as_bytes()),
            Err(TraceError::NoQuanta)
        ));
        assert!(matches!(
            load_trace("quantum,user,demand\n".as_bytes()),
            Err(TraceError::NoQuanta)
        ));
    }

    #[test]
    fn gaps_default_to_zero() {
        let t = load_trace("quantum,user,demand\n0,A,1\n0,B,2\n1,A,3\n".as_bytes()).unwrap();
        assert_eq!(t.quantum(1), [3, 0]);
    }

    #[test]
    fn rejects_bad_rows() {
        let neg = load_trace("quantum,user,demand\n0,A,-1\n".as_bytes());
        assert!(matches!(
            neg,
            Err(TraceError::NegativeDemand { line: 2, .. })
        ));
        let dup = load_trace("quantum,user,demand\n0,A,1\n0,A,2\n".as_bytes());
        assert!(matches!(dup, Err(TraceError::Duplicate { quantum: 0, .. })));
        let bad = load_trace("quantum,user,demand\n0,A,x\n".as_bytes());
        assert!(matches!(bad, Err(TraceError::Malformed { .. })));
        let short = load_trace("quantum,user,demand\n0,A\n".as_bytes());
        assert!(matches!(short, Err(TraceError::Malformed { .. })));
        let header = load_trace("q,u,d\n0,A,1\n".as_bytes());
        assert!(matches!(header, Err(TraceError::Malformed { line: 1, .. })));
    }

    #[test]
    fn byte_demands_round_up_to_slices() {
        let mib = 1u64 << 20;
        let text = format!(
            "quantum,user,demand\n0,A,{}\n0,B,{}\n0,C,0\n",
            128 * mib,
            128 * mib + 1
        );
        let t = load_trace_with(text.as_bytes(), DemandUnits::Bytes { slice_mb: 128 }).unwrap();
        assert_eq!(t.quantum(0), [1, 2, 0]);
    }

    #[test]
    fn save_then_load_is_identity() {
        for name in EXAMPLE_NAMES {
            let ex = gen_example(name, None).unwrap();
            let text = ex.trace.to_csv_string();
            assert_eq!(load_trace(text.as_bytes()).unwrap(), ex.trace, "{name}");
        }
    }
}
