//! Time-series CSV files and binary field snapshots.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mpfc_core::{Field, Grid, State};

use crate::error::{LabError, Result};

pub const TIMESERIES_HEADER: [&str; 9] = [
    "t",
    "mean_phi",
    "mean_phit",
    "charge",
    "energy",
    "full_energy",
    "hminus1_phit",
    "h2_phi",
    "identity_residual",
];

/// One sampled time level of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub mean_phi: f64,
    pub mean_phit: f64,
    pub charge: f64,
    pub energy: f64,
    pub full_energy: f64,
    pub hminus1_phit: f64,
    pub h2_phi: f64,
    pub identity_residual: f64,
}

impl LogRow {
    fn fields(&self) -> [f64; 9] {
        [
            self.t,
            self.mean_phi,
            self.mean_phit,
            self.charge,
            self.energy,
            self.full_energy,
            self.hminus1_phit,
            self.h2_phi,
            self.identity_residual,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `header` and `rows` as CSV with [`fmt_real`] formatting.
pub fn write_table<'a>(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(LabError::csv(path))?;
    w.write_record(header).map_err(LabError::csv(path))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| fmt_real(v)))
            .map_err(LabError::csv(path))?;
    }
    w.flush().map_err(LabError::io(path))
}

pub fn write_timeseries(log: &RunLog, path: &Path) -> Result<()> {
    let rows: Vec<[f64; 9]> = log.rows.iter().map(LogRow::fields).collect();
    write_table(path, &TIMESERIES_HEADER, rows.iter().map(|r| r.as_slice()))
}

const MAGIC: &[u8; 5] = b"MPFC1";

/// Binary field dump: magic `MPFC1`, then little-endian `u64` dimension,
/// one `u64` per axis, `f64` time, β and ε, then the samples of `φ` and of
/// `φ_t` as little-endian `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub shape: Vec<usize>,
    pub time: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub phi: Vec<f64>,
    pub phi_t: Vec<f64>,
}

impl Snapshot {
    pub fn from_state(state: &State, epsilon: f64) -> Snapshot {
        Snapshot {
            shape: state.phi().grid().shape().to_vec(),
            time: state.time(),
            beta: state.beta(),
            epsilon,
            phi: state.phi().values().to_vec(),
            phi_t: state.phi_t().values().to_vec(),
        }
    }

    pub fn to_state(&self) -> mpfc_core::Result<State> {
        let grid = Grid::with_shape(&self.shape)?;
        State::new(
            Field::from_values(&grid, self.phi.clone())?,
            Field::from_values(&grid, self.phi_t.clone())?,
            self.beta,
            self.time,
        )
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.shape.len() as u64).to_le_bytes())?;
        for &n in &self.shape {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for v in [self.time, self.beta, self.epsilon] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &v in self.phi.iter().chain(&self.phi_t) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    /// Parses a snapshot; `Err` carries a description of what is wrong.
    pub fn read_from(mut r: impl Read) -> std::result::Result<Snapshot, String> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != MAGIC {
            return Err(format!("bad magic {magic:?}"));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> std::result::Result<[u8; 8], String> {
            r.read_exact(&mut word).map_err(|e| e.to_string())?;
            Ok(word)
        };
        let dim = u64::from_le_bytes(next(&mut r)?);
        if !(1..=3).contains(&dim) {
            return Err(format!("dimension {dim}"));
        }
        let mut shape = Vec::with_capacity(dim as usize);
        for _ in 0..dim {
            let n = u64::from_le_bytes(next(&mut r)?);
            if !(4..=1 << 16).contains(&n) {
                return Err(format!("axis length {n}"));
            }
            shape.push(n as usize);
        }
        let time = f64::from_le_bytes(next(&mut r)?);
        let beta = f64::from_le_bytes(next(&mut r)?);
        let epsilon = f64::from_le_bytes(next(&mut r)?);
        let len: usize = shape.iter().product();
        let mut payload = vec![0u8; 16 * len];
        r.read_exact(&mut payload)
            .map_err(|e| format!("payload: {e}"))?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| e.to_string())? != 0 {
            return Err("trailing bytes after payload".into());
        }
        let mut values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
        let phi = values.by_ref().take(len).collect();
        let phi_t = values.collect();
        Ok(Snapshot {
            shape,
            time,
            beta,
            epsilon,
            phi,
            phi_t,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(LabError::io(path))?;
        self.write_to(BufWriter::new(file))
            .map_err(LabError::io(path))
    }

    pub fn load(path: &Path) -> Result<Snapshot> {
        let file = File::open(path).map_err(LabError::io(path))?;
        Snapshot::read_from(BufReader::new(file)).map_err(|reason| LabError::BadSnapshot {
            path: path.to_path_buf(),
            reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> LogRow {
        LogRow {
            t,
            mean_phi: 0.1,
            mean_phit: -1.0 / 3.0,
            charge: std::f64::consts::PI,
            energy: -1e-300,
            full_energy: 1e300,
            hminus1_phit: 0.0,
            h2_phi: 2.5,
            identity_residual: f64::MIN_POSITIVE,
        }
    }

    #[test]
    fn empty_log_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ts.csv");
        write_timeseries(&RunLog::default(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{}\n", TIMESERIES_HEADER.join(",")));
    }

    #[test]
    fn rows_round_trip_through_csv_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ts.csv");
        let log = RunLog {
            rows: vec![row(0.125)],
        };
        write_timeseries(&log, &path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap(), TIMESERIES_HEADER.as_slice());
        let records: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(records.len(), 1);
        let parsed: Vec<f64> = records[0].iter().map(|s| s.parse().unwrap()).collect();
        assert_eq!(parsed, log.rows[0].fields().to_vec());
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("ts.csv");
        assert!(write_timeseries(&RunLog::default(), &path).is_err());
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let grid = Grid::with_shape(&[8, 4]).unwrap();
        let phi = Field::from_fn(&grid, |x| (x[0] * 7.0).sin() + x[1] / 3.0);
        let v = Field::from_fn(&grid, |x| 1e-310 * x[0] - 0.1);
        let state = State::new(phi, v, 0.3, 1.75).unwrap();
        let snap = Snapshot::from_state(&state, 0.5);
        let mut bytes = Vec::new();
        snap.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 5 + 8 * 3 + 8 * 3 + 16 * 32);
        assert_eq!(&bytes[..5], b"MPFC1");
        let back = Snapshot::read_from(bytes.as_slice()).unwrap();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.phi), bits(&snap.phi));
        assert_eq!(bits(&back.phi_t), bits(&snap.phi_t));
        assert_eq!(back, snap);
        let restored = back.to_state().unwrap();
        assert_eq!(restored.phi().values(), state.phi().values());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        snap.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        assert_eq!(Snapshot::load(&path).unwrap(), snap);
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let grid = Grid::new(1, 8).unwrap();
        let snap =
            Snapshot::from_state(&State::pfc(Field::constant(&grid, 1.0), 0.0).unwrap(), 0.5);
        let mut bytes = Vec::new();
        snap.write_to(&mut bytes).unwrap();
        assert!(Snapshot::read_from(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Snapshot::read_from(extra.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Snapshot::read_from(bad.as_slice()).is_err());
    }
}
