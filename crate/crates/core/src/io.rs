//! Checkpoint and time-series persistence.
//!
//! Checkpoint layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 6 | magic `EASIM1` |
//! | 1 | `u8` dimension |
//! | 4 | `u32` points per axis `n` |
//! | 32 | `f64` t, γ, β, α |
//! | 8·n^N | ρ, row-major |
//! | N·8·n^N | velocity components, each row-major |
//!
//! The time series is a CSV file with header [`DiagnosticsRecord::COLUMNS`],
//! floats written as `{:.16e}` (17 significant digits, exact round trip) and
//! LF line endings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::spectral::{Field, Grid, VectorField};
use crate::state::PrimitiveState;

pub const MAGIC: &[u8; 6] = b"EASIM1";
const HEADER_LEN: usize = 6 + 1 + 4 + 4 * 8;

/// State plus the three model scalars stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: PrimitiveState,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Size in bytes of a checkpoint file for `grid`.
pub fn checkpoint_len(grid: Grid) -> usize {
    HEADER_LEN + 8 * grid.len() * (1 + grid.dim())
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let s = &ckpt.state;
    let grid = s.grid();
    let mut out = Vec::with_capacity(checkpoint_len(grid));
    out.extend_from_slice(MAGIC);
    out.push(grid.dim() as u8);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    for v in [s.t, ckpt.gamma, ckpt.beta, ckpt.alpha] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for field in std::iter::once(&s.rho).chain(s.u.components()) {
        for v in field.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8-byte slice"))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 6 || &bytes[..5] != b"EASIM" {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    if bytes[5] != MAGIC[5] {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {:?}",
            bytes[5] as char
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated checkpoint header: {} bytes",
            bytes.len()
        )));
    }
    let dim = bytes[6] as usize;
    let n = u32::from_le_bytes(bytes[7..11].try_into().expect("4-byte slice")) as usize;
    let grid = Grid::new(dim, n).map_err(|e| Error::Format(format!("checkpoint grid: {e}")))?;
    let want = checkpoint_len(grid);
    if bytes.len() != want {
        return Err(Error::Format(format!(
            "checkpoint length {} does not match {want} for dim {dim}, n {n}",
            bytes.len()
        )));
    }
    let t = f64_at(bytes, 11);
    let gamma = f64_at(bytes, 19);
    let beta = f64_at(bytes, 27);
    let alpha = f64_at(bytes, 35);
    let len = grid.len();
    let read_field = |k: usize| -> Result<Field> {
        let start = HEADER_LEN + 8 * len * k;
        Field::new(grid, (0..len).map(|i| f64_at(bytes, start + 8 * i)).collect())
    };
    let rho = read_field(0)?;
    let u = VectorField::new((1..=dim).map(read_field).collect::<Result<_>>()?)?;
    Ok(Checkpoint {
        state: PrimitiveState::new(rho, u, t)?,
        gamma,
        beta,
        alpha,
    })
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Streams records to a CSV file; the header is written on creation.
pub struct TimeseriesWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl TimeseriesWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        TimeseriesWriter::new(BufWriter::new(file))
    }
}

impl<W: Write> TimeseriesWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        inner.write_record(DiagnosticsRecord::COLUMNS)?;
        Ok(TimeseriesWriter { inner })
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        let mut row = Vec::with_capacity(DiagnosticsRecord::COLUMNS.len());
        row.push(r.step.to_string());
        row.extend(r.values().iter().map(|v| format!("{v:.16e}")));
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("<timeseries>", e))?;
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<timeseries>", e.into_error()))
    }
}

pub fn emit_timeseries(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    let mut w = TimeseriesWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn timeseries_to_string(records: &[DiagnosticsRecord]) -> Result<String> {
    let mut w = TimeseriesWriter::new(Vec::new())?;
    for r in records {
        w.write(r)?;
    }
    Ok(String::from_utf8(w.finish()?).expect("csv output is ascii"))
}

pub fn parse_timeseries<R: Read>(source: R) -> Result<Vec<DiagnosticsRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = rdr.headers()?.clone();
    if header.iter().ne(DiagnosticsRecord::COLUMNS) {
        return Err(Error::Format(format!(
            "unexpected timeseries header: {}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize().map(|r| Ok(r?)).collect()
}

pub fn read_timeseries(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_timeseries(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(dim: usize, n: usize) -> Checkpoint {
        let g = Grid::new(dim, n).unwrap();
        let rho = Field::from_fn(g, |x| 1.0 + 0.1 * (6.0 * x[0]).sin() + 0.05 * x[1]).unwrap();
        let u = VectorField::new(
            (0..dim)
                .map(|a| Field::from_fn(g, |x| (x[0] + 3.0 * x[1] + a as f64).cos() / 3.0).unwrap())
                .collect(),
        )
        .unwrap();
        Checkpoint {
            state: PrimitiveState::new(rho, u, 0.1 + 0.2).unwrap(),
            gamma: 1.4,
            beta: 0.0,
            alpha: 0.5,
        }
    }

    #[test]
    fn checkpoint_size_and_round_trip() {
        let c = ckpt(1, 64);
        let bytes = encode_checkpoint(&c);
        assert_eq!(bytes.len(), 1067);
        assert_eq!(&bytes[..6], b"EASIM1");
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(encode_checkpoint(&back), bytes);
        assert_eq!(back.state.t.to_bits(), c.state.t.to_bits());
        let c2 = ckpt(2, 8);
        assert_eq!(decode_checkpoint(&encode_checkpoint(&c2)).unwrap(), c2);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let mut bytes = encode_checkpoint(&ckpt(1, 16));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1])
            .unwrap_err()
            .to_string()
            .contains("length"));
        assert!(decode_checkpoint(&bytes[..20])
            .unwrap_err()
            .to_string()
            .contains("truncated"));
        bytes[5] = b'2';
        assert!(decode_checkpoint(&bytes).unwrap_err().to_string().contains("version"));
        bytes[0] = b'X';
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(m)) if m.contains("magic")));
    }

    fn record(i: u64) -> DiagnosticsRecord {
        let x = 1.0 / (3.0 + i as f64);
        DiagnosticsRecord {
            step: i,
            t: 0.1 * i as f64,
            mass: 1.0 + 1e-17 * i as f64,
            momentum_x: -x * 1e-300,
            momentum_y: 0.0,
            kinetic: x,
            internal: x.sqrt(),
            dissipation_damping: std::f64::consts::PI * x,
            dissipation_alignment: x.exp(),
            l2_rho_dev: x.ln(),
            hs_sigma: x * x,
            hs_u: 1.0 / x,
            grad_u_inf: x.sin(),
            sigma_holder: x.cos(),
            bkm_integrand: f64::MIN_POSITIVE,
            cross_low: -x,
            cross_high: 5e-324,
            y: f64::MAX,
            v_eps: x / 7.0,
            w_eps: x / 11.0,
            rho_min: 1.0 - x,
        }
    }

    #[test]
    fn csv_round_trip_is_exact_with_lf() {
        let recs: Vec<_> = (0..20).map(record).collect();
        let text = timeseries_to_string(&recs).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().next().unwrap(), DiagnosticsRecord::COLUMNS.join(","));
        let back = parse_timeseries(text.as_bytes()).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in back.iter().zip(&recs) {
            assert_eq!(a.step, b.step);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let text = timeseries_to_string(&[]).unwrap();
        assert_eq!(text, format!("{}\n", DiagnosticsRecord::COLUMNS.join(",")));
        assert!(parse_timeseries(text.as_bytes()).unwrap().is_empty());
        assert!(parse_timeseries("a,b\n1,2\n".as_bytes()).is_err());
    }
}
