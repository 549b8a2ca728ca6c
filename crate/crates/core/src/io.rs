//! File formats: symbol-grid and RV-map binary fixtures, and the CSV tables
//! the CLI emits. Every CSV starts with a header row whose column names
//! carry units.
//!
//! Grid binary layout (little endian): magic `RSGRID01`, `u32` N, `u32` M,
//! `u64` seed, then N*M `(re, im)` pairs of `f64`, row-major over
//! (subcarrier, symbol). The map layout is the same with magic `RSRVMAP1`
//! and no seed.

use std::io::{Read, Write};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::doa::SubcarrierEstimate;
use crate::risopt::{IterationRecord, PatternPoint};
use crate::rvmap::{RangeDopplerMap, SweepRow};
use crate::waveform::{RisConfig, SymbolGrid};

pub const GRID_MAGIC: &[u8; 8] = b"RSGRID01";
pub const MAP_MAGIC: &[u8; 8] = b"RSRVMAP1";

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn write_complex_block<W: Write>(w: &mut W, data: &Array2<Complex64>) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 16);
    for v in data.iter() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_complex_block<R: Read>(r: &mut R, n: usize, m: usize) -> Result<Array2<Complex64>> {
    let mut buf = vec![0u8; n * m * 16];
    r.read_exact(&mut buf)?;
    let vals: Vec<Complex64> = buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok(Array2::from_shape_vec((n, m), vals).expect("length n*m"))
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<(usize, usize)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic: expected {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let n = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    Ok((n, m))
}

fn ensure_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    Ok(())
}

pub fn write_grid_binary<W: Write>(grid: &SymbolGrid, mut w: W) -> Result<()> {
    let (n, m) = grid.data.dim();
    w.write_all(GRID_MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(m as u32).to_le_bytes())?;
    w.write_all(&grid.seed.to_le_bytes())?;
    write_complex_block(&mut w, &grid.data)
}

pub fn read_grid_binary<R: Read>(mut r: R) -> Result<SymbolGrid> {
    let (n, m) = read_header(&mut r, GRID_MAGIC)?;
    let mut seed = [0u8; 8];
    r.read_exact(&mut seed)?;
    let data = read_complex_block(&mut r, n, m)?;
    ensure_eof(&mut r)?;
    SymbolGrid::new(data, u64::from_le_bytes(seed))
}

pub fn write_map_binary<W: Write>(map: &RangeDopplerMap, mut w: W) -> Result<()> {
    let (n, m) = map.dim();
    w.write_all(MAP_MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(m as u32).to_le_bytes())?;
    write_complex_block(&mut w, &map.map)
}

/// Reads the complex payload of a map fixture (axes are not stored).
pub fn read_map_binary<R: Read>(mut r: R) -> Result<Array2<Complex64>> {
    let (n, m) = read_header(&mut r, MAP_MAGIC)?;
    let data = read_complex_block(&mut r, n, m)?;
    ensure_eof(&mut r)?;
    Ok(data)
}

/// `# n_subcarriers=N n_symbols=M seed=S` followed by one row per element.
pub fn write_grid_csv<W: Write>(grid: &SymbolGrid, mut w: W) -> Result<()> {
    let (n, m) = grid.data.dim();
    writeln!(w, "# n_subcarriers={n} n_symbols={m} seed={}", grid.seed)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["subcarrier_index", "symbol_index", "re_linear", "im_linear"])
        .map_err(csv_err)?;
    for ((i, j), v) in grid.data.indexed_iter() {
        out.serialize((i, j, v.re, v.im)).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_grid_csv<R: Read>(r: R) -> Result<SymbolGrid> {
    let mut text = String::new();
    let mut r = r;
    r.read_to_string(&mut text)?;
    let first = text.lines().next().unwrap_or_default();
    let field = |key: &str| -> Result<u64> {
        first
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| Error::Format(format!("grid CSV header lacks `{key}`")))?
            .parse()
            .map_err(|_| Error::Format(format!("grid CSV header `{key}` is not an integer")))
    };
    let (n, m, seed) = (
        field("n_subcarriers")? as usize,
        field("n_symbols")? as usize,
        field("seed")?,
    );
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut data = Array2::from_elem((n, m), Complex64::new(f64::NAN, f64::NAN));
    let mut count = 0;
    for rec in rd.deserialize::<(usize, usize, f64, f64)>() {
        let (i, j, re, im) = rec.map_err(csv_err)?;
        if i >= n || j >= m {
            return Err(Error::Format(format!("grid CSV index ({i}, {j}) outside ({n}, {m})")));
        }
        data[[i, j]] = Complex64::new(re, im);
        count += 1;
    }
    if count != n * m {
        return Err(Error::Format(format!("grid CSV has {count} rows, expected {}", n * m)));
    }
    SymbolGrid::new(data, seed)
}

/// One row per (element, slot): phase, amplitude and the slot's sign.
pub fn write_ris_csv<W: Write>(ris: &RisConfig, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["element_index", "slot_index", "phase_rad", "amplitude_linear", "sign"])
        .map_err(csv_err)?;
    for ((l, m), p) in ris.phases.indexed_iter() {
        out.serialize((l, m, *p, ris.amplitudes[[l, m]], ris.sign_pattern[m]))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ris_csv<R: Read>(r: R) -> Result<RisConfig> {
    let mut rd = csv::Reader::from_reader(r);
    let rows: Vec<(usize, usize, f64, f64, f64)> = rd
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)?;
    let l = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let m = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != l * m || l == 0 {
        return Err(Error::Format(format!(
            "RIS CSV has {} rows for a {l} x {m} surface",
            rows.len()
        )));
    }
    let mut phases = Array2::from_elem((l, m), f64::NAN);
    let mut amps = Array2::from_elem((l, m), f64::NAN);
    let mut signs = vec![f64::NAN; m];
    for (i, j, p, a, s) in rows {
        phases[[i, j]] = p;
        amps[[i, j]] = a;
        if !signs[j].is_nan() && signs[j] != s {
            return Err(Error::Format(format!("slot {j} has inconsistent signs")));
        }
        signs[j] = s;
    }
    RisConfig::new(phases, amps, signs)
}

pub fn write_spectrum_csv<W: Write>(angles_deg: &[f64], per: &[SubcarrierEstimate], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["angle_deg", "power_db", "subcarrier_index"])
        .map_err(csv_err)?;
    for est in per {
        for (a, p) in angles_deg.iter().zip(&est.spectrum) {
            out.serialize((a, 10.0 * p.log10(), est.subcarrier)).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_pattern_csv<W: Write>(pattern: &[PatternPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["angle_deg", "gain_db"]).map_err(csv_err)?;
    for p in pattern {
        out.serialize((p.angle_deg, p.gain_db)).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_map_csv<W: Write>(map: &RangeDopplerMap, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["range_bin", "doppler_bin", "range_m", "velocity_mps", "power_db"])
        .map_err(csv_err)?;
    for ((k, l), v) in map.map.indexed_iter() {
        out.serialize((k, l, map.range_m[k], map.velocity_mps[l], 10.0 * v.norm_sqr().log10()))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_train_csv<W: Write>(records: &[IterationRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "iteration",
        "loss_total_linear",
        "spectrum_term_linear",
        "sinr_term_linear",
        "theta_t_hat_deg",
        "theta_i_hat_deg",
        "resolved",
        "peak_ratio_linear",
        "stepped_peak_ratio_linear",
        "sinr_db",
    ])
    .map_err(csv_err)?;
    for r in records {
        out.serialize((
            r.iteration,
            r.loss.total,
            r.loss.spectrum_term,
            r.loss.sinr_term,
            r.theta_t_hat,
            r.theta_i_hat,
            r.resolved,
            r.peak_ratio,
            r.stepped_peak_ratio,
            r.sinr_db,
        ))
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["inr_db", "stage", "mean_error_m", "std_error_m", "detection_rate"])
        .map_err(csv_err)?;
    for r in rows {
        out.serialize((r.inr_db, r.stage.name(), r.mean_error_m, r.std_error_m, r.detection_rate))
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
