//! CSV and JSON interchange formats.
//!
//! CSV files are comma separated with a mandatory header row, `.` as the
//! decimal mark and LF line endings. Floats are written in shortest
//! round-trip form, so re-reading a file reproduces the values exactly.
//!
//! | file            | columns                                  |
//! |-----------------|------------------------------------------|
//! | trajectory      | `time_s,x_m,v_mps`                       |
//! | spectrum        | `freq_hz,psd_m2_per_hz`                  |
//! | ESR scan        | `freq_hz,i_pl[,sigma]`                   |
//! | strain calib.   | `power_w,d_hz`                           |
//! | heating series  | `pressure_torr,temperature_k`            |
//! | oxygen series   | `pressure_torr,delta_counts_per_s`       |
//! | escape trials   | `trial,time_s,escaped`                   |

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::{EscapeTrial, Trajectory};
use crate::error::{Error, Result};
use crate::nvesr::EsrSpectrum;
use crate::psdfit::PsdEstimate;
use crate::units::{pa_to_torr, torr_to_pa};

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    time_s: f64,
    x_m: f64,
    v_mps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PsdRow {
    freq_hz: f64,
    psd_m2_per_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EsrRow {
    freq_hz: f64,
    i_pl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationRow {
    power_w: f64,
    d_hz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PressureTempRow {
    pressure_torr: f64,
    temperature_k: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct O2Row {
    pressure_torr: f64,
    delta_counts_per_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EscapeRow {
    trial: usize,
    time_s: f64,
    escaped: bool,
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn read_rows<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    if rows.is_empty() {
        return Err(Error::domain("CSV file has no data rows"));
    }
    Ok(rows)
}

fn write_rows<T: Serialize, W: Write>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    let f = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(std::io::BufWriter::new(f))
}

pub fn write_trajectory<W: Write>(w: W, traj: &Trajectory) -> Result<()> {
    write_rows(
        w,
        (0..traj.len()).map(|i| TrajectoryRow {
            time_s: traj.time(i),
            x_m: traj.positions[i],
            v_mps: traj.velocities[i],
        }),
    )
}

/// Read a trajectory; the step is taken from the first two time stamps and
/// the seed is recorded as 0.
pub fn read_trajectory<R: Read>(r: R) -> Result<Trajectory> {
    let rows: Vec<TrajectoryRow> = read_rows(r)?;
    if rows.len() < 2 {
        return Err(Error::domain("trajectory needs at least 2 rows"));
    }
    let dt = rows[1].time_s - rows[0].time_s;
    Trajectory::new(
        dt,
        rows.iter().map(|r| r.x_m).collect(),
        rows.iter().map(|r| r.v_mps).collect(),
        0,
    )
}

pub fn write_psd<W: Write>(w: W, psd: &PsdEstimate) -> Result<()> {
    write_rows(
        w,
        psd.frequencies.iter().zip(&psd.values).map(|(&f, &v)| PsdRow {
            freq_hz: f,
            psd_m2_per_hz: v,
        }),
    )
}

/// Read a spectrum. The number of averages is not stored in the file and
/// is returned as 1.
pub fn read_psd<R: Read>(r: R) -> Result<PsdEstimate> {
    let rows: Vec<PsdRow> = read_rows(r)?;
    PsdEstimate::new(
        rows.iter().map(|r| r.freq_hz).collect(),
        rows.iter().map(|r| r.psd_m2_per_hz).collect(),
        1,
    )
}

pub fn write_esr<W: Write>(w: W, spec: &EsrSpectrum) -> Result<()> {
    write_rows(
        w,
        (0..spec.len()).map(|i| EsrRow {
            freq_hz: spec.frequencies[i],
            i_pl: spec.i_pl[i],
            sigma: spec.sigma.as_ref().map(|s| s[i]),
        }),
    )
}

/// Read an ESR scan. The `sigma` column is optional but, when present, must
/// be filled on every row.
pub fn read_esr<R: Read>(r: R) -> Result<EsrSpectrum> {
    let rows: Vec<EsrRow> = read_rows(r)?;
    let n_sigma = rows.iter().filter(|r| r.sigma.is_some()).count();
    let sigma = match n_sigma {
        0 => None,
        n if n == rows.len() => Some(rows.iter().map(|r| r.sigma.unwrap()).collect()),
        _ => return Err(Error::domain("sigma column is only partly filled")),
    };
    EsrSpectrum::new(
        rows.iter().map(|r| r.freq_hz).collect(),
        rows.iter().map(|r| r.i_pl).collect(),
        sigma,
    )
}

/// `(trap power W, D Hz)` pairs.
pub fn read_calibration<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<CalibrationRow> = read_rows(r)?;
    Ok(rows.iter().map(|r| (r.power_w, r.d_hz)).collect())
}

pub fn write_calibration<W: Write>(w: W, obs: &[(f64, f64)]) -> Result<()> {
    write_rows(w, obs.iter().map(|&(power_w, d_hz)| CalibrationRow { power_w, d_hz }))
}

/// `(pressure Pa, temperature K)` pairs, converted from Torr.
pub fn read_pressure_temperature<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<PressureTempRow> = read_rows(r)?;
    Ok(rows.iter().map(|r| (torr_to_pa(r.pressure_torr), r.temperature_k)).collect())
}

/// Points given as `(pressure Pa, temperature K)`; written in Torr.
pub fn write_pressure_temperature<W: Write>(w: W, points: &[(f64, f64)]) -> Result<()> {
    write_rows(
        w,
        points.iter().map(|&(p, t)| PressureTempRow {
            pressure_torr: pa_to_torr(p),
            temperature_k: t,
        }),
    )
}

/// `(pressure Pa, count difference photons/s)` pairs, converted from Torr.
pub fn read_o2_counts<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<O2Row> = read_rows(r)?;
    Ok(rows.iter().map(|r| (torr_to_pa(r.pressure_torr), r.delta_counts_per_s)).collect())
}

pub fn write_o2_counts<W: Write>(w: W, points: &[(f64, f64)]) -> Result<()> {
    write_rows(
        w,
        points.iter().map(|&(p, c)| O2Row {
            pressure_torr: pa_to_torr(p),
            delta_counts_per_s: c,
        }),
    )
}

pub fn write_escape_trials<W: Write>(w: W, trials: &[EscapeTrial]) -> Result<()> {
    write_rows(
        w,
        trials.iter().enumerate().map(|(trial, t)| EscapeRow {
            trial,
            time_s: t.time,
            escaped: t.escaped,
        }),
    )
}

/// Write any serializable value as pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Path-based convenience wrappers.
pub mod file {
    use super::*;

    pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
        super::read_trajectory(open(path)?)
    }
    pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
        super::write_trajectory(create(path)?, traj)
    }
    pub fn read_psd(path: &Path) -> Result<PsdEstimate> {
        super::read_psd(open(path)?)
    }
    pub fn write_psd(path: &Path, psd: &PsdEstimate) -> Result<()> {
        super::write_psd(create(path)?, psd)
    }
    pub fn read_esr(path: &Path) -> Result<EsrSpectrum> {
        super::read_esr(open(path)?)
    }
    pub fn write_esr(path: &Path, spec: &EsrSpectrum) -> Result<()> {
        super::write_esr(create(path)?, spec)
    }
    pub fn read_calibration(path: &Path) -> Result<Vec<(f64, f64)>> {
        super::read_calibration(open(path)?)
    }
    pub fn write_calibration(path: &Path, obs: &[(f64, f64)]) -> Result<()> {
        super::write_calibration(create(path)?, obs)
    }
    pub fn read_pressure_temperature(path: &Path) -> Result<Vec<(f64, f64)>> {
        super::read_pressure_temperature(open(path)?)
    }
    pub fn write_pressure_temperature(path: &Path, points: &[(f64, f64)]) -> Result<()> {
        super::write_pressure_temperature(create(path)?, points)
    }
    pub fn read_o2_counts(path: &Path) -> Result<Vec<(f64, f64)>> {
        super::read_o2_counts(open(path)?)
    }
    pub fn write_o2_counts(path: &Path, points: &[(f64, f64)]) -> Result<()> {
        super::write_o2_counts(create(path)?, points)
    }
    pub fn write_escape_trials(path: &Path, trials: &[EscapeTrial]) -> Result<()> {
        super::write_escape_trials(create(path)?, trials)
    }
    pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
        super::write_json(create(path)?, value)
    }
}
