//! Dataset persistence: native CSV schemas plus ASL-style ingestion.
//!
//! Native files live in one directory: `imu.csv` (`t,wx,wy,wz,ax,ay,az`),
//! `landmarks.csv` (`t,id,fwx,fwy,fwz,fbx,fby,fbz`, rows sharing a timestamp
//! form one frame) and `groundtruth.csv` (`t,qw,qx,qy,qz,px,py,pz,vx,vy,vz`).
//! Values are written with shortest round-trip formatting, so a write/load
//! cycle reproduces every stream bit for bit.
//!
//! ASL-style files use integer nanosecond timestamps in the first column and
//! `#` comment lines; the IMU layout matches the native column order and the
//! ground truth carries `p, q(wxyz), v` after the timestamp. Landmarks are
//! always native (pre-triangulated world/body pairs).

use crate::geometry::Quaternion;
use crate::kinematics::{ImuSample, NavState};
use crate::sensing::{Landmark, LandmarkFrame};
use crate::simkit::metrics::ErrorRecord;
use nalgebra::Vector3;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{file}:{line}: malformed field `{column}`: {message}")]
    Malformed {
        file: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{file}:{line}: timestamps out of order")]
    OutOfOrder { file: String, line: u64 },
    #[error("{file}:{line}: duplicate landmark id {id} within one frame")]
    DuplicateId { file: String, line: u64, id: u64 },
    #[error("{file}: expected {expected} columns, found {actual} (line {line})")]
    ColumnCount {
        file: String,
        line: u64,
        expected: usize,
        actual: usize,
    },
}

/// Input layout of `load_dataset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    NativeCsv,
    AslCsv,
}

/// A loaded or synthesized dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub imu: Vec<ImuSample>,
    pub landmarks: Vec<LandmarkFrame>,
    pub truth: Option<Vec<(f64, NavState)>>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `imu.csv`, `landmarks.csv` and (when truth is present)
/// `groundtruth.csv` into `dir`, creating it if needed.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let imu_path = dir.join("imu.csv");
    let mut out = String::from("t,wx,wy,wz,ax,ay,az\n");
    for s in &dataset.imu {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.t, s.omega_m.x, s.omega_m.y, s.omega_m.z, s.acc_m.x, s.acc_m.y, s.acc_m.z
        ));
    }
    fs::write(&imu_path, out).map_err(io_err(&imu_path))?;

    let lm_path = dir.join("landmarks.csv");
    let mut out = String::from("t,id,fwx,fwy,fwz,fbx,fby,fbz\n");
    for frame in &dataset.landmarks {
        for lm in &frame.landmarks {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                frame.t, lm.id, lm.f_w.x, lm.f_w.y, lm.f_w.z, lm.f_b.x, lm.f_b.y, lm.f_b.z
            ));
        }
    }
    fs::write(&lm_path, out).map_err(io_err(&lm_path))?;

    if let Some(truth) = &dataset.truth {
        let gt_path = dir.join("groundtruth.csv");
        write_states(&gt_path, truth)?;
    }
    Ok(())
}

/// Writes a `t,qw,qx,qy,qz,px,py,pz,vx,vy,vz` table (ground truth and
/// estimate files share this schema).
pub fn write_states(path: &Path, states: &[(f64, NavState)]) -> Result<(), DatasetError> {
    fs::write(path, states_csv_string(states)).map_err(io_err(path))
}

/// In-memory rendering of [`write_states`]; used directly where byte-exact
/// comparison across runs matters.
pub fn states_csv_string(states: &[(f64, NavState)]) -> String {
    let mut out = String::from("t,qw,qx,qy,qz,px,py,pz,vx,vy,vz\n");
    for (t, s) in states {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            t, s.q.w, s.q.v.x, s.q.v.y, s.q.v.z, s.p.x, s.p.y, s.p.z, s.v.x, s.v.y, s.v.z
        ));
    }
    out
}

/// Writes the per-step error table
/// (`t,re1..re3,pe1..pe3,ve1..ve3,re_norm,pe_norm,ve_norm`).
pub fn write_errors(path: &Path, records: &[ErrorRecord]) -> Result<(), DatasetError> {
    let mut out = String::from("t,re1,re2,re3,pe1,pe2,pe3,ve1,ve2,ve3,re_norm,pe_norm,ve_norm\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.t,
            r.r_e.x,
            r.r_e.y,
            r.r_e.z,
            r.p_e.x,
            r.p_e.y,
            r.p_e.z,
            r.v_e.x,
            r.v_e.y,
            r.v_e.z,
            r.r_norm,
            r.p_norm,
            r.v_norm
        ));
    }
    fs::write(path, out).map_err(io_err(path))
}

struct RowReader {
    file: String,
    records: Vec<(u64, Vec<String>)>,
}

impl RowReader {
    /// Reads all data rows with their 1-based line numbers. `asl` skips `#`
    /// comments and treats the first column as integer nanoseconds.
    fn open(path: &Path, has_header: bool, asl: bool) -> Result<Self, DatasetError> {
        let mut builder = csv::ReaderBuilder::new();
        builder.has_headers(has_header).flexible(true).trim(csv::Trim::All);
        if asl {
            builder.comment(Some(b'#'));
        }
        let mut reader = builder.from_path(path).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;
        let file = path.display().to_string();
        let mut records = Vec::new();
        for result in reader.records() {
            let record = result.map_err(|e| DatasetError::Malformed {
                file: file.clone(),
                line: e
                    .position()
                    .map(|p| p.line())
                    .unwrap_or_default(),
                column: "<record>".into(),
                message: e.to_string(),
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or_default();
            records.push((line, record.iter().map(str::to_owned).collect()));
        }
        Ok(RowReader { file, records })
    }

    fn expect_columns(&self, expected: usize) -> Result<(), DatasetError> {
        for (line, fields) in &self.records {
            if fields.len() < expected {
                return Err(DatasetError::ColumnCount {
                    file: self.file.clone(),
                    line: *line,
                    expected,
                    actual: fields.len(),
                });
            }
        }
        Ok(())
    }

    fn parse_f64(&self, line: u64, fields: &[String], idx: usize, name: &str) -> Result<f64, DatasetError> {
        fields[idx].parse::<f64>().map_err(|e| DatasetError::Malformed {
            file: self.file.clone(),
            line,
            column: name.to_string(),
            message: e.to_string(),
        })
    }

    fn parse_u64(&self, line: u64, fields: &[String], idx: usize, name: &str) -> Result<u64, DatasetError> {
        fields[idx].parse::<u64>().map_err(|e| DatasetError::Malformed {
            file: self.file.clone(),
            line,
            column: name.to_string(),
            message: e.to_string(),
        })
    }

    /// Timestamp of row `fields`: seconds for native files, integer
    /// nanoseconds converted to seconds for ASL files.
    fn parse_time(&self, line: u64, fields: &[String], asl: bool) -> Result<f64, DatasetError> {
        if asl {
            let ns = fields[0].parse::<i128>().map_err(|e| DatasetError::Malformed {
                file: self.file.clone(),
                line,
                column: "t".into(),
                message: e.to_string(),
            })?;
            Ok(ns as f64 / 1e9)
        } else {
            self.parse_f64(line, fields, 0, "t")
        }
    }
}

fn load_imu(path: &Path, asl: bool) -> Result<Vec<ImuSample>, DatasetError> {
    let reader = RowReader::open(path, !asl, asl)?;
    reader.expect_columns(7)?;
    let names = ["t", "wx", "wy", "wz", "ax", "ay", "az"];
    let mut out = Vec::with_capacity(reader.records.len());
    let mut prev = f64::NEG_INFINITY;
    for (line, fields) in &reader.records {
        let t = reader.parse_time(*line, fields, asl)?;
        if t <= prev {
            return Err(DatasetError::OutOfOrder {
                file: reader.file.clone(),
                line: *line,
            });
        }
        prev = t;
        let mut v = [0.0; 6];
        for (i, x) in v.iter_mut().enumerate() {
            *x = reader.parse_f64(*line, fields, i + 1, names[i + 1])?;
        }
        out.push(ImuSample {
            t,
            omega_m: Vector3::new(v[0], v[1], v[2]),
            acc_m: Vector3::new(v[3], v[4], v[5]),
        });
    }
    Ok(out)
}

fn load_landmarks(path: &Path) -> Result<Vec<LandmarkFrame>, DatasetError> {
    let reader = RowReader::open(path, true, false)?;
    reader.expect_columns(8)?;
    let names = ["t", "id", "fwx", "fwy", "fwz", "fbx", "fby", "fbz"];
    let mut frames: Vec<LandmarkFrame> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (line, fields) in &reader.records {
        let t = reader.parse_f64(*line, fields, 0, "t")?;
        let id = reader.parse_u64(*line, fields, 1, "id")?;
        let mut v = [0.0; 6];
        for (i, x) in v.iter_mut().enumerate() {
            *x = reader.parse_f64(*line, fields, i + 2, names[i + 2])?;
        }
        let lm = Landmark {
            id,
            f_w: Vector3::new(v[0], v[1], v[2]),
            f_b: Vector3::new(v[3], v[4], v[5]),
        };
        match frames.last_mut() {
            Some(frame) if frame.t == t => {
                if frame.landmarks.iter().any(|l| l.id == id) {
                    return Err(DatasetError::DuplicateId {
                        file: reader.file.clone(),
                        line: *line,
                        id,
                    });
                }
                frame.landmarks.push(lm);
            }
            _ => {
                if t < prev {
                    return Err(DatasetError::OutOfOrder {
                        file: reader.file.clone(),
                        line: *line,
                    });
                }
                prev = t;
                frames.push(LandmarkFrame {
                    t,
                    landmarks: vec![lm],
                });
            }
        }
    }
    Ok(frames)
}

fn load_truth(path: &Path, asl: bool) -> Result<Vec<(f64, NavState)>, DatasetError> {
    let reader = RowReader::open(path, !asl, asl)?;
    reader.expect_columns(11)?;
    let mut out = Vec::with_capacity(reader.records.len());
    let mut prev = f64::NEG_INFINITY;
    for (line, fields) in &reader.records {
        let t = reader.parse_time(*line, fields, asl)?;
        if t <= prev {
            return Err(DatasetError::OutOfOrder {
                file: reader.file.clone(),
                line: *line,
            });
        }
        prev = t;
        let mut v = [0.0; 10];
        // Native order: q(wxyz), p, v. ASL order: p, q(wxyz), v.
        let names_native = ["qw", "qx", "qy", "qz", "px", "py", "pz", "vx", "vy", "vz"];
        let names_asl = ["px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz"];
        let names = if asl { &names_asl } else { &names_native };
        for (i, x) in v.iter_mut().enumerate() {
            *x = reader.parse_f64(*line, fields, i + 1, names[i])?;
        }
        let (q, p, vel) = if asl {
            (
                Quaternion::new(v[3], v[4], v[5], v[6]),
                Vector3::new(v[0], v[1], v[2]),
                Vector3::new(v[7], v[8], v[9]),
            )
        } else {
            (
                Quaternion::new(v[0], v[1], v[2], v[3]),
                Vector3::new(v[4], v[5], v[6]),
                Vector3::new(v[7], v[8], v[9]),
            )
        };
        out.push((
            t,
            NavState {
                q,
                p,
                v: vel,
                b_omega: Vector3::zeros(),
                b_acc: Vector3::zeros(),
            },
        ));
    }
    Ok(out)
}

/// Loads a dataset directory. `imu.csv` is required; `landmarks.csv` and
/// `groundtruth.csv` are optional. In ASL mode the IMU and ground-truth
/// files use nanosecond timestamps and `#` comments, while landmarks (when
/// present) stay in the native layout.
pub fn load_dataset(dir: &Path, format: DatasetFormat) -> Result<Dataset, DatasetError> {
    let asl = format == DatasetFormat::AslCsv;
    let imu = load_imu(&dir.join("imu.csv"), asl)?;
    let lm_path = dir.join("landmarks.csv");
    let landmarks = if lm_path.exists() {
        load_landmarks(&lm_path)?
    } else {
        Vec::new()
    };
    let gt_path = dir.join("groundtruth.csv");
    let truth = if gt_path.exists() {
        Some(load_truth(&gt_path, asl)?)
    } else {
        None
    };
    Ok(Dataset {
        imu,
        landmarks,
        truth,
    })
}

/// Writes an ASL-style IMU file (integer nanoseconds, `#` header); test and
/// fixture helper for the ingestion path.
pub fn write_asl_imu(path: &Path, rows: &[(i128, [f64; 6])]) -> Result<(), DatasetError> {
    let mut out = String::from("#timestamp [ns],w_x,w_y,w_z,a_x,a_y,a_z\n");
    for (ns, v) in rows {
        let mut line = ns.to_string();
        for x in v {
            line.push(',');
            line.push_str(&x.to_string());
        }
        line.push('\n');
        out.push_str(&line);
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(out.as_bytes()).map_err(io_err(path))
}
