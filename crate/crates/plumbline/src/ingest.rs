//! Recording format readers/writers and the undistortion remap table.
//!
//! On-disk formats:
//! - Stray-style recording directory: `odometry.csv` (t, x, y, z, qx,
//!   qy, qz, qw), `imu.csv` (t, a_x, a_y, a_z, alpha_x, alpha_y,
//!   alpha_z) and `camera_matrix.csv` (fx, fy, cx, cy, k1, k2, p1, p2,
//!   k3, width, height). Column order for odometry is remappable for
//!   recorders that deviate.
//! - EuRoC-style directory: `imu0/data.csv` with nanosecond timestamps
//!   and gyro-first columns, optional `state_groundtruth_estimate0/
//!   data.csv`.
//! - Remap table: flat binary, magic "GRMP", little-endian u32 dims,
//!   then row-major (u, v) pairs of 32-bit reals.
//! - Labeled sequences: one CSV row per frame plus a JSON sidecar with
//!   the alignment rotation and residual.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom3::{Quat, UnitVec3, Vec3};
use crate::labels::{LabeledFrame, PoseSample, SequenceRecord};
use crate::mahony::ImuSample;
use crate::procrustes::AlignmentResult;

/// Pinhole intrinsics with radial-tangential distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// (k1, k2, p1, p2, k3)
    pub dist: [f64; 5],
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.cx < 0.0
            || self.cx >= self.width as f64
            || self.cy < 0.0
            || self.cy >= self.height as f64
        {
            return Err(Error::InvalidConfig(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// A parsed Stray-style recording.
#[derive(Debug, Clone)]
pub struct StrayRecording {
    pub odometry: Vec<PoseSample>,
    pub imu: Vec<ImuSample>,
    pub intrinsics: Intrinsics,
}

/// A parsed EuRoC-style recording (IMU side; evaluation only).
#[derive(Debug, Clone)]
pub struct EurocRecording {
    pub imu: Vec<ImuSample>,
    /// Ground-truth gravity in the body frame, derived from the
    /// motion-capture poses when present.
    pub gt_gravity: Option<Vec<(f64, UnitVec3)>>,
}

/// One odometry CSV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdometryField {
    T,
    X,
    Y,
    Z,
    Qx,
    Qy,
    Qz,
    Qw,
    Skip,
}

/// Column layout of `odometry.csv`; the escape hatch for recorders
/// whose column order differs from the default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdometryColumns(pub Vec<OdometryField>);

impl Default for OdometryColumns {
    fn default() -> Self {
        use OdometryField::*;
        OdometryColumns(vec![T, X, Y, Z, Qx, Qy, Qz, Qw])
    }
}

impl std::str::FromStr for OdometryColumns {
    type Err = Error;

    /// Parse a spec like `t,frame:skip,x,y,z,qx,qy,qz,qw` (either
    /// `skip` or `_` ignores a column).
    fn from_str(s: &str) -> Result<Self> {
        use OdometryField::*;
        let mut fields = Vec::new();
        for tok in s.split(',') {
            let tok = tok.trim();
            let name = tok.rsplit(':').next().unwrap_or(tok);
            fields.push(match name.to_ascii_lowercase().as_str() {
                "t" | "timestamp" => T,
                "x" => X,
                "y" => Y,
                "z" => Z,
                "qx" => Qx,
                "qy" => Qy,
                "qz" => Qz,
                "qw" => Qw,
                "skip" | "_" => Skip,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown odometry column '{other}'"
                    )))
                }
            });
        }
        for want in [T, X, Y, Z, Qx, Qy, Qz, Qw] {
            if !fields.contains(&want) {
                return Err(Error::InvalidConfig(format!(
                    "column map is missing {want:?}"
                )));
            }
        }
        Ok(OdometryColumns(fields))
    }
}

// ---------------------------------------------------------------------------
// CSV plumbing

struct CsvReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
}

impl CsvReader {
    fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|_| Error::MissingFile { path: path.to_path_buf() })?;
        Ok(CsvReader {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            line_no: 0,
        })
    }

    /// Next data row split on commas. Blank lines and `#` comments are
    /// skipped; a leading header row (non-numeric first field) is too.
    fn next_row(&mut self) -> Result<Option<(usize, Vec<String>)>> {
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<String> = trimmed.split(',').map(|f| f.trim().to_string()).collect();
            if self.line_no == 1 && fields[0].parse::<f64>().is_err() {
                continue; // header
            }
            return Ok(Some((self.line_no, fields)));
        }
    }

    fn malformed(&self, line: usize, reason: impl Into<String>) -> Error {
        Error::MalformedRow {
            path: self.path.clone(),
            line,
            reason: reason.into(),
        }
    }

    fn parse_f64(&self, line: usize, fields: &[String], idx: usize) -> Result<f64> {
        let raw = fields
            .get(idx)
            .ok_or_else(|| self.malformed(line, format!("missing field {}", idx + 1)))?;
        raw.parse::<f64>()
            .map_err(|_| self.malformed(line, format!("field {} is not a number: '{raw}'", idx + 1)))
    }

    fn expect_len(&self, line: usize, fields: &[String], want: usize) -> Result<()> {
        if fields.len() < want {
            return Err(self.malformed(
                line,
                format!("expected {want} fields, got {}", fields.len()),
            ));
        }
        Ok(())
    }
}

fn check_monotonic(prev: Option<f64>, t: f64) -> Result<()> {
    if let Some(p) = prev {
        if t < p {
            return Err(Error::NonMonotonicTime { prev: p, t });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Stray-style recordings

/// Read a recording directory with the default odometry column layout.
pub fn read_stray(dir: &Path) -> Result<StrayRecording> {
    read_stray_with(dir, &OdometryColumns::default())
}

/// Read a recording directory with an explicit odometry column layout.
pub fn read_stray_with(dir: &Path, columns: &OdometryColumns) -> Result<StrayRecording> {
    let odometry = read_odometry(&dir.join("odometry.csv"), columns)?;
    let imu = read_stray_imu(&dir.join("imu.csv"))?;
    let intrinsics = read_camera_matrix(&dir.join("camera_matrix.csv"))?;
    Ok(StrayRecording { odometry, imu, intrinsics })
}

fn read_odometry(path: &Path, columns: &OdometryColumns) -> Result<Vec<PoseSample>> {
    let mut reader = CsvReader::open(path)?;
    let mut out = Vec::new();
    let mut prev_t = None;
    while let Some((line, fields)) = reader.next_row()? {
        reader.expect_len(line, &fields, columns.0.len())?;
        let mut vals = [0.0f64; 8]; // t x y z qx qy qz qw
        for (idx, field) in columns.0.iter().enumerate() {
            use OdometryField::*;
            let slot = match field {
                T => 0,
                X => 1,
                Y => 2,
                Z => 3,
                Qx => 4,
                Qy => 5,
                Qz => 6,
                Qw => 7,
                Skip => continue,
            };
            vals[slot] = reader.parse_f64(line, &fields, idx)?;
        }
        let q = Quat::new(vals[7], vals[4], vals[5], vals[6])
            .map_err(|_| reader.malformed(line, "quaternion is not unit"))?;
        check_monotonic(prev_t, vals[0])?;
        prev_t = Some(vals[0]);
        out.push(PoseSample {
            t: vals[0],
            q_wc: q,
            p_wc: Vec3::new(vals[1], vals[2], vals[3]),
        });
    }
    Ok(out)
}

/// Read a standalone IMU CSV in the recording layout (t, accel xyz,
/// gyro xyz).
pub fn read_stray_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    read_stray_imu(path)
}

/// Read a standalone IMU CSV in the EuRoC layout (t[ns], gyro xyz,
/// accel xyz).
pub fn read_euroc_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let mut reader = CsvReader::open(path)?;
    let mut out = Vec::new();
    let mut prev_t = None;
    while let Some((line, fields)) = reader.next_row()? {
        reader.expect_len(line, &fields, 7)?;
        let t = parse_ns(&reader, line, &fields, 0)?;
        let v: Vec<f64> = (1..7)
            .map(|i| reader.parse_f64(line, &fields, i))
            .collect::<Result<_>>()?;
        check_monotonic(prev_t, t)?;
        prev_t = Some(t);
        out.push(ImuSample {
            t,
            gyro: Vec3::new(v[0], v[1], v[2]),
            accel: Vec3::new(v[3], v[4], v[5]),
        });
    }
    Ok(out)
}

/// Write an IMU stream in the EuRoC layout. Timestamps are rebuilt as
/// exact integer nanoseconds (whole seconds times 1e9 plus the rounded
/// fractional part), which reproduces any parsed EuRoC timestamp
/// bit-for-bit on re-read.
pub fn write_euroc_imu_csv(path: &Path, imu: &[ImuSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "#timestamp [ns],w_x,w_y,w_z,a_x,a_y,a_z")?;
    for s in imu {
        let whole = s.t.trunc();
        let ns = (whole as i128) * 1_000_000_000 + ((s.t - whole) * 1e9).round() as i128;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            ns, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Read paired gravity directions: one row per frame, camera-frame
/// direction then body-frame direction.
pub fn read_pairs_csv(path: &Path) -> Result<crate::procrustes::PairedDirections> {
    let mut reader = CsvReader::open(path)?;
    let mut g_cam = Vec::new();
    let mut g_imu = Vec::new();
    while let Some((line, fields)) = reader.next_row()? {
        reader.expect_len(line, &fields, 6)?;
        let v: Vec<f64> = (0..6)
            .map(|i| reader.parse_f64(line, &fields, i))
            .collect::<Result<_>>()?;
        g_cam.push(
            UnitVec3::new(v[0], v[1], v[2])
                .map_err(|_| reader.malformed(line, "camera direction is not unit"))?,
        );
        g_imu.push(
            UnitVec3::new(v[3], v[4], v[5])
                .map_err(|_| reader.malformed(line, "body direction is not unit"))?,
        );
    }
    crate::procrustes::PairedDirections::new(g_cam, g_imu)
}

/// Read just the intrinsics row (`camera_matrix.csv` layout).
pub fn read_intrinsics_csv(path: &Path) -> Result<Intrinsics> {
    read_camera_matrix(path)
}

fn read_stray_imu(path: &Path) -> Result<Vec<ImuSample>> {
    let mut reader = CsvReader::open(path)?;
    let mut out = Vec::new();
    let mut prev_t = None;
    while let Some((line, fields)) = reader.next_row()? {
        reader.expect_len(line, &fields, 7)?;
        let v: Vec<f64> = (0..7)
            .map(|i| reader.parse_f64(line, &fields, i))
            .collect::<Result<_>>()?;
        check_monotonic(prev_t, v[0])?;
        prev_t = Some(v[0]);
        out.push(ImuSample {
            t: v[0],
            accel: Vec3::new(v[1], v[2], v[3]),
            gyro: Vec3::new(v[4], v[5], v[6]),
        });
    }
    Ok(out)
}

fn read_camera_matrix(path: &Path) -> Result<Intrinsics> {
    let mut reader = CsvReader::open(path)?;
    let Some((line, fields)) = reader.next_row()? else {
        return Err(Error::MalformedRow {
            path: path.to_path_buf(),
            line: 1,
            reason: "no data row".into(),
        });
    };
    reader.expect_len(line, &fields, 11)?;
    let v: Vec<f64> = (0..11)
        .map(|i| reader.parse_f64(line, &fields, i))
        .collect::<Result<_>>()?;
    let intr = Intrinsics {
        fx: v[0],
        fy: v[1],
        cx: v[2],
        cy: v[3],
        dist: [v[4], v[5], v[6], v[7], v[8]],
        width: v[9] as u32,
        height: v[10] as u32,
    };
    intr.validate()?;
    Ok(intr)
}

/// Write a recording directory in the default layout. Values round-trip
/// bit-for-bit through [`read_stray`].
pub fn write_stray(dir: &Path, rec: &StrayRecording) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("odometry.csv"))?);
    writeln!(w, "t,x,y,z,qx,qy,qz,qw")?;
    for p in &rec.odometry {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.t, p.p_wc.x, p.p_wc.y, p.p_wc.z, p.q_wc.x, p.q_wc.y, p.q_wc.z, p.q_wc.w
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("imu.csv"))?);
    writeln!(w, "t,a_x,a_y,a_z,alpha_x,alpha_y,alpha_z")?;
    for s in &rec.imu {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
        )?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join("camera_matrix.csv"))?);
    writeln!(w, "fx,fy,cx,cy,k1,k2,p1,p2,k3,width,height")?;
    let i = &rec.intrinsics;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{}",
        i.fx, i.fy, i.cx, i.cy, i.dist[0], i.dist[1], i.dist[2], i.dist[3], i.dist[4], i.width,
        i.height
    )?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// EuRoC-style recordings

/// Read the IMU (and optional ground truth) of an EuRoC-style directory.
pub fn read_euroc(dir: &Path) -> Result<EurocRecording> {
    let imu_path = dir.join("imu0").join("data.csv");
    let mut reader = CsvReader::open(&imu_path)?;
    let mut imu = Vec::new();
    let mut prev_t = None;
    while let Some((line, fields)) = reader.next_row()? {
        reader.expect_len(line, &fields, 7)?;
        let t = parse_ns(&reader, line, &fields, 0)?;
        // EuRoC column order: gyro first, then accel.
        let v: Vec<f64> = (1..7)
            .map(|i| reader.parse_f64(line, &fields, i))
            .collect::<Result<_>>()?;
        check_monotonic(prev_t, t)?;
        prev_t = Some(t);
        imu.push(ImuSample {
            t,
            gyro: Vec3::new(v[0], v[1], v[2]),
            accel: Vec3::new(v[3], v[4], v[5]),
        });
    }

    let gt_path = dir.join("state_groundtruth_estimate0").join("data.csv");
    let gt_gravity = if gt_path.exists() {
        Some(read_euroc_gt(&gt_path)?)
    } else {
        None
    };
    Ok(EurocRecording { imu, gt_gravity })
}

/// Nanosecond integer timestamp to seconds, split to keep sub-ulp
/// precision at 1.4e18 ns magnitudes.
fn parse_ns(reader: &CsvReader, line: usize, fields: &[String], idx: usize) -> Result<f64> {
    let raw = fields
        .get(idx)
        .ok_or_else(|| reader.malformed(line, format!("missing field {}", idx + 1)))?;
    let ns: i64 = raw
        .parse()
        .map_err(|_| reader.malformed(line, format!("bad nanosecond timestamp '{raw}'")))?;
    Ok((ns / 1_000_000_000) as f64 + (ns % 1_000_000_000) as f64 * 1e-9)
}

/// Ground-truth gravity in the body frame from motion-capture poses:
/// the EuRoC world is Z-up, so g_body = R_ws^T (0, 0, -1).
fn read_euroc_gt(path: &Path) -> Result<Vec<(f64, UnitVec3)>> {
    let mut reader = CsvReader::open(path)?;
    let mut out = Vec::new();
    while let Some((line, fields)) = reader.next_row()? {
        reader.expect_len(line, &fields, 8)?;
        let t = parse_ns(&reader, line, &fields, 0)?;
        // Columns 4..8 are q_RS in w, x, y, z order.
        let qv: Vec<f64> = (4..8)
            .map(|i| reader.parse_f64(line, &fields, i))
            .collect::<Result<_>>()?;
        let q = Quat::new(qv[0], qv[1], qv[2], qv[3])
            .map_err(|_| reader.malformed(line, "quaternion is not unit"))?;
        let r = crate::geom3::quat_to_rot(&q);
        let g = r.transpose().apply(Vec3::new(0.0, 0.0, -1.0));
        out.push((t, crate::geom3::normalize(g).expect("rotation of unit vector")));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Remap table

const REMAP_MAGIC: &[u8; 4] = b"GRMP";

/// Fused undistort+resize lookup: per output pixel, the sub-pixel
/// source coordinate in the original image.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapTable {
    pub out_width: u32,
    pub out_height: u32,
    /// Row-major (u, v) source coordinates.
    pub map: Vec<[f32; 2]>,
}

/// Build the remap table: back-project each output pixel through the
/// scaled ideal pinhole, push the ray through the forward
/// radial-tangential model, and record where it lands in the source
/// image. Depends only on the intrinsics and output size.
pub fn build_remap_table(intr: &Intrinsics, out_size: (u32, u32)) -> Result<RemapTable> {
    intr.validate()?;
    let (out_w, out_h) = out_size;
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidConfig("output size must be positive".into()));
    }
    let sx = out_w as f64 / intr.width as f64;
    let sy = out_h as f64 / intr.height as f64;
    let (fx_o, fy_o) = (intr.fx * sx, intr.fy * sy);
    let (cx_o, cy_o) = (intr.cx * sx, intr.cy * sy);
    let [k1, k2, p1, p2, k3] = intr.dist;

    let map: Vec<[f32; 2]> = (0..out_h)
        .into_par_iter()
        .flat_map_iter(|v_out| {
            let y = (v_out as f64 - cy_o) / fy_o;
            (0..out_w).map(move |u_out| {
                let x = (u_out as f64 - cx_o) / fx_o;
                let r2 = x * x + y * y;
                let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
                let x_d = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
                let y_d = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
                [
                    (intr.fx * x_d + intr.cx) as f32,
                    (intr.fy * y_d + intr.cy) as f32,
                ]
            })
        })
        .collect();

    Ok(RemapTable { out_width: out_w, out_height: out_h, map })
}

impl RemapTable {
    pub fn at(&self, u: u32, v: u32) -> [f32; 2] {
        self.map[(v * self.out_width + u) as usize]
    }
}

/// Write the "GRMP" flat binary format.
pub fn write_remap(path: &Path, table: &RemapTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(REMAP_MAGIC)?;
    w.write_all(&table.out_width.to_le_bytes())?;
    w.write_all(&table.out_height.to_le_bytes())?;
    for uv in &table.map {
        w.write_all(&uv[0].to_le_bytes())?;
        w.write_all(&uv[1].to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read the "GRMP" flat binary format.
pub fn read_remap(path: &Path) -> Result<RemapTable> {
    let malformed = |reason: &str| Error::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|_| Error::MissingFile { path: path.to_path_buf() })?
        .read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[0..4] != REMAP_MAGIC {
        return Err(malformed("missing GRMP magic"));
    }
    let out_width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let out_height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let expect = 12 + (out_width as usize) * (out_height as usize) * 8;
    if bytes.len() != expect {
        return Err(malformed("payload size does not match header dims"));
    }
    let map = bytes[12..]
        .chunks_exact(8)
        .map(|c| {
            [
                f32::from_le_bytes(c[0..4].try_into().unwrap()),
                f32::from_le_bytes(c[4..8].try_into().unwrap()),
            ]
        })
        .collect();
    Ok(RemapTable { out_width, out_height, map })
}

// ---------------------------------------------------------------------------
// Labeled sequence records

/// Sidecar metadata written next to a sequence CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceSidecar {
    pub id: String,
    pub alignment: AlignmentResult,
    pub dropped_frames: usize,
    pub burn_in_until: f64,
}

/// Write one row per frame; floats use the shortest round-trip form.
pub fn write_sequence_csv(path: &Path, rec: &SequenceRecord) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "t,ggt_x,ggt_y,ggt_z,gprior_x,gprior_y,gprior_z,prior_error_deg,nongravity_ratio,tilt_deg"
    )?;
    for f in &rec.frames {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            f.t,
            f.g_gt.x,
            f.g_gt.y,
            f.g_gt.z,
            f.g_prior.x,
            f.g_prior.y,
            f.g_prior.z,
            f.prior_error_deg,
            f.nongravity_ratio,
            f.tilt_deg
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Write the JSON sidecar for a sequence record.
pub fn write_sequence_sidecar(path: &Path, rec: &SequenceRecord) -> Result<()> {
    let sidecar = SequenceSidecar {
        id: rec.id.clone(),
        alignment: rec.alignment,
        dropped_frames: rec.dropped_frames,
        burn_in_until: rec.burn_in_until,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &sidecar)
        .map_err(|e| Error::InvalidConfig(format!("sidecar serialization failed: {e}")))?;
    w.flush()?;
    Ok(())
}

/// Read frames back from a sequence CSV.
pub fn read_sequence_csv(path: &Path) -> Result<Vec<LabeledFrame>> {
    let mut reader = CsvReader::open(path)?;
    let mut out = Vec::new();
    while let Some((line, fields)) = reader.next_row()? {
        reader.expect_len(line, &fields, 10)?;
        let v: Vec<f64> = (0..10)
            .map(|i| reader.parse_f64(line, &fields, i))
            .collect::<Result<_>>()?;
        let g_gt = UnitVec3::new(v[1], v[2], v[3])
            .map_err(|_| reader.malformed(line, "ground-truth gravity is not unit"))?;
        let g_prior = UnitVec3::new(v[4], v[5], v[6])
            .map_err(|_| reader.malformed(line, "prior is not unit"))?;
        out.push(LabeledFrame {
            t: v[0],
            g_gt,
            g_prior,
            prior_error_deg: v[7],
            nongravity_ratio: v[8],
            tilt_deg: v[9],
        });
    }
    Ok(out)
}
