//! File ingestion and the line-oriented scene/detection text formats.
//!
//! KITTI `.bin`: 4 little-endian f32 per point (x, y, z, intensity), no
//! header. CSV: `batch_id,x,y,z[,intensity]` with an optional header row.
//!
//! Scene files start with the header line `rvc-scene v1` followed by one
//! record per line: `seed <u64>`, `gt cx cy cz l w h yaw class`,
//! `pt batch x y z intensity`. Detection files start with `rvc-dets v1`
//! followed by `det cx cy cz l w h yaw class score tp|fp` lines. Floats are
//! written with Rust's shortest round-trip formatting, so re-reading a file
//! reproduces the values bit-exactly.

use super::synth::LabeledDetection;
use super::{CloudError, Detection, GtBox, ObjectClass, Point, PointCloud, SyntheticScene};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const SCENE_HEADER: &str = "rvc-scene v1";
pub const DETS_HEADER: &str = "rvc-dets v1";

fn io_err(path: &Path, source: std::io::Error) -> CloudError {
    CloudError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a KITTI velodyne `.bin` file. One point per 16-byte record, order
/// preserved, every point in batch 0.
pub fn load_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud, CloudError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() % 16 != 0 {
        return Err(CloudError::BinFormat {
            path: path.to_path_buf(),
            size: bytes.len() as u64,
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for (record, chunk) in bytes.chunks_exact(16).enumerate() {
        let f = |i: usize| f32::from_le_bytes(chunk[4 * i..4 * i + 4].try_into().unwrap());
        let (x, y, z, intensity) = (f(0), f(1), f(2), f(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite() && intensity.is_finite()) {
            return Err(CloudError::NonFinite { record });
        }
        points.push(Point::with_intensity(
            x as f64,
            y as f64,
            z as f64,
            intensity as f64,
        ));
    }
    PointCloud::single_batch(points)
}

/// Writes a cloud back in KITTI layout. Loading a `.bin` and saving it again
/// reproduces the input bytes exactly (all loaded values are f32-exact).
pub fn save_kitti_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), CloudError> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(cloud.len() * 16);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// Loads `batch_id,x,y,z[,intensity]` CSV. A first line whose first field is
/// not an integer is treated as a header and skipped.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud, CloudError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut points = Vec::new();
    let mut batch_ids = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields[0].parse::<u32>().is_err() {
            continue; // header row
        }
        if fields.len() != 4 && fields.len() != 5 {
            return Err(CloudError::Parse {
                line: line_no,
                message: format!("expected 4 or 5 fields, got {}", fields.len()),
            });
        }
        let batch: u32 = fields[0].parse().map_err(|_| CloudError::Parse {
            line: line_no,
            message: format!("bad batch id {:?}", fields[0]),
        })?;
        let mut nums = [0.0f64; 4];
        for (slot, field) in fields[1..].iter().enumerate() {
            nums[slot] = field.parse().map_err(|_| CloudError::Parse {
                line: line_no,
                message: format!("bad number {field:?}"),
            })?;
        }
        let p = Point::with_intensity(nums[0], nums[1], nums[2], nums[3]);
        if !p.is_finite() {
            return Err(CloudError::Parse {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        points.push(p);
        batch_ids.push(batch);
    }
    PointCloud::new(points, batch_ids)
}

fn write_box(out: &mut impl Write, tag: &str, b: &GtBox) -> std::io::Result<()> {
    write!(
        out,
        "{tag} {} {} {} {} {} {} {} {}",
        b.cx,
        b.cy,
        b.cz,
        b.l,
        b.w,
        b.h,
        b.yaw,
        b.class.index()
    )
}

pub fn write_scene(scene: &SyntheticScene, path: impl AsRef<Path>) -> Result<(), CloudError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{SCENE_HEADER}")?;
        writeln!(out, "seed {}", scene.seed)?;
        for b in &scene.gt {
            write_box(&mut out, "gt", b)?;
            writeln!(out)?;
        }
        for (p, &batch) in scene.cloud.points().iter().zip(scene.cloud.batch_ids()) {
            writeln!(out, "pt {batch} {} {} {} {}", p.x, p.y, p.z, p.intensity)?;
        }
        out.flush()
    };
    write().map_err(|e| io_err(path, e))
}

fn parse_class(token: &str, line: usize) -> Result<ObjectClass, CloudError> {
    token
        .parse::<usize>()
        .ok()
        .and_then(ObjectClass::from_index)
        .ok_or_else(|| CloudError::Parse {
            line,
            message: format!("bad class id {token:?}"),
        })
}

fn parse_f64(token: &str, line: usize) -> Result<f64, CloudError> {
    token.parse().map_err(|_| CloudError::Parse {
        line,
        message: format!("bad number {token:?}"),
    })
}

fn parse_box(fields: &[&str], line: usize) -> Result<GtBox, CloudError> {
    if fields.len() != 8 {
        return Err(CloudError::Parse {
            line,
            message: format!("expected 8 box fields, got {}", fields.len()),
        });
    }
    let mut nums = [0.0f64; 7];
    for (slot, token) in fields[..7].iter().enumerate() {
        nums[slot] = parse_f64(token, line)?;
    }
    let class = parse_class(fields[7], line)?;
    GtBox::new(
        nums[0], nums[1], nums[2], nums[3], nums[4], nums[5], nums[6], class,
    )
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<SyntheticScene, CloudError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == SCENE_HEADER => {}
        _ => {
            return Err(CloudError::Parse {
                line: 1,
                message: format!("missing {SCENE_HEADER:?} header"),
            })
        }
    }
    let mut seed = 0u64;
    let mut gt = Vec::new();
    let mut points = Vec::new();
    let mut batch_ids = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "seed" if fields.len() == 2 => {
                seed = fields[1].parse().map_err(|_| CloudError::Parse {
                    line: line_no,
                    message: format!("bad seed {:?}", fields[1]),
                })?;
            }
            "gt" => gt.push(parse_box(&fields[1..], line_no)?),
            "pt" if fields.len() == 6 => {
                let batch: u32 = fields[1].parse().map_err(|_| CloudError::Parse {
                    line: line_no,
                    message: format!("bad batch id {:?}", fields[1]),
                })?;
                let x = parse_f64(fields[2], line_no)?;
                let y = parse_f64(fields[3], line_no)?;
                let z = parse_f64(fields[4], line_no)?;
                let intensity = parse_f64(fields[5], line_no)?;
                points.push(Point::with_intensity(x, y, z, intensity));
                batch_ids.push(batch);
            }
            other => {
                return Err(CloudError::Parse {
                    line: line_no,
                    message: format!("unknown record {other:?}"),
                })
            }
        }
    }
    Ok(SyntheticScene {
        cloud: PointCloud::new(points, batch_ids)?,
        gt,
        seed,
    })
}

pub fn write_detections(
    dets: &[LabeledDetection],
    path: impl AsRef<Path>,
) -> Result<(), CloudError> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "{DETS_HEADER}")?;
        for d in dets {
            write_box(&mut out, "det", &d.detection.bbox)?;
            writeln!(
                out,
                " {} {}",
                d.detection.score,
                if d.is_tp { "tp" } else { "fp" }
            )?;
        }
        out.flush()
    };
    write().map_err(|e| io_err(path, e))
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<LabeledDetection>, CloudError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == DETS_HEADER => {}
        _ => {
            return Err(CloudError::Parse {
                line: 1,
                message: format!("missing {DETS_HEADER:?} header"),
            })
        }
    }
    let mut dets = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "det" || fields.len() != 11 {
            return Err(CloudError::Parse {
                line: line_no,
                message: "expected `det` record with 10 fields".into(),
            });
        }
        let bbox = parse_box(&fields[1..9], line_no)?;
        let score = parse_f64(fields[9], line_no)?;
        let is_tp = match fields[10] {
            "tp" => true,
            "fp" => false,
            other => {
                return Err(CloudError::Parse {
                    line: line_no,
                    message: format!("bad label {other:?}"),
                })
            }
        };
        dets.push(LabeledDetection {
            detection: Detection::new(bbox, score)?,
            is_tp,
        });
    }
    Ok(dets)
}
