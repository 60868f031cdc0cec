//! File formats: voxel grids, meshes, and images.
//!
//! - Voxel files: ASCII header line `VOXL <R> <C>\n` followed by `C * R^3`
//!   little-endian 32-bit floats, channel-major, then z, y, x with x fastest.
//! - Meshes: OBJ-style text with per-vertex colors, `v x y z r g b` and
//!   1-based `f i j k` lines.
//! - Images: binary PPM (P6, maxval 255); masks: binary PGM (P5, maxval 255).

use crate::error::{Error, Result};
use crate::float::Real;
use crate::grid::{FeatureGrid, OccupancyGrid};
use crate::image::{Image, Mask};
use crate::mesh::TexturedMesh;
use crate::vec3::Vec3;
use std::fs;
use std::io::Write as _;
use std::path::Path;

const VOX_MAGIC: &str = "VOXL";

/// Raw voxel payload as stored on disk.
#[derive(Clone, Debug)]
pub struct VoxData {
    pub resolution: usize,
    pub channels: usize,
    /// Channel-major, x fastest.
    pub values: Vec<f32>,
}

impl VoxData {
    pub fn from_occupancy<T: Real>(grid: &OccupancyGrid<T>) -> Self {
        Self {
            resolution: grid.resolution(),
            channels: 1,
            values: grid.values().iter().map(|v| v.to_f64_lossy() as f32).collect(),
        }
    }

    pub fn from_feature<T: Real>(grid: &FeatureGrid<T>) -> Self {
        Self {
            resolution: grid.resolution(),
            channels: grid.channels(),
            values: grid.values().iter().map(|v| v.to_f64_lossy() as f32).collect(),
        }
    }

    /// Interprets a single-channel payload as an occupancy grid; values must
    /// already be in `[0,1]`.
    pub fn into_occupancy<T: Real>(&self) -> Result<OccupancyGrid<T>> {
        if self.channels != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: self.channels,
            });
        }
        OccupancyGrid::new(
            self.resolution,
            self.values.iter().map(|&v| T::of(v as f64)).collect(),
        )
    }

    pub fn into_feature<T: Real>(&self) -> Result<FeatureGrid<T>> {
        FeatureGrid::new(
            self.resolution,
            self.channels,
            self.values.iter().map(|&v| T::of(v as f64)).collect(),
        )
    }
}

pub fn write_vox(path: impl AsRef<Path>, data: &VoxData) -> Result<()> {
    let mut bytes = format!("{VOX_MAGIC} {} {}\n", data.resolution, data.channels).into_bytes();
    bytes.reserve(data.values.len() * 4);
    for v in &data.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_vox(path: impl AsRef<Path>) -> Result<VoxData> {
    let bytes = fs::read(path)?;
    let header_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing header line".into(),
        })?;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| Error::Parse {
        line: 1,
        msg: "header is not ASCII".into(),
    })?;
    let mut parts = header.split_whitespace();
    let magic = parts.next().unwrap_or("");
    if magic != VOX_MAGIC {
        return Err(Error::BadMagic {
            expected: VOX_MAGIC.into(),
            actual: magic.into(),
        });
    }
    let resolution: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|&r| r > 0)
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "bad resolution field".into(),
        })?;
    let channels: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|&c| c > 0)
        .ok_or_else(|| Error::Parse {
            line: 1,
            msg: "bad channel field".into(),
        })?;
    let expected = channels * resolution * resolution * resolution * 4;
    let payload = &bytes[header_end + 1..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(VoxData {
        resolution,
        channels,
        values,
    })
}

/// Writes a mesh as OBJ with per-vertex colors (9 significant digits).
pub fn write_obj<T: Real>(path: impl AsRef<Path>, mesh: &TexturedMesh<T>) -> Result<()> {
    let mut out = String::new();
    for (v, c) in mesh.vertices.iter().zip(&mesh.colors) {
        out.push_str(&format!(
            "v {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}\n",
            v.x.to_f64_lossy(),
            v.y.to_f64_lossy(),
            v.z.to_f64_lossy(),
            c[0].to_f64_lossy(),
            c[1].to_f64_lossy(),
            c[2].to_f64_lossy()
        ));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_obj<T: Real>(path: impl AsRef<Path>) -> Result<TexturedMesh<T>> {
    let text = fs::read_to_string(path)?;
    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut colors: Vec<[T; 3]> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let nums: Vec<f64> = parts
                    .map(|p| {
                        p.parse::<f64>().map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("bad numeric field {p:?}"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if nums.len() != 3 && nums.len() != 6 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("vertex line needs 3 or 6 numbers, got {}", nums.len()),
                    });
                }
                vertices.push(Vec3::new(T::of(nums[0]), T::of(nums[1]), T::of(nums[2])));
                if nums.len() == 6 {
                    colors.push([T::of(nums[3]), T::of(nums[4]), T::of(nums[5])]);
                } else {
                    colors.push([T::of(0.5); 3]);
                }
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|p| {
                        let i: i64 = p.parse().map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("bad face index {p:?}"),
                        })?;
                        if i < 1 {
                            return Err(Error::Parse {
                                line: line_no,
                                msg: "index must be >= 1".into(),
                            });
                        }
                        Ok(i as usize - 1)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("face line needs 3 indices, got {}", idx.len()),
                    });
                }
                for &i in &idx {
                    if i >= vertices.len() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("face index {} out of range (have {})", i + 1, vertices.len()),
                        });
                    }
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("unrecognized line {line:?}"),
                })
            }
        }
    }
    TexturedMesh::with_colors(vertices, faces, colors)
}

fn quantize<T: Real>(v: T) -> u8 {
    let x = (v.to_f64_lossy() * 255.0 + 0.5).floor();
    x.clamp(0.0, 255.0) as u8
}

/// Writes a binary PPM (P6, maxval 255).
pub fn write_image<T: Real>(path: impl AsRef<Path>, image: &Image<T>) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    bytes.extend(image.data.iter().map(|&v| quantize(v)));
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes a binary PGM (P5, maxval 255).
pub fn write_mask<T: Real>(path: impl AsRef<Path>, mask: &Mask<T>) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    bytes.extend(mask.data.iter().map(|&v| quantize(v)));
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_image<T: Real>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let (magic, w, h, payload) = read_pnm(path)?;
    if magic != "P6" {
        return Err(Error::BadMagic {
            expected: "P6".into(),
            actual: magic,
        });
    }
    if payload.len() != w * h * 3 {
        return Err(Error::Truncated {
            expected: w * h * 3,
            actual: payload.len(),
        });
    }
    Image::from_data(
        w,
        h,
        payload.iter().map(|&b| T::of(b as f64 / 255.0)).collect(),
    )
}

pub fn read_mask<T: Real>(path: impl AsRef<Path>) -> Result<Mask<T>> {
    let (magic, w, h, payload) = read_pnm(path)?;
    if magic != "P5" {
        return Err(Error::BadMagic {
            expected: "P5".into(),
            actual: magic,
        });
    }
    if payload.len() != w * h {
        return Err(Error::Truncated {
            expected: w * h,
            actual: payload.len(),
        });
    }
    Mask::from_data(
        w,
        h,
        payload.iter().map(|&b| T::of(b as f64 / 255.0)).collect(),
    )
}

fn read_pnm(path: impl AsRef<Path>) -> Result<(String, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    // Header: magic, width, height, maxval as whitespace-separated tokens.
    let mut pos = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start < pos {
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
    }
    if tokens.len() < 4 {
        return Err(Error::Parse {
            line: 1,
            msg: "incomplete header".into(),
        });
    }
    let magic = tokens[0].clone();
    let w: usize = tokens[1].parse().map_err(|_| Error::Parse {
        line: 1,
        msg: "bad width".into(),
    })?;
    let h: usize = tokens[2].parse().map_err(|_| Error::Parse {
        line: 1,
        msg: "bad height".into(),
    })?;
    let maxval: usize = tokens[3].parse().map_err(|_| Error::Parse {
        line: 1,
        msg: "bad maxval".into(),
    })?;
    if maxval != 255 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported maxval {maxval}"),
        });
    }
    // Single whitespace byte after maxval, then the payload.
    pos += 1;
    Ok((magic, w, h, bytes.get(pos..).unwrap_or(&[]).to_vec()))
}
