use std::fs;
use std::path::{Path, PathBuf};

use bitvec::prelude::*;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io;

/// Voxel grid placement. World position of voxel `(i, j, k)` is
/// `origin + direction * (i * sx, j * sy, k * sz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: Vec3,
    pub direction: Matrix3<f64>,
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: Vec3, direction: Matrix3<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidVolume(format!("empty dimension in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidVolume(format!("spacing must be positive: {spacing:?}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidVolume("origin is not finite".into()));
        }
        let gram = direction.transpose() * direction;
        if (gram - Matrix3::identity()).amax() > 1e-6 {
            return Err(Error::InvalidVolume("direction matrix is not orthonormal".into()));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            direction,
        })
    }

    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: Vec3) -> Result<Self> {
        Self::new(dims, spacing, origin, Matrix3::identity())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Linear index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn world(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let local = Vec3::new(
            i as f64 * self.spacing[0],
            j as f64 * self.spacing[1],
            k as f64 * self.spacing[2],
        );
        self.origin + self.direction * local
    }

    /// Fractional voxel coordinates of a world point.
    pub fn continuous_index(&self, p: &Vec3) -> Vec3 {
        let local = self.direction.transpose() * (p - self.origin);
        Vec3::new(
            local.x / self.spacing[0],
            local.y / self.spacing[1],
            local.z / self.spacing[2],
        )
    }

    /// Grid with the origin moved by `offset`.
    pub fn translated(&self, offset: &Vec3) -> Self {
        Self {
            origin: self.origin + offset,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    pub grid: Grid,
    /// HU values, x fastest.
    pub data: Vec<i16>,
}

impl VoxelVolume {
    pub fn new(grid: Grid, data: Vec<i16>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidVolume(format!(
                "{} values for a grid of {} voxels",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: i16) -> Self {
        let n = grid.len();
        Self {
            grid,
            data: vec![value; n],
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> i16 {
        self.data[self.grid.index(i, j, k)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub grid: Grid,
    pub bits: BitVec,
}

impl BinaryMask {
    pub fn empty(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            bits: bitvec![0; n],
        }
    }

    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.bits.set(idx, value);
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter_ones()
    }

    /// Voxels in `self` but not in `other`.
    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let mut bits = self.bits.clone();
        bits &= !other.bits.clone();
        Ok(BinaryMask {
            grid: self.grid.clone(),
            bits,
        })
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let mut bits = self.bits.clone();
        bits |= other.bits.clone();
        Ok(BinaryMask {
            grid: self.grid.clone(),
            bits,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    /// Row-major.
    direction: [[f64; 3]; 3],
    dtype: String,
    order: String,
}

const VOLUME_DTYPE: &str = "int16-le";
const MASK_DTYPE: &str = "uint8";
const ORDER: &str = "x-fastest";

/// Header and raw paths for a volume named by `base`. A trailing `.vol.json`
/// or `.vol.raw` on `base` is ignored.
pub fn volume_paths(base: &Path) -> (PathBuf, PathBuf) {
    let s = base.to_string_lossy();
    let stem = s
        .strip_suffix(".vol.json")
        .or_else(|| s.strip_suffix(".vol.raw"))
        .unwrap_or(&s);
    (PathBuf::from(format!("{stem}.vol.json")), PathBuf::from(format!("{stem}.vol.raw")))
}

fn header_of(grid: &Grid, dtype: &str) -> Header {
    let d = &grid.direction;
    Header {
        dims: grid.dims,
        spacing: grid.spacing,
        origin: grid.origin.into(),
        direction: [0, 1, 2].map(|r| [d[(r, 0)], d[(r, 1)], d[(r, 2)]]),
        dtype: dtype.into(),
        order: ORDER.into(),
    }
}

fn read_header(path: &Path, dtype: &str) -> Result<Grid> {
    let h: Header = io::read_json(path)?;
    if h.dtype != dtype {
        return Err(Error::InvalidVolume(format!("dtype {} where {dtype} was expected", h.dtype)));
    }
    if h.order != ORDER {
        return Err(Error::InvalidVolume(format!("unsupported voxel order {}", h.order)));
    }
    let dir = Matrix3::from_fn(|r, c| h.direction[r][c]);
    Grid::new(h.dims, h.spacing, Vec3::from(h.origin), dir)
}

fn read_raw(path: &Path) -> Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path.into())),
        Err(e) => Err(e.into()),
    }
}

pub fn save_volume(base: &Path, vol: &VoxelVolume) -> Result<()> {
    let (hp, rp) = volume_paths(base);
    io::write_json(&hp, &header_of(&vol.grid, VOLUME_DTYPE))?;
    let bytes: Vec<u8> = vol.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(rp, bytes)?;
    Ok(())
}

pub fn load_volume(base: &Path) -> Result<VoxelVolume> {
    let (hp, rp) = volume_paths(base);
    let grid = read_header(&hp, VOLUME_DTYPE)?;
    let raw = read_raw(&rp)?;
    if raw.len() != 2 * grid.len() {
        return Err(Error::InvalidVolume(format!(
            "length mismatch: header needs {} bytes, {} has {}",
            2 * grid.len(),
            rp.display(),
            raw.len()
        )));
    }
    let data = raw.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]])).collect();
    VoxelVolume::new(grid, data)
}

pub fn save_mask(base: &Path, mask: &BinaryMask) -> Result<()> {
    let (hp, rp) = volume_paths(base);
    io::write_json(&hp, &header_of(&mask.grid, MASK_DTYPE))?;
    let bytes: Vec<u8> = mask.bits.iter().map(|b| u8::from(*b)).collect();
    fs::write(rp, bytes)?;
    Ok(())
}

pub fn load_mask(base: &Path) -> Result<BinaryMask> {
    let (hp, rp) = volume_paths(base);
    let grid = read_header(&hp, MASK_DTYPE)?;
    let raw = read_raw(&rp)?;
    if raw.len() != grid.len() {
        return Err(Error::InvalidVolume(format!(
            "length mismatch: header needs {} bytes, {} has {}",
            grid.len(),
            rp.display(),
            raw.len()
        )));
    }
    let bits = raw.iter().map(|&b| b != 0).collect();
    Ok(BinaryMask { grid, bits })
}
