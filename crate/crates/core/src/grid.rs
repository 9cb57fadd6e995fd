//! Dense row-major 2D grids and their on-disk formats.
//!
//! Arrays persist as a flat little-endian binary record: a 16-byte header
//! (`b"LIMB"`, `u32` rows, `u32` cols, `u32` dtype) followed by `rows * cols`
//! values. Several records may be concatenated in one file.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LIMB";
/// dtype tag for little-endian `f64` payloads.
pub const DTYPE_F64: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// A real-valued 2D slice (attenuation, coefficient magnitudes, ...).
pub type Image = Grid<f64>;
/// A binary mask; `true` marks membership.
pub type BinaryImage = Grid<bool>;

impl<T: Clone + Default> Grid<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![T::default(); rows * cols],
        }
    }

    pub fn square(side: usize) -> Self {
        Self::new(side, side)
    }
}

impl<T> Grid<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} values cannot fill a {rows}x{cols} grid",
                data.len()
            )));
        }
        Ok(Grid { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Grid { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Signed lookup; `None` outside the grid.
    #[inline]
    pub fn get(&self, r: isize, c: isize) -> Option<&T> {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            None
        } else {
            Some(&self.data[r as usize * self.cols + c as usize])
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Grid<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<Grid<V>> {
        self.check_same_shape(other)?;
        Ok(Grid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn check_same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::dim(format!(
                "grid shapes differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn transpose(&self) -> Grid<T>
    where
        T: Clone,
    {
        Grid::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Grid<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Grid<f64> {
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Grid<f64>) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `‖self − other‖ / ‖other‖`, with a zero reference yielding the plain norm.
    pub fn rel_error(&self, reference: &Grid<f64>) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm = reference.norm();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Indicator of `value >= threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryImage {
        self.map(|&v| v >= threshold)
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn to_f64(&self) -> Image {
        self.map(|&b| if b { 1.0 } else { 0.0 })
    }

    pub fn complement(&self) -> BinaryImage {
        self.map(|&b| !b)
    }

    pub fn is_subset_of(&self, other: &BinaryImage) -> bool {
        self.shape() == other.shape() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn or(&self, other: &BinaryImage) -> Result<BinaryImage> {
        self.zip_map(other, |&a, &b| a || b)
    }

    pub fn and(&self, other: &BinaryImage) -> Result<BinaryImage> {
        self.zip_map(other, |&a, &b| a && b)
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<T: Clone>(g: &Grid<T>) -> Grid<T> {
    Grid::from_fn(g.rows * 2, g.cols * 2, |r, c| g[(r / 2, c / 2)].clone())
}

pub fn is_power_of_two(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

// ---------------------------------------------------------------------------
// flat binary records

pub fn write_record(out: &mut impl Write, grid: &Image) -> std::io::Result<()> {
    let mut header = [0u8; 16];
    header[..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&(grid.rows as u32).to_le_bytes());
    header[8..12].copy_from_slice(&(grid.cols as u32).to_le_bytes());
    header[12..16].copy_from_slice(&DTYPE_F64.to_le_bytes());
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(grid.data.len() * 8);
    for v in &grid.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

/// Decode every record in `bytes`; `origin` is used only for diagnostics.
pub fn decode_records(bytes: &[u8], origin: &Path) -> Result<Vec<Image>> {
    let mut grids = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        if rest.len() < 16 {
            return Err(Error::format(origin, "truncated header"));
        }
        if &rest[..4] != MAGIC {
            return Err(Error::format(origin, "bad magic, expected LIMB"));
        }
        let rows = u32::from_le_bytes(rest[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(rest[8..12].try_into().unwrap()) as usize;
        let dtype = u32::from_le_bytes(rest[12..16].try_into().unwrap());
        if dtype != DTYPE_F64 {
            return Err(Error::format(origin, format!("unsupported dtype {dtype}")));
        }
        let n = rows * cols;
        let body = &rest[16..];
        if body.len() < n * 8 {
            return Err(Error::format(origin, "truncated payload"));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in body[..n * 8].chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(origin, "non-finite value"));
            }
            data.push(v);
        }
        grids.push(Grid { rows, cols, data });
        rest = &body[n * 8..];
    }
    Ok(grids)
}

pub fn save_grids(path: &Path, grids: &[&Image]) -> Result<()> {
    let mut buf = Vec::new();
    for g in grids {
        write_record(&mut buf, g).map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn save_grid(path: &Path, grid: &Image) -> Result<()> {
    save_grids(path, &[grid])
}

pub fn load_grids(path: &Path) -> Result<Vec<Image>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_records(&bytes, path)
}

pub fn load_grid(path: &Path) -> Result<Image> {
    let mut grids = load_grids(path)?;
    if grids.len() != 1 {
        return Err(Error::format(
            path,
            format!("expected one record, found {}", grids.len()),
        ));
    }
    Ok(grids.pop().unwrap())
}

/// 8-bit binary PGM, min-max scaled (a constant image maps to 0).
pub fn encode_pgm(grid: &Image) -> Vec<u8> {
    let (lo, hi) = (grid.min(), grid.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", grid.cols, grid.rows).into_bytes();
    out.extend(
        grid.data
            .iter()
            .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

pub fn save_pgm(path: &Path, grid: &Image) -> Result<()> {
    fs::write(path, encode_pgm(grid)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_roundtrip_is_bit_exact() {
        let g = Grid::from_fn(3, 5, |r, c| (r as f64) * 0.1 - c as f64 / 3.0);
        let h = Grid::from_fn(2, 2, |r, c| (r * 2 + c) as f64);
        let mut buf = Vec::new();
        write_record(&mut buf, &g).unwrap();
        write_record(&mut buf, &h).unwrap();
        assert_eq!(buf.len(), 16 + 15 * 8 + 16 + 4 * 8);
        assert_eq!(&buf[..4], b"LIMB");
        let back = decode_records(&buf, Path::new("mem")).unwrap();
        assert_eq!(back, vec![g, h]);
    }

    #[test]
    fn decode_rejects_bad_input() {
        let g = Grid::from_fn(2, 2, |_, _| 1.0);
        let mut buf = Vec::new();
        write_record(&mut buf, &g).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(decode_records(&bad, Path::new("m")).is_err());
        assert!(decode_records(&buf[..20], Path::new("m")).is_err());
        let mut nan = buf.clone();
        nan[16..24].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_records(&nan, Path::new("m")).is_err());
    }

    #[test]
    fn pgm_scales_to_full_range() {
        let g = Grid::from_vec(1, 3, vec![-1.0, 0.0, 1.0]).unwrap();
        let pgm = encode_pgm(&g);
        let body = &pgm[pgm.len() - 3..];
        assert_eq!(body, &[0, 128, 255]);
        assert!(pgm.starts_with(b"P5\n3 1\n255\n"));
    }

    #[test]
    fn upsample_repeats_pixels() {
        let g = Grid::from_vec(1, 2, vec![true, false]).unwrap();
        let u = upsample2(&g);
        assert_eq!(u.shape(), (2, 4));
        assert_eq!(u.count(), 4);
        assert!(u[(1, 1)] && !u[(1, 2)]);
    }
}
