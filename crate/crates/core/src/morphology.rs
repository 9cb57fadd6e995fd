//! Flat binary and grayscale morphology, the Lantuéjoul skeleton, and the
//! oriented structuring elements of the wavefront-set prior.
//!
//! Dilation and erosion treat the image as embedded in an all-zero plane:
//! samples outside the grid read as 0 (false). Closing pairs the dilation
//! with its adjoint erosion, which ignores samples outside the grid, so
//! that closing stays extensive and idempotent and leaves constants alone.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use crate::dtcwt::SubbandIndex;
use crate::error::{Error, Result};
use crate::geometry::orientation_distance;
use crate::grid::{BinaryImage, Grid, Image};

/// A small binary probe with an origin.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuringElement {
    mask: Grid<bool>,
    anchor: (usize, usize),
}

impl StructuringElement {
    pub fn new(mask: Grid<bool>, anchor: (usize, usize)) -> Result<StructuringElement> {
        if !mask.any() {
            return Err(Error::param("structuring element has no cells"));
        }
        if anchor.0 >= mask.rows() || anchor.1 >= mask.cols() {
            return Err(Error::param(format!(
                "anchor {anchor:?} outside a {:?} element",
                mask.shape()
            )));
        }
        Ok(StructuringElement { mask, anchor })
    }

    /// Element from cell offsets relative to the anchor.
    pub fn from_offsets(offsets: &[(isize, isize)]) -> Result<StructuringElement> {
        if offsets.is_empty() {
            return Err(Error::param("structuring element has no cells"));
        }
        let r0 = offsets.iter().map(|o| o.0).min().unwrap().min(0);
        let r1 = offsets.iter().map(|o| o.0).max().unwrap().max(0);
        let c0 = offsets.iter().map(|o| o.1).min().unwrap().min(0);
        let c1 = offsets.iter().map(|o| o.1).max().unwrap().max(0);
        let mut mask = Grid::new((r1 - r0 + 1) as usize, (c1 - c0 + 1) as usize);
        for &(r, c) in offsets {
            mask[((r - r0) as usize, (c - c0) as usize)] = true;
        }
        StructuringElement::new(mask, ((-r0) as usize, (-c0) as usize))
    }

    /// Full `side x side` square anchored at its centre (`side` odd).
    pub fn square(side: usize) -> StructuringElement {
        assert!(side % 2 == 1, "square element needs an odd side");
        let mask = Grid::from_fn(side, side, |_, _| true);
        StructuringElement::new(mask, (side / 2, side / 2)).unwrap()
    }

    /// 3x3 cross (4-neighbourhood plus centre).
    pub fn cross() -> StructuringElement {
        StructuringElement::from_offsets(&[(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)]).unwrap()
    }

    /// Disk of the given radius (Euclidean, pixel centres).
    pub fn disk(radius: usize) -> StructuringElement {
        let r = radius as isize;
        let offsets: Vec<_> = (-r..=r)
            .flat_map(|i| (-r..=r).map(move |j| (i, j)))
            .filter(|&(i, j)| i * i + j * j <= r * r)
            .collect();
        StructuringElement::from_offsets(&offsets).unwrap()
    }

    /// The single-cell identity element.
    pub fn point() -> StructuringElement {
        StructuringElement::from_offsets(&[(0, 0)]).unwrap()
    }

    pub fn mask(&self) -> &Grid<bool> {
        &self.mask
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    /// Offsets of the true cells relative to the anchor, row-major.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let (ar, ac) = (self.anchor.0 as isize, self.anchor.1 as isize);
        let mut out = Vec::new();
        for r in 0..self.mask.rows() {
            for c in 0..self.mask.cols() {
                if self.mask[(r, c)] {
                    out.push((r as isize - ar, c as isize - ac));
                }
            }
        }
        out
    }

    pub fn contains_anchor(&self) -> bool {
        self.mask[self.anchor]
    }

    /// Point reflection through the anchor.
    pub fn reflect(&self) -> StructuringElement {
        let offsets: Vec<_> = self.offsets().into_iter().map(|(r, c)| (-r, -c)).collect();
        StructuringElement::from_offsets(&offsets).unwrap()
    }

    pub fn len(&self) -> usize {
        self.mask.count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `#`/`.` rendering, one line per mask row.
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        for r in 0..self.mask.rows() {
            for c in 0..self.mask.cols() {
                s.push(if self.mask[(r, c)] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for StructuringElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ascii())
    }
}

/// Values with a lattice order: `bool` (binary) and `f64` (grayscale).
pub trait Lattice: Copy + PartialOrd {
    const BOTTOM: Self;
    const TOP: Self;
    const ZERO: Self;
    fn sup(self, other: Self) -> Self;
    fn inf(self, other: Self) -> Self;
}

impl Lattice for bool {
    const BOTTOM: bool = false;
    const TOP: bool = true;
    const ZERO: bool = false;
    fn sup(self, other: bool) -> bool {
        self | other
    }
    fn inf(self, other: bool) -> bool {
        self & other
    }
}

impl Lattice for f64 {
    const BOTTOM: f64 = f64::NEG_INFINITY;
    const TOP: f64 = f64::INFINITY;
    const ZERO: f64 = 0.0;
    fn sup(self, other: f64) -> f64 {
        self.max(other)
    }
    fn inf(self, other: f64) -> f64 {
        self.min(other)
    }
}

/// How samples outside the grid enter a min/max.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Border {
    /// Outside samples read as zero (image embedded in a zero plane).
    Zero,
    /// Outside samples are skipped.
    Skip,
}

/// `out(p) = max_s d(p - s)` for `sign = -1`, `min_s d(p + s)` for erosion.
fn rank<T: Lattice>(d: &Grid<T>, offsets: &[(isize, isize)], dilate: bool, border: Border) -> Grid<T> {
    let (rows, cols) = d.shape();
    let sign = if dilate { -1 } else { 1 };
    let mut out = Grid::from_fn(rows, cols, |_, _| if dilate { T::BOTTOM } else { T::TOP });
    for &(dr, dc) in offsets {
        let (dr, dc) = (sign * dr, sign * dc);
        for r in 0..rows {
            let rr = r as isize + dr;
            let row_inside = rr >= 0 && (rr as usize) < rows;
            for c in 0..cols {
                let cc = c as isize + dc;
                let v = if row_inside && cc >= 0 && (cc as usize) < cols {
                    d[(rr as usize, cc as usize)]
                } else if border == Border::Zero {
                    T::ZERO
                } else {
                    continue;
                };
                let o = &mut out[(r, c)];
                *o = if dilate { o.sup(v) } else { o.inf(v) };
            }
        }
    }
    out
}

/// Flat dilation `D ⊕ S = ∪_s D_s`, generic over binary and grayscale.
pub fn dilate<T: Lattice>(d: &Grid<T>, s: &StructuringElement) -> Grid<T> {
    rank(d, &s.offsets(), true, Border::Zero)
}

/// Flat erosion `D ⊖ S = ∩_s D_{-s}`.
pub fn erode<T: Lattice>(d: &Grid<T>, s: &StructuringElement) -> Grid<T> {
    rank(d, &s.offsets(), false, Border::Zero)
}

/// Opening `(D ⊖ S) ⊕ S`: the union of translates of `S` that fit inside
/// `D` and inside the grid (for elements containing their anchor).
pub fn open<T: Lattice>(d: &Grid<T>, s: &StructuringElement) -> Grid<T> {
    dilate(&erode(d, s), s)
}

/// Closing: dilation followed by its adjoint erosion.
pub fn close<T: Lattice>(d: &Grid<T>, s: &StructuringElement) -> Grid<T> {
    let offsets = s.offsets();
    rank(&rank(d, &offsets, true, Border::Skip), &offsets, false, Border::Skip)
}

pub fn dilate_binary(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    dilate(d, s)
}

pub fn erode_binary(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    erode(d, s)
}

pub fn open_binary(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    open(d, s)
}

pub fn close_binary(d: &BinaryImage, s: &StructuringElement) -> BinaryImage {
    close(d, s)
}

pub fn dilate_gray(d: &Image, s: &StructuringElement) -> Image {
    dilate(d, s)
}

pub fn erode_gray(d: &Image, s: &StructuringElement) -> Image {
    erode(d, s)
}

pub fn open_gray(d: &Image, s: &StructuringElement) -> Image {
    open(d, s)
}

pub fn close_gray(d: &Image, s: &StructuringElement) -> Image {
    close(d, s)
}

/// Lantuéjoul skeleton with the 3x3 cross:
/// `∪_{k=0}^{K} (D ⊖ kS) − (D ⊖ kS) ∘ S`, `K` the last step before the
/// eroded set vanishes.
pub fn skeleton(d: &BinaryImage) -> BinaryImage {
    let s = StructuringElement::cross();
    let mut out = Grid::new(d.rows(), d.cols());
    let mut eroded = d.clone();
    while eroded.any() {
        let opened = open(&eroded, &s);
        for ((o, &e), &p) in out
            .as_mut_slice()
            .iter_mut()
            .zip(eroded.as_slice())
            .zip(opened.as_slice())
        {
            *o |= e && !p;
        }
        eroded = erode(&eroded, &s);
    }
    out
}

/// Fill every background region not 4-connected to the grid border.
pub fn fill_holes(d: &BinaryImage) -> BinaryImage {
    let (rows, cols) = d.shape();
    let mut outside = Grid::<bool>::new(rows, cols);
    let mut queue = VecDeque::new();
    let seed = |r: usize, c: usize, outside: &mut Grid<bool>, queue: &mut VecDeque<(usize, usize)>| {
        if !d[(r, c)] && !outside[(r, c)] {
            outside[(r, c)] = true;
            queue.push_back((r, c));
        }
    };
    for r in 0..rows {
        seed(r, 0, &mut outside, &mut queue);
        seed(r, cols - 1, &mut outside, &mut queue);
    }
    for c in 0..cols {
        seed(0, c, &mut outside, &mut queue);
        seed(rows - 1, c, &mut outside, &mut queue);
    }
    while let Some((r, c)) = queue.pop_front() {
        let neighbours = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        for (nr, nc) in neighbours {
            if nr < rows && nc < cols {
                seed(nr, nc, &mut outside, &mut queue);
            }
        }
    }
    outside.complement()
}

/// Number of 8-connected components of the true pixels.
pub fn count_components(d: &BinaryImage) -> usize {
    let (rows, cols) = d.shape();
    let mut seen = Grid::<bool>::new(rows, cols);
    let mut count = 0;
    let mut stack = Vec::new();
    for r0 in 0..rows {
        for c0 in 0..cols {
            if !d[(r0, c0)] || seen[(r0, c0)] {
                continue;
            }
            count += 1;
            seen[(r0, c0)] = true;
            stack.push((r0, c0));
            while let Some((r, c)) = stack.pop() {
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let (nr, nc) = (r as isize + dr, c as isize + dc);
                        if let Some(&v) = d.get(nr, nc) {
                            let (nr, nc) = (nr as usize, nc as usize);
                            if v && !seen[(nr, nc)] {
                                seen[(nr, nc)] = true;
                                stack.push((nr, nc));
                            }
                        }
                    }
                }
            }
        }
    }
    count
}

/// Round half toward zero; for segments through the anchor this breaks
/// ties toward the anchor row/column.
fn round_to_anchor(v: f64) -> isize {
    if v >= 0.0 {
        (v - 0.5).ceil() as isize
    } else {
        (v + 0.5).floor() as isize
    }
}

/// Unit edge direction `(row, col)` of an orientation in degrees.
fn direction(deg: f64) -> (f64, f64) {
    let a = deg.to_radians();
    (a.sin(), a.cos())
}

/// Straight segment of `length` cells through the anchor along the
/// subband's nominal orientation. Steps one cell along the major axis and
/// rounds the minor coordinate (Bresenham's choice for a line through the
/// origin).
pub fn line_element(nu: SubbandIndex, length: usize) -> Result<StructuringElement> {
    if length < 3 || length % 2 == 0 {
        return Err(Error::param(format!(
            "line element length must be odd and >= 3, got {length}"
        )));
    }
    let (dr, dc) = direction(nu.orientation_deg());
    let half = (length / 2) as isize;
    let offsets: Vec<_> = (-half..=half)
        .map(|t| {
            if dc.abs() >= dr.abs() {
                (round_to_anchor(t as f64 * dr / dc), t)
            } else {
                (t, round_to_anchor(t as f64 * dc / dr))
            }
        })
        .collect();
    StructuringElement::from_offsets(&offsets)
}

/// The four subband transitions the dilation prior uses.
pub const TRANSITIONS: [(SubbandIndex, SubbandIndex); 4] = [
    (SubbandIndex::HbarL, SubbandIndex::HbarH),
    (SubbandIndex::HbarH, SubbandIndex::LbarH),
    (SubbandIndex::HL, SubbandIndex::HH),
    (SubbandIndex::HH, SubbandIndex::LH),
];

/// Rasterise a polyline: wherever a segment crosses an integer value of its
/// major coordinate, emit the rounded minor coordinate.
fn rasterize_polyline(points: &[(f64, f64)]) -> BTreeSet<(isize, isize)> {
    const EPS: f64 = 1e-9;
    let mut cells = BTreeSet::new();
    for w in points.windows(2) {
        let ((r0, c0), (r1, c1)) = (w[0], w[1]);
        let (dr, dc) = (r1 - r0, c1 - c0);
        if dr == 0.0 && dc == 0.0 {
            continue;
        }
        let col_major = dc.abs() >= dr.abs();
        let (m0, m1) = if col_major { (c0, c1) } else { (r0, r1) };
        let lo = (m0.min(m1) - EPS).ceil() as isize;
        let hi = (m0.max(m1) + EPS).floor() as isize;
        for m in lo..=hi {
            let t = ((m as f64 - m0) / (m1 - m0)).clamp(0.0, 1.0);
            if col_major {
                cells.insert((round_to_anchor(r0 + t * dr), m));
            } else {
                cells.insert((m, round_to_anchor(c0 + t * dc)));
            }
        }
    }
    cells
}

/// Cells of one arc of the set `y = ±a·sign(x)·x²`, `x ∈ [-1, 1]`, scaled so
/// the chord's major-axis extent is `radius` and rotated so the arc is
/// tangent at the anchor to `from` and bends toward `to`.
pub fn parabolic_arc(from: SubbandIndex, to: SubbandIndex, a: f64, radius: usize) -> BTreeSet<(isize, isize)> {
    let theta = from.orientation_deg();
    let (ur, uc) = direction(theta);
    // unit normal pointing toward increasing orientation angle
    let (nr, nc) = (uc, -ur);
    let delta = to.orientation_deg() - theta;
    let bend = if delta.rem_euclid(180.0) < 90.0 { 1.0 } else { -1.0 };
    let scale = radius as f64 / ur.abs().max(uc.abs());
    let samples = 32 * radius.max(1);
    let points: Vec<(f64, f64)> = (0..=samples)
        .map(|k| {
            let x = -1.0 + 2.0 * k as f64 / samples as f64;
            let y = bend * a * x.signum() * x * x;
            (scale * (x * ur + y * nr), scale * (x * uc + y * nc))
        })
        .collect();
    rasterize_polyline(&points)
}

/// Union of `curvature_samples` parabolic arcs (`a = 0, 1/(k-1), ..., 1`).
pub fn directional_element(
    from: SubbandIndex,
    to: SubbandIndex,
    radius: usize,
    curvature_samples: usize,
) -> Result<StructuringElement> {
    if !TRANSITIONS.contains(&(from, to)) {
        return Err(Error::param(format!(
            "unsupported directional transition {from} -> {to}"
        )));
    }
    if radius < 3 {
        return Err(Error::param(format!("directional radius must be >= 3, got {radius}")));
    }
    if curvature_samples == 0 {
        return Err(Error::param("curvature_samples must be >= 1"));
    }
    debug_assert!((orientation_distance(from.orientation_deg(), to.orientation_deg()) - 30.0).abs() < 1e-9);
    let mut cells = BTreeSet::new();
    for i in 0..curvature_samples {
        let a = if curvature_samples == 1 {
            0.0
        } else {
            i as f64 / (curvature_samples - 1) as f64
        };
        cells.extend(parabolic_arc(from, to, a, radius));
    }
    let offsets: Vec<_> = cells.into_iter().collect();
    StructuringElement::from_offsets(&offsets)
}
