//! Ellipse training phantoms and the 3D L^p-ball test volume.
//!
//! Unit coordinates map the image onto `[-1, 1]²` (x right, y up) and the
//! volume onto `[-1, 1]³`; membership is tested at pixel (voxel) centres.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, BinaryImage, Grid, Image};

/// Unit coordinate of the centre of pixel `i` along an axis of `size`.
pub fn unit_coord(i: usize, size: usize) -> f64 {
    let half = size as f64 / 2.0;
    (i as f64 + 0.5 - half) / half
}

/// `(x, y)` unit coordinates of pixel `(row, col)`.
pub fn pixel_center(row: usize, col: usize, size: usize) -> (f64, f64) {
    (unit_coord(col, size), unit_coord(size - 1 - row, size))
}

/// A filled ellipse with constant value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    /// Rotation of the first semi-axis from the x axis, radians.
    pub tilt: f64,
    #[serde(default = "one")]
    pub value: f64,
}

fn one() -> f64 {
    1.0
}

impl EllipseSpec {
    pub fn circle(center: (f64, f64), radius: f64) -> EllipseSpec {
        EllipseSpec {
            center,
            semi_axes: (radius, radius),
            tilt: 0.0,
            value: 1.0,
        }
    }

    /// Local coordinates along the semi-axes.
    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.tilt.sin_cos();
        (dx * c + dy * s, -dx * s + dy * c)
    }

    /// Implicit function `(u/a)² + (v/b)²`, `≤ 1` inside.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.local(x, y);
        (u / self.semi_axes.0).powi(2) + (v / self.semi_axes.1).powi(2)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.level(x, y) <= 1.0
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extent(&self) -> (f64, f64) {
        let (a, b) = self.semi_axes;
        let (s, c) = self.tilt.sin_cos();
        (
            (a * a * c * c + b * b * s * s).sqrt(),
            (a * a * s * s + b * b * c * c).sqrt(),
        )
    }

    /// Inside `[-1, 1]²` with at least `margin` to spare.
    pub fn fits_inside(&self, margin: f64) -> bool {
        let (hx, hy) = self.half_extent();
        self.center.0.abs() + hx <= 1.0 - margin && self.center.1.abs() + hy <= 1.0 - margin
    }

    /// Orientation in degrees `[0, 180)` (x right, y up) of the outward
    /// normal of the level curve through `(x, y)`; near the boundary this
    /// is the boundary normal.
    pub fn normal_angle(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.local(x, y);
        let (gu, gv) = (u / self.semi_axes.0.powi(2), v / self.semi_axes.1.powi(2));
        let (s, c) = self.tilt.sin_cos();
        let (gx, gy) = (gu * c - gv * s, gu * s + gv * c);
        gy.atan2(gx).to_degrees().rem_euclid(180.0)
    }

    /// First-order distance to the boundary, in unit coordinates.
    pub fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        let (u, v) = self.local(x, y);
        let (a, b) = self.semi_axes;
        let q = (u / a).powi(2) + (v / b).powi(2);
        let grad = 2.0 * ((u / (a * a)).powi(2) + (v / (b * b)).powi(2)).sqrt();
        if grad == 0.0 {
            return a.min(b);
        }
        (q - 1.0).abs() / grad
    }

    pub fn mask(&self, size: usize) -> BinaryImage {
        Grid::from_fn(size, size, |r, c| {
            let (x, y) = pixel_center(r, c, size);
            self.contains(x, y)
        })
    }
}

/// The single tilted ellipse used to demonstrate limited-angle
/// reconstruction artefacts and the solver regression tests.
pub fn demo_ellipse() -> EllipseSpec {
    EllipseSpec {
        center: (0.08, -0.05),
        semi_axes: (0.5, 0.28),
        tilt: 0.45,
        value: 1.0,
    }
}

/// Sum of ellipse values at every pixel centre.
pub fn render_ellipses(specs: &[EllipseSpec], size: usize) -> Image {
    Grid::from_fn(size, size, |r, c| {
        let (x, y) = pixel_center(r, c, size);
        specs.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum()
    })
}

/// Parameter ranges of the training ellipses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseRanges {
    pub center: (f64, f64),
    pub semi_axis: (f64, f64),
    /// Minimum distance between the ellipse and the image border.
    pub margin: f64,
}

impl Default for EllipseRanges {
    fn default() -> Self {
        EllipseRanges {
            center: (-0.7, 0.7),
            semi_axis: (0.08, 0.45),
            margin: 0.05,
        }
    }
}

/// Draw one ellipse from the ranges, rejecting those that leave the image.
pub fn sample_ellipse(rng: &mut impl Rng, ranges: &EllipseRanges) -> EllipseSpec {
    loop {
        let e = EllipseSpec {
            center: (
                rng.gen_range(ranges.center.0..=ranges.center.1),
                rng.gen_range(ranges.center.0..=ranges.center.1),
            ),
            semi_axes: (
                rng.gen_range(ranges.semi_axis.0..=ranges.semi_axis.1),
                rng.gen_range(ranges.semi_axis.0..=ranges.semi_axis.1),
            ),
            tilt: rng.gen_range(0.0..PI),
            value: 1.0,
        };
        if e.fits_inside(ranges.margin) {
            return e;
        }
    }
}

/// Phantoms paired with the ellipse that generated each.
pub type Dataset = Vec<(Image, EllipseSpec)>;

/// `n` single-ellipse phantoms, deterministic for a seed.
pub fn sample_dataset(n: usize, size: usize, seed: u64) -> Dataset {
    sample_dataset_with(n, size, seed, &EllipseRanges::default())
}

pub fn sample_dataset_with(n: usize, size: usize, seed: u64, ranges: &EllipseRanges) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let e = sample_ellipse(&mut rng, ranges);
            (render_ellipses(&[e], size), e)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    size: usize,
    seed: u64,
    specs: Vec<EllipseSpec>,
}

/// Write `phantoms/NNNN.bin`, `specs.json` and `seed.txt` under `dir`.
pub fn save_dataset(dir: &Path, data: &[(Image, EllipseSpec)], size: usize, seed: u64) -> Result<()> {
    let phantoms = dir.join("phantoms");
    std::fs::create_dir_all(&phantoms).map_err(|e| Error::io(&phantoms, e))?;
    for (i, (img, _)) in data.iter().enumerate() {
        grid::save_grid(&phantoms.join(format!("{i:04}.bin")), img)?;
    }
    let manifest = Manifest {
        size,
        seed,
        specs: data.iter().map(|d| d.1).collect(),
    };
    let specs = dir.join("specs.json");
    std::fs::write(&specs, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&specs, e))?;
    let seed_path = dir.join("seed.txt");
    std::fs::write(&seed_path, format!("{seed}\n")).map_err(|e| Error::io(&seed_path, e))
}

/// Read a dataset written by [`save_dataset`]; returns `(size, seed, data)`.
pub fn load_dataset(dir: &Path) -> Result<(usize, u64, Dataset)> {
    let specs = dir.join("specs.json");
    let text = std::fs::read_to_string(&specs).map_err(|e| Error::io(&specs, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut data = Vec::with_capacity(manifest.specs.len());
    for (i, spec) in manifest.specs.into_iter().enumerate() {
        let path = dir.join("phantoms").join(format!("{i:04}.bin"));
        let img = grid::load_grid(&path)?;
        if img.shape() != (manifest.size, manifest.size) {
            return Err(Error::format(&path, "phantom size differs from manifest"));
        }
        data.push((img, spec));
    }
    Ok((manifest.size, manifest.seed, data))
}

/// An L^p ball `Σ|x_i − c_i|^p ≤ r^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpBallSpec {
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "one")]
    pub value: f64,
}

fn default_p() -> f64 {
    1.5
}

impl LpBallSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.radius > 0.0) {
            return Err(Error::param("L^p ball needs p > 0 and radius > 0"));
        }
        if self.center.iter().any(|c| c.abs() + self.radius > 1.0) {
            return Err(Error::param("L^p ball leaves the unit cube"));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let s: f64 = [x, y, z]
            .iter()
            .zip(&self.center)
            .map(|(v, c)| (v - c).abs().powf(self.p))
            .sum();
        s <= self.radius.powf(self.p)
    }

    /// Voxel index range along y touched by the ball (empty if none).
    #[allow(clippy::reversed_empty_ranges)]
    pub fn y_extent(&self, size: usize) -> std::ops::RangeInclusive<usize> {
        let lo = (0..size).find(|&i| unit_coord(i, size) >= self.center[1] - self.radius);
        let hi = (0..size)
            .rev()
            .find(|&i| unit_coord(i, size) <= self.center[1] + self.radius);
        match (lo, hi) {
            (Some(lo), Some(hi)) if lo <= hi => lo..=hi,
            _ => 1..=0,
        }
    }

    /// Index of the xz-slice closest to the ball centre.
    pub fn mid_slice(&self, size: usize) -> usize {
        let half = size as f64 / 2.0;
        ((self.center[1] * half + half - 0.5).round().max(0.0) as usize).min(size - 1)
    }
}

/// The three-ball test phantom placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallPreset {
    #[serde(default)]
    pub description: String,
    pub balls: Vec<LpBallSpec>,
}

impl BallPreset {
    /// The placement shipped with the toolkit (`presets/three_balls.json`).
    pub fn three_balls() -> BallPreset {
        serde_json::from_str(include_str!("../presets/three_balls.json")).expect("bundled preset parses")
    }

    pub fn load(path: &Path) -> Result<BallPreset> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let preset: BallPreset =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        preset.balls.iter().try_for_each(LpBallSpec::validate)?;
        Ok(preset)
    }

    /// Mid-ball xz-slice indices, one per ball.
    pub fn mid_slices(&self, size: usize) -> Vec<usize> {
        self.balls.iter().map(|b| b.mid_slice(size)).collect()
    }
}

/// A cubic volume stored as xz-slices indexed by y. Slice images have rows
/// running down in z (row 0 at the top) and columns running in x.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    size: usize,
    slices: Vec<Image>,
}

impl Volume {
    pub fn from_xz_slices(slices: Vec<Image>) -> Result<Volume> {
        let size = slices.len();
        if slices.iter().any(|s| s.shape() != (size, size)) {
            return Err(Error::dim("volume slices must be size x size, one per y index"));
        }
        Ok(Volume { size, slices })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn xz_slice(&self, y: usize) -> &Image {
        &self.slices[y]
    }

    pub fn xz_slices(&self) -> &[Image] {
        &self.slices
    }

    /// Voxel value at indices `(ix, iy, iz)`.
    pub fn voxel(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        self.slices[iy][(self.size - 1 - iz, ix)]
    }

    /// All xz-slices as consecutive LIMB records in y order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let refs: Vec<&Image> = self.slices.iter().collect();
        grid::save_grids(path, &refs)
    }

    pub fn load(path: &Path) -> Result<Volume> {
        Volume::from_xz_slices(grid::load_grids(path)?)
    }

    /// xy-slice at depth index `z`: rows run down in y, columns in x.
    pub fn xy_slice(&self, z: usize) -> Image {
        let n = self.size;
        Grid::from_fn(n, n, |r, c| self.voxel(c, n - 1 - r, z))
    }
}

fn ball_value(specs: &[LpBallSpec], x: f64, y: f64, z: f64) -> f64 {
    specs.iter().filter(|b| b.contains(x, y, z)).map(|b| b.value).sum()
}

/// Render balls into a volume of xz-slices.
pub fn render_lp_volume(specs: &[LpBallSpec], size: usize) -> Result<Volume> {
    specs.iter().try_for_each(LpBallSpec::validate)?;
    let slices = (0..size)
        .map(|iy| {
            let y = unit_coord(iy, size);
            Grid::from_fn(size, size, |r, c| {
                ball_value(specs, unit_coord(c, size), y, unit_coord(size - 1 - r, size))
            })
        })
        .collect();
    Volume::from_xz_slices(slices)
}

/// Direct rendering of one xy-slice (same layout as [`Volume::xy_slice`]).
pub fn render_lp_xy_slice(specs: &[LpBallSpec], size: usize, iz: usize) -> Image {
    let z = unit_coord(iz, size);
    Grid::from_fn(size, size, |r, c| {
        ball_value(specs, unit_coord(c, size), unit_coord(size - 1 - r, size), z)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_list_renders_zero() {
        assert_eq!(render_ellipses(&[], 16), Image::square(16));
    }

    #[test]
    fn circle_area() {
        let size = 128;
        let img = render_ellipses(&[EllipseSpec::circle((0.0, 0.0), 0.5)], size);
        let r = 0.5 * size as f64 / 2.0;
        let expected = PI * r * r;
        assert!((img.sum() - expected).abs() < 0.02 * expected);
    }

    #[test]
    fn tilt_by_pi_is_identity() {
        let e = EllipseSpec {
            center: (0.1, -0.2),
            semi_axes: (0.4, 0.15),
            tilt: 0.3,
            value: 1.0,
        };
        let f = EllipseSpec { tilt: 0.3 + PI, ..e };
        assert_eq!(render_ellipses(&[e], 64), render_ellipses(&[f], 64));
    }

    #[test]
    fn overlaps_sum_and_background_is_zero() {
        let a = EllipseSpec::circle((0.0, 0.0), 0.3);
        let b = EllipseSpec::circle((0.2, 0.0), 0.3);
        let img = render_ellipses(&[a, b], 32);
        assert_eq!(img.max(), 2.0);
        assert!(img.as_slice().iter().all(|&v| v == 0.0 || v == 1.0 || v == 2.0));
    }

    #[test]
    fn dataset_sampling() {
        let a = sample_dataset(20, 32, 7);
        let b = sample_dataset(20, 32, 7);
        assert_eq!(a, b);
        assert!(sample_dataset(0, 32, 7).is_empty());
        for (img, e) in &a {
            assert!(e.fits_inside(0.0));
            // nothing touches the border rows/columns
            for i in 0..32 {
                assert_eq!(img[(0, i)] + img[(31, i)] + img[(i, 0)] + img[(i, 31)], 0.0);
            }
            assert!(img.sum() > 0.0);
        }
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let data = sample_dataset(3, 16, 1);
        save_dataset(dir.path(), &data, 16, 1).unwrap();
        let (size, seed, back) = load_dataset(dir.path()).unwrap();
        assert_eq!((size, seed), (16, 1));
        assert_eq!(back, data);
        assert!(dir.path().join("phantoms/0002.bin").exists());
    }

    #[test]
    fn normals_of_an_axis_aligned_ellipse() {
        let e = EllipseSpec {
            center: (0.0, 0.0),
            semi_axes: (0.5, 0.2),
            tilt: 0.0,
            value: 1.0,
        };
        assert!((e.normal_angle(0.5, 0.0) - 0.0).abs() < 1e-9);
        assert!((e.normal_angle(0.0, 0.2) - 90.0).abs() < 1e-9);
        assert!(e.boundary_distance(0.5, 0.0) < 1e-12);
        let rotated = EllipseSpec { tilt: PI / 2.0, ..e };
        assert!((rotated.normal_angle(0.0, 0.5) - 90.0).abs() < 1e-9);
    }

    #[test]
    fn euclidean_ball_cross_section() {
        let ball = LpBallSpec {
            center: [0.0, 0.0, 0.0],
            radius: 0.5,
            p: 2.0,
            value: 1.0,
        };
        let size = 64;
        let vol = render_lp_volume(&[ball], size).unwrap();
        let mid = vol.xz_slice(size / 2);
        // analytic cross-section at y = unit_coord(32)
        let y = unit_coord(size / 2, size);
        let r_px = (0.25f64 - y * y).sqrt() * size as f64 / 2.0;
        let measured_r = (mid.sum() / PI).sqrt();
        assert!((measured_r - r_px).abs() < 1.0);
    }

    #[test]
    fn lp_ball_between_diamond_and_disk() {
        let at = |p: f64| LpBallSpec {
            center: [0.0, 0.0, 0.0],
            radius: 0.6,
            p,
            value: 1.0,
        };
        let size = 32;
        let slice = |p| {
            render_lp_volume(&[at(p)], size)
                .unwrap()
                .xz_slice(size / 2)
                .threshold(0.5)
        };
        let (d1, d15, d2) = (slice(1.0), slice(1.5), slice(2.0));
        assert!(d1.is_subset_of(&d15) && d15.is_subset_of(&d2));
        assert!(d1.count() < d15.count() && d15.count() < d2.count());
    }

    #[test]
    fn slices_outside_balls_are_empty_and_reslicing_matches() {
        let preset = BallPreset::three_balls();
        let size = 32;
        let vol = render_lp_volume(&preset.balls, size).unwrap();
        assert_eq!(vol.xz_slice(0), &Image::square(size));
        for iz in [3, 10, 16, 25] {
            assert_eq!(vol.xy_slice(iz), render_lp_xy_slice(&preset.balls, size, iz));
        }
        for b in &preset.balls {
            assert!(b.y_extent(size).contains(&b.mid_slice(size)));
        }
    }

    #[test]
    fn preset_geometry() {
        let preset = BallPreset::three_balls();
        assert_eq!(preset.balls.len(), 3);
        preset.balls.iter().for_each(|b| b.validate().unwrap());
        // each mid-ball slice cuts only its own ball
        let size = 64;
        for (i, b) in preset.balls.iter().enumerate() {
            let y = b.mid_slice(size);
            for (j, other) in preset.balls.iter().enumerate() {
                assert_eq!(other.y_extent(size).contains(&y), i == j, "ball {j} in slice {y}");
            }
        }
        // neighbouring balls overlap in their xy footprint
        for w in preset.balls.windows(2) {
            let d = ((w[0].center[0] - w[1].center[0]).powi(2) + (w[0].center[1] - w[1].center[1]).powi(2)).sqrt();
            assert!(d < w[0].radius + w[1].radius);
        }
    }
}
