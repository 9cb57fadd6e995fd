//! Parallel-beam projection geometry and the discrete Radon transform.
//!
//! Coordinates: an `N x N` image covers `[-N/2, N/2]^2` in pixel units with
//! the origin at the image centre, `x` to the right and `y` up (row 0 is the
//! top row). A ray at angle `phi` travels along `(cos phi, sin phi)`, so 90
//! degrees is the vertical central direction. The detector axis is
//! `(sin phi, -cos phi)` and passes through the image centre.
//!
//! The projector is ray driven: each ray is sampled at equispaced points and
//! the image is bilinearly interpolated there. The resulting weights are
//! stored as a sparse matrix, so the adjoint is the exact transpose.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGeometry {
    /// Ray directions in degrees, strictly increasing.
    pub angles: Vec<f64>,
    pub detector_count: usize,
    /// Bin width in pixel units.
    pub detector_spacing: f64,
    /// Sampling step along each ray in pixels.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.5
}

impl ProjectionGeometry {
    /// `count` angles evenly spaced on `[start, end]` degrees (both inclusive).
    pub fn limited(start: f64, end: f64, count: usize, detector_count: usize) -> Self {
        let angles = if count == 1 {
            vec![start]
        } else {
            (0..count)
                .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
                .collect()
        };
        ProjectionGeometry {
            angles,
            detector_count,
            detector_spacing: 1.0,
            step: default_step(),
        }
    }

    /// 50 angles on [70, 110] degrees.
    pub fn default_limited(size: usize) -> Self {
        Self::limited(70.0, 110.0, 50, size)
    }

    /// `count` angles covering a half turn, `[0, 180)`.
    pub fn full(count: usize, detector_count: usize) -> Self {
        let angles = (0..count).map(|i| 180.0 * i as f64 / count as f64).collect();
        ProjectionGeometry {
            angles,
            detector_count,
            detector_spacing: 1.0,
            step: default_step(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.len() < 2 {
            return Err(Error::config("geometry needs at least two angles"));
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("geometry angles must be finite"));
        }
        if self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("geometry angles must be strictly increasing"));
        }
        if self.opening_angle() >= 180.0 {
            return Err(Error::config("geometry opening angle must be below 180 degrees"));
        }
        if self.detector_count == 0 {
            return Err(Error::config("detector_count must be positive"));
        }
        if !(self.detector_spacing > 0.0 && self.detector_spacing.is_finite()) {
            return Err(Error::config("detector_spacing must be positive"));
        }
        if !(self.step > 0.0 && self.step <= 0.5) {
            return Err(Error::config("ray sampling step must lie in (0, 0.5]"));
        }
        Ok(())
    }

    pub fn opening_angle(&self) -> f64 {
        self.angles.last().unwrap_or(&0.0) - self.angles.first().unwrap_or(&0.0)
    }

    /// Signed offset of detector bin `k` from the centre.
    pub fn detector_offset(&self, k: usize) -> f64 {
        (k as f64 + 0.5 - self.detector_count as f64 / 2.0) * self.detector_spacing
    }

    /// Range of boundary tangent orientations, in degrees folded to
    /// `(-90, 90]` and measured in image (row-down) orientation, that the
    /// geometry observes stably: tangents parallel to some measured ray.
    ///
    /// Returned as `(centre, half_width)`.
    pub fn visible_tangent_wedge(&self) -> (f64, f64) {
        let lo = self.angles[0];
        let hi = *self.angles.last().unwrap();
        // a ray direction phi (y up) is a tangent of -phi in row-down terms
        let centre = fold_orientation(-(lo + hi) / 2.0);
        (centre, (hi - lo) / 2.0)
    }

    /// Range of boundary normal directions, in degrees `[0, 180)` with `x`
    /// right and `y` up, that are normals of measured lines: singularities
    /// with these normals are stably visible. Returned as
    /// `(centre, half_width)`.
    pub fn visible_normal_wedge(&self) -> (f64, f64) {
        let lo = self.angles[0];
        let hi = *self.angles.last().unwrap();
        (((lo + hi) / 2.0 - 90.0).rem_euclid(180.0), (hi - lo) / 2.0)
    }
}

/// Fold an undirected orientation in degrees to `(-90, 90]`.
pub fn fold_orientation(deg: f64) -> f64 {
    let mut a = deg.rem_euclid(180.0);
    if a > 90.0 {
        a -= 180.0;
    }
    a
}

/// Smallest angular distance between two undirected orientations, degrees.
pub fn orientation_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub geometry: ProjectionGeometry,
    /// One row per angle, one column per detector bin.
    pub values: Grid<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: ProjectionGeometry) -> Self {
        let values = Grid::new(geometry.angles.len(), geometry.detector_count);
        Sinogram { geometry, values }
    }

    pub fn new(geometry: ProjectionGeometry, values: Grid<f64>) -> Result<Self> {
        if values.shape() != (geometry.angles.len(), geometry.detector_count) {
            return Err(Error::dim(format!(
                "sinogram {:?} does not match geometry {}x{}",
                values.shape(),
                geometry.angles.len(),
                geometry.detector_count
            )));
        }
        if !values.all_finite() {
            return Err(Error::numeric("sinogram contains non-finite values"));
        }
        Ok(Sinogram { geometry, values })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// One LIMB record plus the geometry in `<path>.geom.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::grid::save_grid(path, &self.values)?;
        let side = geometry_sidecar(path);
        let text = serde_json::to_string_pretty(&self.geometry)?;
        std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Sinogram> {
        let geometry = ProjectionGeometry::load(&geometry_sidecar(path))?;
        let values = crate::grid::load_grid(path)?;
        Sinogram::new(geometry, values).map_err(|e| match e {
            Error::Dimension(m) => Error::format(path, m),
            other => other,
        })
    }
}

fn geometry_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".geom.json");
    s.into()
}

impl ProjectionGeometry {
    /// Read and validate a geometry JSON document.
    pub fn load(path: &Path) -> Result<ProjectionGeometry> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let geom: ProjectionGeometry =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        geom.validate()?;
        Ok(geom)
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Csr {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
}

impl Csr {
    fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.weights[a..b])
    }

    fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    fn transpose(&self, cols: usize) -> Csr {
        let mut counts = vec![0usize; cols + 1];
        for &j in &self.indices {
            counts[j as usize + 1] += 1;
        }
        for j in 0..cols {
            counts[j + 1] += counts[j];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut indices = vec![0u32; self.indices.len()];
        let mut weights = vec![0.0; self.weights.len()];
        for i in 0..self.rows() {
            let (idx, w) = self.row(i);
            for (&j, &v) in idx.iter().zip(w) {
                let slot = next[j as usize];
                indices[slot] = i as u32;
                weights[slot] = v;
                next[j as usize] += 1;
            }
        }
        Csr {
            offsets,
            indices,
            weights,
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (idx, w) = self.row(i);
            *yi = idx.iter().zip(w).map(|(&j, &v)| v * x[j as usize]).sum();
        });
    }
}

/// The discretised Radon operator `A` for one geometry and image size.
#[derive(Debug, Clone)]
pub struct Projector {
    geometry: ProjectionGeometry,
    size: usize,
    forward: Csr,
    adjoint: Csr,
}

impl Projector {
    pub fn new(geometry: &ProjectionGeometry, size: usize) -> Result<Self> {
        geometry.validate()?;
        if size == 0 {
            return Err(Error::dim("image size must be positive"));
        }
        let rays: Vec<(usize, usize)> = (0..geometry.angles.len())
            .flat_map(|a| (0..geometry.detector_count).map(move |k| (a, k)))
            .collect();
        let per_ray: Vec<Vec<(u32, f64)>> = rays
            .par_iter()
            .map_init(
                || vec![0.0f64; size * size],
                |scratch, &(a, k)| ray_weights(geometry, size, a, k, scratch),
            )
            .collect();
        let mut offsets = Vec::with_capacity(per_ray.len() + 1);
        offsets.push(0);
        let nnz: usize = per_ray.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut weights = Vec::with_capacity(nnz);
        for ray in per_ray {
            for (j, w) in ray {
                indices.push(j);
                weights.push(w);
            }
            offsets.push(indices.len());
        }
        let forward = Csr {
            offsets,
            indices,
            weights,
        };
        let adjoint = forward.transpose(size * size);
        Ok(Projector {
            geometry: geometry.clone(),
            size,
            forward,
            adjoint,
        })
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geometry
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn nonzeros(&self) -> usize {
        self.forward.indices.len()
    }

    /// `A f`.
    pub fn forward(&self, img: &Image) -> Result<Sinogram> {
        if img.shape() != (self.size, self.size) {
            return Err(Error::dim(format!(
                "projector built for {0}x{0}, image is {1:?}",
                self.size,
                img.shape()
            )));
        }
        let mut out = Sinogram::zeros(self.geometry.clone());
        self.forward.apply(img.as_slice(), out.values.as_mut_slice());
        Ok(out)
    }

    /// `A^T m`.
    pub fn adjoint(&self, sino: &Sinogram) -> Result<Image> {
        let expect = (self.geometry.angles.len(), self.geometry.detector_count);
        if sino.values.shape() != expect {
            return Err(Error::dim(format!(
                "sinogram {:?} does not match projector {:?}",
                sino.values.shape(),
                expect
            )));
        }
        let mut out = Image::square(self.size);
        self.adjoint.apply(sino.values.as_slice(), out.as_mut_slice());
        Ok(out)
    }
}

/// Weights of one ray, sorted by pixel index.
fn ray_weights(
    geom: &ProjectionGeometry,
    size: usize,
    angle_idx: usize,
    bin: usize,
    scratch: &mut [f64],
) -> Vec<(u32, f64)> {
    let phi = geom.angles[angle_idx].to_radians();
    let (dir_x, dir_y) = (phi.cos(), phi.sin());
    let (det_x, det_y) = (phi.sin(), -phi.cos());
    let s = geom.detector_offset(bin);
    let half = size as f64 / 2.0;
    let reach = half * std::f64::consts::SQRT_2 + 1.0;
    let h = geom.step;
    let samples = (2.0 * reach / h).ceil() as usize + 1;
    let mut touched: Vec<u32> = Vec::new();
    for j in 0..samples {
        let t = -reach + j as f64 * h;
        let x = s * det_x + t * dir_x;
        let y = s * det_y + t * dir_y;
        let cf = x + half - 0.5;
        let rf = half - 0.5 - y;
        let c0 = cf.floor();
        let r0 = rf.floor();
        let (fc, fr) = (cf - c0, rf - r0);
        let (c0, r0) = (c0 as isize, r0 as isize);
        for (dr, wr) in [(0isize, 1.0 - fr), (1, fr)] {
            let r = r0 + dr;
            if r < 0 || r >= size as isize || wr == 0.0 {
                continue;
            }
            for (dc, wc) in [(0isize, 1.0 - fc), (1, fc)] {
                let c = c0 + dc;
                if c < 0 || c >= size as isize || wc == 0.0 {
                    continue;
                }
                let idx = r as usize * size + c as usize;
                if scratch[idx] == 0.0 {
                    touched.push(idx as u32);
                }
                scratch[idx] += h * wr * wc;
            }
        }
    }
    touched.sort_unstable();
    touched
        .into_iter()
        .map(|idx| {
            let w = std::mem::take(&mut scratch[idx as usize]);
            (idx, w)
        })
        .filter(|&(_, w)| w != 0.0)
        .collect()
}

pub fn radon_forward(img: &Image, geom: &ProjectionGeometry) -> Result<Sinogram> {
    if !img.is_square() {
        return Err(Error::dim("radon_forward expects a square image"));
    }
    Projector::new(geom, img.rows())?.forward(img)
}

pub fn radon_adjoint(sino: &Sinogram, size: usize) -> Result<Image> {
    Projector::new(&sino.geometry, size)?.adjoint(sino)
}

/// Unfiltered shift-and-add backprojection, averaged over angles and
/// clipped at zero.
pub fn tomosynthesis(sino: &Sinogram, size: usize) -> Result<Image> {
    let mut img = radon_adjoint(sino, size)?;
    let n = sino.geometry.angles.len() as f64;
    img.as_mut_slice().iter_mut().for_each(|v| *v = (*v / n).max(0.0));
    Ok(img)
}

/// Ram-Lak filtered backprojection. Only meaningful as a demonstration; the
/// normalisation assumes the angles sample a half turn uniformly.
pub fn filtered_backprojection(sino: &Sinogram, size: usize) -> Result<Image> {
    let geom = &sino.geometry;
    let n = geom.detector_count as isize;
    let d = geom.detector_spacing;
    let kernel = |k: isize| -> f64 {
        if k == 0 {
            1.0 / (4.0 * d * d)
        } else if k % 2 == 0 {
            0.0
        } else {
            -1.0 / (std::f64::consts::PI * std::f64::consts::PI * (k * k) as f64 * d * d)
        }
    };
    let mut filtered = sino.clone();
    for a in 0..geom.angles.len() {
        let row = sino.values.row(a);
        let out = filtered.values.row_mut(a);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|j| kernel(i as isize - j) * row[j as usize]).sum::<f64>() * d;
        }
    }
    let mut img = radon_adjoint(&filtered, size)?;
    img.scale(std::f64::consts::PI / geom.angles.len() as f64);
    Ok(img)
}

/// `m + eps`, `eps ~ N(0, (level * max|m|)^2)` i.i.d., seeded.
pub fn add_noise(sino: &Sinogram, level: f64, seed: u64) -> Result<Sinogram> {
    if !(level >= 0.0 && level.is_finite()) {
        return Err(Error::param(format!("noise level must be >= 0, got {level}")));
    }
    let sigma = level * sino.max_abs();
    if sigma == 0.0 {
        return Ok(sino.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = sino.clone();
    for v in out.values.as_mut_slice() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}
