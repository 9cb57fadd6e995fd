//! Dual-tree complex wavelet transform with six oriented subbands per scale.
//!
//! The cascade follows Kingsbury's construction: an undecimated first level
//! with near-symmetric biorthogonal filters whose output quads are split
//! into the two trees, then quarter-shift decimating levels. Each level
//! yields three real "quad" images (low/high, high/low, high/high) which are
//! paired into six complex subbands.
//!
//! Scales are numbered from coarse to fine: with `J + 1` cascade levels,
//! `j = J` is the finest detail scale (first cascade level, side `N / 2`)
//! and `j = 0` the coarsest.

mod filters;
mod ops1d;

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, is_power_of_two, Grid, Image};

pub use ops1d::Op1d;

/// One of the six oriented subbands, in the canonical order
/// `L̄H, H̄H, H̄L, HL, HH, LH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubbandIndex {
    LbarH,
    HbarH,
    HbarL,
    HL,
    HH,
    LH,
}

impl SubbandIndex {
    pub const ALL: [SubbandIndex; 6] = [
        SubbandIndex::LbarH,
        SubbandIndex::HbarH,
        SubbandIndex::HbarL,
        SubbandIndex::HL,
        SubbandIndex::HH,
        SubbandIndex::LH,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SubbandIndex> {
        Self::ALL.get(i).copied()
    }

    /// Nominal orientation of the edges this subband responds to, in degrees.
    /// Angles are measured in image orientation: direction `(row, col) =
    /// (sin a, cos a)`, rows growing downward.
    pub fn orientation_deg(self) -> f64 {
        match self {
            SubbandIndex::LbarH => -15.0,
            SubbandIndex::HbarH => -45.0,
            SubbandIndex::HbarL => -75.0,
            SubbandIndex::HL => 75.0,
            SubbandIndex::HH => 45.0,
            SubbandIndex::LH => 15.0,
        }
    }

    /// The subband with the mirrored orientation.
    pub fn mirror(self) -> SubbandIndex {
        match self {
            SubbandIndex::LbarH => SubbandIndex::LH,
            SubbandIndex::HbarH => SubbandIndex::HH,
            SubbandIndex::HbarL => SubbandIndex::HL,
            SubbandIndex::HL => SubbandIndex::HbarL,
            SubbandIndex::HH => SubbandIndex::HbarH,
            SubbandIndex::LH => SubbandIndex::LbarH,
        }
    }

    /// The two subbands 30 degrees away (orientations wrap at +-90).
    pub fn neighbors(self) -> [SubbandIndex; 2] {
        use SubbandIndex::*;
        match self {
            HbarL => [HL, HbarH],
            HbarH => [HbarL, LbarH],
            LbarH => [HbarH, LH],
            LH => [LbarH, HH],
            HH => [LH, HL],
            HL => [HH, HbarL],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SubbandIndex::LbarH => "LbarH",
            SubbandIndex::HbarH => "HbarH",
            SubbandIndex::HbarL => "HbarL",
            SubbandIndex::HL => "HL",
            SubbandIndex::HH => "HH",
            SubbandIndex::LH => "LH",
        }
    }
}

impl fmt::Display for SubbandIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Analysis and synthesis filters for both cascade stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub h0o: Vec<f64>,
    pub h1o: Vec<f64>,
    pub g0o: Vec<f64>,
    pub g1o: Vec<f64>,
    pub h0a: Vec<f64>,
    pub h0b: Vec<f64>,
    pub h1a: Vec<f64>,
    pub h1b: Vec<f64>,
    pub g0a: Vec<f64>,
    pub g0b: Vec<f64>,
    pub g1a: Vec<f64>,
    pub g1b: Vec<f64>,
}

impl FilterBank {
    /// Near-symmetric (13,19)-tap first level with 14-tap Q-shift filters.
    pub fn kingsbury() -> FilterBank {
        use filters::*;
        FilterBank {
            h0o: NEAR_SYM_H0O.to_vec(),
            h1o: NEAR_SYM_H1O.to_vec(),
            g0o: NEAR_SYM_G0O.to_vec(),
            g1o: NEAR_SYM_G1O.to_vec(),
            h0a: QSHIFT_H0A.to_vec(),
            h0b: QSHIFT_H0B.to_vec(),
            h1a: QSHIFT_H1A.to_vec(),
            h1b: QSHIFT_H1B.to_vec(),
            g0a: QSHIFT_G0A.to_vec(),
            g0b: QSHIFT_G0B.to_vec(),
            g1a: QSHIFT_G1A.to_vec(),
            g1b: QSHIFT_G1B.to_vec(),
        }
    }
}

impl Default for FilterBank {
    fn default() -> Self {
        Self::kingsbury()
    }
}

/// Complex detail coefficients for every cascade level plus the real
/// low-pass residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffPyramid {
    image_side: usize,
    /// `details[0]` is the finest level; each entry holds the six subbands
    /// in [`SubbandIndex::ALL`] order.
    details: Vec<[Grid<Complex64>; 6]>,
    approx: Grid<f64>,
}

impl CoeffPyramid {
    /// All-zero pyramid with the shape produced by `levels` cascade levels.
    pub fn zeros(image_side: usize, levels: usize) -> CoeffPyramid {
        let details = (1..=levels)
            .map(|k| std::array::from_fn(|_| Grid::square(image_side >> k)))
            .collect();
        CoeffPyramid {
            image_side,
            details,
            approx: Grid::square(image_side >> (levels - 1)),
        }
    }

    pub fn image_side(&self) -> usize {
        self.image_side
    }

    /// Number of cascade levels, `J + 1`.
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Index of the finest scale, `J`.
    pub fn finest_scale(&self) -> usize {
        self.levels() - 1
    }

    /// Subband `nu` at scale `j` (`0..=J`, `J` finest).
    pub fn detail(&self, j: usize, nu: SubbandIndex) -> &Grid<Complex64> {
        &self.details[self.finest_scale() - j][nu.index()]
    }

    pub fn detail_mut(&mut self, j: usize, nu: SubbandIndex) -> &mut Grid<Complex64> {
        let level = self.finest_scale() - j;
        &mut self.details[level][nu.index()]
    }

    pub fn finest(&self, nu: SubbandIndex) -> &Grid<Complex64> {
        &self.details[0][nu.index()]
    }

    pub fn approx(&self) -> &Grid<f64> {
        &self.approx
    }

    pub fn approx_mut(&mut self) -> &mut Grid<f64> {
        &mut self.approx
    }

    /// Iterate over every detail coefficient, finest level first.
    pub fn details(&self) -> impl Iterator<Item = &Complex64> {
        self.details
            .iter()
            .flat_map(|lvl| lvl.iter().flat_map(|g| g.as_slice().iter()))
    }

    pub fn details_mut(&mut self) -> impl Iterator<Item = &mut Complex64> {
        self.details
            .iter_mut()
            .flat_map(|lvl| lvl.iter_mut().flat_map(|g| g.as_mut_slice().iter_mut()))
    }

    pub fn detail_count(&self) -> usize {
        self.details
            .iter()
            .map(|lvl| lvl.iter().map(Grid::len).sum::<usize>())
            .sum()
    }

    /// Sum of coefficient magnitudes over all detail subbands.
    pub fn detail_l1(&self) -> f64 {
        self.details().map(|c| c.norm()).sum()
    }

    pub fn detail_energy(&self) -> f64 {
        self.details().map(|c| c.norm_sqr()).sum()
    }

    /// Detail energy of one scale.
    pub fn scale_energy(&self, j: usize) -> f64 {
        self.details[self.finest_scale() - j]
            .iter()
            .flat_map(|g| g.as_slice())
            .map(|c| c.norm_sqr())
            .sum()
    }

    /// Squared Euclidean norm over details and approximation.
    pub fn energy(&self) -> f64 {
        self.detail_energy() + self.approx.as_slice().iter().map(|v| v * v).sum::<f64>()
    }

    pub fn clear_details(&mut self) {
        self.details_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
    }

    fn check_compatible(&self, other: &CoeffPyramid) -> Result<()> {
        if self.image_side != other.image_side || self.levels() != other.levels() {
            return Err(Error::dim("coefficient pyramids have different shapes"));
        }
        Ok(())
    }

    /// `self += alpha * other` over details and approximation.
    pub fn axpy(&mut self, alpha: f64, other: &CoeffPyramid) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.details_mut().zip(other.details()) {
            *a += b * alpha;
        }
        for (a, b) in self.approx.as_mut_slice().iter_mut().zip(other.approx.as_slice()) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Real inner product treating complex values as pairs of reals.
    pub fn dot(&self, other: &CoeffPyramid) -> Result<f64> {
        self.check_compatible(other)?;
        let d: f64 = self
            .details()
            .zip(other.details())
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        Ok(d + self.approx.dot(&other.approx))
    }
}

/// Kind of data a [`SubbandStack`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackTag {
    Magnitude,
    Cleaned,
    BinaryMask,
    DilatedGuess,
    Prediction,
}

impl StackTag {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            StackTag::BinaryMask | StackTag::DilatedGuess | StackTag::Prediction
        )
    }
}

/// Six same-sized real planes, one per subband.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandStack {
    pub tag: StackTag,
    planes: [Grid<f64>; 6],
}

#[derive(Serialize, Deserialize)]
struct StackSidecar {
    tag: StackTag,
    scale: usize,
    subbands: Vec<SubbandIndex>,
}

impl SubbandStack {
    pub fn new(tag: StackTag, planes: [Grid<f64>; 6]) -> Result<SubbandStack> {
        let shape = planes[0].shape();
        if planes.iter().any(|p| p.shape() != shape) {
            return Err(Error::dim("subband planes differ in shape"));
        }
        let stack = SubbandStack { tag, planes };
        if tag.is_binary() && !stack.is_binary() {
            return Err(Error::param(format!("{tag:?} stack must contain only 0 and 1")));
        }
        Ok(stack)
    }

    pub fn zeros(tag: StackTag, side: usize) -> SubbandStack {
        SubbandStack {
            tag,
            planes: std::array::from_fn(|_| Grid::square(side)),
        }
    }

    pub fn from_masks(tag: StackTag, masks: [Grid<bool>; 6]) -> Result<SubbandStack> {
        SubbandStack::new(tag, masks.map(|m| m.to_f64()))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.planes[0].shape()
    }

    pub fn side(&self) -> usize {
        self.planes[0].rows()
    }

    pub fn plane(&self, nu: SubbandIndex) -> &Grid<f64> {
        &self.planes[nu.index()]
    }

    pub fn plane_mut(&mut self, nu: SubbandIndex) -> &mut Grid<f64> {
        &mut self.planes[nu.index()]
    }

    pub fn planes(&self) -> &[Grid<f64>; 6] {
        &self.planes
    }

    pub fn mask(&self, nu: SubbandIndex) -> Grid<bool> {
        self.plane(nu).map(|&v| v >= 0.5)
    }

    pub fn is_binary(&self) -> bool {
        self.planes
            .iter()
            .all(|p| p.as_slice().iter().all(|&v| v == 0.0 || v == 1.0))
    }

    /// All values, plane-major in subband order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.planes.iter().flat_map(|p| p.as_slice().iter().copied())
    }

    pub fn sum(&self) -> f64 {
        self.values().sum()
    }

    pub fn max(&self) -> f64 {
        self.values().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Six LIMB records in subband order plus a `<path>.json` sidecar.
    pub fn save(&self, path: &Path, scale: usize) -> Result<()> {
        let refs: Vec<&Image> = self.planes.iter().collect();
        grid::save_grids(path, &refs)?;
        let sidecar = StackSidecar {
            tag: self.tag,
            scale,
            subbands: SubbandIndex::ALL.to_vec(),
        };
        let side_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))
    }

    /// Returns the stack and its recorded scale.
    pub fn load(path: &Path) -> Result<(SubbandStack, usize)> {
        let side_path = sidecar_path(path);
        let text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let sidecar: StackSidecar = serde_json::from_str(&text)?;
        if sidecar.subbands != SubbandIndex::ALL {
            return Err(Error::format(&side_path, "unexpected subband order"));
        }
        let grids = grid::load_grids(path)?;
        let planes: [Grid<f64>; 6] = grids
            .try_into()
            .map_err(|_| Error::format(path, "expected six records"))?;
        Ok((SubbandStack::new(sidecar.tag, planes)?, sidecar.scale))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// `|d_nu(J, .)|` for all six subbands.
pub fn finest_magnitudes(pyr: &CoeffPyramid) -> SubbandStack {
    SubbandStack {
        tag: StackTag::Magnitude,
        planes: std::array::from_fn(|i| pyr.details[0][i].map(|c| c.norm())),
    }
}

struct LevelOps {
    lo: Op1d,
    hi: Op1d,
    syn_lo: Op1d,
    syn_hi: Op1d,
}

/// A transform instance for one image side and level count, with all
/// filtering stages precomputed.
pub struct Dtcwt {
    side: usize,
    ops: Vec<LevelOps>,
}

impl fmt::Debug for Dtcwt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dtcwt")
            .field("side", &self.side)
            .field("levels", &self.ops.len())
            .finish()
    }
}

/// Default level count for a side: finest detail at `side / 2`, coarsest
/// at 1x1 (seven levels, `J = 6`, at 128x128).
pub fn default_levels(side: usize) -> usize {
    side.trailing_zeros() as usize
}

impl Dtcwt {
    pub fn new(side: usize, levels: usize, filters: &FilterBank) -> Result<Dtcwt> {
        if !is_power_of_two(side) || side < 4 {
            return Err(Error::dim(format!("image side {side} must be a power of two >= 4")));
        }
        let max_levels = side.trailing_zeros() as usize;
        if levels == 0 || levels > max_levels {
            return Err(Error::dim(format!(
                "{levels} levels requested, side {side} supports 1..={max_levels}"
            )));
        }
        let mut ops = Vec::with_capacity(levels);
        ops.push(LevelOps {
            lo: Op1d::filter(side, &filters.h0o),
            hi: Op1d::filter(side, &filters.h1o),
            syn_lo: Op1d::filter(side, &filters.g0o),
            syn_hi: Op1d::filter(side, &filters.g1o),
        });
        for k in 2..=levels {
            let n = side >> (k - 2);
            ops.push(LevelOps {
                lo: Op1d::decimate(n, &filters.h0b, &filters.h0a),
                hi: Op1d::decimate(n, &filters.h1b, &filters.h1a),
                syn_lo: Op1d::interpolate(n / 2, &filters.g0b, &filters.g0a),
                syn_hi: Op1d::interpolate(n / 2, &filters.g1b, &filters.g1a),
            });
        }
        Ok(Dtcwt { side, ops })
    }

    pub fn with_default_levels(side: usize) -> Result<Dtcwt> {
        Dtcwt::new(side, default_levels(side), &FilterBank::kingsbury())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn levels(&self) -> usize {
        self.ops.len()
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.shape() != (self.side, self.side) {
            return Err(Error::dim(format!(
                "transform built for {0}x{0}, image is {1:?}",
                self.side,
                img.shape()
            )));
        }
        Ok(())
    }

    fn check_pyramid(&self, pyr: &CoeffPyramid) -> Result<()> {
        if pyr.image_side != self.side || pyr.levels() != self.levels() {
            return Err(Error::dim(format!(
                "pyramid ({} side, {} levels) does not match transform ({}, {})",
                pyr.image_side,
                pyr.levels(),
                self.side,
                self.levels()
            )));
        }
        Ok(())
    }

    pub fn analysis(&self, img: &Image) -> Result<CoeffPyramid> {
        self.check_image(img)?;
        let mut details = Vec::with_capacity(self.levels());
        let mut lolo = img.clone();
        for ops in &self.ops {
            let lo = ops.lo.cols(&lolo);
            let hi = ops.hi.cols(&lolo);
            lolo = ops.lo.rows(&lo);
            let horiz = ops.lo.rows(&hi);
            let vert = ops.hi.rows(&lo);
            let diag = ops.hi.rows(&hi);
            details.push(assemble(&horiz, &vert, &diag));
        }
        Ok(CoeffPyramid {
            image_side: self.side,
            details,
            approx: lolo,
        })
    }

    /// Exact transpose of [`Dtcwt::analysis`].
    pub fn adjoint(&self, pyr: &CoeffPyramid) -> Result<Image> {
        self.check_pyramid(pyr)?;
        let mut lolo_adj = pyr.approx.clone();
        for (ops, level) in self.ops.iter().zip(&pyr.details).rev() {
            let (horiz, vert, diag) = disassemble(level);
            let (n_out, n_in) = (ops.lo.out_len(), ops.lo.in_len());
            let mut lo_adj = Grid::new(n_out, n_in);
            ops.lo.rows_t_into(&lolo_adj, &mut lo_adj);
            ops.hi.rows_t_into(&vert, &mut lo_adj);
            let mut hi_adj = Grid::new(n_out, n_in);
            ops.lo.rows_t_into(&horiz, &mut hi_adj);
            ops.hi.rows_t_into(&diag, &mut hi_adj);
            let mut x_adj = Grid::new(n_in, n_in);
            ops.lo.cols_t_into(&lo_adj, &mut x_adj);
            ops.hi.cols_t_into(&hi_adj, &mut x_adj);
            lolo_adj = x_adj;
        }
        Ok(lolo_adj)
    }

    /// Inverse transform through the synthesis filter bank.
    pub fn synthesis(&self, pyr: &CoeffPyramid) -> Result<Image> {
        self.check_pyramid(pyr)?;
        let mut z = pyr.approx.clone();
        for (ops, level) in self.ops.iter().zip(&pyr.details).rev() {
            let (lh, hl, hh) = disassemble(level);
            let y1 = add(&ops.syn_lo.cols(&z), &ops.syn_hi.cols(&lh));
            let y2 = add(&ops.syn_lo.cols(&hl), &ops.syn_hi.cols(&hh));
            z = add(&ops.syn_lo.rows(&y1), &ops.syn_hi.rows(&y2));
        }
        Ok(z)
    }
}

fn add(a: &Grid<f64>, b: &Grid<f64>) -> Grid<f64> {
    a.zip_map(b, |x, y| x + y).expect("stage shapes agree")
}

/// Split a quad image into the two complex subbands `(p - q, p + q)`.
fn q2c(y: &Grid<f64>) -> (Grid<Complex64>, Grid<Complex64>) {
    let n = y.rows() / 2;
    let m = y.cols() / 2;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut z0 = Grid::new(n, m);
    let mut z1 = Grid::new(n, m);
    for r in 0..n {
        for c in 0..m {
            let a = y[(2 * r, 2 * c)];
            let b = y[(2 * r, 2 * c + 1)];
            let cc = y[(2 * r + 1, 2 * c)];
            let d = y[(2 * r + 1, 2 * c + 1)];
            let p = Complex64::new(a * s, b * s);
            let q = Complex64::new(d * s, -cc * s);
            z0[(r, c)] = p - q;
            z1[(r, c)] = p + q;
        }
    }
    (z0, z1)
}

/// Inverse (and transpose) of [`q2c`].
fn c2q(z0: &Grid<Complex64>, z1: &Grid<Complex64>) -> Grid<f64> {
    let (n, m) = z0.shape();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut y = Grid::new(2 * n, 2 * m);
    for r in 0..n {
        for c in 0..m {
            let p = (z0[(r, c)] + z1[(r, c)]) * s;
            let q = (z0[(r, c)] - z1[(r, c)]) * s;
            y[(2 * r, 2 * c)] = p.re;
            y[(2 * r, 2 * c + 1)] = p.im;
            y[(2 * r + 1, 2 * c)] = q.im;
            y[(2 * r + 1, 2 * c + 1)] = -q.re;
        }
    }
    y
}

// slot layout: horizontal pair -> (0, 5), diagonal -> (1, 4), vertical -> (2, 3)
fn assemble(horiz: &Grid<f64>, vert: &Grid<f64>, diag: &Grid<f64>) -> [Grid<Complex64>; 6] {
    let (h0, h5) = q2c(horiz);
    let (d1, d4) = q2c(diag);
    let (v2, v3) = q2c(vert);
    [h0, d1, v2, v3, d4, h5]
}

fn disassemble(level: &[Grid<Complex64>; 6]) -> (Grid<f64>, Grid<f64>, Grid<f64>) {
    (
        c2q(&level[0], &level[5]),
        c2q(&level[2], &level[3]),
        c2q(&level[1], &level[4]),
    )
}

/// Forward transform with the given filters and level count.
pub fn dtcwt_analysis(img: &Image, levels: usize, filters: &FilterBank) -> Result<CoeffPyramid> {
    if !img.is_square() {
        return Err(Error::dim("transform expects a square image"));
    }
    Dtcwt::new(img.rows(), levels, filters)?.analysis(img)
}

pub fn dtcwt_synthesis(pyr: &CoeffPyramid, filters: &FilterBank) -> Result<Image> {
    Dtcwt::new(pyr.image_side, pyr.levels(), filters)?.synthesis(pyr)
}
