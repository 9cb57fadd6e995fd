//! The slice workflow: reconstruction → finest-scale coefficients → line
//! opening → N1 → directional dilation prior → N2 → singular support →
//! skeleton → overlay, plus training-set preparation for both networks.
//!
//! All mask work happens on the finest coefficient grid (half the image
//! side); only the singular support is brought back to image resolution.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtcwt::{default_levels, finest_magnitudes, Dtcwt, FilterBank, StackTag, SubbandIndex, SubbandStack};
use crate::error::{Error, Result};
use crate::geometry::{add_noise, orientation_distance, ProjectionGeometry, Projector, Sinogram};
use crate::grid::{self, upsample2, BinaryImage, Grid, Image};
use crate::morphology::{dilate_binary, directional_element, line_element, open_gray, skeleton, TRANSITIONS};
use crate::neural::{binarize, load_weights, predict_stack, Network};
use crate::solver::{PdfpSolver, SolverConfig, SolverParams, SolverState};

/// The `pipeline.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Image side in pixels (power of two).
    pub size: usize,
    pub geometry: ProjectionGeometry,
    /// Gaussian noise level relative to the largest sinogram magnitude.
    pub noise_level: f64,
    pub solver: SolverConfig,
    /// Wavelet levels; `None` = log2(size).
    #[serde(default)]
    pub levels: Option<usize>,
    /// Length of the oriented line elements used for opening.
    pub line_length: usize,
    /// Radius of the parabolic directional elements of the dilation prior.
    pub directional_radius: usize,
    pub curvature_samples: usize,
    /// Ground-truth threshold as a fraction of the stack's largest opened
    /// magnitude.
    pub truth_threshold: f64,
    /// Threshold applied to the sigmoid outputs of both networks.
    pub binarize_threshold: f64,
    /// Subbands whose orientations lie inside the visible wedge.
    pub active_subbands: Vec<SubbandIndex>,
    /// Disk radius of the closing that seals the skeleton before filling.
    pub closing_radius: usize,
    #[serde(default)]
    pub weights_n1: Option<PathBuf>,
    #[serde(default)]
    pub weights_n2: Option<PathBuf>,
}

impl PipelineConfig {
    /// 64² images with elements sized for the 32² coefficient grid.
    pub fn desk() -> PipelineConfig {
        PipelineConfig {
            size: 64,
            geometry: ProjectionGeometry::default_limited(64),
            noise_level: 0.05,
            solver: SolverConfig::default(),
            levels: None,
            line_length: 5,
            directional_radius: 5,
            curvature_samples: 5,
            truth_threshold: 0.3,
            binarize_threshold: 0.5,
            active_subbands: vec![SubbandIndex::HbarL, SubbandIndex::HL],
            closing_radius: 2,
            weights_n1: None,
            weights_n2: None,
        }
    }

    /// 128² images with elements sized for the 64² coefficient grid.
    pub fn full() -> PipelineConfig {
        PipelineConfig {
            size: 128,
            geometry: ProjectionGeometry::default_limited(128),
            line_length: 7,
            directional_radius: 9,
            closing_radius: 3,
            ..PipelineConfig::desk()
        }
    }

    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::from_json(&text)?;
        // weight paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.weights_n1, &mut cfg.weights_n2].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn levels(&self) -> usize {
        self.levels.unwrap_or_else(|| default_levels(self.size))
    }

    /// Side of the finest coefficient grid.
    pub fn coeff_side(&self) -> usize {
        self.size / 2
    }

    pub fn is_active(&self, nu: SubbandIndex) -> bool {
        self.active_subbands.contains(&nu)
    }

    pub fn validate(&self) -> Result<()> {
        if !grid::is_power_of_two(self.size) || self.size < 8 {
            return Err(Error::config(format!(
                "size must be a power of two >= 8, got {}",
                self.size
            )));
        }
        self.geometry.validate()?;
        if self.geometry.detector_count != self.size {
            return Err(Error::config(format!(
                "detector_count {} must equal the image size {}",
                self.geometry.detector_count, self.size
            )));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::config("noise_level must be a finite value >= 0"));
        }
        if self.levels() == 0 || self.size % (1 << self.levels()) != 0 {
            return Err(Error::config(format!(
                "{} wavelet levels do not fit size {}",
                self.levels(),
                self.size
            )));
        }
        line_element(SubbandIndex::HL, self.line_length).map_err(|e| Error::config(e.to_string()))?;
        directional_element(
            SubbandIndex::HL,
            SubbandIndex::HH,
            self.directional_radius,
            self.curvature_samples,
        )
        .map_err(|e| Error::config(e.to_string()))?;
        if !(self.truth_threshold > 0.0 && self.truth_threshold < 1.0) {
            return Err(Error::config("truth_threshold must lie in (0, 1)"));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::config("binarize_threshold must lie in (0, 1)"));
        }
        let mut configured = self.active_subbands.clone();
        configured.sort();
        configured.dedup();
        let visible = visible_subbands(&self.geometry);
        if configured != visible {
            let names = |v: &[SubbandIndex]| v.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
            return Err(Error::config(format!(
                "active subbands [{}] disagree with the subbands visible to the geometry [{}]",
                names(&configured),
                names(&visible)
            )));
        }
        // the dilation prior starts from the two ±75° subbands
        if visible != [SubbandIndex::HbarL, SubbandIndex::HL] {
            return Err(Error::config(
                "the dilation prior needs a geometry whose visible subbands are exactly HbarL and HL",
            ));
        }
        Ok(())
    }
}

/// Subbands whose nominal edge orientation lies inside the geometry's
/// visible tangent wedge, in canonical order.
pub fn visible_subbands(geom: &ProjectionGeometry) -> Vec<SubbandIndex> {
    let (centre, half) = geom.visible_tangent_wedge();
    SubbandIndex::ALL
        .into_iter()
        .filter(|nu| orientation_distance(nu.orientation_deg(), centre) <= half + 1e-9)
        .collect()
}

// ---------------------------------------------------------------------------
// coefficient stages

/// Unit coordinates `(x, y)` of the image location a finest-scale
/// coefficient `(row, col)` describes: the centre of its 2x2 pixel block.
pub fn coeff_center(row: usize, col: usize, image_size: usize) -> (f64, f64) {
    let half = image_size as f64 / 2.0;
    (
        (2.0 * col as f64 + 1.0 - half) / half,
        (half - 2.0 * row as f64 - 1.0) / half,
    )
}

/// Finest-scale coefficient magnitudes of an image.
pub fn magnitudes(img: &Image, transform: &Dtcwt) -> Result<SubbandStack> {
    Ok(finest_magnitudes(&transform.analysis(img)?))
}

fn expect_tag(stack: &SubbandStack, tag: StackTag, op: &str) -> Result<()> {
    if stack.tag != tag {
        return Err(Error::param(format!(
            "{op} expects a {tag:?} stack, got {:?}",
            stack.tag
        )));
    }
    Ok(())
}

/// Grayscale opening of each listed subband with its own line element.
fn open_subbands(mags: &SubbandStack, subbands: &[SubbandIndex], line_length: usize) -> Result<SubbandStack> {
    let mut out = SubbandStack::zeros(StackTag::Cleaned, mags.side());
    for &nu in subbands {
        let s = line_element(nu, line_length)?;
        *out.plane_mut(nu) = open_gray(mags.plane(nu), &s);
    }
    Ok(out)
}

/// Zero the inactive subbands and open the active ones with their line
/// elements.
pub fn clean_coefficients(mags: &SubbandStack, cfg: &PipelineConfig) -> Result<SubbandStack> {
    expect_tag(mags, StackTag::Magnitude, "clean_coefficients")?;
    open_subbands(mags, &cfg.active_subbands, cfg.line_length)
}

/// Binary truth: opened magnitudes above `fraction` of the stack maximum.
/// A stack without any energy yields an empty truth.
pub fn threshold_stack(opened: &SubbandStack, fraction: f64) -> SubbandStack {
    let eps = fraction * opened.max().max(0.0);
    let planes = opened
        .planes()
        .clone()
        .map(|p| p.map(|&v| if v > eps { 1.0 } else { 0.0 }));
    SubbandStack::new(StackTag::BinaryMask, planes).expect("thresholded planes are binary")
}

fn zero_inactive(stack: &mut SubbandStack, cfg: &PipelineConfig) {
    for nu in SubbandIndex::ALL {
        if !cfg.is_active(nu) {
            stack.plane_mut(nu).as_mut_slice().fill(0.0);
        }
    }
}

/// N1 followed by binarisation; inactive subbands are forced empty.
pub fn extract_visible_wavefront(
    cleaned: &SubbandStack,
    n1: &Network<f32>,
    cfg: &PipelineConfig,
) -> Result<SubbandStack> {
    expect_tag(cleaned, StackTag::Cleaned, "extract_visible_wavefront")?;
    let pred = predict_stack(n1, cleaned, StackTag::Cleaned)?;
    let mut mask = binarize(&pred, cfg.binarize_threshold);
    zero_inactive(&mut mask, cfg);
    Ok(mask)
}

/// Directional elements for the four transitions, in [`TRANSITIONS`] order.
pub fn prior_elements(cfg: &PipelineConfig) -> Result<Vec<crate::morphology::StructuringElement>> {
    TRANSITIONS
        .iter()
        .map(|&(from, to)| directional_element(from, to, cfg.directional_radius, cfg.curvature_samples))
        .collect()
}

/// Extend the visible ±75° subbands to the invisible ones by chained
/// directional dilations: `H̄L → H̄H → L̄H` and `HL → HH → LH`. The visible
/// subbands are passed through unchanged.
pub fn dilate_prior(mask: &SubbandStack, cfg: &PipelineConfig) -> Result<SubbandStack> {
    expect_tag(mask, StackTag::BinaryMask, "dilate_prior")?;
    let elements = prior_elements(cfg)?;
    let mut out = mask.clone();
    out.tag = StackTag::DilatedGuess;
    let mut current: [Option<BinaryImage>; 6] = Default::default();
    current[SubbandIndex::HbarL.index()] = Some(mask.mask(SubbandIndex::HbarL));
    current[SubbandIndex::HL.index()] = Some(mask.mask(SubbandIndex::HL));
    // TRANSITIONS lists each chain in order, so every source exists by the
    // time it is dilated
    for (&(from, to), s) in TRANSITIONS.iter().zip(&elements) {
        let src = current[from.index()].as_ref().expect("chain source computed");
        let grown = dilate_binary(src, s);
        *out.plane_mut(to) = grown.to_f64();
        current[to.index()] = Some(grown);
    }
    Ok(out)
}

/// N2 followed by binarisation.
pub fn complete_wavefront(guess: &SubbandStack, n2: &Network<f32>, cfg: &PipelineConfig) -> Result<SubbandStack> {
    expect_tag(guess, StackTag::DilatedGuess, "complete_wavefront")?;
    let pred = predict_stack(n2, guess, StackTag::Cleaned)?;
    let mut out = binarize(&pred, cfg.binarize_threshold);
    out.tag = StackTag::Prediction;
    Ok(out)
}

/// Pixelwise maximum over the six subbands, upsampled to image resolution.
pub fn singular_support(pred: &SubbandStack) -> BinaryImage {
    let side = pred.side();
    let union = Grid::from_fn(side, side, |r, c| pred.planes().iter().any(|p| p[(r, c)] >= 0.5));
    upsample2(&union)
}

/// Singular support, its skeleton, and the overlay on the reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEstimate {
    pub singular_support: BinaryImage,
    pub skeleton: BinaryImage,
    pub overlay: image::RgbImage,
}

impl BoundaryEstimate {
    pub fn overlay_png(&self) -> Vec<u8> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.overlay
            .write_to(&mut buf, image::ImageFormat::Png)
            .expect("in-memory PNG encoding");
        buf.into_inner()
    }
}

/// Reconstruction in min-max scaled grayscale with the skeleton in red.
pub fn render_overlay(reco: &Image, skel: &BinaryImage) -> Result<image::RgbImage> {
    reco.check_same_shape(skel)?;
    let (lo, hi) = (reco.min(), reco.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (rows, cols) = reco.shape();
    Ok(image::RgbImage::from_fn(cols as u32, rows as u32, |x, y| {
        let (r, c) = (y as usize, x as usize);
        if skel[(r, c)] {
            image::Rgb([255, 0, 0])
        } else {
            let g = (((reco[(r, c)] - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8;
            image::Rgb([g, g, g])
        }
    }))
}

pub fn boundary_estimate(ss: &BinaryImage, reco: &Image) -> Result<BoundaryEstimate> {
    let skel = skeleton(ss);
    let overlay = render_overlay(reco, &skel)?;
    Ok(BoundaryEstimate {
        singular_support: ss.clone(),
        skeleton: skel,
        overlay,
    })
}

// ---------------------------------------------------------------------------
// slice and volume runners

/// The two trained networks, shared read-only across slices.
pub struct Networks {
    pub n1: Network<f32>,
    pub n2: Network<f32>,
}

impl Networks {
    /// Load both weight files named in the config.
    pub fn load(cfg: &PipelineConfig) -> Result<Networks> {
        let path = |p: &Option<PathBuf>, name: &str| {
            p.clone()
                .ok_or_else(|| Error::config(format!("no weights configured for {name}")))
        };
        Ok(Networks {
            n1: load_weights(&path(&cfg.weights_n1, "n1")?)?,
            n2: load_weights(&path(&cfg.weights_n2, "n2")?)?,
        })
    }
}

/// Operators reused by every slice of one configuration.
pub struct Workspace {
    pub cfg: PipelineConfig,
    pub solver: PdfpSolver,
    pub transform: Dtcwt,
}

impl Workspace {
    pub fn new(cfg: &PipelineConfig) -> Result<Workspace> {
        cfg.validate()?;
        let projector = Projector::new(&cfg.geometry, cfg.size)?;
        let transform = Dtcwt::new(cfg.size, cfg.levels(), &FilterBank::kingsbury())?;
        let solver = PdfpSolver::new(projector, Dtcwt::new(cfg.size, cfg.levels(), &FilterBank::kingsbury())?)?;
        Ok(Workspace {
            cfg: cfg.clone(),
            solver,
            transform,
        })
    }

    pub fn reconstruct(&self, sino: &Sinogram) -> Result<(Image, SolverState, SolverParams)> {
        if sino.geometry != self.cfg.geometry {
            return Err(Error::config("sinogram geometry differs from the pipeline geometry"));
        }
        let params = self.solver.params_for(sino, &self.cfg.solver)?;
        let (f, state) = self.solver.solve(sino, &params, None)?;
        Ok((f, state, params))
    }

    /// Noisy simulated measurement of a phantom.
    pub fn simulate(&self, phantom: &Image, seed: u64) -> Result<Sinogram> {
        let clean = self.solver.projector().forward(phantom)?;
        add_noise(&clean, self.cfg.noise_level, seed)
    }
}

/// Every intermediate of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceResult {
    pub reconstruction: Image,
    pub cleaned: SubbandStack,
    pub visible: SubbandStack,
    pub guess: SubbandStack,
    pub prediction: SubbandStack,
    pub boundary: BoundaryEstimate,
    pub solver: SolverSummary,
}

/// Objective trace summary kept in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub mu: f64,
    pub tau: f64,
    pub lambda: f64,
    pub initial_objective: f64,
    pub final_objective: f64,
}

impl SolverSummary {
    fn new(params: &SolverParams, state: &SolverState) -> SolverSummary {
        let obj = state.objectives();
        SolverSummary {
            iterations: params.iterations,
            mu: params.mu,
            tau: params.tau,
            lambda: params.lambda,
            initial_objective: obj.first().copied().unwrap_or(0.0),
            final_objective: obj.last().copied().unwrap_or(0.0),
        }
    }
}

pub fn run_slice(sino: &Sinogram, ws: &Workspace, nets: &Networks) -> Result<SliceResult> {
    let cfg = &ws.cfg;
    let (reconstruction, state, params) = ws.reconstruct(sino)?;
    let cleaned = clean_coefficients(&magnitudes(&reconstruction, &ws.transform)?, cfg)?;
    let visible = extract_visible_wavefront(&cleaned, &nets.n1, cfg)?;
    let guess = dilate_prior(&visible, cfg)?;
    let prediction = complete_wavefront(&guess, &nets.n2, cfg)?;
    let ss = singular_support(&prediction);
    let boundary = boundary_estimate(&ss, &reconstruction)?;
    Ok(SliceResult {
        reconstruction,
        cleaned,
        visible,
        guess,
        prediction,
        boundary,
        solver: SolverSummary::new(&params, &state),
    })
}

/// Run `f` on a pool of `jobs` workers (`0` = rayon's default).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Independent slice runs, results in input order regardless of `jobs`.
pub fn run_volume(sinos: &[Sinogram], ws: &Workspace, nets: &Networks, jobs: usize) -> Result<Vec<SliceResult>> {
    with_jobs(jobs, || sinos.par_iter().map(|s| run_slice(s, ws, nets)).collect())?
}

/// Write `dir/slice_YYY/{reco.bin, boundary.png, masks/*.bin, metrics.json}`.
pub fn write_slice(dir: &Path, index: usize, result: &SliceResult) -> Result<PathBuf> {
    let slice_dir = dir.join(format!("slice_{index:03}"));
    let masks = slice_dir.join("masks");
    std::fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
    grid::save_grid(&slice_dir.join("reco.bin"), &result.reconstruction)?;
    let png = slice_dir.join("boundary.png");
    std::fs::write(&png, result.boundary.overlay_png()).map_err(|e| Error::io(&png, e))?;
    let scale = 0;
    result.cleaned.save(&masks.join("cleaned.bin"), scale)?;
    result.visible.save(&masks.join("visible.bin"), scale)?;
    result.guess.save(&masks.join("guess.bin"), scale)?;
    result.prediction.save(&masks.join("prediction.bin"), scale)?;
    grid::save_grid(
        &masks.join("singular_support.bin"),
        &result.boundary.singular_support.to_f64(),
    )?;
    grid::save_grid(&masks.join("skeleton.bin"), &result.boundary.skeleton.to_f64())?;
    let metrics = serde_json::json!({
        "slice": index,
        "solver": result.solver,
        "visible_pixels": result.visible.sum(),
        "prediction_pixels": result.prediction.sum(),
        "singular_support_pixels": result.boundary.singular_support.count(),
        "skeleton_pixels": result.boundary.skeleton.count(),
    });
    let path = slice_dir.join("metrics.json");
    std::fs::write(&path, serde_json::to_string_pretty(&metrics)?).map_err(|e| Error::io(&path, e))?;
    Ok(slice_dir)
}

/// Read back the skeleton and reconstruction of a written slice.
pub fn read_slice_skeleton(slice_dir: &Path) -> Result<(BinaryImage, Image)> {
    let skel = grid::load_grid(&slice_dir.join("masks").join("skeleton.bin"))?.threshold(0.5);
    let reco = grid::load_grid(&slice_dir.join("reco.bin"))?;
    Ok((skel, reco))
}

// ---------------------------------------------------------------------------
// training data

/// Ground-truth stacks of a phantom: the N1 truth (visible subbands only)
/// and the N2 truth (all six subbands).
pub fn truth_stacks(phantom: &Image, cfg: &PipelineConfig, transform: &Dtcwt) -> Result<(SubbandStack, SubbandStack)> {
    let mags = magnitudes(phantom, transform)?;
    let n1 = threshold_stack(
        &open_subbands(&mags, &cfg.active_subbands, cfg.line_length)?,
        cfg.truth_threshold,
    );
    let n2 = threshold_stack(
        &open_subbands(&mags, &SubbandIndex::ALL, cfg.line_length)?,
        cfg.truth_threshold,
    );
    Ok((n1, n2))
}

/// Inputs and truths for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct StackPairs {
    pub inputs: Vec<SubbandStack>,
    pub truths: Vec<SubbandStack>,
}

/// N1 pairs: cleaned coefficients of noisy PDFP reconstructions against
/// the thresholded opened ground truth. Phantom `i` is measured with noise
/// seed `seed + i`.
pub fn build_n1_dataset(phantoms: &[Image], ws: &Workspace, seed: u64) -> Result<StackPairs> {
    let pairs: Vec<(SubbandStack, SubbandStack)> = phantoms
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let sino = ws.simulate(p, seed.wrapping_add(i as u64))?;
            let (reco, _, _) = ws.reconstruct(&sino)?;
            let input = clean_coefficients(&magnitudes(&reco, &ws.transform)?, &ws.cfg)?;
            let (truth, _) = truth_stacks(p, &ws.cfg, &ws.transform)?;
            Ok((input, truth))
        })
        .collect::<Result<_>>()?;
    let (inputs, truths) = pairs.into_iter().unzip();
    Ok(StackPairs { inputs, truths })
}

/// N2 pairs: the dilation prior applied to the N1 truth against the full
/// six-subband truth.
pub fn build_n2_dataset(phantoms: &[Image], ws: &Workspace) -> Result<StackPairs> {
    let pairs: Vec<(SubbandStack, SubbandStack)> = phantoms
        .par_iter()
        .map(|p| {
            let (n1, n2) = truth_stacks(p, &ws.cfg, &ws.transform)?;
            Ok((dilate_prior(&n1, &ws.cfg)?, n2))
        })
        .collect::<Result<_>>()?;
    let (inputs, truths) = pairs.into_iter().unzip();
    Ok(StackPairs { inputs, truths })
}

/// Save stack pairs as `inputs/NNNN.bin` and `truths/NNNN.bin`.
pub fn save_pairs(dir: &Path, pairs: &StackPairs) -> Result<()> {
    for (sub, stacks) in [("inputs", &pairs.inputs), ("truths", &pairs.truths)] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        for (i, s) in stacks.iter().enumerate() {
            s.save(&d.join(format!("{i:04}.bin")), 0)?;
        }
    }
    Ok(())
}

pub fn load_pairs(dir: &Path) -> Result<StackPairs> {
    let read = |sub: &str| -> Result<Vec<SubbandStack>> {
        let d = dir.join(sub);
        let mut names: Vec<PathBuf> = std::fs::read_dir(&d)
            .map_err(|e| Error::io(&d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        names.sort();
        names.iter().map(|p| SubbandStack::load(p).map(|(s, _)| s)).collect()
    };
    let pairs = StackPairs {
        inputs: read("inputs")?,
        truths: read("truths")?,
    };
    if pairs.inputs.len() != pairs.truths.len() {
        return Err(Error::format(dir, "inputs and truths differ in count"));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{dilate_binary, StructuringElement};

    fn stack_with(tag: StackTag, side: usize, nu: SubbandIndex, cells: &[(usize, usize)]) -> SubbandStack {
        let mut s = SubbandStack::zeros(tag, side);
        for &rc in cells {
            s.plane_mut(nu)[rc] = 1.0;
        }
        s
    }

    #[test]
    fn presets_validate_and_roundtrip() {
        for cfg in [PipelineConfig::desk(), PipelineConfig::full()] {
            cfg.validate().unwrap();
            assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
        assert_eq!(PipelineConfig::full().levels(), 7);
    }

    #[test]
    fn active_subbands_must_match_the_geometry() {
        assert_eq!(
            visible_subbands(&ProjectionGeometry::default_limited(64)),
            vec![SubbandIndex::HbarL, SubbandIndex::HL]
        );
        let mut cfg = PipelineConfig::desk();
        cfg.active_subbands = vec![SubbandIndex::HH, SubbandIndex::HL];
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let mut cfg = PipelineConfig::desk();
        cfg.geometry = ProjectionGeometry::limited(-20.0, 20.0, 50, 64);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cleaning_zeroes_inactive_and_removes_specks() {
        let cfg = PipelineConfig::desk();
        let zero = SubbandStack::zeros(StackTag::Magnitude, 16);
        assert_eq!(clean_coefficients(&zero, &cfg).unwrap().sum(), 0.0);

        let mut mags = SubbandStack::zeros(StackTag::Magnitude, 16);
        for nu in SubbandIndex::ALL {
            mags.plane_mut(nu)[(8, 8)] = 3.0;
        }
        // a copy of the line element itself survives the opening
        let s = line_element(SubbandIndex::HL, cfg.line_length).unwrap();
        for (dr, dc) in s.offsets() {
            mags.plane_mut(SubbandIndex::HL)[((4 + dr) as usize, (4 + dc) as usize)] = 1.0;
        }
        let cleaned = clean_coefficients(&mags, &cfg).unwrap();
        assert_eq!(cleaned.tag, StackTag::Cleaned);
        for nu in SubbandIndex::ALL {
            assert_eq!(cleaned.plane(nu)[(8, 8)], 0.0, "speck survives in {nu}");
        }
        for (dr, dc) in s.offsets() {
            assert_eq!(
                cleaned.plane(SubbandIndex::HL)[((4 + dr) as usize, (4 + dc) as usize)],
                1.0
            );
        }
        assert_eq!(cleaned.sum(), s.len() as f64);
        assert!(clean_coefficients(&cleaned, &cfg).is_err());
    }

    #[test]
    fn threshold_of_empty_stack_is_empty() {
        let t = threshold_stack(&SubbandStack::zeros(StackTag::Cleaned, 8), 0.1);
        assert_eq!(t.sum(), 0.0);
        assert!(t.is_binary());
    }

    #[test]
    fn dilation_prior_matches_chained_dilations() {
        let cfg = PipelineConfig::desk();
        let empty = SubbandStack::zeros(StackTag::BinaryMask, 32);
        assert_eq!(dilate_prior(&empty, &cfg).unwrap().sum(), 0.0);

        let mask = stack_with(StackTag::BinaryMask, 32, SubbandIndex::HbarL, &[(16, 16)]);
        let out = dilate_prior(&mask, &cfg).unwrap();
        assert_eq!(out.tag, StackTag::DilatedGuess);
        assert_eq!(out.plane(SubbandIndex::HbarL), mask.plane(SubbandIndex::HbarL));
        assert_eq!(out.plane(SubbandIndex::HL), mask.plane(SubbandIndex::HL));

        let elements = prior_elements(&cfg).unwrap();
        let footprint = |s: &StructuringElement| {
            let mut g = BinaryImage::square(32);
            for (dr, dc) in s.offsets() {
                g[((16 + dr) as usize, (16 + dc) as usize)] = true;
            }
            g
        };
        let hh = footprint(&elements[0]);
        assert_eq!(out.mask(SubbandIndex::HbarH), hh);
        // brute-force composition: union of translates of the second element
        let mut lh = BinaryImage::square(32);
        for (r, c) in (0..32).flat_map(|r| (0..32).map(move |c| (r, c))) {
            if hh[(r, c)] {
                for (dr, dc) in elements[1].offsets() {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if (0..32).contains(&rr) && (0..32).contains(&cc) {
                        lh[(rr as usize, cc as usize)] = true;
                    }
                }
            }
        }
        assert_eq!(out.mask(SubbandIndex::LbarH), lh);
        assert_eq!(out.mask(SubbandIndex::LbarH), dilate_binary(&hh, &elements[1]));
        assert!(!out.mask(SubbandIndex::HH).any() && !out.mask(SubbandIndex::LH).any());
    }

    #[test]
    fn singular_support_is_the_upsampled_or() {
        assert!(!singular_support(&SubbandStack::zeros(StackTag::Prediction, 4)).any());
        let mut full = SubbandStack::zeros(StackTag::Prediction, 4);
        full.plane_mut(SubbandIndex::HH).as_mut_slice().fill(1.0);
        assert_eq!(singular_support(&full).count(), 64);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let planes = std::array::from_fn(|_| Grid::from_fn(6, 6, |_, _| if rng.gen_bool(0.1) { 1.0 } else { 0.0 }));
            let s = SubbandStack::new(StackTag::Prediction, planes).unwrap();
            let ss = singular_support(&s);
            assert_eq!(ss.shape(), (12, 12));
            for r in 0..12 {
                for c in 0..12 {
                    let or = SubbandIndex::ALL.iter().any(|&nu| s.plane(nu)[(r / 2, c / 2)] == 1.0);
                    assert_eq!(ss[(r, c)], or);
                }
            }
        }
    }

    #[test]
    fn boundary_of_thin_ring_is_the_ring() {
        let reco = Image::square(16);
        let empty = boundary_estimate(&BinaryImage::square(16), &reco).unwrap();
        assert!(!empty.skeleton.any());

        let mut ring = BinaryImage::square(16);
        for i in 4..12 {
            ring[(4, i)] = true;
            ring[(11, i)] = true;
            ring[(i, 4)] = true;
            ring[(i, 11)] = true;
        }
        let b = boundary_estimate(&ring, &reco).unwrap();
        assert_eq!(b.skeleton, ring);
        assert!(b.skeleton.is_subset_of(&b.singular_support));
        assert_eq!(b.overlay.get_pixel(4, 4).0, [255, 0, 0]);
        assert_eq!(b.overlay.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(&b.overlay_png()[1..4], b"PNG");
    }
}
