//! Overlap metrics, segmentation of boundary estimates, and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dtcwt::{Dtcwt, FilterBank, SubbandIndex, SubbandStack};
use crate::error::{Error, Result};
use crate::grid::BinaryImage;
use crate::morphology::{close_binary, fill_holes, StructuringElement};
use crate::phantom::Volume;
use crate::pipeline::{truth_stacks, PipelineConfig, SolverSummary};

/// Slice DSCs of the full-scale (128³) run, for orientation in reports.
pub const FULL_SCALE_TARGETS: [(usize, f64); 6] = [
    (22, 0.68966),
    (57, 0.86774),
    (61, 0.85950),
    (84, 0.83652),
    (94, 0.79417),
    (113, 0.71338),
];

/// Dice similarity `2|X∩Y| / (|X|+|Y|)`; two empty masks agree perfectly.
pub fn dsc(x: &BinaryImage, y: &BinaryImage) -> Result<f64> {
    x.check_same_shape(y)?;
    let both = x
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .filter(|(a, b)| **a && **b)
        .count();
    let total = x.count() + y.count();
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * both as f64 / total as f64
    })
}

/// Close the skeleton with a disk of `closing_radius` to seal small gaps,
/// then fill every region the border cannot reach.
pub fn segment_from_boundary(skeleton: &BinaryImage, closing_radius: usize) -> BinaryImage {
    let closed = if closing_radius == 0 {
        skeleton.clone()
    } else {
        close_binary(skeleton, &StructuringElement::disk(closing_radius))
    };
    fill_holes(&closed)
}

/// Per-subband DSC between two binary stacks, in subband order.
pub fn subband_dice(pred: &SubbandStack, truth: &SubbandStack) -> Result<[f64; 6]> {
    let mut out = [0.0; 6];
    for nu in SubbandIndex::ALL {
        out[nu.index()] = dsc(&pred.mask(nu), &truth.mask(nu))?;
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// What the evaluation needs from one processed slice.
#[derive(Debug, Clone)]
pub struct SliceOutcome {
    pub slice: usize,
    pub skeleton: BinaryImage,
    pub prediction: Option<SubbandStack>,
    pub solver: Option<SolverSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub slice: usize,
    pub dsc: f64,
    pub segmented_pixels: usize,
    pub truth_pixels: usize,
    /// DSC of each predicted subband against the full ground-truth
    /// wavefront set, in subband order.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subband_dice: Option<[f64; 6]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub solver: Option<SolverSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub slices: Vec<SliceMetrics>,
    pub mean_dsc: f64,
    /// Mean over slices of the mean per-subband dice, when predictions exist.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_subband_dice: Option<f64>,
    /// SHA-256 of every input file, keyed by a descriptive name.
    pub inputs: BTreeMap<String, String>,
    pub config: PipelineConfig,
}

/// Score each outcome against the matching xz-slice of `truth`.
pub fn evaluate_volume(
    outcomes: &[SliceOutcome],
    truth: &Volume,
    cfg: &PipelineConfig,
    inputs: BTreeMap<String, String>,
) -> Result<MetricsReport> {
    let transform = if outcomes.iter().any(|o| o.prediction.is_some()) {
        Some(Dtcwt::new(cfg.size, cfg.levels(), &FilterBank::kingsbury())?)
    } else {
        None
    };
    let mut slices = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        if o.slice >= truth.size() {
            return Err(Error::param(format!(
                "slice {} outside the {}-slice truth volume",
                o.slice,
                truth.size()
            )));
        }
        let gt_image = truth.xz_slice(o.slice);
        let gt = gt_image.map(|&v| v > 0.0);
        let seg = segment_from_boundary(&o.skeleton, cfg.closing_radius);
        let subband = match (&o.prediction, &transform) {
            (Some(pred), Some(t)) => {
                let (_, full) = truth_stacks(gt_image, cfg, t)?;
                Some(subband_dice(pred, &full)?)
            }
            _ => None,
        };
        slices.push(SliceMetrics {
            slice: o.slice,
            dsc: dsc(&seg, &gt)?,
            segmented_pixels: seg.count(),
            truth_pixels: gt.count(),
            subband_dice: subband,
            solver: o.solver,
        });
    }
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mean_dsc = mean(slices.iter().map(|s| s.dsc).collect()).unwrap_or(0.0);
    let mean_subband_dice = mean(
        slices
            .iter()
            .filter_map(|s| s.subband_dice.map(|d| d.iter().sum::<f64>() / 6.0))
            .collect(),
    );
    Ok(MetricsReport {
        slices,
        mean_dsc,
        mean_subband_dice,
        inputs,
        config: cfg.clone(),
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// A table of slice index and DSC, followed by the per-subband scores.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Segmentation DSC\n");
        let _ = writeln!(s, "| xz-slice (y) | DSC |");
        let _ = writeln!(s, "|---:|---:|");
        for m in &self.slices {
            let _ = writeln!(s, "| {} | {:.5} |", m.slice, m.dsc);
        }
        let _ = writeln!(s, "| mean | {:.5} |", self.mean_dsc);
        if self.slices.iter().any(|m| m.subband_dice.is_some()) {
            let names: Vec<&str> = SubbandIndex::ALL.iter().map(|n| n.name()).collect();
            let _ = writeln!(s, "\n## Wavefront-set dice per subband\n");
            let _ = writeln!(s, "| xz-slice (y) | {} |", names.join(" | "));
            let _ = writeln!(s, "|---:|{}", "---:|".repeat(6));
            for m in &self.slices {
                if let Some(d) = m.subband_dice {
                    let cells: Vec<String> = d.iter().map(|v| format!("{v:.3}")).collect();
                    let _ = writeln!(s, "| {} | {} |", m.slice, cells.join(" | "));
                }
            }
        }
        let _ = writeln!(s, "\n## Full-scale (128³) targets\n");
        let _ = writeln!(s, "| xz-slice (y) | DSC |");
        let _ = writeln!(s, "|---:|---:|");
        for (slice, v) in FULL_SCALE_TARGETS {
            let _ = writeln!(s, "| {slice} | {v:.5} |");
        }
        s
    }

    /// Write `path` (JSON) and the Markdown table next to it as `report.md`.
    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))?;
        let md = path.with_file_name("report.md");
        std::fs::write(&md, self.to_markdown()).map_err(|e| Error::io(&md, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::morphology::erode_binary;

    fn disk_mask(n: usize, cr: f64, cc: f64, r: f64) -> BinaryImage {
        Grid::from_fn(n, n, |i, j| (i as f64 - cr).hypot(j as f64 - cc) <= r)
    }

    #[test]
    fn dsc_examples() {
        let a = disk_mask(16, 7.0, 7.0, 4.0);
        assert_eq!(dsc(&a, &a).unwrap(), 1.0);
        let b = disk_mask(16, 2.0, 13.0, 1.5);
        assert_eq!(dsc(&a, &b).unwrap(), 0.0);
        assert_eq!(dsc(&BinaryImage::square(4), &BinaryImage::square(4)).unwrap(), 1.0);
        // |X| = |Y| = 100, |X ∩ Y| = 75
        let x = Grid::from_fn(20, 20, |r, _| r < 5);
        let y = Grid::from_fn(20, 20, |r, c| {
            (r < 5 && c < 15) || (r == 5 && c < 20) || (r == 6 && c < 5)
        });
        assert_eq!((x.count(), y.count()), (100, 100));
        assert_eq!(dsc(&x, &y).unwrap(), 0.75);
        assert_eq!(dsc(&x, &y).unwrap(), dsc(&y, &x).unwrap());
        assert!(dsc(&x, &BinaryImage::square(3)).is_err());
    }

    #[test]
    fn closed_circle_segments_to_a_filled_disk() {
        let n = 32;
        let disk = disk_mask(n, 15.5, 15.5, 10.0);
        let ring = disk
            .and(&erode_binary(&disk, &StructuringElement::cross()).complement())
            .unwrap();
        let seg = segment_from_boundary(&ring, 0);
        assert_eq!(seg, disk);
        assert!(ring.is_subset_of(&segment_from_boundary(&ring, 2)));
        assert!(!segment_from_boundary(&BinaryImage::square(8), 2).any());
    }

    #[test]
    fn eroding_a_correct_segmentation_never_helps() {
        for (cr, cc, r) in [(10.0, 12.0, 6.0), (16.0, 16.0, 9.0), (20.0, 9.0, 4.5)] {
            let truth = disk_mask(32, cr, cc, r);
            let eroded = erode_binary(&truth, &StructuringElement::cross());
            assert!(dsc(&eroded, &truth).unwrap() <= dsc(&truth, &truth).unwrap());
        }
    }

    #[test]
    fn perfect_and_empty_results() {
        let n = 32;
        let truth_slice = disk_mask(n, 15.5, 15.5, 8.0).to_f64();
        let vol = Volume::from_xz_slices(vec![truth_slice.clone(); n]).unwrap();
        let cfg = PipelineConfig {
            size: n,
            geometry: crate::geometry::ProjectionGeometry::default_limited(n),
            ..PipelineConfig::desk()
        };
        let perfect = SliceOutcome {
            slice: 3,
            skeleton: truth_slice.threshold(0.5),
            prediction: None,
            solver: None,
        };
        let empty = SliceOutcome {
            slice: 4,
            skeleton: BinaryImage::square(n),
            prediction: None,
            solver: None,
        };
        let report = evaluate_volume(&[perfect, empty], &vol, &cfg, BTreeMap::new()).unwrap();
        assert_eq!(report.slices[0].dsc, 1.0);
        assert_eq!(report.slices[1].dsc, 0.0);
        assert_eq!(report.mean_dsc, 0.5);
        let md = report.to_markdown();
        assert!(md.contains("| 3 | 1.00000 |"));
        let back: MetricsReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
