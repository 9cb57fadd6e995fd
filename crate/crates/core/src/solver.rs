//! Primal-dual fixed-point (PDFP) solver for
//!
//! `min_f ½‖Af − m‖² + μ‖W f‖₁  subject to  f ≥ 0`
//!
//! with `A` the discrete Radon operator and `W` the detail part of the
//! dual-tree complex wavelet transform (the low-pass band is not penalised).

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dtcwt::{CoeffPyramid, Dtcwt};
use crate::error::{Error, Result};
use crate::geometry::{Projector, Sinogram};
use crate::grid::{Grid, Image};

/// Radial shrinkage `max(|c| − μ, 0)·c/|c|`, the proximal map of `μ|·|` on ℂ.
pub fn soft_threshold_complex(c: Complex64, mu: f64) -> Complex64 {
    let r = c.norm();
    if r <= mu {
        Complex64::new(0.0, 0.0)
    } else {
        c * ((r - mu) / r)
    }
}

/// Euclidean projection onto the nonnegative orthant. (Negative entries are
/// replaced by zero; the constraint set is `f ≥ 0`.)
pub fn project_nonnegative(f: &Image) -> Image {
    f.map(|&v| v.max(0.0))
}

fn project_in_place(f: &mut Image) {
    f.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// A step-size or weight that is either derived automatically or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Setting {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for Setting {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Setting::Auto => s.serialize_str("auto"),
            Setting::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Setting {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Setting::Value(v)),
            Raw::Text(t) if t == "auto" => Ok(Setting::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got {t:?}"
            ))),
        }
    }
}

/// Solver configuration document: `{mu, tau, lambda, iterations}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Regularisation weight; `auto` = 1e-3·‖Aᵀm‖∞.
    #[serde(default)]
    pub mu: Setting,
    /// Gradient step; `auto` = 1.9 / τ_lip.
    #[serde(default)]
    pub tau: Setting,
    /// Dual step; `auto` = 0.9 / λ_max(W Wᵀ).
    #[serde(default)]
    pub lambda: Setting,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_iterations() -> usize {
    200
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu: Setting::Auto,
            tau: Setting::Auto,
            lambda: Setting::Auto,
            iterations: default_iterations(),
        }
    }
}

impl SolverConfig {
    pub fn from_json(text: &str) -> Result<SolverConfig> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("solver config: {e}")))
    }

    pub fn load(path: &Path) -> Result<SolverConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SolverConfig::from_json(&text)
    }

    /// Fill in automatic settings and check the convergence bounds.
    pub fn resolve(&self, norms: OperatorNorms, atm_max: f64) -> Result<SolverParams> {
        let mu = match self.mu {
            Setting::Auto => 1e-3 * atm_max,
            Setting::Value(v) => v,
        };
        let tau = match self.tau {
            Setting::Auto => 1.9 / norms.tau_lip,
            Setting::Value(v) => v,
        };
        let lambda = match self.lambda {
            Setting::Auto => 0.9 / norms.lambda_max,
            Setting::Value(v) => v,
        };
        let params = SolverParams {
            mu,
            tau,
            lambda,
            iterations: self.iterations,
        };
        params.check(norms)?;
        Ok(params)
    }
}

/// Concrete solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub mu: f64,
    pub tau: f64,
    pub lambda: f64,
    pub iterations: usize,
}

impl SolverParams {
    /// `0 < τ < 2/τ_lip`, `0 < λ < 1/λ_max`, `μ ≥ 0`.
    pub fn check(&self, norms: OperatorNorms) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::config(format!("mu must be >= 0, got {}", self.mu)));
        }
        if !(self.tau > 0.0 && self.tau < 2.0 / norms.tau_lip) {
            return Err(Error::config(format!(
                "tau = {} outside (0, 2/tau_lip = {})",
                self.tau,
                2.0 / norms.tau_lip
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0 / norms.lambda_max) {
            return Err(Error::config(format!(
                "lambda = {} outside (0, 1/lambda_max = {})",
                self.lambda,
                1.0 / norms.lambda_max
            )));
        }
        Ok(())
    }
}

/// `τ_lip = λ_max(AᵀA)` and `λ_max = λ_max(W Wᵀ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorNorms {
    pub tau_lip: f64,
    pub lambda_max: f64,
}

/// Largest eigenvalue of a symmetric positive semi-definite operator by
/// power iteration (at most `max_iter` steps, stopping at relative change
/// `tol`). The start vector is seeded.
pub fn power_iteration(
    n: usize,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let n0 = norm(&x);
    x.iter_mut().for_each(|v| *v /= n0);
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let y = apply(&x);
        let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ny = norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        x = y.into_iter().map(|v| v / ny).collect();
        let done = (next - estimate).abs() <= tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}

/// The detail-only analysis operator `W` and its adjoint.
pub struct WaveletOperator {
    transform: Dtcwt,
}

impl WaveletOperator {
    pub fn new(transform: Dtcwt) -> WaveletOperator {
        WaveletOperator { transform }
    }

    pub fn transform(&self) -> &Dtcwt {
        &self.transform
    }

    pub fn apply(&self, f: &Image) -> Result<CoeffPyramid> {
        let mut pyr = self.transform.analysis(f)?;
        pyr.approx_mut().as_mut_slice().fill(0.0);
        Ok(pyr)
    }

    pub fn adjoint(&self, v: &CoeffPyramid) -> Result<Image> {
        let mut v = v.clone();
        v.approx_mut().as_mut_slice().fill(0.0);
        self.transform.adjoint(&v)
    }
}

pub fn estimate_operator_norms(projector: &Projector, w: &WaveletOperator) -> Result<OperatorNorms> {
    let size = projector.size();
    let as_image = |x: &[f64]| Grid::from_vec(size, size, x.to_vec()).expect("length matches");
    let tau_lip = power_iteration(
        size * size,
        |x| {
            let ax = projector.forward(&as_image(x)).expect("shape checked");
            projector.adjoint(&ax).expect("shape checked").into_vec()
        },
        50,
        1e-6,
        1,
    );
    let lambda_max = power_iteration(
        size * size,
        |x| {
            let wx = w.apply(&as_image(x)).expect("shape checked");
            w.adjoint(&wx).expect("shape checked").into_vec()
        },
        50,
        1e-6,
        2,
    );
    if !(tau_lip > 0.0 && lambda_max > 0.0) {
        return Err(Error::numeric("operator norm estimate is not positive"));
    }
    Ok(OperatorNorms { tau_lip, lambda_max })
}

/// One row of the objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub data_term: f64,
    pub reg_term: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub f: Image,
    pub y: Image,
    pub v: CoeffPyramid,
    /// `trace[k]` is the objective at iterate `f^k`, `k = 0..=iterations`.
    pub trace: Vec<TraceEntry>,
}

impl SolverState {
    pub fn objectives(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.objective).collect()
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,data_term,reg_term,objective\n");
        for t in &self.trace {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e}",
                t.iteration, t.data_term, t.reg_term, t.objective
            );
        }
        s
    }
}

/// Everything a PDFP run needs for one geometry and image size.
pub struct PdfpSolver {
    projector: Projector,
    wavelet: WaveletOperator,
    norms: OperatorNorms,
}

impl PdfpSolver {
    pub fn new(projector: Projector, transform: Dtcwt) -> Result<PdfpSolver> {
        if projector.size() != transform.side() {
            return Err(Error::dim(format!(
                "projector size {} differs from transform side {}",
                projector.size(),
                transform.side()
            )));
        }
        let wavelet = WaveletOperator::new(transform);
        let norms = estimate_operator_norms(&projector, &wavelet)?;
        Ok(PdfpSolver {
            projector,
            wavelet,
            norms,
        })
    }

    pub fn norms(&self) -> OperatorNorms {
        self.norms
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    pub fn wavelet(&self) -> &WaveletOperator {
        &self.wavelet
    }

    /// Resolve automatic settings for a particular sinogram.
    pub fn params_for(&self, sino: &Sinogram, cfg: &SolverConfig) -> Result<SolverParams> {
        let atm = self.projector.adjoint(sino)?;
        let atm_max = atm.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        cfg.resolve(self.norms, atm_max)
    }

    fn objective(&self, k: usize, residual: &Sinogram, f: &Image, mu: f64) -> Result<TraceEntry> {
        let data_term = 0.5 * residual.values.as_slice().iter().map(|v| v * v).sum::<f64>();
        let reg_term = if mu > 0.0 {
            mu * self.wavelet.apply(f)?.detail_l1()
        } else {
            0.0
        };
        Ok(TraceEntry {
            iteration: k,
            data_term,
            reg_term,
            objective: data_term + reg_term,
        })
    }

    /// Run the three-step PDFP iteration from `init` (zero image if `None`).
    pub fn solve(&self, sino: &Sinogram, params: &SolverParams, init: Option<&Image>) -> Result<(Image, SolverState)> {
        params.check(self.norms)?;
        let size = self.projector.size();
        let mut f = match init {
            Some(img) => {
                img.check_same_shape(&Image::square(size))?;
                img.clone()
            }
            None => Image::square(size),
        };
        let (tau, lambda, mu) = (params.tau, params.lambda, params.mu);
        let shrink = mu * tau / lambda;
        let mut v = CoeffPyramid::zeros(size, self.wavelet.transform().levels());
        let mut wt_v = Image::square(size);
        let mut y = f.clone();
        let mut trace = Vec::with_capacity(params.iterations + 1);

        for k in 0..=params.iterations {
            let mut residual = self.projector.forward(&f)?;
            for (r, m) in residual.values.as_mut_slice().iter_mut().zip(sino.values.as_slice()) {
                *r -= m;
            }
            let entry = self.objective(k, &residual, &f, mu)?;
            if !entry.objective.is_finite() {
                return Err(Error::numeric(format!("objective diverged at iteration {k}")));
            }
            trace.push(entry);
            if k == params.iterations {
                break;
            }
            // f - tau * grad G(f)
            let grad = self.projector.adjoint(&residual)?;
            let base = f.zip_map(&grad, |a, g| a - tau * g)?;

            y = base.zip_map(&wt_v, |b, w| b - lambda * w)?;
            project_in_place(&mut y);

            // v <- (I - T)(W y + v): the part of each coefficient beyond the
            // shrinkage radius is kept, clipped to that radius
            let wy = self.wavelet.apply(&y)?;
            for (vc, &wc) in v.details_mut().zip(wy.details()) {
                let z = *vc + wc;
                *vc = z - soft_threshold_complex(z, shrink);
            }
            wt_v = self.wavelet.adjoint(&v)?;

            f = base.zip_map(&wt_v, |b, w| b - lambda * w)?;
            project_in_place(&mut f);
        }
        let state = SolverState {
            f: f.clone(),
            y,
            v,
            trace,
        };
        Ok((f, state))
    }
}

/// One-shot convenience: build operators, resolve `cfg`, solve from zero.
pub fn pdfp_solve(sino: &Sinogram, size: usize, cfg: &SolverConfig) -> Result<(Image, SolverState)> {
    let projector = Projector::new(&sino.geometry, size)?;
    let transform = Dtcwt::with_default_levels(size)?;
    let solver = PdfpSolver::new(projector, transform)?;
    let params = solver.params_for(sino, cfg)?;
    solver.solve(sino, &params, None)
}

/// Windowed decrease: `trace[k + window] ≤ trace[k] + slack·trace[0]`.
pub fn windowed_decrease(trace: &[f64], window: usize, slack: f64) -> bool {
    let scale = trace.first().copied().unwrap_or(0.0).abs();
    trace
        .iter()
        .zip(trace.iter().skip(window))
        .all(|(a, b)| *b <= *a + slack * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ProjectionGeometry;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(
            soft_threshold_complex(Complex64::new(0.0, 0.0), 1.0),
            Complex64::new(0.0, 0.0)
        );
        let c = Complex64::from_polar(2.0, std::f64::consts::FRAC_PI_4);
        let t = soft_threshold_complex(c, 1.0);
        assert!((t - Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)).norm() < 1e-15);
        assert_eq!(
            soft_threshold_complex(Complex64::new(1.0, 0.0), 2.0),
            Complex64::new(0.0, 0.0)
        );
    }

    #[test]
    fn soft_threshold_is_the_prox() {
        // brute-force minimisation of ½|z − c|² + μ|z| over a polar grid
        let c = Complex64::new(1.3, -0.4);
        let mu = 0.5;
        let cost = |z: Complex64| 0.5 * (z - c).norm_sqr() + mu * z.norm();
        let mut best = (f64::INFINITY, Complex64::new(0.0, 0.0));
        for i in 0..=400 {
            for j in 0..720 {
                let z = Complex64::from_polar(2.0 * i as f64 / 400.0, (j as f64).to_radians() / 2.0);
                if cost(z) < best.0 {
                    best = (cost(z), z);
                }
            }
        }
        assert!((best.1 - soft_threshold_complex(c, mu)).norm() < 1e-2);
    }

    #[test]
    fn projection_examples() {
        let f = Grid::from_vec(1, 4, vec![-1.0, 0.0, 2.0, -0.5]).unwrap();
        assert_eq!(project_nonnegative(&f).as_slice(), &[0.0, 0.0, 2.0, 0.0]);
        let neg = Grid::from_fn(2, 2, |_, _| -3.0);
        assert_eq!(project_nonnegative(&neg), Image::square(2));
    }

    #[test]
    fn config_json() {
        let cfg = SolverConfig::from_json(r#"{"mu": 0.5, "tau": "auto", "lambda": 0.1, "iterations": 30}"#).unwrap();
        assert_eq!(cfg.mu, Setting::Value(0.5));
        assert_eq!(cfg.tau, Setting::Auto);
        assert_eq!(cfg.iterations, 30);
        let back: SolverConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(matches!(
            SolverConfig::from_json(r#"{"tau": "fast"}"#),
            Err(Error::Config(_))
        ));
        assert_eq!(SolverConfig::from_json("{}").unwrap(), SolverConfig::default());
    }

    #[test]
    fn power_iteration_on_identity() {
        let est = power_iteration(50, |x| x.to_vec(), 50, 1e-6, 3);
        assert!((est - 1.0).abs() < 1e-6);
        let est = power_iteration(3, |x| vec![3.0 * x[0], 1.0 * x[1], 0.5 * x[2]], 200, 1e-12, 3);
        assert!((est - 3.0).abs() < 1e-6);
    }

    #[test]
    fn bounds_are_enforced() {
        let norms = OperatorNorms {
            tau_lip: 10.0,
            lambda_max: 1.0,
        };
        let cfg = SolverConfig {
            tau: Setting::Value(0.25),
            ..SolverConfig::default()
        };
        assert!(matches!(cfg.resolve(norms, 1.0), Err(Error::Config(_))));
        let cfg = SolverConfig {
            lambda: Setting::Value(1.0),
            ..SolverConfig::default()
        };
        assert!(cfg.resolve(norms, 1.0).is_err());
        let p = SolverConfig::default().resolve(norms, 2.0).unwrap();
        assert!((p.tau - 0.19).abs() < 1e-12 && (p.lambda - 0.9).abs() < 1e-12);
        assert!((p.mu - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_sinogram_gives_zero() {
        let geom = ProjectionGeometry::default_limited(16);
        let sino = Sinogram::zeros(geom.clone());
        let cfg = SolverConfig {
            mu: Setting::Value(0.1),
            iterations: 10,
            ..SolverConfig::default()
        };
        let (f, state) = pdfp_solve(&sino, 16, &cfg).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
        assert!(state.trace.iter().all(|t| t.objective == 0.0));
        assert_eq!(state.trace.len(), 11);
    }

    #[test]
    fn exact_solution_is_a_fixed_point() {
        let geom = ProjectionGeometry::full(24, 16);
        let projector = Projector::new(&geom, 16).unwrap();
        let truth = Grid::from_fn(16, 16, |r, c| {
            if (4..12).contains(&r) && (5..10).contains(&c) {
                1.0
            } else {
                0.0
            }
        });
        let sino = projector.forward(&truth).unwrap();
        let solver = PdfpSolver::new(projector, Dtcwt::with_default_levels(16).unwrap()).unwrap();
        let cfg = SolverConfig {
            mu: Setting::Value(0.0),
            iterations: 1,
            ..SolverConfig::default()
        };
        let params = solver.params_for(&sino, &cfg).unwrap();
        let (f, _) = solver.solve(&sino, &params, Some(&truth)).unwrap();
        let diff = f.zip_map(&truth, |a, b| a - b).unwrap();
        assert!(diff.norm() < 1e-10);
    }

    #[test]
    fn trace_csv_layout() {
        let geom = ProjectionGeometry::default_limited(16);
        let sino = Sinogram::zeros(geom);
        let cfg = SolverConfig {
            mu: Setting::Value(0.1),
            iterations: 2,
            ..SolverConfig::default()
        };
        let (_, state) = pdfp_solve(&sino, 16, &cfg).unwrap();
        let csv = state.trace_csv();
        assert!(csv.starts_with("iteration,data_term,reg_term,objective\n0,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn windowed_decrease_rule() {
        assert!(windowed_decrease(&[10.0, 9.0, 9.5, 8.0], 2, 0.0));
        assert!(!windowed_decrease(&[10.0, 9.0, 10.5, 8.0], 2, 0.0));
        assert!(windowed_decrease(&[10.0, 9.0, 10.05, 8.0], 2, 0.01));
    }
}
