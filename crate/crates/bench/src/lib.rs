//! Shared inputs for the benchmarks: deterministic phantoms and sinograms
//! at the two working resolutions.

use lawave_core::phantom::{demo_ellipse, render_ellipses};
use lawave_core::{Image, ProjectionGeometry, Projector, Result, Sinogram};

/// The demo ellipse rendered at `size`.
pub fn phantom(size: usize) -> Image {
    render_ellipses(&[demo_ellipse()], size)
}

/// Noise-free limited-angle data of [`phantom`].
pub fn sinogram(size: usize) -> Result<Sinogram> {
    let projector = Projector::new(&ProjectionGeometry::default_limited(size), size)?;
    projector.forward(&phantom(size))
}
