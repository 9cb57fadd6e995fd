pub mod dtcwt;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod grid;
pub mod morphology;
pub mod neural;
pub mod phantom;
pub mod pipeline;
pub mod solver;

pub use dtcwt::{CoeffPyramid, Dtcwt, FilterBank, StackTag, SubbandIndex, SubbandStack};
pub use error::{Error, Result};
pub use geometry::{ProjectionGeometry, Projector, Sinogram};
pub use grid::{BinaryImage, Grid, Image};
pub use morphology::StructuringElement;
