//! Co-registration of satellite images with different ground resolutions.
//!
//! Both images are reduced to a common working resolution, tiepoints are
//! matched on their reference bands, and a shift, affine or quadratic
//! correction model is fitted with RANSAC. Every band of the misaligned
//! image is then resampled through the model using its own geotransform.
//!
//! ```
//! use coreg::model::{evaluate, CorrectionModel};
//! use coreg::geo::PixelPoint;
//!
//! let m = CorrectionModel::shift(3.7, 0.0);
//! assert_eq!(evaluate(&m, PixelPoint::new(10.0, 5.0)), PixelPoint::new(13.7, 5.0));
//! ```

pub mod catalog;
pub mod error;
pub mod geo;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod ransac;
pub mod resample;
pub mod tiepoints;

pub use error::{Error, Result};
