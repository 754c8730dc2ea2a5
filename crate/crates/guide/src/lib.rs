//! The user guide in `book/`, compiled so that every example in it runs as
//! a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/geotransforms.md")]
pub mod geotransforms {}

#[doc = include_str!("../../../book/src/correction-models.md")]
pub mod correction_models {}

#[doc = include_str!("../../../book/src/robust-fitting.md")]
pub mod robust_fitting {}

#[doc = include_str!("../../../book/src/resampling.md")]
pub mod resampling {}

#[doc = include_str!("../../../book/src/tiepoints.md")]
pub mod tiepoints {}

#[doc = include_str!("../../../book/src/catalog.md")]
pub mod catalog {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
