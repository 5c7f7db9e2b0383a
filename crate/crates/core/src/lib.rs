//! Recovery pipeline for photographed CT films, end to end at desk scale:
//! procedural generation of annotated warped-film samples, UV/deformation/
//! backward map algebra for dewarping, the restoration loss suite with a
//! parametric warp fitter, illumination and CT-value restoration, and the
//! metric + radiomics statistical evaluation harness.

pub mod analysis;
pub mod error;
pub mod fmap;
pub mod grid;
pub mod losses;
pub mod mapops;
pub mod quality;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{HuGrid, ImageGrid, MapField, MapRole, RangeTag};
