//! Multitemporal InSAR processing: pair networks, synthetic stacks, elite
//! pixel selection, network unwrapping, corrections, time-series inversion
//! and georeferencing of the resulting velocity field.

pub mod atmorb;
pub mod elitepix;
mod error;
pub mod geomodel;
pub mod georef;
pub mod mcfunwrap;
pub mod pairnet;
pub mod pipeline;
pub mod product;
pub mod robust;
pub mod synthstack;
pub mod tsinvert;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pairs.md")]
    mod pairs {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/elite.md")]
    mod elite {}
    #[doc = include_str!("../../../book/src/unwrapping.md")]
    mod unwrapping {}
    #[doc = include_str!("../../../book/src/corrections.md")]
    mod corrections {}
    #[doc = include_str!("../../../book/src/inversion.md")]
    mod inversion {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
