#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod data;
pub mod error;
pub mod fixedpoint;
pub mod forward;
pub mod io;
pub mod mlf;
pub mod newton;
pub mod reaction;
pub mod special;
pub mod spectral;
pub mod trace;

pub use error::{Error, Result};

/// The user guide in `book/`, compiled here so that its examples run as
/// doctests.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod chapter0 {}
    #[doc = include_str!("../../../book/src/mittag_leffler.md")]
    pub mod chapter1 {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    pub mod chapter2 {}
    #[doc = include_str!("../../../book/src/forward.md")]
    pub mod chapter3 {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod chapter4 {}
    #[doc = include_str!("../../../book/src/fixedpoint.md")]
    pub mod chapter5 {}
    #[doc = include_str!("../../../book/src/newton.md")]
    pub mod chapter6 {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod chapter7 {}
}
