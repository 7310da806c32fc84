pub mod adam;
pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
mod kernels;
pub mod layers;
pub mod models;
pub mod targets;
pub mod tensor;
pub mod util;

pub use error::{Error, ErrorKind, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/walkthrough.md")]
    mod walkthrough {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/targets.md")]
    mod targets {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
