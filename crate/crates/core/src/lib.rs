//! Numerical laboratory for transportation-cost inequalities and
//! dimension-free concentration on finite measures.

pub mod concentration;
pub mod costs;
pub mod error;
pub mod functionals;
pub mod io;
pub mod measures;
pub mod rates;
pub mod rng;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/measures.md")]
    pub mod measures {}
    #[doc = include_str!("../../../book/src/transport.md")]
    pub mod transport {}
    #[doc = include_str!("../../../book/src/rates.md")]
    pub mod rates {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    pub mod functionals {}
    #[doc = include_str!("../../../book/src/concentration.md")]
    pub mod concentration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
