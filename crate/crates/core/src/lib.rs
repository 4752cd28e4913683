#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod control;
pub mod error;
pub mod excitation;
pub mod harness;
pub mod linalg;
pub mod monitor;
pub mod network;
pub mod rng;
pub mod simulator;
pub mod solver;
pub mod ukf;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/excitation.md")]
    mod excitation {}
    #[doc = include_str!("../../../book/src/observability.md")]
    mod observability {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/reproducing.md")]
    mod reproducing {}
}
