//! Arithmetic toolkit for moments of 4-ranks of class groups and
//! 2-Selmer groups of quadratic twists.

pub mod arith;
pub mod density;
pub mod error;
pub mod gf2;
pub mod moments;
pub mod quadform;
pub mod redei;
pub mod selmer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/arithmetic.md")]
    mod arithmetic {}
    #[doc = include_str!("../../../book/src/redei.md")]
    mod redei {}
    #[doc = include_str!("../../../book/src/class-groups.md")]
    mod class_groups {}
    #[doc = include_str!("../../../book/src/selmer.md")]
    mod selmer {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
