//! Epidemic operations: cohort statistics, DELPHI forecasting, policy
//! scenarios and ventilator allocation.
//!
//! The guide in `book/` walks through each module; its examples run as
//! doctests of this crate.

pub mod alloc;
pub mod cohort;
pub mod fit;
pub mod model;
pub mod policy;
pub mod synthetic;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/allocation.md")]
    mod allocation {}
    #[doc = include_str!("../../../book/src/cohorts.md")]
    mod cohorts {}
    #[doc = include_str!("../../../book/src/service.md")]
    mod service {}
}
