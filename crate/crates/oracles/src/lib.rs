//! Slow, obviously-correct reference implementations. Nothing here shares
//! code with `epiops`; tests compare the two.

pub mod alloc;
pub mod gen;
pub mod tree;
