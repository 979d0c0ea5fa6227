//! Coarse-grained function merging over a miniature SSA IR.

pub mod align;
pub mod codegen;
pub mod costmodel;
pub mod ensemble;
pub mod interp;
pub mod ir;
pub mod linearize;
pub mod par;
pub mod synth;
