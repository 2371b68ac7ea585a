//! Synthetic binary similarity datasets: slice static libraries into labeled
//! components, compose them into sample programs and score similarity
//! metrics against the label ground truth.

pub mod corpus;
pub mod elf;
pub mod evaluator;
pub mod generator;
pub mod model;
pub mod recipe;
pub mod slicer;
pub mod toolchain;
