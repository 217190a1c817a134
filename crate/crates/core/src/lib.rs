//! Exact-arithmetic execution and verification of recurrent graph neural networks.

pub mod bisim;
pub mod cli;
pub mod error;
pub mod gallery;
pub mod generate;
pub mod graph;
pub mod model;
pub mod neural;
pub mod protocol;
pub mod rational;
pub mod semantics;
pub mod transform;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{Graph, Multiset};
pub use model::{HaltingRgnn, Model, ModelFile, Rgnn};
pub use rational::{RVector, Rational};
