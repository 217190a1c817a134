//! Simple functions, classifiers and aggregate-combine layers.

pub mod builder;
pub mod layer;
pub mod simple;

pub use builder::{NetBuilder, Signal};
pub use layer::{AcLayer, Aggregation, Classifier, Combination, External, Init, Registry};
pub use simple::{Affine, SimpleClassifier, SimpleFunction};
