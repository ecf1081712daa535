#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN as well

pub mod datagen;
pub mod dsp;
pub mod error;
pub mod features;
pub mod fuzzy;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod preprocess;
pub mod regression;
pub mod spatial;
