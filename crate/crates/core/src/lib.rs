// NaN has to fail the range checks, so `!(x <= y)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod datagen;
pub mod experiment;
pub mod netcore;
pub mod optim;
pub mod propcheck;
