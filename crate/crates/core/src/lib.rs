// Argument checks are written `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod analytic;
pub mod poisson;
pub mod projection;
pub mod radial;
pub mod contour;
pub mod singularity;
pub mod unstable;
pub mod experiment;
