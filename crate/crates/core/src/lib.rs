//! L2-SVC-NCH: a support-vector classifier that finds the closest points
//! between the convex hulls of the two classes, with the Gaussian width γ
//! chosen by gradient ascent on the hull distance instead of grid search.

pub mod data;
pub mod dual;
pub mod kernel;
pub mod maxmin;
pub mod model;
pub mod oracle;
pub mod pga;
#[cfg(test)]
mod properties;
pub mod select;
pub mod smo;
pub mod solver;
