//! Oracle-represented convex bodies and the central-cut ellipsoid engine.

mod body;
mod ellipsoid;
mod optimize;

pub use body::{BodySpec, ConvexBody, Halfspace, Separation, SeparationOracle, DEFAULT_SLACK};
pub use ellipsoid::{
    apply_recorded_cut, central_cut_log_decay, ellipsoid_feasibility, log_ball_volume, log_unit_ball_volume,
    CutKind, CutRecord, CutterResponse, Ellipsoid, Feasibility, Witness, CONDITION_FLOOR, CUT_CONTRACT_TOL,
};
pub use optimize::{first_order_gap, maximize_concave, maximize_concave_best_effort, MaxResult};

use crate::error::Result;
use crate::linalg::Vector;

/// Free-function form of [`ConvexBody::separate`].
pub fn separate(body: &ConvexBody, p: &Vector) -> Result<Separation> {
    body.separate(p)
}
