//! Yamabe flow and curvature-normalized Yamabe flows (CYF⁺ / CYF⁻) on model
//! fibered-boundary (Φ-) manifolds, reduced to radial conformal factors.

pub mod conformal;
pub mod flow;
pub mod geometry;
pub mod holder;
pub mod interp;
pub mod io;
pub mod rescale;
pub mod verify;
