//! Grid-based scalar and vector fields, finite-difference operators, linear
//! resampling and the VF01 file format.

mod grid;
pub mod interp;
pub mod io;
pub mod ops;

pub(crate) use grid::stride;
pub use grid::{GridShape, ScalarField, VectorField, MIN_CELLS};
pub use interp::{sample_linear, upsample_linear, upsample_scalar, upsample_uniform};
pub use io::{
    count_frames, frame_path, list_frames, read_field, read_scalar, read_vector, write_field,
    write_scalar, write_vector, Field, RawField,
};
pub use ops::{
    axis_derivative, axis_derivative_adjoint_add, curl, divergence, gradient_all, is_interior,
    strain_rate_norm, Curl,
};
