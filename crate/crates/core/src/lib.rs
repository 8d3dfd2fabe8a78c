//! Numerical laboratory for the time-dependent Schrodinger equation on a
//! periodic box: spectral propagators, the constant-coefficient multipliers
//! behind complex geometrical optics (CGO) solutions, Neumann-series CGO
//! construction, and Born-type recovery of the potential from the
//! initial-to-final-state map.

pub mod cgo;
pub mod dyadic;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod multiplier;
pub mod potential;
pub mod propagator;

pub use dyadic::{build_dyadic, region_l2_norm, x_norm, y_norm, DyadicDecomposition, Mask, WeightedNormParams};
pub use error::{Error, Result};
pub use fft::Direction;
pub use field::{transform_spacetime, transform_spatial, Domain, SpaceTimeField, SpatialField, Support};
pub use grid::GridSpec;
pub use num_complex::Complex64;
pub use potential::{Modulation, Potential};
pub use propagator::{evolve, free_propagate, initial_to_final, solve_duhamel, solve_final_value, Trajectory};
pub use multiplier::{apply_s, apply_t_2d, bench_multiplier_norm, symbol_eval, BenchReport, LatticeShift, ShiftKind, SymbolParams};
pub use cgo::{amplitude, assemble, construct, make_phase, solve_remainder, weighted_residual, CgoPhase, CgoSolution, NeumannOptions};
pub use inverse::{born_sample, identity_lhs, identity_rhs, reconstruct_born, reconstruct_iterative, uniqueness_gap, FrequencySample, Method, ReconOptions, ReconstructionReport, StateMap};
pub use io::{gen_dataset, load_field, save_field, AnyField, Basis, Dataset, PotentialSpec, RunConfig};
