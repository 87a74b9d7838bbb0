//! Exponential frames for spectra that are finite unions of intervals.
//!
//! A spectrum is moved into a standard window, covered by grid cells, and
//! paired with a periodic frequency set `Λ = (J + mZ)/d`. The frame bounds of
//! `{e^{iλt}}_{λ∈Λ}` in `L²(Ω)` are then exactly `2πd/m` times the extreme
//! eigenvalues of a partial DFT Gram matrix, which this crate computes,
//! searches over, and cross-checks.

pub mod matrix;
pub mod rng;
pub mod selection;
pub mod spectrum;
pub mod verification;

pub use matrix::{
    build_submatrix, eigen_extremes, enumerate_lambda, frame_certificate, gram, inverse_sqrt,
    FrameCertificate, FrequencySet, MatrixError, RowSelection,
};
pub use selection::{
    compute_schedule, iterated_halving, min_max_partition, partition_step, select_rows, HalvingSchedule, Method,
    SelectionConfig, SelectionError, SelectionTrace,
};
pub use spectrum::{
    grid_cover, normalize_to_window, GridSpectrum, IntervalUnion, SpectrumError, SpectrumInput,
};
pub use verification::{
    density_report, extremal_witness, indicator_eta, pw_monte_carlo, rayleigh_matrix_samples,
    DensityReport, Side, VerificationError, VerificationReport,
};
