//! Mean-square optimal and minimax-robust linear filtering of vector
//! sequences with stationary generalized multiple (GM) increments observed in
//! additive uncorrelated stationary noise.

pub mod error;
pub mod factorization;
pub mod filter;
pub mod grid;
pub mod increment;
pub mod minimax;
pub mod oracle;
pub mod spectral;

pub use error::{Error, ErrorClass, Result};
pub use factorization::{
    covariances_from_factor, factorize, grid_factor, grid_factor_with_tolerance, invert_factor, weighted_observed_factor, CausalMatrixSeries,
    CovarianceSeries, Factorization,
};
pub use filter::{
    filter_on_grid, filter_periodic, filter_periodic_single, FilterContext, FilterSolution, FunctionalCoefficients,
    GridFilterSolution,
};
pub use grid::{CMatrix, FrequencyGrid, C64, DEFAULT_GRID_SIZE};
pub use increment::{expand_increment_operator, IncrementPolynomial, IncrementSpec, IndexedSeries};
pub use minimax::{
    check_saddle_point, check_subgradient_equations, class_membership, project_onto_class, solve_least_favorable,
    solve_semi_uncertain, BallRadius, Contamination, DensityClassSpec, Membership, MembershipReport, MinimaxProblem,
    MinimaxSolution, MomentConstraint, Multipliers, NoiseClass, SaddleReport, SignalClass, SolverSettings,
};
pub use oracle::{
    delta_fourier, fourier_coefficients, fourier_solution, h_fourier, projection_oracle, windowed_factor_check,
    FourierOperatorSet, FourierSolution, WindowCheck,
};
pub use spectral::{
    minimality_on_grids, minimality_value, observed_density, DensityForm, DensityLabel, DensitySpec, MatrixDensityGrid,
    MatrixInput, MinimalityReport, TransferGrid,
};
