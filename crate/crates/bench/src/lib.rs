//! Shared fixtures for the benchmarks.

use gmfilter::{DensityLabel, DensitySpec, FrequencyGrid, IncrementSpec, MatrixDensityGrid, MatrixInput, TransferGrid};
use nalgebra::DVector;

/// A `T = 2` rational fixture: increment-scaled signal and a VMA(1) noise.
pub fn vector_fixture(grid_size: usize) -> (IncrementSpec, MatrixDensityGrid, MatrixDensityGrid, Vec<DVector<f64>>) {
    let spec = IncrementSpec::new(vec![1], vec![1], vec![1], 2).unwrap();
    let grid = FrequencyGrid::new(grid_size).unwrap();
    let tr = TransferGrid::new(&spec, &grid).unwrap();
    let real = |m: [[f64; 2]; 2]| MatrixInput::Real(m.iter().map(|r| r.to_vec()).collect());
    let f = DensitySpec::rational(vec![real([[1.1, 0.2], [0.0, 0.9]]), real([[-0.4, 0.1], [0.2, 0.3]])], vec![1.0])
        .increment_scaled()
        .evaluate(&grid, 2, &tr, DensityLabel::F)
        .unwrap();
    let g = DensitySpec::rational(vec![real([[1.0, 0.0], [0.3, 0.8]]), real([[0.3, 0.1], [-0.2, 0.25]])], vec![1.0])
        .evaluate(&grid, 2, &tr, DensityLabel::G)
        .unwrap();
    let a = (0..4).map(|k| DVector::from_vec(vec![1.0 / (1.0 + k as f64), -0.5 / (1.0 + k as f64)])).collect();
    (spec, f, g, a)
}
