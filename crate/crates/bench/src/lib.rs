//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slag_core::dsl::{BoundaryData, CapCheck};
use slag_core::solvers::EnvelopeProblem;
use slag_core::transform::uniform_grid;
use slag_core::{Grid, SampledFamily, SpaceGrid, SymMatrix};

/// `count` symmetric matrices with entries in [-5, 5].
pub fn random_matrices(dim: usize, count: usize, seed: u64) -> Vec<SymMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-5.0..5.0));
            SymMatrix::symmetric_part(&m).unwrap()
        })
        .collect()
}

/// A t-convex family on [0, 1] over `space` points.
pub fn convex_family(nt: usize, space: usize) -> SampledFamily {
    SampledFamily::from_fn(uniform_grid(0.0, 1.0, nt), vec![space], |t, s| {
        let w = s as f64 / space as f64;
        (t - w).powi(2) + 0.3 * (t * (1.0 + w)).exp()
    })
    .unwrap()
}

/// Wavy obstacle with a quadratic trace on a uniform grid of `nx` nodes per side.
pub fn envelope_problem(dim: usize, nx: usize) -> EnvelopeProblem {
    let (grid, phase) = match dim {
        1 => (Grid::interval(-1.0, 1.0, nx).unwrap(), 0.6),
        _ => (Grid::rectangle((-1.0, 1.0), (-1.0, 1.0), nx, nx).unwrap(), PI / 2.0 + 0.3),
    };
    let bowl = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>() / 2.0;
    let obstacle = SpaceGrid::from_fn(grid, |p| bowl(p) + 0.2 * (4.0 * p[0]).sin()).unwrap();
    EnvelopeProblem::with_boundary_fn(obstacle, bowl, phase).unwrap()
}

/// Generic n = 1 boundary data with `nx` space nodes.
pub fn dsl_data(nx: usize, nr: usize) -> BoundaryData {
    BoundaryData::from_fn(
        Grid::interval(-1.0, 1.0, nx).unwrap(),
        nr,
        |t, x| 0.5 * x[0] * x[0] + 0.05 * (t + 0.03 * x[0]).exp() + 0.2 * x[0],
        3.0 * PI / 4.0,
        CapCheck::Error,
    )
    .unwrap()
}
