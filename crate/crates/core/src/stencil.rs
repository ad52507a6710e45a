//! Finite-difference Hessians on uniform grids.
//!
//! Second derivatives use the three-point central difference, mixed derivatives the
//! four-corner cross stencil. The wide variants are fourth-order accurate.

use nalgebra::DMatrix;

use crate::angles::SymMatrix;
use crate::grid::Grid;
use crate::transform::SampledFamily;

/// Central-difference Hessian of `values` at flat index `base`.
///
/// `strides[a]` and `steps[a]` are the flat offset and spacing of axis `a`. The caller
/// guarantees that `base ± strides[a]` and the diagonal corners are valid indices.
pub fn hessian_general(values: &[f64], base: usize, strides: &[usize], steps: &[f64]) -> SymMatrix {
    let d = strides.len();
    let c = values[base];
    let mut m = DMatrix::zeros(d, d);
    for a in 0..d {
        let (sa, ha) = (strides[a], steps[a]);
        m[(a, a)] = (values[base + sa] - 2.0 * c + values[base - sa]) / (ha * ha);
        for b in a + 1..d {
            let (sb, hb) = (strides[b], steps[b]);
            let v = (values[base + sa + sb] - values[base + sa - sb] - values[base - sa + sb]
                + values[base - sa - sb])
                / (4.0 * ha * hb);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    SymMatrix::new(m).expect("stencil matrix is symmetric by construction")
}

/// Fourth-order accurate Hessian; needs two nodes of margin along every axis.
pub fn hessian_general_wide(
    values: &[f64],
    base: usize,
    strides: &[usize],
    steps: &[f64],
) -> SymMatrix {
    const W2: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
    const W1: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
    let d = strides.len();
    let at = |offsets: &[(usize, isize)]| {
        let mut idx = base as isize;
        for &(axis, k) in offsets {
            idx += k * strides[axis] as isize;
        }
        values[idx as usize]
    };
    let mut m = DMatrix::zeros(d, d);
    for a in 0..d {
        let h = steps[a];
        m[(a, a)] = (0..5)
            .map(|i| W2[i] * at(&[(a, i as isize - 2)]))
            .sum::<f64>()
            / (12.0 * h * h);
        for b in a + 1..d {
            let mut s = 0.0;
            for i in 0..5 {
                for j in 0..5 {
                    let w = W1[i] * W1[j];
                    if w != 0.0 {
                        s += w * at(&[(a, i as isize - 2), (b, j as isize - 2)]);
                    }
                }
            }
            let v = s / (144.0 * steps[a] * steps[b]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    SymMatrix::new(m).expect("stencil matrix is symmetric by construction")
}

fn space_strides(grid: &Grid) -> (Vec<usize>, Vec<f64>) {
    let d = grid.dim();
    (
        (0..d).map(|a| grid.stride(a)).collect(),
        (0..d).map(|a| grid.spacing(a)).collect(),
    )
}

/// Discrete Hessian at an interior node.
pub fn space_hessian(grid: &Grid, values: &[f64], node: usize) -> SymMatrix {
    debug_assert!(grid.has_margin(node, 1));
    let (strides, steps) = space_strides(grid);
    hessian_general(values, node, &strides, &steps)
}

/// Fourth-order discrete Hessian at a node with two nodes of margin.
pub fn space_hessian_wide(grid: &Grid, values: &[f64], node: usize) -> SymMatrix {
    debug_assert!(grid.has_margin(node, 2));
    let (strides, steps) = space_strides(grid);
    hessian_general_wide(values, node, &strides, &steps)
}

/// Entries `(h11, h12, h22)` of the planar discrete Hessian without allocating.
#[inline]
pub fn planar_hessian(values: &[f64], node: usize, ny: usize, hx: f64, hy: f64) -> [f64; 3] {
    let c = values[node];
    let (e, w) = (values[node + ny], values[node - ny]);
    let (n, s) = (values[node + 1], values[node - 1]);
    let cross = values[node + ny + 1] - values[node + ny - 1] - values[node - ny + 1]
        + values[node - ny - 1];
    [
        (e + w - 2.0 * c) / (hx * hx),
        cross / (4.0 * hx * hy),
        (n + s - 2.0 * c) / (hy * hy),
    ]
}

/// Space-time Hessian of a sampled family at `(t_k, node)`, with the time axis first.
///
/// The time grid must be uniform near `k`; both neighbours in time must exist.
pub fn spacetime_hessian(family: &SampledFamily, grid: &Grid, k: usize, node: usize) -> SymMatrix {
    let t = family.grid();
    let ht = 0.5 * (t[k + 1] - t[k - 1]);
    let (mut strides, mut steps) = space_strides(grid);
    strides.insert(0, family.space_len());
    steps.insert(0, ht);
    hessian_general(family.values(), k * family.space_len() + node, &strides, &steps)
}

/// Fourth-order space-time Hessian; needs two nodes of margin in time and space.
pub fn spacetime_hessian_wide(
    family: &SampledFamily,
    grid: &Grid,
    k: usize,
    node: usize,
) -> SymMatrix {
    let t = family.grid();
    let ht = 0.25 * (t[k + 2] - t[k - 2]);
    let (mut strides, mut steps) = space_strides(grid);
    strides.insert(0, family.space_len());
    steps.insert(0, ht);
    hessian_general_wide(family.values(), k * family.space_len() + node, &strides, &steps)
}
