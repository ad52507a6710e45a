//! Partial Legendre transforms in the time variable.
//!
//! For a family `f(t, x)` sampled on a time grid, the forward transform is
//! `f⋆(τ, x) = min_t [f(t, x) − τ·t]` (the negative of the usual convex
//! conjugate) and the inverse is `g⋆(t, x) = max_τ [g(τ, x) + τ·t]`. For
//! `f` convex in `t`, `f⋆⋆ = f` up to discretization.
//!
//! Both directions run per space point in `O(K + |τ|)` on a convex hull; the
//! `*_naive` variants evaluate the defining min/max directly and serve as
//! reference implementations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hull::min_affine_sweep;

/// A function of `(grid, x)` sampled on a strictly increasing 1-D grid
/// (times `t` or dual slopes `τ`) and a flattened spatial index.
///
/// `values[k * space_len + s]` is the sample at grid point `k`, space node `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFamily {
    grid: Vec<f64>,
    space_shape: Vec<usize>,
    values: Vec<f64>,
}

impl SampledFamily {
    pub fn new(grid: Vec<f64>, space_shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_grid(&grid, "family grid")?;
        if space_shape.is_empty() || space_shape.contains(&0) {
            return Err(Error::input(format!("invalid space shape {space_shape:?}")));
        }
        let space_len: usize = space_shape.iter().product();
        if values.len() != grid.len() * space_len {
            return Err(Error::input(format!(
                "family needs {} values ({} grid points x {} space nodes), got {}",
                grid.len() * space_len,
                grid.len(),
                space_len,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "family value at grid index {}, space index {} is not finite",
                k / space_len,
                k % space_len
            )));
        }
        Ok(SampledFamily {
            grid,
            space_shape,
            values,
        })
    }

    /// Samples `f(grid[k], s)` for every grid point and space index.
    pub fn from_fn(
        grid: Vec<f64>,
        space_shape: Vec<usize>,
        mut f: impl FnMut(f64, usize) -> f64,
    ) -> Result<Self> {
        let space_len: usize = space_shape.iter().product();
        let values = grid
            .iter()
            .flat_map(|&t| (0..space_len).map(move |s| (t, s)))
            .map(|(t, s)| f(t, s))
            .collect();
        Self::new(grid, space_shape, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn space_shape(&self) -> &[usize] {
        &self.space_shape
    }

    pub fn space_len(&self) -> usize {
        self.space_shape.iter().product()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize, s: usize) -> f64 {
        self.values[k * self.space_len() + s]
    }

    /// All space values at grid index `k`.
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.space_len();
        &self.values[k * n..(k + 1) * n]
    }

    /// The 1-D profile over the grid at space index `s`.
    pub fn profile(&self, s: usize) -> Vec<f64> {
        let n = self.space_len();
        (0..self.grid.len()).map(|k| self.values[k * n + s]).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute difference to another family on the same grid and shape.
    pub fn sup_distance(&self, other: &SampledFamily) -> Result<f64> {
        if self.grid != other.grid || self.space_shape != other.space_shape {
            return Err(Error::input("families live on different grids"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn from_profiles(grid: Vec<f64>, space_shape: Vec<usize>, profiles: Vec<Vec<f64>>) -> Result<Self> {
        let space_len = profiles.len();
        let k_len = grid.len();
        let mut values = vec![0.0; k_len * space_len];
        for (s, profile) in profiles.iter().enumerate() {
            for (k, v) in profile.iter().enumerate() {
                values[k * space_len + s] = *v;
            }
        }
        Self::new(grid, space_shape, values)
    }
}

pub(crate) fn check_grid(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain(format!("{what} is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::input(format!("{what} has non-finite entries")));
    }
    if let Some(k) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::input(format!(
            "{what} is not strictly increasing at index {}",
            k + 1
        )));
    }
    Ok(())
}

/// `n` equally spaced points from `lo` to `hi` inclusive; the last point is
/// exactly `hi`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut g: Vec<f64> = (0..n).map(|k| lo + step * k as f64).collect();
            g[n - 1] = hi;
            g
        }
    }
}

/// `f⋆(τ, x) = min_t [f(t, x) − τ·t]` on the supplied `τ` grid.
pub fn partial_legendre(f: &SampledFamily, tau_grid: &[f64]) -> Result<SampledFamily> {
    check_grid(tau_grid, "tau grid")?;
    let profiles: Vec<Vec<f64>> = (0..f.space_len())
        .into_par_iter()
        .map(|s| {
            let ys = f.profile(s);
            let mut out = vec![0.0; tau_grid.len()];
            min_affine_sweep(&f.grid, &ys, tau_grid, &mut out);
            out
        })
        .collect();
    SampledFamily::from_profiles(tau_grid.to_vec(), f.space_shape.clone(), profiles)
}

/// Direct `O(K·|τ|)` evaluation of [`partial_legendre`].
pub fn partial_legendre_naive(f: &SampledFamily, tau_grid: &[f64]) -> Result<SampledFamily> {
    check_grid(tau_grid, "tau grid")?;
    SampledFamily::from_fn(tau_grid.to_vec(), f.space_shape.clone(), |tau, s| {
        f.grid
            .iter()
            .enumerate()
            .map(|(k, t)| f.value(k, s) - tau * t)
            .fold(f64::INFINITY, f64::min)
    })
}

/// `g⋆(t, x) = max_τ [g(τ, x) + τ·t]` on the supplied `t` grid.
pub fn inverse_partial_legendre(g: &SampledFamily, t_grid: &[f64]) -> Result<SampledFamily> {
    check_grid(t_grid, "t grid")?;
    let profiles: Vec<Vec<f64>> = (0..g.space_len())
        .into_par_iter()
        .map(|s| {
            // max_τ [g + τt] = −min_τ [(−g) − t·τ]
            let neg: Vec<f64> = g.profile(s).iter().map(|v| -v).collect();
            let mut out = vec![0.0; t_grid.len()];
            min_affine_sweep(&g.grid, &neg, t_grid, &mut out);
            out.iter_mut().for_each(|v| *v = -*v);
            out
        })
        .collect();
    SampledFamily::from_profiles(t_grid.to_vec(), g.space_shape.clone(), profiles)
}

/// Direct `O(|τ|·K)` evaluation of [`inverse_partial_legendre`].
pub fn inverse_partial_legendre_naive(g: &SampledFamily, t_grid: &[f64]) -> Result<SampledFamily> {
    check_grid(t_grid, "t grid")?;
    SampledFamily::from_fn(t_grid.to_vec(), g.space_shape.clone(), |t, s| {
        g.grid
            .iter()
            .enumerate()
            .map(|(k, tau)| g.value(k, s) + tau * t)
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Extreme one-sided difference quotients in the grid variable over all
/// space points, each side padded by `5%` of `max(width, 1)`.
pub fn slope_range(f: &SampledFamily) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in 0..f.space_len() {
        for k in 0..f.grid.len().saturating_sub(1) {
            let q = (f.value(k + 1, s) - f.value(k, s)) / (f.grid[k + 1] - f.grid[k]);
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    pad_range(lo, hi)
}

pub(crate) fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (-0.05, 0.05);
    }
    let pad = 0.05 * (hi - lo).max(1.0);
    (lo - pad, hi + pad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_family(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> SampledFamily {
        SampledFamily::from_fn(grid, vec![1], |t, _| f(t)).unwrap()
    }

    #[test]
    fn forward_examples() {
        let f = scalar_family(uniform_grid(0.0, 1.0, 101), |t| t * t / 2.0);
        let star = partial_legendre(&f, &[-1.0, 0.5, 2.0]).unwrap();
        assert_abs_diff_eq!(star.value(0, 0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(star.value(1, 0), -0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(star.value(2, 0), -1.5, epsilon = 1e-15);
    }

    #[test]
    fn inverse_examples() {
        let g = scalar_family(uniform_grid(-3.0, 3.0, 6001), |tau| -tau * tau / 2.0);
        let back = inverse_partial_legendre(&g, &[0.5]).unwrap();
        assert!((back.value(0, 0) - 0.125).abs() <= 5e-4);

        let g = scalar_family(vec![0.0], |_| 0.0);
        let back = inverse_partial_legendre(&g, &[0.0, 0.3, 1.0]).unwrap();
        assert_eq!(back.profile(0), vec![0.0, 0.0, 0.0]);

        let g = scalar_family(uniform_grid(-1.0, 1.0, 201), |tau| -tau.abs());
        let back = inverse_partial_legendre(&g, &[0.0]).unwrap();
        assert_abs_diff_eq!(back.value(0, 0), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_grids_are_rejected() {
        let f = scalar_family(vec![0.0, 1.0], |t| t);
        assert!(matches!(partial_legendre(&f, &[]), Err(Error::Domain(_))));
        assert!(matches!(inverse_partial_legendre(&f, &[]), Err(Error::Domain(_))));
        assert!(SampledFamily::new(vec![], vec![1], vec![]).is_err());
    }

    #[test]
    fn slope_range_examples() {
        let f = scalar_family(uniform_grid(0.0, 1.0, 101), |t| t * t / 2.0);
        let (lo, hi) = slope_range(&f);
        assert!((-0.06..=0.0).contains(&lo), "{lo}");
        assert!((1.0..=1.06).contains(&hi), "{hi}");

        let f = scalar_family(uniform_grid(0.0, 1.0, 11), |_| 3.0);
        assert_eq!(slope_range(&f), (-0.05, 0.05));

        let f = scalar_family(uniform_grid(0.0, 1.0, 11), |t| t);
        let (lo, hi) = slope_range(&f);
        assert!(lo < 1.0 && hi > 1.0 && hi - lo <= 0.1 + 1e-12);
    }

    #[test]
    fn hull_and_naive_agree_on_nonconvex_input() {
        let f = SampledFamily::from_fn(uniform_grid(0.0, 1.0, 37), vec![3], |t, s| {
            (7.0 * t + s as f64).sin() + (s as f64) * t * t
        })
        .unwrap();
        let taus = uniform_grid(-9.0, 9.0, 121);
        let fast = partial_legendre(&f, &taus).unwrap();
        let slow = partial_legendre_naive(&f, &taus).unwrap();
        assert!(fast.sup_distance(&slow).unwrap() <= 1e-12);
        let ts = uniform_grid(0.0, 1.0, 53);
        let fast = inverse_partial_legendre(&fast, &ts).unwrap();
        let slow = inverse_partial_legendre_naive(&slow, &ts).unwrap();
        assert!(fast.sup_distance(&slow).unwrap() <= 1e-12);
    }
}
