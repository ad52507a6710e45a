//! Obstacle envelopes and the Dirichlet problem for `θ̃(D²u) = a` on grids.
//!
//! In one space dimension both are exact: the envelope is a shifted lower convex
//! hull and the Dirichlet solution a parabola. In two dimensions the envelope is a
//! projected over-relaxed sweep and the Dirichlet problem is solved by damped Newton.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::banded::Banded;
use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceGrid};
use crate::hull::hull_values;
use crate::stencil::planar_hessian;
use crate::subeq::Phase;

/// Values of the lower convex hull of `(xs, ys)` at every `xs`.
pub fn convex_envelope_1d(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::domain(format!(
            "convex envelope needs at least 2 matching points, got {} xs and {} ys",
            xs.len(),
            ys.len()
        )));
    }
    crate::transform::check_grid(xs, "envelope abscissae")?;
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::input("envelope ordinates must be finite"));
    }
    Ok(hull_values(xs, ys))
}

/// Obstacle problem for the largest discrete `F_a` function below `obstacle`
/// whose boundary values do not exceed `boundary`.
#[derive(Clone, Debug)]
pub struct EnvelopeProblem {
    obstacle: SpaceGrid,
    boundary: Vec<f64>,
    phase: Phase,
}

impl EnvelopeProblem {
    /// `boundary[k]` belongs to node `grid.boundary_nodes()[k]`; the phase must lie in
    /// `[(n−1)π/2, nπ/2)`.
    pub fn new(obstacle: SpaceGrid, boundary: Vec<f64>, phase: f64) -> Result<Self> {
        let grid = obstacle.grid();
        let n = grid.dim();
        let expected = grid.boundary_nodes().len();
        if boundary.len() != expected {
            return Err(Error::input(format!(
                "boundary trace needs {expected} values, got {}",
                boundary.len()
            )));
        }
        if boundary.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("boundary trace must be finite"));
        }
        let phase = Phase::new(phase, n)?;
        phase.check_window(n - 1)?;
        Ok(EnvelopeProblem {
            obstacle,
            boundary,
            phase,
        })
    }

    /// Samples the boundary trace from `f` at the boundary nodes.
    pub fn with_boundary_fn(
        obstacle: SpaceGrid,
        f: impl Fn(&[f64]) -> f64,
        phase: f64,
    ) -> Result<Self> {
        let boundary = obstacle
            .grid()
            .boundary_nodes()
            .into_iter()
            .map(|node| f(&obstacle.grid().point(node)))
            .collect();
        Self::new(obstacle, boundary, phase)
    }

    pub fn grid(&self) -> &Grid {
        self.obstacle.grid()
    }

    pub fn obstacle(&self) -> &SpaceGrid {
        &self.obstacle
    }

    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    pub fn phase(&self) -> f64 {
        self.phase.value()
    }

    /// Obstacle with boundary nodes lowered to `min(v, f)`.
    fn capped_obstacle(&self) -> Vec<f64> {
        let mut w = self.obstacle.values().to_vec();
        for (node, f) in self.grid().boundary_nodes().into_iter().zip(&self.boundary) {
            w[node] = w[node].min(*f);
        }
        w
    }

    /// Interior start value: no discrete `F_a` function with these boundary values
    /// exceeds their maximum, since such functions are convex along grid lines.
    fn initial_guess(&self) -> Vec<f64> {
        let mut w = self.capped_obstacle();
        let grid = self.grid();
        let top = grid
            .boundary_nodes()
            .into_iter()
            .map(|b| w[b])
            .fold(f64::NEG_INFINITY, f64::max);
        for node in grid.interior_nodes() {
            w[node] = w[node].min(top);
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeOptions {
    pub max_sweeps: usize,
    /// Stop once a sweep changes no node by more than this.
    pub tol: f64,
    /// Over-relaxation factor in `[1, 2)`; `None` picks one from the grid size.
    pub relaxation: Option<f64>,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            max_sweeps: 100_000,
            tol: 1e-12,
            relaxation: None,
        }
    }
}

/// Diagnostics of an iterative solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepStats {
    pub sweeps: usize,
    pub last_change: f64,
    pub relaxation: f64,
}

fn default_relaxation(grid: &Grid) -> f64 {
    let n = grid.shape().iter().copied().max().unwrap_or(3);
    2.0 / (1.0 + (PI / (n - 1) as f64).sin())
}

fn check_relaxation(omega: f64) -> Result<()> {
    if (1.0..2.0).contains(&omega) {
        Ok(())
    } else {
        Err(Error::input(format!("relaxation must lie in [1, 2), got {omega}")))
    }
}

/// The envelope `P(v; f)` with default options.
pub fn envelope(p: &EnvelopeProblem) -> Result<SpaceGrid> {
    envelope_with(p, &EnvelopeOptions::default()).map(|(g, _)| g)
}

pub fn envelope_with(p: &EnvelopeProblem, opts: &EnvelopeOptions) -> Result<(SpaceGrid, SweepStats)> {
    match p.grid().dim() {
        1 => Ok((envelope_hull(p)?, SweepStats {
            sweeps: 0,
            last_change: 0.0,
            relaxation: 0.0,
        })),
        _ => envelope_planar(p, opts),
    }
}

fn envelope_hull(p: &EnvelopeProblem) -> Result<SpaceGrid> {
    let grid = p.grid();
    let xs = grid.axis(0);
    let kappa = p.phase().tan();
    let mid = 0.5 * (grid.lower()[0] + grid.upper()[0]);
    let bowl: Vec<f64> = xs.iter().map(|x| 0.5 * kappa * (x - mid) * (x - mid)).collect();
    let w = p.capped_obstacle();
    let shifted: Vec<f64> = w.iter().zip(&bowl).map(|(w, b)| w - b).collect();
    let mut out = hull_values(&xs, &shifted);
    for ((o, b), w) in out.iter_mut().zip(&bowl).zip(&w) {
        // Adding the bowl back can round above the obstacle at contact nodes.
        *o = (*o + b).min(*w);
    }
    SpaceGrid::new(grid.clone(), out)
}

/// Largest nodal value keeping `θ̃(H) ≥ a`, where `H` is the planar stencil Hessian
/// with the centre value left free.
///
/// With `κ = tan(a − π/2)` the boundary of the admissible set on the branch
/// `H − κI > 0` is `(H11 − κ)(H22 − κ) − H12² = 1 + κ²`.
#[inline]
fn planar_cap(values: &[f64], node: usize, ny: usize, hx: f64, hy: f64, kappa: f64) -> f64 {
    let (e, w) = (values[node + ny], values[node - ny]);
    let (n, s) = (values[node + 1], values[node - 1]);
    let q = (values[node + ny + 1] - values[node + ny - 1] - values[node - ny + 1]
        + values[node - ny - 1])
        / (4.0 * hx * hy);
    let a = (e + w) / (hx * hx) - kappa;
    let b = (n + s) / (hy * hy) - kappa;
    let alpha = 2.0 / (hx * hx);
    let beta = 2.0 / (hy * hy);
    let c = q * q + 1.0 + kappa * kappa;
    let lin = alpha * b + beta * a;
    let disc = (alpha * b - beta * a).powi(2) + 4.0 * alpha * beta * c;
    // Smaller root of αβu² − (αB + βA)u + AB − C, in cancellation-free form.
    2.0 * (a * b - c) / (lin + disc.sqrt())
}

fn envelope_planar(p: &EnvelopeProblem, opts: &EnvelopeOptions) -> Result<(SpaceGrid, SweepStats)> {
    let grid = p.grid();
    let omega = opts.relaxation.unwrap_or_else(|| default_relaxation(grid));
    check_relaxation(omega)?;
    // Over-relaxation can cycle on this non-monotone stencil; retreat towards
    // plain Gauss–Seidel when a run stagnates.
    let mut attempt = planar_sweeps(p, opts, omega);
    for retry in [1.0 + 0.5 * (omega - 1.0), 1.0] {
        match attempt {
            Err(Error::Convergence { .. }) if retry < omega => {
                attempt = planar_sweeps(p, opts, retry);
            }
            _ => break,
        }
    }
    attempt
}

/// Over-relaxed sweeps without halving the update size before giving up on `ω`.
const STALL_SWEEPS: usize = 5_000;

fn planar_sweeps(
    p: &EnvelopeProblem,
    opts: &EnvelopeOptions,
    omega: f64,
) -> Result<(SpaceGrid, SweepStats)> {
    let grid = p.grid();
    let ny = grid.shape()[1];
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let kappa = (p.phase() - FRAC_PI_2).tan();
    let v = p.obstacle.values();
    let mut u = p.initial_guess();
    // Symmetric sweep: lexicographic forward, then backward.
    let forward = grid.interior_nodes();
    let order: Vec<usize> = forward.iter().chain(forward.iter().rev()).copied().collect();
    let mut first_change = None;
    let mut change = f64::INFINITY;
    let (mut best, mut best_sweep) = (f64::INFINITY, 0);
    for sweep in 1..=opts.max_sweeps {
        change = 0.0;
        for &node in &order {
            let cap = planar_cap(&u, node, ny, hx, hy, kappa);
            let old = u[node];
            let new = (old + omega * (cap - old)).min(v[node]);
            change = f64::max(change, (new - old).abs());
            u[node] = new;
        }
        if !change.is_finite() || change > 1e6 * first_change.unwrap_or(f64::INFINITY) {
            return Err(Error::Convergence {
                context: format!("planar envelope diverged with relaxation {omega}"),
                iterations: sweep,
                residual: change,
            });
        }
        first_change.get_or_insert(change.max(f64::MIN_POSITIVE));
        if change < 0.5 * best {
            (best, best_sweep) = (change, sweep);
        } else if omega > 1.0 && sweep - best_sweep > STALL_SWEEPS {
            return Err(Error::Convergence {
                context: format!("planar envelope stalled with relaxation {omega}"),
                iterations: sweep,
                residual: change,
            });
        }
        if change < opts.tol {
            let stats = SweepStats {
                sweeps: sweep,
                last_change: change,
                relaxation: omega,
            };
            return Ok((SpaceGrid::new(grid.clone(), u)?, stats));
        }
    }
    Err(Error::Convergence {
        context: "planar envelope sweep".into(),
        iterations: opts.max_sweeps,
        residual: change,
    })
}

/// Brute-force envelope by repeated pointwise clipping.
///
/// Each node is set to the smaller of its obstacle value and the largest value for
/// which its own stencil stays admissible: the explicit average
/// `(u_{i−1} + u_{i+1})/2 − tan(a)·h²/2` in one dimension, a bracketed scalar root of
/// `arctan λ1 + arctan λ2 = a` in two. Sweeps run in lexicographic order with
/// over-relaxation `opts.relaxation` (default from the grid size).
pub fn envelope_oracle(p: &EnvelopeProblem, opts: &EnvelopeOptions) -> Result<SpaceGrid> {
    let grid = p.grid();
    let omega = opts.relaxation.unwrap_or_else(|| default_relaxation(grid));
    check_relaxation(omega)?;
    let v = p.obstacle.values();
    let mut u = p.initial_guess();
    let interior = grid.interior_nodes();
    let mut change = f64::INFINITY;
    for _ in 0..opts.max_sweeps {
        change = 0.0;
        for &node in &interior {
            let target = match grid.dim() {
                1 => {
                    let h = grid.spacing(0);
                    0.5 * (u[node - 1] + u[node + 1]) - 0.5 * p.phase().tan() * h * h
                }
                _ => oracle_planar_cap(&u, node, grid, p.phase())?,
            };
            let old = u[node];
            let new = (old + omega * (target - old)).min(v[node]);
            change = f64::max(change, (new - old).abs());
            u[node] = new;
        }
        if !change.is_finite() {
            break;
        }
        if change < opts.tol {
            return SpaceGrid::new(grid.clone(), u);
        }
    }
    Err(Error::Convergence {
        context: "envelope oracle sweep".into(),
        iterations: opts.max_sweeps,
        residual: change,
    })
}

/// `arctan λ1 + arctan λ2` of a 2×2 symmetric matrix via its explicit eigenvalues.
fn planar_angle(h: [f64; 3]) -> f64 {
    let mean = 0.5 * (h[0] + h[2]);
    let rad = (0.25 * (h[0] - h[2]).powi(2) + h[1] * h[1]).sqrt();
    (mean + rad).atan() + (mean - rad).atan()
}

/// Derivative of [`planar_angle`] along `H → H − s·diag(α, β)`.
fn planar_angle_slope(h: [f64; 3], alpha: f64, beta: f64) -> f64 {
    // tr((I + H²)⁻¹ diag(α, β)) with (I + H²) written out.
    let m11 = 1.0 + h[0] * h[0] + h[1] * h[1];
    let m22 = 1.0 + h[2] * h[2] + h[1] * h[1];
    let m12 = h[1] * (h[0] + h[2]);
    let det = m11 * m22 - m12 * m12;
    -(alpha * m22 + beta * m11) / det
}

fn oracle_planar_cap(u: &[f64], node: usize, grid: &Grid, a: f64) -> Result<f64> {
    let ny = grid.shape()[1];
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let (alpha, beta) = (2.0 / (hx * hx), 2.0 / (hy * hy));
    let base = planar_hessian(u, node, ny, hx, hy);
    // Hessian with centre value s: H(s) = base − (s − u_node)·diag(α, β).
    let centre = u[node];
    let at = |s: f64| {
        let d = s - centre;
        [base[0] - alpha * d, base[1], base[2] - beta * d]
    };
    let phi = |s: f64| planar_angle(at(s)) - a;
    // φ decreases from π − a to −π − a. Newton from the current value, with bisection
    // on [lo, hi] (φ(lo) ≥ 0 > φ(hi)) whenever a step leaves the bracket or fails to
    // at least halve the previous step.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut s = centre;
    let mut last_step = f64::INFINITY;
    for _ in 0..200 {
        let f = phi(s);
        if f >= 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if f == 0.0 || hi - lo <= 4.0 * f64::EPSILON * (1.0 + s.abs()) {
            return Ok(lo.max(s));
        }
        let newton = f / planar_angle_slope(at(s), alpha, beta);
        if newton.abs() <= 4.0 * f64::EPSILON * (1.0 + s.abs()) {
            return Ok(s - newton);
        }
        let next = s - newton;
        let bounded = lo.is_finite() && hi.is_finite();
        let next = if next > lo && next < hi && next.is_finite() && (!bounded || 2.0 * newton.abs() <= last_step) {
            next
        } else if bounded {
            0.5 * (lo + hi)
        } else {
            // Far out on a flat tail: double the distance already covered.
            let reach = 2.0 * (1.0 + (s - centre).abs());
            if f >= 0.0 { s + reach } else { s - reach }
        };
        last_step = (next - s).abs();
        if last_step <= 2.0 * f64::EPSILON * (1.0 + s.abs()) {
            return Ok(if phi(next) >= 0.0 { next } else { lo.max(s.min(next)) });
        }
        s = next;
    }
    Err(Error::numerical(format!(
        "oracle nodal solve did not settle at node {node}"
    )))
}

/// Signed angle margins `θ̃(H_h u) − a` at interior nodes, in node order.
pub fn membership_margins(u: &SpaceGrid, a: f64) -> Vec<(usize, f64)> {
    let grid = u.grid();
    let values = u.values();
    grid.interior_nodes()
        .into_iter()
        .map(|node| {
            let theta = match grid.dim() {
                1 => {
                    let h = grid.spacing(0);
                    ((values[node - 1] - 2.0 * values[node] + values[node + 1]) / (h * h)).atan()
                }
                _ => planar_angle(planar_hessian(
                    values,
                    node,
                    grid.shape()[1],
                    grid.spacing(0),
                    grid.spacing(1),
                )),
            };
            (node, theta - a)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletOptions {
    pub max_iterations: usize,
    /// Target for the largest interior angle residual.
    pub tol: f64,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        DirichletOptions {
            max_iterations: 60,
            tol: 1e-10,
        }
    }
}

/// Solution of `θ̃(D²u) = a` with `u = f` on the boundary nodes, default options.
pub fn dirichlet(grid: &Grid, boundary: &[f64], a: f64) -> Result<SpaceGrid> {
    dirichlet_with(grid, boundary, a, &DirichletOptions::default()).map(|(u, _)| u)
}

pub fn dirichlet_with(
    grid: &Grid,
    boundary: &[f64],
    a: f64,
    opts: &DirichletOptions,
) -> Result<(SpaceGrid, SweepStats)> {
    let n = grid.dim();
    let phase = Phase::new(a, n)?;
    phase.check_window(n - 1)?;
    let bnodes = grid.boundary_nodes();
    if boundary.len() != bnodes.len() || boundary.iter().any(|v| !v.is_finite()) {
        return Err(Error::input(format!(
            "boundary trace needs {} finite values, got {}",
            bnodes.len(),
            boundary.len()
        )));
    }
    let mut u = vec![0.0; grid.node_count()];
    for (node, f) in bnodes.iter().zip(boundary) {
        u[*node] = *f;
    }
    if n == 1 {
        let nx = grid.shape()[0];
        let (x0, x1) = (grid.lower()[0], grid.upper()[0]);
        let (f0, f1) = (u[0], u[nx - 1]);
        let kappa = a.tan();
        for (i, ui) in u.iter_mut().enumerate().take(nx - 1).skip(1) {
            let x = grid.coordinate(0, i);
            *ui = f0 + (f1 - f0) * (x - x0) / (x1 - x0) + 0.5 * kappa * (x - x0) * (x - x1);
        }
        let stats = SweepStats {
            sweeps: 0,
            last_change: 0.0,
            relaxation: 0.0,
        };
        return Ok((SpaceGrid::new(grid.clone(), u)?, stats));
    }
    planar_newton(grid, u, a, opts)
}

struct Unknowns {
    nx: usize,
    ny: usize,
    inner: usize,
}

impl Unknowns {
    fn count(&self) -> usize {
        (self.nx - 2) * self.inner
    }
    fn node(&self, m: usize) -> usize {
        (m / self.inner + 1) * self.ny + m % self.inner + 1
    }
    fn unknown(&self, node: usize) -> Option<usize> {
        let (i, j) = (node / self.ny, node % self.ny);
        (i >= 1 && i + 1 < self.nx && j >= 1 && j + 1 < self.ny)
            .then(|| (i - 1) * self.inner + (j - 1))
    }
}

fn planar_residuals(u: &[f64], idx: &Unknowns, hx: f64, hy: f64, a: f64) -> Vec<f64> {
    (0..idx.count())
        .map(|m| planar_angle(planar_hessian(u, idx.node(m), idx.ny, hx, hy)) - a)
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Poisson start `Δu = 2·tan(a/2)`, exact for `u = tan(a/2)|x|²/2`.
fn poisson_start(u: &mut [f64], idx: &Unknowns, hx: f64, hy: f64, a: f64) -> Result<()> {
    let ny = idx.ny;
    let band = idx.inner;
    let mut mat = Banded::zeros(idx.count(), band, band);
    let mut rhs = vec![2.0 * (0.5 * a).tan(); idx.count()];
    let (cx, cy) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    for m in 0..idx.count() {
        let node = idx.node(m);
        mat.add(m, m, -2.0 * (cx + cy));
        for (nb, c) in [(node + ny, cx), (node - ny, cx), (node + 1, cy), (node - 1, cy)] {
            match idx.unknown(nb) {
                Some(k) => mat.add(m, k, c),
                None => rhs[m] -= c * u[nb],
            }
        }
    }
    mat.factor()?;
    mat.solve(&mut rhs);
    for (m, val) in rhs.into_iter().enumerate() {
        u[idx.node(m)] = val;
    }
    Ok(())
}

fn planar_newton(
    grid: &Grid,
    mut u: Vec<f64>,
    a: f64,
    opts: &DirichletOptions,
) -> Result<(SpaceGrid, SweepStats)> {
    let (nx, ny) = (grid.shape()[0], grid.shape()[1]);
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let idx = Unknowns {
        nx,
        ny,
        inner: ny - 2,
    };
    poisson_start(&mut u, &idx, hx, hy, a)?;
    let mut g = planar_residuals(&u, &idx, hx, hy, a);
    let mut res = sup(&g);
    let band = idx.inner + 1;
    for iter in 0..opts.max_iterations {
        if res <= opts.tol {
            let stats = SweepStats {
                sweeps: iter,
                last_change: res,
                relaxation: 1.0,
            };
            return Ok((SpaceGrid::new(grid.clone(), u)?, stats));
        }
        // dθ̃ = w11·dH11 + 2·w12·dH12 + w22·dH22 with W = (I + H²)⁻¹.
        let mut jac = Banded::zeros(idx.count(), band, band);
        for m in 0..idx.count() {
            let node = idx.node(m);
            let h = planar_hessian(&u, node, ny, hx, hy);
            let m11 = 1.0 + h[0] * h[0] + h[1] * h[1];
            let m22 = 1.0 + h[2] * h[2] + h[1] * h[1];
            let m12 = h[1] * (h[0] + h[2]);
            let det = m11 * m22 - m12 * m12;
            let (w11, w12, w22) = (m22 / det, -m12 / det, m11 / det);
            let (cx, cy, cxy) = (w11 / (hx * hx), w22 / (hy * hy), 2.0 * w12 / (4.0 * hx * hy));
            let stencil = [
                (node, -2.0 * (cx + cy)),
                (node + ny, cx),
                (node - ny, cx),
                (node + 1, cy),
                (node - 1, cy),
                (node + ny + 1, cxy),
                (node - ny - 1, cxy),
                (node + ny - 1, -cxy),
                (node - ny + 1, -cxy),
            ];
            for (nb, c) in stencil {
                if let Some(k) = idx.unknown(nb) {
                    jac.add(m, k, c);
                }
            }
        }
        jac.factor()?;
        let mut step: Vec<f64> = g.iter().map(|r| -r).collect();
        jac.solve(&mut step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = u.clone();
            for (m, s) in step.iter().enumerate() {
                trial[idx.node(m)] += t * s;
            }
            let g_trial = planar_residuals(&trial, &idx, hx, hy, a);
            let r_trial = sup(&g_trial);
            if r_trial.is_finite() && r_trial < (1.0 - 1e-4 * t) * res {
                u = trial;
                g = g_trial;
                res = r_trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::Convergence {
                context: "planar Dirichlet Newton line search stalled".into(),
                iterations: iter + 1,
                residual: res,
            });
        }
    }
    if res <= opts.tol {
        let stats = SweepStats {
            sweeps: opts.max_iterations,
            last_change: res,
            relaxation: 1.0,
        };
        return Ok((SpaceGrid::new(grid.clone(), u)?, stats));
    }
    Err(Error::Convergence {
        context: "planar Dirichlet Newton".into(),
        iterations: opts.max_iterations,
        residual: res,
    })
}
