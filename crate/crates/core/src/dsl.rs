//! Degenerate special Lagrangian equation on `[0,1] × D` through partial Legendre
//! transforms, and the checks used to validate its output.
//!
//! The solution is assembled as `u(t,x) = max_τ [h_τ(x) + τ·t]` where `h_τ` is the
//! envelope below `min(g(0,·), g(1,·) − τ)` with boundary values
//! `min_r [g(r,y) − r·τ]` and phase `c − π/2`.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angles::{lifted_angle, spacetime_lifted_angle, SymMatrix};
use crate::error::{Error, Result};
use crate::grid::{check_lexicographic, distinct_axes, fmt17, read_table, Grid, SpaceGrid};
use crate::solvers::{envelope_with, EnvelopeOptions, EnvelopeProblem};
use crate::stencil::{space_hessian, spacetime_hessian};
use crate::subeq::Phase;
use crate::transform::{check_grid, inverse_partial_legendre, pad_range, uniform_grid, SampledFamily};

/// Tolerance for boundary values of the caps against the lateral data.
pub const CORNER_TOL: f64 = 1e-9;
/// Slack in the cap membership test.
pub const CAP_SLACK: f64 = 1e-10;

/// What to do when a cap fails the membership hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapCheck {
    #[default]
    Error,
    Warn,
}

/// Boundary values `g` on `∂([0,1] × D)`.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    cap_bottom: SpaceGrid,
    cap_top: SpaceGrid,
    /// Grid `r ∈ [0,1]`, one space index per boundary node of the cap grid.
    lateral: SampledFamily,
    phase: Phase,
    warnings: Vec<String>,
}

impl BoundaryData {
    pub fn new(
        cap_bottom: SpaceGrid,
        cap_top: SpaceGrid,
        lateral: SampledFamily,
        c: f64,
        check: CapCheck,
    ) -> Result<Self> {
        let grid = cap_bottom.grid();
        if cap_top.grid() != grid {
            return Err(Error::input("caps live on different grids"));
        }
        let n = grid.dim();
        let phase = Phase::new(c, n)?;
        phase.check_window(n)?;
        let bnodes = grid.boundary_nodes();
        if lateral.space_shape() != [bnodes.len()] {
            return Err(Error::input(format!(
                "lateral data needs one column per boundary node ({}), got shape {:?}",
                bnodes.len(),
                lateral.space_shape()
            )));
        }
        let r = lateral.grid();
        if r.len() < 2 || r[0] != 0.0 || *r.last().unwrap() != 1.0 {
            return Err(Error::input("lateral grid must run from r = 0 to r = 1"));
        }
        let last = r.len() - 1;
        for (b, &node) in bnodes.iter().enumerate() {
            for (k, cap, name) in [(0, &cap_bottom, "bottom"), (last, &cap_top, "top")] {
                let gap = (cap.values()[node] - lateral.value(k, b)).abs();
                if gap > CORNER_TOL {
                    return Err(Error::input(format!(
                        "{name} cap disagrees with lateral data by {gap:.3e} at {:?}",
                        grid.point(node)
                    )));
                }
            }
        }
        let mut warnings = Vec::new();
        let target = c - FRAC_PI_2;
        for (cap, name) in [(&cap_bottom, "bottom"), (&cap_top, "top")] {
            let bad: Vec<Vec<f64>> = grid
                .interior_nodes()
                .into_iter()
                .filter(|&node| {
                    let h = space_hessian(grid, cap.values(), node);
                    lifted_angle(&h).map_or(true, |th| th < target - CAP_SLACK)
                })
                .map(|node| grid.point(node))
                .collect();
            if !bad.is_empty() {
                let shown: Vec<_> = bad.iter().take(5).collect();
                let msg = format!(
                    "{name} cap is not of phase {target} at {} node(s), e.g. {shown:?}",
                    bad.len()
                );
                match check {
                    CapCheck::Error => return Err(Error::precondition(msg)),
                    CapCheck::Warn => warnings.push(msg),
                }
            }
        }
        Ok(BoundaryData {
            cap_bottom,
            cap_top,
            lateral,
            phase,
            warnings,
        })
    }

    /// Samples `g(t, x)` on the caps and on `nr` uniform lateral levels.
    pub fn from_fn(
        grid: Grid,
        nr: usize,
        g: impl Fn(f64, &[f64]) -> f64,
        c: f64,
        check: CapCheck,
    ) -> Result<Self> {
        if nr < 2 {
            return Err(Error::input("lateral data needs at least 2 levels"));
        }
        let bnodes = grid.boundary_nodes();
        let points: Vec<Vec<f64>> = bnodes.iter().map(|&b| grid.point(b)).collect();
        let lateral = SampledFamily::from_fn(uniform_grid(0.0, 1.0, nr), vec![bnodes.len()], |r, b| {
            g(r, &points[b])
        })?;
        let bottom = SpaceGrid::from_fn(grid.clone(), |p| g(0.0, p))?;
        let top = SpaceGrid::from_fn(grid, |p| g(1.0, p))?;
        Self::new(bottom, top, lateral, c, check)
    }

    pub fn grid(&self) -> &Grid {
        self.cap_bottom.grid()
    }

    pub fn cap_bottom(&self) -> &SpaceGrid {
        &self.cap_bottom
    }

    pub fn cap_top(&self) -> &SpaceGrid {
        &self.cap_top
    }

    pub fn lateral(&self) -> &SampledFamily {
        &self.lateral
    }

    pub fn phase(&self) -> f64 {
        self.phase.value()
    }

    /// Cap membership failures tolerated under [`CapCheck::Warn`].
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Lateral value at boundary index `b` and level `r`, linear between levels.
    pub fn lateral_at(&self, r: f64, b: usize) -> f64 {
        let levels = self.lateral.grid();
        let k = levels.partition_point(|&x| x <= r).clamp(1, levels.len() - 1);
        let (r0, r1) = (levels[k - 1], levels[k]);
        let s = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
        (1.0 - s) * self.lateral.value(k - 1, b) + s * self.lateral.value(k, b)
    }

    /// Range of difference quotients in time over the lateral data and the two caps,
    /// padded as in [`crate::transform::slope_range`].
    pub fn slope_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let r = self.lateral.grid();
        for b in 0..self.lateral.space_len() {
            for k in 0..r.len() - 1 {
                let q = (self.lateral.value(k + 1, b) - self.lateral.value(k, b)) / (r[k + 1] - r[k]);
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        for (top, bottom) in self.cap_top.values().iter().zip(self.cap_bottom.values()) {
            lo = lo.min(top - bottom);
            hi = hi.max(top - bottom);
        }
        pad_range(lo, hi)
    }
}

/// Obstacle problem for the dual slope `τ`.
pub fn obstacle_for_tau(g: &BoundaryData, tau: f64) -> Result<EnvelopeProblem> {
    if !tau.is_finite() {
        return Err(Error::input(format!("tau must be finite, got {tau}")));
    }
    let grid = g.grid().clone();
    let v: Vec<f64> = g
        .cap_bottom
        .values()
        .iter()
        .zip(g.cap_top.values())
        .map(|(b, t)| b.min(t - tau))
        .collect();
    let r = g.lateral.grid();
    let trace = (0..g.lateral.space_len())
        .map(|b| {
            r.iter()
                .enumerate()
                .map(|(k, r)| g.lateral.value(k, b) - r * tau)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    EnvelopeProblem::new(SpaceGrid::new(grid, v)?, trace, g.phase() - FRAC_PI_2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TauGrid {
    /// Uniform grid over [`BoundaryData::slope_range`].
    Auto { samples: usize },
    Explicit(Vec<f64>),
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid::Auto { samples: 401 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DslOptions {
    pub tau: TauGrid,
    /// Number of uniform time levels on `[0, 1]`.
    pub nt: usize,
    pub envelope: EnvelopeOptions,
}

impl Default for DslOptions {
    fn default() -> Self {
        DslOptions {
            tau: TauGrid::default(),
            nt: 101,
            envelope: EnvelopeOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DslSolution {
    grid: Grid,
    u: SampledFamily,
    envelopes: SampledFamily,
}

impl DslSolution {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `u(t, x)` on the time grid.
    pub fn u(&self) -> &SampledFamily {
        &self.u
    }

    /// `h_τ(x)` on the dual grid.
    pub fn envelopes(&self) -> &SampledFamily {
        &self.envelopes
    }

    pub fn tau_grid(&self) -> &[f64] {
        self.envelopes.grid()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_solution_csv(&self.grid, &self.u, w)
    }
}

pub fn solve_dsl(g: &BoundaryData, opts: &DslOptions) -> Result<DslSolution> {
    if opts.nt < 3 {
        return Err(Error::input(format!("need at least 3 time levels, got {}", opts.nt)));
    }
    let taus = match &opts.tau {
        TauGrid::Auto { samples } => {
            if *samples < 2 {
                return Err(Error::input("auto tau grid needs at least 2 samples"));
            }
            let (lo, hi) = g.slope_range();
            uniform_grid(lo, hi, *samples)
        }
        TauGrid::Explicit(taus) => {
            check_grid(taus, "tau grid")?;
            taus.clone()
        }
    };
    let grid = g.grid().clone();
    let layers: Vec<Vec<f64>> = taus
        .par_iter()
        .map(|&tau| {
            let problem = obstacle_for_tau(g, tau)?;
            envelope_with(&problem, &opts.envelope)
                .map(|(h, _)| h.into_values())
                .map_err(|e| e.with_context(format!("envelope at tau = {tau}")))
        })
        .collect::<Result<_>>()?;
    let envelopes = SampledFamily::new(taus, grid.shape().to_vec(), layers.concat())?;
    let u = inverse_partial_legendre(&envelopes, &uniform_grid(0.0, 1.0, opts.nt))?;
    Ok(DslSolution { grid, u, envelopes })
}

/// CSV with header `t,x[,y],u`, time-major, 17 significant digits.
pub fn write_solution_csv<W: Write>(grid: &Grid, u: &SampledFamily, mut w: W) -> std::io::Result<()> {
    let names = ["x", "y"];
    writeln!(w, "t,{},u", names[..grid.dim()].join(","))?;
    for (k, t) in u.grid().iter().enumerate() {
        for node in 0..grid.node_count() {
            write!(w, "{},", fmt17(*t))?;
            for c in grid.point(node) {
                write!(w, "{},", fmt17(c))?;
            }
            writeln!(w, "{}", fmt17(u.value(k, node)))?;
        }
    }
    Ok(())
}

pub fn read_solution_csv<R: BufRead>(r: R) -> Result<(Grid, SampledFamily)> {
    let table = read_table(r)?;
    let dim = table.header.len().saturating_sub(2);
    let names = ["x", "y"];
    if !(1..=2).contains(&dim)
        || table.header[0] != "t"
        || table.header[1..=dim] != names[..dim]
        || table.header[dim + 1] != "u"
    {
        return Err(Error::input(format!(
            "expected header t,x[,y],u, got {}",
            table.header.join(",")
        )));
    }
    let axes = distinct_axes(&table.rows, 1, dim)?;
    let grid = Grid::from_axes(&axes)?;
    check_lexicographic(&grid, &table.rows, 1)?;
    let count = grid.node_count();
    let times: Vec<f64> = table.rows.iter().step_by(count).map(|r| r[0]).collect();
    for (i, row) in table.rows.iter().enumerate() {
        if row[0] != times[i / count] {
            return Err(Error::input(format!("row {} breaks the time-major layout", i + 1)));
        }
    }
    let values = table.rows.iter().map(|r| r[dim + 1]).collect();
    let u = SampledFamily::new(times, grid.shape().to_vec(), values)?;
    Ok((grid, u))
}

/// Result of `min_t f(t, x)` and its second-order data at the minimizer.
#[derive(Clone, Debug)]
pub struct InfHessian {
    pub t_min: f64,
    pub value: f64,
    /// `∂²f/∂t²` at the minimizer.
    pub f_tt: f64,
    /// Full Hessian in `(t, x)` at the minimizer, time first.
    pub spacetime: SymMatrix,
    /// `∇²_x f − f_tx f_txᵀ / f_tt`.
    pub hessian: SymMatrix,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Hessian of `x ↦ min_{t ∈ [t0, t1]} f(t, x)` at `x`.
///
/// The minimizer is located by golden-section search and polished by Newton steps.
/// Derivatives are central differences with one Richardson extrapolation on steps
/// `1e-3·max(1, |z|)` and half that.
pub fn hessian_of_inf(
    f: impl Fn(f64, &[f64]) -> f64,
    t_range: (f64, f64),
    x: &[f64],
) -> Result<InfHessian> {
    let (t0, t1) = t_range;
    if !(t0 < t1) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("need t0 < t1 and a finite point"));
    }
    let mut z = Vec::with_capacity(x.len() + 1);
    z.push(0.0);
    z.extend_from_slice(x);
    let eval = |z: &[f64]| f(z[0], &z[1..]);
    let along_t = |t: f64| f(t, x);

    let (mut a, mut b) = (t0, t1);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (along_t(c), along_t(d));
    while b - a > 1e-12 * (1.0 + a.abs().max(b.abs())) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = along_t(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = along_t(d);
        }
    }
    let mut t = 0.5 * (a + b);
    let width = t1 - t0;
    let edge = 1e-9 * width;
    if t - t0 <= edge || t1 - t <= edge {
        return Err(Error::precondition(format!(
            "minimizer t = {t} sits on the end of [{t0}, {t1}]"
        )));
    }
    for _ in 0..3 {
        z[0] = t;
        let ft = first_diff(&eval, &z, 0);
        let ftt = second_diff(&eval, &z, 0, 0);
        if ftt <= 0.0 {
            break;
        }
        let next = t - ft / ftt;
        if !(next > t0 && next < t1) || (next - t).abs() > 1e-6 * width {
            break;
        }
        t = next;
    }
    z[0] = t;
    let dim = z.len();
    let mut full = nalgebra::DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v = second_diff(&eval, &z, i, j);
            full[(i, j)] = v;
            full[(j, i)] = v;
        }
    }
    let f_tt = full[(0, 0)];
    if !(f_tt > 0.0) {
        return Err(Error::precondition(format!(
            "second time derivative {f_tt:.3e} at the minimizer t = {t} is not positive"
        )));
    }
    let n = dim - 1;
    let mut reduced = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            reduced[(i, j)] = full[(i + 1, j + 1)] - full[(0, i + 1)] * full[(0, j + 1)] / f_tt;
        }
    }
    Ok(InfHessian {
        t_min: t,
        value: eval(&z),
        f_tt,
        spacetime: SymMatrix::new(full)?,
        hessian: SymMatrix::new(reduced)?,
    })
}

fn step(z: &[f64], i: usize) -> f64 {
    1e-3 * z[i].abs().max(1.0)
}

fn shifted(z: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut w = z.to_vec();
    for &(i, d) in moves {
        w[i] += d;
    }
    w
}

fn first_diff(f: &impl Fn(&[f64]) -> f64, z: &[f64], i: usize) -> f64 {
    let d = |h: f64| (f(&shifted(z, &[(i, h)])) - f(&shifted(z, &[(i, -h)]))) / (2.0 * h);
    let h = step(z, i);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

fn second_diff(f: &impl Fn(&[f64]) -> f64, z: &[f64], i: usize, j: usize) -> f64 {
    let d = |s: f64| {
        let (hi, hj) = (s * step(z, i), s * step(z, j));
        if i == j {
            (f(&shifted(z, &[(i, hi)])) - 2.0 * f(z) + f(&shifted(z, &[(i, -hi)]))) / (hi * hi)
        } else {
            (f(&shifted(z, &[(i, hi), (j, hj)])) - f(&shifted(z, &[(i, hi), (j, -hj)]))
                - f(&shifted(z, &[(i, -hi), (j, hj)]))
                + f(&shifted(z, &[(i, -hi), (j, -hj)])))
                / (4.0 * hi * hj)
        }
    };
    (4.0 * d(0.5) - d(1.0)) / 3.0
}

/// Per space node: `(min value, minimizing t, grid index)` of `t ↦ u(t, x)`.
///
/// An interior grid minimum is refined by the vertex of the parabola through it and
/// its two neighbours.
pub fn minimize_on_grid(u: &SampledFamily) -> Vec<(f64, f64, usize)> {
    let t = u.grid();
    (0..u.space_len())
        .map(|s| {
            let profile = u.profile(s);
            let k = profile
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap_or(0);
            if k == 0 || k + 1 == t.len() {
                return (profile[k], t[k], k);
            }
            let (ta, tb, tc) = (t[k - 1], t[k], t[k + 1]);
            let (fa, fb, fc) = (profile[k - 1], profile[k], profile[k + 1]);
            let d1 = (fb - fa) / (tb - ta);
            let d2 = (fc - fb) / (tc - tb);
            let curv = (d2 - d1) / (tc - ta);
            if curv <= 0.0 {
                return (fb, tb, k);
            }
            // f ≈ fb + s·(t − tb) + curv·(t − tb)², s the slope at tb.
            let slope = d1 + curv * (tb - ta);
            let dt = (-slope / (2.0 * curv)).clamp(ta - tb, tc - tb);
            (fb + slope * dt + curv * dt * dt, tb + dt, k)
        })
        .collect()
}

/// Outcome of a pointwise check: a node passes when its margin is at least
/// `−tolerance`, the check when at least `requiredFraction` of nodes pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CheckReport {
    pub pass: bool,
    pub worst_margin: Option<f64>,
    pub node_count: usize,
    pub passing: usize,
    pub tolerance: f64,
    pub required_fraction: f64,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: Option<f64>,
    pub x: Vec<f64>,
    pub margin: f64,
}

impl CheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.node_count == 0 {
            1.0
        } else {
            self.passing as f64 / self.node_count as f64
        }
    }
}

struct Tally {
    tolerance: f64,
    required_fraction: f64,
    count: usize,
    passing: usize,
    worst: Option<Witness>,
}

impl Tally {
    fn new(tolerance: f64, required_fraction: f64) -> Self {
        Tally {
            tolerance,
            required_fraction,
            count: 0,
            passing: 0,
            worst: None,
        }
    }

    fn add(&mut self, margin: f64, t: Option<f64>, x: impl FnOnce() -> Vec<f64>) {
        self.count += 1;
        // NaN margins count as failures and become the witness.
        if margin >= -self.tolerance {
            self.passing += 1;
        }
        if self.worst.as_ref().is_none_or(|w| !(margin >= w.margin)) {
            self.worst = Some(Witness { t, x: x(), margin });
        }
    }

    fn finish(self) -> CheckReport {
        let pass = self.passing as f64 >= self.required_fraction * self.count as f64;
        CheckReport {
            pass,
            worst_margin: self.worst.as_ref().map(|w| w.margin),
            node_count: self.count,
            passing: self.passing,
            tolerance: self.tolerance,
            required_fraction: self.required_fraction,
            witness: self.worst,
        }
    }
}

/// Nodes of a row-major array whose second differences are locally steady: the
/// second difference along every axis changes by less than `10·h` to each
/// neighbour, `h` the spacing towards that neighbour.
pub fn stable_nodes(values: &[f64], shape: &[usize], steps: &[f64]) -> Vec<bool> {
    let d = shape.len();
    let total: usize = shape.iter().product();
    let mut strides = vec![1usize; d];
    for a in (0..d.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let index = |node: usize, a: usize| (node / strides[a]) % shape[a];
    let inside = |node: usize, a: usize| {
        let i = index(node, a);
        i >= 1 && i + 1 < shape[a]
    };
    let second = |node: usize, a: usize| {
        let s = strides[a];
        (values[node + s] - 2.0 * values[node] + values[node - s]) / (steps[a] * steps[a])
    };
    (0..total)
        .map(|node| {
            if !(0..d).all(|a| inside(node, a)) {
                return false;
            }
            (0..d).all(|a| {
                let here = second(node, a);
                (0..d).all(|b| {
                    [node + strides[b], node - strides[b]].into_iter().all(|nb| {
                        !inside(nb, a) || (second(nb, a) - here).abs() < 10.0 * steps[b]
                    })
                })
            })
        })
        .collect()
}

fn space_steps(grid: &Grid) -> Vec<f64> {
    (0..grid.dim()).map(|a| grid.spacing(a)).collect()
}

fn check_family(grid: &Grid, u: &SampledFamily) -> Result<()> {
    if u.space_shape() != grid.shape() {
        return Err(Error::input(format!(
            "family shape {:?} does not match grid shape {:?}",
            u.space_shape(),
            grid.shape()
        )));
    }
    Ok(())
}

/// Time-infimum `v(x)` and the angle margins `θ̃(D²v) − (c − π/2)` at stable nodes.
pub fn verify_min_principle(
    grid: &Grid,
    u: &SampledFamily,
    c: f64,
    tol: f64,
    required_fraction: f64,
) -> Result<CheckReport> {
    check_family(grid, u)?;
    let phase = Phase::new(c, grid.dim())?;
    phase.check_spacetime()?;
    let v: Vec<f64> = minimize_on_grid(u).into_iter().map(|m| m.0).collect();
    let stable = stable_nodes(&v, grid.shape(), &space_steps(grid));
    let mut tally = Tally::new(tol, required_fraction);
    for node in (0..grid.node_count()).filter(|&n| stable[n]) {
        let theta = lifted_angle(&space_hessian(grid, &v, node))?;
        tally.add(theta - (c - FRAC_PI_2), None, || grid.point(node));
    }
    Ok(tally.finish())
}

/// Smallest second difference in time; margins are the raw second differences.
pub fn verify_time_convexity(grid: &Grid, u: &SampledFamily) -> Result<CheckReport> {
    check_family(grid, u)?;
    let t = u.grid();
    if t.len() < 3 {
        return Err(Error::input("time convexity needs at least 3 time samples"));
    }
    let tol = 1e-8 * (1.0 + u.sup_norm());
    let mut tally = Tally::new(tol, 1.0);
    for node in 0..grid.node_count() {
        for k in 1..t.len() - 1 {
            let (h0, h1) = (t[k] - t[k - 1], t[k + 1] - t[k]);
            let d = (u.value(k + 1, node) - u.value(k, node)) * h0 / h1
                - (u.value(k, node) - u.value(k - 1, node));
            tally.add(d, Some(t[k]), || grid.point(node));
        }
    }
    Ok(tally.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleReports {
    /// Margins `−|Θ̃ − c|` at stable space-time nodes.
    pub residual: CheckReport,
    /// Margins `−|θ̃(D²v) − (Θ̃ − π/2)|` at space nodes with an interior, strictly
    /// convex time minimizer.
    pub corollary: CheckReport,
}

pub fn verify_angle_residual(
    grid: &Grid,
    u: &SampledFamily,
    c: f64,
    tol: f64,
    required_fraction: f64,
) -> Result<AngleReports> {
    check_family(grid, u)?;
    let phase = Phase::new(c, grid.dim())?;
    phase.check_spacetime()?;
    let t = u.grid();
    let nt = t.len();
    if nt < 3 {
        return Err(Error::input("angle residual needs at least 3 time samples"));
    }
    let ht = (t[nt - 1] - t[0]) / (nt - 1) as f64;
    let mut shape = vec![nt];
    shape.extend_from_slice(grid.shape());
    let mut steps = vec![ht];
    steps.extend(space_steps(grid));
    let stable = stable_nodes(u.values(), &shape, &steps);
    let space = u.space_len();

    let mut residual = Tally::new(tol, required_fraction);
    for (flat, _) in stable.iter().enumerate().filter(|(_, s)| **s) {
        let (k, node) = (flat / space, flat % space);
        let theta = spacetime_lifted_angle(&spacetime_hessian(u, grid, k, node))?.angle;
        residual.add(-(theta - c).abs(), Some(t[k]), || grid.point(node));
    }

    let minima = minimize_on_grid(u);
    let v: Vec<f64> = minima.iter().map(|m| m.0).collect();
    let v_stable = stable_nodes(&v, grid.shape(), &space_steps(grid));
    let mut corollary = Tally::new(tol, required_fraction);
    for node in (0..space).filter(|&n| v_stable[n]) {
        let k = minima[node].2;
        if k == 0 || k + 1 == nt || !stable[k * space + node] {
            continue;
        }
        let full = spacetime_hessian(u, grid, k, node);
        if full.get(0, 0) <= 10.0 * ht {
            continue;
        }
        let big = spacetime_lifted_angle(&full)?.angle;
        let small = lifted_angle(&space_hessian(grid, &v, node))?;
        corollary.add(-(small - (big - FRAC_PI_2)).abs(), Some(t[k]), || grid.point(node));
    }
    Ok(AngleReports {
        residual: residual.finish(),
        corollary: corollary.finish(),
    })
}

/// Distance of `u` to the boundary data on `∂([0,1] × D)`; margins are `−|error|`.
pub fn verify_boundary_match(
    g: &BoundaryData,
    u: &SampledFamily,
    tol: f64,
) -> Result<CheckReport> {
    let grid = g.grid();
    check_family(grid, u)?;
    let t = u.grid();
    let nt = t.len();
    let mut tally = Tally::new(tol, 1.0);
    for (k, cap) in [(0, &g.cap_bottom), (nt - 1, &g.cap_top)] {
        for node in 0..grid.node_count() {
            tally.add(-(u.value(k, node) - cap.values()[node]).abs(), Some(t[k]), || {
                grid.point(node)
            });
        }
    }
    for (b, node) in grid.boundary_nodes().into_iter().enumerate() {
        for (k, tk) in t.iter().enumerate() {
            let err = u.value(k, node) - g.lateral_at(*tk, b);
            tally.add(-err.abs(), Some(*tk), || grid.point(node));
        }
    }
    Ok(tally.finish())
}

/// `h_τ(x) + τ·t ≤ u(t, x) + tol` for every dual slope, time and node.
pub fn verify_lower_bound(sol: &DslSolution, tol: f64) -> Result<CheckReport> {
    let grid = &sol.grid;
    let t = sol.u.grid();
    let mut tally = Tally::new(tol, 1.0);
    for node in 0..grid.node_count() {
        for (k, tk) in t.iter().enumerate() {
            let u = sol.u.value(k, node);
            let worst = sol
                .tau_grid()
                .iter()
                .enumerate()
                .map(|(j, tau)| u - (sol.envelopes.value(j, node) + tau * tk))
                .fold(f64::INFINITY, f64::min);
            tally.add(worst, Some(*tk), || grid.point(node));
        }
    }
    Ok(tally.finish())
}

/// Tolerances for [`diagnose`]; `boundary` defaults to `5·(h + Δτ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct VerifyOptions {
    pub min_principle_tol: f64,
    pub min_principle_fraction: f64,
    pub residual_tol: f64,
    pub residual_fraction: f64,
    pub boundary_tol: Option<f64>,
    pub lower_bound_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            min_principle_tol: 1e-6,
            min_principle_fraction: 0.99,
            residual_tol: 1e-3,
            residual_fraction: 0.95,
            boundary_tol: None,
            lower_bound_tol: 1e-9,
        }
    }
}

pub type Diagnostics = BTreeMap<String, CheckReport>;

/// Checks that need only `u`: time convexity, minimum principle, angle residual.
pub fn diagnose_family(
    grid: &Grid,
    u: &SampledFamily,
    c: f64,
    opts: &VerifyOptions,
) -> Result<Diagnostics> {
    let mut out = Diagnostics::new();
    out.insert("timeConvexity".into(), verify_time_convexity(grid, u)?);
    out.insert(
        "minPrinciple".into(),
        verify_min_principle(grid, u, c, opts.min_principle_tol, opts.min_principle_fraction)?,
    );
    let angles = verify_angle_residual(grid, u, c, opts.residual_tol, opts.residual_fraction)?;
    out.insert("angleResidual".into(), angles.residual);
    out.insert("infimumAngle".into(), angles.corollary);
    Ok(out)
}

/// All checks, including the boundary match and the pipeline lower bound.
pub fn diagnose(g: &BoundaryData, sol: &DslSolution, opts: &VerifyOptions) -> Result<Diagnostics> {
    let mut out = diagnose_family(&sol.grid, &sol.u, g.phase(), opts)?;
    let taus = sol.tau_grid();
    let dtau = if taus.len() > 1 {
        (taus[taus.len() - 1] - taus[0]) / (taus.len() - 1) as f64
    } else {
        0.0
    };
    let boundary_tol = opts
        .boundary_tol
        .unwrap_or(5.0 * (sol.grid.max_spacing() + dtau));
    out.insert("boundaryMatch".into(), verify_boundary_match(g, &sol.u, boundary_tol)?);
    out.insert("lowerBound".into(), verify_lower_bound(sol, opts.lower_bound_tol)?);
    Ok(out)
}
