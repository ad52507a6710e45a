//! JSON run configuration shared by `envelope`, `dirichlet`, `dsl-solve` and `verify`.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use slag_core::dsl::{BoundaryData, CapCheck, DslOptions, TauGrid, VerifyOptions};
use slag_core::solvers::{DirichletOptions, EnvelopeOptions};
use slag_core::transform::uniform_grid;
use slag_core::{Grid, SpaceGrid};

use crate::expr::{Expr, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    /// Space dimension, 1 or 2.
    pub n: usize,
    #[serde(default)]
    pub domain: Domain,
    #[serde(default)]
    pub grid: GridSizes,
    /// Radians, as a number or a constant expression such as `"1*pi/2+0.25"`.
    pub phase: PhaseSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub output: Outputs,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub x: Option<[f64; 2]>,
    pub y: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSizes {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub nt: Option<usize>,
    pub ntau: Option<usize>,
    /// Lateral levels sampled from `g`; defaults to `nt`.
    pub nr: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseSpec {
    Value(f64),
    Symbolic(String),
}

/// Expression over the space variables, or a grid CSV (`x[,y],value`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source {
    Expr(String),
    Table { csv: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BoundarySpec {
    /// `g(t, x[, y])` on the space-time boundary (dsl-solve, verify).
    pub g: Option<String>,
    /// Obstacle `v` (envelope).
    pub obstacle: Option<Source>,
    /// Boundary trace `f`; for `envelope` defaults to the obstacle.
    pub trace: Option<Source>,
    /// Explicit dual-slope range; otherwise picked from the data.
    pub tau_range: Option<[f64; 2]>,
    pub cap_check: Option<CapCheck>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    /// CSV written by `envelope`, `dirichlet` and `dsl-solve`.
    pub solution: Option<String>,
    /// JSON report.
    pub report: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Tolerances {
    pub sweep: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub relaxation: Option<f64>,
    pub newton: Option<f64>,
    pub newton_iterations: Option<usize>,
    pub min_principle: Option<f64>,
    pub min_principle_fraction: Option<f64>,
    pub residual: Option<f64>,
    pub residual_fraction: Option<f64>,
    pub boundary: Option<f64>,
    pub lower_bound: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("cannot open config {}", path.display()))?;
        let mut de = serde_json::Deserializer::from_reader(BufReader::new(file));
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            anyhow::anyhow!("config field '{field}': {}", e.inner())
        })?;
        Ok(cfg)
    }

    /// Fills every default so that the echoed config reproduces the run.
    pub fn resolve(mut self) -> Result<Self> {
        if !(1..=2).contains(&self.n) {
            bail!("config field 'n': must be 1 or 2, got {}", self.n);
        }
        self.domain.x.get_or_insert([-1.0, 1.0]);
        let default_nodes = if self.n == 1 { 201 } else { 65 };
        let nx = *self.grid.nx.get_or_insert(default_nodes);
        if self.n == 2 {
            self.domain.y.get_or_insert([-1.0, 1.0]);
            self.grid.ny.get_or_insert(nx);
        } else if self.domain.y.is_some() || self.grid.ny.is_some() {
            bail!("config fields 'domain.y' and 'grid.ny' need n = 2");
        }
        let nt = *self.grid.nt.get_or_insert(101);
        self.grid.ntau.get_or_insert(401);
        self.grid.nr.get_or_insert(nt);
        for (name, v) in [
            ("grid.nx", self.grid.nx),
            ("grid.ny", self.grid.ny),
            ("grid.nt", self.grid.nt),
            ("grid.nr", self.grid.nr),
        ] {
            if let Some(v) = v {
                if v < 3 {
                    bail!("config field '{name}': need at least 3 samples, got {v}");
                }
            }
        }
        if self.grid.ntau.unwrap() < 2 {
            bail!("config field 'grid.ntau': need at least 2 samples");
        }
        self.phase_value()?;
        self.boundary.cap_check.get_or_insert(CapCheck::Error);
        let t = &mut self.tolerances;
        let env = EnvelopeOptions::default();
        let dir = DirichletOptions::default();
        let ver = VerifyOptions::default();
        t.sweep.get_or_insert(env.tol);
        t.max_sweeps.get_or_insert(env.max_sweeps);
        t.newton.get_or_insert(dir.tol);
        t.newton_iterations.get_or_insert(dir.max_iterations);
        t.min_principle.get_or_insert(ver.min_principle_tol);
        t.min_principle_fraction.get_or_insert(ver.min_principle_fraction);
        t.residual.get_or_insert(ver.residual_tol);
        t.residual_fraction.get_or_insert(ver.residual_fraction);
        t.lower_bound.get_or_insert(ver.lower_bound_tol);
        Ok(self)
    }

    pub fn phase_value(&self) -> Result<f64> {
        match &self.phase {
            PhaseSpec::Value(v) if v.is_finite() => Ok(*v),
            PhaseSpec::Value(v) => bail!("config field 'phase': {v} is not finite"),
            PhaseSpec::Symbolic(s) => {
                Expr::constant(s).with_context(|| format!("config field 'phase': '{s}'"))
            }
        }
    }

    pub fn space_grid(&self) -> Result<Grid> {
        let [x0, x1] = self.domain.x.unwrap_or([-1.0, 1.0]);
        let nx = self.grid.nx.unwrap_or(3);
        let grid = match self.n {
            1 => Grid::interval(x0, x1, nx),
            _ => {
                let [y0, y1] = self.domain.y.unwrap_or([-1.0, 1.0]);
                Grid::rectangle((x0, x1), (y0, y1), nx, self.grid.ny.unwrap_or(nx))
            }
        };
        grid.context("config field 'domain'")
    }

    fn space_vars(&self) -> &'static [Var] {
        if self.n == 1 {
            &[Var::X]
        } else {
            &[Var::X, Var::Y]
        }
    }

    fn sample(&self, grid: &Grid, source: &Source, field: &str) -> Result<SpaceGrid> {
        match source {
            Source::Expr(src) => {
                let e = Expr::parse(src, self.space_vars())
                    .with_context(|| format!("config field '{field}'"))?;
                SpaceGrid::from_fn(grid.clone(), |p| e.eval(0.0, p))
                    .with_context(|| format!("config field '{field}'"))
            }
            Source::Table { csv } => {
                let file = File::open(csv)
                    .with_context(|| format!("config field '{field}': cannot open {csv}"))?;
                let table = SpaceGrid::read_csv(BufReader::new(file))
                    .with_context(|| format!("config field '{field}': {csv}"))?;
                if table.grid().shape() != grid.shape()
                    || table.grid().lower() != grid.lower()
                    || table.grid().upper() != grid.upper()
                {
                    bail!("config field '{field}': {csv} is not sampled on the configured grid");
                }
                Ok(table)
            }
        }
    }

    pub fn obstacle(&self, grid: &Grid) -> Result<SpaceGrid> {
        let Some(src) = &self.boundary.obstacle else {
            bail!("config field 'boundary.obstacle' is required");
        };
        self.sample(grid, src, "boundary.obstacle")
    }

    /// Trace values at the boundary nodes; `fallback` names the field used when
    /// `boundary.trace` is absent.
    pub fn trace(&self, grid: &Grid, fallback: Option<&Source>) -> Result<Vec<f64>> {
        let (src, field) = match (&self.boundary.trace, fallback) {
            (Some(s), _) => (s, "boundary.trace"),
            (None, Some(s)) => (s, "boundary.obstacle"),
            (None, None) => bail!("config field 'boundary.trace' is required"),
        };
        let values = self.sample(grid, src, field)?;
        Ok(grid.boundary_nodes().into_iter().map(|b| values.values()[b]).collect())
    }

    pub fn boundary_data(&self) -> Result<BoundaryData> {
        let Some(src) = &self.boundary.g else {
            bail!("config field 'boundary.g' is required");
        };
        let mut vars = vec![Var::T];
        vars.extend_from_slice(self.space_vars());
        let g = Expr::parse(src, &vars).context("config field 'boundary.g'")?;
        let grid = self.space_grid()?;
        let data = BoundaryData::from_fn(
            grid,
            self.grid.nr.unwrap_or(101),
            |t, p| g.eval(t, p),
            self.phase_value()?,
            self.boundary.cap_check.unwrap_or_default(),
        )?;
        Ok(data)
    }

    pub fn envelope_options(&self) -> EnvelopeOptions {
        let d = EnvelopeOptions::default();
        EnvelopeOptions {
            max_sweeps: self.tolerances.max_sweeps.unwrap_or(d.max_sweeps),
            tol: self.tolerances.sweep.unwrap_or(d.tol),
            relaxation: self.tolerances.relaxation,
        }
    }

    pub fn dirichlet_options(&self) -> DirichletOptions {
        let d = DirichletOptions::default();
        DirichletOptions {
            max_iterations: self.tolerances.newton_iterations.unwrap_or(d.max_iterations),
            tol: self.tolerances.newton.unwrap_or(d.tol),
        }
    }

    pub fn dsl_options(&self) -> DslOptions {
        let samples = self.grid.ntau.unwrap_or(401);
        let tau = match self.boundary.tau_range {
            Some([lo, hi]) => TauGrid::Explicit(uniform_grid(lo, hi, samples)),
            None => TauGrid::Auto { samples },
        };
        DslOptions {
            tau,
            nt: self.grid.nt.unwrap_or(101),
            envelope: self.envelope_options(),
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        let d = VerifyOptions::default();
        let t = &self.tolerances;
        VerifyOptions {
            min_principle_tol: t.min_principle.unwrap_or(d.min_principle_tol),
            min_principle_fraction: t.min_principle_fraction.unwrap_or(d.min_principle_fraction),
            residual_tol: t.residual.unwrap_or(d.residual_tol),
            residual_fraction: t.residual_fraction.unwrap_or(d.residual_fraction),
            boundary_tol: t.boundary,
            lower_bound_tol: t.lower_bound.unwrap_or(d.lower_bound_tol),
        }
    }
}
