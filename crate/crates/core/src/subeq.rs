//! Membership in the special Lagrangian subequations.
//!
//! `F_c = {A ∈ Sym(R^n) : θ̃(A) ≥ c}` for `c ∈ (−nπ/2, nπ/2)` and
//! `𝓕_c = {A ∈ Sym(R^{n+1}) : Θ̃(A) ≥ c}` for `c ∈ (−(n+1)π/2, (n+1)π/2)`.
//! The dual of `𝓕_c` is `𝓕_{−c}`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::angles::{lifted_angle, spacetime_lifted_angle, SymMatrix};
use crate::error::{Error, Result};

/// Default half-width of the band classified as `boundary`.
pub const DEFAULT_BAND: f64 = 1e-9;

/// Draws allowed before a sampler reports failure.
pub const SAMPLE_BUDGET: usize = 100_000;

// Keeps sampled eigenvalues at desk scale.
const MAX_SAMPLED_EIGENVALUE: f64 = 1e4;

/// A phase `c` in radians attached to a space dimension `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    value: f64,
    space_dim: usize,
}

impl Phase {
    pub fn new(value: f64, space_dim: usize) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::input(format!("phase must be finite, got {value}")));
        }
        if space_dim == 0 {
            return Err(Error::input("space dimension must be positive"));
        }
        Ok(Phase { value, space_dim })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn negated(&self) -> Phase {
        Phase {
            value: -self.value,
            space_dim: self.space_dim,
        }
    }

    /// Checks `c ∈ (−nπ/2, nπ/2)`.
    pub fn check_space(&self) -> Result<()> {
        let limit = self.space_dim as f64 * FRAC_PI_2;
        if self.value.abs() < limit {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "phase {} outside (-{limit}, {limit}) for n = {}",
                self.value, self.space_dim
            )))
        }
    }

    /// Checks `c ∈ (−(n+1)π/2, (n+1)π/2)`.
    pub fn check_spacetime(&self) -> Result<()> {
        let limit = (self.space_dim + 1) as f64 * FRAC_PI_2;
        if self.value.abs() < limit {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "space-time phase {} outside (-{limit}, {limit}) for n = {}",
                self.value, self.space_dim
            )))
        }
    }

    /// Checks the half-open window `[kπ/2, (k+1)π/2)`.
    pub(crate) fn check_window(&self, lower_multiple: usize) -> Result<()> {
        let lo = lower_multiple as f64 * FRAC_PI_2;
        let hi = lo + FRAC_PI_2;
        if self.value >= lo && self.value < hi {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "phase {} outside [{lo}, {hi}) for n = {}",
                self.value, self.space_dim
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Inside,
    Boundary,
    Outside,
}

/// Tri-state membership with the signed angle margin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub status: Status,
    pub margin: f64,
}

impl Membership {
    pub fn classify(margin: f64, band: f64) -> Self {
        let status = if margin.abs() <= band {
            Status::Boundary
        } else if margin > 0.0 {
            Status::Inside
        } else {
            Status::Outside
        };
        Membership { status, margin }
    }

    /// Inside or on the boundary band.
    pub fn is_member(&self) -> bool {
        self.status != Status::Outside
    }
}

fn check_band(band: f64) -> Result<()> {
    if band >= 0.0 && band.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("band must be non-negative, got {band}")))
    }
}

/// Membership of `A ∈ Sym(R^n)` in `F_c`.
pub fn in_fc(a: &SymMatrix, c: Phase, band: f64) -> Result<Membership> {
    check_band(band)?;
    c.check_space()?;
    if a.dim() != c.space_dim() {
        return Err(Error::input(format!(
            "F_c membership needs a {0}x{0} matrix, got dim {1}",
            c.space_dim(),
            a.dim()
        )));
    }
    Ok(Membership::classify(lifted_angle(a)? - c.value(), band))
}

/// Membership of `A ∈ Sym(R^{n+1})` in `𝓕_c`.
pub fn in_calfc(a: &SymMatrix, c: Phase, band: f64) -> Result<Membership> {
    check_band(band)?;
    c.check_spacetime()?;
    if a.dim() != c.space_dim() + 1 {
        return Err(Error::input(format!(
            "space-time membership needs a {0}x{0} matrix, got dim {1}",
            c.space_dim() + 1,
            a.dim()
        )));
    }
    Ok(Membership::classify(
        spacetime_lifted_angle(a)?.angle - c.value(),
        band,
    ))
}

/// Membership in the dual subequation, which is `𝓕_{−c}`.
pub fn in_dual_calfc(a: &SymMatrix, c: Phase, band: f64) -> Result<Membership> {
    in_calfc(a, c.negated(), band)
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Qᵀ diag(λ) Q` for a random orthogonal `Q`.
pub fn random_with_spectrum<R: Rng + ?Sized>(spectrum: &[f64], rng: &mut R) -> SymMatrix {
    let q = random_orthogonal(spectrum.len(), rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(spectrum));
    SymMatrix::symmetric_part(&(q.transpose() * d * q)).expect("finite by construction")
}

/// Random positive semidefinite matrix `GᵀG·s` with Gaussian `G`, `s ∈ (0, scale)`.
pub fn random_psd<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> SymMatrix {
    let rank = rng.random_range(1..=dim);
    let g: DMatrix<f64> = DMatrix::from_fn(rank, dim, |_, _| StandardNormal.sample(rng));
    let s: f64 = rng.random::<f64>() * scale;
    SymMatrix::symmetric_part(&(g.transpose() * g * s)).expect("finite by construction")
}

/// Angles `μ_i ∈ (floor, π/2)` with `Σ μ_i ≥ n·π/2 − slack`, i.e. deficits
/// `π/2 − μ_i` summing to at most `slack`.
fn draw_angles<R: Rng + ?Sized>(n: usize, slack: f64, floor_gap: f64, rng: &mut R) -> Vec<f64> {
    let total = rng.random::<f64>() * slack;
    let weights: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| {
            let deficit = (total * w / sum).min(PI - floor_gap);
            FRAC_PI_2 - deficit
        })
        .collect()
}

fn spectrum_from_angles(angles: &[f64]) -> Option<Vec<f64>> {
    let lambdas: Vec<f64> = angles.iter().map(|m| m.tan()).collect();
    lambdas
        .iter()
        .all(|l| l.is_finite() && l.abs() <= MAX_SAMPLED_EIGENVALUE)
        .then_some(lambdas)
}

/// Random member of `F_c`, deterministic per seed.
pub fn sample_fc_member(c: Phase, seed: u64) -> Result<SymMatrix> {
    c.check_space()?;
    let n = c.space_dim();
    let slack = n as f64 * FRAC_PI_2 - c.value();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SAMPLE_BUDGET {
        let angles = draw_angles(n, slack, 1e-3, &mut rng);
        let Some(spectrum) = spectrum_from_angles(&angles) else {
            continue;
        };
        let a = random_with_spectrum(&spectrum, &mut rng);
        if in_fc(&a, c, 0.0)?.margin >= 0.0 {
            return Ok(a);
        }
    }
    Err(Error::Sampling {
        draws: SAMPLE_BUDGET,
        reason: format!("no member of F_c found for c = {}", c.value()),
    })
}

/// Random member of `𝓕_c` for `c ∈ [nπ/2, (n+1)π/2)`, deterministic per seed.
///
/// `A⁺ = Qᵀ diag(tan μ) Q` with `Σ μ_i ≥ c − π/2`, `a00 ≥ 0` and a small
/// edge `ā0`; a draw is kept iff `Θ̃(A) ≥ c`. About one draw in ten is placed
/// on the degenerate locus, where `Θ̃ = π/2 + θ̃(A⁺)`.
pub fn sample_calfc_member(c: Phase, seed: u64) -> Result<SymMatrix> {
    let n = c.space_dim();
    c.check_window(n)?;
    let slack = (n + 1) as f64 * FRAC_PI_2 - c.value();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SAMPLE_BUDGET {
        let angles = draw_angles(n, slack, 1e-3, &mut rng);
        let Some(spectrum) = spectrum_from_angles(&angles) else {
            continue;
        };
        let trailing = random_with_spectrum(&spectrum, &mut rng);
        let on_locus = rng.random::<f64>() < 0.1;
        let (corner, edge_scale) = if on_locus {
            (0.0, 0.0)
        } else {
            (
                rng.random::<f64>() * 5.0,
                10f64.powf(rng.random_range(-3.0..0.0)),
            )
        };
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m[(0, 0)] = corner;
        for k in 0..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            m[(0, k + 1)] = e * edge_scale;
            m[(k + 1, 0)] = e * edge_scale;
        }
        m.view_mut((1, 1), (n, n)).copy_from(trailing.as_matrix());
        let a = SymMatrix::new(m)?;
        if in_calfc(&a, c, 0.0)?.margin >= 0.0 {
            return Ok(a);
        }
    }
    Err(Error::Sampling {
        draws: SAMPLE_BUDGET,
        reason: format!("no member of the space-time subequation found for c = {}", c.value()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ph(v: f64, n: usize) -> Phase {
        Phase::new(v, n).unwrap()
    }

    #[test]
    fn fc_examples() {
        let m = in_fc(&SymMatrix::identity(2), ph(PI / 2.0, 2), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Boundary);
        let m = in_fc(&SymMatrix::zeros(2), ph(PI / 4.0, 2), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Outside);
        let s = 3f64.sqrt();
        let m = in_fc(&SymMatrix::diag(&[s, s]), ph(PI / 2.0, 2), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Inside);
        assert_abs_diff_eq!(m.margin, 2.0 * PI / 3.0 - PI / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn calfc_examples() {
        let m = in_calfc(&SymMatrix::diag(&[0.0, 1.0]), ph(3.0 * PI / 4.0, 1), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Boundary);
        let swap = SymMatrix::from_row_slice(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let m = in_calfc(&swap, ph(PI / 2.0, 1), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Outside);
        let m = in_calfc(&SymMatrix::identity(2), ph(PI / 2.0, 1), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Inside);
        assert_abs_diff_eq!(m.margin, PI / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn dual_examples() {
        let m = in_dual_calfc(&SymMatrix::diag(&[0.0, 1.0]), ph(-3.0 * PI / 4.0, 1), DEFAULT_BAND)
            .unwrap();
        assert_eq!(m.status, Status::Boundary);
        let m = in_dual_calfc(&SymMatrix::zeros(2), ph(PI / 2.0, 1), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Inside);
        let m = in_dual_calfc(&SymMatrix::diag(&[0.0, -10.0]), ph(0.0, 1), DEFAULT_BAND).unwrap();
        // π/2 + arctan(−10) ≈ 0.0997, so this sits inside with a small margin.
        assert_eq!(m.status, Status::Inside);
        assert_abs_diff_eq!(m.margin, PI / 2.0 + (-10f64).atan(), epsilon = 1e-14);
        let m = in_dual_calfc(&SymMatrix::diag(&[0.0, -10.0]), ph(-0.2, 1), DEFAULT_BAND).unwrap();
        assert_eq!(m.status, Status::Outside);
    }

    #[test]
    fn phase_ranges_are_enforced() {
        assert!(in_fc(&SymMatrix::zeros(1), ph(PI / 2.0, 1), DEFAULT_BAND).is_err());
        assert!(in_calfc(&SymMatrix::zeros(2), ph(PI, 1), DEFAULT_BAND).is_err());
        assert!(in_calfc(&SymMatrix::zeros(3), ph(0.0, 1), DEFAULT_BAND).is_err());
        assert!(in_fc(&SymMatrix::zeros(1), ph(0.0, 1), -1.0).is_err());
        assert!(sample_calfc_member(ph(PI / 4.0, 1), 0).is_err());
    }

    #[test]
    fn sampler_examples() {
        for (c, n, seed) in [(PI / 2.0, 1, 7), (3.0 * PI / 4.0, 1, 0), (PI, 2, 1)] {
            let a = sample_calfc_member(ph(c, n), seed).unwrap();
            assert_eq!(a.dim(), n + 1);
            assert!(in_calfc(&a, ph(c, n), DEFAULT_BAND).unwrap().is_member());
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let c = ph(1.2 * PI, 2);
        assert_eq!(
            sample_calfc_member(c, 42).unwrap(),
            sample_calfc_member(c, 42).unwrap()
        );
        let c = ph(-0.3, 3);
        assert_eq!(sample_fc_member(c, 9).unwrap(), sample_fc_member(c, 9).unwrap());
    }

    #[test]
    fn thin_window_reports_budget_exhaustion() {
        // Right below the upper phase limit the member set is too thin to hit.
        let c = ph(PI - 1e-13, 1);
        assert!(matches!(
            sample_calfc_member(c, 3),
            Err(Error::Sampling { .. })
        ));
    }
}
