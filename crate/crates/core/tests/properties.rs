use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slag_core::angles::{
    lifted_angle, resolvent_parts, scaled_angle, schur_det, spacetime_lifted_angle,
    in_degenerate_locus,
};
use slag_core::dsl::{solve_dsl, verify_lower_bound, BoundaryData, CapCheck, DslOptions, TauGrid};
use slag_core::solvers::{
    convex_envelope_1d, dirichlet, envelope, EnvelopeProblem,
};
use slag_core::subeq::{in_calfc, in_dual_calfc, random_orthogonal, sample_fc_member};
use slag_core::transform::{
    inverse_partial_legendre, partial_legendre, uniform_grid,
};
use slag_core::{Grid, Phase, SampledFamily, SpaceGrid, SymMatrix};

fn sym_entries(m: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-5.0..5.0f64, m * m).prop_map(move |v| {
        let a = DMatrix::from_row_slice(m, m, &v);
        SymMatrix::symmetric_part(&a).unwrap()
    })
}

fn sym_any() -> impl Strategy<Value = SymMatrix> {
    (1usize..=4).prop_flat_map(sym_entries)
}

fn spacetime_off_locus() -> impl Strategy<Value = SymMatrix> {
    (2usize..=4)
        .prop_flat_map(sym_entries)
        .prop_filter("off the degenerate locus", |a| !in_degenerate_locus(a, 1e-6))
}

fn complex_det(c: &DMatrix<Complex<f64>>) -> Complex<f64> {
    c.clone().lu().determinant()
}

fn i_plus_ia(a: &SymMatrix) -> DMatrix<Complex<f64>> {
    let m = a.dim();
    DMatrix::from_fn(m, m, |i, j| {
        Complex::new(if i == j { 1.0 } else { 0.0 }, a.get(i, j))
    })
}

/// Lower convex hull by brute force over all chords.
fn naive_hull(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    (0..xs.len())
        .map(|k| {
            let mut best = ys[k];
            for i in 0..=k {
                for j in k..xs.len() {
                    if i < j {
                        let s = (xs[k] - xs[i]) / (xs[j] - xs[i]);
                        best = best.min(ys[i] + s * (ys[j] - ys[i]));
                    }
                }
            }
            best
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lifted_angle_matches_determinant_phase(a in sym_any()) {
        let theta = lifted_angle(&a).unwrap();
        let m = a.dim() as f64;
        prop_assert!(theta.abs() < m * FRAC_PI_2);
        let det = complex_det(&i_plus_ia(&a));
        let unit = det / det.norm();
        prop_assert!((Complex::from_polar(1.0, theta) - unit).norm() < 1e-9);
    }

    #[test]
    fn lifted_angle_is_orthogonally_invariant(a in sym_any(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_orthogonal(a.dim(), &mut rng);
        let b = SymMatrix::symmetric_part(&(q.transpose() * a.as_matrix() * q)).unwrap();
        prop_assert!((lifted_angle(&a).unwrap() - lifted_angle(&b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn block_scalar_stays_in_half_turn(a in spacetime_off_locus()) {
        let parts = slag_core::angles::block_decompose(&a).unwrap();
        prop_assert_eq!(parts.assemble(), a.clone());
        let gap = spacetime_lifted_angle(&a).unwrap().angle - lifted_angle(&parts.trailing).unwrap();
        prop_assert!(gap.abs() <= FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn degenerate_value_is_upper_semicontinuous(
        trailing in (1usize..=3).prop_flat_map(sym_entries),
        seed in any::<u64>(),
    ) {
        let n = trailing.dim();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((1, 1), (n, n)).copy_from(trailing.as_matrix());
        let a = SymMatrix::new(m).unwrap();
        let at_locus = spacetime_lifted_angle(&a).unwrap();
        prop_assert!(at_locus.on_degenerate_locus);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = SymMatrix::symmetric_part(&DMatrix::from_fn(n + 1, n + 1, |_, _| {
            rand::Rng::random_range(&mut rng, -1.0..1.0)
        }))
        .unwrap();
        let limsup = [1e-7, 1e-8, 1e-9]
            .iter()
            .map(|e| spacetime_lifted_angle(&a.add(&dir.scale(*e))).unwrap().angle)
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(limsup <= at_locus.angle + 1e-6);
        let corner = slag_core::angles::degenerate_identity(1e-8, n).unwrap()
            .add(&slag_core::angles::degenerate_identity(0.0, n).unwrap().scale(-1.0));
        let witness = spacetime_lifted_angle(&a.add(&corner)).unwrap().angle;
        prop_assert!((witness - at_locus.angle).abs() < 1e-6);
    }

    #[test]
    fn schur_det_matches_determinant(
        m in 2usize..=4,
        re in prop::collection::vec(-2.0..2.0f64, 16),
        im in prop::collection::vec(-2.0..2.0f64, 16),
    ) {
        let c = DMatrix::from_fn(m, m, |i, j| {
            let k = i.min(j) * 4 + i.max(j);
            Complex::new(re[k], im[k])
        });
        prop_assume!(c[(0, 0)].norm() >= 0.1);
        let expected = complex_det(&c);
        let got = schur_det(&c).unwrap();
        prop_assert!((got - expected).norm() <= 1e-10 * expected.norm().max(1.0));
    }

    #[test]
    fn resolvent_signs(c in sym_any()) {
        let (re, im) = resolvent_parts(&c).unwrap();
        prop_assert!(re.min_eigenvalue().unwrap() > 0.0);
        let psd = c.min_eigenvalue().unwrap() >= 0.0;
        let im_nsd = im.scale(-1.0).min_eigenvalue().unwrap() >= -1e-12;
        // Borderline spectra can flip either test; only decided cases count.
        let decided = c.min_eigenvalue().unwrap().abs() > 1e-6;
        prop_assert!(!decided || psd == im_nsd);
    }

    #[test]
    fn scaled_angle_error_shrinks(a in spacetime_off_locus()) {
        let exact = spacetime_lifted_angle(&a).unwrap().angle;
        let e10 = (scaled_angle(&a, 10.0).unwrap() - exact).abs();
        let e100 = (scaled_angle(&a, 100.0).unwrap() - exact).abs();
        prop_assert!(e100 < e10 || e10 < 1e-12);
    }

    #[test]
    fn space_members_are_convex(n in 1usize..=3, frac in 0.0..0.95f64, seed in any::<u64>()) {
        let a = (n as f64 - 1.0) * FRAC_PI_2 + frac * FRAC_PI_2;
        let m = sample_fc_member(Phase::new(a, n).unwrap(), seed).unwrap();
        prop_assert!(m.min_eigenvalue().unwrap() >= -1e-10);
    }

    #[test]
    fn dual_of_dual_is_primal(a in spacetime_off_locus(), frac in -0.99..0.99f64) {
        let n = a.dim() - 1;
        let c = Phase::new(frac * (n as f64 + 1.0) * FRAC_PI_2, n).unwrap();
        let direct = in_calfc(&a, c, 1e-9).unwrap();
        let twice = in_dual_calfc(&a, c.negated(), 1e-9).unwrap();
        prop_assert_eq!(direct.status, twice.status);
        prop_assert_eq!(direct.margin, twice.margin);
    }
}

fn t_family() -> impl Strategy<Value = SampledFamily> {
    (1usize..6, 3usize..30).prop_flat_map(|(nx, nt)| {
        prop::collection::vec(-3.0..3.0f64, nx * nt).prop_map(move |v| {
            SampledFamily::new(uniform_grid(0.0, 1.0, nt), vec![nx], v).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn conjugate_is_concave_in_tau(f in t_family()) {
        let taus = uniform_grid(-20.0, 20.0, 81);
        let star = partial_legendre(&f, &taus).unwrap();
        for s in 0..star.space_len() {
            let p = star.profile(s);
            for w in p.windows(3) {
                prop_assert!(w[0] - 2.0 * w[1] + w[2] <= 1e-12);
            }
        }
    }

    #[test]
    fn conjugate_reverses_order(f in t_family(), bump in prop::collection::vec(0.0..1.0f64, 180)) {
        let values: Vec<f64> = f.values().iter().zip(bump.iter().cycle()).map(|(v, b)| v + b).collect();
        let g = SampledFamily::new(f.grid().to_vec(), f.space_shape().to_vec(), values).unwrap();
        let taus = uniform_grid(-10.0, 10.0, 41);
        let fs = partial_legendre(&f, &taus).unwrap();
        let gs = partial_legendre(&g, &taus).unwrap();
        for (a, b) in fs.values().iter().zip(gs.values()) {
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn biconjugate_is_lower_hull(f in t_family()) {
        let t = f.grid().to_vec();
        // Every chord slope is on the dual grid, so each hull segment has a supporting line.
        let mut taus: Vec<f64> = Vec::new();
        for s in 0..f.space_len() {
            let p = f.profile(s);
            for i in 0..t.len() {
                for j in i + 1..t.len() {
                    taus.push((p[j] - p[i]) / (t[j] - t[i]));
                }
            }
        }
        taus.sort_by(f64::total_cmp);
        taus.dedup_by(|a, b| *a - *b < 1e-9);
        prop_assume!(taus.len() >= 2);
        let back = inverse_partial_legendre(&partial_legendre(&f, &taus).unwrap(), &t).unwrap();
        for s in 0..f.space_len() {
            let hull = naive_hull(&t, &f.profile(s));
            let lib = convex_envelope_1d(&t, &f.profile(s)).unwrap();
            for k in 0..t.len() {
                prop_assert!((lib[k] - hull[k]).abs() < 1e-12);
                prop_assert!((back.value(k, s) - hull[k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn piecewise_linear_kinks_on_grid_are_exact(
        slopes in prop::collection::vec(-5i32..5, 1..6),
        base in -2.0..2.0f64,
    ) {
        let mut slopes: Vec<f64> = slopes.into_iter().map(f64::from).collect();
        slopes.sort_by(f64::total_cmp);
        let nt = 5 * slopes.len() + 1;
        let t = uniform_grid(0.0, 1.0, nt);
        let mut values = vec![base];
        for k in 1..nt {
            let piece = ((k - 1) / 5).min(slopes.len() - 1);
            values.push(values[k - 1] + slopes[piece] * (t[k] - t[k - 1]));
        }
        let f = SampledFamily::new(t.clone(), vec![1], values).unwrap();
        let taus = uniform_grid(-5.0, 5.0, 11);
        let back = inverse_partial_legendre(&partial_legendre(&f, &taus).unwrap(), &t).unwrap();
        prop_assert!(back.sup_distance(&f).unwrap() < 1e-12);
    }
}

fn interval_problem(
    coeffs: &[f64],
    ends: (f64, f64),
    a: f64,
    nx: usize,
) -> EnvelopeProblem {
    let grid = Grid::interval(-1.0, 1.0, nx).unwrap();
    let obstacle = SpaceGrid::from_fn(grid, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k + 1) as f64 * 2.0 * x[0]).sin())
            .sum::<f64>()
    })
    .unwrap();
    EnvelopeProblem::new(obstacle, vec![ends.0, ends.1], a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_is_a_maximal_convex_candidate(
        coeffs in prop::collection::vec(-1.0..1.0f64, 4),
        ends in (-2.0..2.0f64, -2.0..2.0f64),
        a in 0.0..1.4f64,
        nx in 5usize..80,
    ) {
        let p = interval_problem(&coeffs, ends, a, nx);
        let u = envelope(&p).unwrap();
        let w = u.values();
        let v = p.obstacle().values();
        let h = p.grid().spacing(0);
        let floor = a.tan() * h * h;
        prop_assert!(w.iter().zip(v).all(|(w, v)| w <= v));
        prop_assert!(w[0] <= ends.0 && w[nx - 1] <= ends.1);
        for k in 1..nx - 1 {
            prop_assert!(w[k - 1] - 2.0 * w[k] + w[k + 1] >= floor - 1e-10);
        }
        // Raising any interior node breaks a constraint.
        for k in 1..nx - 1 {
            let mut raised = w.to_vec();
            raised[k] += 1e-8;
            let above = raised[k] > v[k];
            let bent = (k.max(2) - 1..=(k + 1).min(nx - 2)).any(|j| {
                raised[j - 1] - 2.0 * raised[j] + raised[j + 1] < floor - 1e-10
            });
            prop_assert!(above || bent, "node {} can be raised", k);
        }
    }

    #[test]
    fn envelope_is_monotone(
        coeffs in prop::collection::vec(-1.0..1.0f64, 4),
        lift in prop::collection::vec(0.0..0.5f64, 4),
        ends in (-2.0..2.0f64, -2.0..2.0f64),
        raise in (0.0..1.0f64, 0.0..1.0f64),
        a in 0.0..1.4f64,
    ) {
        let low = interval_problem(&coeffs, ends, a, 41);
        let grid = low.grid().clone();
        let higher: Vec<f64> = low
            .obstacle()
            .values()
            .iter()
            .enumerate()
            .map(|(k, v)| v + lift[k % 4])
            .collect();
        let high = EnvelopeProblem::new(
            SpaceGrid::new(grid, higher).unwrap(),
            vec![ends.0 + raise.0, ends.1 + raise.1],
            a,
        )
        .unwrap();
        let ul = envelope(&low).unwrap();
        let uh = envelope(&high).unwrap();
        prop_assert!(ul.values().iter().zip(uh.values()).all(|(l, h)| l <= h));
    }

    #[test]
    fn unconstrained_envelope_is_the_dirichlet_solution(
        ends in (-2.0..2.0f64, -2.0..2.0f64),
        a in 0.0..1.4f64,
    ) {
        let grid = Grid::interval(0.0, 1.0, 51).unwrap();
        let obstacle = SpaceGrid::from_fn(grid.clone(), |_| 1e9).unwrap();
        let p = EnvelopeProblem::new(obstacle, vec![ends.0, ends.1], a).unwrap();
        let u = envelope(&p).unwrap();
        let d = dirichlet(&grid, &[ends.0, ends.1], a).unwrap();
        prop_assert!(u.sup_distance(&d) < 1e-8);
    }
}

#[test]
fn unconstrained_planar_envelope_is_the_dirichlet_solution() {
    let grid = Grid::rectangle((0.0, 1.0), (0.0, 1.5), 13, 17).unwrap();
    let f = |p: &[f64]| (1.3 * p[0]).sin() + p[1] * p[1] - 0.4 * p[0] * p[1];
    for a in [FRAC_PI_2, FRAC_PI_2 + 0.4, PI - 0.3] {
        let boundary: Vec<f64> = grid.boundary_nodes().into_iter().map(|b| f(&grid.point(b))).collect();
        let obstacle = SpaceGrid::from_fn(grid.clone(), |_| 1e9).unwrap();
        let p = EnvelopeProblem::new(obstacle, boundary.clone(), a).unwrap();
        let u = envelope(&p).unwrap();
        let d = dirichlet(&grid, &boundary, a).unwrap();
        assert!(u.sup_distance(&d) < 1e-8, "a = {a}: {}", u.sup_distance(&d));
    }
}

fn dsl_data(amp: f64, slope: f64) -> BoundaryData {
    let grid = Grid::interval(-1.0, 1.0, 61).unwrap();
    BoundaryData::from_fn(
        grid,
        21,
        move |t, x| 0.5 * x[0] * x[0] + amp * (t + slope * x[0]).powi(2),
        3.0 * PI / 4.0,
        CapCheck::Error,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn pipeline_is_deterministic_and_closed(amp in 0.0..0.5f64, slope in -0.3..0.3f64) {
        let data = dsl_data(amp, slope);
        let opts = DslOptions { tau: TauGrid::Auto { samples: 81 }, nt: 31, ..Default::default() };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| solve_dsl(&data, &opts)).unwrap();
        let b = many.install(|| solve_dsl(&data, &opts)).unwrap();
        prop_assert_eq!(a.u().values(), b.u().values());
        prop_assert_eq!(a.envelopes().values(), b.envelopes().values());

        let star = partial_legendre(a.u(), a.tau_grid()).unwrap();
        let back = inverse_partial_legendre(&star, a.u().grid()).unwrap();
        prop_assert!(back.sup_distance(a.u()).unwrap() <= 1e-9);
        prop_assert!(verify_lower_bound(&a, 1e-12).unwrap().pass);
    }
}

#[test]
fn time_constant_data_reduces_to_the_envelope() {
    let grid = Grid::interval(-1.0, 1.0, 41).unwrap();
    let cap = |x: &[f64]| 0.5 * x[0] * x[0] + 0.1 * (2.0 * x[0]).sin();
    let data = BoundaryData::from_fn(grid.clone(), 5, |_, x| cap(x), FRAC_PI_2 + 0.2, CapCheck::Error).unwrap();
    let sol = solve_dsl(&data, &DslOptions { nt: 11, ..Default::default() }).unwrap();
    let obstacle = SpaceGrid::from_fn(grid.clone(), cap).unwrap();
    let p = EnvelopeProblem::with_boundary_fn(obstacle, cap, 0.2).unwrap();
    let h = envelope(&p).unwrap();
    for k in 0..11 {
        for (a, b) in sol.u().slice(k).iter().zip(h.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
