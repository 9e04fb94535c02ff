//! Complex-balanced equilibria.
//!
//! Two stages: [`solve_log_equilibrium`] finds the unique `X* ∈ S` with
//! `exp(X*)` complex-balanced, and [`birch_solve`] moves it along
//! `X* + S⊥` until it meets the class `x0 + S`. Their composition
//! ([`equilibrium_from_rates`]) is the equilibrium map `k ↦ x*` for fixed
//! `x0`; [`equilibrium_from_initial`] fixes `k` and exposes `x0 ↦ x*`.

mod probe;

pub use probe::{smooth_dependence_probe, Perturbation, ProbeResult, DEFAULT_PROBE_STEPS};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kirchhoff::{self, MembershipResult, RateVector};
use crate::lincore;
use crate::netmodel::{EGraph, StoichDecomp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    /// `s = n`: the selected rows already form an invertible system.
    FullRank,
    /// `s < n`: rows of an `S⊥` basis were appended with zero right-hand side.
    Augmented,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEquilibrium {
    /// `X* ∈ S`; `exp(X*)` is complex-balanced.
    pub x_star: DVector<f64>,
    /// Rows of the consecutive-pair log system that were kept.
    pub system_rows_used: Vec<usize>,
    pub method: SolveMethod,
    pub membership: MembershipResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BirchOptions {
    /// Convergence threshold on `‖f‖_∞`, scaled by `max(1, ‖x0‖_∞)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant for the backtracking line search.
    pub armijo: f64,
}

impl Default for BirchOptions {
    fn default() -> Self {
        BirchOptions {
            grad_tol: 1e-12,
            max_iter: 200,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirchResult {
    pub x_star: DVector<f64>,
    /// Coordinates of `ln x* − X*` in the `S⊥` basis.
    pub w: DVector<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Potential value at every iterate, starting from `w = 0`.
    pub potential_history: Vec<f64>,
}

pub(crate) fn check_positive_state(x: &DVector<f64>, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            what: "state vector",
            expected: n,
            found: x.len(),
        });
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveState { index, value });
    }
    Ok(())
}

/// Computes `X* ∈ S` from the tree constants of a toric rate vector.
///
/// `s` independent rows of the log system are chosen by pivoted
/// Gram-Schmidt; when `s < n` the `S⊥` basis rows are appended with zero
/// right-hand side so the square system pins down the representative in `S`.
pub fn solve_log_equilibrium(g: &EGraph, k: &RateVector, sd: &StoichDecomp, tol: f64) -> Result<LogEquilibrium> {
    if sd.n() != g.n_species() {
        return Err(Error::DimensionMismatch {
            what: "stoichiometric basis",
            expected: g.n_species(),
            found: sd.n(),
        });
    }
    let tc = kirchhoff::tree_constants(g, k)?;
    let sys = kirchhoff::log_system(g, &tc);
    let ls = lincore::least_squares(&sys.delta_y, &sys.log_delta_k);
    let membership = MembershipResult {
        is_member: ls.residual_norm <= tol,
        log_solution: ls.solution,
        residual: ls.residual_norm,
        tolerance_used: tol,
    };
    if !membership.is_member {
        return Err(Error::NotInToricLocus {
            residual: membership.residual,
            tolerance: tol,
        });
    }

    let n = g.n_species();
    let rows = lincore::select_independent_rows(&sys.delta_y, sd.s, lincore::DEFAULT_RANK_TOL)
        .ok_or_else(|| Error::SingularSystem(format!("log system has fewer than s = {} independent rows", sd.s)))?;
    let mut matrix = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for (dst, &src) in rows.iter().enumerate() {
        matrix.set_row(dst, &sys.delta_y.row(src));
        rhs[dst] = sys.log_delta_k[src];
    }
    for (i, v) in sd.basis_sperp.column_iter().enumerate() {
        matrix.set_row(sd.s + i, &v.transpose());
    }
    let method = if sd.s == n {
        SolveMethod::FullRank
    } else {
        SolveMethod::Augmented
    };
    if rows.len() + sd.codim() != n || lincore::inverse_condition(&matrix) < 1e-12 {
        return Err(Error::SingularSystem(
            "augmented log system is not invertible; check rank tolerances".into(),
        ));
    }
    let x_star = matrix
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("LU factorization failed".into()))?;
    Ok(LogEquilibrium {
        x_star,
        system_rows_used: rows,
        method,
        membership,
    })
}

/// Finds `x* = exp(X* + Σ w_i v_i)` on the class `x0 + S`.
///
/// `w` minimizes the strictly convex potential
/// `Σ_j exp(X* + V w)_j − (Vᵀx0)·w`, whose gradient is
/// `f(w) = Vᵀ exp(X* + V w) − Vᵀ x0` and whose Hessian is
/// `Vᵀ diag(exp(X* + V w)) V`. Damped Newton from `w = 0`.
pub fn birch_solve(
    x_star_log: &DVector<f64>,
    x0: &DVector<f64>,
    sd: &StoichDecomp,
    opts: &BirchOptions,
) -> Result<BirchResult> {
    let n = sd.n();
    if x_star_log.len() != n {
        return Err(Error::DimensionMismatch {
            what: "log equilibrium",
            expected: n,
            found: x_star_log.len(),
        });
    }
    check_positive_state(x0, n)?;
    let v = &sd.basis_sperp;
    let c = v.ncols();
    if c == 0 {
        return Ok(BirchResult {
            x_star: x_star_log.map(f64::exp),
            w: DVector::zeros(0),
            iterations: 0,
            final_grad_norm: 0.0,
            potential_history: Vec::new(),
        });
    }
    let gram_defect = (v.transpose() * v - DMatrix::<f64>::identity(c, c)).amax();
    if gram_defect > 1e-10 {
        return Err(Error::DegenerateBasis(format!(
            "S-perp basis is not orthonormal (Gram defect {gram_defect:.3e})"
        )));
    }

    let target = v.transpose() * x0;
    let state = |w: &DVector<f64>| (x_star_log + v * w).map(f64::exp);
    let potential = |w: &DVector<f64>| state(w).sum() - target.dot(w);
    let tol = opts.grad_tol * x0.amax().max(1.0);

    let mut w = DVector::zeros(c);
    let mut x = state(&w);
    let mut value = potential(&w);
    let mut history = vec![value];
    let mut iterations = 0;
    loop {
        let f = v.transpose() * &x - &target;
        let grad_norm = f.amax();
        if grad_norm <= tol {
            return Ok(BirchResult {
                x_star: x,
                w,
                iterations,
                final_grad_norm: grad_norm,
                potential_history: history,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::MaxIterations { iterations, grad_norm });
        }
        let hessian = v.transpose() * DMatrix::from_diagonal(&x) * v;
        let step = hessian
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("Newton Hessian is not positive definite".into()))?
            .solve(&(-&f));
        let slope = f.dot(&step);

        // Past this point the predicted decrease is below the resolution of
        // the potential and Armijo comparisons are noise.
        let mut t = 1.0;
        if -slope > 2e-14 * value.abs().max(1.0) {
            while potential(&(&w + &step * t)) > value + opts.armijo * t * slope {
                t *= 0.5;
                if t < 1e-10 {
                    t = 1.0;
                    break;
                }
            }
        }
        w += step * t;
        x = state(&w);
        value = potential(&w);
        history.push(value);
        iterations += 1;
    }
}

pub fn equilibrium_from_rates(
    g: &EGraph,
    k: &RateVector,
    x0: &DVector<f64>,
    sd: &StoichDecomp,
    tol: f64,
    opts: &BirchOptions,
) -> Result<BirchResult> {
    check_positive_state(x0, g.n_species())?;
    let log_eq = solve_log_equilibrium(g, k, sd, tol)?;
    birch_solve(&log_eq.x_star, x0, sd, opts)
}

/// `x0 ↦ x*` for fixed rates. Holds the precomputed `X*`; cheap to query
/// and safe to share across threads.
#[derive(Debug, Clone)]
pub struct EquilibriumMap {
    pub log_equilibrium: LogEquilibrium,
    sd: StoichDecomp,
    opts: BirchOptions,
}

impl EquilibriumMap {
    pub fn solve(&self, x0: &DVector<f64>) -> Result<BirchResult> {
        birch_solve(&self.log_equilibrium.x_star, x0, &self.sd, &self.opts)
    }

    pub fn decomposition(&self) -> &StoichDecomp {
        &self.sd
    }
}

pub fn equilibrium_from_initial(
    g: &EGraph,
    k: &RateVector,
    sd: &StoichDecomp,
    tol: f64,
    opts: &BirchOptions,
) -> Result<EquilibriumMap> {
    Ok(EquilibriumMap {
        log_equilibrium: solve_log_equilibrium(g, k, sd, tol)?,
        sd: sd.clone(),
        opts: *opts,
    })
}

/// `x^y` computed as `exp(y·ln x)`.
pub(crate) fn monomial(log_x: &DVector<f64>, y: &[f64]) -> f64 {
    y.iter()
        .zip(log_x.iter())
        .map(|(a, b)| if *a == 0.0 { 0.0 } else { a * b })
        .sum::<f64>()
        .exp()
}

/// Total inflow and outflow of reaction flux at each vertex.
pub fn vertex_fluxes(g: &EGraph, k: &RateVector, x: &DVector<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    k.check_len(g)?;
    check_positive_state(x, g.n_species())?;
    let log_x = x.map(f64::ln);
    let mut inflow = vec![0.0; g.n_vertices()];
    let mut outflow = vec![0.0; g.n_vertices()];
    for e in g.edges() {
        let flux = k[e.index] * monomial(&log_x, &g.vertices()[e.src].exponents);
        outflow[e.src] += flux;
        inflow[e.dst] += flux;
    }
    Ok((inflow, outflow))
}

/// Per-vertex imbalance `|out − in| / (out + in)`.
pub fn complex_balance_residuals(g: &EGraph, k: &RateVector, x: &DVector<f64>) -> Result<Vec<f64>> {
    let (inflow, outflow) = vertex_fluxes(g, k, x)?;
    Ok(inflow
        .iter()
        .zip(&outflow)
        .map(|(i, o)| {
            let scale = i + o;
            if scale > 0.0 {
                (o - i).abs() / scale
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kirchhoff::DEFAULT_MEMBERSHIP_TOL;
    use crate::netmodel::{parse_network, stoich_decomp};
    use proptest::prelude::*;

    const SEGRE: &str = "3A -> 2A+B : 2.0\n2A+B -> 3A : 3.0\nA+2B <-> 3B : 4.0, 6.0";
    const CYCLE: &str = "A -> B : 1\nB -> C : 2\nC -> A : 3";

    fn setup(text: &str, k: &[f64]) -> (EGraph, RateVector, StoichDecomp) {
        let g = parse_network(text).unwrap();
        let sd = stoich_decomp(&g, lincore::DEFAULT_RANK_TOL);
        (g, RateVector::new(k.to_vec()).unwrap(), sd)
    }

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn segre_log_equilibrium() {
        let (g, k, sd) = setup(SEGRE, &[2.0, 3.0, 4.0, 6.0]);
        let le = solve_log_equilibrium(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL).unwrap();
        let half = 1.5f64.ln() / 2.0;
        assert_eq!(le.method, SolveMethod::Augmented);
        assert!((le.x_star[0] - half).abs() < 1e-14);
        assert!((le.x_star[1] + half).abs() < 1e-14);
    }

    #[test]
    fn symmetric_pair_has_zero_log_equilibrium() {
        let (g, k, sd) = setup("A <-> B : 1, 1", &[4.2, 4.2]);
        let le = solve_log_equilibrium(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert!(le.x_star.amax() < 1e-15);
    }

    /// Brute-force oracle: refine a grid over S (coordinates in the S basis)
    /// to minimize the worst complex-balance imbalance of exp(X).
    fn grid_refined_log_equilibrium(g: &EGraph, k: &RateVector, sd: &StoichDecomp) -> DVector<f64> {
        assert_eq!(sd.s, 2);
        let objective = |a: f64, b: f64| {
            let x = (sd.basis_s.column(0) * a + sd.basis_s.column(1) * b).map(f64::exp);
            complex_balance_residuals(g, k, &x)
                .unwrap()
                .into_iter()
                .fold(0.0, f64::max)
        };
        let (mut ca, mut cb, mut width) = (0.0, 0.0, 4.0);
        for _ in 0..60 {
            let mut best = (f64::INFINITY, ca, cb);
            for i in -10..=10 {
                for j in -10..=10 {
                    let a = ca + width * i as f64 / 10.0;
                    let b = cb + width * j as f64 / 10.0;
                    let val = objective(a, b);
                    if val < best.0 {
                        best = (val, a, b);
                    }
                }
            }
            ca = best.1;
            cb = best.2;
            width *= 0.5;
        }
        sd.basis_s.column(0) * ca + sd.basis_s.column(1) * cb
    }

    #[test]
    fn cycle_log_equilibrium_matches_grid_search() {
        let (g, k, sd) = setup(CYCLE, &[1.0, 2.0, 3.0]);
        let le = solve_log_equilibrium(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL).unwrap();
        let grid = grid_refined_log_equilibrium(&g, &k, &sd);
        assert!((&le.x_star - &grid).amax() < 1e-8, "{} vs {}", le.x_star, grid);
        // closed form: ln K projected onto the sum-zero plane
        let ln_k = vec(&[6f64.ln(), 3f64.ln(), 2f64.ln()]);
        let mean = ln_k.mean();
        assert!((&le.x_star - ln_k.add_scalar(-mean)).amax() < 1e-13);
    }

    #[test]
    fn off_locus_rates_rejected() {
        let (g, k, sd) = setup(SEGRE, &[2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(
            solve_log_equilibrium(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL),
            Err(Error::NotInToricLocus { .. })
        ));
    }

    #[test]
    fn full_rank_network_skips_birch() {
        let (g, k, sd) = setup("0 <-> A : 1, 2\n0 <-> B : 3, 1.5", &[1.0, 2.0, 3.0, 1.5]);
        assert_eq!(sd.s, 2);
        let le = solve_log_equilibrium(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert_eq!(le.method, SolveMethod::FullRank);
        let r = birch_solve(&le.x_star, &vec(&[5.0, 5.0]), &sd, &BirchOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.w.len(), 0);
        // inflow k/outflow: x_A = 1/2, x_B = 3/1.5
        assert!((r.x_star[0] - 0.5).abs() < 1e-14);
        assert!((r.x_star[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn segre_birch_point() {
        let (_, _, sd) = setup(SEGRE, &[2.0, 3.0, 4.0, 6.0]);
        let half = 1.5f64.ln() / 2.0;
        let r = birch_solve(&vec(&[half, -half]), &vec(&[1.0, 1.0]), &sd, &BirchOptions::default()).unwrap();
        assert!((r.x_star[0] - 1.2).abs() < 1e-12);
        assert!((r.x_star[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn birch_point_on_both_sets_is_fixed() {
        let (_, _, sd) = setup(CYCLE, &[1.0, 1.0, 1.0]);
        let x_log = vec(&[0.3, -0.1, -0.2]);
        let r = birch_solve(&x_log, &x_log.map(f64::exp), &sd, &BirchOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.w.amax() < 1e-15);
    }

    #[test]
    fn degenerate_basis_rejected() {
        let (_, _, mut sd) = setup(SEGRE, &[2.0, 3.0, 4.0, 6.0]);
        sd.basis_sperp *= 2.0;
        assert!(matches!(
            birch_solve(&vec(&[0.0, 0.0]), &vec(&[1.0, 1.0]), &sd, &BirchOptions::default()),
            Err(Error::DegenerateBasis(_))
        ));
    }

    #[test]
    fn max_iterations_reported() {
        let (_, _, sd) = setup(SEGRE, &[2.0, 3.0, 4.0, 6.0]);
        let opts = BirchOptions {
            max_iter: 1,
            ..Default::default()
        };
        let err = birch_solve(&vec(&[0.0, 0.0]), &vec(&[50.0, 1.0]), &sd, &opts).unwrap_err();
        assert!(matches!(err, Error::MaxIterations { iterations: 1, .. }));
    }

    #[test]
    fn rates_examples() {
        let opts = BirchOptions::default();
        let (g, k, sd) = setup(SEGRE, &[2.0, 3.0, 4.0, 6.0]);
        let r = equilibrium_from_rates(&g, &k, &vec(&[1.0, 1.0]), &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
        assert!((&r.x_star - vec(&[1.2, 0.8])).amax() < 1e-12);

        let (g, k, sd) = setup("A <-> B : 2, 3", &[2.0, 3.0]);
        let r = equilibrium_from_rates(&g, &k, &vec(&[1.0, 1.0]), &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
        assert!((&r.x_star - vec(&[1.2, 0.8])).amax() < 1e-12);

        let (g, k, sd) = setup("A <-> B : 1, 1", &[0.7, 0.7]);
        let r = equilibrium_from_rates(&g, &k, &vec(&[0.3, 2.1]), &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
        assert!((&r.x_star - vec(&[1.2, 1.2])).amax() < 1e-12);
    }

    #[test]
    fn initial_map_examples() {
        let opts = BirchOptions::default();
        let (g, k, sd) = setup(SEGRE, &[2.0, 3.0, 4.0, 6.0]);
        let map = equilibrium_from_initial(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
        let a = map.solve(&vec(&[1.0, 1.0])).unwrap();
        assert!((&a.x_star - vec(&[1.2, 0.8])).amax() < 1e-12);
        let b = map.solve(&vec(&[2.0, 2.0])).unwrap();
        assert!((&b.x_star - vec(&[2.4, 1.6])).amax() < 1e-12);
        let again = map.solve(&a.x_star).unwrap();
        assert!((&again.x_star - &a.x_star).amax() < 1e-14);

        let (g, k, sd) = setup(CYCLE, &[1.0, 2.0, 3.0]);
        let map = equilibrium_from_initial(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
        let r = map.solve(&vec(&[1.0, 1.0, 1.0])).unwrap();
        assert!((&r.x_star - vec(&[18.0 / 11.0, 9.0 / 11.0, 6.0 / 11.0])).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn birch_invariants(
            x_log in proptest::collection::vec(-2.0f64..2.0, 4),
            x0 in proptest::collection::vec(0.05f64..5.0, 4),
        ) {
            let (_, _, sd) = setup("E + S <-> ES : 1, 1\nES <-> E + P : 1, 1", &[1.0; 4]);
            let x_log = vec(&x_log);
            let x0 = vec(&x0);
            let r = birch_solve(&x_log, &x0, &sd, &BirchOptions::default()).unwrap();
            prop_assert!(sd.distance_from_sperp(&(r.x_star.map(f64::ln) - &x_log)) < 1e-9);
            prop_assert!(sd.distance_from_s(&(&r.x_star - &x0)) < 1e-9);
            for w in r.potential_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
            }
        }

        #[test]
        fn rates_and_initial_maps_agree(
            k in proptest::collection::vec(0.1f64..10.0, 3),
            x0 in proptest::collection::vec(0.05f64..5.0, 3),
        ) {
            let (g, k, sd) = setup(CYCLE, &k);
            let x0 = vec(&x0);
            let opts = BirchOptions::default();
            let direct = equilibrium_from_rates(&g, &k, &x0, &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
            let map = equilibrium_from_initial(&g, &k, &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
            let via_map = map.solve(&x0).unwrap();
            prop_assert!((&direct.x_star - &via_map.x_star).amax() <= 1e-12 * direct.x_star.amax());
            let residuals = complex_balance_residuals(&g, &k, &direct.x_star).unwrap();
            prop_assert!(residuals.iter().all(|r| *r <= 1e-8));
        }
    }
}
