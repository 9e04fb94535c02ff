//! Complex-balanced fluxes and the embedding `(x, β) ↦ k`.
//!
//! A flux vector `β` is balanced when inflow equals outflow at every vertex.
//! The map `φ(x, β)_e = β_e / x^{y_src(e)}` sends positive balanced fluxes to
//! toric rate vectors; its inverse recovers `x` as the complex-balanced
//! equilibrium of `k` in the class of a reference state and `β = k ∘ x^y`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

use crate::equilibrium::{self, check_positive_state, monomial, BirchOptions};
use crate::error::{Error, Result};
use crate::kirchhoff::RateVector;
use crate::lincore;
use crate::netmodel::{is_weakly_reversible, EGraph, StoichDecomp};

/// Balance defects up to this multiple of `max |β|` are accepted.
pub const BALANCE_TOL: f64 = 1e-10;

/// Singular values below this fraction of the largest count as zero in the
/// immersion rank check.
pub const IMMERSION_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FluxVector {
    values: Vec<f64>,
    positive: bool,
}

impl FluxVector {
    pub fn new(values: Vec<f64>) -> Self {
        let positive = values.iter().all(|v| *v > 0.0);
        FluxVector { values, positive }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxSpace {
    /// `m × |E|`: +1 where the edge enters the vertex, −1 where it leaves.
    pub balance_matrix: DMatrix<f64>,
    /// `|E| × dim`, orthonormal columns spanning the kernel.
    pub basis: DMatrix<f64>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPoint {
    pub x: DVector<f64>,
    pub beta: FluxVector,
    pub k: RateVector,
}

impl EmbeddingPoint {
    pub fn new(g: &EGraph, x: DVector<f64>, beta: FluxVector) -> Result<Self> {
        let k = phi_embedding(&x, &beta, g)?;
        Ok(EmbeddingPoint { x, beta, k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankCheck {
    pub rank: usize,
    pub expected: usize,
    pub pass: bool,
}

pub fn balance_matrix(g: &EGraph) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(g.n_vertices(), g.n_edges());
    for e in g.edges() {
        b[(e.dst, e.index)] += 1.0;
        b[(e.src, e.index)] -= 1.0;
    }
    b
}

pub fn flux_space(g: &EGraph, rank_tol: f64) -> FluxSpace {
    let balance_matrix = balance_matrix(g);
    let basis = lincore::orthonormal_nullspace(&balance_matrix, rank_tol);
    FluxSpace {
        dim: basis.ncols(),
        balance_matrix,
        basis,
    }
}

/// Largest vertex imbalance `|in − out|` of `beta`, with its vertex.
pub fn balance_defect(g: &EGraph, beta: &[f64]) -> (usize, f64) {
    let residual = balance_matrix(g) * DVector::from_column_slice(beta);
    residual
        .iter()
        .enumerate()
        .map(|(v, r)| (v, r.abs()))
        .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc })
}

fn check_balanced(g: &EGraph, beta: &FluxVector) -> Result<()> {
    if beta.len() != g.n_edges() {
        return Err(Error::DimensionMismatch {
            what: "flux vector",
            expected: g.n_edges(),
            found: beta.len(),
        });
    }
    let scale = beta.as_slice().iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
    let (vertex, defect) = balance_defect(g, beta.as_slice());
    if defect > BALANCE_TOL * scale {
        return Err(Error::UnbalancedFlux { vertex, defect });
    }
    Ok(())
}

/// Shortest directed path `from → … → to` as a list of edge indices.
fn shortest_path(g: &EGraph, from: usize, to: usize) -> Option<Vec<usize>> {
    let mut via: Vec<Option<usize>> = vec![None; g.n_vertices()];
    let mut seen = vec![false; g.n_vertices()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = Vec::new();
            let mut cur = to;
            while let Some(e) = via[cur] {
                path.push(e);
                cur = g.edges()[e].src;
            }
            path.reverse();
            return Some(path);
        }
        for e in g.edges().iter().filter(|e| e.src == v) {
            if !seen[e.dst] {
                seen[e.dst] = true;
                via[e.dst] = Some(e.index);
                queue.push_back(e.dst);
            }
        }
    }
    None
}

/// Strictly positive balanced flux: one directed cycle through every edge,
/// each weighted by a seeded draw from `[0.5, 1.5]`.
pub fn sample_flux(g: &EGraph, fs: &FluxSpace, seed: u64) -> Result<FluxVector> {
    if !is_weakly_reversible(g) {
        return Err(Error::NotWeaklyReversible(
            "no strictly positive balanced flux exists".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; g.n_edges()];
    for e in g.edges() {
        let back = shortest_path(g, e.dst, e.src)
            .ok_or_else(|| Error::NotWeaklyReversible(format!("edge {} lies on no cycle", e.index)))?;
        let weight: f64 = rng.random_range(0.5..1.5);
        values[e.index] += weight;
        for i in back {
            values[i] += weight;
        }
    }
    let beta = FluxVector::new(values);
    let residual = (&fs.balance_matrix * DVector::from_column_slice(beta.as_slice())).amax();
    debug_assert!(residual <= 1e-12 * beta.as_slice().iter().cloned().fold(1.0, f64::max));
    Ok(beta)
}

/// `k_e = β_e / x^{y_src(e)}`.
pub fn phi_embedding(x: &DVector<f64>, beta: &FluxVector, g: &EGraph) -> Result<RateVector> {
    check_positive_state(x, g.n_species())?;
    check_balanced(g, beta)?;
    RateVector::new(phi_hat(x, beta.as_slice(), g).iter().cloned().collect())
}

/// The unchecked extension of [`phi_embedding`] to arbitrary `β`.
pub fn phi_hat(x: &DVector<f64>, beta: &[f64], g: &EGraph) -> DVector<f64> {
    let log_x = x.map(f64::ln);
    DVector::from_iterator(
        g.n_edges(),
        g.edges()
            .iter()
            .map(|e| beta[e.index] / monomial(&log_x, &g.vertices()[e.src].exponents)),
    )
}

/// Recovers `(x, β)` from a toric rate vector, with `x` the equilibrium in
/// the class of `x0`.
pub fn phi_inverse(
    g: &EGraph,
    k: &RateVector,
    x0: &DVector<f64>,
    sd: &StoichDecomp,
    tol: f64,
    opts: &BirchOptions,
) -> Result<(DVector<f64>, FluxVector)> {
    let x = equilibrium::equilibrium_from_rates(g, k, x0, sd, tol, opts)?.x_star;
    let log_x = x.map(f64::ln);
    let beta = g
        .edges()
        .iter()
        .map(|e| k[e.index] * monomial(&log_x, &g.vertices()[e.src].exponents))
        .collect();
    Ok((x, FluxVector::new(beta)))
}

/// Analytic Jacobian of `φ̂` at `(x, β)`, `|E| × (n + |E|)`.
///
/// Row `e`: `∂/∂x_j = −(β_e / x^y)·y_j / x_j`, `∂/∂β_e = 1 / x^y`.
pub fn phi_hat_jacobian(x: &DVector<f64>, beta: &[f64], g: &EGraph) -> DMatrix<f64> {
    let n = g.n_species();
    let log_x = x.map(f64::ln);
    let mut jac = DMatrix::zeros(g.n_edges(), n + g.n_edges());
    for e in g.edges() {
        let y = &g.vertices()[e.src].exponents;
        let inv_mono = 1.0 / monomial(&log_x, y);
        for j in 0..n {
            if y[j] != 0.0 {
                jac[(e.index, j)] = -beta[e.index] * inv_mono * y[j] / x[j];
            }
        }
        jac[(e.index, n + e.index)] = inv_mono;
    }
    jac
}

/// Central-difference Jacobian of `φ̂`, step `1e-6·max(|z_j|, 1e-8)`.
pub fn phi_hat_jacobian_fd(x: &DVector<f64>, beta: &[f64], g: &EGraph) -> DMatrix<f64> {
    let n = g.n_species();
    let mut jac = DMatrix::zeros(g.n_edges(), n + g.n_edges());
    for j in 0..n + g.n_edges() {
        let eval = |delta: f64| {
            let mut xx = x.clone();
            let mut bb = beta.to_vec();
            if j < n {
                xx[j] += delta;
            } else {
                bb[j - n] += delta;
            }
            phi_hat(&xx, &bb, g)
        };
        let z = if j < n { x[j] } else { beta[j - n] };
        let h = 1e-6 * z.abs().max(1e-8);
        jac.set_column(j, &((eval(h) - eval(-h)) / (2.0 * h)));
    }
    jac
}

/// Worst entrywise relative error between the analytic and finite-difference
/// Jacobians. Entries that vanish analytically are compared against the
/// matrix scale.
pub fn jacobian_fd_error(x: &DVector<f64>, beta: &[f64], g: &EGraph) -> f64 {
    let analytic = phi_hat_jacobian(x, beta, g);
    let numeric = phi_hat_jacobian_fd(x, beta, g);
    let scale = analytic.amax();
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, f)| (a - f).abs() / a.abs().max(1e-12 * scale).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Rank of the Jacobian of `φ̂` restricted to the tangent space `S × B̃(G)`.
pub fn immersion_rank_check(
    x: &DVector<f64>,
    beta: &[f64],
    g: &EGraph,
    sd: &StoichDecomp,
    fs: &FluxSpace,
) -> RankCheck {
    let n = g.n_species();
    let ne = g.n_edges();
    let expected = sd.s + fs.dim;
    let mut tangent = DMatrix::zeros(n + ne, expected);
    tangent.view_mut((0, 0), (n, sd.s)).copy_from(&sd.basis_s);
    tangent.view_mut((n, sd.s), (ne, fs.dim)).copy_from(&fs.basis);
    let restricted = phi_hat_jacobian(x, beta, g) * tangent;
    let rank = lincore::numerical_rank(&restricted, IMMERSION_RANK_TOL);
    RankCheck {
        rank,
        expected,
        pass: rank == expected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kirchhoff::{toric_membership, DEFAULT_MEMBERSHIP_TOL};
    use crate::netmodel::{parse_network, stoich_decomp};
    use proptest::prelude::*;

    const SEGRE: &str = "3A -> 2A+B : 2.0\n2A+B -> 3A : 3.0\nA+2B <-> 3B : 4.0, 6.0";
    const CYCLE: &str = "A -> B : 1\nB -> C : 1\nC -> A : 1";

    fn graph(text: &str) -> (EGraph, StoichDecomp, FluxSpace) {
        let g = parse_network(text).unwrap();
        let sd = stoich_decomp(&g, lincore::DEFAULT_RANK_TOL);
        let fs = flux_space(&g, lincore::DEFAULT_RANK_TOL);
        (g, sd, fs)
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn flux_space_dimensions() {
        let (_, _, fs) = graph(CYCLE);
        assert_eq!(fs.dim, 1);
        let c = 1.0 / 3f64.sqrt();
        assert!(fs.basis.iter().all(|b| (b - c).abs() < 1e-14));
        let (_, _, fs) = graph("A <-> B : 1, 1");
        assert_eq!(fs.dim, 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(fs.basis.iter().all(|b| (b - h).abs() < 1e-14));
        let (_, _, fs) = graph(SEGRE);
        assert_eq!(fs.dim, 2);
    }

    #[test]
    fn sampled_flux_shapes() {
        let (g, _, fs) = graph(CYCLE);
        for seed in [0, 1, 99] {
            let b = sample_flux(&g, &fs, seed).unwrap();
            let s = b.as_slice();
            assert!(s[0] > 0.0 && (s[1] - s[0]).abs() < 1e-15 && (s[2] - s[0]).abs() < 1e-15);
        }
        let (g, _, fs) = graph(SEGRE);
        let b = sample_flux(&g, &fs, 42).unwrap();
        let s = b.as_slice();
        assert!(b.is_positive());
        assert_eq!(s[0], s[1]);
        assert_eq!(s[2], s[3]);
        assert_eq!(sample_flux(&g, &fs, 42).unwrap(), b);
        assert_ne!(sample_flux(&g, &fs, 43).unwrap(), b);
    }

    #[test]
    fn sample_flux_requires_weak_reversibility() {
        let (g, _, fs) = graph("A -> B : 1");
        assert!(matches!(sample_flux(&g, &fs, 0), Err(Error::NotWeaklyReversible(_))));
    }

    #[test]
    fn embedding_examples() {
        let (g, _, _) = graph(SEGRE);
        let k = phi_embedding(&v(&[1.0, 1.0]), &FluxVector::new(vec![1.0; 4]), &g).unwrap();
        assert_eq!(k.as_slice(), &[1.0; 4]);

        let x = v(&[1.2, 0.8]);
        let target = [2.0, 3.0, 4.0, 6.0];
        let beta: Vec<f64> = g
            .edges()
            .iter()
            .map(|e| {
                let y = &g.vertices()[e.src].exponents;
                target[e.index] * x[0].powf(y[0]) * x[1].powf(y[1])
            })
            .collect();
        let k = phi_embedding(&x, &FluxVector::new(beta), &g).unwrap();
        for (a, b) in k.as_slice().iter().zip(target) {
            assert!((a - b).abs() < 1e-12 * b);
        }

        let (g, _, _) = graph(CYCLE);
        let k = phi_embedding(&v(&[1.0; 3]), &FluxVector::new(vec![1.0; 3]), &g).unwrap();
        assert_eq!(k.as_slice(), &[1.0; 3]);
        assert!(toric_membership(&g, &k, DEFAULT_MEMBERSHIP_TOL).unwrap().is_member);
    }

    #[test]
    fn unbalanced_flux_rejected() {
        let (g, _, _) = graph(SEGRE);
        let err = phi_embedding(&v(&[1.0, 1.0]), &FluxVector::new(vec![1.0, 2.0, 1.0, 1.0]), &g).unwrap_err();
        assert!(matches!(err, Error::UnbalancedFlux { defect, .. } if (defect - 1.0).abs() < 1e-15));
    }

    #[test]
    fn inverse_examples() {
        let (g, sd, _) = graph(SEGRE);
        let opts = BirchOptions::default();
        let k = RateVector::new(vec![2.0, 3.0, 4.0, 6.0]).unwrap();
        let (x, beta) = phi_inverse(&g, &k, &v(&[1.0, 1.0]), &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
        assert!((&x - v(&[1.2, 0.8])).amax() < 1e-12);
        let b = beta.as_slice();
        assert!((b[0] - 3.456).abs() < 1e-12 && (b[1] - 3.456).abs() < 1e-12);
        // 4 · 1.2 · 0.8² and 6 · 0.8³
        assert!((b[2] - 3.072).abs() < 1e-12 && (b[3] - 3.072).abs() < 1e-12);

        let k = RateVector::new(vec![1.0; 4]).unwrap();
        let (x, beta) = phi_inverse(&g, &k, &v(&[1.0, 1.0]), &sd, DEFAULT_MEMBERSHIP_TOL, &opts).unwrap();
        assert!((&x - v(&[1.0, 1.0])).amax() < 1e-14);
        assert!(beta.as_slice().iter().all(|b| (b - 1.0).abs() < 1e-14));
    }

    #[test]
    fn jacobian_at_unit_state() {
        let (g, _, _) = graph(SEGRE);
        let beta = [0.5, 1.5, 2.0, 0.25];
        let jac = phi_hat_jacobian(&v(&[1.0, 1.0]), &beta, &g);
        for e in g.edges() {
            let y = &g.vertices()[e.src].exponents;
            assert_eq!(jac[(e.index, 0)], -beta[e.index] * y[0]);
            assert_eq!(jac[(e.index, 1)], -beta[e.index] * y[1]);
            for f in 0..4 {
                assert_eq!(jac[(e.index, 2 + f)], if f == e.index { 1.0 } else { 0.0 });
            }
        }
        let zero = phi_hat_jacobian(&v(&[2.0, 0.5]), &[0.0; 4], &g);
        assert!(zero.columns(0, 2).iter().all(|a| *a == 0.0));
        assert!((zero[(0, 2)] - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn rank_examples() {
        let (g, sd, fs) = graph(SEGRE);
        let k = RateVector::new(vec![2.0, 3.0, 4.0, 6.0]).unwrap();
        let (x, beta) = phi_inverse(
            &g,
            &k,
            &v(&[1.0, 1.0]),
            &sd,
            DEFAULT_MEMBERSHIP_TOL,
            &BirchOptions::default(),
        )
        .unwrap();
        assert_eq!(
            immersion_rank_check(&x, beta.as_slice(), &g, &sd, &fs),
            RankCheck {
                rank: 3,
                expected: 3,
                pass: true
            }
        );

        let (g, sd, fs) = graph("A <-> B : 1, 1");
        let r = immersion_rank_check(&v(&[0.3, 2.0]), &[1.7, 1.7], &g, &sd, &fs);
        assert_eq!((r.rank, r.expected, r.pass), (2, 2, true));

        let (g, sd, fs) = graph(CYCLE);
        let r = immersion_rank_check(&v(&[1.0; 3]), &[1.0; 3], &g, &sd, &fs);
        assert_eq!((r.rank, r.expected, r.pass), (3, 3, true));
    }

    proptest! {
        #[test]
        fn embedding_lands_in_locus_and_inverts(
            x in proptest::collection::vec(0.2f64..5.0, 2),
            seed in any::<u64>(),
        ) {
            let (g, sd, fs) = graph(SEGRE);
            let x = v(&x);
            let beta = sample_flux(&g, &fs, seed).unwrap();
            prop_assert!(balance_defect(&g, beta.as_slice()).1 <= 1e-12);
            let k = phi_embedding(&x, &beta, &g).unwrap();
            let m = toric_membership(&g, &k, DEFAULT_MEMBERSHIP_TOL).unwrap();
            prop_assert!(m.is_member && m.residual <= 1e-9);
            let (x_back, beta_back) = phi_inverse(&g, &k, &x, &sd, DEFAULT_MEMBERSHIP_TOL, &BirchOptions::default()).unwrap();
            prop_assert!(((&x_back - &x).abs().component_div(&x)).amax() < 1e-8);
            for (a, b) in beta_back.as_slice().iter().zip(beta.as_slice()) {
                prop_assert!((a - b).abs() < 1e-8 * b);
            }
            prop_assert!(jacobian_fd_error(&x, beta.as_slice(), &g) <= 1e-6);
        }
    }
}
