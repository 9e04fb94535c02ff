//! Kirchhoff matrices, tree constants and toric-locus membership.
//!
//! For a weakly reversible network with rates `k`, a positive state `x` is a
//! complex-balanced equilibrium iff `K_i x^{y_j} = K_j x^{y_i}` for every
//! pair of vertices in the same linkage class, where `K_i` is the signed
//! principal minor of the class's Kirchhoff matrix. In log coordinates this
//! is the linear system `ln(K_i / K_j) = (y_i − y_j)·X`, and `k` lies in the
//! toric locus iff the system is consistent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lincore;
use crate::netmodel::{is_weakly_reversible, EGraph};

/// Default tolerance on the least-squares residual of the log system.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// Tree constants below this fraction of their class maximum count as zero.
pub const STRUCTURAL_ZERO: f64 = 1e-14;

/// Strictly positive rate constants indexed by edge.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(Vec<f64>);

impl RateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NonPositiveRate { index, value });
        }
        Ok(RateVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        RateVector::new(self.0.iter().map(|k| k * c).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn check_len(&self, g: &EGraph) -> Result<()> {
        if self.len() != g.n_edges() {
            return Err(Error::DimensionMismatch {
                what: "rate vector",
                expected: g.n_edges(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for RateVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KirchhoffData {
    /// One matrix per linkage class, rows/columns in component vertex order.
    pub matrices: Vec<DMatrix<f64>>,
    /// `K_i` for every vertex, indexed by global vertex index.
    pub tree_constants: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembershipResult {
    pub is_member: bool,
    /// Minimum-norm least-squares solution of the log system.
    pub log_solution: DVector<f64>,
    pub residual: f64,
    pub tolerance_used: f64,
}

/// Column-Laplacian of one linkage class: `[A]_{ji} = k_{i→j}` off the
/// diagonal and `[A]_{ii} = −Σ_j k_{i→j}`.
pub fn kirchhoff_matrix(g: &EGraph, k: &RateVector, component: usize) -> DMatrix<f64> {
    let members = &g.components()[component];
    let local = |v: usize| members.binary_search(&v).ok();
    let mut a = DMatrix::zeros(members.len(), members.len());
    for e in g.edges() {
        if let (Some(i), Some(j)) = (local(e.src), local(e.dst)) {
            let rate = k[e.index];
            a[(j, i)] += rate;
            a[(i, i)] -= rate;
        }
    }
    a
}

/// Kirchhoff matrices and sign-normalized tree constants
/// `K_i = (−1)^{|V_p|−1} · minor_ii(A_k)`.
pub fn kirchhoff_data(g: &EGraph, k: &RateVector) -> Result<KirchhoffData> {
    k.check_len(g)?;
    if !is_weakly_reversible(g) {
        return Err(Error::NotWeaklyReversible(
            "some linkage class is not strongly connected".into(),
        ));
    }
    let mut tree_constants = vec![0.0; g.n_vertices()];
    let mut matrices = Vec::with_capacity(g.components().len());
    for (p, members) in g.components().iter().enumerate() {
        let a = kirchhoff_matrix(g, k, p);
        let sign = if (members.len() - 1) % 2 == 0 { 1.0 } else { -1.0 };
        let local: Vec<f64> = (0..members.len())
            .map(|i| sign * lincore::principal_minor(&a, i))
            .collect();
        let max = local.iter().cloned().fold(0.0, f64::max);
        if let Some(i) = local.iter().position(|&c| c <= STRUCTURAL_ZERO * max || c <= 0.0) {
            return Err(Error::NotWeaklyReversible(format!(
                "tree constant of vertex `{}` is numerically zero ({:.3e})",
                g.vertices()[members[i]].label,
                local[i]
            )));
        }
        for (&v, c) in members.iter().zip(local) {
            tree_constants[v] = c;
        }
        matrices.push(a);
    }
    Ok(KirchhoffData {
        matrices,
        tree_constants,
    })
}

pub fn tree_constants(g: &EGraph, k: &RateVector) -> Result<Vec<f64>> {
    kirchhoff_data(g, k).map(|d| d.tree_constants)
}

/// Log-linear binomial system over consecutive vertex pairs of each linkage
/// class.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSystem {
    /// Rows `y_a − y_b`.
    pub delta_y: DMatrix<f64>,
    /// Entries `ln(K_a / K_b)`.
    pub log_delta_k: DVector<f64>,
    /// `(a, b)` vertex pair behind each row.
    pub pairs: Vec<(usize, usize)>,
}

pub fn log_system(g: &EGraph, tree_constants: &[f64]) -> LogSystem {
    let pairs: Vec<(usize, usize)> = g
        .components()
        .iter()
        .flat_map(|c| c.windows(2).map(|w| (w[0], w[1])))
        .collect();
    let n = g.n_species();
    let mut delta_y = DMatrix::zeros(pairs.len(), n);
    let mut log_delta_k = DVector::zeros(pairs.len());
    for (row, &(a, b)) in pairs.iter().enumerate() {
        delta_y.set_row(row, &(g.exponents(a) - g.exponents(b)).transpose());
        log_delta_k[row] = tree_constants[a].ln() - tree_constants[b].ln();
    }
    LogSystem {
        delta_y,
        log_delta_k,
        pairs,
    }
}

/// Decides whether `k` lies in the toric locus by the consistency of the log
/// binomial system.
pub fn toric_membership(g: &EGraph, k: &RateVector, tol: f64) -> Result<MembershipResult> {
    let tc = tree_constants(g, k)?;
    let sys = log_system(g, &tc);
    let ls = lincore::least_squares(&sys.delta_y, &sys.log_delta_k);
    Ok(MembershipResult {
        is_member: ls.residual_norm <= tol,
        log_solution: ls.solution,
        residual: ls.residual_norm,
        tolerance_used: tol,
    })
}
