//! Finite-difference probes of `x*` as a function of `x0` or of `k`.

use nalgebra::{DMatrix, DVector};

use super::{check_positive_state, equilibrium_from_initial, equilibrium_from_rates, BirchOptions};
use crate::error::{Error, Result};
use crate::fluxcone::{self, FluxVector};
use crate::kirchhoff::RateVector;
use crate::lincore;
use crate::netmodel::{EGraph, StoichDecomp};

/// Step sizes used when the caller does not choose: three halvings.
pub const DEFAULT_PROBE_STEPS: [f64; 4] = [0.04, 0.02, 0.01, 0.005];

/// Differences below this multiple of the estimate scale are treated as
/// round-off, and the Richardson ratio is reported as undefined.
const NOISE_FLOOR: f64 = 1e-9;

/// A one-parameter curve through the base point, evaluated at `±h`.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// `x0 + h·d`
    Initial(DVector<f64>),
    /// `x0 ∘ exp(h·d)`
    InitialLog(DVector<f64>),
    /// `k + h·d`; every perturbed rate vector must stay in the toric locus.
    Rates(DVector<f64>),
    /// `k ∘ exp(h·d)`; every perturbed rate vector must stay in the toric locus.
    RatesLog(DVector<f64>),
    /// Log-rate direction `d` projected onto the tangent space of the toric
    /// locus at `k`; the curve is `φ(x̂ ∘ exp(h·u), β̂ + h·b)` where
    /// `(x̂, β̂)` are the flux coordinates of `k` and `(u, b)` fit `d` in
    /// least squares. Stays on the locus by construction.
    RatesOnLocus(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub steps: Vec<f64>,
    /// Central-difference estimate of `d x*/dh` for each step.
    pub estimates: Vec<DVector<f64>>,
    /// `‖D_i − D_{i+1}‖ / ‖D_{i+1} − D_{i+2}‖`; about 4 for smooth curves
    /// when steps halve. `None` when the differences are round-off.
    pub richardson_ratios: Vec<Option<f64>>,
    /// Tangent direction actually followed (the projected direction for
    /// [`Perturbation::RatesOnLocus`]).
    pub direction_used: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn smooth_dependence_probe(
    g: &EGraph,
    k: &RateVector,
    x0: &DVector<f64>,
    sd: &StoichDecomp,
    tol: f64,
    opts: &BirchOptions,
    perturbation: &Perturbation,
    steps: &[f64],
) -> Result<ProbeResult> {
    check_positive_state(x0, g.n_species())?;
    k.check_len(g)?;
    let n = g.n_species();
    let expect_len = |d: &DVector<f64>, len: usize| {
        if d.len() != len {
            return Err(Error::DimensionMismatch {
                what: "probe direction",
                expected: len,
                found: d.len(),
            });
        }
        Ok(())
    };

    let curve: Box<dyn Fn(f64) -> Result<DVector<f64>> + '_>;
    let direction_used;
    match perturbation {
        Perturbation::Initial(d) | Perturbation::InitialLog(d) => {
            expect_len(d, n)?;
            let map = equilibrium_from_initial(g, k, sd, tol, opts)?;
            let log = matches!(perturbation, Perturbation::InitialLog(_));
            direction_used = d.clone();
            curve = Box::new(move |h| {
                let x = if log {
                    x0.zip_map(d, |a, b| a * (h * b).exp())
                } else {
                    x0 + d * h
                };
                map.solve(&x).map(|r| r.x_star)
            });
        }
        Perturbation::Rates(d) | Perturbation::RatesLog(d) => {
            expect_len(d, g.n_edges())?;
            let log = matches!(perturbation, Perturbation::RatesLog(_));
            direction_used = d.clone();
            curve = Box::new(move |h| {
                let values = k
                    .as_slice()
                    .iter()
                    .zip(d.iter())
                    .map(|(a, b)| if log { a * (h * b).exp() } else { a + h * b })
                    .collect();
                let kh = RateVector::new(values)?;
                equilibrium_from_rates(g, &kh, x0, sd, tol, opts).map(|r| r.x_star)
            });
        }
        Perturbation::RatesOnLocus(d) => {
            expect_len(d, g.n_edges())?;
            let fs = fluxcone::flux_space(g, lincore::DEFAULT_RANK_TOL);
            let (x_hat, beta) = fluxcone::phi_inverse(g, k, x0, sd, tol, opts)?;
            let beta_vals = DVector::from_column_slice(beta.as_slice());
            // d ln k = −Y_src·u + diag(1/β)·B·b
            let y_src = g.source_matrix();
            let flux_part = DMatrix::from_diagonal(&beta_vals.map(|b| 1.0 / b)) * &fs.basis;
            let mut tangent = DMatrix::zeros(g.n_edges(), n + fs.dim);
            tangent.view_mut((0, 0), (g.n_edges(), n)).copy_from(&(-&y_src));
            tangent.view_mut((0, n), (g.n_edges(), fs.dim)).copy_from(&flux_part);
            let fit = lincore::least_squares(&tangent, d);
            let u = fit.solution.rows(0, n).into_owned();
            let db = &fs.basis * fit.solution.rows(n, fs.dim);
            direction_used = &tangent * &fit.solution;
            curve = Box::new(move |h| {
                let x = x_hat.zip_map(&u, |a, b| a * (h * b).exp());
                let beta_h = FluxVector::new((&beta_vals + &db * h).iter().cloned().collect());
                let kh = fluxcone::phi_embedding(&x, &beta_h, g)?;
                equilibrium_from_rates(g, &kh, x0, sd, tol, opts).map(|r| r.x_star)
            });
        }
    }

    let estimates = steps
        .iter()
        .map(|&h| Ok((curve(h)? - curve(-h)?) / (2.0 * h)))
        .collect::<Result<Vec<_>>>()?;
    let scale = estimates.iter().map(|e| e.norm()).fold(1.0, f64::max);
    let diffs: Vec<f64> = estimates.windows(2).map(|w| (&w[0] - &w[1]).norm()).collect();
    let richardson_ratios = diffs
        .windows(2)
        .map(|w| {
            if w[1] <= NOISE_FLOOR * scale {
                None
            } else {
                Some(w[0] / w[1])
            }
        })
        .collect();
    Ok(ProbeResult {
        steps: steps.to_vec(),
        estimates,
        richardson_ratios,
        direction_used,
    })
}
