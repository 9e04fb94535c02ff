//! Mass-action ODE `dx/dt = Σ_e k_e x^{y_src(e)} (y_dst(e) − y_src(e))`.

use std::io::{self, Write};

use nalgebra::DVector;

use crate::equilibrium::{check_positive_state, monomial};
use crate::error::{Error, Result};
use crate::kirchhoff::RateVector;
use crate::lincore;
use crate::netmodel::{stoich_decomp, EGraph};

pub fn mass_action_rhs(g: &EGraph, k: &RateVector, x: &DVector<f64>) -> Result<DVector<f64>> {
    k.check_len(g)?;
    check_positive_state(x, g.n_species())?;
    Ok(rhs_unchecked(g, k, x))
}

fn rhs_unchecked(g: &EGraph, k: &RateVector, x: &DVector<f64>) -> DVector<f64> {
    let log_x = x.map(f64::ln);
    let mut out = DVector::zeros(g.n_species());
    for e in g.edges() {
        let flux = k[e.index] * monomial(&log_x, &g.vertices()[e.src].exponents);
        out.axpy(flux, &g.reaction_vector(e.index), 1.0);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen from the RHS magnitude when `None`.
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-8,
            atol: 1e-10,
            initial_step: None,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `max_t |v_i·(x(t) − x0)|` for each `S⊥` basis vector `v_i`.
    pub conserved_drift: Vec<f64>,
    /// Tolerances the trajectory was computed with.
    pub rtol: f64,
    pub atol: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV with header `t,x1,...,xn`, one row per accepted step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(out, "{t}")?;
            for v in x.iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

// Dormand-Prince 5(4)
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One trial step; `None` if a stage or the result leaves the open orthant.
fn try_step(
    g: &EGraph,
    k: &RateVector,
    x: &DVector<f64>,
    k1: &DVector<f64>,
    h: f64,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let mut stages: Vec<DVector<f64>> = Vec::with_capacity(7);
    stages.push(k1.clone());
    for (i, row) in A.iter().enumerate().skip(1) {
        let mut xi = x.clone();
        for (j, a) in row.iter().enumerate().take(i) {
            if *a != 0.0 {
                xi.axpy(h * a, &stages[j], 1.0);
            }
        }
        if xi.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return None;
        }
        if i == 6 {
            // FSAL: stage 7 is evaluated at the 5th-order solution
            let f = rhs_unchecked(g, k, &xi);
            stages.push(f);
            let mut err = DVector::zeros(x.len());
            for (s, stage) in stages.iter().enumerate() {
                err.axpy(h * (B5[s] - B4[s]), stage, 1.0);
            }
            let last = stages.pop().expect("seven stages");
            return Some((xi, err, last));
        }
        stages.push(rhs_unchecked(g, k, &xi));
    }
    unreachable!("the tableau has seven stages")
}

fn scaled_rms(v: &DVector<f64>, x: &DVector<f64>, opts: &IntegratorOptions) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(x.iter())
        .map(|(a, b)| (a / (opts.atol + opts.rtol * b.abs())).powi(2))
        .sum();
    (sum / v.len().max(1) as f64).sqrt()
}

// Hairer, Norsett & Wanner starting step, with a second RHS evaluation
// from an explicit Euler step.
fn initial_step(
    g: &EGraph,
    k: &RateVector,
    x: &DVector<f64>,
    f: &DVector<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
) -> f64 {
    let d0 = scaled_rms(x, x, opts);
    let d1 = scaled_rms(f, x, opts);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(t_end);
    let mut x1 = x + f * h0;
    while x1.iter().any(|v| *v <= 0.0) {
        h0 *= 0.5;
        x1 = x + f * h0;
    }
    let d2 = scaled_rms(&(rhs_unchecked(g, k, &x1) - f), x, opts) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(t_end)
}

/// Adaptive Dormand-Prince integration from `x0` to `t_end`, rejecting any
/// step that would leave the positive orthant.
pub fn integrate(
    g: &EGraph,
    k: &RateVector,
    x0: &DVector<f64>,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    k.check_len(g)?;
    check_positive_state(x0, g.n_species())?;
    let sd = stoich_decomp(g, lincore::DEFAULT_RANK_TOL);
    let conserved0 = sd.basis_sperp.transpose() * x0;
    let mut drift = vec![0.0; sd.codim()];

    let mut t = 0.0;
    let mut x = x0.clone();
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    if t_end <= 0.0 {
        return Ok(Trajectory {
            times,
            states,
            conserved_drift: drift,
            rtol: opts.rtol,
            atol: opts.atol,
        });
    }

    let mut f = rhs_unchecked(g, k, &x);
    let mut h = match opts.initial_step {
        Some(h) => h,
        None => initial_step(g, k, &x, &f, t_end, opts),
    };
    h = h.min(t_end).max(f64::EPSILON * t_end);

    let mut steps = 0;
    let mut err_old: f64 = 1e-4;
    let mut rejected = false;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        steps += 1;
        let last = t + h >= t_end;
        let h_try = if last { t_end - t } else { h };
        if h_try <= 1e-14 * t.abs().max(1.0) && !last {
            return Err(Error::StepSizeUnderflow { t, h: h_try });
        }
        match try_step(g, k, &x, &f, h_try) {
            None => {
                h = h_try * 0.5;
            }
            Some((x_new, err, f_new)) => {
                let norm = scaled_rms(&err, &x.zip_map(&x_new, |a, b| a.abs().max(b.abs())), opts);
                // PI controller, exponents 0.17 and 0.04
                let factor = (0.9 * norm.max(1e-10).powf(-0.17) * err_old.powf(0.04)).clamp(0.1, 5.0);
                if norm <= 1.0 {
                    err_old = norm.max(1e-4);
                    t = if last { t_end } else { t + h_try };
                    x = x_new;
                    f = f_new;
                    let conserved = sd.basis_sperp.transpose() * &x;
                    for (d, (c, c0)) in drift.iter_mut().zip(conserved.iter().zip(conserved0.iter())) {
                        *d = d.max((c - c0).abs());
                    }
                    times.push(t);
                    states.push(x.clone());
                    h = h_try * if rejected { factor.min(1.0) } else { factor };
                    rejected = false;
                } else {
                    h = h_try * factor.min(1.0);
                    rejected = true;
                }
            }
        }
    }
    Ok(Trajectory {
        times,
        states,
        conserved_drift: drift,
        rtol: opts.rtol,
        atol: opts.atol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub final_distance: f64,
    /// Distance to `x*` is non-increasing over the last quarter of samples,
    /// up to the integrator resolution `rtol·‖x*‖_∞ + atol`.
    pub monotone_tail: bool,
}

pub fn convergence_report(traj: &Trajectory, x_star: &DVector<f64>) -> ConvergenceReport {
    let distances: Vec<f64> = traj.states.iter().map(|s| (s - x_star).norm()).collect();
    let slack = traj.rtol * x_star.amax() + traj.atol;
    let tail_start = distances.len() - distances.len().div_ceil(4);
    let monotone_tail = distances[tail_start..].windows(2).all(|w| w[1] <= w[0] + slack);
    ConvergenceReport {
        final_distance: *distances.last().expect("trajectory holds the initial state"),
        monotone_tail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_network;

    const SEGRE: &str = "3A -> 2A+B : 2.0\n2A+B -> 3A : 3.0\nA+2B <-> 3B : 4.0, 6.0";

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn rates(k: &[f64]) -> RateVector {
        RateVector::new(k.to_vec()).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let ab = parse_network("A <-> B : 2, 3").unwrap();
        assert_eq!(
            mass_action_rhs(&ab, &rates(&[2.0, 3.0]), &v(&[1.0, 1.0])).unwrap(),
            v(&[1.0, -1.0])
        );
        let cyc = parse_network("A -> B : 1\nB -> C : 1\nC -> A : 1").unwrap();
        assert_eq!(
            mass_action_rhs(&cyc, &rates(&[1.0; 3]), &v(&[1.0; 3])).unwrap(),
            v(&[0.0; 3])
        );
        let segre = parse_network(SEGRE).unwrap();
        let at_eq = mass_action_rhs(&segre, &rates(&[2.0, 3.0, 4.0, 6.0]), &v(&[1.2, 0.8])).unwrap();
        assert!(at_eq.amax() < 1e-12);
    }

    #[test]
    fn rhs_rejects_boundary_state() {
        let ab = parse_network("A <-> B : 2, 3").unwrap();
        assert!(matches!(
            mass_action_rhs(&ab, &rates(&[2.0, 3.0]), &v(&[0.0, 1.0])),
            Err(Error::NonPositiveState { index: 0, .. })
        ));
    }

    #[test]
    fn segre_converges() {
        let g = parse_network(SEGRE).unwrap();
        let traj = integrate(
            &g,
            &rates(&[2.0, 3.0, 4.0, 6.0]),
            &v(&[1.0, 1.0]),
            50.0,
            &IntegratorOptions::default(),
        )
        .unwrap();
        let rep = convergence_report(&traj, &v(&[1.2, 0.8]));
        assert!(rep.final_distance < 1e-6, "{}", rep.final_distance);
        assert!(rep.monotone_tail);
        assert!(traj.conserved_drift[0] < 1e-12);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*traj.times.last().unwrap(), 50.0);
    }

    #[test]
    fn fixed_point_stays_put() {
        let g = parse_network(SEGRE).unwrap();
        let x = v(&[1.2, 0.8]);
        let traj = integrate(
            &g,
            &rates(&[2.0, 3.0, 4.0, 6.0]),
            &x,
            10.0,
            &IntegratorOptions::default(),
        )
        .unwrap();
        let opts = IntegratorOptions::default();
        let bound = opts.rtol * x.amax() + opts.atol;
        assert!(traj.states.iter().all(|s| (s - &x).amax() <= bound));
        assert!(convergence_report(&traj, &x).final_distance <= bound * 2f64.sqrt());
    }

    #[test]
    fn near_boundary_start_stays_positive() {
        let g = parse_network("A <-> B : 2, 3").unwrap();
        let traj = integrate(
            &g,
            &rates(&[2.0, 3.0]),
            &v(&[2.0, 0.0001]),
            20.0,
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|x| *x > 0.0)));
        let end = traj.final_state();
        assert!(
            (end[0] - 1.20006).abs() < 1e-7 && (end[1] - 0.80004).abs() < 1e-7,
            "{end}"
        );
    }

    #[test]
    fn zero_horizon_is_single_row() {
        let g = parse_network("A <-> B : 2, 3").unwrap();
        let traj = integrate(
            &g,
            &rates(&[2.0, 3.0]),
            &v(&[1.0, 1.0]),
            0.0,
            &IntegratorOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.times, vec![0.0]);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x1,x2\n0,1,1\n");
    }

    #[test]
    fn step_budget_exhaustion_is_reported() {
        let g = parse_network("A <-> B : 2, 3").unwrap();
        let opts = IntegratorOptions {
            max_steps: 3,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&g, &rates(&[2.0, 3.0]), &v(&[1.0, 1.0]), 100.0, &opts),
            Err(Error::StepSizeUnderflow { .. })
        ));
    }
}
