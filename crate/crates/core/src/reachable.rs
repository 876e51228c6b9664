//! Standalone oracles for the optimal reachable references: the steady,
//! periodic and harmonic points closest (in offset cost) to a desired
//! reference among all admissible candidates in the sigma-tightened band.
//! These are the convergence targets of the tracking controllers and are
//! solved at oracle precision (absolute tolerance 1e-9 with polish).

use nalgebra::{DMatrix, DVector};

use crate::formulations::WeightSet;
use crate::harmonic::HarmonicParams;
use crate::model::{LtiModel, SteadyStatePair};
use crate::solver::{
    solve, ConeProgram, CscMatrix, SocBlock, SolverConfig, SolverStatus,
};
use crate::Error;

/// The reachable point in its controller-specific shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ReachableTarget {
    Steady(SteadyStatePair),
    Periodic(Vec<SteadyStatePair>),
    Harmonic {
        x: HarmonicParams,
        u: HarmonicParams,
    },
}

impl ReachableTarget {
    /// State component of the target at time `t`. Harmonic targets report
    /// their center, which is the closed loop's limit point.
    pub fn state_at(&self, t: usize) -> &DVector<f64> {
        match self {
            ReachableTarget::Steady(p) => &p.x,
            ReachableTarget::Periodic(traj) => &traj[t % traj.len()].x,
            ReachableTarget::Harmonic { x, .. } => &x.bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachableResult {
    pub target: ReachableTarget,
    pub objective_value: f64,
}

fn add_dense(tri: &mut Vec<(usize, usize, f64)>, r0: usize, c0: usize, m: &DMatrix<f64>, s: f64) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)] * s;
            if v != 0.0 {
                tri.push((r0 + i, c0 + j, v));
            }
        }
    }
}

fn add_eye(tri: &mut Vec<(usize, usize, f64)>, r0: usize, c0: usize, n: usize, s: f64) {
    for i in 0..n {
        tri.push((r0 + i, c0 + i, s));
    }
}

fn band_check(model: &LtiModel, sigma: f64) -> Result<(), Error> {
    for i in 0..model.n_y() {
        if model.y_lo[i] + sigma > model.y_hi[i] - sigma {
            return Err(Error::EmptySigmaBand);
        }
    }
    Ok(())
}

fn solve_oracle(prog: &ConeProgram) -> Result<crate::solver::SolverResult, Error> {
    let res = solve(prog, &SolverConfig::oracle())?;
    match res.status {
        SolverStatus::PrimalInfeasibleCertificate => Err(Error::EmptyFeasibleSet),
        SolverStatus::MaxIterReached => Err(Error::Structure(format!(
            "reachable oracle did not converge (primal {:.2e}, dual {:.2e})",
            res.primal_residual, res.dual_residual
        ))),
        SolverStatus::Solved => Ok(res),
    }
}

/// Program for the closest sigma-strict admissible steady state, measured by
/// `||x - x_r||_T^2 + ||u - u_r||_S^2`.
pub fn steady_program(
    model: &LtiModel,
    weights: &WeightSet,
    sigma: f64,
    reference: &SteadyStatePair,
) -> Result<ConeProgram, Error> {
    band_check(model, sigma)?;
    let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());
    let n = n_x + n_u;
    let mut p_tri = Vec::new();
    add_dense(&mut p_tri, 0, 0, &weights.t, 2.0);
    add_dense(&mut p_tri, n_x, n_x, &weights.s, 2.0);
    let mut q = DVector::zeros(n);
    q.rows_mut(0, n_x).copy_from(&(&weights.t * &reference.x * -2.0));
    q.rows_mut(n_x, n_u).copy_from(&(&weights.s * &reference.u * -2.0));

    let mut eq_tri = Vec::new();
    add_eye(&mut eq_tri, 0, 0, n_x, 1.0);
    add_dense(&mut eq_tri, 0, 0, &model.a, -1.0);
    add_dense(&mut eq_tri, 0, n_x, &model.b, -1.0);

    let mut box_tri = Vec::new();
    add_dense(&mut box_tri, 0, 0, &model.e, 1.0);
    add_dense(&mut box_tri, 0, n_x, &model.f, 1.0);

    Ok(ConeProgram {
        p: CscMatrix::from_triplets(n, n, &p_tri),
        q,
        a_eq: CscMatrix::from_triplets(n_x, n, &eq_tri),
        b_eq: DVector::zeros(n_x),
        a_box: CscMatrix::from_triplets(n_y, n, &box_tri),
        lo: DVector::from_fn(n_y, |i, _| model.y_lo[i] + sigma),
        hi: DVector::from_fn(n_y, |i, _| model.y_hi[i] - sigma),
        soc_blocks: Vec::new(),
        obj_constant: (&weights.t * &reference.x).dot(&reference.x)
            + (&weights.s * &reference.u).dot(&reference.u),
    })
}

pub fn optimal_reachable_steady(
    model: &LtiModel,
    weights: &WeightSet,
    sigma: f64,
    reference: &SteadyStatePair,
) -> Result<ReachableResult, Error> {
    let prog = steady_program(model, weights, sigma, reference)?;
    let res = solve_oracle(&prog)?;
    let n_x = model.n_x();
    Ok(ReachableResult {
        target: ReachableTarget::Steady(SteadyStatePair::new(
            res.x.rows(0, n_x).into_owned(),
            res.x.rows(n_x, model.n_u()).into_owned(),
        )),
        objective_value: res.objective,
    })
}

/// Program for the closest sigma-strict admissible periodic trajectory.
/// `window[k]` is the desired reference at phase `k`.
pub fn periodic_program(
    model: &LtiModel,
    weights: &WeightSet,
    sigma: f64,
    window: &[SteadyStatePair],
) -> Result<ConeProgram, Error> {
    band_check(model, sigma)?;
    let period = window.len();
    if period < 2 {
        return Err(Error::Config("period must be at least 2".into()));
    }
    let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());
    let n = period * (n_x + n_u);
    let xs = |k: usize| k * n_x;
    let us = |k: usize| period * n_x + k * n_u;

    let mut p_tri = Vec::new();
    let mut q = DVector::zeros(n);
    let mut constant = 0.0;
    for (k, pair) in window.iter().enumerate() {
        add_dense(&mut p_tri, xs(k), xs(k), &weights.t, 2.0);
        add_dense(&mut p_tri, us(k), us(k), &weights.s, 2.0);
        q.rows_mut(xs(k), n_x).copy_from(&(&weights.t * &pair.x * -2.0));
        q.rows_mut(us(k), n_u).copy_from(&(&weights.s * &pair.u * -2.0));
        constant +=
            (&weights.t * &pair.x).dot(&pair.x) + (&weights.s * &pair.u).dot(&pair.u);
    }

    let mut eq_tri = Vec::new();
    // Wrap row then the chain.
    add_eye(&mut eq_tri, 0, xs(0), n_x, 1.0);
    add_dense(&mut eq_tri, 0, xs(period - 1), &model.a, -1.0);
    add_dense(&mut eq_tri, 0, us(period - 1), &model.b, -1.0);
    for k in 0..period - 1 {
        let r0 = (k + 1) * n_x;
        add_eye(&mut eq_tri, r0, xs(k + 1), n_x, 1.0);
        add_dense(&mut eq_tri, r0, xs(k), &model.a, -1.0);
        add_dense(&mut eq_tri, r0, us(k), &model.b, -1.0);
    }

    let mut box_tri = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for k in 0..period {
        add_dense(&mut box_tri, k * n_y, xs(k), &model.e, 1.0);
        add_dense(&mut box_tri, k * n_y, us(k), &model.f, 1.0);
        for i in 0..n_y {
            lo.push(model.y_lo[i] + sigma);
            hi.push(model.y_hi[i] - sigma);
        }
    }

    Ok(ConeProgram {
        p: CscMatrix::from_triplets(n, n, &p_tri),
        q,
        a_eq: CscMatrix::from_triplets(period * n_x, n, &eq_tri),
        b_eq: DVector::zeros(period * n_x),
        a_box: CscMatrix::from_triplets(period * n_y, n, &box_tri),
        lo: DVector::from_vec(lo),
        hi: DVector::from_vec(hi),
        soc_blocks: Vec::new(),
        obj_constant: constant,
    })
}

pub fn optimal_reachable_periodic(
    model: &LtiModel,
    weights: &WeightSet,
    sigma: f64,
    window: &[SteadyStatePair],
) -> Result<ReachableResult, Error> {
    let prog = periodic_program(model, weights, sigma, window)?;
    let res = solve_oracle(&prog)?;
    let period = window.len();
    let (n_x, n_u) = (model.n_x(), model.n_u());
    let traj = (0..period)
        .map(|k| {
            SteadyStatePair::new(
                res.x.rows(k * n_x, n_x).into_owned(),
                res.x.rows(period * n_x + k * n_u, n_u).into_owned(),
            )
        })
        .collect();
    Ok(ReachableResult {
        target: ReachableTarget::Periodic(traj),
        objective_value: res.objective,
    })
}

/// Program for the optimal reachable harmonic reference: minimizes the
/// harmonic offset cost over the dynamics set (equality rows) and the cone
/// set (two cone blocks per output).
pub fn harmonic_program(
    model: &LtiModel,
    weights: &WeightSet,
    sigma: f64,
    freq: f64,
    reference: &SteadyStatePair,
) -> Result<ConeProgram, Error> {
    band_check(model, sigma)?;
    if freq <= 0.0 {
        return Err(Error::Config(
            "harmonic oracle requires a positive base frequency".into(),
        ));
    }
    let (n_x, n_u, n_y) = (model.n_x(), model.n_u(), model.n_y());
    let n = 3 * (n_x + n_u);
    let (xe, xs, xc) = (0, n_x, 2 * n_x);
    let (ue, us, uc) = (3 * n_x, 3 * n_x + n_u, 3 * n_x + 2 * n_u);
    let (cw, sw) = (freq.cos(), freq.sin());

    let mut p_tri = Vec::new();
    add_dense(&mut p_tri, xe, xe, &weights.t_e, 2.0);
    add_dense(&mut p_tri, xs, xs, &weights.t_h, 2.0);
    add_dense(&mut p_tri, xc, xc, &weights.t_h, 2.0);
    add_dense(&mut p_tri, ue, ue, &weights.s_e, 2.0);
    add_dense(&mut p_tri, us, us, &weights.s_h, 2.0);
    add_dense(&mut p_tri, uc, uc, &weights.s_h, 2.0);
    let mut q = DVector::zeros(n);
    q.rows_mut(xe, n_x).copy_from(&(&weights.t_e * &reference.x * -2.0));
    q.rows_mut(ue, n_u).copy_from(&(&weights.s_e * &reference.u * -2.0));

    let mut eq_tri = Vec::new();
    add_eye(&mut eq_tri, 0, xe, n_x, 1.0);
    add_dense(&mut eq_tri, 0, xe, &model.a, -1.0);
    add_dense(&mut eq_tri, 0, ue, &model.b, -1.0);
    let r0 = n_x;
    add_eye(&mut eq_tri, r0, xs, n_x, cw);
    add_dense(&mut eq_tri, r0, xs, &model.a, -1.0);
    add_eye(&mut eq_tri, r0, xc, n_x, -sw);
    add_dense(&mut eq_tri, r0, us, &model.b, -1.0);
    let r0 = 2 * n_x;
    add_eye(&mut eq_tri, r0, xs, n_x, sw);
    add_eye(&mut eq_tri, r0, xc, n_x, cw);
    add_dense(&mut eq_tri, r0, xc, &model.a, -1.0);
    add_dense(&mut eq_tri, r0, uc, &model.b, -1.0);

    let mut soc_blocks = Vec::with_capacity(2 * n_y);
    for i in 0..n_y {
        let mut center = Vec::new();
        let mut swing = Vec::new();
        for j in 0..n_x {
            let v = model.e[(i, j)];
            if v != 0.0 {
                center.push((0usize, xe + j, v));
                swing.push((1usize, xs + j, v));
                swing.push((2usize, xc + j, v));
            }
        }
        for j in 0..n_u {
            let v = model.f[(i, j)];
            if v != 0.0 {
                center.push((0usize, ue + j, v));
                swing.push((1usize, us + j, v));
                swing.push((2usize, uc + j, v));
            }
        }
        let mut upper: Vec<(usize, usize, f64)> =
            center.iter().map(|&(r, c, v)| (r, c, -v)).collect();
        upper.extend(swing.iter().copied());
        soc_blocks.push(SocBlock {
            selector: CscMatrix::from_triplets(3, n, &upper),
            offset: DVector::from_vec(vec![model.y_hi[i] - sigma, 0.0, 0.0]),
        });
        let mut lower = center.clone();
        lower.extend(swing.iter().copied());
        soc_blocks.push(SocBlock {
            selector: CscMatrix::from_triplets(3, n, &lower),
            offset: DVector::from_vec(vec![-model.y_lo[i] - sigma, 0.0, 0.0]),
        });
    }

    Ok(ConeProgram {
        p: CscMatrix::from_triplets(n, n, &p_tri),
        q,
        a_eq: CscMatrix::from_triplets(3 * n_x, n, &eq_tri),
        b_eq: DVector::zeros(3 * n_x),
        a_box: CscMatrix::zeros(0, n),
        lo: DVector::zeros(0),
        hi: DVector::zeros(0),
        soc_blocks,
        obj_constant: (&weights.t_e * &reference.x).dot(&reference.x)
            + (&weights.s_e * &reference.u).dot(&reference.u),
    })
}

pub fn optimal_reachable_harmonic(
    model: &LtiModel,
    weights: &WeightSet,
    sigma: f64,
    freq: f64,
    reference: &SteadyStatePair,
) -> Result<ReachableResult, Error> {
    let prog = harmonic_program(model, weights, sigma, freq, reference)?;
    let res = solve_oracle(&prog)?;
    let (n_x, n_u) = (model.n_x(), model.n_u());
    let x = HarmonicParams::new(
        res.x.rows(0, n_x).into_owned(),
        res.x.rows(n_x, n_x).into_owned(),
        res.x.rows(2 * n_x, n_x).into_owned(),
        freq,
    );
    let u = HarmonicParams::new(
        res.x.rows(3 * n_x, n_u).into_owned(),
        res.x.rows(3 * n_x + n_u, n_u).into_owned(),
        res.x.rows(3 * n_x + 2 * n_u, n_u).into_owned(),
        freq,
    );
    Ok(ReachableResult {
        target: ReachableTarget::Harmonic { x, u },
        objective_value: res.objective,
    })
}

#[cfg(test)]
mod tests;
