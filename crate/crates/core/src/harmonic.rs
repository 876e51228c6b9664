//! Harmonic-signal algebra: evaluation, the linear-equality set tying a
//! harmonic state/input pair to the system dynamics, the cone set keeping its
//! outputs inside the tightened band for all time, and a sampling-based
//! admissibility oracle.

use nalgebra::{DMatrix, DVector};

use crate::model::LtiModel;
use crate::{Error, EPS_EQ};

/// Parameters of `v(t) = bias + sine * sin(w t) + cosine * cos(w t)`.
///
/// `freq` is in radians per sample. Zero frequency is permitted only for the
/// steady-state reduction mode of the harmonic controller, where the signal
/// degenerates to `bias + cosine`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicParams {
    pub bias: DVector<f64>,
    pub sine: DVector<f64>,
    pub cosine: DVector<f64>,
    pub freq: f64,
}

impl HarmonicParams {
    pub fn new(bias: DVector<f64>, sine: DVector<f64>, cosine: DVector<f64>, freq: f64) -> Self {
        assert_eq!(bias.len(), sine.len());
        assert_eq!(bias.len(), cosine.len());
        assert!(freq >= 0.0, "base frequency must be nonnegative");
        Self {
            bias,
            sine,
            cosine,
            freq,
        }
    }

    /// Constant signal at `bias`.
    pub fn constant(bias: DVector<f64>, freq: f64) -> Self {
        let n = bias.len();
        Self::new(bias, DVector::zeros(n), DVector::zeros(n), freq)
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    /// Signal value at sample `t`.
    pub fn evaluate(&self, t: usize) -> DVector<f64> {
        let phase = self.freq * t as f64;
        &self.bias + &self.sine * phase.sin() + &self.cosine * phase.cos()
    }

    /// Largest of the (bias, sine, cosine) infinity norms.
    pub fn amplitude(&self) -> f64 {
        self.bias.amax().max(self.sine.amax()).max(self.cosine.amax())
    }
}

/// The three equation residuals tying a harmonic `(x, u)` pair to the system
/// dynamics: the bias row is the steady-state equation and the sine/cosine
/// rows are the one-step rotation of the oscillating parts. Membership in
/// the dynamics set means all three vanish.
pub fn dynamics_residual(
    x_params: &HarmonicParams,
    u_params: &HarmonicParams,
    model: &LtiModel,
) -> Result<[DVector<f64>; 3], Error> {
    if x_params.freq != u_params.freq {
        return Err(Error::FrequencyMismatch(x_params.freq, u_params.freq));
    }
    if x_params.dim() != model.n_x() || u_params.dim() != model.n_u() {
        return Err(Error::Dimension(format!(
            "harmonic params ({}, {}) against model ({}, {})",
            x_params.dim(),
            u_params.dim(),
            model.n_x(),
            model.n_u()
        )));
    }
    let (cw, sw) = (x_params.freq.cos(), x_params.freq.sin());
    let bias = &x_params.bias - model.propagate(&x_params.bias, &u_params.bias);
    let sine = &x_params.sine * cw
        - &x_params.cosine * sw
        - model.propagate(&x_params.sine, &u_params.sine);
    let cosine = &x_params.sine * sw + &x_params.cosine * cw
        - model.propagate(&x_params.cosine, &u_params.cosine);
    Ok([bias, sine, cosine])
}

/// True iff all three dynamics residuals vanish within [`EPS_EQ`].
pub fn in_dynamics_set(
    x_params: &HarmonicParams,
    u_params: &HarmonicParams,
    model: &LtiModel,
) -> Result<bool, Error> {
    let r = dynamics_residual(x_params, u_params, model)?;
    Ok(r.iter().all(|v| v.amax() <= EPS_EQ))
}

/// Upper and lower cone margins of one output row. Nonnegative margins mean
/// the harmonic output stays inside the sigma-tightened band for all time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeMargins {
    pub upper: f64,
    pub lower: f64,
}

impl ConeMargins {
    pub fn min(&self) -> f64 {
        self.upper.min(self.lower)
    }
}

/// Per-output margins `(y_hi - sigma - y_bias) - ||(y_sin, y_cos)||` and
/// `(y_bias - y_lo - sigma) - ||(y_sin, y_cos)||` of the harmonic output
/// signal `E x(t) + F u(t)`.
pub fn constraint_margins(
    x_params: &HarmonicParams,
    u_params: &HarmonicParams,
    model: &LtiModel,
    sigma: f64,
) -> Result<Vec<ConeMargins>, Error> {
    if x_params.freq != u_params.freq {
        return Err(Error::FrequencyMismatch(x_params.freq, u_params.freq));
    }
    if x_params.dim() != model.n_x() || u_params.dim() != model.n_u() {
        return Err(Error::Dimension(
            "harmonic params do not match model dimensions".into(),
        ));
    }
    let y_bias = model.output(&x_params.bias, &u_params.bias);
    let y_sin = model.output(&x_params.sine, &u_params.sine);
    let y_cos = model.output(&x_params.cosine, &u_params.cosine);
    Ok((0..model.n_y())
        .map(|i| {
            let swing = y_sin[i].hypot(y_cos[i]);
            ConeMargins {
                upper: (model.y_hi[i] - sigma - y_bias[i]) - swing,
                lower: (y_bias[i] - model.y_lo[i] - sigma) - swing,
            }
        })
        .collect())
}

/// Sampling-based admissibility oracle: checks the dynamics recursion
/// `x(t+1) = A x(t) + B u(t)` and the output band at every `t` in
/// `0..=horizon`, each within [`EPS_EQ`]. Independent of the cone
/// characterization it is used to validate.
pub fn is_admissible_harmonic(
    x_params: &HarmonicParams,
    u_params: &HarmonicParams,
    model: &LtiModel,
    sigma: f64,
    horizon: usize,
) -> Result<bool, Error> {
    if x_params.freq != u_params.freq {
        return Err(Error::FrequencyMismatch(x_params.freq, u_params.freq));
    }
    assert!(horizon >= 1);
    let mut x_now = x_params.evaluate(0);
    for t in 0..=horizon {
        let u_now = u_params.evaluate(t);
        let y = model.output(&x_now, &u_now);
        for i in 0..model.n_y() {
            if y[i] > model.y_hi[i] - sigma + EPS_EQ || y[i] < model.y_lo[i] + sigma - EPS_EQ {
                return Ok(false);
            }
        }
        let x_next = x_params.evaluate(t + 1);
        if (model.propagate(&x_now, &u_now) - &x_next).amax() > EPS_EQ {
            return Ok(false);
        }
        x_now = x_next;
    }
    Ok(true)
}

/// Solves the sine/cosine rotation rows for the state parts given the input
/// parts: used to construct members of the dynamics set. Fails when
/// `exp(iw)` is an eigenvalue of `A` (rotation matrix singular).
pub fn state_parts_from_inputs(
    model: &LtiModel,
    u_sine: &DVector<f64>,
    u_cosine: &DVector<f64>,
    freq: f64,
) -> Result<(DVector<f64>, DVector<f64>), Error> {
    let n = model.n_x();
    let (cw, sw) = (freq.cos(), freq.sin());
    let mut lhs = DMatrix::zeros(2 * n, 2 * n);
    lhs.view_mut((0, 0), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * cw - &model.a));
    lhs.view_mut((0, n), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * -sw));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * sw));
    lhs.view_mut((n, n), (n, n))
        .copy_from(&(DMatrix::identity(n, n) * cw - &model.a));
    let mut rhs = DVector::zeros(2 * n);
    rhs.rows_mut(0, n).copy_from(&(&model.b * u_sine));
    rhs.rows_mut(n, n).copy_from(&(&model.b * u_cosine));
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Structure("harmonic rotation system is singular".into()))?;
    Ok((
        sol.rows(0, n).into_owned(),
        sol.rows(n, n).into_owned(),
    ))
}

/// Rotates the sine/cosine parts of both signals by the phase `phi`,
/// shifting the signal in time without leaving the dynamics set.
pub fn rotate_phase(params: &HarmonicParams, phi: f64) -> HarmonicParams {
    let (c, s) = (phi.cos(), phi.sin());
    HarmonicParams {
        bias: params.bias.clone(),
        sine: &params.sine * c - &params.cosine * s,
        cosine: &params.sine * s + &params.cosine * c,
        freq: params.freq,
    }
}
