//! Ball-and-plate benchmark plant.
//!
//! State ordering is `(p1, p1_dot, th1, th1_dot, p2, p2_dot, th2, th2_dot)`
//! with input `(th1_ddot, th2_ddot)`: ball position/velocity and plate
//! angle/angular velocity per axis, driven by the plate angular
//! accelerations. Constraint rows are ordered
//! `(p1, p1_dot, th1, th1_ddot, p2, p2_dot, th2, th2_ddot)`; the plate
//! angular velocities are unconstrained.

use nalgebra::{DMatrix, DVector};

use crate::model::LtiModel;

/// Physical parameters of the ball-and-plate rig.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPlateParams {
    /// Ball mass in kg.
    pub mass: f64,
    /// Ball radius in m.
    pub radius: f64,
    /// Ball moment of inertia in kg m^2.
    pub inertia: f64,
    /// Gravitational acceleration in m/s^2.
    pub gravity: f64,
    /// Sample time in seconds for discretization and plant stepping.
    pub sample_time: f64,
}

impl Default for BallPlateParams {
    fn default() -> Self {
        // Solid ball of 50 g and 1 cm radius; I = (2/5) m r^2.
        Self {
            mass: 0.05,
            radius: 0.01,
            inertia: 2e-6,
            gravity: 9.81,
            sample_time: 0.2,
        }
    }
}

impl BallPlateParams {
    pub fn validated(self) -> Result<Self, crate::Error> {
        let all_positive = self.mass > 0.0
            && self.radius > 0.0
            && self.inertia > 0.0
            && self.gravity > 0.0
            && self.sample_time > 0.0;
        if all_positive {
            Ok(self)
        } else {
            Err(crate::Error::Config(
                "ball-and-plate parameters must be strictly positive".into(),
            ))
        }
    }

    /// Coupling factor `m / (m + I/r^2)` of the rolling ball.
    pub fn coupling(&self) -> f64 {
        self.mass / (self.mass + self.inertia / (self.radius * self.radius))
    }
}

/// Continuous-time derivative of the nonlinear ball-and-plate dynamics.
///
/// The ball accelerations couple centrifugal and gravity terms through the
/// rolling factor; the plate angular accelerations pass through from the
/// input.
pub fn ball_plate_derivative(
    state: &DVector<f64>,
    input: &DVector<f64>,
    params: &BallPlateParams,
) -> DVector<f64> {
    assert_eq!(state.len(), 8, "ball-and-plate state is 8-dimensional");
    assert_eq!(input.len(), 2, "ball-and-plate input is 2-dimensional");
    let kappa = params.coupling();
    let g = params.gravity;
    let (p1, v1, th1, w1) = (state[0], state[1], state[2], state[3]);
    let (p2, v2, th2, w2) = (state[4], state[5], state[6], state[7]);

    let mut d = DVector::zeros(8);
    d[0] = v1;
    d[1] = kappa * (p1 * w1 * w1 + p2 * w1 * w2 + g * th1.sin());
    d[2] = w1;
    d[3] = input[0];
    d[4] = v2;
    d[5] = kappa * (p2 * w2 * w2 + p1 * w1 * w2 + g * th2.sin());
    d[6] = w2;
    d[7] = input[1];
    d
}

/// Integrates the nonlinear plant over one sample interval with the input
/// held constant (ZOH). Fixed-step RK4 with [`PLANT_SUBSTEPS`] substeps.
pub fn plant_step(
    state: &DVector<f64>,
    input: &DVector<f64>,
    params: &BallPlateParams,
) -> DVector<f64> {
    plant_step_with_substeps(state, input, params, PLANT_SUBSTEPS)
}

/// Substep count used by [`plant_step`].
pub const PLANT_SUBSTEPS: usize = 10;

pub fn plant_step_with_substeps(
    state: &DVector<f64>,
    input: &DVector<f64>,
    params: &BallPlateParams,
    substeps: usize,
) -> DVector<f64> {
    assert!(substeps >= 1);
    let h = params.sample_time / substeps as f64;
    let mut x = state.clone();
    for _ in 0..substeps {
        let k1 = ball_plate_derivative(&x, input, params);
        let k2 = ball_plate_derivative(&(&x + &k1 * (h / 2.0)), input, params);
        let k3 = ball_plate_derivative(&(&x + &k2 * (h / 2.0)), input, params);
        let k4 = ball_plate_derivative(&(&x + &k3 * h), input, params);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Jacobian linearization at the origin followed by exact ZOH discretization
/// via the augmented-matrix exponential. The returned model carries the
/// benchmark output band: `|p_i| <= 0.3`, `|p_i_dot| <= 0.1`,
/// `|th_i| <= pi/4`, `|th_i_ddot| <= 0.1`.
pub fn linearize_discretize(params: &BallPlateParams) -> LtiModel {
    let kg = params.coupling() * params.gravity;
    let ts = params.sample_time;

    // Continuous-time Jacobian at (x, u) = (0, 0); the two axes decouple.
    let mut a_c = DMatrix::zeros(8, 8);
    let mut b_c = DMatrix::zeros(8, 2);
    for axis in 0..2 {
        let o = 4 * axis;
        a_c[(o, o + 1)] = 1.0;
        a_c[(o + 1, o + 2)] = kg;
        a_c[(o + 2, o + 3)] = 1.0;
        b_c[(o + 3, axis)] = 1.0;
    }

    // expm([A B; 0 0] Ts) = [Ad Bd; 0 I].
    let mut aug = DMatrix::zeros(10, 10);
    aug.view_mut((0, 0), (8, 8)).copy_from(&a_c);
    aug.view_mut((0, 8), (8, 2)).copy_from(&b_c);
    let phi = (aug * ts).exp();
    let a = phi.view((0, 0), (8, 8)).into_owned();
    let b = phi.view((0, 8), (8, 2)).into_owned();

    // Constraint rows (p1, p1_dot, th1, th1_ddot, p2, p2_dot, th2, th2_ddot);
    // the acceleration rows read the input directly.
    let mut e = DMatrix::zeros(8, 8);
    let mut f = DMatrix::zeros(8, 2);
    for axis in 0..2 {
        let (ro, so) = (4 * axis, 4 * axis);
        e[(ro, so)] = 1.0;
        e[(ro + 1, so + 1)] = 1.0;
        e[(ro + 2, so + 2)] = 1.0;
        f[(ro + 3, axis)] = 1.0;
    }
    let half_pi4 = std::f64::consts::FRAC_PI_4;
    let y_hi = DVector::from_vec(vec![0.3, 0.1, half_pi4, 0.1, 0.3, 0.1, half_pi4, 0.1]);
    let y_lo = -y_hi.clone();

    LtiModel::new(a, b, e, f, y_lo, y_hi).expect("ball-and-plate linearization is a valid model")
}
