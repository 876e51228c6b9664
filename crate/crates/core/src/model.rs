//! LTI prediction model with coupled input-output constraints.
//!
//! The model is `x(t+1) = A x(t) + B u(t)` subject to the output band
//! `y_lo <= E x(t) + F u(t) <= y_hi`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, EPS_EQ};

/// A steady-state candidate `(x, u)`. Admissibility is a predicate on the
/// model, not a type invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStatePair {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

impl SteadyStatePair {
    pub fn new(x: DVector<f64>, u: DVector<f64>) -> Self {
        Self { x, u }
    }

    pub fn zeros(n_x: usize, n_u: usize) -> Self {
        Self {
            x: DVector::zeros(n_x),
            u: DVector::zeros(n_u),
        }
    }
}

/// One structural assumption violated by a candidate model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelViolation {
    /// A matrix or bound vector has a size inconsistent with the others.
    DimensionMismatch(String),
    /// `y_lo < y_hi` fails in the given row.
    BoundsNotOrdered(usize),
    /// The controllability matrix of `(A, B)` is rank deficient.
    Uncontrollable,
}

impl std::fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelViolation::DimensionMismatch(what) => write!(f, "dimension mismatch: {what}"),
            ModelViolation::BoundsNotOrdered(row) => {
                write!(f, "bounds not strictly ordered in row {row}")
            }
            ModelViolation::Uncontrollable => write!(f, "uncontrollable"),
        }
    }
}

/// Report produced by [`LtiModel::validate`]; empty means pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<ModelViolation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_pass() {
            return write!(f, "pass");
        }
        let items: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", items.join("; "))
    }
}

/// Controllable LTI model with output band constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub y_lo: DVector<f64>,
    pub y_hi: DVector<f64>,
}

impl LtiModel {
    /// Builds a model, rejecting it if any structural assumption fails.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        e: DMatrix<f64>,
        f: DMatrix<f64>,
        y_lo: DVector<f64>,
        y_hi: DVector<f64>,
    ) -> Result<Self, ValidationReport> {
        let model = Self {
            a,
            b,
            e,
            f,
            y_lo,
            y_hi,
        };
        let report = model.validate();
        if report.is_pass() {
            Ok(model)
        } else {
            Err(report)
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.e.nrows()
    }

    /// Checks dimensions, bound ordering and controllability; report-style.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (n_x, n_u, n_y) = (self.n_x(), self.n_u(), self.n_y());
        if n_x == 0 || n_u == 0 || n_y == 0 {
            violations.push(ModelViolation::DimensionMismatch(
                "n_x, n_u, n_y must all be at least 1".into(),
            ));
        }
        if self.a.ncols() != n_x {
            violations.push(ModelViolation::DimensionMismatch(format!(
                "A is {}x{}, expected square",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        if self.b.nrows() != n_x {
            violations.push(ModelViolation::DimensionMismatch(format!(
                "B has {} rows, expected {n_x}",
                self.b.nrows()
            )));
        }
        if self.e.ncols() != n_x {
            violations.push(ModelViolation::DimensionMismatch(format!(
                "E has {} columns, expected {n_x}",
                self.e.ncols()
            )));
        }
        if self.f.nrows() != n_y || self.f.ncols() != n_u {
            violations.push(ModelViolation::DimensionMismatch(format!(
                "F is {}x{}, expected {n_y}x{n_u}",
                self.f.nrows(),
                self.f.ncols()
            )));
        }
        if self.y_lo.len() != n_y || self.y_hi.len() != n_y {
            violations.push(ModelViolation::DimensionMismatch(format!(
                "bound vectors have lengths {} and {}, expected {n_y}",
                self.y_lo.len(),
                self.y_hi.len()
            )));
        }
        if self.y_lo.len() == self.y_hi.len() {
            for i in 0..self.y_lo.len() {
                if !(self.y_lo[i] < self.y_hi[i]) {
                    violations.push(ModelViolation::BoundsNotOrdered(i));
                }
            }
        }
        // Only run the rank test once the shapes are coherent.
        if violations.is_empty() && matrix_rank(&self.controllability_matrix(n_x)) < n_x {
            violations.push(ModelViolation::Uncontrollable);
        }
        ValidationReport { violations }
    }

    fn controllability_matrix(&self, blocks: usize) -> DMatrix<f64> {
        let (n_x, n_u) = (self.n_x(), self.n_u());
        let mut ctrb = DMatrix::zeros(n_x, blocks * n_u);
        let mut power = self.b.clone();
        for j in 0..blocks {
            ctrb.view_mut((0, j * n_u), (n_x, n_u)).copy_from(&power);
            if j + 1 < blocks {
                power = &self.a * power;
            }
        }
        ctrb
    }

    /// Smallest `j` such that `[B, AB, ..., A^(j-1) B]` has rank `n_x`.
    pub fn controllability_index(&self) -> Result<usize, Error> {
        let n_x = self.n_x();
        for j in 1..=n_x {
            if matrix_rank(&self.controllability_matrix(j)) == n_x {
                return Ok(j);
            }
        }
        Err(Error::Uncontrollable)
    }

    /// `A x + B u`.
    pub fn propagate(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// `E x + F u`.
    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.e * x + &self.f * u
    }

    /// True iff `x = A x + B u` within [`EPS_EQ`] and the output lies in the
    /// sigma-tightened band `y_lo + sigma <= E x + F u <= y_hi - sigma`, with
    /// the band comparisons also tolerant of [`EPS_EQ`] roundoff.
    pub fn is_admissible_steady(&self, pair: &SteadyStatePair, sigma: f64) -> Result<bool, Error> {
        if pair.x.len() != self.n_x() || pair.u.len() != self.n_u() {
            return Err(Error::Dimension(format!(
                "pair ({}, {}) against model ({}, {})",
                pair.x.len(),
                pair.u.len(),
                self.n_x(),
                self.n_u()
            )));
        }
        let residual = self.propagate(&pair.x, &pair.u) - &pair.x;
        if residual.amax() > EPS_EQ {
            return Ok(false);
        }
        let y = self.output(&pair.x, &pair.u);
        for i in 0..self.n_y() {
            if y[i] < self.y_lo[i] + sigma - EPS_EQ || y[i] > self.y_hi[i] - sigma + EPS_EQ {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest violation of the untightened band at `(x, u)`; zero when inside.
    pub fn constraint_violation(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let y = self.output(x, u);
        let mut worst: f64 = 0.0;
        for i in 0..self.n_y() {
            worst = worst.max(self.y_lo[i] - y[i]).max(y[i] - self.y_hi[i]);
        }
        worst
    }
}

/// Numerical rank via singular values, with a tolerance relative to the
/// largest singular value (numpy-style).
pub(crate) fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let svals = m.clone().singular_values();
    let max_sv = svals.max();
    if max_sv == 0.0 {
        return 0;
    }
    let tol = max_sv * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svals.iter().filter(|&&s| s > tol).count()
}
