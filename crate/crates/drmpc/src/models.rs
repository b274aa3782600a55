//! Vehicle models: discrete affine systems, the nonlinear car-like model and
//! the linearized quadrotor, plus discretization, linearization and the
//! tracking cost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Box bounds with optional infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Bounds {
    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn from_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| lo > hi) {
            return Err(Error::InvalidInput("bound lower exceeds upper".into()));
        }
        Ok(Bounds {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        v.iter()
            .enumerate()
            .all(|(i, &x)| x >= self.lower[i] - tol && x <= self.upper[i] + tol)
    }

    pub fn clamp(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            v.iter()
                .enumerate()
                .map(|(i, &x)| x.clamp(self.lower[i], self.upper[i])),
        )
    }
}

/// Discrete-time affine system
/// `x+ = A x + B u + c`, `y = C x + D u`, with box state/input sets.
#[derive(Debug, Clone)]
pub struct AffineModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
    pub c_out: DMatrix<f64>,
    pub d_out: DMatrix<f64>,
    pub state_bounds: Bounds,
    pub input_bounds: Bounds,
}

impl AffineModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DVector<f64>,
        c_out: DMatrix<f64>,
        d_out: DMatrix<f64>,
        state_bounds: Bounds,
        input_bounds: Bounds,
    ) -> Result<Self> {
        let n_x = a.nrows();
        if a.ncols() != n_x || b.nrows() != n_x || c.len() != n_x {
            return Err(Error::InvalidInput("inconsistent dynamics dimensions".into()));
        }
        let n_u = b.ncols();
        if c_out.ncols() != n_x || d_out.nrows() != c_out.nrows() || d_out.ncols() != n_u {
            return Err(Error::InvalidInput("inconsistent output dimensions".into()));
        }
        if state_bounds.dim() != n_x || input_bounds.dim() != n_u {
            return Err(Error::InvalidInput("inconsistent bound dimensions".into()));
        }
        Ok(AffineModel {
            a,
            b,
            c,
            c_out,
            d_out,
            state_bounds,
            input_bounds,
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c_out.nrows()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.c
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c_out * x + &self.d_out * u
    }

    /// Exact zero-order-hold discretization of a continuous affine system
    /// `xdot = A x + B u + c` via the augmented matrix exponential.
    pub fn from_continuous_zoh(
        a_c: &DMatrix<f64>,
        b_c: &DMatrix<f64>,
        c_c: &DVector<f64>,
        c_out: DMatrix<f64>,
        d_out: DMatrix<f64>,
        ts: f64,
        state_bounds: Bounds,
        input_bounds: Bounds,
    ) -> Result<Self> {
        if ts <= 0.0 {
            return Err(Error::InvalidInput("sample time must be positive".into()));
        }
        let n = a_c.nrows();
        let m = b_c.ncols();
        let aug_dim = n + m + 1;
        let mut aug = DMatrix::zeros(aug_dim, aug_dim);
        aug.view_mut((0, 0), (n, n)).copy_from(a_c);
        aug.view_mut((0, n), (n, m)).copy_from(b_c);
        aug.view_mut((0, n + m), (n, 1)).copy_from(c_c);
        let e = (aug * ts).exp();
        let a = e.view((0, 0), (n, n)).into_owned();
        let b = e.view((0, n), (n, m)).into_owned();
        let c = e.view((0, n + m), (n, 1)).column(0).into_owned();
        AffineModel::new(a, b, c, c_out, d_out, state_bounds, input_bounds)
    }
}

/// Nonlinear lateral-dynamics car model at constant longitudinal speed.
/// State `(X, Y, heading, v_y, yaw rate)`, input: front steering angle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CarLikeModel {
    /// Vehicle mass (kg).
    pub m_v: f64,
    /// Front cornering stiffness (N/rad).
    pub c_f: f64,
    /// Rear cornering stiffness (N/rad).
    pub c_r: f64,
    /// Yaw moment of inertia (kg m^2).
    pub i_z: f64,
    /// Distance center of gravity to front axle (m).
    pub l_f: f64,
    /// Distance center of gravity to rear axle (m).
    pub l_r: f64,
    /// Constant longitudinal speed (m/s).
    pub v_x: f64,
}

impl Default for CarLikeModel {
    fn default() -> Self {
        CarLikeModel {
            m_v: 1700.0,
            c_f: 50_000.0,
            c_r: 50_000.0,
            i_z: 6000.0,
            l_f: 1.2,
            l_r: 1.3,
            v_x: 5.0,
        }
    }
}

impl CarLikeModel {
    pub const N_X: usize = 5;
    pub const N_U: usize = 1;
    pub const N_Y: usize = 2;

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m_v", self.m_v),
            ("c_f", self.c_f),
            ("c_r", self.c_r),
            ("i_z", self.i_z),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("v_x", self.v_x),
        ] {
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != Self::N_X {
            return Err(Error::DimensionMismatch {
                expected: Self::N_X,
                got: x.len(),
            });
        }
        if u.len() != Self::N_U {
            return Err(Error::DimensionMismatch {
                expected: Self::N_U,
                got: u.len(),
            });
        }
        if self.v_x == 0.0 {
            return Err(Error::Singularity(
                "car-like dynamics divide by the longitudinal speed".into(),
            ));
        }
        let heading = x[2];
        let v_y = x[3];
        let r = x[4];
        let delta_f = u[0];
        let (m, cf, cr, iz, lf, lr, vx) =
            (self.m_v, self.c_f, self.c_r, self.i_z, self.l_f, self.l_r, self.v_x);
        Ok(DVector::from_vec(vec![
            vx * heading.cos() - v_y * heading.sin(),
            vx * heading.sin() + v_y * heading.cos(),
            r,
            -2.0 * (cf + cr) / (m * vx) * v_y
                - (2.0 * (lf * cf - lr * cr) / (m * vx) + vx) * r
                + 2.0 * cf / m * delta_f,
            -2.0 * (lf * cf + lr * cr) / (iz * vx) * v_y
                - 2.0 * (lf * lf * cf - lr * lr * cr) / (iz * vx) * r
                + 2.0 * lf * cf / iz * delta_f,
        ]))
    }

    /// Output: planar position `(X, Y)`.
    pub fn output_matrix() -> DMatrix<f64> {
        let mut c = DMatrix::zeros(Self::N_Y, Self::N_X);
        c[(0, 0)] = 1.0;
        c[(1, 1)] = 1.0;
        c
    }
}

/// Linearized quadrotor about hover; 12-dimensional state
/// `(x, xd, y, yd, z, zd, phi, phid, theta, thetad, psi, psid)`, 4 inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadrotorModel {
    pub m_q: f64,
    pub gravity: f64,
    pub l_q: f64,
    pub i_xx: f64,
    pub i_yy: f64,
    pub i_zz: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
}

impl Default for QuadrotorModel {
    fn default() -> Self {
        QuadrotorModel {
            m_q: 0.65,
            gravity: 9.81,
            l_q: 0.23,
            i_xx: 0.0075,
            i_yy: 0.0075,
            i_zz: 0.013,
            u_min: vec![0.0, -22.52, -22.52, -1.08],
            u_max: vec![90.0, 22.52, 22.52, 1.08],
        }
    }
}

impl QuadrotorModel {
    pub const N_X: usize = 12;
    pub const N_U: usize = 4;
    pub const N_Y: usize = 3;

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("m_q", self.m_q),
            ("gravity", self.gravity),
            ("l_q", self.l_q),
            ("i_xx", self.i_xx),
            ("i_yy", self.i_yy),
            ("i_zz", self.i_zz),
        ] {
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.u_min.len() != Self::N_U || self.u_max.len() != Self::N_U {
            return Err(Error::InvalidInput("quadrotor input bounds need 4 entries".into()));
        }
        Ok(())
    }

    /// Continuous-time `(A, B)`; the drift is zero.
    pub fn continuous_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut a = DMatrix::zeros(Self::N_X, Self::N_X);
        let mut b = DMatrix::zeros(Self::N_X, Self::N_U);
        // Position integrators.
        for i in [0, 2, 4, 6, 8, 10] {
            a[(i, i + 1)] = 1.0;
        }
        a[(1, 8)] = -self.gravity; // xdd = -g * theta
        a[(3, 6)] = self.gravity; // ydd = g * phi
        b[(5, 0)] = -self.l_q / self.m_q; // zdd
        b[(7, 1)] = 1.0 / self.i_xx; // phidd
        b[(9, 2)] = self.l_q / self.i_yy; // thetadd
        b[(11, 3)] = self.l_q / self.i_zz; // psidd
        (a, b)
    }

    /// Angle limits that keep the linearization away from kinematic
    /// singularity; all other states are unbounded.
    pub fn state_bounds(&self) -> Bounds {
        let mut bounds = Bounds::unbounded(Self::N_X);
        let pi = std::f64::consts::PI;
        bounds.lower[6] = -pi;
        bounds.upper[6] = pi;
        bounds.lower[8] = -pi / 2.0;
        bounds.upper[8] = pi / 2.0;
        bounds.lower[10] = -pi;
        bounds.upper[10] = pi;
        bounds
    }

    /// Exact zero-order-hold discretization at sample time `ts`.
    pub fn to_affine(&self, ts: f64) -> Result<AffineModel> {
        self.validate()?;
        let (a_c, b_c) = self.continuous_matrices();
        let mut c_out = DMatrix::zeros(Self::N_Y, Self::N_X);
        c_out[(0, 0)] = 1.0;
        c_out[(1, 2)] = 1.0;
        c_out[(2, 4)] = 1.0;
        AffineModel::from_continuous_zoh(
            &a_c,
            &b_c,
            &DVector::zeros(Self::N_X),
            c_out,
            DMatrix::zeros(Self::N_Y, Self::N_U),
            ts,
            self.state_bounds(),
            Bounds::from_box(self.u_min.clone(), self.u_max.clone())?,
        )
    }
}

/// Discretization method for [`step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMethod {
    ForwardEuler,
    Rk4,
    /// Exact step; affine models only.
    Zoh,
}

/// A concrete vehicle: either a discrete affine system or the nonlinear car
/// with its operating box.
#[derive(Debug, Clone)]
pub enum VehicleModel {
    Affine(AffineModel),
    CarLike {
        model: CarLikeModel,
        state_bounds: Bounds,
        input_bounds: Bounds,
    },
}

impl VehicleModel {
    pub fn n_x(&self) -> usize {
        match self {
            VehicleModel::Affine(m) => m.n_x(),
            VehicleModel::CarLike { .. } => CarLikeModel::N_X,
        }
    }

    pub fn n_u(&self) -> usize {
        match self {
            VehicleModel::Affine(m) => m.n_u(),
            VehicleModel::CarLike { .. } => CarLikeModel::N_U,
        }
    }

    pub fn n_y(&self) -> usize {
        match self {
            VehicleModel::Affine(m) => m.n_y(),
            VehicleModel::CarLike { .. } => CarLikeModel::N_Y,
        }
    }

    pub fn state_bounds(&self) -> &Bounds {
        match self {
            VehicleModel::Affine(m) => &m.state_bounds,
            VehicleModel::CarLike { state_bounds, .. } => state_bounds,
        }
    }

    pub fn input_bounds(&self) -> &Bounds {
        match self {
            VehicleModel::Affine(m) => &m.input_bounds,
            VehicleModel::CarLike { input_bounds, .. } => input_bounds,
        }
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self {
            VehicleModel::Affine(m) => m.output(x, u),
            VehicleModel::CarLike { .. } => CarLikeModel::output_matrix() * x,
        }
    }

    /// `(C, D)` of the output map; linear for every supported model.
    pub fn output_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            VehicleModel::Affine(m) => (m.c_out.clone(), m.d_out.clone()),
            VehicleModel::CarLike { .. } => (
                CarLikeModel::output_matrix(),
                DMatrix::zeros(CarLikeModel::N_Y, CarLikeModel::N_U),
            ),
        }
    }

    pub fn as_affine(&self) -> Option<&AffineModel> {
        match self {
            VehicleModel::Affine(m) => Some(m),
            _ => None,
        }
    }
}

/// One discrete step of `model` under the chosen integrator.
pub fn step(
    model: &VehicleModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    ts: f64,
    method: IntegrationMethod,
) -> Result<DVector<f64>> {
    match model {
        VehicleModel::Affine(m) => {
            if x.len() != m.n_x() {
                return Err(Error::DimensionMismatch {
                    expected: m.n_x(),
                    got: x.len(),
                });
            }
            if u.len() != m.n_u() {
                return Err(Error::DimensionMismatch {
                    expected: m.n_u(),
                    got: u.len(),
                });
            }
            match method {
                IntegrationMethod::Zoh => Ok(m.step(x, u)),
                _ => Err(Error::UnsupportedModel(
                    "discrete affine models step exactly; use Zoh".into(),
                )),
            }
        }
        VehicleModel::CarLike { model: car, .. } => match method {
            IntegrationMethod::ForwardEuler => Ok(x + car.derivative(x, u)? * ts),
            IntegrationMethod::Rk4 => {
                let k1 = car.derivative(x, u)?;
                let k2 = car.derivative(&(x + &k1 * (ts / 2.0)), u)?;
                let k3 = car.derivative(&(x + &k2 * (ts / 2.0)), u)?;
                let k4 = car.derivative(&(x + &k3 * ts), u)?;
                Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (ts / 6.0))
            }
            IntegrationMethod::Zoh => Err(Error::UnsupportedModel(
                "exact hold requires an affine model".into(),
            )),
        },
    }
}

/// Default integrator per model kind: exact hold for affine systems, RK4 for
/// the car.
pub fn default_method(model: &VehicleModel) -> IntegrationMethod {
    match model {
        VehicleModel::Affine(_) => IntegrationMethod::Zoh,
        VehicleModel::CarLike { .. } => IntegrationMethod::Rk4,
    }
}

/// Discrete-time linearization of `step` about `(x_bar, u_bar)` by central
/// finite differences (step `1e-6` scaled per coordinate); the affine drift
/// reproduces `step(x_bar, u_bar)` exactly. Affine models return themselves.
pub fn linearize(
    model: &VehicleModel,
    x_bar: &DVector<f64>,
    u_bar: &DVector<f64>,
    ts: f64,
) -> Result<AffineModel> {
    match model {
        VehicleModel::Affine(m) => Ok(m.clone()),
        VehicleModel::CarLike {
            state_bounds,
            input_bounds,
            ..
        } => {
            let method = IntegrationMethod::Rk4;
            let n_x = model.n_x();
            let n_u = model.n_u();
            let mut a = DMatrix::zeros(n_x, n_x);
            for j in 0..n_x {
                let h = 1e-6 * x_bar[j].abs().max(1.0);
                let mut xp = x_bar.clone();
                xp[j] += h;
                let mut xm = x_bar.clone();
                xm[j] -= h;
                let fp = step(model, &xp, u_bar, ts, method)?;
                let fm = step(model, &xm, u_bar, ts, method)?;
                a.set_column(j, &((fp - fm) / (2.0 * h)));
            }
            let mut b = DMatrix::zeros(n_x, n_u);
            for j in 0..n_u {
                let h = 1e-6 * u_bar[j].abs().max(1.0);
                let mut up = u_bar.clone();
                up[j] += h;
                let mut um = u_bar.clone();
                um[j] -= h;
                let fp = step(model, x_bar, &up, ts, method)?;
                let fm = step(model, x_bar, &um, ts, method)?;
                b.set_column(j, &((fp - fm) / (2.0 * h)));
            }
            let nominal = step(model, x_bar, u_bar, ts, method)?;
            let c = nominal - &a * x_bar - &b * u_bar;
            let (c_out, d_out) = model.output_matrices();
            AffineModel::new(
                a,
                b,
                c,
                c_out,
                d_out,
                state_bounds.clone(),
                input_bounds.clone(),
            )
        }
    }
}

/// Quadratic tracking weights and the reference trajectory.
#[derive(Debug, Clone)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub x_ref: Vec<DVector<f64>>,
}

impl CostWeights {
    /// Validates symmetry, `Q, P >= 0` and `R > 0` by eigenvalue checks.
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        x_ref: Vec<DVector<f64>>,
    ) -> Result<Self> {
        check_symmetric_psd("Q", &q, false)?;
        check_symmetric_psd("R", &r, true)?;
        check_symmetric_psd("P", &p, false)?;
        Ok(CostWeights { q, r, p, x_ref })
    }

    /// Reference at stage `k`, holding the last entry beyond the end.
    pub fn reference(&self, k: usize) -> &DVector<f64> {
        let idx = k.min(self.x_ref.len() - 1);
        &self.x_ref[idx]
    }
}

fn check_symmetric_psd(name: &str, m: &DMatrix<f64>, strict: bool) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!("{name} must be square")));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::InvalidInput(format!(
            "{name} asymmetry {asym} exceeds tolerance"
        )));
    }
    let eig = m.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if strict {
        if min_eig <= 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "{name} must be positive definite (min eigenvalue {min_eig})"
            )));
        }
    } else if min_eig < -1e-8 * scale {
        return Err(Error::InvalidInput(format!(
            "{name} must be positive semidefinite (min eigenvalue {min_eig})"
        )));
    }
    Ok(())
}

/// `||x_K - ref_K||_P^2 + sum_k ||x_k - ref_k||_Q^2 + ||u_k||_R^2`.
pub fn tracking_cost(
    weights: &CostWeights,
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
) -> Result<f64> {
    if states.len() != inputs.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "need K+1 states for K inputs, got {} states and {} inputs",
            states.len(),
            inputs.len()
        )));
    }
    if states.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let horizon = inputs.len();
    let mut cost = 0.0;
    for k in 0..horizon {
        let dx = &states[k] - weights.reference(k);
        cost += (&weights.q * &dx).dot(&dx);
        cost += (&weights.r * &inputs[k]).dot(&inputs[k]);
    }
    let dx = &states[horizon] - weights.reference(horizon);
    cost += (&weights.p * &dx).dot(&dx);
    Ok(cost)
}

/// Shipped default weights for the car: `Q = diag(1,1,0,0,0)`, `P = 1.2 Q`,
/// `R = 0.01`.
pub fn car_default_weights(x_ref: Vec<DVector<f64>>) -> CostWeights {
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0, 0.0]));
    let p = &q * 1.2;
    let r = DMatrix::from_element(1, 1, 0.01);
    CostWeights::new(q, r, p, x_ref).expect("static weights are valid")
}

/// Shipped default weights for the quadrotor: position-only `Q`, `P = Q`,
/// `R = 0.02 I`.
pub fn quadrotor_default_weights(x_ref: Vec<DVector<f64>>) -> CostWeights {
    let mut diag = vec![0.0; 12];
    diag[0] = 1.0;
    diag[2] = 1.0;
    diag[4] = 1.0;
    let q = DMatrix::from_diagonal(&DVector::from_vec(diag));
    let p = q.clone();
    let r = DMatrix::identity(4, 4) * 0.02;
    CostWeights::new(q, r, p, x_ref).expect("static weights are valid")
}
