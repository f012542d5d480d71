//! Linear lateral path-tracking model in the lane frame.
//!
//! The state is `[Δ, Δ̇, θ, θ̇]`: lateral offset from the lane centerline,
//! its rate, heading error and heading-error rate. The single input is the
//! front steering angle. Road curvature is taken as zero.

use nalgebra::{Matrix4, Vector4};

use crate::error::{invalid, Result};

/// Lane-frame state `[Δ (m), Δ̇ (m/s), θ (rad), θ̇ (rad/s)]`.
pub type StateVec = Vector4<f64>;

/// Additive state disturbance, same units as [`StateVec`].
pub type Disturbance = Vector4<f64>;

/// Front steering angle (rad).
pub type ControlInput = f64;

/// Physical vehicle parameters and the discretisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Step size (s).
    pub dt: f64,
    /// Constant longitudinal speed (m/s).
    pub vx: f64,
    /// Mass (kg).
    pub mass: f64,
    /// Yaw moment of inertia (kg m²).
    pub iz: f64,
    /// CoG to front axle (m).
    pub lf: f64,
    /// CoG to rear axle (m).
    pub lr: f64,
    /// Front cornering stiffness (N/rad).
    pub caf: f64,
    /// Rear cornering stiffness (N/rad).
    pub car: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            dt: 0.01,
            vx: 20.0,
            mass: 1150.0,
            iz: 2000.0,
            lf: 1.27,
            lr: 1.37,
            caf: 80_000.0,
            car: 80_000.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("dt", self.dt),
            ("vx", self.vx),
            ("mass", self.mass),
            ("iz", self.iz),
            ("lf", self.lf),
            ("lr", self.lr),
            ("caf", self.caf),
            ("car", self.car),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        if self.dt >= 1.0 {
            return Err(invalid("dt", format!("must be < 1 s, got {}", self.dt)));
        }
        Ok(())
    }

    /// Continuous-time accelerations `(Δ̈, θ̈)` at zero curvature.
    pub fn continuous_accel(&self, x: &StateVec, u: ControlInput) -> (f64, f64) {
        let Self {
            vx,
            mass,
            iz,
            lf,
            lr,
            caf,
            car,
            ..
        } = *self;
        let c_sum = 2.0 * caf + 2.0 * car;
        let c_mom = 2.0 * lf * caf - 2.0 * lr * car;
        let c_sq = 2.0 * lf * lf * caf + 2.0 * lr * lr * car;

        let lat = -c_sum / (mass * vx) * x[1] + c_sum / mass * x[2] - c_mom / (mass * vx) * x[3]
            + 2.0 * caf / mass * u;
        let yaw = -c_mom / (iz * vx) * x[1] + c_mom / iz * x[2] - c_sq / (iz * vx) * x[3]
            + 2.0 * lf * caf / iz * u;
        (lat, yaw)
    }
}

/// Discrete-time pair `x⁺ = A x + B u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
}

impl LinearModel {
    /// Euler discretisation of the lateral dynamics.
    pub fn new(params: &VehicleParams) -> Result<Self> {
        params.validate()?;
        let VehicleParams {
            dt,
            vx,
            mass,
            iz,
            lf,
            lr,
            caf,
            car,
        } = *params;

        let c_sum = (2.0 * caf + 2.0 * car) * dt;
        let c_mom = (2.0 * lf * caf - 2.0 * lr * car) * dt;
        let c_sq = (2.0 * lf * lf * caf + 2.0 * lr * lr * car) * dt;

        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, dt,                          0.0,          0.0,
            0.0, 1.0 - c_sum / (mass * vx),   c_sum / mass, -c_mom / (mass * vx),
            0.0, 0.0,                         1.0,          dt,
            0.0, -c_mom / (iz * vx),          c_mom / iz,   1.0 - c_sq / (iz * vx),
        );
        let b = Vector4::new(0.0, 2.0 * caf * dt / mass, 0.0, 2.0 * lf * caf * dt / iz);
        Ok(Self { a, b })
    }

    #[inline]
    pub fn step(&self, x: &StateVec, u: ControlInput) -> StateVec {
        self.a * x + self.b * u
    }

    /// `step(x, u) + sigma * w`.
    #[inline]
    pub fn step_disturbed(
        &self,
        x: &StateVec,
        u: ControlInput,
        w: &Disturbance,
        sigma: f64,
    ) -> StateVec {
        self.step(x, u) + w * sigma
    }

    /// Rolls the model forward from `x0` under `controls`, returning
    /// `controls.len() + 1` states.
    pub fn rollout(&self, x0: &StateVec, controls: &[ControlInput]) -> Vec<StateVec> {
        let mut xs = Vec::with_capacity(controls.len() + 1);
        xs.push(*x0);
        for &u in controls {
            let next = self.step(xs.last().unwrap(), u);
            xs.push(next);
        }
        xs
    }
}

/// Convenience wrapper around [`LinearModel::new`].
pub fn build_model(params: &VehicleParams) -> Result<LinearModel> {
    LinearModel::new(params)
}
