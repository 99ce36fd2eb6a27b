//! Cart-pole plant.
//!
//! State ordering is `(theta, theta_dot, x, x_dot)` with `theta = 0` upright and
//! `theta = pi` hanging. Positive `theta` leans the pole toward `+x`; a positive
//! force pushes the cart toward `+x`.
//!
//! ```text
//! theta_dd = ((M+m) g sin(theta) - cos(theta) (F + m l theta_d^2 sin(theta)))
//!            / ((4/3)(M+m) l - m l cos^2(theta))
//! x_dd     = (F + m l (theta_d^2 sin(theta) - theta_dd cos(theta))) / (M+m)
//! ```

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("physics parameter `{name}` must be {requirement}, got {value}")]
    OutOfRange {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },
}

/// Plant constants. `friction` only enters the linearization in
/// [`crate::control::linearize_upright`]; the nonlinear plant is frictionless.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    /// Cart mass, kg.
    pub cart_mass: f64,
    /// Pole mass, kg.
    pub pole_mass: f64,
    /// Gravity, m/s^2.
    pub gravity: f64,
    /// Pivot to pole center of mass, m.
    pub half_length: f64,
    /// Control and integration period, s.
    pub tau: f64,
    /// Actuator magnitude, N.
    pub force_mag: f64,
    /// Cart viscous friction, N*s/m.
    pub friction: f64,
    pub integrator: Integrator,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            cart_mass: 0.711,
            pole_mass: 0.209,
            gravity: 9.8,
            half_length: 0.326,
            tau: 0.02,
            force_mag: 10.0,
            friction: 0.0,
            integrator: Integrator::Euler,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = [
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("gravity", self.gravity),
            ("half_length", self.half_length),
            ("tau", self.tau),
            ("force_mag", self.force_mag),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::OutOfRange {
                    name,
                    requirement: "finite and > 0",
                    value,
                });
            }
        }
        if !(self.friction.is_finite() && self.friction >= 0.0) {
            return Err(ParamsError::OutOfRange {
                name: "friction",
                requirement: "finite and >= 0",
                value: self.friction,
            });
        }
        if let Integrator::Rk4 { substeps } = self.integrator {
            if substeps == 0 {
                return Err(ParamsError::OutOfRange {
                    name: "integrator.substeps",
                    requirement: ">= 1",
                    value: 0.0,
                });
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.cart_mass + self.pole_mass
    }

    pub fn pole_mass_length(&self) -> f64 {
        self.pole_mass * self.half_length
    }
}

/// Integration scheme for [`step`]. Euler is the benchmark-compatible default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    /// One explicit Euler step per period: positions advance with the old
    /// velocities, velocities with accelerations at the old state.
    #[default]
    Euler,
    /// Classical RK4 with `substeps` equal sub-intervals per period.
    Rk4 { substeps: u32 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub theta: f64,
    pub theta_dot: f64,
    pub x: f64,
    pub x_dot: f64,
}

impl State {
    pub const UPRIGHT: State = State::new(0.0, 0.0, 0.0, 0.0);
    pub const HANGING: State = State::new(PI, 0.0, 0.0, 0.0);

    pub const fn new(theta: f64, theta_dot: f64, x: f64, x_dot: f64) -> Self {
        Self {
            theta,
            theta_dot,
            x,
            x_dot,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.theta, self.theta_dot, self.x, self.x_dot]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    /// Pole angle wrapped to `(-pi, pi]`.
    pub fn wrapped_theta(&self) -> f64 {
        wrap_angle(self.theta)
    }

    fn add_scaled(&self, d: &[f64; 4], h: f64) -> State {
        State::new(
            self.theta + h * d[0],
            self.theta_dot + h * d[1],
            self.x + h * d[2],
            self.x_dot + h * d[3],
        )
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = theta.rem_euclid(two_pi);
    if w > PI {
        w -= two_pi;
    }
    w
}

/// Returns `(theta_ddot, x_ddot)` for the given state and applied force.
pub fn accelerations(s: &State, force: f64, p: &PhysicsParams) -> (f64, f64) {
    let (sin, cos) = s.theta.sin_cos();
    let total = p.total_mass();
    let ml = p.pole_mass_length();
    let denom = (4.0 / 3.0) * total * p.half_length - ml * cos * cos;
    let theta_ddot =
        (total * p.gravity * sin - cos * (force + ml * s.theta_dot * s.theta_dot * sin)) / denom;
    let x_ddot = (force + ml * (s.theta_dot * s.theta_dot * sin - theta_ddot * cos)) / total;
    (theta_ddot, x_ddot)
}

fn derivative(s: &State, force: f64, p: &PhysicsParams) -> [f64; 4] {
    let (theta_ddot, x_ddot) = accelerations(s, force, p);
    [s.theta_dot, theta_ddot, s.x_dot, x_ddot]
}

/// Advances the plant by one control period `p.tau` under a constant force.
pub fn step(s: &State, force: f64, p: &PhysicsParams) -> State {
    match p.integrator {
        Integrator::Euler => s.add_scaled(&derivative(s, force, p), p.tau),
        Integrator::Rk4 { substeps } => {
            let n = substeps.max(1);
            let h = p.tau / f64::from(n);
            (0..n).fold(*s, |acc, _| rk4_substep(&acc, force, p, h))
        }
    }
}

fn rk4_substep(s: &State, force: f64, p: &PhysicsParams, h: f64) -> State {
    let k1 = derivative(s, force, p);
    let k2 = derivative(&s.add_scaled(&k1, h / 2.0), force, p);
    let k3 = derivative(&s.add_scaled(&k2, h / 2.0), force, p);
    let k4 = derivative(&s.add_scaled(&k3, h), force, p);
    let mut d = [0.0; 4];
    for i in 0..4 {
        d[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    s.add_scaled(&d, h)
}
