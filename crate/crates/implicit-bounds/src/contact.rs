//! One-dimensional point mass over a rigid ground, integrated with an
//! inelastic complementarity time step.
//!
//! The model has a single learnable scalar `theta`, the believed ground
//! height. Three views of one step are provided:
//!
//! * `step_explicit` — the explicit one-step velocity map,
//! * `g_eval` — the impulse-parameterized prediction `v - a_grav*dt + lambda/m`,
//! * `h_eval` — the scalar complementarity violation penalty, zero exactly
//!   when the end-of-step gap and the impulse are complementary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive part, `max(0, x)`.
#[inline]
pub fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Negative part as a nonnegative number, `max(0, -x)`.
#[inline]
pub fn neg(x: f64) -> f64 {
    (-x).max(0.0)
}

/// How far the sampling box extends below the ground, in meters. Slightly
/// penetrating start states keep the violation terms exercised.
pub const PENETRATION_PAD: f64 = 0.1;

/// Physical constants and the learnable ground height of the toy system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Mass (kg).
    pub m: f64,
    /// Time step (s).
    pub dt: f64,
    /// Gravitational acceleration (m/s^2), positive downward.
    pub a_grav: f64,
    /// Ground height parameter (m). The only learnable quantity.
    pub theta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { m: 1.0, dt: 0.005, a_grav: 9.81, theta: 0.0 }
    }
}

impl ModelParams {
    pub fn new(m: f64, dt: f64, a_grav: f64, theta: f64) -> Result<Self> {
        let p = ModelParams { m, dt, a_grav, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_finite() || self.m <= 0.0 {
            return Err(Error::InvalidParameter(format!("m must be > 0, got {}", self.m)));
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {}", self.dt)));
        }
        if !self.a_grav.is_finite() || self.a_grav <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "a_grav must be > 0, got {}",
                self.a_grav
            )));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter(format!("theta must be finite, got {}", self.theta)));
        }
        Ok(())
    }

    /// Same constants with a different ground height.
    pub fn with_theta(&self, theta: f64) -> Self {
        ModelParams { theta, ..*self }
    }

    /// Free-fall velocity decrement over one step, `a_grav * dt`.
    #[inline]
    pub fn free_fall_delta(&self) -> f64 {
        self.a_grav * self.dt
    }

    /// Argument of the positive-part term of the explicit step:
    /// `-v + a_grav*dt + (theta - z)/dt`. Positive iff the contact impulse
    /// activates; `m *` this value is the impulse that lands the mass
    /// exactly on the ground at the end of the step.
    #[inline]
    pub fn contact_activation(&self, x: State) -> f64 {
        -x.v + self.free_fall_delta() + (self.theta - x.z) / self.dt
    }
}

/// The boxed data/parameter/impulse domain over which suprema and bounds
/// are taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBounds {
    /// Maximum end-of-step gap (m).
    pub phi_max: f64,
    /// Maximum speed (m/s); also bounds the output velocity of a datapoint.
    pub v_max: f64,
    /// Maximum contact impulse magnitude over the domain (N·s),
    /// `m * (v_max + a_grav*dt)`.
    pub lambda_max: f64,
    /// Parameter-norm bound for theta.
    pub b_theta: f64,
    /// Impulse-norm bound; at least `lambda_max`.
    pub b_lambda: f64,
    /// Lowest sampled position (m).
    pub z_lo: f64,
    /// Highest sampled position (m).
    pub z_hi: f64,
}

impl DomainBounds {
    /// Builds the domain box around `params.theta`: positions in
    /// `[theta - PENETRATION_PAD, theta + phi_max]`, speeds in
    /// `[-v_max, v_max]`, impulse bound `lambda_max = m*(v_max + a_grav*dt)`.
    pub fn from_params(params: &ModelParams, phi_max: f64, v_max: f64, b_theta: f64) -> Result<Self> {
        params.validate()?;
        for (name, v) in [("phi_max", phi_max), ("v_max", v_max), ("b_theta", b_theta)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        let lambda_max = params.m * (v_max + params.free_fall_delta());
        Ok(DomainBounds {
            phi_max,
            v_max,
            lambda_max,
            b_theta,
            b_lambda: lambda_max,
            z_lo: params.theta - PENETRATION_PAD,
            z_hi: params.theta + phi_max,
        })
    }

    /// The default box: `phi_max = 8`, `v_max = 15`, `b_theta = 8`.
    pub fn defaults(params: &ModelParams) -> Self {
        DomainBounds::from_params(params, 8.0, 15.0, 8.0)
            .expect("default domain bounds are valid")
    }
}

/// Position and velocity of the point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Position (m).
    pub z: f64,
    /// Velocity (m/s).
    pub v: f64,
}

impl State {
    pub fn new(z: f64, v: f64) -> Self {
        State { z, v }
    }

    pub fn is_finite(&self) -> bool {
        self.z.is_finite() && self.v.is_finite()
    }
}

/// Velocity after one time step (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextVelocity(pub f64);

/// End-of-step gap together with a contact impulse; classifies which
/// smooth region of the violation penalty is active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPair {
    /// Signed end-of-step gap `z + v'*dt - theta` (m).
    pub phi: f64,
    /// Contact impulse (N·s).
    pub lambda: f64,
}

/// The four smooth regions of the violation penalty. Region boundaries
/// (`phi = 0` or `lambda = 0`) are open; the penalty itself is evaluated
/// with `pos`/`neg` so boundary points need no dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HRegion {
    /// `phi < 0`, `lambda < 0`: penetration and pulling.
    NegNeg,
    /// `phi >= 0`, `lambda < 0`: pulling at a distance.
    PosNeg,
    /// `phi < 0`, `lambda >= 0`: penetration.
    NegPos,
    /// `phi >= 0`, `lambda >= 0`: force at a distance.
    PosPos,
}

impl GapPair {
    pub fn new(phi: f64, lambda: f64) -> Self {
        GapPair { phi, lambda }
    }

    /// Complementarity violation, `neg(phi)^2/2 + neg(lambda)^2/2 + pos(phi)*pos(lambda)`.
    #[inline]
    pub fn violation(&self) -> f64 {
        0.5 * neg(self.phi) * neg(self.phi)
            + 0.5 * neg(self.lambda) * neg(self.lambda)
            + pos(self.phi) * pos(self.lambda)
    }

    /// Which smooth region the pair lies in; boundaries fold into the
    /// nonnegative side.
    pub fn region(&self) -> HRegion {
        match (self.phi < 0.0, self.lambda < 0.0) {
            (true, true) => HRegion::NegNeg,
            (false, true) => HRegion::PosNeg,
            (true, false) => HRegion::NegPos,
            (false, false) => HRegion::PosPos,
        }
    }
}

/// One explicit step: `v - a_grav*dt + pos(-v + a_grav*dt + (theta - z)/dt)`.
///
/// The positive-part term is the ground impulse divided by mass: zero in
/// free fall, otherwise exactly enough to land on the ground at the end of
/// the step.
#[inline]
pub fn step_explicit(params: &ModelParams, x: State) -> NextVelocity {
    NextVelocity(x.v - params.free_fall_delta() + pos(params.contact_activation(x)))
}

/// Impulse-parameterized prediction: `v - a_grav*dt + lambda/m`.
#[inline]
pub fn g_eval(params: &ModelParams, x: State, lambda: f64) -> NextVelocity {
    NextVelocity(x.v - params.free_fall_delta() + lambda / params.m)
}

/// Signed end-of-step gap `z + v'*dt - theta`.
#[inline]
pub fn end_gap(params: &ModelParams, x: State, y: NextVelocity) -> f64 {
    x.z + y.0 * params.dt - params.theta
}

/// Complementarity violation of `(x, y, lambda)`. Nonnegative; zero iff the
/// end-of-step gap and the impulse are both nonnegative with zero product.
#[inline]
pub fn h_eval(params: &ModelParams, x: State, y: NextVelocity, lambda: f64) -> f64 {
    GapPair::new(end_gap(params, x, y), lambda).violation()
}

/// Rolls the explicit dynamics forward, updating `z` by `v' * dt`.
/// Returns `steps + 1` states starting at `x0`.
pub fn simulate_trajectory(params: &ModelParams, x0: State, steps: usize) -> Result<Vec<State>> {
    if !x0.is_finite() {
        return Err(Error::NonFinite(format!("initial state ({}, {})", x0.z, x0.v)));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(x0);
    let mut x = x0;
    for _ in 0..steps {
        let v_next = step_explicit(params, x).0;
        x = State::new(x.z + v_next * params.dt, v_next);
        traj.push(x);
    }
    Ok(traj)
}
