//! Deterministic simulation of the two-wheel robot: a second-order
//! orientation plant under proportional feedback, open-loop forward motion
//! with an optional heading drift, and a pixel-quantizing position sensor.
//!
//! The orientation channel integrates `ω̇ = -D·ω + K·V`, `θ̇ = ω` with
//! explicit Euler steps; the applied voltage saturates at `±v_max`. While the
//! forward actuator is on the robot moves at constant speed along its heading
//! and the heading picks up the drift rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Camera scale: one pixel spans 400 mm / 60 px.
pub const MM_PER_PIXEL: f64 = 400.0 / 60.0;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("identification is ill-conditioned: {0}")]
    IllConditioned(String),
}

/// Physical constants of the plant and its controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantParams {
    /// Plant gain K in rad/(s²·V).
    pub gain: f64,
    /// Damping D in 1/s.
    pub damping: f64,
    /// Proportional gain of the orientation feedback controller.
    pub kp: f64,
    /// Forward speed in mm/s while the forward actuator is on.
    pub forward_speed: f64,
    /// Heading drift in rad/s while moving forward.
    pub drift: f64,
    /// Actuator saturation in volts.
    pub v_max: f64,
    /// Integration step in seconds.
    pub dt: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            gain: 5.0,
            damping: 2.0,
            kp: 3.12,
            forward_speed: 150.0,
            drift: 0.0,
            v_max: 6.0,
            dt: 0.005,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), SimError> {
        // The negated comparisons also reject NaNs.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        {
            if !(self.gain > 0.0) {
                return Err(SimError::InvalidParams("gain must be positive".into()));
            }
            if !(self.damping > 0.0) {
                return Err(SimError::InvalidParams("damping must be positive".into()));
            }
            if !(self.dt > 0.0 && self.dt <= 0.01) {
                return Err(SimError::InvalidParams(
                    "dt must lie in (0, 0.01] seconds".into(),
                ));
            }
            if !(self.v_max > 0.0) {
                return Err(SimError::InvalidParams("v_max must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Continuous robot state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, wrapped to (-π, π] after every step.
    pub heading: f64,
    /// Angular rate of the orientation plant.
    pub omega: f64,
    pub alert: bool,
    /// Simulated seconds, non-decreasing.
    pub t: f64,
}

impl RobotState {
    pub fn at(x: f64, y: f64, heading: f64) -> Self {
        RobotState { x, y, heading, omega: 0.0, alert: false, t: 0.0 }
    }
}

/// Low-level plant input for one step.
#[derive(Clone, Copy, Debug, Default)]
pub struct ActuatorCmd {
    pub voltage: f64,
    pub forward: bool,
}

/// References produced by the hybrid layer for the closed-loop simulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct MotionRefs {
    pub heading_ref: f64,
    pub forward: bool,
}

/// Quantized camera measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub x_px: i64,
    pub y_px: i64,
    pub heading: f64,
}

impl Measurement {
    pub fn position_mm(&self) -> (f64, f64) {
        (self.x_px as f64 * MM_PER_PIXEL, self.y_px as f64 * MM_PER_PIXEL)
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * std::f64::consts::PI);
    if w > std::f64::consts::PI {
        w -= 2.0 * std::f64::consts::PI;
    }
    w
}

/// One explicit-Euler step of the plant. Derivatives are evaluated at the
/// current state and the voltage is clamped to the saturation bound.
pub fn step_dynamics(s: &RobotState, cmd: &ActuatorCmd, p: &PlantParams) -> RobotState {
    let v = cmd.voltage.clamp(-p.v_max, p.v_max);
    let omega_dot = -p.damping * s.omega + p.gain * v;
    let heading_dot = s.omega + if cmd.forward { p.drift } else { 0.0 };
    let (dx, dy) = if cmd.forward {
        (p.forward_speed * s.heading.cos(), p.forward_speed * s.heading.sin())
    } else {
        (0.0, 0.0)
    };
    RobotState {
        x: s.x + p.dt * dx,
        y: s.y + p.dt * dy,
        heading: wrap_angle(s.heading + p.dt * heading_dot),
        omega: s.omega + p.dt * omega_dot,
        alert: s.alert,
        t: s.t + p.dt,
    }
}

/// Proportional orientation controller: `V = Kp · wrap(θ_ref - θ)`, clamped.
/// The wrap keeps the commanded rotation the shortest one.
pub fn control_orientation(heading_ref: f64, heading: f64, p: &PlantParams) -> f64 {
    (p.kp * wrap_angle(heading_ref - heading)).clamp(-p.v_max, p.v_max)
}

/// Owns the robot state and steps it against hybrid-layer references.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub state: RobotState,
    pub params: PlantParams,
    noise_std_px: f64,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(params: PlantParams, state: RobotState) -> Result<Self, SimError> {
        params.validate()?;
        Ok(Simulator { state, params, noise_std_px: 0.0, rng: ChaCha8Rng::seed_from_u64(0) })
    }

    /// Enables zero-mean gaussian sensor noise (in pixels) drawn from a
    /// seeded generator. Off by default.
    pub fn with_sensor_noise(mut self, std_px: f64, seed: u64) -> Self {
        self.noise_std_px = std_px;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    /// Closes the orientation loop over the references and advances one
    /// step; returns the voltage that was applied.
    pub fn tick(&mut self, refs: &MotionRefs) -> f64 {
        let v = control_orientation(refs.heading_ref, self.state.heading, &self.params);
        self.state = step_dynamics(
            &self.state,
            &ActuatorCmd { voltage: v, forward: refs.forward },
            &self.params,
        );
        v
    }

    pub fn set_alert(&mut self, flag: bool) {
        self.state.alert = flag;
    }

    /// Position quantized to camera pixels (round to nearest), heading passed
    /// through; optional seeded noise is added before quantization.
    pub fn sense(&mut self) -> Measurement {
        let (mut x, mut y) = (self.state.x, self.state.y);
        if self.noise_std_px > 0.0 {
            let std_mm = self.noise_std_px * MM_PER_PIXEL;
            x += gaussian(&mut self.rng) * std_mm;
            y += gaussian(&mut self.rng) * std_mm;
        }
        Measurement {
            x_px: (x / MM_PER_PIXEL).round() as i64,
            y_px: (y / MM_PER_PIXEL).round() as i64,
            heading: self.state.heading,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniforms in (0, 1].
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Fits the discretized orientation model to a recorded constant-voltage
/// step response `(t, θ)` taken from rest. The gain enters linearly, so for
/// each candidate damping the best gain has a closed form; the damping is
/// found by a coarse log-grid search refined with golden sections.
pub fn identify_plant(samples: &[(f64, f64)], voltage: f64) -> Result<(f64, f64), SimError> {
    if samples.len() < 8 {
        return Err(SimError::IllConditioned("need at least 8 samples".into()));
    }
    if voltage == 0.0 {
        return Err(SimError::IllConditioned("zero excitation voltage".into()));
    }
    let dt = samples[1].0 - samples[0].0;
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN times
    if !(dt > 0.0) {
        return Err(SimError::IllConditioned("non-increasing sample times".into()));
    }
    let theta: Vec<f64> = samples.iter().map(|&(_, th)| th).collect();
    let spread = theta.iter().cloned().fold(f64::MIN, f64::max)
        - theta.iter().cloned().fold(f64::MAX, f64::min);
    if spread.abs() < 1e-12 {
        return Err(SimError::IllConditioned("response carries no variation".into()));
    }

    // Unit-gain Euler rollout for a candidate damping.
    let rollout = |damping: f64| -> Vec<f64> {
        let mut f = Vec::with_capacity(theta.len());
        let mut th = 0.0f64;
        let mut om = 0.0f64;
        for _ in 0..theta.len() {
            f.push(th);
            let om_dot = -damping * om + voltage;
            th += dt * om;
            om += dt * om_dot;
        }
        f
    };
    let gain_and_sse = |damping: f64| -> (f64, f64) {
        let f = rollout(damping);
        let ff: f64 = f.iter().map(|v| v * v).sum();
        if ff < 1e-12 {
            return (0.0, f64::INFINITY);
        }
        let tf: f64 = f.iter().zip(&theta).map(|(a, b)| a * b).sum();
        let k = tf / ff;
        let sse: f64 = f.iter().zip(&theta).map(|(a, b)| (k * a - b).powi(2)).sum();
        (k, sse)
    };

    let mut best = (f64::INFINITY, 0.0, 0.0); // (sse, gain, damping)
    let mut d = 0.02f64;
    while d <= 60.0 {
        let (k, sse) = gain_and_sse(d);
        if sse < best.0 {
            best = (sse, k, d);
        }
        d *= 1.15;
    }
    // Golden-section refinement around the best grid point.
    let (mut lo, mut hi) = (best.2 / 1.2, best.2 * 1.2);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if gain_and_sse(m1).1 < gain_and_sse(m2).1 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let damping = 0.5 * (lo + hi);
    let (gain, sse) = gain_and_sse(damping);
    if !gain.is_finite() || !sse.is_finite() || gain <= 0.0 {
        return Err(SimError::IllConditioned("no stable fit found".into()));
    }
    Ok((gain, damping))
}

/// A scripted 10-second reference run used as the step-size robustness
/// benchmark: rotate in place to 0.8 rad, drive forward along it, stop.
pub fn canonical_manoeuvre(params: &PlantParams) -> RobotState {
    let mut sim = Simulator::new(*params, RobotState::at(0.0, 0.0, 0.0)).unwrap();
    let steps = (10.0 / params.dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * params.dt;
        let refs = if t < 6.0 {
            MotionRefs { heading_ref: 0.8, forward: false }
        } else if t < 9.0 {
            MotionRefs { heading_ref: 0.8, forward: true }
        } else {
            MotionRefs { heading_ref: 0.8, forward: false }
        };
        sim.tick(&refs);
    }
    sim.state
}
