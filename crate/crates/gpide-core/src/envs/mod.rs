//! Tracking environments: mass-spring-damper chains, planar navigation
//! with static friction, and a reduced tokamak energy/rotation simulator.
//! All episodes are 100 steps; velocities and internal derivatives are
//! hidden from the observations.

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const EPISODE_LEN: usize = 100;
pub const TRACKING_DT: f64 = 0.17;
pub const TOKAMAK_DT: f64 = 0.025;
pub const GRAVITY: f64 = 9.81;
/// Speed below which the agent counts as at rest for static friction.
pub const REST_SPEED: f64 = 1e-3;

pub const TOKAMAK_C_E: f64 = 200.0;
pub const TOKAMAK_C_ROT: f64 = 80.0;
pub const TOKAMAK_TAU_M: f64 = 0.1;
pub const TOKAMAK_C_BETA: f64 = 5.0;
pub const TOKAMAK_P_MIN: f64 = 0.1e6;
pub const TOKAMAK_P_MAX: f64 = 12.0e6;
pub const TOKAMAK_T_MIN: f64 = -2.0;
pub const TOKAMAK_T_MAX: f64 = 10.0;
pub const TOKAMAK_DP_MAX: f64 = 1.0e6;
pub const TOKAMAK_DT_MAX: f64 = 0.875;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("setting parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Msd,
    Dmsd,
    Navigation,
    Tokamak,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Msd => "msd",
            EnvKind::Dmsd => "dmsd",
            EnvKind::Navigation => "navigation",
            EnvKind::Tokamak => "tokamak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "msd" => Some(EnvKind::Msd),
            "dmsd" => Some(EnvKind::Dmsd),
            "navigation" => Some(EnvKind::Navigation),
            "tokamak" => Some(EnvKind::Tokamak),
            _ => None,
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::Msd => 3,
            _ => 6,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            EnvKind::Msd => 1,
            _ => 2,
        }
    }

    /// Number of tracked channels M (signal/reference pairs).
    pub fn num_channels(self) -> usize {
        self.action_dim()
    }

    pub fn dt(self) -> f64 {
        match self {
            EnvKind::Tokamak => TOKAMAK_DT,
            _ => TRACKING_DT,
        }
    }

    /// Per-step bound on the change of each actuator channel, in the
    /// actuator's own units.
    pub fn action_delta_bound(self) -> Vec<f64> {
        match self {
            EnvKind::Msd => vec![2.0],
            EnvKind::Dmsd | EnvKind::Navigation => vec![2.0, 2.0],
            EnvKind::Tokamak => vec![TOKAMAK_DP_MAX, TOKAMAK_DT_MAX],
        }
    }

    /// Absolute actuator box as (lo, hi) per channel.
    pub fn actuator_bounds(self) -> Vec<(f64, f64)> {
        match self {
            EnvKind::Msd => vec![(-10.0, 10.0)],
            EnvKind::Dmsd => vec![(-30.0, 30.0), (-30.0, 30.0)],
            EnvKind::Navigation => vec![(-10.0, 10.0), (-10.0, 10.0)],
            EnvKind::Tokamak => vec![
                (TOKAMAK_P_MIN, TOKAMAK_P_MAX),
                (TOKAMAK_T_MIN, TOKAMAK_T_MAX),
            ],
        }
    }

    /// Indices of the tracked signals and their references within the
    /// observation vector.
    pub fn signal_indices(self) -> (Vec<usize>, Vec<usize>) {
        match self {
            EnvKind::Msd => (vec![0], vec![1]),
            _ => (vec![0, 1], vec![2, 3]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variation {
    Fixed,
    Small,
    Large,
    NoFriction,
    Friction,
    Sim,
}

impl Variation {
    pub fn name(self) -> &'static str {
        match self {
            Variation::Fixed => "fixed",
            Variation::Small => "small",
            Variation::Large => "large",
            Variation::NoFriction => "no-friction",
            Variation::Friction => "friction",
            Variation::Sim => "sim",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fixed" => Some(Variation::Fixed),
            "small" => Some(Variation::Small),
            "large" => Some(Variation::Large),
            "no-friction" => Some(Variation::NoFriction),
            "friction" => Some(Variation::Friction),
            "sim" => Some(Variation::Sim),
            _ => None,
        }
    }

    pub fn valid_for(self, kind: EnvKind) -> bool {
        match kind {
            EnvKind::Msd | EnvKind::Dmsd => {
                matches!(self, Variation::Fixed | Variation::Small | Variation::Large)
            }
            EnvKind::Navigation => matches!(self, Variation::NoFriction | Variation::Friction),
            EnvKind::Tokamak => matches!(self, Variation::Sim),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SystemParams {
    Msd {
        mass: f64,
        spring: f64,
        damping: f64,
    },
    Dmsd {
        mass: [f64; 2],
        spring: [f64; 3],
        damping: [f64; 3],
    },
    Navigation {
        mass: f64,
        friction: f64,
        static_prop: f64,
    },
    Tokamak {
        minor_radius: f64,
        current: f64,
        field: f64,
    },
}

/// Everything an episode needs besides the action sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSetting {
    pub kind: EnvKind,
    pub params: SystemParams,
    pub targets: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub rng_seed: u64,
}

fn sample_positive_normal(rng: &mut impl Rng, mean: f64, sd: f64) -> f64 {
    let dist = Normal::new(mean, sd).unwrap();
    loop {
        let v = dist.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
}

fn msd_param_ranges(variation: Variation) -> [(f64, f64); 3] {
    // (damping, spring, mass)
    match variation {
        Variation::Fixed => [(4.0, 4.0), (2.0, 2.0), (20.0, 20.0)],
        Variation::Small => [(3.5, 5.5), (1.75, 3.0), (17.5, 40.0)],
        Variation::Large => [(2.0, 10.0), (0.5, 6.0), (10.0, 100.0)],
        _ => unreachable!(),
    }
}

fn sample_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

pub fn sample_setting(kind: EnvKind, variation: Variation, rng: &mut impl Rng) -> EpisodeSetting {
    assert!(
        variation.valid_for(kind),
        "variation {} is not valid for environment {}",
        variation.name(),
        kind.name()
    );
    let rng_seed: u64 = rng.gen();
    match kind {
        EnvKind::Msd => {
            let [c, k, m] = msd_param_ranges(variation);
            let params = SystemParams::Msd {
                mass: sample_uniform(rng, m.0, m.1),
                spring: sample_uniform(rng, k.0, k.1),
                damping: sample_uniform(rng, c.0, c.1),
            };
            let targets = vec![sample_uniform(rng, -1.5, 1.5)];
            EpisodeSetting { kind, params, targets, initial_state: vec![0.0; 2], rng_seed }
        }
        EnvKind::Dmsd => {
            let [c, k, m] = msd_param_ranges(variation);
            let params = SystemParams::Dmsd {
                mass: [sample_uniform(rng, m.0, m.1), sample_uniform(rng, m.0, m.1)],
                spring: [
                    sample_uniform(rng, k.0, k.1),
                    sample_uniform(rng, k.0, k.1),
                    sample_uniform(rng, k.0, k.1),
                ],
                damping: [
                    sample_uniform(rng, c.0, c.1),
                    sample_uniform(rng, c.0, c.1),
                    sample_uniform(rng, c.0, c.1),
                ],
            };
            let targets = vec![sample_uniform(rng, -1.5, 1.5), sample_uniform(rng, -1.5, 1.5)];
            EpisodeSetting { kind, params, targets, initial_state: vec![0.0; 4], rng_seed }
        }
        EnvKind::Navigation => {
            let (friction, static_prop, mass) = match variation {
                Variation::NoFriction => (0.0, 0.0, sample_uniform(rng, 15.0, 25.0)),
                Variation::Friction => (
                    sample_uniform(rng, 0.05, 0.25),
                    sample_uniform(rng, 0.25, 0.75),
                    sample_uniform(rng, 5.0, 35.0),
                ),
                _ => unreachable!(),
            };
            let params = SystemParams::Navigation { mass, friction, static_prop };
            let targets = vec![sample_uniform(rng, -5.0, 5.0), sample_uniform(rng, -5.0, 5.0)];
            EpisodeSetting { kind, params, targets, initial_state: vec![0.0; 4], rng_seed }
        }
        EnvKind::Tokamak => {
            let minor_radius = sample_positive_normal(rng, 0.589, 0.02);
            let current = sample_positive_normal(rng, 1.0e6, 1.0e5);
            let field = sample_positive_normal(rng, 2.75, 0.1);
            let targets = vec![sample_uniform(rng, 1.75, 2.75), sample_uniform(rng, 25.0, 50.0)];
            // "relatively small" initial plasma state: invert beta_N for E
            let beta0 = sample_uniform(rng, 0.5, 1.0);
            let e0 = beta0 * current / (TOKAMAK_C_BETA * minor_radius * field);
            let v0 = sample_uniform(rng, 5.0, 15.0);
            EpisodeSetting {
                kind,
                params: SystemParams::Tokamak { minor_radius, current, field },
                targets,
                initial_state: vec![e0, v0],
                rng_seed,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// One tokamak integration step with the smoothed energy derivative.
/// Returns (E', v_rot', Edot').
pub fn tokamak_dynamics(
    e: f64,
    v_rot: f64,
    p: f64,
    t: f64,
    current: f64,
    field: f64,
    prev_edot: f64,
) -> (f64, f64, f64) {
    assert!(p > 0.0, "tokamak power must be positive");
    let tau_e = TOKAMAK_C_E * current.powf(0.95) * field.powf(0.15) * p.powf(-0.69);
    let edot = 0.5 * (p - e / tau_e) + 0.5 * prev_edot;
    let e_next = e + TOKAMAK_DT * edot;
    let vdot = TOKAMAK_C_ROT * t - v_rot / TOKAMAK_TAU_M;
    let v_next = v_rot + TOKAMAK_DT * vdot;
    (e_next, v_next, edot)
}

pub fn tokamak_tau_e(current: f64, field: f64, p: f64) -> f64 {
    TOKAMAK_C_E * current.powf(0.95) * field.powf(0.15) * p.powf(-0.69)
}

pub fn tokamak_beta_n(minor_radius: f64, field: f64, current: f64, e: f64) -> f64 {
    TOKAMAK_C_BETA * (minor_radius * field / current) * e
}

/// Net force on the navigation agent after friction. At rest, applied
/// forces within the static threshold are cancelled exactly.
pub fn friction_force(
    applied: [f64; 2],
    velocity: [f64; 2],
    mass: f64,
    friction: f64,
    static_prop: f64,
) -> [f64; 2] {
    if friction == 0.0 {
        return applied;
    }
    let mu_s = static_prop * friction;
    let mu_k = (1.0 - static_prop) * friction;
    let speed = (velocity[0] * velocity[0] + velocity[1] * velocity[1]).sqrt();
    let normal = mass * GRAVITY;
    if speed < REST_SPEED {
        let mag = (applied[0] * applied[0] + applied[1] * applied[1]).sqrt();
        if mag <= mu_s * normal {
            return [0.0, 0.0];
        }
        // breakaway: kinetic friction opposes the applied direction
        let k = mu_k * normal / mag;
        return [applied[0] - k * applied[0], applied[1] - k * applied[1]];
    }
    let k = mu_k * normal / speed;
    [applied[0] - k * velocity[0], applied[1] - k * velocity[1]]
}

/// A running episode. Value-semantic: cloning forks the trajectory.
#[derive(Clone, Debug)]
pub struct Env {
    pub setting: EpisodeSetting,
    state: Vec<f64>,
    actuator: Vec<f64>,
    prev_edot: f64,
    step_count: usize,
    done: bool,
}

impl Env {
    pub fn reset(setting: EpisodeSetting) -> (Env, StepResult) {
        let actuator = match setting.kind {
            EnvKind::Msd => vec![0.0],
            EnvKind::Dmsd | EnvKind::Navigation => vec![0.0, 0.0],
            EnvKind::Tokamak => vec![TOKAMAK_P_MIN, 0.0],
        };
        let env = Env {
            state: setting.initial_state.clone(),
            setting,
            actuator,
            prev_edot: 0.0,
            step_count: 0,
            done: false,
        };
        let observation = env.observe();
        (env, StepResult { observation, reward: 0.0, done: false })
    }

    pub fn kind(&self) -> EnvKind {
        self.setting.kind
    }

    pub fn steps_taken(&self) -> usize {
        self.step_count
    }

    pub fn observe(&self) -> Vec<f64> {
        let t = &self.setting.targets;
        match self.setting.kind {
            EnvKind::Msd => vec![self.state[0], t[0], self.actuator[0]],
            EnvKind::Dmsd => vec![
                self.state[0],
                self.state[2],
                t[0],
                t[1],
                self.actuator[0],
                self.actuator[1],
            ],
            EnvKind::Navigation => vec![
                self.state[0],
                self.state[1],
                t[0],
                t[1],
                self.actuator[0],
                self.actuator[1],
            ],
            EnvKind::Tokamak => {
                let SystemParams::Tokamak { minor_radius, current, field } = self.setting.params
                else {
                    unreachable!()
                };
                let beta = tokamak_beta_n(minor_radius, field, current, self.state[0]);
                // power reported in MW to keep observation scales comparable
                vec![
                    beta,
                    self.state[1],
                    t[0],
                    t[1],
                    self.actuator[0] / 1.0e6,
                    self.actuator[1],
                ]
            }
        }
    }

    /// Advance one step. `action` is the per-channel actuator delta
    /// (tokamak power delta in watts).
    pub fn step(&mut self, action: &[f64]) -> StepResult {
        assert!(!self.done, "step called on a finished episode");
        let kind = self.setting.kind;
        assert_eq!(action.len(), kind.action_dim(), "action dimension mismatch");
        let deltas = kind.action_delta_bound();
        let bounds = kind.actuator_bounds();
        let mut change_mag2 = 0.0;
        for i in 0..action.len() {
            let before = self.actuator[i];
            let d = action[i].clamp(-deltas[i], deltas[i]);
            self.actuator[i] = (before + d).clamp(bounds[i].0, bounds[i].1);
            let applied = self.actuator[i] - before;
            change_mag2 += applied * applied;
        }
        self.advance(change_mag2)
    }

    /// Advance one step setting the actuator directly (the PID path:
    /// absolute values, no per-step delta limit).
    pub fn step_absolute(&mut self, target: &[f64]) -> StepResult {
        assert!(!self.done, "step called on a finished episode");
        let kind = self.setting.kind;
        assert_eq!(target.len(), kind.action_dim(), "action dimension mismatch");
        let bounds = kind.actuator_bounds();
        let mut change_mag2 = 0.0;
        for i in 0..target.len() {
            let before = self.actuator[i];
            self.actuator[i] = target[i].clamp(bounds[i].0, bounds[i].1);
            let applied = self.actuator[i] - before;
            change_mag2 += applied * applied;
        }
        self.advance(change_mag2)
    }

    fn advance(&mut self, change_mag2: f64) -> StepResult {
        let kind = self.setting.kind;

        let dt = kind.dt();
        match &self.setting.params {
            SystemParams::Msd { mass, spring, damping } => {
                let (x, v) = (self.state[0], self.state[1]);
                let a = (self.actuator[0] - spring * x - damping * v) / mass;
                let v2 = v + dt * a;
                self.state[1] = v2;
                self.state[0] = x + dt * v2;
            }
            SystemParams::Dmsd { mass, spring, damping } => {
                let (x1, v1, x2, v2) = (self.state[0], self.state[1], self.state[2], self.state[3]);
                let a1 = (self.actuator[0] - spring[0] * x1 - damping[0] * v1
                    + spring[1] * (x2 - x1)
                    + damping[1] * (v2 - v1))
                    / mass[0];
                let a2 = (self.actuator[1] - spring[1] * (x2 - x1) - damping[1] * (v2 - v1)
                    - spring[2] * x2
                    - damping[2] * v2)
                    / mass[1];
                let nv1 = v1 + dt * a1;
                let nv2 = v2 + dt * a2;
                self.state[1] = nv1;
                self.state[3] = nv2;
                self.state[0] = x1 + dt * nv1;
                self.state[2] = x2 + dt * nv2;
            }
            SystemParams::Navigation { mass, friction, static_prop } => {
                let applied = [self.actuator[0], self.actuator[1]];
                let vel = [self.state[2], self.state[3]];
                let net = friction_force(applied, vel, *mass, *friction, *static_prop);
                if net == [0.0, 0.0] && (vel[0].hypot(vel[1])) < REST_SPEED {
                    self.state[2] = 0.0;
                    self.state[3] = 0.0;
                } else {
                    let mut vx = vel[0] + dt * net[0] / mass;
                    let mut vy = vel[1] + dt * net[1] / mass;
                    let speed = vx.hypot(vy);
                    if speed > 1.0 {
                        vx /= speed;
                        vy /= speed;
                    }
                    self.state[2] = vx;
                    self.state[3] = vy;
                    self.state[0] += dt * vx;
                    self.state[1] += dt * vy;
                }
            }
            SystemParams::Tokamak { current, field, .. } => {
                let (e, v, edot) = tokamak_dynamics(
                    self.state[0],
                    self.state[1],
                    self.actuator[0],
                    self.actuator[1],
                    *current,
                    *field,
                    self.prev_edot,
                );
                self.state[0] = e;
                self.state[1] = v;
                self.prev_edot = edot;
            }
        }

        self.step_count += 1;
        self.done = self.step_count >= EPISODE_LEN;
        let observation = self.observe();
        let t = &self.setting.targets;
        let reward = match kind {
            EnvKind::Msd => -(observation[0] - t[0]).abs(),
            EnvKind::Dmsd => {
                -((observation[0] - t[0]).abs() + (observation[1] - t[1]).abs())
            }
            EnvKind::Navigation => {
                -((observation[0] - t[0]).abs() + (observation[1] - t[1]).abs())
                    - 0.01 * change_mag2.sqrt()
            }
            // rotation errors run tens of rad/s; scale them down to
            // balance against beta_N errors
            EnvKind::Tokamak => {
                -((observation[0] - t[0]).abs() + (observation[1] - t[1]).abs() / 10.0)
            }
        };
        StepResult { observation, reward, done: self.done }
    }

    /// Spring + kinetic energy of the mass chain, for integrator checks.
    pub fn mechanical_energy(&self) -> f64 {
        match &self.setting.params {
            SystemParams::Msd { mass, spring, .. } => {
                0.5 * spring * self.state[0] * self.state[0]
                    + 0.5 * mass * self.state[1] * self.state[1]
            }
            SystemParams::Dmsd { mass, spring, .. } => {
                let (x1, v1, x2, v2) = (self.state[0], self.state[1], self.state[2], self.state[3]);
                0.5 * spring[0] * x1 * x1
                    + 0.5 * spring[1] * (x2 - x1) * (x2 - x1)
                    + 0.5 * spring[2] * x2 * x2
                    + 0.5 * mass[0] * v1 * v1
                    + 0.5 * mass[1] * v2 * v2
            }
            _ => panic!("mechanical_energy is defined for mass chains only"),
        }
    }
}

mod serialize;
pub use serialize::{read_settings, write_settings};
