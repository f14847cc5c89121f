//! CartPole-v1, MountainCar-v0 (shaped reward) and Acrobot-v1 dynamics.

use std::f64::consts::PI;

use rand::Rng;

use super::{finite, Clock, Environment, StepResult};
use crate::{Error, Result, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_mag: f64,
    pub tau: f64,
    /// Radians.
    pub theta_threshold: f64,
    pub x_threshold: f64,
    pub max_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            tau: 0.02,
            theta_threshold: 12.0 * 2.0 * PI / 360.0,
            x_threshold: 2.4,
            max_steps: 500,
        }
    }
}

/// One Euler step of `(x, ẋ, θ, θ̇)`; action 1 pushes right. Returns the next state and
/// whether it is out of bounds.
pub fn cartpole_dynamics(p: &CartPoleParams, s: [f64; 4], action: usize) -> ([f64; 4], bool) {
    let [x, x_dot, theta, theta_dot] = s;
    let force = if action == 1 { p.force_mag } else { -p.force_mag };
    let (sin, cos) = theta.sin_cos();
    let total_mass = p.mass_cart + p.mass_pole;
    let pml = p.mass_pole * p.half_length;
    let temp = (force + pml * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (p.gravity * sin - cos * temp) / (p.half_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total_mass));
    let x_acc = temp - pml * theta_acc * cos / total_mass;
    let next = [x + p.tau * x_dot, x_dot + p.tau * x_acc, theta + p.tau * theta_dot, theta_dot + p.tau * theta_acc];
    let out = next[0].abs() > p.x_threshold || next[2].abs() > p.theta_threshold;
    (next, out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MountainCarParams {
    pub force: f64,
    pub gravity: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub max_steps: usize,
    /// Weight of the height term `(sin 3x' + 1)/2` added to the −1 step reward.
    pub height_weight: f64,
    /// Extra reward on reaching the goal.
    pub goal_bonus: f64,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        Self {
            force: 0.001,
            gravity: 0.0025,
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.5,
            max_steps: 200,
            height_weight: 1.0,
            goal_bonus: 100.0,
        }
    }
}

/// `(position, velocity)` update for actions {0: left, 1: none, 2: right}. Returns the
/// next state, the shaped reward and whether the goal was reached.
pub fn mountaincar_dynamics(p: &MountainCarParams, s: [f64; 2], action: usize) -> ([f64; 2], f64, bool) {
    let [mut pos, mut vel] = s;
    vel += (action as f64 - 1.0) * p.force - (3.0 * pos).cos() * p.gravity;
    vel = vel.clamp(-p.max_speed, p.max_speed);
    pos = (pos + vel).clamp(p.min_position, p.max_position);
    if pos == p.min_position && vel < 0.0 {
        vel = 0.0;
    }
    let goal = pos >= p.goal_position;
    let height = ((3.0 * pos).sin() + 1.0) / 2.0;
    let reward = -1.0 + p.height_weight * height + if goal { p.goal_bonus } else { 0.0 };
    ([pos, vel], reward, goal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcrobotParams {
    pub dt: f64,
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
    pub gravity: f64,
    pub max_steps: usize,
}

impl Default for AcrobotParams {
    fn default() -> Self {
        Self {
            dt: 0.2,
            link_length_1: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
            gravity: 9.8,
            max_steps: 500,
        }
    }
}

fn acrobot_derivs(p: &AcrobotParams, s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2, l1, lc1, lc2, i1, i2, g) =
        (p.link_mass_1, p.link_mass_2, p.link_length_1, p.link_com_1, p.link_com_2, p.link_moi, p.link_moi, p.gravity);
    let [t1, t2, dt1, dt2] = s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
    let phi2 = m2 * lc2 * g * (t1 + t2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dt2 * dt2 * t2.sin() - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
        + (m1 * lc1 + m2 * l1) * g * (t1 - PI / 2.0).cos()
        + phi2;
    let ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * t2.sin() - phi2) / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddt1 = -(d2 * ddt2 + phi1) / d1;
    [dt1, dt2, ddt1, ddt2]
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// One RK4 step of `(θ1, θ2, θ̇1, θ̇2)` with torque `action − 1`. Returns the next state and
/// whether the tip has swung above the bar.
pub fn acrobot_dynamics(p: &AcrobotParams, s: [f64; 4], action: usize) -> ([f64; 4], bool) {
    let torque = action as f64 - 1.0;
    let h = p.dt;
    let add = |a: [f64; 4], b: [f64; 4], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2], a[3] + c * b[3]];
    let k1 = acrobot_derivs(p, s, torque);
    let k2 = acrobot_derivs(p, add(s, k1, h / 2.0), torque);
    let k3 = acrobot_derivs(p, add(s, k2, h / 2.0), torque);
    let k4 = acrobot_derivs(p, add(s, k3, h), torque);
    let mut n = [0.0; 4];
    for i in 0..4 {
        n[i] = s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    n[0] = wrap_angle(n[0]);
    n[1] = wrap_angle(n[1]);
    n[2] = n[2].clamp(-p.max_vel_1, p.max_vel_1);
    n[3] = n[3].clamp(-p.max_vel_2, p.max_vel_2);
    let up = -n[0].cos() - (n[1] + n[0]).cos() > 1.0;
    (n, up)
}

/// `(cos θ1, sin θ1, cos θ2, sin θ2, θ̇1, θ̇2)`
pub fn acrobot_observation(s: [f64; 4]) -> Vec<f64> {
    vec![s[0].cos(), s[0].sin(), s[1].cos(), s[1].sin(), s[2], s[3]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicKind {
    CartPole,
    MountainCar,
    Acrobot,
}

/// State-in, state-out transition with default constants. The returned `observation` is
/// the next internal state (4, 2 and 4 entries respectively); `done` reflects only the
/// terminal condition, not the horizon.
pub fn classical_dynamics_step(kind: ClassicKind, state: &[f64], action: usize) -> Result<StepResult> {
    finite(state, "input")?;
    let bad_len = |n| Error::Config(format!("{kind:?} state needs {n} entries, got {}", state.len()));
    let (next, reward, done) = match kind {
        ClassicKind::CartPole => {
            let s: [f64; 4] = state.try_into().map_err(|_| bad_len(4))?;
            check_action(action, 2)?;
            let (n, out) = cartpole_dynamics(&CartPoleParams::default(), s, action);
            (n.to_vec(), 1.0, out)
        }
        ClassicKind::MountainCar => {
            let s: [f64; 2] = state.try_into().map_err(|_| bad_len(2))?;
            check_action(action, 3)?;
            let (n, r, goal) = mountaincar_dynamics(&MountainCarParams::default(), s, action);
            (n.to_vec(), r, goal)
        }
        ClassicKind::Acrobot => {
            let s: [f64; 4] = state.try_into().map_err(|_| bad_len(4))?;
            check_action(action, 3)?;
            let (n, up) = acrobot_dynamics(&AcrobotParams::default(), s, action);
            (n.to_vec(), if up { 0.0 } else { -1.0 }, up)
        }
    };
    finite(&next, "next")?;
    Ok(StepResult { observation: next, reward, done })
}

fn check_action(a: usize, n: usize) -> Result<()> {
    if a < n {
        Ok(())
    } else {
        Err(Error::Index(format!("action {a} ≥ {n}")))
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    pub params: CartPoleParams,
    state: [f64; 4],
    clock: Clock,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        Self { params, state: [0.0; 4], clock: Clock::default() }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    /// Start an episode from a chosen state.
    pub fn reset_to(&mut self, state: [f64; 4]) -> Vec<f64> {
        self.state = state;
        self.clock.start();
        state.to_vec()
    }
}

impl Environment for CartPole {
    fn name(&self) -> &'static str {
        "cartpole"
    }
    fn obs_dim(&self) -> usize {
        4
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn horizon(&self) -> usize {
        self.params.max_steps
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let s = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
        self.reset_to(s)
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 2)?;
        let (next, out) = cartpole_dynamics(&self.params, self.state, action);
        finite(&next, "cartpole")?;
        self.state = next;
        let done = self.clock.tick(out, self.params.max_steps);
        Ok(StepResult { observation: next.to_vec(), reward: 1.0, done })
    }
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    pub params: MountainCarParams,
    state: [f64; 2],
    clock: Clock,
}

impl MountainCar {
    pub fn new(params: MountainCarParams) -> Self {
        Self { params, state: [0.0; 2], clock: Clock::default() }
    }

    pub fn reset_to(&mut self, state: [f64; 2]) -> Vec<f64> {
        self.state = state;
        self.clock.start();
        state.to_vec()
    }
}

impl Environment for MountainCar {
    fn name(&self) -> &'static str {
        "mountaincar"
    }
    fn obs_dim(&self) -> usize {
        2
    }
    fn n_actions(&self) -> usize {
        3
    }
    fn horizon(&self) -> usize {
        self.params.max_steps
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.reset_to([rng.random_range(-0.6..-0.4), 0.0])
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 3)?;
        let (next, reward, goal) = mountaincar_dynamics(&self.params, self.state, action);
        finite(&next, "mountaincar")?;
        self.state = next;
        let done = self.clock.tick(goal, self.params.max_steps);
        Ok(StepResult { observation: next.to_vec(), reward, done })
    }
}

#[derive(Debug, Clone)]
pub struct Acrobot {
    pub params: AcrobotParams,
    state: [f64; 4],
    clock: Clock,
}

impl Acrobot {
    pub fn new(params: AcrobotParams) -> Self {
        Self { params, state: [0.0; 4], clock: Clock::default() }
    }
}

impl Environment for Acrobot {
    fn name(&self) -> &'static str {
        "acrobot"
    }
    fn obs_dim(&self) -> usize {
        6
    }
    fn n_actions(&self) -> usize {
        3
    }
    fn horizon(&self) -> usize {
        self.params.max_steps
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.state = std::array::from_fn(|_| rng.random_range(-0.1..0.1));
        self.clock.start();
        acrobot_observation(self.state)
    }

    fn step(&mut self, action: usize, _rng: &mut SimRng) -> Result<StepResult> {
        self.clock.check(action, 3)?;
        let (next, up) = acrobot_dynamics(&self.params, self.state, action);
        finite(&next, "acrobot")?;
        self.state = next;
        let done = self.clock.tick(up, self.params.max_steps);
        Ok(StepResult { observation: acrobot_observation(next), reward: if up { 0.0 } else { -1.0 }, done })
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_util::rollout;
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn cartpole_mirror_symmetry() {
        let p = CartPoleParams::default();
        let mut rng = rng_from_seed(0);
        let mut a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-0.05..0.05));
        let mut b = a.map(|v| -v);
        for _ in 0..100 {
            let act = rng.random_range(0..2);
            let (na, da) = cartpole_dynamics(&p, a, act);
            let (nb, db) = cartpole_dynamics(&p, b, 1 - act);
            assert_eq!(da, db);
            for i in 0..4 {
                assert!((na[i] + nb[i]).abs() < 1e-12);
            }
            a = na;
            b = nb;
            if da {
                break;
            }
        }
    }

    #[test]
    fn cartpole_angle_threshold() {
        let twelve = 12.0f64.to_radians();
        let step = classical_dynamics_step(ClassicKind::CartPole, &[0.0, 0.0, twelve + 0.01, 0.5], 1).unwrap();
        assert!(step.done);
        let step = classical_dynamics_step(ClassicKind::CartPole, &[0.0, 0.0, 0.0, 0.0], 1).unwrap();
        assert!(!step.done);
        let step = classical_dynamics_step(ClassicKind::CartPole, &[2.39, 1.0, 0.0, 0.0], 1).unwrap();
        assert!(step.done);
    }

    #[test]
    fn cartpole_episode_caps() {
        let mut env = CartPole::new(CartPoleParams::default());
        // always pushing one way topples the pole well before the cap
        let (steps, total) = rollout(&mut env, 0, |_| 1);
        assert!(steps < 100);
        assert_eq!(total, steps as f64);
        // a simple angle-feedback controller survives to the 500-step cap
        let (steps, _) = rollout(&mut env, 1, |o| usize::from(o[2] + 0.5 * o[3] > 0.0));
        assert_eq!(steps, 500);
    }

    #[test]
    fn mountaincar_goal_gives_bonus() {
        let p = MountainCarParams::default();
        let step = classical_dynamics_step(ClassicKind::MountainCar, &[0.49, 0.05], 2).unwrap();
        assert!(step.done);
        let (pos, vel) = (step.observation[0], step.observation[1]);
        let height = ((3.0 * pos).sin() + 1.0) / 2.0;
        assert!((step.reward - (-1.0 + p.height_weight * height + p.goal_bonus)).abs() < 1e-12);
        assert!(vel > 0.0);
        let step = classical_dynamics_step(ClassicKind::MountainCar, &[-0.5, 0.0], 1).unwrap();
        assert!(!step.done);
        assert!(step.reward < 0.0);
    }

    #[test]
    fn mountaincar_left_wall_stops() {
        let p = MountainCarParams::default();
        let ([pos, vel], _, _) = mountaincar_dynamics(&p, [-1.19, -0.07], 0);
        assert_eq!(pos, -1.2);
        assert_eq!(vel, 0.0);
    }

    #[test]
    fn mountaincar_horizon() {
        let mut env = MountainCar::new(MountainCarParams::default());
        let (steps, _) = rollout(&mut env, 0, |_| 1);
        assert_eq!(steps, 200);
    }

    #[test]
    fn acrobot_hanging_at_rest_stays() {
        let (n, up) = acrobot_dynamics(&AcrobotParams::default(), [0.0; 4], 1);
        assert!(!up);
        assert!(n.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn acrobot_energy_pumping_swings_up() {
        let mut env = Acrobot::new(AcrobotParams::default());
        // torque along the second joint's velocity pumps energy in
        let (steps, total) = rollout(&mut env, 0, |o| if o[5] > 0.0 { 2 } else { 0 });
        assert!(steps < 500, "{steps}");
        assert_eq!(total, -(steps as f64 - 1.0));
        let mut env = Acrobot::new(AcrobotParams::default());
        let (steps, _) = rollout(&mut env, 0, |_| 1);
        assert_eq!(steps, 500);
    }

    #[test]
    fn nan_state_is_rejected() {
        let r = classical_dynamics_step(ClassicKind::Acrobot, &[f64::NAN, 0.0, 0.0, 0.0], 0);
        assert!(matches!(r, Err(Error::NumericalBlowup(_))));
        assert!(classical_dynamics_step(ClassicKind::CartPole, &[0.0; 3], 0).is_err());
        assert!(classical_dynamics_step(ClassicKind::CartPole, &[0.0; 4], 2).is_err());
    }

    #[test]
    fn step_before_reset_is_protocol_error() {
        let mut env = CartPole::new(CartPoleParams::default());
        let mut rng = rng_from_seed(0);
        assert!(matches!(env.step(0, &mut rng), Err(Error::Protocol(_))));
    }
}
