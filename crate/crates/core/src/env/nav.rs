//! Bounded-workspace navigation with circular obstacles, Rankine vortex
//! drift, and a frontal LiDAR fan.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ContextFeature, EnvStep, Environment, EpisodeOutcome, TerminalKind};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vortex {
    pub center: [f64; 2],
    /// Circulation `Γ`; positive spins counterclockwise.
    pub circulation: f64,
    pub core_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub max_speed: f64,
    pub acceleration: f64,
    /// Heading change rate for the turn actions (rad/s).
    pub turn_rate: f64,
    pub dt: f64,
    pub radius: f64,
    pub initial_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            max_speed: 2.5,
            acceleration: 2.0,
            turn_rate: 1.5,
            dt: 0.1,
            radius: 0.3,
            initial_speed: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarParams {
    pub rays: usize,
    pub max_range: f64,
    /// Total angular width of the frontal fan (rad).
    pub field_of_view: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        Self {
            rays: 16,
            max_range: 10.0,
            field_of_view: PI,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub progress: f64,
    pub collision: f64,
    pub step_cost: f64,
    pub goal: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            progress: 1.0,
            collision: 50.0,
            step_cost: 0.01,
            goal: 20.0,
        }
    }
}

/// A complete, reproducible navigation layout plus simulation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavConfig {
    pub width: f64,
    pub height: f64,
    pub obstacles: Vec<Obstacle>,
    pub vortices: Vec<Vortex>,
    pub start: [f64; 2],
    pub start_heading: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub max_steps: usize,
    pub vehicle: VehicleParams,
    pub lidar: LidarParams,
    pub reward: RewardWeights,
    pub seed: u64,
}

fn inside(p: [f64; 2], w: f64, h: f64) -> bool {
    p[0] >= 0.0 && p[0] <= w && p[1] >= 0.0 && p[1] <= h
}

impl NavConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("workspace must have positive extent".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0) {
                return bad(format!("obstacle {i} has non-positive radius"));
            }
            if !inside(o.center, self.width, self.height) {
                return bad(format!("obstacle {i} lies outside the workspace"));
            }
        }
        for (i, v) in self.vortices.iter().enumerate() {
            if !(v.core_radius > 0.0) {
                return bad(format!("vortex {i} has non-positive core radius"));
            }
        }
        if !inside(self.goal, self.width, self.height) || !inside(self.start, self.width, self.height) {
            return bad("start and goal must lie inside the workspace".into());
        }
        if !(self.goal_radius > 0.0) {
            return bad("goal radius must be positive".into());
        }
        if !(self.vehicle.dt > 0.0) {
            return bad("timestep must be positive".into());
        }
        if !(self.vehicle.radius > 0.0) {
            return bad("vehicle radius must be positive".into());
        }
        if self.lidar.rays == 0 || !(self.lidar.max_range > 0.0) {
            return bad("LiDAR needs at least one ray and a positive range".into());
        }
        if self.max_steps == 0 {
            return bad("episode cap must be at least one step".into());
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.height)
    }

    pub fn observation_dim(&self) -> usize {
        7 + self.lidar.rays
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Draws random layouts with fixed counts and parameter ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutSampler {
    pub width: f64,
    pub height: f64,
    pub obstacle_count: usize,
    pub obstacle_radius: [f64; 2],
    pub vortex_count: usize,
    pub core_radius: [f64; 2],
    /// Range of peak tangential speed `Γ/(2πR_c)` at the core edge.
    pub peak_flow_speed: [f64; 2],
    pub min_start_goal_distance: f64,
    pub goal_radius: f64,
    pub max_steps: usize,
    pub vehicle: VehicleParams,
    pub lidar: LidarParams,
    pub reward: RewardWeights,
}

impl Default for LayoutSampler {
    fn default() -> Self {
        Self {
            width: 25.0,
            height: 25.0,
            obstacle_count: 6,
            obstacle_radius: [1.0, 2.0],
            vortex_count: 4,
            core_radius: [1.5, 3.0],
            peak_flow_speed: [0.5, 1.0],
            min_start_goal_distance: 12.0,
            goal_radius: 1.0,
            max_steps: 500,
            vehicle: VehicleParams::default(),
            lidar: LidarParams::default(),
            reward: RewardWeights::default(),
        }
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl LayoutSampler {
    pub fn validate(&self) -> Result<()> {
        let margin = 2.0 * self.vehicle.radius + 1.0;
        if !(self.width > 2.0 * margin && self.height > 2.0 * margin) {
            return Err(Error::Config("workspace too small for the sampler margins".into()));
        }
        if self.min_start_goal_distance > self.width.hypot(self.height) - 2.0 * margin {
            return Err(Error::Config("min start-goal distance cannot fit in the workspace".into()));
        }
        if !(self.obstacle_radius[0] > 0.0 && self.core_radius[0] > 0.0) {
            return Err(Error::Config("radii ranges must be positive".into()));
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64) -> NavConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margin = 2.0 * self.vehicle.radius + 1.0;
        let point = |rng: &mut ChaCha8Rng, pad: f64| {
            [
                rng.random_range(pad..self.width - pad),
                rng.random_range(pad..self.height - pad),
            ]
        };

        let start = point(&mut rng, margin);
        let mut goal = point(&mut rng, margin);
        for _ in 0..1000 {
            if dist(start, goal) >= self.min_start_goal_distance {
                break;
            }
            goal = point(&mut rng, margin);
        }

        let clearance = 1.5 + self.vehicle.radius;
        let mut obstacles: Vec<Obstacle> = Vec::with_capacity(self.obstacle_count);
        let mut attempts = 0;
        while obstacles.len() < self.obstacle_count && attempts < 10_000 {
            attempts += 1;
            let radius = uniform(&mut rng, self.obstacle_radius);
            let center = point(&mut rng, radius);
            let clear_of_ends = dist(center, start) > radius + clearance
                && dist(center, goal) > radius + clearance + self.goal_radius;
            let clear_of_others = obstacles
                .iter()
                .all(|o| dist(o.center, center) > o.radius + radius + 2.0 * self.vehicle.radius);
            if clear_of_ends && clear_of_others {
                obstacles.push(Obstacle { center, radius });
            }
        }

        let vortices = (0..self.vortex_count)
            .map(|_| {
                let core_radius = uniform(&mut rng, self.core_radius);
                let peak = uniform(&mut rng, self.peak_flow_speed);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                Vortex {
                    center: point(&mut rng, 0.0),
                    circulation: sign * 2.0 * PI * core_radius * peak,
                    core_radius,
                }
            })
            .collect();

        let to_goal = (goal[1] - start[1]).atan2(goal[0] - start[0]);
        let start_heading = to_goal + rng.random_range(-PI / 4.0..PI / 4.0);

        NavConfig {
            width: self.width,
            height: self.height,
            obstacles,
            vortices,
            start,
            start_heading,
            goal,
            goal_radius: self.goal_radius,
            max_steps: self.max_steps,
            vehicle: self.vehicle,
            lidar: self.lidar,
            reward: self.reward,
            seed,
        }
    }
}

/// Superposed Rankine vortex velocity at `position`.
pub fn vortex_velocity(position: [f64; 2], cfg: &NavConfig) -> [f64; 2] {
    rankine_velocity(position, &cfg.vortices)
}

pub(crate) fn rankine_velocity(position: [f64; 2], vortices: &[Vortex]) -> [f64; 2] {
    let mut v = [0.0, 0.0];
    for vx in vortices {
        let rx = position[0] - vx.center[0];
        let ry = position[1] - vx.center[1];
        let r2 = rx * rx + ry * ry;
        if r2 == 0.0 {
            continue;
        }
        let rc2 = vx.core_radius * vx.core_radius;
        // Tangential speed divided by r, so (−ry, rx)·factor is the velocity.
        let factor = if r2 <= rc2 {
            vx.circulation / (2.0 * PI * rc2)
        } else {
            vx.circulation / (2.0 * PI * r2)
        };
        v[0] -= ry * factor;
        v[1] += rx * factor;
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 2],
    pub heading: f64,
}

fn ray_distance(origin: [f64; 2], angle: f64, cfg: &NavConfig) -> f64 {
    let d = [angle.cos(), angle.sin()];
    let mut best = cfg.lidar.max_range;
    for o in &cfg.obstacles {
        let f = [origin[0] - o.center[0], origin[1] - o.center[1]];
        let b = f[0] * d[0] + f[1] * d[1];
        let c = f[0] * f[0] + f[1] * f[1] - o.radius * o.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            continue;
        }
        let s = disc.sqrt();
        for t in [-b - s, -b + s] {
            if t > 0.0 {
                best = best.min(t);
                break;
            }
        }
    }
    let walls = [(0, 0.0), (0, cfg.width), (1, 0.0), (1, cfg.height)];
    for (axis, at) in walls {
        if d[axis] != 0.0 {
            let t = (at - origin[axis]) / d[axis];
            if t > 0.0 {
                best = best.min(t);
            }
        }
    }
    best
}

/// Range returns for each ray of the frontal fan, clamped to the max range.
pub fn lidar_scan(pose: &Pose, cfg: &NavConfig) -> Vec<f64> {
    let n = cfg.lidar.rays;
    (0..n)
        .map(|i| {
            let offset = if n == 1 {
                0.0
            } else {
                -0.5 * cfg.lidar.field_of_view + cfg.lidar.field_of_view * i as f64 / (n - 1) as f64
            };
            ray_distance(pose.position, pose.heading + offset, cfg)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NavAction {
    Accelerate,
    Decelerate,
    TurnLeft,
    TurnRight,
    Hold,
}

impl NavAction {
    pub const COUNT: usize = 5;

    pub fn from_index(index: usize) -> Result<Self> {
        Ok(match index {
            0 => NavAction::Accelerate,
            1 => NavAction::Decelerate,
            2 => NavAction::TurnLeft,
            3 => NavAction::TurnRight,
            4 => NavAction::Hold,
            _ => {
                return Err(Error::InvalidAction {
                    action: index,
                    count: Self::COUNT,
                })
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub pose: Pose,
    pub speed: f64,
    pub steps: usize,
    pub episode_return: f64,
    pub energy_proxy: f64,
}

impl NavState {
    pub fn initial(cfg: &NavConfig) -> Self {
        Self {
            pose: Pose {
                position: cfg.start,
                heading: cfg.start_heading,
            },
            speed: cfg.vehicle.initial_speed.min(cfg.vehicle.max_speed),
            steps: 0,
            episode_return: 0.0,
            energy_proxy: 0.0,
        }
    }

    pub fn goal_distance(&self, cfg: &NavConfig) -> f64 {
        dist(self.pose.position, cfg.goal)
    }

    pub fn collided(&self, cfg: &NavConfig) -> bool {
        let p = self.pose.position;
        let r = cfg.vehicle.radius;
        let out = p[0] < r || p[1] < r || p[0] > cfg.width - r || p[1] > cfg.height - r;
        out || cfg
            .obstacles
            .iter()
            .any(|o| dist(p, o.center) < o.radius + r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// Goal offset in the vehicle frame (x forward, y left).
    pub goal_body: [f64; 2],
    pub goal_distance: f64,
    pub speed: f64,
    pub heading: f64,
    /// Raw ranges in `[0, max_range]`.
    pub lidar: Vec<f64>,
    /// Smallest LiDAR return: the perceived nearest-obstacle distance.
    pub nearest_obstacle: f64,
}

impl Observation {
    pub fn new(state: &NavState, cfg: &NavConfig) -> Self {
        let p = state.pose.position;
        let (s, c) = state.pose.heading.sin_cos();
        let gx = cfg.goal[0] - p[0];
        let gy = cfg.goal[1] - p[1];
        let lidar = lidar_scan(&state.pose, cfg);
        let nearest_obstacle = lidar.iter().cloned().fold(f64::INFINITY, f64::min);
        Self {
            goal_body: [c * gx + s * gy, -s * gx + c * gy],
            goal_distance: gx.hypot(gy),
            speed: state.speed,
            heading: state.pose.heading,
            lidar,
            nearest_obstacle,
        }
    }

    /// Normalized network input; the last entry is the nearest-obstacle
    /// distance over the LiDAR range.
    pub fn features(&self, cfg: &NavConfig) -> Vec<f64> {
        let diag = cfg.diagonal();
        let range = cfg.lidar.max_range;
        let mut f = Vec::with_capacity(cfg.observation_dim());
        f.push(self.goal_body[0] / diag);
        f.push(self.goal_body[1] / diag);
        f.push(self.goal_distance / diag);
        f.push(self.speed / cfg.vehicle.max_speed);
        f.push(self.heading.sin());
        f.push(self.heading.cos());
        f.extend(self.lidar.iter().map(|d| d / range));
        f.push(self.nearest_obstacle / range);
        f
    }
}

/// Advances the vehicle by one control interval. Returns the new state,
/// reward, and the terminal outcome if the episode ended.
pub fn nav_step(
    state: &NavState,
    action: usize,
    cfg: &NavConfig,
) -> Result<(NavState, f64, Option<EpisodeOutcome>)> {
    let action = NavAction::from_index(action)?;
    let v = &cfg.vehicle;
    let mut next = *state;
    let effort = match action {
        NavAction::Accelerate => {
            next.speed = (next.speed + v.acceleration * v.dt).min(v.max_speed);
            v.acceleration
        }
        NavAction::Decelerate => {
            next.speed = (next.speed - v.acceleration * v.dt).max(0.0);
            v.acceleration
        }
        NavAction::TurnLeft => {
            next.pose.heading += v.turn_rate * v.dt;
            v.turn_rate
        }
        NavAction::TurnRight => {
            next.pose.heading -= v.turn_rate * v.dt;
            v.turn_rate
        }
        NavAction::Hold => 0.0,
    };
    next.pose.heading = next.pose.heading.rem_euclid(2.0 * PI);
    let flow = vortex_velocity(state.pose.position, cfg);
    let (s, c) = next.pose.heading.sin_cos();
    next.pose.position[0] += (next.speed * c + flow[0]) * v.dt;
    next.pose.position[1] += (next.speed * s + flow[1]) * v.dt;
    next.steps += 1;
    next.energy_proxy += effort * effort * v.dt;

    let w = &cfg.reward;
    let before = state.goal_distance(cfg);
    let after = next.goal_distance(cfg);
    let mut reward = w.progress * (before - after) - w.step_cost;
    let kind = if next.collided(cfg) {
        reward -= w.collision;
        Some(TerminalKind::Collision)
    } else if after <= cfg.goal_radius {
        reward += w.goal;
        Some(TerminalKind::Success)
    } else if next.steps >= cfg.max_steps {
        Some(TerminalKind::Timeout)
    } else {
        None
    };
    next.episode_return += reward;
    let outcome = kind.map(|kind| EpisodeOutcome {
        kind,
        episode_return: next.episode_return,
        elapsed: next.steps as f64 * v.dt,
        energy_proxy: next.energy_proxy,
    });
    Ok((next, reward, outcome))
}

#[derive(Clone, Debug)]
enum LayoutSource {
    Fixed,
    Sampled { sampler: LayoutSampler, rng: ChaCha8Rng },
}

/// Episodic navigation environment over a fixed layout or a seeded stream of
/// random layouts (one per episode).
#[derive(Clone, Debug)]
pub struct NavEnv {
    source: LayoutSource,
    layout: NavConfig,
    state: NavState,
}

impl NavEnv {
    pub fn fixed(cfg: NavConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            state: NavState::initial(&cfg),
            layout: cfg,
            source: LayoutSource::Fixed,
        })
    }

    pub fn sampled(sampler: LayoutSampler, seed: u64) -> Result<Self> {
        sampler.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = sampler.sample(rng.random());
        layout.validate()?;
        Ok(Self {
            state: NavState::initial(&layout),
            layout,
            source: LayoutSource::Sampled { sampler, rng },
        })
    }

    pub fn layout(&self) -> &NavConfig {
        &self.layout
    }

    pub fn state(&self) -> &NavState {
        &self.state
    }

    pub fn observe(&self) -> Observation {
        Observation::new(&self.state, &self.layout)
    }
}

impl Environment for NavEnv {
    fn observation_dim(&self) -> usize {
        self.layout.observation_dim()
    }

    fn action_count(&self) -> usize {
        NavAction::COUNT
    }

    fn context_feature(&self) -> Option<ContextFeature> {
        Some(ContextFeature {
            index: self.layout.observation_dim() - 1,
            scale: self.layout.lidar.max_range,
        })
    }

    fn reset(&mut self) -> Vec<f64> {
        if let LayoutSource::Sampled { sampler, rng } = &mut self.source {
            self.layout = sampler.sample(rng.random());
        }
        self.state = NavState::initial(&self.layout);
        self.observe().features(&self.layout)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let (next, reward, outcome) = nav_step(&self.state, action, &self.layout)?;
        self.state = next;
        Ok(EnvStep {
            observation: self.observe().features(&self.layout),
            reward,
            done: outcome.is_some(),
            outcome,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn empty_layout() -> NavConfig {
        NavConfig {
            width: 25.0,
            height: 25.0,
            obstacles: vec![],
            vortices: vec![],
            start: [5.0, 5.0],
            start_heading: 0.0,
            goal: [20.0, 20.0],
            goal_radius: 1.0,
            max_steps: 500,
            vehicle: VehicleParams::default(),
            lidar: LidarParams::default(),
            reward: RewardWeights::default(),
            seed: 0,
        }
    }

    #[test]
    fn no_vortices_no_flow() {
        assert_eq!(vortex_velocity([3.0, 4.0], &empty_layout()), [0.0, 0.0]);
    }

    #[test]
    fn vortex_center_and_far_field() {
        let mut cfg = empty_layout();
        cfg.vortices.push(Vortex {
            center: [10.0, 10.0],
            circulation: 2.0 * PI,
            core_radius: 1.0,
        });
        assert_eq!(vortex_velocity([10.0, 10.0], &cfg), [0.0, 0.0]);
        let v = vortex_velocity([12.0, 10.0], &cfg);
        assert!(v[0].abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
        // Inside the core: solid-body rotation, speed Γr/(2πR_c²).
        let v = vortex_velocity([10.0, 10.5], &cfg);
        assert!((v[0] + 0.5).abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn lidar_examples() {
        let mut cfg = empty_layout();
        cfg.lidar.rays = 1;
        let pose = Pose {
            position: [22.0, 10.0],
            heading: 0.0,
        };
        assert!((lidar_scan(&pose, &cfg)[0] - 3.0).abs() < 1e-12);

        cfg.obstacles.push(Obstacle {
            center: [15.0, 10.0],
            radius: 1.0,
        });
        let pose = Pose {
            position: [10.0, 10.0],
            heading: 0.0,
        };
        assert!((lidar_scan(&pose, &cfg)[0] - 4.0).abs() < 1e-12);

        cfg.obstacles.clear();
        cfg.width = 1000.0;
        cfg.height = 1000.0;
        let pose = Pose {
            position: [500.0, 500.0],
            heading: 1.0,
        };
        assert_eq!(lidar_scan(&pose, &cfg)[0], cfg.lidar.max_range);
    }

    #[test]
    fn hold_at_rest_without_flow() {
        let cfg = empty_layout();
        let mut s = NavState::initial(&cfg);
        s.speed = 0.0;
        let (next, reward, outcome) = nav_step(&s, 4, &cfg).unwrap();
        assert_eq!(next.pose, s.pose);
        assert!((reward + cfg.reward.step_cost).abs() < 1e-15);
        assert!(outcome.is_none());
    }

    #[test]
    fn reaching_goal_is_success() {
        let cfg = empty_layout();
        let mut s = NavState::initial(&cfg);
        s.pose.position = [20.0 - 1.05, 20.0];
        s.pose.heading = 0.0;
        s.speed = 1.0;
        let (_, reward, outcome) = nav_step(&s, 4, &cfg).unwrap();
        let outcome = outcome.unwrap();
        assert_eq!(outcome.kind, TerminalKind::Success);
        assert!(reward > cfg.reward.goal - 1.0);
    }

    #[test]
    fn overlapping_obstacle_is_collision() {
        let mut cfg = empty_layout();
        cfg.obstacles.push(Obstacle {
            center: [6.0, 5.0],
            radius: 1.0,
        });
        let s = NavState::initial(&cfg);
        let (_, reward, outcome) = nav_step(&s, 4, &cfg).unwrap();
        assert_eq!(outcome.unwrap().kind, TerminalKind::Collision);
        assert!(reward < -cfg.reward.collision + 1.0);
    }

    #[test]
    fn timeout_at_cap() {
        let mut cfg = empty_layout();
        cfg.max_steps = 3;
        let mut s = NavState::initial(&cfg);
        s.speed = 0.0;
        let mut outcome = None;
        for _ in 0..3 {
            let r = nav_step(&s, 4, &cfg).unwrap();
            s = r.0;
            outcome = r.2;
        }
        assert_eq!(outcome.unwrap().kind, TerminalKind::Timeout);
        assert!(nav_step(&s, 5, &cfg).is_err());
    }

    #[test]
    fn sampled_layouts_are_valid_and_reproducible() {
        let sampler = LayoutSampler::default();
        for seed in 0..50 {
            let a = sampler.sample(seed);
            a.validate().unwrap();
            assert_eq!(a, sampler.sample(seed));
            assert_eq!(a.obstacles.len(), sampler.obstacle_count);
            assert!(!NavState::initial(&a).collided(&a));
        }
    }

    #[test]
    fn layout_file_round_trip() {
        let cfg = LayoutSampler::default().sample(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layout.toml");
        cfg.save(&path).unwrap();
        assert_eq!(NavConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn flux_through_small_circles_vanishes() {
        let cfg = LayoutSampler::default().sample(5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut tested = 0;
        while tested < 50 {
            let c = [rng.random_range(0.0..25.0), rng.random_range(0.0..25.0)];
            let radius = 0.2;
            let clear = cfg
                .vortices
                .iter()
                .all(|v| dist(c, v.center) > v.core_radius + radius + 1e-3);
            if !clear {
                continue;
            }
            tested += 1;
            let m = 2000;
            let flux: f64 = (0..m)
                .map(|k| {
                    let th = 2.0 * PI * (k as f64 + 0.5) / m as f64;
                    let n = [th.cos(), th.sin()];
                    let v = vortex_velocity([c[0] + radius * n[0], c[1] + radius * n[1]], &cfg);
                    (v[0] * n[0] + v[1] * n[1]) * radius * 2.0 * PI / m as f64
                })
                .sum();
            assert!(flux.abs() < 1e-6, "flux {flux}");
        }
    }

    proptest! {
        #[test]
        fn lidar_nonincreasing_as_obstacle_approaches(d1 in 2.0f64..9.0, shrink in 0.0f64..0.9) {
            let mut cfg = empty_layout();
            cfg.lidar.rays = 1;
            let pose = Pose { position: [5.0, 12.0], heading: 0.0 };
            let far = d1;
            let near = d1 - shrink;
            cfg.obstacles = vec![Obstacle { center: [5.0 + far, 12.0], radius: 1.0 }];
            let a = lidar_scan(&pose, &cfg)[0];
            cfg.obstacles = vec![Obstacle { center: [5.0 + near, 12.0], radius: 1.0 }];
            let b = lidar_scan(&pose, &cfg)[0];
            prop_assert!(b <= a);
            prop_assert!(b >= 0.0 && a <= cfg.lidar.max_range);
        }

        #[test]
        fn step_is_deterministic(seed in 0u64..1000, actions in proptest::collection::vec(0usize..5, 1..40)) {
            let cfg = LayoutSampler::default().sample(seed);
            let run = || {
                let mut s = NavState::initial(&cfg);
                let mut last = None;
                for &a in &actions {
                    let (n, r, o) = nav_step(&s, a, &cfg).unwrap();
                    s = n;
                    last = Some((r, o));
                    if o.is_some() { break; }
                }
                (s, last)
            };
            prop_assert_eq!(run(), run());
        }
    }
}
