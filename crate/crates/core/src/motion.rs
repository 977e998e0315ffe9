//! Principal and groupie dynamics, head-motion noise and predicted orientation.
//!
//! Principals fly straight at constant speed and bounce off the walls of the
//! cube `[-U, U]^3`. Groupies accelerate toward their nearest principal with a
//! saturating pull plus bounded uniform diffusion, and teleport when they
//! leave the cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::geometry::{angle_delta, OrientationYPR, Vec3};

pub type UserId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Principal,
    Groupie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    TeleportRandom,
    TeleportNearPrincipal,
}

/// How a user's base view direction evolves between head-noise updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LookMode {
    /// Look where you travel; head noise is an offset from the heading that is
    /// redrawn every noise period.
    Heading,
    /// Orientation changes only through accumulated head noise.
    Free,
    /// Principals look where they travel; groupies face their principal's
    /// travel direction. Head noise is an offset redrawn every noise period.
    Entourage,
}

/// Angular velocity estimate in radians per second.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngularRate {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub user_id: UserId,
    pub role: Role,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Current look orientation (the immediate FoV axis).
    pub orientation: OrientationYPR,
    pub angular_rate_ema: AngularRate,
    /// Last well-defined travel direction, used in `LookMode::Heading`.
    pub heading: OrientationYPR,
    /// Head-noise offset applied on top of `heading`.
    pub head_offset: OrientationYPR,
}

impl UserState {
    pub fn new(user_id: UserId, role: Role, position: Vec3, velocity: Vec3, orientation: OrientationYPR) -> Self {
        Self {
            user_id,
            role,
            position,
            velocity,
            orientation,
            angular_rate_ema: AngularRate::default(),
            heading: OrientationYPR::looking_along(velocity).unwrap_or(orientation),
            head_offset: OrientationYPR::IDENTITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Half-extent of the universe cube.
    pub universe_half_extent: f64,
    /// Simulation timestep in seconds.
    pub timestep: f64,
    pub principal_speed: f64,
    /// Saturation magnitude of the groupie attraction.
    pub max_force: f64,
    /// Diffusion bound: each component drawn from `Uniform[-delta, delta]`.
    pub diffusion: f64,
    /// Head-noise standard deviation in radians.
    pub rubberneck_sigma: f64,
    pub rubberneck_period_steps: u32,
    pub groupie_max_speed: f64,
    pub groupie_boundary_policy: BoundaryPolicy,
    pub respawn_radius: f64,
    pub ema_alpha: f64,
    /// Look-ahead used to extrapolate the predicted orientation, seconds.
    pub prediction_horizon: f64,
    pub look_mode: LookMode,
}

impl Default for MotionConfig {
    fn default() -> Self {
        let principal_speed = 5.0;
        Self {
            universe_half_extent: 10.0,
            timestep: 0.05,
            principal_speed,
            max_force: 2.0,
            diffusion: 0.1,
            rubberneck_sigma: 0.15,
            rubberneck_period_steps: 10,
            groupie_max_speed: 4.0 * principal_speed,
            groupie_boundary_policy: BoundaryPolicy::TeleportNearPrincipal,
            respawn_radius: 5.0,
            ema_alpha: 0.1,
            prediction_horizon: 1.0,
            look_mode: LookMode::Heading,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be > 0"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(field, "must be >= 0"))
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("motion.universe_half_extent", self.universe_half_extent)?;
        positive("motion.timestep", self.timestep)?;
        positive("motion.principal_speed", self.principal_speed)?;
        positive("motion.max_force", self.max_force)?;
        non_negative("motion.diffusion", self.diffusion)?;
        non_negative("motion.rubberneck_sigma", self.rubberneck_sigma)?;
        if self.rubberneck_period_steps < 1 {
            return Err(ConfigError::new("motion.rubberneck_period_steps", "must be >= 1"));
        }
        positive("motion.groupie_max_speed", self.groupie_max_speed)?;
        positive("motion.respawn_radius", self.respawn_radius)?;
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(ConfigError::new("motion.ema_alpha", "must be in (0, 1]"));
        }
        non_negative("motion.prediction_horizon", self.prediction_horizon)?;
        Ok(())
    }
}

/// Independent random stream for one user, derived from the master seed.
pub fn user_rng(seed: u64, user_id: UserId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(user_id) + 1);
    rng
}

/// Stream used for world construction; disjoint from every user stream.
pub fn world_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

pub fn uniform_in_cube<R: Rng + ?Sized>(rng: &mut R, half_extent: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(-half_extent..=half_extent),
        rng.random_range(-half_extent..=half_extent),
        rng.random_range(-half_extent..=half_extent),
    )
}

fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vec3 {
    loop {
        let v = uniform_in_cube(rng, 1.0);
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

fn clamp_to_cube(p: Vec3, half_extent: f64) -> Vec3 {
    Vec3::new(
        p.x.clamp(-half_extent, half_extent),
        p.y.clamp(-half_extent, half_extent),
        p.z.clamp(-half_extent, half_extent),
    )
}

/// Straight-line principal motion with a constant-speed random bounce.
///
/// On every axis that reaches the wall the position is clamped onto it, and
/// the new direction is drawn uniformly from the part of the sphere that
/// points strictly back inside along all such axes.
pub fn step_principal<R: Rng + ?Sized>(s: &UserState, cfg: &MotionConfig, rng: &mut R) -> UserState {
    let u = cfg.universe_half_extent;
    let mut next = s.clone();
    let mut position = s.position + s.velocity * cfg.timestep;

    // +1 pushes the coordinate up (wall at -U), -1 pushes it down (wall at +U)
    let mut inward = [0i8; 3];
    for (k, dir) in inward.iter_mut().enumerate() {
        let c = position.component(k);
        if c >= u {
            position.set_component(k, u);
            *dir = -1;
        } else if c <= -u {
            position.set_component(k, -u);
            *dir = 1;
        }
    }

    if inward.iter().any(|&d| d != 0) {
        let dir = loop {
            let mut v = random_unit_vector(rng);
            let mut ok = true;
            for (k, &want) in inward.iter().enumerate() {
                if want == 0 {
                    continue;
                }
                let c = v.component(k);
                if c == 0.0 {
                    ok = false;
                    break;
                }
                v.set_component(k, c.abs() * f64::from(want));
            }
            if ok {
                break v;
            }
        };
        next.velocity = dir * cfg.principal_speed;
    }
    next.position = position;
    next
}

/// Saturating pull from `g` toward `p`, at most `max_force` in magnitude.
pub fn attraction(p: Vec3, g: Vec3, max_force: f64) -> Vec3 {
    let diff = p - g;
    let dist = diff.norm();
    if dist == 0.0 {
        return Vec3::ZERO;
    }
    diff * (max_force.min(dist) / dist)
}

pub fn step_groupie<R: Rng + ?Sized>(s: &UserState, principal_pos: Vec3, cfg: &MotionConfig, rng: &mut R) -> UserState {
    let u = cfg.universe_half_extent;
    let d = cfg.timestep;
    let mut next = s.clone();

    let diffusion = if cfg.diffusion > 0.0 {
        let delta = cfg.diffusion;
        Vec3::new(
            rng.random_range(-delta..=delta),
            rng.random_range(-delta..=delta),
            rng.random_range(-delta..=delta),
        )
    } else {
        Vec3::ZERO
    };
    let mut velocity = s.velocity + (attraction(principal_pos, s.position, cfg.max_force) + diffusion) * d;
    let speed = velocity.norm();
    if speed > cfg.groupie_max_speed {
        velocity = velocity * (cfg.groupie_max_speed / speed);
        // rounding can leave the rescaled norm one ulp above the cap
        while velocity.norm() > cfg.groupie_max_speed {
            velocity = velocity * (1.0 - f64::EPSILON);
        }
    }
    let mut position = s.position + velocity * d;

    if position.to_array().iter().any(|c| c.abs() > u) {
        position = match cfg.groupie_boundary_policy {
            BoundaryPolicy::TeleportRandom => uniform_in_cube(rng, u),
            BoundaryPolicy::TeleportNearPrincipal => {
                clamp_to_cube(principal_pos + uniform_in_ball(rng, cfg.respawn_radius), u)
            }
        };
        velocity = Vec3::ZERO;
    }
    next.position = position;
    next.velocity = velocity;
    next
}

/// Id of the principal closest to `g_pos`; ties go to the smallest id.
pub fn nearest_principal(g_pos: Vec3, principals: &[(UserId, Vec3)]) -> Result<UserId> {
    principals
        .iter()
        .map(|&(id, p)| ((p - g_pos).norm_squared(), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or_else(|| Error::InvalidInput("no principals to choose from".into()))
}

/// Adds independent `N(0, sigma^2)` noise to yaw, pitch and roll.
pub fn rubberneck<R: Rng + ?Sized>(o: OrientationYPR, sigma: f64, rng: &mut R) -> OrientationYPR {
    if sigma == 0.0 {
        return o;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let e1 = normal.sample(rng);
    let e2 = normal.sample(rng);
    let e3 = normal.sample(rng);
    o.offset(e1, e2, e3)
}

/// Current orientation advanced by the smoothed angular rate over the horizon.
pub fn predict_orientation(s: &UserState, cfg: &MotionConfig) -> OrientationYPR {
    let h = cfg.prediction_horizon;
    let r = s.angular_rate_ema;
    s.orientation.offset(r.yaw * h, r.pitch * h, r.roll * h)
}

/// Folds one step's observed angular change into the rate EMA.
pub fn update_angular_rate(
    ema: AngularRate,
    before: OrientationYPR,
    after: OrientationYPR,
    cfg: &MotionConfig,
) -> AngularRate {
    let a = cfg.ema_alpha;
    let d = cfg.timestep;
    let observed = AngularRate {
        yaw: angle_delta(before.yaw(), after.yaw()) / d,
        pitch: (after.pitch() - before.pitch()) / d,
        roll: angle_delta(before.roll(), after.roll()) / d,
    };
    AngularRate {
        yaw: ema.yaw * (1.0 - a) + a * observed.yaw,
        pitch: ema.pitch * (1.0 - a) + a * observed.pitch,
        roll: ema.roll * (1.0 - a) + a * observed.roll,
    }
}

/// One full tick for one user: translation, head noise, look direction and
/// the angular-rate estimate. `step` is the 1-based tick index.
///
/// `principal_pos` is ignored for principals and required for groupies.
pub fn advance_user<R: Rng + ?Sized>(
    s: &UserState,
    leader: Option<&UserState>,
    cfg: &MotionConfig,
    step: u64,
    rng: &mut R,
) -> UserState {
    let mut next = match s.role {
        Role::Principal => step_principal(s, cfg, rng),
        Role::Groupie => {
            let p = leader.expect("groupie step needs its principal");
            step_groupie(s, p.position, cfg, rng)
        }
    };

    let noise_due = step.is_multiple_of(u64::from(cfg.rubberneck_period_steps));
    let look = match cfg.look_mode {
        LookMode::Heading | LookMode::Entourage => {
            let base = match (cfg.look_mode, leader) {
                (LookMode::Entourage, Some(p)) => p.velocity,
                _ => next.velocity,
            };
            if let Some(h) = OrientationYPR::looking_along(base) {
                next.heading = h;
            }
            if noise_due {
                next.head_offset = rubberneck(OrientationYPR::IDENTITY, cfg.rubberneck_sigma, rng);
            }
            next.heading.offset(next.head_offset.yaw(), next.head_offset.pitch(), next.head_offset.roll())
        }
        LookMode::Free => {
            if noise_due {
                rubberneck(s.orientation, cfg.rubberneck_sigma, rng)
            } else {
                s.orientation
            }
        }
    };
    next.angular_rate_ema = update_angular_rate(s.angular_rate_ema, s.orientation, look, cfg);
    next.orientation = look;
    next
}
