//! World construction, the master simulation loop and visibility logging.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ConfigError, Error, Result};
use crate::geometry::{view_axis, FovKind, FovSpec, OrientationYPR, Vec3};
use crate::motion::{
    advance_user, nearest_principal, predict_orientation, random_unit_vector, uniform_in_cube,
    user_rng, world_rng, LookMode, MotionConfig, Role, UserId, UserState,
};
use crate::time::Timestamp;

pub type ObjectId = u32;

/// FoV parameters as they appear in config files (angle in degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FovParams {
    pub angle_deg: f64,
    pub depth: f64,
}

impl FovParams {
    pub fn to_spec(self, kind: FovKind) -> Result<FovSpec, ConfigError> {
        FovSpec::from_degrees(kind, self.angle_deg, self.depth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated seconds.
    pub duration: f64,
    pub n_principals: u32,
    pub n_groupies: u32,
    pub n_objects: u32,
    pub object_radius: f64,
    pub immediate_fov: FovParams,
    pub predicted_fov: FovParams,
    pub motion: MotionConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            duration: 600.0,
            n_principals: 2,
            n_groupies: 8,
            n_objects: 200,
            object_radius: 0.0,
            immediate_fov: FovParams {
                angle_deg: 110.0,
                depth: 10.0,
            },
            predicted_fov: FovParams {
                angle_deg: 140.0,
                depth: 20.0,
            },
            motion: MotionConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(ConfigError::new("duration", "must be > 0"));
        }
        if self.n_principals < 1 {
            return Err(ConfigError::new("n_principals", "must be >= 1"));
        }
        if self.n_objects < 1 {
            return Err(ConfigError::new("n_objects", "must be >= 1"));
        }
        if !(self.object_radius >= 0.0 && self.object_radius.is_finite()) {
            return Err(ConfigError::new("object_radius", "must be >= 0"));
        }
        self.motion.validate()?;
        let (imm, pred) = self.fov_specs()?;
        if !pred.dominates(&imm) {
            return Err(ConfigError::new(
                "predicted_fov",
                "must dominate immediate_fov (angle and depth >= immediate)",
            ));
        }
        Ok(())
    }

    pub fn fov_specs(&self) -> Result<(FovSpec, FovSpec), ConfigError> {
        Ok((
            self.immediate_fov.to_spec(FovKind::Immediate)?,
            self.predicted_fov.to_spec(FovKind::Predicted)?,
        ))
    }

    pub fn n_users(&self) -> u32 {
        self.n_principals + self.n_groupies
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.motion.timestep).round() as u64
    }

    /// Short hex digest of every setting except the seed.
    pub fn config_hash(&self) -> String {
        let mut unseeded = self.clone();
        unseeded.seed = 0;
        let json = serde_json::to_vec(&unseeded).expect("config serializes");
        let digest = Sha256::digest(&json);
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub object_id: ObjectId,
    pub position: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct World {
    pub users: Vec<UserState>,
    pub objects: Vec<SceneObject>,
}

/// Places users and objects uniformly in the universe from the world stream.
///
/// Principals get ids `0..n_principals`, groupies follow.
pub fn init_world(cfg: &ScenarioConfig) -> Result<World> {
    cfg.validate()?;
    let u = cfg.motion.universe_half_extent;
    let mut rng = world_rng(cfg.seed);

    let objects = (0..cfg.n_objects)
        .map(|object_id| SceneObject {
            object_id,
            position: uniform_in_cube(&mut rng, u),
            radius: cfg.object_radius,
        })
        .collect();

    let users = (0..cfg.n_users())
        .map(|user_id| {
            let position = uniform_in_cube(&mut rng, u);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let orientation = OrientationYPR::new(yaw, 0.0, 0.0);
            if user_id < cfg.n_principals {
                let velocity = random_unit_vector(&mut rng) * cfg.motion.principal_speed;
                let mut s = UserState::new(user_id, Role::Principal, position, velocity, orientation);
                if cfg.motion.look_mode != LookMode::Free {
                    s.orientation = s.heading;
                }
                s
            } else {
                UserState::new(user_id, Role::Groupie, position, Vec3::ZERO, orientation)
            }
        })
        .collect();

    Ok(World { users, objects })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Transition {
    Enter,
    Exit,
}

impl Transition {
    pub fn as_str(self) -> &'static str {
        match self {
            Transition::Enter => "enter",
            Transition::Exit => "exit",
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transition {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "enter" => Ok(Transition::Enter),
            "exit" => Ok(Transition::Exit),
            _ => Err(()),
        }
    }
}

impl FromStr for FovKind {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "immediate" => Ok(FovKind::Immediate),
            "predicted" => Ok(FovKind::Predicted),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityEvent {
    pub time: Timestamp,
    pub user_id: UserId,
    pub object_id: ObjectId,
    pub fov: FovKind,
    pub transition: Transition,
    pub distance: f64,
}

impl VisibilityEvent {
    pub fn sort_key(&self) -> (Timestamp, UserId, ObjectId, FovKind) {
        (self.time, self.user_id, self.object_id, self.fov)
    }
}

/// Provenance carried in log and trace headers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisibilityLog {
    pub provenance: Provenance,
    pub events: Vec<VisibilityEvent>,
}

impl VisibilityLog {
    /// Checks ordering and per-stream enter/exit alternation.
    pub fn validate(&self) -> Result<()> {
        let mut open: BTreeSet<(UserId, ObjectId, FovKind)> = BTreeSet::new();
        for (i, pair) in self.events.windows(2).enumerate() {
            if pair[0].sort_key() >= pair[1].sort_key() {
                return Err(Error::Unsorted { line: i + 2 });
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            let key = (e.user_id, e.object_id, e.fov);
            let ok = match e.transition {
                Transition::Enter => open.insert(key),
                Transition::Exit => open.remove(&key),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "event {}: {} for user {} object {} {} does not alternate",
                    i + 1,
                    e.transition,
                    e.user_id,
                    e.object_id,
                    e.fov
                )));
            }
        }
        Ok(())
    }
}

/// Per-user view state after a tick: position plus both cone axes.
#[derive(Debug, Clone, Copy)]
pub struct UserView {
    pub position: Vec3,
    pub immediate_axis: Vec3,
    pub predicted_axis: Vec3,
}

/// Drives the world tick by tick and reports each tick's views.
pub struct Simulation {
    cfg: ScenarioConfig,
    world: World,
    rngs: Vec<ChaCha8Rng>,
    step: u64,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        Self::from_world(cfg, init_world(cfg)?)
    }

    /// Starts from a hand-built world; object ids must be dense `0..n`.
    pub fn from_world(cfg: &ScenarioConfig, world: World) -> Result<Self> {
        cfg.validate()?;
        if world.objects.iter().enumerate().any(|(i, o)| o.object_id as usize != i) {
            return Err(Error::InvalidInput("object ids must be dense 0..n in order".into()));
        }
        if !world.users.iter().any(|u| u.role == Role::Principal) {
            return Err(Error::InvalidInput("world needs at least one principal".into()));
        }
        let rngs = world.users.iter().map(|u| user_rng(cfg.seed, u.user_id)).collect();
        Ok(Self {
            cfg: cfg.clone(),
            world,
            rngs,
            step: 0,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> Timestamp {
        Timestamp::from_secs_f64(self.step as f64 * self.cfg.motion.timestep)
    }

    pub fn views(&self) -> Vec<UserView> {
        self.world
            .users
            .iter()
            .map(|u| UserView {
                position: u.position,
                immediate_axis: view_axis(u.orientation),
                predicted_axis: view_axis(predict_orientation(u, &self.cfg.motion)),
            })
            .collect()
    }

    /// Advances every user by one timestep. Principals move first; each
    /// groupie then follows whichever principal is nearest after that move.
    pub fn tick(&mut self) {
        self.step += 1;
        let step = self.step;
        let motion = &self.cfg.motion;
        let users = &mut self.world.users;
        for (u, rng) in users.iter_mut().zip(self.rngs.iter_mut()) {
            if u.role == Role::Principal {
                *u = advance_user(u, None, motion, step, rng);
            }
        }
        let leaders: Vec<UserState> = users.iter().filter(|u| u.role == Role::Principal).cloned().collect();
        let principals: Vec<(UserId, Vec3)> = leaders.iter().map(|u| (u.user_id, u.position)).collect();
        for (u, rng) in users.iter_mut().zip(self.rngs.iter_mut()) {
            if u.role == Role::Groupie {
                let id = nearest_principal(u.position, &principals).expect("at least one principal");
                let leader = leaders.iter().find(|p| p.user_id == id);
                *u = advance_user(u, leader, motion, step, rng);
            }
        }
    }
}

/// Runs the whole scenario and returns the sorted visibility log.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<VisibilityLog> {
    run_world(cfg, init_world(cfg)?)
}

/// Like [`run_simulation`] but starting from the given world.
pub fn run_world(cfg: &ScenarioConfig, world: World) -> Result<VisibilityLog> {
    let mut sim = Simulation::from_world(cfg, world)?;
    let (imm, pred) = cfg.fov_specs()?;
    let cones = [(FovKind::Immediate, imm.cone()), (FovKind::Predicted, pred.cone())];
    let n_obj = sim.world.objects.len();
    let positions: Vec<Vec3> = sim.world.objects.iter().map(|o| o.position).collect();
    let mut inside = vec![false; sim.world.users.len() * n_obj * 2];
    let mut events = Vec::new();

    let mut record = |sim: &Simulation, events: &mut Vec<VisibilityEvent>| {
        let time = sim.time();
        for (ui, view) in sim.views().iter().enumerate() {
            let user_id = sim.world.users[ui].user_id;
            for (oi, &obj) in positions.iter().enumerate() {
                for (ki, (kind, cone)) in cones.iter().enumerate() {
                    let axis = match kind {
                        FovKind::Immediate => view.immediate_axis,
                        FovKind::Predicted => view.predicted_axis,
                    };
                    let (visible, distance) = cone.contains(view.position, axis, obj);
                    let slot = &mut inside[(ui * n_obj + oi) * 2 + ki];
                    if visible != *slot {
                        *slot = visible;
                        events.push(VisibilityEvent {
                            time,
                            user_id,
                            object_id: oi as ObjectId,
                            fov: *kind,
                            transition: if visible { Transition::Enter } else { Transition::Exit },
                            distance,
                        });
                    }
                }
            }
        }
    };

    record(&sim, &mut events);
    for _ in 0..cfg.steps() {
        sim.tick();
        record(&sim, &mut events);
    }

    Ok(VisibilityLog {
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
        },
        events,
    })
}

const LOG_MAGIC: &str = "#xrflux-vislog v1";
pub const LOG_COLUMNS: &str = "time_s,user_id,object_id,fov,transition,distance";

pub(crate) fn format_header(magic: &str, p: &Provenance) -> String {
    format!("{magic} seed={} config={}", p.seed, p.config_hash)
}

pub(crate) fn parse_header(magic: &str, line: &str) -> Option<Provenance> {
    let rest = line.strip_prefix(magic)?.strip_prefix(' ')?;
    let mut seed = None;
    let mut config = None;
    for part in rest.split(' ') {
        match part.split_once('=')? {
            ("seed", v) => seed = Some(v.parse().ok()?),
            ("config", v) if v.bytes().all(|b| b.is_ascii_hexdigit()) && !v.is_empty() => {
                config = Some(v.to_string())
            }
            _ => return None,
        }
    }
    Some(Provenance {
        seed: seed?,
        config_hash: config?,
    })
}

pub fn write_log<W: Write>(log: &VisibilityLog, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", format_header(LOG_MAGIC, &log.provenance))?;
    writeln!(w, "{LOG_COLUMNS}")?;
    for e in &log.events {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.time, e.user_id, e.object_id, e.fov, e.transition, e.distance
        )?;
    }
    w.flush()
}

pub fn write_log_file(log: &VisibilityLog, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_log(log, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

/// Parses and validates a visibility log. `origin` only labels errors.
pub fn read_log<R: BufRead>(r: R, origin: &Path) -> Result<VisibilityLog> {
    let perr = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = r.lines();
    let mut next_line = |n: usize| -> Result<Option<String>> {
        lines.next().transpose().map_err(|e| perr(n, e.to_string()))
    };

    let header = next_line(1)?.ok_or_else(|| perr(1, "empty file, expected header".into()))?;
    let provenance = parse_header(LOG_MAGIC, &header)
        .ok_or_else(|| perr(1, format!("expected `{LOG_MAGIC} seed=<u64> config=<hex>`")))?;
    match next_line(2)? {
        Some(l) if l == LOG_COLUMNS => {}
        _ => return Err(perr(2, format!("expected column header `{LOG_COLUMNS}`"))),
    }

    let mut events = Vec::new();
    let mut n = 2;
    while let Some(line) = next_line(n + 1)? {
        n += 1;
        let mut fields = line.split(',');
        let mut field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| perr(n, format!("missing field `{name}`")))
        };
        let time_s = field("time_s")?;
        let time = time_s
            .parse::<Timestamp>()
            .map_err(|e| perr(n, format!("field `time_s`: {e}")))?;
        let user_id = field("user_id")?
            .parse()
            .map_err(|_| perr(n, "field `user_id`: not an unsigned integer".into()))?;
        let object_id = field("object_id")?
            .parse()
            .map_err(|_| perr(n, "field `object_id`: not an unsigned integer".into()))?;
        let fov = field("fov")?
            .parse()
            .map_err(|_| perr(n, "field `fov`: expected immediate|predicted".into()))?;
        let transition = field("transition")?
            .parse()
            .map_err(|_| perr(n, "field `transition`: expected enter|exit".into()))?;
        let distance: f64 = field("distance")?
            .parse()
            .map_err(|_| perr(n, "field `distance`: not a number".into()))?;
        if !(distance >= 0.0 && distance.is_finite()) {
            return Err(perr(n, "field `distance`: must be finite and >= 0".into()));
        }
        if fields.next().is_some() {
            return Err(perr(n, "too many fields".into()));
        }
        let e = VisibilityEvent {
            time,
            user_id,
            object_id,
            fov,
            transition,
            distance,
        };
        if let Some(prev) = events.last() {
            let prev: &VisibilityEvent = prev;
            if prev.sort_key() >= e.sort_key() {
                return Err(Error::Unsorted { line: n });
            }
        }
        events.push(e);
    }

    let log = VisibilityLog { provenance, events };
    log.validate().map_err(|e| match e {
        Error::InvalidInput(m) => perr(n, m),
        other => other,
    })?;
    Ok(log)
}

pub fn read_log_file(path: &Path) -> Result<VisibilityLog> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_log(BufReader::new(f), path)
}
