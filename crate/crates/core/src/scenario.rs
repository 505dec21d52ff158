//! Engagement parameters, initial conditions and the JSON scenario format.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Initial kinematic state of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentInit {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl AgentInit {
    pub fn at_rest(position: Vec3) -> Self {
        Self { position, velocity: geom::ZERO }
    }
}

fn default_threshold() -> f64 {
    0.5
}

/// All physical and numerical parameters of one engagement.
///
/// Every field is required in the JSON form except `survival_threshold`,
/// which defaults to 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_attackers: usize,
    pub n_defenders: usize,
    /// Stationary HVU position.
    pub hvu_position: Vec3,
    /// Attacker-attacker repulsion/attraction switch range.
    pub d0: f64,
    /// Attacker-attacker interaction cutoff.
    pub d1: f64,
    /// Defender repulsion cutoff.
    pub s0: f64,
    /// Magnitude of the virtual-leader pull toward the HVU.
    pub leader_gain: f64,
    pub damping: f64,
    /// Attacker rate of fire.
    pub lambda_a: f64,
    /// Defender rate of fire.
    pub lambda_d: f64,
    /// Attacker weapon range parameter (divides squared distance).
    pub sigma_a: f64,
    /// Defender weapon range parameter (divides squared distance).
    pub sigma_d: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// Per-component bound on defender acceleration.
    pub u_max: f64,
    /// Minimum pairwise defender separation.
    pub d_min: f64,
    #[serde(default = "default_threshold")]
    pub survival_threshold: f64,
    pub bernstein_order: usize,
    /// Attacker-attacker short-range repulsion gain.
    pub k_rep: f64,
    /// Attacker-attacker mid-range attraction gain.
    pub k_att: f64,
    /// Defender-on-attacker repulsion gain.
    pub k_dref: f64,
    pub initial_attackers: Vec<AgentInit>,
    pub initial_defenders: Vec<AgentInit>,
    pub rng_seed: u64,
}

/// Highest Bernstein order accepted; binomials stay exact well below this.
pub const MAX_BERNSTEIN_ORDER: usize = 30;

impl ScenarioConfig {
    /// Final time `t_f = n_steps * dt`.
    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// Time of grid point `k`.
    pub fn time_at(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon()
        } else {
            k as f64 * self.dt
        }
    }

    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time_at(k)).collect()
    }

    pub fn attacker_positions(&self) -> Vec<Vec3> {
        self.initial_attackers.iter().map(|a| a.position).collect()
    }

    pub fn defender_positions(&self) -> Vec<Vec3> {
        self.initial_defenders.iter().map(|a| a.position).collect()
    }

    /// Largest pairwise distance among the HVU and all initial agent positions.
    pub fn spatial_extent(&self) -> f64 {
        let mut pts = vec![self.hvu_position];
        pts.extend(self.attacker_positions());
        pts.extend(self.defender_positions());
        let mut best: f64 = 0.0;
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                best = best.max(geom::norm(geom::sub(pts[i], pts[j])));
            }
        }
        best
    }

    /// Checks every invariant, naming the first violated constraint.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Validation(msg.to_string()));
        if self.n_attackers == 0 {
            return fail("n_attackers > 0 violated");
        }
        if self.n_defenders == 0 {
            return fail("n_defenders > 0 violated");
        }
        let scalars = [
            ("d0", self.d0),
            ("d1", self.d1),
            ("s0", self.s0),
            ("leader_gain", self.leader_gain),
            ("damping", self.damping),
            ("lambda_a", self.lambda_a),
            ("lambda_d", self.lambda_d),
            ("sigma_a", self.sigma_a),
            ("sigma_d", self.sigma_d),
            ("dt", self.dt),
            ("u_max", self.u_max),
            ("d_min", self.d_min),
            ("survival_threshold", self.survival_threshold),
            ("k_rep", self.k_rep),
            ("k_att", self.k_att),
            ("k_dref", self.k_dref),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite")));
            }
        }
        if !(self.d0 > 0.0) {
            return fail("0 < d0 violated");
        }
        if !(self.d0 < self.d1) {
            return fail("d0 < d1 violated");
        }
        if !(self.s0 > 0.0) {
            return fail("s0 > 0 violated");
        }
        if !(self.dt > 0.0) {
            return fail("dt > 0 violated");
        }
        if !(self.u_max > 0.0) {
            return fail("u_max > 0 violated");
        }
        if self.d_min < 0.0 {
            return fail("d_min >= 0 violated");
        }
        if self.n_steps == 0 {
            return fail("n_steps > 0 violated");
        }
        if !(0.0..1.0).contains(&self.survival_threshold) {
            return fail("survival_threshold in [0, 1) violated");
        }
        for (name, v) in [
            ("leader_gain", self.leader_gain),
            ("damping", self.damping),
            ("lambda_a", self.lambda_a),
            ("lambda_d", self.lambda_d),
            ("k_rep", self.k_rep),
            ("k_att", self.k_att),
            ("k_dref", self.k_dref),
        ] {
            if v < 0.0 {
                return Err(Error::Validation(format!("{name} >= 0 violated")));
            }
        }
        if !(self.sigma_a > 0.0) {
            return fail("sigma_a > 0 violated");
        }
        if !(self.sigma_d > 0.0) {
            return fail("sigma_d > 0 violated");
        }
        if self.bernstein_order < 2 || self.bernstein_order > MAX_BERNSTEIN_ORDER {
            return fail("2 <= bernstein_order <= 30 violated");
        }
        if self.initial_attackers.len() != self.n_attackers {
            return fail("len(initial_attackers) == n_attackers violated");
        }
        if self.initial_defenders.len() != self.n_defenders {
            return fail("len(initial_defenders) == n_defenders violated");
        }
        if !geom::is_finite(self.hvu_position) {
            return fail("hvu_position must be finite");
        }
        let agents = self.initial_attackers.iter().chain(&self.initial_defenders);
        if agents.into_iter().any(|a| !geom::is_finite(a.position) || !geom::is_finite(a.velocity)) {
            return fail("initial conditions must be finite");
        }
        Ok(())
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario<R: Read>(source: R) -> Result<ScenarioConfig> {
    let mut de = serde_json::Deserializer::from_reader(source);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| Error::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
    de.end().map_err(|e| Error::Parse { path: ".".into(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario_file(path: impl AsRef<std::path::Path>) -> Result<ScenarioConfig> {
    let file = std::fs::File::open(path)?;
    load_scenario(std::io::BufReader::new(file))
}

pub fn save_scenario<W: Write>(cfg: &ScenarioConfig, sink: W) -> Result<()> {
    serde_json::to_writer_pretty(sink, cfg)?;
    Ok(())
}

/// Samples `n` agents at rest, uniformly inside a ball, with every pair at
/// least `min_separation` apart. Deterministic in `seed`.
pub fn default_initializer(
    n: usize,
    radius: f64,
    center: Vec3,
    min_separation: f64,
    seed: u64,
) -> Result<Vec<AgentInit>> {
    if n == 0 {
        return Err(Error::Domain("initializer needs n >= 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Domain("initializer needs radius > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = 10_000 * n;
    let mut placed: Vec<Vec3> = Vec::with_capacity(n);
    let mut attempts = 0;
    while placed.len() < n {
        if attempts >= max_attempts {
            return Err(Error::Placement { placed: placed.len(), requested: n });
        }
        attempts += 1;
        let offset: Vec3 = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        if geom::norm_sq(offset) > 1.0 {
            continue;
        }
        let p = geom::add(center, geom::scale(offset, radius));
        if placed.iter().all(|q| geom::norm(geom::sub(p, *q)) >= min_separation) {
            placed.push(p);
        }
    }
    Ok(placed.into_iter().map(AgentInit::at_rest).collect())
}
