//! Attacker force model and velocity-Verlet integration.
//!
//! The acceleration of attacker `i` is the sum of pairwise attacker
//! interaction, defender repulsion, a constant-magnitude pull toward the HVU
//! and linear damping. Each pairwise contribution is scaled by an
//! effectiveness weight of the *source* agent, which is how the three
//! deterministic models and the Monte Carlo enactment differ:
//!
//! * all-ones weights: plain uncoupled dynamics,
//! * survival probabilities: weighted forces,
//! * binary masks: threshold model / Monte Carlo alive masks.
//!
//! Defenders are kinematic. Their positions and velocities are written into
//! the state from evaluated trajectories rather than integrated.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::scenario::ScenarioConfig;

/// Lower bound applied to every distance before it enters a `1/r` term.
pub const SOFTENING: f64 = 1e-6;

/// Row count above which force rows are evaluated on the rayon pool.
const PARALLEL_ROWS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub attacker_pos: Vec<Vec3>,
    pub attacker_vel: Vec<Vec3>,
    pub defender_pos: Vec<Vec3>,
    pub defender_vel: Vec<Vec3>,
    pub hvu_pos: Vec3,
    pub time_index: usize,
}

impl SwarmState {
    /// State at `t_0` with the given defender kinematics.
    pub fn initial(cfg: &ScenarioConfig, defenders: &DefenderKinematics) -> Self {
        Self {
            attacker_pos: cfg.initial_attackers.iter().map(|a| a.position).collect(),
            attacker_vel: cfg.initial_attackers.iter().map(|a| a.velocity).collect(),
            defender_pos: defenders.positions.clone(),
            defender_vel: defenders.velocities.clone(),
            hvu_pos: cfg.hvu_position,
            time_index: 0,
        }
    }

    pub fn n_attackers(&self) -> usize {
        self.attacker_pos.len()
    }

    pub fn n_defenders(&self) -> usize {
        self.defender_pos.len()
    }

    pub fn is_finite(&self) -> bool {
        self.attacker_pos
            .iter()
            .chain(&self.attacker_vel)
            .chain(&self.defender_pos)
            .chain(&self.defender_vel)
            .all(|v| geom::is_finite(*v))
            && geom::is_finite(self.hvu_pos)
    }
}

/// Defender positions and velocities at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenderKinematics {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
}

/// Per-agent multipliers on pairwise force (and fire) contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivenessWeights {
    pub attacker_w: Vec<f64>,
    pub defender_w: Vec<f64>,
}

impl EffectivenessWeights {
    pub fn ones(n: usize, m: usize) -> Self {
        Self { attacker_w: vec![1.0; n], defender_w: vec![1.0; m] }
    }

    pub fn from_masks(attackers: &[bool], defenders: &[bool]) -> Self {
        let w = |b: &bool| if *b { 1.0 } else { 0.0 };
        Self { attacker_w: attackers.iter().map(w).collect(), defender_w: defenders.iter().map(w).collect() }
    }

    pub fn is_valid(&self) -> bool {
        self.attacker_w.iter().chain(&self.defender_w).all(|w| (0.0..=1.0).contains(w))
    }
}

/// Attacker accelerations at the current time step.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelCache {
    pub attacker_acc: Vec<Vec3>,
}

/// Force-profile parameters extracted from a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceProfile {
    pub d0: f64,
    pub d1: f64,
    pub s0: f64,
    pub k_rep: f64,
    pub k_att: f64,
    pub k_dref: f64,
}

impl ForceProfile {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self { d0: cfg.d0, d1: cfg.d1, s0: cfg.s0, k_rep: cfg.k_rep, k_att: cfg.k_att, k_dref: cfg.k_dref }
    }

    /// Attacker-attacker magnitude; positive pushes `i` away from `j`.
    #[inline]
    pub fn inter(&self, r: f64) -> f64 {
        let r = r.max(SOFTENING);
        if r <= self.d0 {
            self.k_rep * (self.d0 / r - 1.0)
        } else if r <= self.d1 {
            let w = self.d1 - self.d0;
            -self.k_att * 4.0 * (r - self.d0) * (self.d1 - r) / (w * w)
        } else {
            0.0
        }
    }

    /// Defender-on-attacker repulsion magnitude.
    #[inline]
    pub fn def(&self, r: f64) -> f64 {
        let r = r.max(SOFTENING);
        if r <= self.s0 {
            self.k_dref * (self.s0 / r - 1.0)
        } else {
            0.0
        }
    }
}

/// Attacker-attacker interaction magnitude at separation `r`: repulsive
/// (positive) inside `d0`, attractive (negative) on `(d0, d1]`, zero beyond.
pub fn f_inter(r: f64, d0: f64, d1: f64, k_rep: f64, k_att: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("f_inter needs r > 0, got {r}")));
    }
    let p = ForceProfile { d0, d1, s0: 1.0, k_rep, k_att, k_dref: 0.0 };
    Ok(p.inter(r))
}

/// Defender repulsion magnitude at separation `r`; zero from `s0` outward.
pub fn f_def(r: f64, s0: f64, k_dref: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("f_def needs r > 0, got {r}")));
    }
    let p = ForceProfile { d0: 1.0, d1: 2.0, s0, k_rep: 0.0, k_att: 0.0, k_dref };
    Ok(p.def(r))
}

/// Position-dependent part of the acceleration (everything except damping).
fn conservative_row(
    i: usize,
    state: &SwarmState,
    weights: &EffectivenessWeights,
    profile: &ForceProfile,
    leader_gain: f64,
) -> Vec3 {
    let xi = state.attacker_pos[i];
    let mut acc = geom::ZERO;
    for (j, &xj) in state.attacker_pos.iter().enumerate() {
        if j == i {
            continue;
        }
        let w = weights.attacker_w[j];
        if w == 0.0 {
            continue;
        }
        let xij = geom::sub(xi, xj);
        let r = geom::norm(xij);
        if r == 0.0 {
            continue;
        }
        let f = profile.inter(r);
        if f != 0.0 {
            acc = geom::add(acc, geom::scale(xij, w * f / r.max(SOFTENING)));
        }
    }
    for (k, &sk) in state.defender_pos.iter().enumerate() {
        let w = weights.defender_w[k];
        if w == 0.0 {
            continue;
        }
        let sik = geom::sub(xi, sk);
        let r = geom::norm(sik);
        if r == 0.0 {
            continue;
        }
        let f = profile.def(r);
        if f != 0.0 {
            acc = geom::add(acc, geom::scale(sik, w * f / r.max(SOFTENING)));
        }
    }
    let hi = geom::sub(state.hvu_pos, xi);
    let hn = geom::norm(hi);
    if hn > 0.0 {
        acc = geom::add(acc, geom::scale(hi, leader_gain / hn));
    }
    acc
}

fn conservative_accelerations(
    state: &SwarmState,
    weights: &EffectivenessWeights,
    cfg: &ScenarioConfig,
    frozen: Option<&[bool]>,
) -> Vec<Vec3> {
    let profile = ForceProfile::from_config(cfg);
    let row = |i: usize| {
        if frozen.is_some_and(|f| f[i]) {
            geom::ZERO
        } else {
            conservative_row(i, state, weights, &profile, cfg.leader_gain)
        }
    };
    let n = state.n_attackers();
    if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    }
}

/// Full attacker accelerations, including damping, under the given weights.
///
/// An attacker sitting exactly on the HVU gets no leader term.
pub fn attacker_accelerations(state: &SwarmState, weights: &EffectivenessWeights, cfg: &ScenarioConfig) -> Vec<Vec3> {
    let forces = conservative_accelerations(state, weights, cfg, None);
    forces.into_iter().zip(&state.attacker_vel).map(|(f, v)| geom::sub(f, geom::scale(*v, cfg.damping))).collect()
}

/// Accelerations consistent with `state`, for seeding the integrator.
pub fn initial_cache(state: &SwarmState, weights: &EffectivenessWeights, cfg: &ScenarioConfig) -> AccelCache {
    AccelCache { attacker_acc: attacker_accelerations(state, weights, cfg) }
}

/// One velocity-Verlet step.
///
/// Positions advance with the cached accelerations, defender kinematics are
/// overwritten from `defender_next`, new accelerations are evaluated at the
/// new positions under `weights`, and velocities advance with the trapezoid
/// of old and new accelerations. The linear damping term enters the new
/// acceleration implicitly so the scheme keeps second-order accuracy.
pub fn verlet_step(
    state: &SwarmState,
    cache: &AccelCache,
    weights: &EffectivenessWeights,
    defender_next: &DefenderKinematics,
    cfg: &ScenarioConfig,
) -> Result<(SwarmState, AccelCache)> {
    step_impl(state, cache, weights, defender_next, cfg, None)
}

/// As [`verlet_step`], but attackers flagged in `frozen` keep their position,
/// have zero velocity and zero acceleration.
pub fn verlet_step_frozen(
    state: &SwarmState,
    cache: &AccelCache,
    weights: &EffectivenessWeights,
    defender_next: &DefenderKinematics,
    cfg: &ScenarioConfig,
    frozen: &[bool],
) -> Result<(SwarmState, AccelCache)> {
    step_impl(state, cache, weights, defender_next, cfg, Some(frozen))
}

fn step_impl(
    state: &SwarmState,
    cache: &AccelCache,
    weights: &EffectivenessWeights,
    defender_next: &DefenderKinematics,
    cfg: &ScenarioConfig,
    frozen: Option<&[bool]>,
) -> Result<(SwarmState, AccelCache)> {
    let dt = cfg.dt;
    let is_frozen = |i: usize| frozen.is_some_and(|f| f[i]);
    let attacker_pos: Vec<Vec3> = (0..state.n_attackers())
        .map(|i| {
            if is_frozen(i) {
                state.attacker_pos[i]
            } else {
                let x = state.attacker_pos[i];
                let v = state.attacker_vel[i];
                let a = cache.attacker_acc[i];
                geom::add(geom::add(x, geom::scale(v, dt)), geom::scale(a, 0.5 * dt * dt))
            }
        })
        .collect();
    if let Some(i) = attacker_pos.iter().position(|x| !geom::is_finite(*x)) {
        return Err(Error::Blowup { step: state.time_index, agent: i });
    }
    let mut next = SwarmState {
        attacker_pos,
        attacker_vel: state.attacker_vel.clone(),
        defender_pos: defender_next.positions.clone(),
        defender_vel: defender_next.velocities.clone(),
        hvu_pos: state.hvu_pos,
        time_index: state.time_index + 1,
    };
    let forces = conservative_accelerations(&next, weights, cfg, frozen);
    let relax = 1.0 / (1.0 + 0.5 * cfg.damping * dt);
    let mut acc = Vec::with_capacity(forces.len());
    for (i, f) in forces.into_iter().enumerate() {
        if is_frozen(i) {
            next.attacker_vel[i] = geom::ZERO;
            acc.push(geom::ZERO);
            continue;
        }
        let v_old = state.attacker_vel[i];
        let a_old = cache.attacker_acc[i];
        let v_new = geom::scale(geom::add(v_old, geom::scale(geom::add(a_old, f), 0.5 * dt)), relax);
        let a_new = geom::sub(f, geom::scale(v_new, cfg.damping));
        if !geom::is_finite(next.attacker_pos[i]) || !geom::is_finite(v_new) || !geom::is_finite(a_new) {
            return Err(Error::Blowup { step: state.time_index, agent: i });
        }
        next.attacker_vel[i] = v_new;
        acc.push(a_new);
    }
    Ok((next, AccelCache { attacker_acc: acc }))
}
