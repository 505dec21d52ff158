//! Weapon damage, survival-probability recursions and index-set updates.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{EffectivenessWeights, SwarmState};
use crate::error::{Error, Result};
use crate::geom;
use crate::scenario::ScenarioConfig;

/// Damage kernel: 1 at zero, smoothly decreasing to 0.
///
/// Implemented as the two-sided standard normal tail `2 (1 - N(x))`,
/// i.e. `erfc(x / sqrt 2)`.
pub fn phi(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("phi needs x >= 0, got {x}")));
    }
    Ok(phi_unchecked(x))
}

#[inline]
pub(crate) fn phi_unchecked(x: f64) -> f64 {
    libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Survival probabilities of the HVU, attackers and defenders.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalVector {
    pub q_hvu: f64,
    pub q_attackers: Vec<f64>,
    pub q_defenders: Vec<f64>,
}

impl SurvivalVector {
    pub fn ones(n: usize, m: usize) -> Self {
        Self { q_hvu: 1.0, q_attackers: vec![1.0; n], q_defenders: vec![1.0; m] }
    }

    pub fn is_valid(&self) -> bool {
        std::iter::once(&self.q_hvu).chain(&self.q_attackers).chain(&self.q_defenders).all(|q| (0.0..=1.0).contains(q))
    }

    /// Survival probabilities as force/fire weights (weighted model).
    pub fn as_weights(&self) -> EffectivenessWeights {
        EffectivenessWeights { attacker_w: self.q_attackers.clone(), defender_w: self.q_defenders.clone() }
    }

    pub fn mean_attacker(&self) -> f64 {
        mean(&self.q_attackers)
    }

    pub fn mean_defender(&self) -> f64 {
        mean(&self.q_defenders)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Alive/dead bookkeeping. Removal is permanent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    pub attacker_alive: Vec<bool>,
    pub defender_alive: Vec<bool>,
    pub hvu_alive: bool,
}

impl IndexSet {
    pub fn all_alive(n: usize, m: usize) -> Self {
        Self { attacker_alive: vec![true; n], defender_alive: vec![true; m], hvu_alive: true }
    }

    pub fn as_weights(&self) -> EffectivenessWeights {
        EffectivenessWeights::from_masks(&self.attacker_alive, &self.defender_alive)
    }

    pub fn alive_attackers(&self) -> usize {
        self.attacker_alive.iter().filter(|a| **a).count()
    }

    pub fn alive_defenders(&self) -> usize {
        self.defender_alive.iter().filter(|a| **a).count()
    }

    /// Alive agents plus the HVU if alive.
    pub fn alive_total(&self) -> usize {
        self.alive_attackers() + self.alive_defenders() + usize::from(self.hvu_alive)
    }

    /// True when no agent alive in `self` is dead in `earlier`.
    pub fn is_subset_of(&self, earlier: &IndexSet) -> bool {
        let sub = |now: &[bool], then: &[bool]| now.iter().zip(then).all(|(n, t)| !*n || *t);
        sub(&self.attacker_alive, &earlier.attacker_alive)
            && sub(&self.defender_alive, &earlier.defender_alive)
            && (!self.hvu_alive || earlier.hvu_alive)
    }
}

/// Pairwise attrition rates at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DamageRates {
    /// `att[i][k]`: rate at which defender `k` destroys attacker `i`.
    pub att: Vec<Vec<f64>>,
    /// `def[k][i]`: rate at which attacker `i` destroys defender `k`.
    pub def: Vec<Vec<f64>>,
    /// `hvu[i]`: rate at which attacker `i` destroys the HVU.
    pub hvu: Vec<f64>,
}

pub fn damage_rates(state: &SwarmState, cfg: &ScenarioConfig) -> DamageRates {
    let n = state.n_attackers();
    let m = state.n_defenders();
    let mut att = vec![vec![0.0; m]; n];
    let mut def = vec![vec![0.0; n]; m];
    for (i, &xi) in state.attacker_pos.iter().enumerate() {
        for (k, &sk) in state.defender_pos.iter().enumerate() {
            let r2 = geom::norm_sq(geom::sub(xi, sk));
            att[i][k] = cfg.lambda_d * phi_unchecked(r2 / cfg.sigma_d);
            def[k][i] = cfg.lambda_a * phi_unchecked(r2 / cfg.sigma_a);
        }
    }
    let hvu = state
        .attacker_pos
        .iter()
        .map(|&xi| cfg.lambda_a * phi_unchecked(geom::norm_sq(geom::sub(state.hvu_pos, xi)) / cfg.sigma_a))
        .collect();
    DamageRates { att, def, hvu }
}

/// Slack allowed above 1 before a rate*weight*dt product counts as a clamp.
const CLAMP_SLACK: f64 = 1e-12;

#[inline]
fn factor(product: f64, side: &'static str, target: usize, shooter: usize) -> Result<f64> {
    if product > 1.0 + CLAMP_SLACK {
        return Err(Error::ClampActivated { side, target, shooter, product });
    }
    Ok((1.0 - product).clamp(0.0, 1.0))
}

/// Advances survival probabilities by one step:
/// each target's probability is multiplied by `prod (1 - rate * w_shooter * dt)`
/// over the opposing side.
pub fn survival_step(
    q: &SurvivalVector,
    rates: &DamageRates,
    eff: &EffectivenessWeights,
    dt: f64,
) -> Result<SurvivalVector> {
    let mut q_attackers = Vec::with_capacity(q.q_attackers.len());
    for (i, &qa) in q.q_attackers.iter().enumerate() {
        let mut p = qa;
        for (k, &w) in eff.defender_w.iter().enumerate() {
            p *= factor(rates.att[i][k] * w * dt, "attacker", i, k)?;
        }
        q_attackers.push(p);
    }
    let mut q_defenders = Vec::with_capacity(q.q_defenders.len());
    for (k, &qd) in q.q_defenders.iter().enumerate() {
        let mut p = qd;
        for (i, &w) in eff.attacker_w.iter().enumerate() {
            p *= factor(rates.def[k][i] * w * dt, "defender", k, i)?;
        }
        q_defenders.push(p);
    }
    let mut q_hvu = q.q_hvu;
    for (i, &w) in eff.attacker_w.iter().enumerate() {
        q_hvu *= factor(rates.hvu[i] * w * dt, "hvu", 0, i)?;
    }
    Ok(SurvivalVector { q_hvu, q_attackers, q_defenders })
}

/// Removes every alive party whose survival probability is at or below
/// `threshold`.
pub fn threshold_update(iset: &IndexSet, q: &SurvivalVector, threshold: f64) -> IndexSet {
    let keep = |alive: bool, q: f64| alive && q > threshold;
    IndexSet {
        attacker_alive: iset.attacker_alive.iter().zip(&q.q_attackers).map(|(&a, &q)| keep(a, q)).collect(),
        defender_alive: iset.defender_alive.iter().zip(&q.q_defenders).map(|(&a, &q)| keep(a, q)).collect(),
        hvu_alive: keep(iset.hvu_alive, q.q_hvu),
    }
}

/// Counter-based uniform source for one Monte Carlo time step.
///
/// The draw for a slot depends only on `(seed, step, slot)`, so results do
/// not depend on execution order. Slot 0 is the HVU, `1..=N` the attackers,
/// `N+1..=N+M` the defenders.
#[derive(Debug, Clone)]
pub struct StepStream {
    seed: u64,
    step: u64,
    draws: u64,
}

impl StepStream {
    pub fn new(seed: u64, step: u64) -> Self {
        Self { seed, step, draws: 0 }
    }

    /// Uniform draw on (0, 1].
    pub fn uniform(&mut self, slot: u64) -> f64 {
        self.draws += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.step);
        rng.set_word_pos(2 * slot as u128);
        let bits = rng.next_u64() >> 11;
        (bits + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Number of draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

fn remove(alive: bool, prev: f64, next: f64, slot: u64, stream: &mut StepStream, what: &str) -> Result<bool> {
    if !alive {
        return Ok(false);
    }
    if !(prev > 0.0) {
        return Err(Error::Consistency(format!("{what} is alive with zero survival probability")));
    }
    let omega = stream.uniform(slot);
    Ok(omega <= next / prev)
}

/// Random removal: each alive party draws `omega` on (0, 1] and is removed
/// iff `omega > q_next / q_prev`.
pub fn mc_removal(
    iset: &IndexSet,
    q_prev: &SurvivalVector,
    q_next: &SurvivalVector,
    stream: &mut StepStream,
) -> Result<IndexSet> {
    let n = iset.attacker_alive.len() as u64;
    let hvu_alive = remove(iset.hvu_alive, q_prev.q_hvu, q_next.q_hvu, 0, stream, "HVU")?;
    let mut attacker_alive = Vec::with_capacity(iset.attacker_alive.len());
    for (i, &a) in iset.attacker_alive.iter().enumerate() {
        let what = format!("attacker {i}");
        attacker_alive.push(remove(a, q_prev.q_attackers[i], q_next.q_attackers[i], 1 + i as u64, stream, &what)?);
    }
    let mut defender_alive = Vec::with_capacity(iset.defender_alive.len());
    for (k, &a) in iset.defender_alive.iter().enumerate() {
        let what = format!("defender {k}");
        defender_alive.push(remove(a, q_prev.q_defenders[k], q_next.q_defenders[k], 1 + n + k as u64, stream, &what)?);
    }
    Ok(IndexSet { attacker_alive, defender_alive, hvu_alive })
}
