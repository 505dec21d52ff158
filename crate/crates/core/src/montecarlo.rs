//! Stochastic enactment of the engagement with random agent removal.
//!
//! Survival probabilities are tracked with alive masks as fire weights; each
//! step, every alive party is removed with probability `1 - Q(t_{k+1}) / Q(t_k)`.
//! Dead agents are frozen in place and exert neither force nor fire.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attrition::{self, IndexSet, StepStream, SurvivalVector};
use crate::bernstein::ControlPoints;
use crate::dynamics::{self, DefenderKinematics, SwarmState};
use crate::error::Result;
use crate::geom;
use crate::ocp::{kinematics, sample_grid};
use crate::scenario::ScenarioConfig;

/// Normal quantile for two-sided 95% intervals.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Hvu,
    Attacker,
    Defender,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    /// Step `k` whose draw removed the agent; it is dead from `t_{k+1}` on.
    pub step: usize,
    pub agent: usize,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCRunRecord {
    pub seed: u64,
    pub hvu_survived: bool,
    pub final_attackers_alive: usize,
    pub final_defenders_alive: usize,
    /// HVU survival probability under alive-mask bookkeeping, per grid time.
    pub q0_series: Vec<f64>,
    pub attackers_alive: Vec<usize>,
    pub defenders_alive: Vec<usize>,
    pub hvu_alive: Vec<bool>,
    pub removals: Vec<Removal>,
}

/// One stochastic engagement for fixed defender trajectories.
pub fn mc_run(cfg: &ScenarioConfig, cp: &ControlPoints, seed: u64) -> Result<MCRunRecord> {
    run_impl(cfg, cp, seed, false).map(|(r, _)| r)
}

/// As [`mc_run`], also returning the state at every grid time.
pub fn mc_run_with_states(
    cfg: &ScenarioConfig,
    cp: &ControlPoints,
    seed: u64,
) -> Result<(MCRunRecord, Vec<SwarmState>)> {
    run_impl(cfg, cp, seed, true)
}

fn run_impl(
    cfg: &ScenarioConfig,
    cp: &ControlPoints,
    seed: u64,
    keep_states: bool,
) -> Result<(MCRunRecord, Vec<SwarmState>)> {
    let samples = sample_grid(cfg, cp)?;
    let (n, m) = (cfg.n_attackers, cfg.n_defenders);
    let mut state = SwarmState::initial(cfg, &kinematics(&samples[0]));
    let mut q = SurvivalVector::ones(n, m);
    let mut iset = IndexSet::all_alive(n, m);
    let mut cache = dynamics::initial_cache(&state, &iset.as_weights(), cfg);

    let mut rec = MCRunRecord {
        seed,
        hvu_survived: true,
        final_attackers_alive: n,
        final_defenders_alive: m,
        q0_series: vec![1.0],
        attackers_alive: vec![n],
        defenders_alive: vec![m],
        hvu_alive: vec![true],
        removals: Vec::new(),
    };
    let mut states = Vec::new();
    if keep_states {
        states.push(state.clone());
    }

    for k in 0..cfg.n_steps {
        let rates = attrition::damage_rates(&state, cfg);
        let q_next = attrition::survival_step(&q, &rates, &iset.as_weights(), cfg.dt)?;
        let mut stream = StepStream::new(seed, k as u64);
        let next_set = attrition::mc_removal(&iset, &q, &q_next, &mut stream)?;
        if iset.hvu_alive && !next_set.hvu_alive {
            rec.removals.push(Removal { step: k, agent: 0, side: Side::Hvu });
        }
        for (i, (was, now)) in iset.attacker_alive.iter().zip(&next_set.attacker_alive).enumerate() {
            if *was && !*now {
                rec.removals.push(Removal { step: k, agent: i, side: Side::Attacker });
            }
        }
        for (j, (was, now)) in iset.defender_alive.iter().zip(&next_set.defender_alive).enumerate() {
            if *was && !*now {
                rec.removals.push(Removal { step: k, agent: j, side: Side::Defender });
            }
        }
        q = q_next;
        iset = next_set;

        let next_sample = &samples[k + 1];
        let defenders = DefenderKinematics {
            positions: (0..m)
                .map(|j| if iset.defender_alive[j] { next_sample.position[j] } else { state.defender_pos[j] })
                .collect(),
            velocities: (0..m)
                .map(|j| if iset.defender_alive[j] { next_sample.velocity[j] } else { geom::ZERO })
                .collect(),
        };
        let frozen: Vec<bool> = iset.attacker_alive.iter().map(|a| !a).collect();
        let (next, next_cache) =
            dynamics::verlet_step_frozen(&state, &cache, &iset.as_weights(), &defenders, cfg, &frozen)?;
        state = next;
        cache = next_cache;

        rec.q0_series.push(q.q_hvu);
        rec.attackers_alive.push(iset.alive_attackers());
        rec.defenders_alive.push(iset.alive_defenders());
        rec.hvu_alive.push(iset.hvu_alive);
        if keep_states {
            states.push(state.clone());
        }
    }
    rec.hvu_survived = iset.hvu_alive;
    rec.final_attackers_alive = iset.alive_attackers();
    rec.final_defenders_alive = iset.alive_defenders();
    Ok((rec, states))
}

/// Per-step ensemble statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCStats {
    pub n_runs: usize,
    pub base_seed: u64,
    pub times: Vec<f64>,
    pub hvu_survival: Vec<f64>,
    pub hvu_halfwidth: Vec<f64>,
    pub attacker_alive: Vec<f64>,
    pub attacker_halfwidth: Vec<f64>,
    pub defender_alive: Vec<f64>,
    pub defender_halfwidth: Vec<f64>,
}

/// Final-time summary of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCSummary {
    pub n_runs: usize,
    pub base_seed: u64,
    pub hvu_survival: f64,
    pub hvu_halfwidth: f64,
    pub attacker_alive: f64,
    pub attacker_halfwidth: f64,
    pub defender_alive: f64,
    pub defender_halfwidth: f64,
}

impl MCStats {
    pub fn final_hvu_survival(&self) -> f64 {
        *self.hvu_survival.last().unwrap_or(&1.0)
    }

    pub fn summary(&self) -> MCSummary {
        let last = |v: &[f64]| *v.last().unwrap_or(&0.0);
        MCSummary {
            n_runs: self.n_runs,
            base_seed: self.base_seed,
            hvu_survival: last(&self.hvu_survival),
            hvu_halfwidth: last(&self.hvu_halfwidth),
            attacker_alive: last(&self.attacker_alive),
            attacker_halfwidth: last(&self.attacker_halfwidth),
            defender_alive: last(&self.defender_alive),
            defender_halfwidth: last(&self.defender_halfwidth),
        }
    }

    /// Columns: `t, hvu_survival, hvu_halfwidth, attacker_alive,
    /// attacker_halfwidth, defender_alive, defender_halfwidth`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "t",
            "hvu_survival",
            "hvu_halfwidth",
            "attacker_alive",
            "attacker_halfwidth",
            "defender_alive",
            "defender_halfwidth",
        ])?;
        for k in 0..self.times.len() {
            w.write_record([
                self.times[k].to_string(),
                self.hvu_survival[k].to_string(),
                self.hvu_halfwidth[k].to_string(),
                self.attacker_alive[k].to_string(),
                self.attacker_halfwidth[k].to_string(),
                self.defender_alive[k].to_string(),
                self.defender_halfwidth[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reduces run records into per-step statistics. Counts are summed as
/// integers, so the result does not depend on record order.
pub fn aggregate(cfg: &ScenarioConfig, base_seed: u64, records: &[MCRunRecord]) -> MCStats {
    let steps = cfg.n_steps + 1;
    let runs = records.len().max(1) as f64;
    let (n, m) = (cfg.n_attackers as f64, cfg.n_defenders as f64);
    let mut hvu = vec![0u64; steps];
    let mut att = vec![0u64; steps];
    let mut att_sq = vec![0u64; steps];
    let mut def = vec![0u64; steps];
    let mut def_sq = vec![0u64; steps];
    for r in records {
        for k in 0..steps {
            hvu[k] += u64::from(r.hvu_alive[k]);
            let a = r.attackers_alive[k] as u64;
            let d = r.defenders_alive[k] as u64;
            att[k] += a;
            att_sq[k] += a * a;
            def[k] += d;
            def_sq[k] += d * d;
        }
    }
    let binomial_hw = |p: f64| Z95 * (p * (1.0 - p) / runs).sqrt();
    // Interval for the mean of per-run alive fractions.
    let mean_hw = |sum: u64, sum_sq: u64, scale: f64| {
        let mean = sum as f64 / runs / scale;
        let second = sum_sq as f64 / runs / (scale * scale);
        let var = (second - mean * mean).max(0.0);
        (mean, Z95 * (var / runs).sqrt())
    };
    let mut stats = MCStats {
        n_runs: records.len(),
        base_seed,
        times: cfg.time_grid(),
        hvu_survival: Vec::with_capacity(steps),
        hvu_halfwidth: Vec::with_capacity(steps),
        attacker_alive: Vec::with_capacity(steps),
        attacker_halfwidth: Vec::with_capacity(steps),
        defender_alive: Vec::with_capacity(steps),
        defender_halfwidth: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let p = hvu[k] as f64 / runs;
        stats.hvu_survival.push(p);
        stats.hvu_halfwidth.push(binomial_hw(p));
        let (a, ahw) = mean_hw(att[k], att_sq[k], n);
        stats.attacker_alive.push(a);
        stats.attacker_halfwidth.push(ahw);
        let (d, dhw) = mean_hw(def[k], def_sq[k], m);
        stats.defender_alive.push(d);
        stats.defender_halfwidth.push(dhw);
    }
    stats
}

/// Runs `n_runs` replicas with seeds `base_seed + index` and aggregates them.
pub fn mc_ensemble(cfg: &ScenarioConfig, cp: &ControlPoints, n_runs: usize, base_seed: u64) -> Result<MCStats> {
    let records = mc_records(cfg, cp, n_runs, base_seed)?;
    Ok(aggregate(cfg, base_seed, &records))
}

/// Replica records in seed order.
pub fn mc_records(cfg: &ScenarioConfig, cp: &ControlPoints, n_runs: usize, base_seed: u64) -> Result<Vec<MCRunRecord>> {
    (0..n_runs as u64).into_par_iter().map(|i| mc_run(cfg, cp, base_seed.wrapping_add(i))).collect()
}
