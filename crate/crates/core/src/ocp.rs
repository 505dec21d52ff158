//! Forward propagation of a full engagement under one deterministic model.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attrition::{self, IndexSet, SurvivalVector};
use crate::bernstein::{ControlPoints, DefenderSample, Trajectories};
use crate::dynamics::{self, DefenderKinematics, EffectivenessWeights, SwarmState};
use crate::error::{Error, Result};
use crate::geom;
use crate::scenario::ScenarioConfig;

/// Which deterministic approximation couples attrition into the dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Forces ignore attrition; fire is weighted by survival probability.
    P1,
    /// Forces and fire weighted by survival probability.
    P2,
    /// Agents at or below the survival threshold stop interacting entirely.
    P3,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::P1, ModelKind::P2, ModelKind::P3];

    fn survival_weights(self, q: &SurvivalVector, iset: &IndexSet) -> EffectivenessWeights {
        match self {
            ModelKind::P1 | ModelKind::P2 => q.as_weights(),
            ModelKind::P3 => iset.as_weights(),
        }
    }

    fn dynamics_weights(self, q: &SurvivalVector, iset: &IndexSet) -> EffectivenessWeights {
        match self {
            ModelKind::P1 => EffectivenessWeights::ones(q.q_attackers.len(), q.q_defenders.len()),
            ModelKind::P2 => q.as_weights(),
            ModelKind::P3 => iset.as_weights(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::P1 => "p1",
            ModelKind::P2 => "p2",
            ModelKind::P3 => "p3",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(ModelKind::P1),
            "p2" => Ok(ModelKind::P2),
            "p3" => Ok(ModelKind::P3),
            other => Err(Error::Config(format!("unknown model `{other}` (expected p1, p2 or p3)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Largest `|u| - u_max` over defenders, grid times and components (0 when feasible).
    pub control_violation: f64,
    /// Largest `d_min - |s_j - s_l|` over defender pairs and grid times (0 when feasible).
    pub separation_violation: f64,
    /// Smallest pairwise defender distance seen on the grid (infinite for one defender).
    pub min_separation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngagementResult {
    pub model: ModelKind,
    /// `1 - Q0(t_f)`.
    pub cost: f64,
    pub times: Vec<f64>,
    pub q_series: Vec<SurvivalVector>,
    pub state_series: Vec<SwarmState>,
    pub iset_series: Vec<IndexSet>,
    pub constraint_report: ConstraintReport,
}

impl EngagementResult {
    pub fn final_q_hvu(&self) -> f64 {
        self.q_series.last().map_or(1.0, |q| q.q_hvu)
    }
}

pub(crate) fn check_compatible(cfg: &ScenarioConfig, cp: &ControlPoints) -> Result<()> {
    cp.validate()?;
    if cp.n_defenders() != cfg.n_defenders {
        return Err(Error::Validation(format!(
            "control points describe {} defenders, scenario has {}",
            cp.n_defenders(),
            cfg.n_defenders
        )));
    }
    let tf = cfg.horizon();
    if (cp.horizon - tf).abs() > 1e-9 * tf.max(1.0) {
        return Err(Error::Validation(format!("control point horizon {} != scenario horizon {tf}", cp.horizon)));
    }
    Ok(())
}

/// Defender samples at every grid time of the scenario.
pub(crate) fn sample_grid(cfg: &ScenarioConfig, cp: &ControlPoints) -> Result<Vec<DefenderSample>> {
    check_compatible(cfg, cp)?;
    let traj = Trajectories::new(cp)?;
    // The grid's last time equals the scenario horizon, which may differ from
    // the control points' horizon by rounding; clamp into range.
    let times: Vec<f64> = cfg.time_grid().into_iter().map(|t| t.min(traj.horizon())).collect();
    traj.sample(&times)
}

pub(crate) fn kinematics(sample: &DefenderSample) -> DefenderKinematics {
    DefenderKinematics { positions: sample.position.clone(), velocities: sample.velocity.clone() }
}

fn residuals_from_samples(cfg: &ScenarioConfig, samples: &[DefenderSample]) -> ConstraintReport {
    let mut control_violation: f64 = 0.0;
    let mut min_separation = f64::INFINITY;
    for s in samples {
        for u in &s.control {
            for c in u {
                control_violation = control_violation.max(c.abs() - cfg.u_max);
            }
        }
        for j in 0..s.position.len() {
            for l in (j + 1)..s.position.len() {
                min_separation = min_separation.min(geom::norm(geom::sub(s.position[j], s.position[l])));
            }
        }
    }
    ConstraintReport {
        control_violation: control_violation.max(0.0),
        separation_violation: (cfg.d_min - min_separation).max(0.0),
        min_separation,
    }
}

/// Control-bound and separation violations of `cp` on the scenario grid.
pub fn constraint_residuals(cfg: &ScenarioConfig, cp: &ControlPoints) -> Result<(f64, f64)> {
    let r = constraint_report(cfg, cp)?;
    Ok((r.control_violation, r.separation_violation))
}

pub fn constraint_report(cfg: &ScenarioConfig, cp: &ControlPoints) -> Result<ConstraintReport> {
    Ok(residuals_from_samples(cfg, &sample_grid(cfg, cp)?))
}

struct Log {
    q: Vec<SurvivalVector>,
    states: Vec<SwarmState>,
    isets: Vec<IndexSet>,
}

fn run(
    model: ModelKind,
    cfg: &ScenarioConfig,
    samples: &[DefenderSample],
    mut log: Option<&mut Log>,
) -> Result<SurvivalVector> {
    let (n, m) = (cfg.n_attackers, cfg.n_defenders);
    let mut state = SwarmState::initial(cfg, &kinematics(&samples[0]));
    let mut q = SurvivalVector::ones(n, m);
    let mut iset = IndexSet::all_alive(n, m);
    let mut cache = dynamics::initial_cache(&state, &model.dynamics_weights(&q, &iset), cfg);
    if let Some(log) = log.as_deref_mut() {
        log.q.push(q.clone());
        log.states.push(state.clone());
        log.isets.push(iset.clone());
    }
    for k in 0..cfg.n_steps {
        let rates = attrition::damage_rates(&state, cfg);
        let q_next = attrition::survival_step(&q, &rates, &model.survival_weights(&q, &iset), cfg.dt)?;
        if model == ModelKind::P3 {
            iset = attrition::threshold_update(&iset, &q_next, cfg.survival_threshold);
        }
        q = q_next;
        let weights = model.dynamics_weights(&q, &iset);
        let (next, next_cache) = dynamics::verlet_step(&state, &cache, &weights, &kinematics(&samples[k + 1]), cfg)?;
        state = next;
        cache = next_cache;
        if let Some(log) = log.as_deref_mut() {
            log.q.push(q.clone());
            log.states.push(state.clone());
            log.isets.push(iset.clone());
        }
    }
    Ok(q)
}

/// Propagates the engagement for the given defender control points and
/// logs every step.
pub fn propagate(model: ModelKind, cfg: &ScenarioConfig, cp: &ControlPoints) -> Result<EngagementResult> {
    let samples = sample_grid(cfg, cp)?;
    let mut log = Log {
        q: Vec::with_capacity(cfg.n_steps + 1),
        states: Vec::with_capacity(cfg.n_steps + 1),
        isets: Vec::with_capacity(cfg.n_steps + 1),
    };
    let q = run(model, cfg, &samples, Some(&mut log))?;
    Ok(EngagementResult {
        model,
        cost: 1.0 - q.q_hvu,
        times: cfg.time_grid(),
        q_series: log.q,
        state_series: log.states,
        iset_series: log.isets,
        constraint_report: residuals_from_samples(cfg, &samples),
    })
}

/// Cost and constraint report without the per-step log.
pub fn evaluate(model: ModelKind, cfg: &ScenarioConfig, cp: &ControlPoints) -> Result<(f64, ConstraintReport)> {
    let samples = sample_grid(cfg, cp)?;
    let q = run(model, cfg, &samples, None)?;
    Ok((1.0 - q.q_hvu, residuals_from_samples(cfg, &samples)))
}

/// Writes one row per time step: `t, q0, mean_att_q, mean_def_q,
/// alive_attackers, alive_defenders`, followed by per-agent positions
/// (`ax{i}, ay{i}, az{i}, ..., dx{k}, dy{k}, dz{k}`) when `positions` is set.
pub fn write_csv<W: Write>(result: &EngagementResult, sink: W, positions: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header: Vec<String> =
        ["t", "q0", "mean_att_q", "mean_def_q", "alive_attackers", "alive_defenders"].map(String::from).to_vec();
    if positions {
        if let Some(s) = result.state_series.first() {
            for i in 0..s.n_attackers() {
                header.extend([format!("ax{i}"), format!("ay{i}"), format!("az{i}")]);
            }
            for k in 0..s.n_defenders() {
                header.extend([format!("dx{k}"), format!("dy{k}"), format!("dz{k}")]);
            }
        }
    }
    w.write_record(&header)?;
    for (k, t) in result.times.iter().enumerate() {
        let q = &result.q_series[k];
        let iset = &result.iset_series[k];
        let mut row = vec![
            t.to_string(),
            q.q_hvu.to_string(),
            q.mean_attacker().to_string(),
            q.mean_defender().to_string(),
            iset.alive_attackers().to_string(),
            iset.alive_defenders().to_string(),
        ];
        if positions {
            let s = &result.state_series[k];
            for p in s.attacker_pos.iter().chain(&s.defender_pos) {
                row.extend(p.iter().map(|c| c.to_string()));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
