//! Defender trajectory optimization over Bernstein control points.
//!
//! The objective is the engagement cost `1 - Q0(t_f)` plus a quadratic
//! exterior penalty on control-bound and separation violations, minimized
//! over a sequence of increasing penalty weights. The first control point of
//! each defender is pinned to its initial position; all other points are
//! searched in coordinates scaled by the scenario's spatial extent.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::ControlPoints;
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::ocp::{self, ModelKind};
use crate::scenario::ScenarioConfig;

/// Violations below this (in scenario units) count as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Central finite differences with a backtracking line search.
    FiniteDifference,
    /// Simultaneous-perturbation stochastic approximation.
    SimultaneousPerturbation,
    /// Coordinate pattern search (no gradients).
    DerivativeFreePattern,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite-difference" | "fd" => Ok(Self::FiniteDifference),
            "simultaneous-perturbation" | "spsa" => Ok(Self::SimultaneousPerturbation),
            "derivative-free-pattern" | "pattern" => Ok(Self::DerivativeFreePattern),
            other => Err(Error::Config(format!("unknown gradient mode `{other}`"))),
        }
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FiniteDifference => "finite-difference",
            Self::SimultaneousPerturbation => "simultaneous-perturbation",
            Self::DerivativeFreePattern => "derivative-free-pattern",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    /// Iteration budget shared by all penalty stages.
    pub max_iterations: usize,
    pub gradient_mode: GradientMode,
    /// Relative finite-difference step in scaled coordinates.
    pub fd_step: f64,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub penalty_max: f64,
    /// A stage ends once an accepted step improves the objective by less than this.
    pub convergence_tol: f64,
    /// First trial move length in scaled coordinates (all modes).
    pub initial_step: f64,
    /// Longest move allowed in one iteration, scaled coordinates.
    pub max_step: f64,
    /// Pattern-search mesh size below which a stage ends.
    pub min_step: f64,
    pub step_seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_mode: GradientMode::FiniteDifference,
            fd_step: 1e-4,
            penalty_initial: 10.0,
            penalty_growth: 10.0,
            penalty_max: 1e6,
            convergence_tol: 1e-7,
            initial_step: 0.05,
            max_step: 0.25,
            min_step: 1e-3,
            step_seed: 0,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty_initial > 0.0) {
            return Err(Error::Config("penalty_initial must be > 0".into()));
        }
        if !(self.penalty_growth > 1.0) {
            return Err(Error::Config("penalty_growth must be > 1".into()));
        }
        if !(self.penalty_max >= self.penalty_initial) {
            return Err(Error::Config("penalty_max must be >= penalty_initial".into()));
        }
        for (name, v) in [
            ("fd_step", self.fd_step),
            ("convergence_tol", self.convergence_tol),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
            ("min_step", self.min_step),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a positive number")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Every control point at the defender's initial position.
    Hold,
    /// Straight line to a point on a sphere of radius `s0` about the HVU,
    /// facing the attacker centroid.
    RadialPicket,
    /// Straight line translating the defender formation onto the attacker centroid.
    LineToThreat,
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hold" => Ok(Self::Hold),
            "radial-picket" => Ok(Self::RadialPicket),
            "line-to-threat" => Ok(Self::LineToThreat),
            other => Err(Error::Config(format!("unknown initialization strategy `{other}`"))),
        }
    }
}

fn straight_line(from: Vec3, to: Vec3, order: usize) -> Vec<Vec3> {
    (0..=order)
        .map(|j| if j == 0 { from } else { geom::add(from, geom::scale(geom::sub(to, from), j as f64 / order as f64)) })
        .collect()
}

/// Initial guess for the control points.
pub fn initialize_control_points(cfg: &ScenarioConfig, strategy: InitStrategy) -> ControlPoints {
    let order = cfg.bernstein_order;
    let starts = cfg.defender_positions();
    let threat = geom::centroid(&cfg.attacker_positions());
    let points = match strategy {
        InitStrategy::Hold => starts.iter().map(|p| vec![*p; order + 1]).collect(),
        InitStrategy::RadialPicket => {
            let h = cfg.hvu_position;
            let to_threat = geom::sub(threat, h);
            let dist = geom::norm(to_threat);
            let axis = if dist > 0.0 { geom::scale(to_threat, 1.0 / dist) } else { [1.0, 0.0, 0.0] };
            let (e1, e2) = geom::orthonormal_complement(axis);
            let m = starts.len();
            // Spread pickets on a cone about the threat axis.
            let tilt = if m == 1 { 0.0 } else { std::f64::consts::FRAC_PI_4 };
            starts
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let az = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                    let side = geom::add(geom::scale(e1, az.cos()), geom::scale(e2, az.sin()));
                    let dir = geom::add(geom::scale(axis, tilt.cos()), geom::scale(side, tilt.sin()));
                    straight_line(*p, geom::add(h, geom::scale(dir, cfg.s0)), order)
                })
                .collect()
        }
        InitStrategy::LineToThreat => {
            let shift = geom::sub(threat, geom::centroid(&starts));
            starts.iter().map(|p| straight_line(*p, geom::add(*p, shift), order)).collect()
        }
    };
    ControlPoints { order, horizon: cfg.horizon(), points }
}

/// Engagement cost plus `mu * (control_violation^2 + separation_violation^2)`.
pub fn penalized_objective(model: ModelKind, cfg: &ScenarioConfig, cp: &ControlPoints, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!("penalty weight must be >= 0, got {mu}")));
    }
    let (cost, rep) = ocp::evaluate(model, cfg, cp)?;
    Ok(penalize(cost, rep.control_violation, rep.separation_violation, mu))
}

fn penalize(cost: f64, cv: f64, sv: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        cost
    } else {
        cost + mu * (cv * cv + sv * sv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub stage: usize,
    pub mu: f64,
    pub penalized: f64,
    pub cost: f64,
    pub control_violation: f64,
    pub separation_violation: f64,
    pub step_norm: f64,
    /// Propagations performed so far.
    pub evaluations: usize,
}

impl IterateRecord {
    fn violation(&self) -> f64 {
        self.control_violation.max(self.separation_violation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    IterationLimit,
    PenaltyLimit,
    /// No feasible iterate was found; `best_cp` is the least infeasible one.
    FailedFeasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub iterates: Vec<IterateRecord>,
    pub best_cp: ControlPoints,
    pub best_index: usize,
    pub evaluations: usize,
    pub outcome: Outcome,
}

impl OptimizationTrace {
    pub fn best(&self) -> &IterateRecord {
        &self.iterates[self.best_index]
    }

    pub fn feasible(&self) -> bool {
        self.best().violation() < FEASIBILITY_TOL
    }
}

/// Iterate scalars only, for JSON export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterates: Vec<IterateRecord>,
    pub best_index: usize,
    pub best_cost: f64,
    pub feasible: bool,
    pub evaluations: usize,
    pub outcome: Outcome,
}

impl From<&OptimizationTrace> for TraceSummary {
    fn from(t: &OptimizationTrace) -> Self {
        Self {
            iterates: t.iterates.clone(),
            best_index: t.best_index,
            best_cost: t.best().cost,
            feasible: t.feasible(),
            evaluations: t.evaluations,
            outcome: t.outcome,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    cost: f64,
    cv: f64,
    sv: f64,
}

impl Eval {
    fn penalized(&self, mu: f64) -> f64 {
        penalize(self.cost, self.cv, self.sv, mu)
    }

    const FAILED: Eval = Eval { cost: f64::INFINITY, cv: f64::INFINITY, sv: f64::INFINITY };
}

/// Maps scaled decision vectors to control points.
struct Problem<'a> {
    model: ModelKind,
    cfg: &'a ScenarioConfig,
    template: ControlPoints,
    scale: f64,
}

impl Problem<'_> {
    fn encode(&self, cp: &ControlPoints) -> Vec<f64> {
        cp.points.iter().flat_map(|poly| poly.iter().skip(1).flat_map(|p| p.iter().map(|c| c / self.scale))).collect()
    }

    fn decode(&self, z: &[f64]) -> ControlPoints {
        let mut cp = self.template.clone();
        let mut it = z.iter();
        for poly in cp.points.iter_mut() {
            for p in poly.iter_mut().skip(1) {
                for c in p.iter_mut() {
                    *c = it.next().copied().unwrap_or(0.0) * self.scale;
                }
            }
        }
        cp
    }

    fn eval(&self, z: &[f64]) -> Result<Eval> {
        let (cost, rep) = ocp::evaluate(self.model, self.cfg, &self.decode(z))?;
        Ok(Eval { cost, cv: rep.control_violation, sv: rep.separation_violation })
    }

    /// Failed trial evaluations are treated as infinitely bad.
    fn eval_many(&self, points: &[Vec<f64>]) -> Vec<Eval> {
        points.par_iter().map(|z| self.eval(z).unwrap_or(Eval::FAILED)).collect()
    }
}

struct Search<'a> {
    problem: Problem<'a>,
    opts: &'a OptimizerOptions,
    iterates: Vec<IterateRecord>,
    best_points: Vec<Vec<f64>>,
    evaluations: usize,
    iterations: usize,
    rng: ChaCha8Rng,
}

impl Search<'_> {
    fn record(&mut self, stage: usize, mu: f64, z: &[f64], e: Eval, step_norm: f64) {
        self.iterates.push(IterateRecord {
            stage,
            mu,
            penalized: e.penalized(mu),
            cost: e.cost,
            control_violation: e.cv,
            separation_violation: e.sv,
            step_norm,
            evaluations: self.evaluations,
        });
        self.best_points.push(z.to_vec());
    }

    fn budget_left(&self) -> bool {
        self.iterations < self.opts.max_iterations
    }

    fn eval_many(&mut self, points: &[Vec<f64>]) -> Vec<Eval> {
        self.evaluations += points.len();
        self.problem.eval_many(points)
    }

    /// Runs one penalty stage from `z`; returns the final point and evaluation.
    fn stage(&mut self, stage: usize, mu: f64, mut z: Vec<f64>, mut e: Eval) -> (Vec<f64>, Eval) {
        self.record(stage, mu, &z, e, 0.0);
        match self.opts.gradient_mode {
            GradientMode::FiniteDifference => self.fd_stage(stage, mu, &mut z, &mut e),
            GradientMode::SimultaneousPerturbation => self.spsa_stage(stage, mu, &mut z, &mut e),
            GradientMode::DerivativeFreePattern => self.pattern_stage(stage, mu, &mut z, &mut e),
        }
        (z, e)
    }

    fn fd_stage(&mut self, stage: usize, mu: f64, z: &mut Vec<f64>, e: &mut Eval) {
        let n = z.len();
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        while self.budget_left() {
            self.iterations += 1;
            let f0 = e.penalized(mu);
            let steps: Vec<f64> = z.iter().map(|c| self.opts.fd_step * c.abs().max(1.0)).collect();
            let mut probes = Vec::with_capacity(2 * n);
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut p = z.clone();
                    p[i] += sign * steps[i];
                    probes.push(p);
                }
            }
            let vals = self.eval_many(&probes);
            let grad: Vec<f64> = (0..n)
                .map(|i| {
                    let (fp, fm) = (vals[2 * i].penalized(mu), vals[2 * i + 1].penalized(mu));
                    if fp.is_finite() && fm.is_finite() {
                        (fp - fm) / (2.0 * steps[i])
                    } else {
                        0.0
                    }
                })
                .collect();
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm == 0.0 {
                break;
            }
            // Barzilai-Borwein trial step, falling back to a fixed move length.
            let mut alpha = self.opts.initial_step / gnorm;
            if let Some((pz, pg)) = &prev {
                let s: Vec<f64> = z.iter().zip(pz).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = grad.iter().zip(pg).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                let ss: f64 = s.iter().map(|a| a * a).sum();
                if sy > 0.0 {
                    alpha = ss / sy;
                }
            }
            alpha = alpha.min(self.opts.max_step / gnorm);
            let mut accepted = None;
            for _ in 0..30 {
                let trial: Vec<f64> = z.iter().zip(&grad).map(|(c, g)| c - alpha * g).collect();
                let te = self.eval_many(std::slice::from_ref(&trial))[0];
                if te.penalized(mu) <= f0 - 1e-4 * alpha * gnorm * gnorm && te.penalized(mu) < f0 {
                    accepted = Some((trial, te));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((trial, te)) = accepted else { break };
            let decrease = f0 - te.penalized(mu);
            prev = Some((z.clone(), grad));
            *z = trial;
            *e = te;
            self.record(stage, mu, z, te, alpha * gnorm);
            if decrease < self.opts.convergence_tol {
                break;
            }
        }
    }

    fn spsa_stage(&mut self, stage: usize, mu: f64, z: &mut Vec<f64>, e: &mut Eval) {
        let n = z.len();
        let a = self.opts.initial_step;
        let c = self.opts.initial_step * 0.5;
        let stability = 10.0;
        let mut stall = 0;
        let mut k = 0usize;
        while self.budget_left() && stall < 25 {
            self.iterations += 1;
            let ck = c / ((k + 1) as f64).powf(0.101);
            let ak = a / ((k + 1) as f64 + stability).powf(0.602);
            k += 1;
            let delta: Vec<f64> = (0..n).map(|_| if self.rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
            let plus: Vec<f64> = z.iter().zip(&delta).map(|(x, d)| x + ck * d).collect();
            let minus: Vec<f64> = z.iter().zip(&delta).map(|(x, d)| x - ck * d).collect();
            let vals = self.eval_many(&[plus, minus]);
            let (fp, fm) = (vals[0].penalized(mu), vals[1].penalized(mu));
            if !(fp.is_finite() && fm.is_finite()) || fp == fm {
                stall += 1;
                continue;
            }
            let slope = (fp - fm) / (2.0 * ck);
            // g_i = slope / delta_i = slope * delta_i for +-1 perturbations
            let gnorm = slope.abs() * (n as f64).sqrt();
            let scale = (ak * gnorm).min(self.opts.max_step) / gnorm;
            let trial: Vec<f64> = z.iter().zip(&delta).map(|(x, d)| x - scale * slope * d).collect();
            let te = self.eval_many(std::slice::from_ref(&trial))[0];
            let f0 = e.penalized(mu);
            if te.penalized(mu) < f0 {
                let decrease = f0 - te.penalized(mu);
                *z = trial;
                *e = te;
                self.record(stage, mu, z, te, scale * gnorm);
                stall = if decrease < self.opts.convergence_tol { stall + 1 } else { 0 };
            } else {
                stall += 1;
            }
        }
    }

    fn pattern_stage(&mut self, stage: usize, mu: f64, z: &mut Vec<f64>, e: &mut Eval) {
        let n = z.len();
        let mut delta = self.opts.initial_step;
        while self.budget_left() && delta >= self.opts.min_step {
            self.iterations += 1;
            let mut polls = Vec::with_capacity(2 * n);
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut p = z.clone();
                    p[i] += sign * delta;
                    polls.push(p);
                }
            }
            let vals = self.eval_many(&polls);
            let f0 = e.penalized(mu);
            let mut best: Option<usize> = None;
            for (idx, v) in vals.iter().enumerate() {
                let f = v.penalized(mu);
                if f < best.map_or(f0, |b| vals[b].penalized(mu)) {
                    best = Some(idx);
                }
            }
            match best {
                Some(idx) => {
                    let decrease = f0 - vals[idx].penalized(mu);
                    *z = polls.swap_remove(idx);
                    *e = vals[idx];
                    self.record(stage, mu, z, *e, delta);
                    if decrease < self.opts.convergence_tol {
                        delta *= 0.5;
                    } else {
                        delta = (delta * 2.0).min(self.opts.max_step);
                    }
                }
                None => delta *= 0.5,
            }
        }
    }
}

/// Minimizes the penalized engagement cost starting from `init_cp`.
pub fn optimize(
    model: ModelKind,
    cfg: &ScenarioConfig,
    init_cp: &ControlPoints,
    opts: &OptimizerOptions,
) -> Result<OptimizationTrace> {
    opts.validate()?;
    ocp::check_compatible(cfg, init_cp)?;
    let mut template = init_cp.clone();
    for (poly, d) in template.points.iter_mut().zip(&cfg.initial_defenders) {
        poly[0] = d.position;
    }
    let problem = Problem { model, cfg, template, scale: cfg.spatial_extent().max(1.0) };
    let z0 = problem.encode(init_cp);
    let e0 = problem.eval(&z0)?;
    let mut search = Search {
        problem,
        opts,
        iterates: Vec::new(),
        best_points: Vec::new(),
        evaluations: 1,
        iterations: 0,
        rng: ChaCha8Rng::seed_from_u64(opts.step_seed),
    };

    let mut mu = opts.penalty_initial;
    let mut z = z0;
    let mut e = e0;
    let mut stage = 0;
    let outcome = loop {
        let (nz, ne) = search.stage(stage, mu, z, e);
        z = nz;
        e = ne;
        if e.cv.max(e.sv) < FEASIBILITY_TOL {
            break if search.budget_left() { Outcome::Converged } else { Outcome::IterationLimit };
        }
        if !search.budget_left() {
            break Outcome::IterationLimit;
        }
        if mu * opts.penalty_growth > opts.penalty_max {
            break Outcome::PenaltyLimit;
        }
        mu *= opts.penalty_growth;
        stage += 1;
    };

    let feasible_best = search.iterates.iter().enumerate().filter(|(_, r)| r.violation() < FEASIBILITY_TOL).fold(
        None::<(usize, f64)>,
        |acc, (i, r)| match acc {
            Some((_, c)) if c <= r.cost => acc,
            _ => Some((i, r.cost)),
        },
    );
    let (best_index, outcome) = match feasible_best {
        Some((i, _)) => (i, outcome),
        None => {
            let least = search.iterates.iter().enumerate().fold((0usize, f64::INFINITY), |acc, (i, r)| {
                if r.violation() < acc.1 {
                    (i, r.violation())
                } else {
                    acc
                }
            });
            (least.0, Outcome::FailedFeasibility)
        }
    };
    let best_cp = search.problem.decode(&search.best_points[best_index]);
    Ok(OptimizationTrace { iterates: search.iterates, best_cp, best_index, evaluations: search.evaluations, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{fixtures, AgentInit};

    fn quick(mode: GradientMode) -> OptimizerOptions {
        OptimizerOptions { max_iterations: 15, gradient_mode: mode, ..Default::default() }
    }

    #[test]
    fn hold_is_static() {
        let cfg = fixtures::small(3, 2);
        let cp = initialize_control_points(&cfg, InitStrategy::Hold);
        for k in 0..=cfg.n_steps {
            let s = crate::bernstein::eval_state(&cp, cfg.time_at(k)).unwrap();
            for m in 0..2 {
                assert!(geom::norm(s.velocity[m]) < 1e-12);
                assert!(geom::norm(s.control[m]) < 1e-12);
            }
        }
        assert_eq!(ocp::constraint_residuals(&cfg, &cp).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn single_radial_picket_sits_at_s0() {
        let cfg = fixtures::small(3, 1);
        let cp = initialize_control_points(&cfg, InitStrategy::RadialPicket);
        let end = *cp.points[0].last().unwrap();
        assert!((geom::norm(geom::sub(end, cfg.hvu_position)) - cfg.s0).abs() < 1e-12);
        // it faces the threat
        let threat = geom::centroid(&cfg.attacker_positions());
        assert!(geom::dot(geom::sub(end, cfg.hvu_position), geom::sub(threat, cfg.hvu_position)) > 0.0);
        assert_eq!(cp.points[0][0], cfg.initial_defenders[0].position);
    }

    #[test]
    fn line_to_threat_approaches_monotonically() {
        let cfg = fixtures::small(4, 2);
        let cp = initialize_control_points(&cfg, InitStrategy::LineToThreat);
        let threat = geom::centroid(&cfg.attacker_positions());
        let dist_to_threat = |t: f64| {
            let s = crate::bernstein::eval_state(&cp, t).unwrap();
            geom::norm(geom::sub(geom::centroid(&s.position), threat))
        };
        let mut prev = dist_to_threat(0.0);
        for k in 1..=cfg.n_steps {
            let d = dist_to_threat(cfg.time_at(k));
            assert!(d <= prev + 1e-12);
            prev = d;
        }
        assert!(prev < 1e-9);
        for m in 0..2 {
            assert_eq!(cp.points[m][0], cfg.initial_defenders[m].position);
        }
    }

    #[test]
    fn strategy_names() {
        assert_eq!("radial-picket".parse::<InitStrategy>().unwrap(), InitStrategy::RadialPicket);
        assert!("zigzag".parse::<InitStrategy>().is_err());
        assert_eq!("pattern".parse::<GradientMode>().unwrap(), GradientMode::DerivativeFreePattern);
    }

    #[test]
    fn penalty_composition() {
        let cfg = fixtures::small(2, 2);
        let hold = initialize_control_points(&cfg, InitStrategy::Hold);
        let raw = ocp::evaluate(ModelKind::P2, &cfg, &hold).unwrap().0;
        assert_eq!(penalized_objective(ModelKind::P2, &cfg, &hold, 100.0).unwrap(), raw);

        let mut bad = hold.clone();
        let mut cfg2 = cfg.clone();
        cfg2.initial_defenders[1] = cfg2.initial_defenders[0];
        bad.points[1] = bad.points[0].clone();
        let raw_bad = ocp::evaluate(ModelKind::P2, &cfg2, &bad).unwrap().0;
        assert_eq!(penalized_objective(ModelKind::P2, &cfg2, &bad, 0.0).unwrap(), raw_bad);
        let (_, sv) = ocp::constraint_residuals(&cfg2, &bad).unwrap();
        let pen = penalized_objective(ModelKind::P2, &cfg2, &bad, 10.0).unwrap();
        assert!((pen - (raw_bad + 10.0 * sv * sv)).abs() < 1e-12);
        assert!(penalized_objective(ModelKind::P2, &cfg2, &bad, -1.0).is_err());
    }

    #[test]
    fn invulnerable_hvu_stops_at_init() {
        let mut cfg = fixtures::small(3, 2);
        cfg.lambda_a = 0.0;
        let init = initialize_control_points(&cfg, InitStrategy::Hold);
        for mode in [GradientMode::FiniteDifference, GradientMode::DerivativeFreePattern] {
            let trace = optimize(ModelKind::P1, &cfg, &init, &quick(mode)).unwrap();
            assert_eq!(trace.best().cost, 0.0);
            assert_eq!(trace.best_index, 0);
        }
    }

    #[test]
    fn options_are_validated() {
        let cfg = fixtures::small(1, 1);
        let init = initialize_control_points(&cfg, InitStrategy::Hold);
        let bad = OptimizerOptions { penalty_growth: 1.0, ..Default::default() };
        assert!(matches!(optimize(ModelKind::P1, &cfg, &init, &bad), Err(Error::Config(_))));
    }

    fn duel() -> ScenarioConfig {
        let mut cfg = fixtures::small(1, 1);
        cfg.initial_attackers = vec![AgentInit::at_rest([20.0, 0.0, 0.0])];
        cfg.initial_defenders = vec![AgentInit::at_rest([0.0, 6.0, 0.0])];
        cfg.lambda_a = 1.0;
        cfg.lambda_d = 1.5;
        cfg.u_max = 20.0;
        cfg
    }

    #[test]
    fn modes_improve_and_keep_invariants() {
        let cfg = duel();
        let init = initialize_control_points(&cfg, InitStrategy::Hold);
        for mode in [
            GradientMode::FiniteDifference,
            GradientMode::SimultaneousPerturbation,
            GradientMode::DerivativeFreePattern,
        ] {
            let trace = optimize(ModelKind::P2, &cfg, &init, &quick(mode)).unwrap();
            assert!(trace.best().cost <= trace.iterates[0].cost, "{mode}");
            for w in trace.iterates.windows(2) {
                if w[0].stage == w[1].stage {
                    assert!(w[1].penalized <= w[0].penalized, "{mode}");
                }
            }
            assert_eq!(trace.best_cp.points[0][0], cfg.initial_defenders[0].position);
            assert_eq!(trace, optimize(ModelKind::P2, &cfg, &init, &quick(mode)).unwrap());
        }
    }
}
