//! Bernstein-polynomial defender trajectories on `[0, t_f]`.
//!
//! A defender path is `s(t) = sum_j c_j b_{j,L}(t)` with
//! `b_{j,L}(t) = C(L,j) t^j (t_f - t)^(L-j) / t_f^L`. Derivatives stay in the
//! same degree-`L` basis through a constant differentiation matrix `D`:
//! the coefficients of `s'` are `c D`, those of `s''` are `c D^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::scenario::MAX_BERNSTEIN_ORDER;

/// Orders above this use the recursive (de Casteljau) basis evaluation.
const DIRECT_FORMULA_MAX_ORDER: usize = 15;

/// Exact binomial coefficient; valid for `n <= 62`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {horizon}]")));
    }
    Ok(())
}

fn check_order(order: usize) -> Result<()> {
    if order > MAX_BERNSTEIN_ORDER {
        return Err(Error::Config(format!("Bernstein order {order} exceeds {MAX_BERNSTEIN_ORDER}")));
    }
    Ok(())
}

/// Single basis function `b_{j,L}(t)` on `[0, t_f]`.
pub fn basis(j: usize, order: usize, t: f64, horizon: f64) -> Result<f64> {
    check_order(order)?;
    if j > order {
        return Err(Error::Domain(format!("basis index {j} exceeds order {order}")));
    }
    check_time(t, horizon)?;
    Ok(basis_all(order, t / horizon)[j])
}

/// All `L + 1` basis values at normalized time `tau = t / t_f` in `[0, 1]`.
pub fn basis_all(order: usize, tau: f64) -> Vec<f64> {
    if order <= DIRECT_FORMULA_MAX_ORDER {
        let one_minus = 1.0 - tau;
        (0..=order)
            .map(|j| binomial(order, j) as f64 * tau.powi(j as i32) * one_minus.powi((order - j) as i32))
            .collect()
    } else {
        let mut b = vec![0.0; order + 1];
        b[0] = 1.0;
        for deg in 1..=order {
            for j in (0..=deg).rev() {
                let left = if j > 0 { b[j - 1] } else { 0.0 };
                b[j] = (1.0 - tau) * b[j] + tau * left;
            }
        }
        b
    }
}

/// Differentiation matrix acting on row vectors of control coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix {
    pub order: usize,
    pub horizon: f64,
    /// `d[i][j]`: contribution of input coefficient `i` to derivative coefficient `j`.
    pub d: Vec<Vec<f64>>,
    /// `d` squared.
    pub d2: Vec<Vec<f64>>,
}

/// Builds `D` from differentiation (degree `L-1`) followed by degree
/// elevation back to `L`.
pub fn diff_matrix(order: usize, horizon: f64) -> Result<DiffMatrix> {
    if order < 2 {
        return Err(Error::Config(format!("differentiation matrix needs order >= 2, got {order}")));
    }
    check_order(order)?;
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let l = order as f64;
    let mut d = vec![vec![0.0; order + 1]; order + 1];
    for (i, row) in d.iter_mut().enumerate() {
        // derivative coefficients of the unit polygon e_i, degree L-1
        let mut a = vec![0.0; order];
        if i < order {
            a[i] -= l / horizon;
        }
        if i > 0 {
            a[i - 1] += l / horizon;
        }
        for (j, out) in row.iter_mut().enumerate() {
            let w = j as f64 / l;
            let lo = if j > 0 { w * a[j - 1] } else { 0.0 };
            let hi = if j < order { (1.0 - w) * a[j] } else { 0.0 };
            *out = lo + hi;
        }
    }
    let d2 = matmul(&d, &d);
    Ok(DiffMatrix { order, horizon, d, d2 })
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

impl DiffMatrix {
    /// Coefficients `c M` for a polygon of 3-vectors.
    fn apply(m: &[Vec<f64>], polygon: &[Vec3]) -> Vec<Vec3> {
        (0..m.len())
            .map(|j| {
                polygon.iter().enumerate().fold(geom::ZERO, |acc, (i, c)| geom::add(acc, geom::scale(*c, m[i][j])))
            })
            .collect()
    }

    pub fn derivative(&self, polygon: &[Vec3]) -> Vec<Vec3> {
        Self::apply(&self.d, polygon)
    }

    pub fn second_derivative(&self, polygon: &[Vec3]) -> Vec<Vec3> {
        Self::apply(&self.d2, polygon)
    }
}

/// Control points of all defenders: `points[m][j]` is `c_{mj}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPoints {
    pub order: usize,
    pub horizon: f64,
    pub points: Vec<Vec<Vec3>>,
}

impl ControlPoints {
    pub fn n_defenders(&self) -> usize {
        self.points.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.order)?;
        if self.order < 2 {
            return Err(Error::Validation("control points need order >= 2".into()));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Validation("control point horizon must be positive".into()));
        }
        for (m, poly) in self.points.iter().enumerate() {
            if poly.len() != self.order + 1 {
                return Err(Error::Validation(format!(
                    "defender {m} has {} control points, expected {}",
                    poly.len(),
                    self.order + 1
                )));
            }
            if poly.iter().any(|p| !geom::is_finite(*p)) {
                return Err(Error::Validation(format!("defender {m} has non-finite control points")));
            }
        }
        Ok(())
    }

    pub fn from_json<R: std::io::Read>(source: R) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_reader(source);
        let cp: ControlPoints = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
        cp.validate()?;
        Ok(cp)
    }

    pub fn to_json<W: std::io::Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, self)?;
        Ok(())
    }
}

/// Position, velocity and control (acceleration) of every defender at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenderSample {
    pub position: Vec<Vec3>,
    pub velocity: Vec<Vec3>,
    pub control: Vec<Vec3>,
}

/// Control points with their derivative polygons precomputed.
#[derive(Debug, Clone)]
pub struct Trajectories {
    order: usize,
    horizon: f64,
    pos: Vec<Vec<Vec3>>,
    vel: Vec<Vec<Vec3>>,
    acc: Vec<Vec<Vec3>>,
}

impl Trajectories {
    pub fn new(cp: &ControlPoints) -> Result<Self> {
        cp.validate()?;
        let dm = diff_matrix(cp.order, cp.horizon)?;
        Ok(Self {
            order: cp.order,
            horizon: cp.horizon,
            pos: cp.points.clone(),
            vel: cp.points.iter().map(|p| dm.derivative(p)).collect(),
            acc: cp.points.iter().map(|p| dm.second_derivative(p)).collect(),
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn at(&self, t: f64) -> Result<DefenderSample> {
        check_time(t, self.horizon)?;
        Ok(self.at_unchecked(t))
    }

    fn at_unchecked(&self, t: f64) -> DefenderSample {
        let b = basis_all(self.order, (t / self.horizon).clamp(0.0, 1.0));
        let combine =
            |poly: &Vec<Vec3>| poly.iter().zip(&b).fold(geom::ZERO, |acc, (c, w)| geom::add(acc, geom::scale(*c, *w)));
        DefenderSample {
            position: self.pos.iter().map(combine).collect(),
            velocity: self.vel.iter().map(combine).collect(),
            control: self.acc.iter().map(combine).collect(),
        }
    }

    /// Samples at each of the given times (which must lie in the horizon).
    pub fn sample(&self, times: &[f64]) -> Result<Vec<DefenderSample>> {
        times.iter().map(|&t| self.at(t)).collect()
    }
}

/// Defender position, velocity and control at time `t`.
pub fn eval_state(cp: &ControlPoints, t: f64) -> Result<DefenderSample> {
    Trajectories::new(cp)?.at(t)
}


#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::test_support::*;
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_polygon(order: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..=order)
            .map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)])
            .collect()
    }

    fn curve(poly: &[Vec3], t: f64, horizon: f64) -> Vec3 {
        let b = basis_all(poly.len() - 1, t / horizon);
        poly.iter().zip(&b).fold(geom::ZERO, |acc, (c, w)| geom::add(acc, geom::scale(*c, *w)))
    }

    #[test]
    fn binomials_are_exact() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(30, 15), 155_117_520);
        assert_eq!(binomial(5, 7), 0);
    }

    #[test]
    fn endpoint_interpolation() {
        for order in [2, 5, 8, 20] {
            assert_eq!(basis(0, order, 0.0, 3.0).unwrap(), 1.0);
            for j in 1..=order {
                assert_eq!(basis(j, order, 0.0, 3.0).unwrap(), 0.0);
            }
            assert_eq!(basis(order, order, 3.0, 3.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn midpoint_value() {
        // C(4,2) / 2^4
        assert!((basis(2, 4, 2.5, 5.0).unwrap() - 0.375).abs() < 1e-15);
    }

    #[test]
    fn basis_domain_errors() {
        assert!(basis(5, 4, 1.0, 2.0).is_err());
        assert!(basis(1, 4, -0.1, 2.0).is_err());
        assert!(basis(1, 4, 2.1, 2.0).is_err());
        assert!(basis(1, 31, 1.0, 2.0).is_err());
    }

    #[test]
    fn recursive_basis_agrees_with_direct_formula() {
        for order in [16, 22, 30] {
            for k in 0..=20 {
                let tau = k as f64 / 20.0;
                let rec = basis_all(order, tau);
                for (j, v) in rec.iter().enumerate() {
                    let direct = binomial(order, j) as f64 * tau.powi(j as i32) * (1.0 - tau).powi((order - j) as i32);
                    assert!((v - direct).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn diff_matrix_rejects_low_order() {
        assert!(matches!(diff_matrix(1, 1.0), Err(Error::Config(_))));
        assert!(diff_matrix(31, 1.0).is_err());
    }

    #[test]
    fn constant_polygon_has_zero_derivative() {
        let dm = diff_matrix(7, 4.0).unwrap();
        let poly = vec![[5.0, 5.0, 5.0]; 8];
        for c in dm.derivative(&poly) {
            for x in c {
                assert!(x.abs() < 1e-12);
            }
        }
        for j in 0..=7 {
            let col: f64 = dm.d.iter().map(|row| row[j]).sum();
            assert!(col.abs() < 1e-12);
        }
    }

    #[test]
    fn linear_ramp_has_unit_derivative() {
        let horizon = 4.0;
        for order in [2, 6, 12] {
            let dm = diff_matrix(order, horizon).unwrap();
            // s(t) = t has coefficients c_j = j t_f / L
            let poly: Vec<Vec3> = (0..=order).map(|j| [j as f64 * horizon / order as f64, 0.0, 0.0]).collect();
            for c in dm.derivative(&poly) {
                assert!((c[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let horizon = 3.0;
        let poly = random_polygon(6, 17);
        let dm = diff_matrix(6, horizon).unwrap();
        let dpoly = dm.derivative(&poly);
        let h = 1e-5;
        for k in 1..=20 {
            let t = horizon * k as f64 / 21.0;
            let fd = geom::scale(geom::sub(curve(&poly, t + h, horizon), curve(&poly, t - h, horizon)), 0.5 / h);
            let an = curve(&dpoly, t, horizon);
            for c in 0..3 {
                assert!((fd[c] - an[c]).abs() <= 1e-6 * an[c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_curve_is_at_rest() {
        let p = [1.0, -2.0, 3.0];
        let cp = ControlPoints { order: 5, horizon: 2.0, points: vec![vec![p; 6]] };
        for k in 0..=10 {
            let s = eval_state(&cp, 0.2 * k as f64).unwrap();
            for c in 0..3 {
                assert!((s.position[0][c] - p[c]).abs() < 1e-12);
                assert!(s.velocity[0][c].abs() < 1e-12);
                assert!(s.control[0][c].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn straight_line_has_constant_velocity() {
        let horizon = 5.0;
        let (a, b) = ([0.0, 0.0, 0.0], [10.0, -5.0, 2.5]);
        let poly: Vec<Vec3> = (0..=8).map(|j| geom::add(a, geom::scale(geom::sub(b, a), j as f64 / 8.0))).collect();
        let cp = ControlPoints { order: 8, horizon, points: vec![poly] };
        for k in 0..=10 {
            let s = eval_state(&cp, 0.5 * k as f64).unwrap();
            for c in 0..3 {
                assert!((s.velocity[0][c] - (b[c] - a[c]) / horizon).abs() < 1e-12);
                assert!(s.control[0][c].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn quadratic_curve_recovers_acceleration() {
        let (p, v, a) = ([1.0, 2.0, 3.0], [0.5, -1.0, 0.0], [0.3, 0.1, -0.7]);
        let horizon = 6.0;
        let cp = ControlPoints { order: 8, horizon, points: vec![quadratic(p, v, a, horizon, 8)] };
        for k in 0..=12 {
            let t = 0.5 * k as f64;
            let s = eval_state(&cp, t).unwrap();
            for c in 0..3 {
                assert!((s.control[0][c] - a[c]).abs() < 1e-10);
                assert!((s.velocity[0][c] - (v[c] + a[c] * t)).abs() < 1e-10);
                assert!((s.position[0][c] - (p[c] + v[c] * t + 0.5 * a[c] * t * t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eval_outside_horizon_fails() {
        let cp = ControlPoints { order: 3, horizon: 1.0, points: vec![vec![[0.0; 3]; 4]] };
        assert!(eval_state(&cp, 1.5).is_err());
        assert!(eval_state(&cp, -0.5).is_err());
    }

    #[test]
    fn malformed_control_points_rejected() {
        let bad = r#"{"order": 3, "horizon": 1.0, "points": [[[0,0,0],[1,1,1]]]}"#;
        assert!(matches!(ControlPoints::from_json(bad.as_bytes()), Err(Error::Validation(_))));
        let extra = r#"{"order": 2, "horizon": 1.0, "points": [], "x": 1}"#;
        assert!(matches!(ControlPoints::from_json(extra.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn derivative_consistency_by_finite_differences() {
        let horizon = 4.0;
        let cp = ControlPoints { order: 8, horizon, points: vec![random_polygon(8, 3), random_polygon(8, 4)] };
        let tr = Trajectories::new(&cp).unwrap();
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3] {
            let mut worst: f64 = 0.0;
            for k in 1..10 {
                let t = 0.4 * k as f64;
                let (lo, mid, hi) = (tr.at(t - h).unwrap(), tr.at(t).unwrap(), tr.at(t + h).unwrap());
                for m in 0..2 {
                    for c in 0..3 {
                        let fd_v = (hi.position[m][c] - lo.position[m][c]) / (2.0 * h);
                        let fd_u = (hi.velocity[m][c] - lo.velocity[m][c]) / (2.0 * h);
                        worst = worst.max((fd_v - mid.velocity[m][c]).abs());
                        worst = worst.max((fd_u - mid.control[m][c]).abs());
                    }
                }
            }
            errs.push(worst);
        }
        // second order: halving h cuts the error by about 4
        let ratio = errs[0] / errs[1];
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_non_negativity(order in 2usize..=30, t in 0.0..=7.0f64) {
            let b = basis_all(order, t / 7.0);
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(b.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn endpoints_hit_first_and_last_points(seed in 0u64..1000, order in 2usize..=12) {
            let poly = random_polygon(order, seed);
            let cp = ControlPoints { order, horizon: 2.5, points: vec![poly.clone()] };
            let tr = Trajectories::new(&cp).unwrap();
            let (s0, s1) = (tr.at(0.0).unwrap(), tr.at(2.5).unwrap());
            for c in 0..3 {
                prop_assert!((s0.position[0][c] - poly[0][c]).abs() < 1e-12);
                prop_assert!((s1.position[0][c] - poly[order][c]).abs() < 1e-12);
            }
        }

        #[test]
        fn convex_hull(seed in 0u64..1000, t in 0.0..=1.0f64, ux in -1.0..1.0f64, uy in -1.0..1.0f64, uz in -1.0..1.0f64) {
            let poly = random_polygon(8, seed);
            let u = [ux, uy, uz];
            let p = curve(&poly, t, 1.0);
            let support = poly.iter().map(|c| geom::dot(u, *c)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(geom::dot(u, p) <= support + 1e-9);
        }
    }
}
