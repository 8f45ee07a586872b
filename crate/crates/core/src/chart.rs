//! Schwarzschild exterior in the compactified chart (u, R, omega) and in (t, r*).
//!
//! The conformal factor is Omega = R = 1/r. All functions here are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass, lattice bounds and the (eps, u0) pair of the coordinate decay lemma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartParams {
    pub m: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Inner worldtube, R = R_max.
    pub r_max: f64,
    pub eps: f64,
    pub u0: f64,
}

impl Default for ChartParams {
    fn default() -> Self {
        ChartParams { m: 1.0, u_min: -260.0, u_max: -100.0, r_max: 0.01, eps: 0.1, u0: -120.0 }
    }
}

impl ChartParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.m, self.u_min, self.u_max, self.r_max, self.eps, self.u0];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("chart parameters must be finite".into()));
        }
        if self.m < 0.0 {
            return Err(Error::Config(format!("mass must be >= 0, got {}", self.m)));
        }
        if self.u_min >= self.u_max {
            return Err(Error::Config("u_min must be below u_max".into()));
        }
        if !(self.r_max > 0.0) || 2.0 * self.m * self.r_max >= 1.0 {
            return Err(Error::Config(format!(
                "need 0 < R_max and 2 m R_max < 1, got R_max = {}",
                self.r_max
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Config(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if self.u0 >= 0.0 {
            return Err(Error::Config("u0 must be negative".into()));
        }
        Ok(())
    }

    pub fn f(&self, rr: f64) -> f64 {
        1.0 - 2.0 * self.m * rr
    }
}

/// A point of the characteristic chart, optionally carrying its (t, r*) image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub u: f64,
    pub r_inv: f64,
    pub cauchy: Option<(f64, f64)>,
}

impl ChartPoint {
    pub fn new(u: f64, r_inv: f64) -> Self {
        ChartPoint { u, r_inv, cauchy: None }
    }

    /// Build from (t, r*), filling both charts.
    pub fn from_cauchy(t: f64, rstar: f64, m: f64) -> Result<Self> {
        let r = r_of_rstar(rstar, m)?;
        Ok(ChartPoint { u: t - rstar, r_inv: 1.0 / r, cauchy: Some((t, rstar)) })
    }

    /// Populate (t, r*) from (u, R).
    pub fn with_cauchy(mut self, m: f64) -> Result<Self> {
        let rs = rstar_of_rinv(self.r_inv, m)?;
        self.cauchy = Some((self.u + rs, rs));
        Ok(self)
    }

    /// Largest defect of r* = r* (R) and u = t - r* when both charts are present.
    pub fn consistency_defect(&self, m: f64) -> Result<f64> {
        match self.cauchy {
            None => Ok(0.0),
            Some((t, rs)) => {
                let rs_from_r = rstar_of_rinv(self.r_inv, m)?;
                let scale = 1.0 + rs.abs();
                Ok(((rs - rs_from_r).abs() / scale).max((self.u - (t - rs)).abs() / (1.0 + t.abs())))
            }
        }
    }
}

/// Tortoise coordinate r* = r + 2m log(r - 2m).
pub fn rstar_of_r(r: f64, m: f64) -> Result<f64> {
    if !(r > 2.0 * m) || !r.is_finite() {
        return Err(Error::Domain(format!("r* needs r > 2m, got r = {r}, m = {m}")));
    }
    if m == 0.0 {
        return Ok(r);
    }
    Ok(r + 2.0 * m * (r - 2.0 * m).ln())
}

/// r* as a function of R = 1/r.
pub fn rstar_of_rinv(rr: f64, m: f64) -> Result<f64> {
    if !(rr > 0.0) {
        return Err(Error::Domain(format!("r* needs R > 0, got {rr}")));
    }
    rstar_of_r(1.0 / rr, m)
}

/// Inverse of the tortoise map: bracketed bisection in x = log(r - 2m), then Newton polish.
pub fn r_of_rstar(rstar: f64, m: f64) -> Result<f64> {
    if !rstar.is_finite() {
        return Err(Error::Domain("r* must be finite".into()));
    }
    if m == 0.0 {
        if rstar <= 0.0 {
            return Err(Error::Domain(format!("flat r* must be positive, got {rstar}")));
        }
        return Ok(rstar);
    }
    let g = |x: f64| 2.0 * m + x.exp() + 2.0 * m * x - rstar;
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while g(lo) > 0.0 {
        lo = 2.0 * lo - 1.0;
        if lo < -700.0 {
            return Err(Error::Domain(format!("r* = {rstar} too close to the horizon")));
        }
    }
    while g(hi) < 0.0 {
        hi = 2.0 * hi + 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-6 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..50 {
        let step = g(x) / (x.exp() + 2.0 * m);
        x -= step;
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    Ok(2.0 * m + x.exp())
}

/// R = 1/r as a function of r*.
pub fn rinv_of_rstar(rstar: f64, m: f64) -> Result<f64> {
    Ok(1.0 / r_of_rstar(rstar, m)?)
}

/// Covariant (u, R) block and angular scale of the conformal metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricBlock {
    pub guu: f64,
    pub gur: f64,
    pub grr: f64,
    /// Coefficient of the unit round metric (-1).
    pub angular: f64,
}

/// Contravariant (u, R) block of the conformal metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMetricBlock {
    pub uu: f64,
    /// Tensor component g^{uR}; the symmetric-product coefficient is twice this.
    pub ur: f64,
    pub rr: f64,
    pub angular: f64,
}

impl InverseMetricBlock {
    /// Coefficient of the symmetrized product du dR as the inverse is usually written (-2).
    pub fn symmetric_ur_coefficient(&self) -> f64 {
        2.0 * self.ur
    }
}

pub fn metric_components(p: &ChartPoint, params: &ChartParams) -> MetricBlock {
    let rr = p.r_inv;
    MetricBlock { guu: rr * rr * params.f(rr), gur: -1.0, grr: 0.0, angular: -1.0 }
}

pub fn inverse_metric_components(p: &ChartPoint, params: &ChartParams) -> InverseMetricBlock {
    let rr = p.r_inv;
    InverseMetricBlock { uu: 0.0, ur: -1.0, rr: -rr * rr * params.f(rr), angular: -1.0 }
}

/// Components (T^u, T^R) of the Morawetz field u^2 d_u - 2(1 + uR) d_R.
pub fn morawetz_field(p: &ChartPoint) -> (f64, f64) {
    (p.u * p.u, -2.0 * (1.0 + p.u * p.r_inv))
}

pub fn morawetz_norm_sq(p: &ChartPoint, params: &ChartParams) -> f64 {
    let (u, rr) = (p.u, p.r_inv);
    let x = u * rr;
    u * u * (4.0 * (1.0 + x) + x * x * params.f(rr))
}

/// Zeros in x = uR of 4(1+x) + x^2 (1 - 2mR), as (-2/(1-sqrt(2mR)), -2/(1+sqrt(2mR))).
pub fn morawetz_roots(two_m_r: f64) -> (f64, f64) {
    let q = two_m_r.sqrt();
    (-2.0 / (1.0 - q), -2.0 / (1.0 + q))
}

/// (1/6) Scal of the conformal metric for Omega = R.
pub fn curvature_term(p: &ChartPoint, params: &ChartParams) -> f64 {
    2.0 * params.m * p.r_inv
}

/// R R component of grad T + (grad T)^T, i.e. minus the Lie derivative of the inverse metric.
/// The symmetrized gradient with the 1/2 convention is half of this.
pub fn killing_form_rr(u: f64, rr: f64, m: f64) -> f64 {
    4.0 * m * rr * rr * (3.0 + u * rr)
}

/// Trace of the Killing form against the metric; vanishes because g_RR = 0.
pub fn killing_form_trace(p: &ChartPoint, params: &ChartParams) -> f64 {
    let g = metric_components(p, params);
    g.grr * killing_form_rr(p.u, p.r_inv, params.m)
}

pub fn tau_of_s(s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("s must lie in [0,1], got {s}")));
    }
    Ok(-2.0 * (s.sqrt() - 1.0))
}

pub fn s_of_tau(tau: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0,2], got {tau}")));
    }
    let q = 1.0 - 0.5 * tau;
    Ok(q * q)
}

/// Leaf parameter s = |u| / r* of a chart point.
pub fn s_of_point(u: f64, rr: f64, m: f64) -> Result<f64> {
    Ok(u.abs() / rstar_of_rinv(rr, m)?)
}

/// R on the leaf H_s through retarded time u, i.e. r*(R) = |u|/s.
pub fn leaf_rinv(u: f64, s: f64, m: f64) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    rinv_of_rstar(u.abs() / s, m)
}

/// d_R coefficient of the identifying field (r* R)^{3/2} (1 - 2mR) sqrt(R/|u|).
/// Moving along it changes tau at unit rate (tau decreases as R grows).
pub fn identifying_field(p: &ChartPoint, params: &ChartParams) -> Result<f64> {
    if !(p.u < 0.0) {
        return Err(Error::Domain("identifying field needs u < 0".into()));
    }
    if p.r_inv == 0.0 {
        return Ok(0.0);
    }
    if p.r_inv < 0.0 {
        return Err(Error::Domain("identifying field needs R >= 0".into()));
    }
    let rs = rstar_of_rinv(p.r_inv, params.m)?;
    let x = rs * p.r_inv;
    Ok(x.powf(1.5) * params.f(p.r_inv) * (p.r_inv / p.u.abs()).sqrt())
}

/// Sampling of the audit region {u <= u0, t > 0, 0 < R <= R_max}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditGrid {
    pub nu: usize,
    pub nr: usize,
    pub u_lo: f64,
}

impl AuditGrid {
    pub fn for_params(params: &ChartParams) -> Self {
        AuditGrid { nu: 200, nr: 200, u_lo: params.u_min.min(params.u0 - 1.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStat {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub lower: f64,
    pub upper: f64,
    pub ok: bool,
    /// (u, R) where the worst violation was seen.
    pub witness: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pass: bool,
    pub samples: usize,
    pub ratios: Vec<RatioStat>,
    pub morawetz_floor: f64,
    pub morawetz_bound: f64,
    pub morawetz_ok: bool,
    /// -2/(1+sqrt(eps)) <= -1-eps, the timelike criterion on eps.
    pub eps_timelike_ok: bool,
    /// Positivity of the known parts of the lower equivalence constant.
    pub eps_equivalence_ok: bool,
    pub violations: Vec<String>,
}

struct Tracker {
    stat: RatioStat,
    worst: f64,
}

impl Tracker {
    fn new(name: &str, lower: f64, upper: f64) -> Self {
        Tracker {
            stat: RatioStat {
                name: name.into(),
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
                lower,
                upper,
                ok: true,
                witness: None,
            },
            worst: 0.0,
        }
    }

    fn push(&mut self, v: f64, u: f64, rr: f64) {
        self.stat.min = self.stat.min.min(v);
        self.stat.max = self.stat.max.max(v);
        let excess = (self.stat.lower - v).max(v - self.stat.upper);
        if excess >= 0.0 || !v.is_finite() {
            self.stat.ok = false;
            if excess >= self.worst || self.stat.witness.is_none() {
                self.worst = excess;
                self.stat.witness = Some((u, rr));
            }
        }
    }
}

/// Scan the five decay-lemma ratios and the Morawetz floor; never errors on violations.
pub fn chart_audit(params: &ChartParams, grid: &AuditGrid) -> Result<AuditReport> {
    params.validate()?;
    if grid.nu < 2 || grid.nr < 2 || grid.u_lo >= params.u0 {
        return Err(Error::Config("audit grid needs nu, nr >= 2 and u_lo < u0".into()));
    }
    let eps = params.eps;
    let mut t_r = Tracker::new("r* / r", 1.0, 1.0 + eps);
    let mut t_rrs = Tracker::new("R r*", 1.0, 1.0 + eps);
    let mut t_ru = Tracker::new("R |u|", 0.0, 1.0 + eps);
    let mut t_f = Tracker::new("1 - 2mR", 1.0 - eps, 1.0);
    let mut t_s = Tracker::new("s", 0.0, 1.0);
    let mut floor = f64::INFINITY;
    let mut floor_at = (0.0, 0.0);
    let mut samples = 0;
    for i in 0..grid.nu {
        let u = grid.u_lo + (params.u0 - grid.u_lo) * i as f64 / (grid.nu - 1) as f64;
        // t > 0 means r* > -u, i.e. R below the Sigma_0 value
        let r_sigma = rinv_of_rstar(-u, params.m)?;
        let top = r_sigma.min(params.r_max);
        for j in 1..=grid.nr {
            let rr = top * j as f64 / (grid.nr + 1) as f64;
            let r = 1.0 / rr;
            let rs = rstar_of_r(r, params.m)?;
            t_r.push(rs / r, u, rr);
            t_rrs.push(rr * rs, u, rr);
            t_ru.push(rr * u.abs(), u, rr);
            t_f.push(params.f(rr), u, rr);
            t_s.push(u.abs() / rs, u, rr);
            let n = morawetz_norm_sq(&ChartPoint::new(u, rr), params);
            if n < floor {
                floor = n;
                floor_at = (u, rr);
            }
            samples += 1;
        }
    }
    // the strict lower bounds are 1 < r*/r and 1 < R r*, 0 < R|u|, 0 < s;
    // the upper bound 1 - 2mR < 1 is strict too, met for every m > 0
    let mut ratios = vec![t_r.stat, t_rrs.stat, t_ru.stat, t_f.stat, t_s.stat];
    if params.m == 0.0 {
        // flat chart: r* = r and 1 - 2mR = 1 identically; the strict bounds degenerate
        for st in ratios.iter_mut().take(2) {
            st.ok = (st.min - 1.0).abs() < 1e-12 && (st.max - 1.0).abs() < 1e-12;
            st.witness = None;
        }
        ratios[3].ok = true;
        ratios[3].witness = None;
    }
    let bound = 4.0 * params.u0 * params.u0 * eps;
    let morawetz_ok = floor >= bound;
    let eps_timelike_ok = -2.0 / (1.0 + eps.sqrt()) <= -1.0 - eps;
    let eps_equivalence_ok = crate::energy::equivalence_constants(eps, None).c_known > 0.0;
    let mut violations = Vec::new();
    for st in &ratios {
        if !st.ok {
            let (wu, wr) = st.witness.unwrap_or((f64::NAN, f64::NAN));
            violations.push(format!(
                "{} in [{:.6}, {:.6}] leaves ({}, {}); witness u = {wu:.6}, R = {wr:.6e}",
                st.name, st.min, st.max, st.lower, st.upper
            ));
        }
    }
    if !morawetz_ok {
        violations.push(format!(
            "Morawetz norm floor {floor:.6e} < 4 u0^2 eps = {bound:.6e}; witness u = {:.6}, R = {:.6e}",
            floor_at.0, floor_at.1
        ));
    }
    if !eps_timelike_ok {
        violations.push(format!("eps = {eps} fails -2/(1+sqrt(eps)) <= -1-eps"));
    }
    if !eps_equivalence_ok {
        violations.push(format!("eps = {eps} makes the lower equivalence constant non-positive"));
    }
    Ok(AuditReport {
        pass: violations.is_empty(),
        samples,
        ratios,
        morawetz_floor: floor,
        morawetz_bound: bound,
        morawetz_ok,
        eps_timelike_ok,
        eps_equivalence_ok,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(m: f64) -> ChartParams {
        ChartParams { m, ..ChartParams::default() }
    }

    #[test]
    fn tortoise_values() {
        assert_relative_eq!(rstar_of_r(4.0, 1.0).unwrap(), 4.0 + 2.0 * 2f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(rstar_of_r(4.0, 1.0).unwrap(), 5.386294, epsilon = 1e-6);
        assert_eq!(rstar_of_r(3.0, 0.0).unwrap(), 3.0);
        assert!(rstar_of_r(2.0, 1.0).is_err());
        assert!(rstar_of_r(1.5, 1.0).is_err());
    }

    fn bisect_inverse(rs: f64, m: f64) -> f64 {
        let (mut lo, mut hi) = (2.0 * m + 1e-300, 2.0 * m + rs.abs() + 10.0);
        for _ in 0..3000 {
            let mid = 0.5 * (lo + hi);
            if rstar_of_r(mid, m).unwrap() < rs {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn tortoise_round_trip_matches_bisection() {
        for &r in &[2.002, 2.5, 3.0, 10.0, 123.4, 1e4] {
            let rs = rstar_of_r(r, 1.0).unwrap();
            let back = r_of_rstar(rs, 1.0).unwrap();
            assert_relative_eq!(back, r, max_relative = 1e-12);
            assert_relative_eq!(bisect_inverse(rs, 1.0), r, max_relative = 1e-12);
        }
    }

    #[test]
    fn metric_examples() {
        let p = ChartPoint::new(-3.0, 0.05);
        let g = metric_components(&p, &params(1.0));
        assert_relative_eq!(g.guu, 0.00225, epsilon = 1e-15);
        assert_eq!(g.gur, -1.0);
        let g0 = metric_components(&ChartPoint::new(-3.0, 0.0), &params(1.0));
        assert_eq!(g0.guu, 0.0);
        let gi = inverse_metric_components(&p, &params(1.0));
        assert_eq!(gi.symmetric_ur_coefficient(), -2.0);
        assert_relative_eq!(gi.rr, -0.00225, epsilon = 1e-15);
    }

    #[test]
    fn metric_inverse_contract_to_identity() {
        let pr = params(1.0);
        for k in 0..50 {
            let p = ChartPoint::new(-100.0 + 3.0 * k as f64, 0.0002 * k as f64);
            let g = metric_components(&p, &pr);
            let gi = inverse_metric_components(&p, &pr);
            let a = [[g.guu, g.gur], [g.gur, g.grr]];
            let b = [[gi.uu, gi.ur], [gi.ur, gi.rr]];
            for i in 0..2 {
                for j in 0..2 {
                    let s: f64 = (0..2).map(|k| a[i][k] * b[k][j]).sum();
                    assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
            assert_eq!(g.guu * g.grr - g.gur * g.gur, -1.0);
            assert_eq!(g.angular * gi.angular, 1.0);
        }
    }

    #[test]
    fn morawetz_examples() {
        let pr = params(1.0);
        assert_relative_eq!(morawetz_norm_sq(&ChartPoint::new(-10.0, 0.0), &pr), 400.0);
        assert_relative_eq!(morawetz_norm_sq(&ChartPoint::new(-10.0, 0.05), &pr), 222.5, epsilon = 1e-12);
        let (a, b) = morawetz_roots(0.1);
        assert_relative_eq!(a, -2.92495, epsilon = 1e-5);
        assert_relative_eq!(b, -1.51949, epsilon = 1e-5);
        // quadratic (1-2mR) x^2 + 4x + 4 = 0 with 2mR = 0.1
        let (qa, qb, qc) = (0.9_f64, 4.0_f64, 4.0_f64);
        let d = (qb * qb - 4.0 * qa * qc).sqrt();
        let (x1, x2) = ((-qb - d) / (2.0 * qa), (-qb + d) / (2.0 * qa));
        assert_relative_eq!(x1, a, epsilon = 1e-12);
        assert_relative_eq!(x2, b, epsilon = 1e-12);
        assert_eq!(morawetz_field(&ChartPoint::new(-2.0, 0.25)), (4.0, -1.0));
    }

    #[test]
    fn curvature_and_killing() {
        assert_relative_eq!(curvature_term(&ChartPoint::new(-1.0, 0.1), &params(1.0)), 0.2);
        assert_eq!(curvature_term(&ChartPoint::new(-1.0, 0.3), &params(0.0)), 0.0);
        assert_eq!(curvature_term(&ChartPoint::new(-1.0, 0.0), &params(1.0)), 0.0);
        assert_relative_eq!(killing_form_rr(-5.0, 0.1, 1.0), 0.1, epsilon = 1e-15);
        assert_eq!(killing_form_trace(&ChartPoint::new(-5.0, 0.1), &params(1.0)), 0.0);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau_of_s(1.0).unwrap(), 0.0);
        assert_eq!(tau_of_s(0.0).unwrap(), 2.0);
        assert_relative_eq!(tau_of_s(0.25).unwrap(), 1.0);
        assert!(tau_of_s(1.1).is_err());
        assert!(tau_of_s(-0.1).is_err());
        assert_relative_eq!(s_of_tau(tau_of_s(0.3).unwrap()).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn identifying_field_examples() {
        let flat = ChartParams { m: 0.0, r_max: 1.5, ..ChartParams::default() };
        assert_relative_eq!(identifying_field(&ChartPoint::new(-1.0, 1.0), &flat).unwrap(), 1.0);
        assert_eq!(identifying_field(&ChartPoint::new(-7.0, 0.0), &params(1.0)).unwrap(), 0.0);
    }

    #[test]
    fn identifying_field_moves_tau_at_unit_rate() {
        let pr = params(1.0);
        let tau = |u: f64, rr: f64| tau_of_s(s_of_point(u, rr, 1.0).unwrap()).unwrap();
        for &(u, rr) in &[(-150.0, 0.004), (-200.0, 0.002), (-130.0, 0.007), (-300.0, 0.0005)] {
            let v = identifying_field(&ChartPoint::new(u, rr), &pr).unwrap();
            let h = 1e-3 * rr / v;
            let f = |k: f64| tau(u, rr + k * h * v);
            let d = (f(-2.0) - 8.0 * f(-1.0) + 8.0 * f(1.0) - f(2.0)) / (12.0 * h);
            assert!((d.abs() - 1.0).abs() < 1e-8, "d tau = {d}");
            assert!(d < 0.0);
        }
    }

    #[test]
    fn chart_point_consistency() {
        let p = ChartPoint::from_cauchy(3.0, 40.0, 1.0).unwrap();
        assert!(p.consistency_defect(1.0).unwrap() < 1e-14);
        let q = ChartPoint::new(-50.0, 0.01).with_cauchy(1.0).unwrap();
        assert!(q.consistency_defect(1.0).unwrap() < 1e-14);
    }

    #[test]
    fn audit_passes_far_out_and_fails_close_in() {
        let far = ChartParams { m: 1.0, u0: -120.0, eps: 0.1, r_max: 1.0 / 120.0, u_min: -400.0, u_max: -100.0 };
        let rep = chart_audit(&far, &AuditGrid::for_params(&far)).unwrap();
        assert!(rep.pass, "{:?}", rep.violations);
        let near = ChartParams { m: 1.0, u0: -3.0, eps: 0.01, r_max: 0.2, u_min: -50.0, u_max: 0.0 };
        let rep = chart_audit(&near, &AuditGrid::for_params(&near)).unwrap();
        assert!(!rep.pass);
        assert!(rep.ratios.iter().any(|r| !r.ok && r.witness.is_some()));
    }

    #[test]
    fn audit_at_u0_minus_50_flags_rrstar() {
        // with m = 1 the bound R r* < 1.1 needs r of order 90; u0 = -50 is too close
        let p = ChartParams { m: 1.0, u0: -50.0, eps: 0.1, r_max: 1.0 / 50.0, u_min: -400.0, u_max: -40.0 };
        let rep = chart_audit(&p, &AuditGrid::for_params(&p)).unwrap();
        assert!(!rep.pass);
        assert!(rep.ratios.iter().any(|r| r.name == "R r*" && !r.ok));
    }

    #[test]
    fn flat_audit_passes_for_any_eps() {
        for &eps in &[0.01, 0.1, 0.3] {
            let p = ChartParams { m: 0.0, u0: -20.0, eps, r_max: 0.05, u_min: -100.0, u_max: -10.0 };
            let rep = chart_audit(&p, &AuditGrid::for_params(&p)).unwrap();
            let ratios_ok = rep.ratios.iter().all(|r| r.ok);
            assert!(ratios_ok, "{:?}", rep.violations);
            assert_relative_eq!(rep.ratios[1].max, 1.0, epsilon = 1e-12);
        }
    }
}
