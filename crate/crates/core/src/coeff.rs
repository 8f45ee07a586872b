//! The cubic coefficient b: built-in families, grid validation against the
//! four standing assumptions, and the conformal rescaling of slice data.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chart::{morawetz_field, ChartParams, ChartPoint};
use crate::error::{Error, Result};

type Sampler = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Named b families selectable from configuration.
#[derive(Clone)]
pub enum BFamily {
    Zero,
    /// b = c everywhere; does not vanish at scri (negative tests only).
    Constant { c: f64 },
    /// b = c chi(R) with chi = 0 for R <= r1, 1 for R >= r2, smooth in between.
    Cutoff { c: f64, r1: f64, r2: f64 },
    /// b = c R^p.
    Power { c: f64, p: f64 },
    Custom(Sampler),
}

impl fmt::Debug for BFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BFamily::Zero => write!(f, "Zero"),
            BFamily::Constant { c } => write!(f, "Constant({c})"),
            BFamily::Cutoff { c, r1, r2 } => write!(f, "Cutoff({c}, {r1}, {r2})"),
            BFamily::Power { c, p } => write!(f, "Power({c}, {p})"),
            BFamily::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// The cubic coefficient with a free-text description.
#[derive(Clone, Debug)]
pub struct CoeffB {
    pub family: BFamily,
    pub description: String,
    pub decay_exponent_hint: Option<f64>,
}

/// C-infinity step: 0 for x <= 0, 1 for x >= 1.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let h = |y: f64| (-1.0 / y).exp();
    let a = h(x);
    a / (a + h(1.0 - x))
}

impl CoeffB {
    pub fn zero() -> Self {
        CoeffB { family: BFamily::Zero, description: "b = 0".into(), decay_exponent_hint: None }
    }

    pub fn constant(c: f64) -> Self {
        CoeffB { family: BFamily::Constant { c }, description: format!("b = {c}"), decay_exponent_hint: Some(0.0) }
    }

    pub fn cutoff(c: f64, r1: f64, r2: f64) -> Self {
        CoeffB {
            family: BFamily::Cutoff { c, r1, r2 },
            description: format!("b = {c} chi(R), chi = 0 below R = {r1}, 1 above R = {r2}"),
            decay_exponent_hint: None,
        }
    }

    pub fn power(c: f64, p: f64) -> Self {
        CoeffB { family: BFamily::Power { c, p }, description: format!("b = {c} R^{p}"), decay_exponent_hint: Some(p) }
    }

    pub fn custom(description: &str, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        CoeffB { family: BFamily::Custom(Arc::new(f)), description: description.into(), decay_exponent_hint: None }
    }

    /// b at (u, R).
    pub fn value(&self, u: f64, rr: f64) -> f64 {
        match &self.family {
            BFamily::Zero => 0.0,
            BFamily::Constant { c } => *c,
            BFamily::Cutoff { c, r1, r2 } => c * smooth_step((rr - r1) / (r2 - r1)),
            BFamily::Power { c, p } => c * rr.abs().powf(*p),
            BFamily::Custom(f) => f(u, rr),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.family, BFamily::Zero)
            || matches!(self.family, BFamily::Constant { c } if c == 0.0)
            || matches!(self.family, BFamily::Cutoff { c, .. } if c == 0.0)
            || matches!(self.family, BFamily::Power { c, .. } if c == 0.0)
    }

    /// Does b depend on u? Static families do not.
    pub fn is_static(&self) -> bool {
        !matches!(self.family, BFamily::Custom(_))
    }

    /// Same family with the amplitude multiplied by k (custom samplers are wrapped).
    pub fn scaled(&self, k: f64) -> Self {
        let family = match &self.family {
            BFamily::Zero => BFamily::Zero,
            BFamily::Constant { c } => BFamily::Constant { c: c * k },
            BFamily::Cutoff { c, r1, r2 } => BFamily::Cutoff { c: c * k, r1: *r1, r2: *r2 },
            BFamily::Power { c, p } => BFamily::Power { c: c * k, p: *p },
            BFamily::Custom(f) => {
                let f = f.clone();
                BFamily::Custom(Arc::new(move |u, r| k * f(u, r)))
            }
        };
        CoeffB { family, description: format!("{} (x{k})", self.description), decay_exponent_hint: self.decay_exponent_hint }
    }

    /// T b = u^2 d_u b - 2 (1 + uR) d_R b by centred differences with a point-relative step.
    pub fn morawetz_derivative(&self, u: f64, rr: f64) -> f64 {
        let (tu, tr) = morawetz_field(&ChartPoint::new(u, rr));
        let hu = 1e-5 * (1.0 + u.abs());
        let hr = 1e-5 * rr.abs().max(1e-300);
        let du = (self.value(u + hu, rr) - self.value(u - hu, rr)) / (2.0 * hu);
        let dr = (self.value(u, rr + hr) - self.value(u, rr - hr)) / (2.0 * hr);
        tu * du + tr * dr
    }
}

/// Sampling for b validation: a uniform R lattice plus geometric points toward scri.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub nu: usize,
    pub nr: usize,
    /// Geometric samples reach R_max 10^-decades.
    pub decades: usize,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        ValidationGrid { nu: 64, nr: 64, decades: 6 }
    }
}

impl ValidationGrid {
    fn refined(&self, level: u32) -> Self {
        ValidationGrid { nu: self.nu << level, nr: self.nr << level, decades: self.decades + level as usize }
    }

    fn r_samples(&self, r_max: f64) -> Vec<f64> {
        let mut v: Vec<f64> = (1..=self.nr).map(|j| r_max * j as f64 / self.nr as f64).collect();
        for d in 1..=self.decades {
            for k in 1..10 {
                v.push(r_max * k as f64 * 10f64.powi(-(d as i32) - 1));
            }
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    fn u_samples(&self, params: &ChartParams) -> Vec<f64> {
        (0..=self.nu).map(|i| params.u_min + (params.u_max - params.u_min) * i as f64 / self.nu as f64).collect()
    }
}

/// Leaves (Sigma_r) used for the decay constant, each a list of (u, R) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafFamily {
    pub leaves: Vec<(f64, Vec<(f64, f64)>)>,
}

impl LeafFamily {
    /// Desk proxy of a foliation toward the future corner of the rectangle:
    /// leaf r is the line u = u_max - r (u_max - u_min), r in (0, 1].
    pub fn toward_future_corner(params: &ChartParams, n_leaves: usize, n_points: usize) -> Self {
        let leaves = (1..=n_leaves)
            .map(|k| {
                let r = k as f64 / n_leaves as f64;
                let u = params.u_max - r * (params.u_max - params.u_min);
                let pts = (0..=n_points).map(|j| (u, params.r_max * j as f64 / n_points as f64)).collect();
                (r, pts)
            })
            .collect();
        LeafFamily { leaves }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BValidationReport {
    pub sup_positivity_violation: f64,
    pub scri_limit_residual: f64,
    pub a3_best_constant: f64,
    pub a3_unbounded: bool,
    pub a4_best_constant: f64,
    pub a4_unbounded: bool,
    /// A3 constant at each refinement level.
    pub a3_trend: Vec<f64>,
    pub a4_trend: Vec<f64>,
    pub near_scri_points: usize,
}

impl BValidationReport {
    pub fn a1_ok(&self) -> bool {
        self.sup_positivity_violation == 0.0
    }
    pub fn a2_ok(&self, tol: f64) -> bool {
        self.scri_limit_residual <= tol
    }
}

fn a3_on(b: &CoeffB, params: &ChartParams, grid: &ValidationGrid) -> (f64, f64, f64) {
    let rs = grid.r_samples(params.r_max);
    let mut pos_viol: f64 = 0.0;
    let mut a3: f64 = 0.0;
    for u in grid.u_samples(params) {
        for &rr in &rs {
            let v = b.value(u, rr);
            pos_viol = pos_viol.max(-v);
            let tb = b.morawetz_derivative(u, rr);
            if v > 0.0 {
                a3 = a3.max(tb.abs() / v);
            } else if tb.abs() > 0.0 {
                a3 = f64::INFINITY;
            }
        }
    }
    let scri = grid.u_samples(params).iter().map(|&u| b.value(u, 0.0).abs()).fold(0.0, f64::max);
    (pos_viol, a3, scri)
}

fn a4_on(b: &CoeffB, leaves: &LeafFamily) -> f64 {
    leaves
        .leaves
        .iter()
        .map(|(r, pts)| pts.iter().map(|&(u, rr)| b.value(u, rr).abs()).fold(0.0, f64::max) / r.powi(3))
        .fold(0.0, f64::max)
}

fn grows_unbounded(trend: &[f64]) -> bool {
    let last = *trend.last().unwrap_or(&0.0);
    !last.is_finite() || (trend.windows(2).all(|w| w[1] > w[0]) && last > 1e6)
}

/// Empirical constants for the four assumptions on three nested refinements.
pub fn validate_b(b: &CoeffB, params: &ChartParams, grid: &ValidationGrid, foliation: &LeafFamily) -> Result<BValidationReport> {
    params.validate()?;
    let near = grid.r_samples(params.r_max).iter().filter(|&&r| r < 0.1 * params.r_max).count();
    if near < 10 {
        return Err(Error::Config(format!("validation grid has only {near} samples with R < 0.1 R_max")));
    }
    let mut a3_trend = Vec::new();
    let mut pos = 0.0_f64;
    let mut scri = 0.0_f64;
    for level in 0..3 {
        let (p, a3, s) = a3_on(b, params, &grid.refined(level));
        pos = pos.max(p);
        scri = scri.max(s);
        a3_trend.push(a3);
    }
    let a4 = a4_on(b, foliation);
    let a4_trend = vec![a4];
    let a3_unbounded = grows_unbounded(&a3_trend);
    Ok(BValidationReport {
        sup_positivity_violation: pos,
        scri_limit_residual: scri,
        a3_best_constant: *a3_trend.last().unwrap(),
        a3_unbounded,
        a4_best_constant: a4,
        a4_unbounded: !a4.is_finite() || a4 > 1e6,
        a3_trend,
        a4_trend,
        near_scri_points: near,
    })
}

/// (theta, xi) on a slice to the rescaled pair (psi0, psi1); values vanish where Omega = 0.
pub fn physical_to_conformal_data(theta: &[f64], xi: &[f64], omega: &[f64], domega_t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = theta.len();
    if xi.len() != n || omega.len() != n || domega_t.len() != n {
        return Err(Error::Domain("slice arrays must share a length".into()));
    }
    let mut p0 = vec![0.0; n];
    let mut p1 = vec![0.0; n];
    for i in 0..n {
        if omega[i] != 0.0 {
            p0[i] = theta[i] / omega[i];
            p1[i] = (xi[i] - domega_t[i] * theta[i] / omega[i]) / omega[i];
        }
    }
    Ok((p0, p1))
}

/// Inverse of [`physical_to_conformal_data`].
pub fn conformal_to_physical_data(psi0: &[f64], psi1: &[f64], omega: &[f64], domega_t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = psi0.len();
    if psi1.len() != n || omega.len() != n || domega_t.len() != n {
        return Err(Error::Domain("slice arrays must share a length".into()));
    }
    let theta = (0..n).map(|i| omega[i] * psi0[i]).collect();
    let xi = (0..n).map(|i| omega[i] * psi1[i] + domega_t[i] * psi0[i]).collect();
    Ok((theta, xi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ChartParams {
        ChartParams::default()
    }

    #[test]
    fn zero_b_is_trivially_valid() {
        let p = params();
        let rep = validate_b(&CoeffB::zero(), &p, &ValidationGrid::default(), &LeafFamily::toward_future_corner(&p, 8, 16)).unwrap();
        assert_eq!(rep.sup_positivity_violation, 0.0);
        assert_eq!(rep.scri_limit_residual, 0.0);
        assert_eq!(rep.a3_best_constant, 0.0);
        assert_eq!(rep.a4_best_constant, 0.0);
        assert!(!rep.a3_unbounded);
    }

    #[test]
    fn b_equal_r_blows_up_near_scri() {
        let p = params();
        let b = CoeffB::power(1.0, 1.0);
        let rep = validate_b(&b, &p, &ValidationGrid::default(), &LeafFamily::toward_future_corner(&p, 8, 16)).unwrap();
        assert!(rep.a1_ok());
        assert!(rep.a2_ok(0.0));
        assert!(rep.a3_unbounded, "{:?}", rep.a3_trend);
        // analytic cross-check: T R = -2 (1 + uR)
        for &(u, rr) in &[(-150.0, 0.003), (-200.0, 1e-5)] {
            let tb = b.morawetz_derivative(u, rr);
            assert!((tb + 2.0 * (1.0 + u * rr)).abs() < 1e-8 * (1.0 + tb.abs()));
        }
    }

    #[test]
    fn compactly_supported_b_has_finite_constants() {
        let p = params();
        let b = CoeffB::cutoff(1.0, 0.002, 0.004);
        let rep = validate_b(&b, &p, &ValidationGrid::default(), &LeafFamily::toward_future_corner(&p, 8, 16)).unwrap();
        assert!(rep.a1_ok() && rep.a2_ok(0.0));
        assert!(rep.a3_best_constant.is_finite() && !rep.a3_unbounded);
        assert!(rep.a4_best_constant.is_finite());
    }

    #[test]
    fn constant_b_violates_scri_limit() {
        let p = params();
        let rep = validate_b(&CoeffB::constant(0.5), &p, &ValidationGrid::default(), &LeafFamily::toward_future_corner(&p, 8, 16)).unwrap();
        assert!(!rep.a2_ok(1e-12));
    }

    #[test]
    fn constants_do_not_decrease_under_refinement() {
        let p = params();
        let b = CoeffB::custom("R^2 (2 + sin u)", |u, r| r * r * (2.0 + u.sin()));
        let rep = validate_b(&b, &p, &ValidationGrid::default(), &LeafFamily::toward_future_corner(&p, 8, 16)).unwrap();
        assert!(rep.a3_trend.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let p = params();
        let g = ValidationGrid { nu: 8, nr: 8, decades: 0 };
        assert!(validate_b(&CoeffB::zero(), &p, &g, &LeafFamily::toward_future_corner(&p, 4, 4)).is_err());
    }

    #[test]
    fn data_rescaling() {
        let (a, b) = physical_to_conformal_data(&[0.0; 3], &[0.0; 3], &[0.5; 3], &[0.1; 3]).unwrap();
        assert_eq!((a, b), (vec![0.0; 3], vec![0.0; 3]));
        let th = [0.3, -1.2, 2.0];
        let xi = [1.0, 0.5, -0.25];
        let (a, b) = physical_to_conformal_data(&th, &xi, &[1.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(a, th.to_vec());
        assert_eq!(b, xi.to_vec());
        let om = [0.0, 0.2, 0.7];
        let (a, _) = physical_to_conformal_data(&th, &xi, &om, &[0.3; 3]).unwrap();
        assert_eq!(a[0], 0.0);
    }

    #[test]
    fn smooth_step_shape() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
        assert!(smooth_step(0.3) < smooth_step(0.31));
    }
}
