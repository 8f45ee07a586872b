//! Trace operators between the Cauchy slice t = 0 and scri, their time-reflected
//! mirrors, and the scattering operator built from them.
//!
//! Past-scri profiles are stored on the retarded-time lattice of the reflected
//! solution: a past profile theta(v) lives at u = -v, so both scri components share
//! the lattice [u_min, u_max].

use serde::{Deserialize, Serialize};

use crate::cauchygrid::{self, CauchyOptions, CauchyState};
use crate::chart;
use crate::coeff::{smooth_step, CoeffB};
use crate::energy;
use crate::error::{Error, Result};
use crate::interp::{self, Lattice2};
use crate::nullgrid::{self, Direction, GoursatSetup, ModeField, ScriProfile};

/// One mode of the data on t = 0: psi, its T-derivative xi and its r*-derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaData {
    pub l: u32,
    pub rstar0: f64,
    pub drs: f64,
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub psi_rs: Vec<f64>,
}

/// Components (A, B) of T = A d_t + B d_r* at t = 0, with a = R^2 (1 - 2mR) and R.
/// None where the point is not in the exterior (flat origin).
pub fn slice_weights(rstar: f64, m: f64) -> Option<(f64, f64, f64, f64)> {
    if m == 0.0 && rstar <= 0.0 {
        return None;
    }
    let rr = chart::rinv_of_rstar(rstar, m).ok()?;
    let a = rr * rr * (1.0 - 2.0 * m * rr);
    let u = -rstar;
    let cb = 2.0 * (1.0 + u * rr) / a;
    Some((u * u + cb, cb, a, rr))
}

/// Fourth-order centred derivative, second order at the two ends.
pub fn lattice_derivative(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|k| {
            if k >= 2 && k + 2 < n {
                (v[k - 2] - 8.0 * v[k - 1] + 8.0 * v[k + 1] - v[k + 2]) / (12.0 * h)
            } else if k == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * h)
            }
        })
        .collect()
}

impl SigmaData {
    pub fn zeros(l: u32, rstar0: f64, drs: f64, n: usize) -> Self {
        SigmaData { l, rstar0, drs, theta: vec![0.0; n], xi: vec![0.0; n], psi_rs: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn rstar(&self, k: usize) -> f64 {
        self.rstar0 + k as f64 * self.drs
    }

    /// From (psi, psi_t); the r*-derivative is taken on the lattice.
    pub fn from_cauchy(state: &CauchyState, m: f64) -> Result<Self> {
        let mut d = SigmaData::zeros(state.l, state.rstar0, state.drs, state.len());
        d.psi_rs = lattice_derivative(&state.psi, state.drs);
        for k in 0..state.len() {
            match slice_weights(state.rstar(k), m) {
                Some((ca, cb, _, _)) => {
                    d.theta[k] = state.psi[k];
                    d.xi[k] = ca * state.pi[k] + cb * d.psi_rs[k];
                }
                None => d.psi_rs[k] = 0.0,
            }
        }
        Ok(d)
    }

    pub fn to_cauchy(&self, m: f64) -> Result<CauchyState> {
        let mut s = CauchyState::zeros(self.l, self.rstar0, self.drs, self.len());
        for k in 0..self.len() {
            if let Some((ca, cb, _, _)) = slice_weights(self.rstar(k), m) {
                if !(ca > 0.0) {
                    return Err(Error::Domain(format!("T is not timelike at r* = {}", self.rstar(k))));
                }
                s.psi[k] = self.theta[k];
                s.pi[k] = (self.xi[k] - cb * self.psi_rs[k]) / ca;
            }
        }
        Ok(s)
    }

    pub fn max_abs(&self) -> f64 {
        self.theta.iter().chain(&self.xi).fold(0.0, |a: f64, b| a.max(b.abs()))
    }

    /// Largest relative difference of theta and xi.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        let scale = self.max_abs().max(other.max_abs()).max(f64::MIN_POSITIVE);
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs()));
        d(&self.theta, &other.theta).max(d(&self.xi, &other.xi)) / scale
    }
}

/// Data of the time-reflected solution: psi_t changes sign, so xi -> -xi + 2 B psi_r*.
pub fn mirror(data: &SigmaData, m: f64) -> SigmaData {
    let mut out = data.clone();
    for k in 0..data.len() {
        if let Some((_, cb, _, _)) = slice_weights(data.rstar(k), m) {
            out.xi[k] = -data.xi[k] + 2.0 * cb * data.psi_rs[k];
        }
    }
    out
}

/// Energy of the data through t = 0, 4 pi times the integral of the slice density over r*.
pub fn sigma_energy(data: &SigmaData, b: &CoeffB, m: f64) -> Result<f64> {
    let state = data.to_cauchy(m)?;
    let ll = (data.l * (data.l + 1)) as f64;
    let mut acc = 0.0;
    for k in 0..data.len() {
        if let Some((_, _, _, rr)) = slice_weights(data.rstar(k), m) {
            let u = -data.rstar(k);
            acc += energy::integrand_slice_chart(state.psi[k], state.pi[k], data.psi_rs[k], ll, u, rr, m, b.value(u, rr));
        }
    }
    Ok(4.0 * std::f64::consts::PI * acc * data.drs)
}

/// Everything the trace operators need besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterSetup {
    pub goursat: GoursatSetup,
    pub courant: f64,
    /// The extraction cone sits at u_c = u_min - cone_shift du.
    pub cone_shift: usize,
    /// A second cone this many cells further out, for the u_c-insensitivity check.
    pub check_shift: Option<usize>,
    pub extraction_tol: f64,
    /// Width in r* of the taper that closes the slice data at r* = -u_min.
    pub taper_width: f64,
    /// Width in u of the window that closes scri data at both ends of the lattice.
    pub support_margin: f64,
    /// Extra r* beyond the light cones of the data on both sides of the Cauchy lattice.
    pub rstar_margin: f64,
    pub contamination_tol: f64,
    /// Largest Picard contraction ratio accepted for b != 0.
    pub picard_gate: f64,
}

impl ScatterSetup {
    pub fn new(goursat: GoursatSetup) -> Self {
        let span = goursat.params.u_max - goursat.params.u_min;
        ScatterSetup {
            goursat,
            courant: 0.5,
            cone_shift: 0,
            check_shift: None,
            extraction_tol: 1e-2,
            taper_width: 0.1 * span,
            support_margin: 0.05 * span,
            rstar_margin: 20.0,
            contamination_tol: 1e-6,
            picard_gate: 0.9,
        }
    }

    pub fn du(&self) -> f64 {
        self.goursat.du()
    }

    pub fn u_c(&self) -> f64 {
        self.goursat.params.u_min - self.cone_shift as f64 * self.du()
    }

    fn cones(&self) -> Vec<f64> {
        let mut c = vec![self.u_c()];
        if let Some(s) = self.check_shift {
            c.push(self.u_c() - s as f64 * self.du());
        }
        c
    }

    /// Cauchy lattice (r*_0, dr*, n) with spacing du whose nodes contain -u for every u node.
    pub fn sigma_lattice(&self) -> (f64, f64, usize) {
        let p = &self.goursat.params;
        let du = self.du();
        let u_far = self.cones().into_iter().fold(f64::MAX, f64::min);
        let t_end = p.u_max - u_far;
        let lo = if p.m == 0.0 { 0.0 } else { -p.u_max - t_end - self.rstar_margin };
        let hi = -u_far + t_end + self.rstar_margin;
        let below = if p.m == 0.0 { (-p.u_max / du).floor() } else { ((-p.u_max - lo) / du).ceil() };
        let rstar0 = -p.u_max - below * du;
        let n = below as usize + ((hi + p.u_max) / du).ceil() as usize + 1;
        (rstar0, du, n)
    }

    pub fn validate(&self) -> Result<()> {
        self.goursat.validate()?;
        if !(self.taper_width > 0.0) || !(self.support_margin > 0.0) {
            return Err(Error::Config("taper width and support margin must be positive".into()));
        }
        if !(self.picard_gate > 0.0 && self.picard_gate < 1.0) {
            return Err(Error::Config("Picard gate must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn taper(rstar: f64, end: f64, width: f64) -> (f64, f64) {
    let x = (end - rstar) / width;
    (smooth_step(x), -smooth_step_derivative(x) / width)
}

fn smooth_step_derivative(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let h = |y: f64| (-1.0 / y).exp();
    let (a, c) = (h(x), h(1.0 - x));
    (a / (x * x) * c + a * c / ((1.0 - x) * (1.0 - x))) / ((a + c) * (a + c))
}

/// Window closing a scri profile smoothly at both ends of its lattice.
pub fn close_support(theta: &ScriProfile, margin: f64) -> Result<ScriProfile> {
    let (u0, u1) = (theta.u0, theta.u_max());
    let values = (0..theta.len())
        .map(|i| {
            let u = theta.u(i);
            theta.values[i] * smooth_step((u - u0) / margin) * smooth_step((u1 - u) / margin)
        })
        .collect();
    ScriProfile::new(theta.l, u0, theta.du, values, (u0 + 0.5 * theta.du, u1 - 0.5 * theta.du))
}

/// Reads psi, d_x psi and d_R psi of a characteristic field at (x, R).
fn field_jet(field: &ModeField, dx: &[f64], x: f64, rr: f64) -> (f64, f64, f64) {
    let lat = |values| Lattice2 { values, nu: field.nx, nr: field.ny, u0: field.x0, du: field.dx, r0: field.y0, dr: field.dy };
    (lat(&field.values).bicubic(x, rr), lat(dx).bicubic(x, rr), lat(&field.deriv).bicubic(x, rr))
}

/// Samples a characteristic solution on t = 0. `x_of` maps r* to the field's null
/// coordinate, `derivs` turns (psi_x, psi_R, a) into (psi_t, psi_r*).
fn read_slice(field: &ModeField, setup: &ScatterSetup, x_of: impl Fn(f64) -> f64, derivs: impl Fn(f64, f64, f64) -> (f64, f64)) -> Result<SigmaData> {
    let p = &setup.goursat.params;
    let (rstar0, drs, n) = setup.sigma_lattice();
    let mut out = SigmaData::zeros(field.l, rstar0, drs, n);
    let dx = field.dx_field();
    let end = -p.u_min;
    let tol = 1e-9 * field.dx;
    let x_hi = field.x0 + (field.nx - 1) as f64 * field.dx;
    for k in 0..n {
        let rs = out.rstar(k);
        let x = x_of(rs);
        if x < field.x0 - tol || x > x_hi + tol {
            continue;
        }
        let Some((ca, cb, a, rr)) = slice_weights(rs, p.m) else { continue };
        if rr > p.r_max {
            continue;
        }
        let (psi, psi_x, psi_r) = field_jet(field, &dx, x, rr);
        let (psi_t, psi_rs) = derivs(psi_x, psi_r, a);
        let (chi, dchi) = taper(rs, end, setup.taper_width);
        let (psi, psi_t, psi_rs) = (chi * psi, chi * psi_t, chi * psi_rs + dchi * psi);
        out.theta[k] = psi;
        out.psi_rs[k] = psi_rs;
        out.xi[k] = ca * psi_t + cb * psi_rs;
    }
    if out.theta.iter().chain(&out.xi).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("slice readout".into()));
    }
    Ok(out)
}

fn picard_gate(theta: &ScriProfile, direction: Direction, b: &CoeffB, setup: &ScatterSetup) -> Result<Option<f64>> {
    if b.is_zero() || theta.values.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let g = &setup.goursat;
    let (_, rep) = nullgrid::picard_solve(theta, direction, b, g, g.picard_max_iter, g.picard_tol)?;
    let ratio = rep.ratios.first().copied().unwrap_or(0.0);
    if !(ratio < setup.picard_gate) {
        return Err(Error::NoContraction { ratios: rep.ratios });
    }
    Ok(Some(ratio))
}

/// T_+^0 with the backward characteristic field it came from.
pub fn trace_t_plus_0_field(theta: &ScriProfile, b: &CoeffB, setup: &ScatterSetup) -> Result<(SigmaData, ModeField)> {
    setup.validate()?;
    picard_gate(theta, Direction::Past, b, setup)?;
    let field = nullgrid::solve_goursat(theta, Direction::Past, b, &setup.goursat)?;
    // (u, R): psi_t = psi_u, psi_r* = -psi_u - a psi_R
    let data = read_slice(&field, setup, |rs| -rs, |pu, pr, a| (pu, -pu - a * pr))?;
    Ok((data, field))
}

/// Scri data to data on t = 0 by the backward characteristic solve.
pub fn trace_t_plus_0(theta: &ScriProfile, b: &CoeffB, setup: &ScatterSetup) -> Result<SigmaData> {
    Ok(trace_t_plus_0_field(theta, b, setup)?.0)
}

/// Past-scri data (on the reflected lattice) to data on t = 0 by reflection.
pub fn trace_t_minus_0(theta_minus: &ScriProfile, b: &CoeffB, setup: &ScatterSetup) -> Result<SigmaData> {
    if !b.is_static() {
        return Err(Error::Domain("the reflection route needs a static b".into()));
    }
    Ok(mirror(&trace_t_plus_0(theta_minus, b, setup)?, setup.goursat.params.m))
}

/// The same map through the direct solve in the (v, R) chart.
pub fn trace_t_minus_0_direct(theta_minus: &ScriProfile, b: &CoeffB, setup: &ScatterSetup) -> Result<SigmaData> {
    setup.validate()?;
    // theta(v) on v_i = -u_max + i du is theta_minus at u = -v_i
    let n = theta_minus.len();
    let theta_v: Vec<f64> = (0..n).map(|i| theta_minus.values[n - 1 - i]).collect();
    let field = nullgrid::solve_past_direct(&theta_v, b, &setup.goursat)?;
    // (v, R): psi_t = psi_v, psi_r* = psi_v - a psi_R
    read_slice(&field, setup, |rs| rs, |pv, pr, a| (pv, pv - a * pr))
}

/// Diagnostics of one forward trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub u_c: f64,
    pub r_ext: f64,
    pub flagged: bool,
    pub max_edge_value: f64,
    /// Relative L2 difference between the two cones, when checked.
    pub cone_difference: Option<f64>,
    pub picard_ratio: Option<f64>,
}

/// T_0^+ with its diagnostics.
pub fn trace_t0_plus_report(data: &SigmaData, b: &CoeffB, setup: &ScatterSetup) -> Result<(ScriProfile, ForwardReport)> {
    setup.validate()?;
    let p = &setup.goursat.params;
    let du = setup.du();
    let cones = setup.cones();
    let u_far = cones.iter().copied().fold(f64::MAX, f64::min);
    let state = data.to_cauchy(p.m)?;
    for k in 0..state.len() {
        if state.rstar(k) >= -setup.u_c() && (state.psi[k].abs().max(state.pi[k].abs()) > setup.goursat.worldtube_tol) {
            return Err(Error::ConeOutsideDomain(format!("data reach r* = {} beyond the extraction cone", state.rstar(k))));
        }
    }
    let t_end = p.u_max - u_far;
    let opts = CauchyOptions { courant: setup.courant, contamination_tol: setup.contamination_tol, probes: cones.iter().map(|u| -u).collect(), ..CauchyOptions::default() };
    let run = cauchygrid::evolve_cauchy(&state, b, p, t_end, &opts)?;

    let mut profiles = vec![];
    for (c, &u_c) in cones.iter().enumerate() {
        let nu = ((p.u_max - u_c) / du).round() as usize;
        let tube: Vec<f64> = (0..=nu).map(|i| run.probes[c].value(i as f64 * du)).collect();
        let r_ext = chart::rinv_of_rstar(-u_c, p.m)?;
        let field = nullgrid::transport_from_worldtube(&tube, u_c, du, r_ext, setup.goursat.grid.nr, b, &setup.goursat)?;
        let skip = nu - setup.goursat.grid.nu;
        let values: Vec<f64> = (skip..=nu).map(|i| field.at(i, 0)).collect();
        profiles.push((values, r_ext));
    }
    let values = profiles[0].0.clone();
    let cone_difference = profiles.get(1).map(|(v2, _)| {
        let num: f64 = values.iter().zip(v2).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = values.iter().map(|a| a * a).sum();
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            num.sqrt()
        }
    });
    if let Some(diff) = cone_difference {
        if diff > setup.extraction_tol {
            return Err(Error::ExtractionInconsistency { diff, tol: setup.extraction_tol });
        }
    }
    let profile = ScriProfile::new(data.l, p.u_min, du, values, (p.u_min, p.u_max))?;
    let report = ForwardReport { u_c: cones[0], r_ext: profiles[0].1, flagged: run.flagged, max_edge_value: run.max_edge_value, cone_difference, picard_ratio: None };
    Ok((profile, report))
}

/// Data on t = 0 to the scri trace on [u_min, u_max].
pub fn trace_t0_plus(data: &SigmaData, b: &CoeffB, setup: &ScatterSetup) -> Result<ScriProfile> {
    Ok(trace_t0_plus_report(data, b, setup)?.0)
}

/// Data on t = 0 to the past-scri trace on the reflected lattice.
pub fn trace_t0_minus(data: &SigmaData, b: &CoeffB, setup: &ScatterSetup) -> Result<ScriProfile> {
    if !b.is_static() {
        return Err(Error::Domain("the reflection route needs a static b".into()));
    }
    trace_t0_plus(&mirror(data, setup.goursat.params.m), b, setup)
}

/// S = T_0^+ o T_-^0.
pub fn scattering_operator(theta_minus: &ScriProfile, b: &CoeffB, setup: &ScatterSetup) -> Result<ScriProfile> {
    trace_t0_plus(&trace_t_minus_0(theta_minus, b, setup)?, b, setup)
}

/// S^-1 = T_0^- o T_+^0; the input is first closed inside the support margin.
pub fn scattering_inverse(theta_plus: &ScriProfile, b: &CoeffB, setup: &ScatterSetup) -> Result<ScriProfile> {
    let closed = close_support(theta_plus, setup.support_margin)?;
    trace_t0_minus(&trace_t_plus_0(&closed, b, setup)?, b, setup)
}

/// Relative weighted H1 distance between two profiles on the same lattice.
pub fn relative_h1(a: &ScriProfile, reference: &ScriProfile) -> f64 {
    let d: Vec<f64> = a.values.iter().zip(&reference.values).map(|(x, y)| x - y).collect();
    let num = energy::h1_scri_norm_values(a.l, a.du, a.u0, &d);
    let den = reference.h1;
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Relative L2 error of a profile against samples of an exact one.
pub fn relative_l2(values: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = values.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Interpolates a profile at arbitrary u.
pub fn profile_at(theta: &ScriProfile, u: f64) -> f64 {
    interp::interp1(&theta.values, theta.u0, theta.du, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::ChartParams;
    use crate::nullgrid::{bump, NullGrid};

    fn flat(n: usize) -> ScatterSetup {
        let params = ChartParams { m: 0.0, u_min: -36.0, u_max: -4.0, r_max: 0.05, eps: 0.1, u0: -10.0 };
        ScatterSetup::new(GoursatSetup::new(params, NullGrid { nu: n, nr: n }, 0))
    }

    fn schw(nu: usize, nr: usize, l: u32) -> ScatterSetup {
        let params = ChartParams { m: 1.0, u_min: -200.0, u_max: -100.0, r_max: 0.01, eps: 0.1, u0: -120.0 };
        ScatterSetup::new(GoursatSetup::new(params, NullGrid { nu, nr }, l))
    }

    fn profile(s: &ScatterSetup, a: f64, b: f64, amp: f64) -> ScriProfile {
        let g = &s.goursat;
        ScriProfile::from_fn(g.l, g.params.u_min, g.du(), g.grid.nu + 1, (a, b), |u| bump(u, a, b, amp)).unwrap()
    }

    fn gaussian_pulse(s: &ScatterSetup) -> SigmaData {
        let (r0, h, n) = s.sigma_lattice();
        let f = |x: f64| (-(x - 20.0f64).powi(2) / 4.0).exp();
        let df = |x: f64| -(x - 20.0) / 2.0 * f(x);
        let st = CauchyState::from_fn(0, r0, h, n, f, |x| -df(x));
        SigmaData::from_cauchy(&st, 0.0).unwrap()
    }

    #[test]
    fn mirror_is_an_involution() {
        let s = schw(100, 16, 1);
        let d = trace_t_plus_0(&profile(&s, -170.0, -130.0, 1.0), &CoeffB::zero(), &s).unwrap();
        let mm = mirror(&mirror(&d, 1.0), 1.0);
        assert!(mm.rel_diff(&d) < 1e-15);
        let z = SigmaData::zeros(0, 0.0, 1.0, 10);
        assert_eq!(mirror(&z, 1.0), z);
    }

    #[test]
    fn zero_maps_to_zero() {
        let s = schw(100, 16, 0);
        let z = ScriProfile::zero(0, -200.0, 1.0, 101);
        let d = trace_t_plus_0(&z, &CoeffB::constant(1.0), &s).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        let back = trace_t0_plus(&d, &CoeffB::constant(1.0), &s).unwrap();
        assert!(back.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_pulse_reaches_scri() {
        let s = flat(512);
        let out = trace_t0_plus(&gaussian_pulse(&s), &CoeffB::zero(), &s).unwrap();
        let exact: Vec<f64> = (0..out.len()).map(|i| (-(-out.u(i) - 20.0f64).powi(2) / 4.0).exp()).collect();
        let e = relative_l2(&out.values, &exact);
        assert!(e < 1e-3, "{e}");
    }

    #[test]
    fn flat_backward_trace_is_the_pulse() {
        let s = flat(512);
        let g = &s.goursat;
        let th = ScriProfile::from_fn(0, g.params.u_min, g.du(), g.grid.nu + 1, (-32.0, -22.0), |u| bump(u, -32.0, -22.0, 1.0)).unwrap();
        let d = trace_t_plus_0(&th, &CoeffB::zero(), &s).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..d.len() {
            let rs = d.rstar(k);
            if rs > 20.0 && rs < 36.0 - s.taper_width {
                worst = worst.max((d.theta[k] - bump(-rs, -32.0, -22.0, 1.0)).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn mirror_matches_direct_past_solve() {
        let s = schw(200, 24, 2);
        let th = profile(&s, -170.0, -130.0, 0.5);
        let b = CoeffB::cutoff(1.0, 0.003, 0.006);
        let a = trace_t_minus_0(&th, &b, &s).unwrap();
        let d = trace_t_minus_0_direct(&th, &b, &s).unwrap();
        assert!(a.rel_diff(&d) < 1e-12, "{}", a.rel_diff(&d));
    }

    #[test]
    fn forward_backward_composition_returns_the_profile() {
        let err = |k: usize| {
            let s = schw(400 << k, 48 << k, 0);
            let th = profile(&s, -170.0, -130.0, 1.0);
            let d = trace_t_plus_0(&th, &CoeffB::zero(), &s).unwrap();
            relative_h1(&trace_t0_plus(&d, &CoeffB::zero(), &s).unwrap(), &th)
        };
        let (e0, e1) = (err(0), err(1));
        assert!(e1 < 2e-2 && e1 < 0.5 * e0, "{e0} {e1}");
    }

    #[test]
    fn linear_scattering_is_linear() {
        let s = schw(100, 16, 0);
        let b = CoeffB::zero();
        let t1 = profile(&s, -180.0, -150.0, 1.0);
        let t2 = profile(&s, -160.0, -120.0, -0.7);
        let sum = t1.combine(&t2, |a, b| a + b).unwrap();
        let (s1, s2, s12) = (scattering_operator(&t1, &b, &s).unwrap(), scattering_operator(&t2, &b, &s).unwrap(), scattering_operator(&sum, &b, &s).unwrap());
        let scale = s12.values.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        let err = (0..s12.len()).map(|i| (s12.values[i] - s1.values[i] - s2.values[i]).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10 * scale.max(1e-300), "{err} {scale}");
    }

    #[test]
    fn cone_choice_does_not_matter() {
        let mut s = flat(256);
        s.check_shift = Some(16);
        let (_, rep) = trace_t0_plus_report(&gaussian_pulse(&s), &CoeffB::zero(), &s).unwrap();
        assert!(rep.cone_difference.unwrap() < 1e-3);
    }

    #[test]
    fn data_beyond_the_cone_are_refused() {
        let s = flat(128);
        let (r0, h, n) = s.sigma_lattice();
        let st = CauchyState::from_fn(0, r0, h, n, |x| (-(x - 40.0f64).powi(2)).exp(), |_| 0.0);
        let d = SigmaData::from_cauchy(&st, 0.0).unwrap();
        assert!(matches!(trace_t0_plus(&d, &CoeffB::zero(), &s), Err(Error::ConeOutsideDomain(_))));
    }
}
