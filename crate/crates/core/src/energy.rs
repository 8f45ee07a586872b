//! Energies of the Morawetz current T^a T_ab on the hypersurfaces of the chart,
//! the error term, the weighted H1 norm on scri, and the Stokes / Gronwall audit.
//!
//! Densities are per unit solid angle for a single mode; angular gradients enter
//! as l(l+1) psi^2. Assembled energies carry the 4 pi of the mode normalization.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{self, ChartParams, ChartPoint};
use crate::coeff::CoeffB;
use crate::error::{Error, Result};
use crate::interp;
use crate::nullgrid::{ChartTag, ModeField, ScriProfile};

/// psi and its first derivatives at one point of the (u, R) chart; `ll` = l(l+1).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub psi: f64,
    pub psi_u: f64,
    pub psi_r: f64,
    pub ll: f64,
}

impl Jet {
    /// T psi = u^2 psi_u - 2 (1 + uR) psi_R.
    pub fn morawetz(&self, u: f64, rr: f64) -> f64 {
        u * u * self.psi_u - 2.0 * (1.0 + u * rr) * self.psi_r
    }

    fn potential(&self, b: f64) -> f64 {
        0.5 * self.ll * self.psi * self.psi + 0.5 * self.psi * self.psi + 0.25 * b * self.psi.powi(4)
    }
}

/// Coefficient of du ^ domega (flux through R = const pieces).
pub fn integrand_du(j: &Jet, u: f64, rr: f64, m: f64, b: f64) -> f64 {
    let a = rr * rr * (1.0 - 2.0 * m * rr);
    let x = u * rr;
    u * u * j.psi_u * j.psi_u + a * u * u * j.psi_u * j.psi_r - (1.0 + x) * a * j.psi_r * j.psi_r + 2.0 * (1.0 + x) * j.potential(b)
}

/// Restriction to S_u, coefficient of dR ^ domega.
pub fn integrand_su(j: &Jet, u: f64, rr: f64, m: f64, b: f64) -> f64 {
    let x = u * rr;
    0.5 * ((2.0 + x).powi(2) - 2.0 * m * rr.powi(3) * u * u) * j.psi_r * j.psi_r + u * u * j.potential(b)
}

/// Restriction to H_s written against du ^ domega (dR = R^2 (1 - 2mR) du / s on the leaf).
pub fn integrand_hs(j: &Jet, u: f64, rr: f64, s: f64, m: f64, b: f64) -> f64 {
    let a = rr * rr * (1.0 - 2.0 * m * rr);
    integrand_du(j, u, rr, m, b) + a / s * integrand_su(j, u, rr, m, b)
}

/// Restriction to scri, coefficient of du ^ domega.
pub fn integrand_scri(j: &Jet, u: f64, b: f64) -> f64 {
    u * u * j.psi_u * j.psi_u + j.ll * j.psi * j.psi + j.psi * j.psi + 0.5 * b * j.psi.powi(4)
}

/// Positive reference density u^2 psi_u^2 + (R/|u|) psi_R^2 + |grad|^2 + psi^2/2 + b psi^4/4.
pub fn reference_hs(j: &Jet, u: f64, rr: f64, b: f64) -> f64 {
    u * u * j.psi_u * j.psi_u + rr / u.abs() * j.psi_r * j.psi_r + j.ll * j.psi * j.psi + 0.5 * j.psi * j.psi + 0.25 * b * j.psi.powi(4)
}

/// Divergence of the current: half the Killing form on d_R psi, the curvature-weighted
/// psi T psi, and (T b) psi^4 / 4.
pub fn error_integrand(j: &Jet, u: f64, rr: f64, m: f64, tb: f64) -> f64 {
    0.5 * chart::killing_form_rr(u, rr, m) * j.psi_r * j.psi_r + (1.0 - 2.0 * m * rr) * j.psi * j.morawetz(u, rr) + 0.25 * tb * j.psi.powi(4)
}

/// Slice density in an adapted frame: f = T/|T| with derivative `f_phi`, tangent
/// orthonormal derivatives `e_phi`, non-orthogonality weights delta_i = g(f, e_i),
/// and beta^2 = 1 + sum delta_i^2. Multiplies e_1 ^ e_2 ^ e_3.
pub fn integrand_slice_frame(f_phi: f64, e_phi: [f64; 3], delta: [f64; 3], norm_t: f64, phi: f64, b: f64) -> f64 {
    let beta2 = 1.0 + delta.iter().map(|d| d * d).sum::<f64>();
    let beta = beta2.sqrt();
    let e2: f64 = e_phi.iter().map(|e| e * e).sum();
    let d: f64 = delta.iter().zip(&e_phi).map(|(x, y)| x * y).sum();
    norm_t / beta * (0.5 * f_phi * f_phi - 0.5 * d * d + 0.5 * beta2 * e2 + beta2 * (0.5 * phi * phi + 0.25 * b * phi.powi(4)))
}

/// Slice density on {t = const} in the chart, per dr* domega, from (psi, psi_t, psi_r*).
pub fn integrand_slice_chart(psi: f64, psi_t: f64, psi_rs: f64, ll: f64, u: f64, rr: f64, m: f64, b: f64) -> f64 {
    let a = rr * rr * (1.0 - 2.0 * m * rr);
    let j = Jet { psi, psi_u: psi_t, psi_r: -(psi_t + psi_rs) / a, ll };
    a * integrand_su(&j, u, rr, m, b) + integrand_du(&j, u, rr, m, b)
}

/// The same slice density assembled through the frame form (radial e_1, angular e_2, e_3).
pub fn integrand_slice_via_frame(psi: f64, psi_t: f64, psi_rs: f64, ll: f64, u: f64, rr: f64, m: f64, b: f64) -> f64 {
    let a = rr * rr * (1.0 - 2.0 * m * rr);
    let sa = a.sqrt();
    let ca = u * u + 2.0 * (1.0 + u * rr) / a;
    let cb = 2.0 * (1.0 + u * rr) / a;
    let n = (a * (ca * ca - cb * cb)).sqrt();
    let f_phi = (ca * psi_t + cb * psi_rs) / n;
    let delta = [-sa * cb / n, 0.0, 0.0];
    // Angular gradient of one mode, split evenly over the two angular legs.
    let ang = (0.5 * ll).sqrt() * psi.abs();
    let e_phi = [psi_rs / sa, ang, ang];
    integrand_slice_frame(f_phi, e_phi, delta, n, psi, b) * sa
}

/// sqrt(2 * 4pi * int (u^2 theta'^2 / 4 + l(l+1) theta^2 + theta^2) du) by the trapezoid rule.
pub fn h1_scri_norm_values(l: u32, du: f64, u0: f64, values: &[f64]) -> f64 {
    let n = values.len();
    if n < 3 {
        return 0.0;
    }
    let ll = (l * (l + 1)) as f64;
    let d = |i: usize| {
        if i == 0 {
            (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * du)
        } else if i == n - 1 {
            (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * du)
        } else {
            (values[i + 1] - values[i - 1]) / (2.0 * du)
        }
    };
    let mut acc = 0.0;
    for i in 0..n {
        let u = u0 + i as f64 * du;
        let th = values[i];
        let dt = d(i);
        let wt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += wt * (0.25 * u * u * dt * dt + ll * th * th + th * th);
    }
    (8.0 * PI * acc * du).sqrt()
}

pub fn h1_scri_norm(theta: &ScriProfile) -> f64 {
    h1_scri_norm_values(theta.l, theta.du, theta.u0, &theta.values)
}

/// Constants of the two-sided comparison between the H_s energy and the reference energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConstants {
    pub eps: f64,
    pub c_upper: f64,
    /// min(1/4, 1 - 2 eps - eps^2) and, if supplied, the user's bound for the unstated branch.
    pub c_known: f64,
    /// False when the branch containing the unstated polynomial was omitted.
    pub p_branch_included: bool,
}

pub fn equivalence_constants(eps: f64, p_branch: Option<f64>) -> EquivalenceConstants {
    let e1 = 1.0 + eps;
    let c_upper = [1.0, e1.powi(3) / 3.0, e1 * ((3.0 + eps * eps).powi(2) / 2.0 + e1), (1.0 - eps) * e1 + 2.0]
        .into_iter()
        .fold(f64::MIN, f64::max);
    let mut c_known = 0.25_f64.min(1.0 - 2.0 * eps - eps * eps);
    if let Some(p) = p_branch {
        c_known = c_known.min(p);
    }
    EquivalenceConstants { eps, c_upper, c_known, p_branch_included: p_branch.is_some() }
}

/// One leaf of the tau foliation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafEnergy {
    pub s: f64,
    pub tau: f64,
    pub e_hs: f64,
    pub reference: f64,
    pub ratio: f64,
    /// Bulk term accumulated between tau = 0 and this leaf.
    pub error_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_sigma0_far: f64,
    pub e_su0: f64,
    pub e_scri_u0: f64,
    pub leaves: Vec<LeafEnergy>,
    /// -int error over the region, so that E(Sigma_0) - E(scri) - E(S_u0) = bulk.
    pub bulk: f64,
    pub error_integral: f64,
    pub stokes_residual: f64,
    pub stokes_relative: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    pub envelope: EquivalenceConstants,
    pub envelope_ok: bool,
    /// Which side broke and at which leaf, when the envelope fails.
    pub envelope_witness: Option<String>,
    pub gronwall_constant: f64,
}

/// Audit options; `leaves` is the number of tau intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub leaves: usize,
    pub gauss_points: usize,
    pub envelope_tol: f64,
    pub p_branch: Option<f64>,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { leaves: 32, gauss_points: 4, envelope_tol: 1e-3, p_branch: None }
    }
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        2 => (vec![-0.5773502691896257, 0.5773502691896257], vec![1.0, 1.0]),
        3 => (vec![-0.7745966692414834, 0.0, 0.7745966692414834], vec![0.5555555555555556, 0.8888888888888888, 0.5555555555555556]),
        _ => (
            vec![-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526],
            vec![0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538],
        ),
    }
}

/// Jets of a characteristic field at lattice u-levels and arbitrary R.
struct JetSampler<'a> {
    field: &'a ModeField,
    psi_u: Vec<f64>,
    ll: f64,
}

impl<'a> JetSampler<'a> {
    fn new(field: &'a ModeField) -> Self {
        JetSampler { field, psi_u: field.dx_field(), ll: (field.l * (field.l + 1)) as f64 }
    }

    fn at_level(&self, i: usize, rr: f64) -> Jet {
        let f = self.field;
        let (j0, w) = interp::stencil(f.ny, f.y0, f.dy, rr, 4);
        let row = i * f.ny + j0;
        let mut jet = Jet { ll: self.ll, ..Jet::default() };
        for (k, wk) in w.iter().enumerate() {
            jet.psi += wk * f.values[row + k];
            jet.psi_u += wk * self.psi_u[row + k];
            jet.psi_r += wk * f.deriv[row + k];
        }
        jet
    }

    fn at(&self, u: f64, rr: f64) -> Jet {
        let f = self.field;
        let (i0, w) = interp::stencil(f.nx, f.x0, f.dx, u, 4);
        let mut jet = Jet { ll: self.ll, ..Jet::default() };
        for (k, wk) in w.iter().enumerate() {
            let j = self.at_level(i0 + k, rr);
            jet.psi += wk * j.psi;
            jet.psi_u += wk * j.psi_u;
            jet.psi_r += wk * j.psi_r;
        }
        jet
    }
}

/// Trapezoid over the lattice nodes in [x_lo, x_hi] plus the partial last cell.
fn trapezoid_to(nodes: &[(f64, f64)], x_end: f64, end_value: f64) -> f64 {
    let mut acc = 0.0;
    for w in nodes.windows(2) {
        acc += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    if let Some(&(x, y)) = nodes.last() {
        if x_end > x {
            acc += 0.5 * (x_end - x) * (y + end_value);
        }
    }
    acc
}

/// Quadrature of the Morawetz energies on Sigma_0, S_u0, scri and the tau leaves of a solved
/// characteristic field, plus the bulk error integral and the Gronwall fit.
pub fn stokes_audit(field: &ModeField, b: &CoeffB, params: &ChartParams, opts: &AuditOptions) -> Result<EnergyReport> {
    params.validate()?;
    if field.chart != ChartTag::Characteristic {
        return Err(Error::Domain("stokes audit needs a (u, R) field".into()));
    }
    let m = params.m;
    let u0 = params.u0;
    let r_top = field.y(field.ny - 1);
    let u_hi = field.x(field.nx - 1);
    if !(u0 > field.x0 && u0 <= u_hi) {
        return Err(Error::FoliationOutsideDomain(format!("u0 = {u0} is outside the lattice [{}, {u_hi}]", field.x0)));
    }
    let r_sigma_u0 = chart::rinv_of_rstar(u0.abs(), m)?;
    if r_sigma_u0 > r_top {
        return Err(Error::FoliationOutsideDomain(format!(
            "Sigma_0 meets u = u0 at R = {r_sigma_u0:.6e}, above the lattice top {r_top:.6e}"
        )));
    }
    let sampler = JetSampler::new(field);
    let n_in = (0..field.nx).take_while(|&i| field.x(i) <= u0 + 1e-12 * u0.abs()).count();
    let env = equivalence_constants(params.eps, opts.p_branch);
    let b_at = |u: f64, rr: f64| b.value(u, rr);

    // Leaf R(u) for u_i <= u0; s = 0 is scri.
    let leaf = |s: f64| -> Result<(f64, f64)> {
        let mut e_nodes = Vec::with_capacity(n_in);
        let mut r_nodes = Vec::with_capacity(n_in);
        for i in 0..n_in {
            let u = field.x(i);
            let (e, r) = if s == 0.0 {
                let j = sampler.at_level(i, 0.0);
                (integrand_scri(&j, u, b_at(u, 0.0)), reference_hs(&j, u, 0.0, b_at(u, 0.0)))
            } else {
                let rr = chart::leaf_rinv(u, s, m)?;
                let j = sampler.at_level(i, rr);
                let bv = b_at(u, rr);
                (integrand_hs(&j, u, rr, s, m, bv), reference_hs(&j, u, rr, bv))
            };
            e_nodes.push((u, e));
            r_nodes.push((u, r));
        }
        let (e_end, r_end) = if s == 0.0 {
            let j = sampler.at(u0, 0.0);
            (integrand_scri(&j, u0, b_at(u0, 0.0)), reference_hs(&j, u0, 0.0, b_at(u0, 0.0)))
        } else {
            let rr = chart::leaf_rinv(u0, s, m)?;
            let j = sampler.at(u0, rr);
            let bv = b_at(u0, rr);
            (integrand_hs(&j, u0, rr, s, m, bv), reference_hs(&j, u0, rr, bv))
        };
        Ok((4.0 * PI * trapezoid_to(&e_nodes, u0, e_end), 4.0 * PI * trapezoid_to(&r_nodes, u0, r_end)))
    };

    let n_leaves = opts.leaves.max(2);
    let taus: Vec<f64> = (0..=n_leaves).map(|k| 2.0 * k as f64 / n_leaves as f64).collect();
    let leaf_vals: Vec<(f64, f64)> = taus
        .par_iter()
        .map(|&tau| leaf(chart::s_of_tau(tau)?))
        .collect::<Result<Vec<_>>>()?;

    // Bulk: int dtau int du error |V^R| on each tau interval by Gauss-Legendre.
    let (gx, gw) = gauss_legendre(opts.gauss_points);
    let bulk_piece = |k: usize| -> Result<f64> {
        let (t0, t1) = (taus[k], taus[k + 1]);
        let mut acc = 0.0;
        for (x, wg) in gx.iter().zip(&gw) {
            let tau = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * x;
            let s = chart::s_of_tau(tau)?;
            let mut nodes = Vec::with_capacity(n_in);
            let eval = |u: f64, jet: Jet, rr: f64| -> Result<f64> {
                let vr = chart::identifying_field(&ChartPoint::new(u, rr), params)?;
                let tb = b.morawetz_derivative(u, rr);
                Ok(error_integrand(&jet, u, rr, m, tb) * vr)
            };
            for i in 0..n_in {
                let u = field.x(i);
                let rr = chart::leaf_rinv(u, s, m)?;
                nodes.push((u, eval(u, sampler.at_level(i, rr), rr)?));
            }
            let rr = chart::leaf_rinv(u0, s, m)?;
            let end = eval(u0, sampler.at(u0, rr), rr)?;
            acc += 0.5 * (t1 - t0) * wg * trapezoid_to(&nodes, u0, end);
        }
        Ok(4.0 * PI * acc)
    };
    let pieces: Vec<f64> = (0..n_leaves).into_par_iter().map(bulk_piece).collect::<Result<Vec<_>>>()?;

    // S_u0 from R = 0 to Sigma_0.
    let mut su_nodes = vec![];
    for j in 0..field.ny {
        let rr = field.y(j);
        if rr > r_sigma_u0 {
            break;
        }
        let jet = sampler.at(u0, rr);
        su_nodes.push((rr, integrand_su(&jet, u0, rr, m, b_at(u0, rr))));
    }
    let jet_end = sampler.at(u0, r_sigma_u0);
    let e_su0 = 4.0 * PI * trapezoid_to(&su_nodes, r_sigma_u0, integrand_su(&jet_end, u0, r_sigma_u0, m, b_at(u0, r_sigma_u0)));

    let e_sigma0 = leaf_vals[0].0;
    let e_scri = leaf_vals[n_leaves].0;
    let error_integral: f64 = pieces.iter().sum();
    let bulk = -error_integral;
    let residual = (e_sigma0 - e_scri - e_su0 - bulk).abs();

    let mut leaves = Vec::with_capacity(n_leaves + 1);
    let mut so_far = 0.0;
    let (mut c_lo, mut c_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut witness = None;
    let mut gronwall = f64::NEG_INFINITY;
    for (k, &tau) in taus.iter().enumerate() {
        if k > 0 {
            so_far += pieces[k - 1];
        }
        let (e, r) = leaf_vals[k];
        let ratio = if r > 0.0 { e / r } else { f64::NAN };
        if k < n_leaves && r > 0.0 {
            c_lo = c_lo.min(ratio);
            c_hi = c_hi.max(ratio);
            if witness.is_none() {
                if ratio < env.c_known * (1.0 - opts.envelope_tol) {
                    witness = Some(format!("lower side broken at tau = {tau}: ratio {ratio:.6}"));
                } else if ratio > env.c_upper * (1.0 + opts.envelope_tol) {
                    witness = Some(format!("upper side broken at tau = {tau}: ratio {ratio:.6}"));
                }
            }
        }
        if k > 0 && e_sigma0 > 0.0 && e > 0.0 {
            gronwall = gronwall.max((e / e_sigma0).ln() / tau);
        }
        leaves.push(LeafEnergy { s: chart::s_of_tau(tau)?, tau, e_hs: e, reference: r, ratio, error_so_far: so_far });
    }
    if !gronwall.is_finite() {
        gronwall = 0.0;
    }
    if !c_lo.is_finite() {
        c_lo = 0.0;
        c_hi = 0.0;
    }
    Ok(EnergyReport {
        e_sigma0_far: e_sigma0,
        e_su0,
        e_scri_u0: e_scri,
        leaves,
        bulk,
        error_integral,
        stokes_residual: residual,
        stokes_relative: if e_sigma0 > 0.0 { residual / e_sigma0 } else { 0.0 },
        c_lower: c_lo,
        c_upper: c_hi,
        envelope: env,
        envelope_ok: witness.is_none(),
        envelope_witness: witness,
        gronwall_constant: gronwall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(psi: f64, psi_u: f64, psi_r: f64, ll: f64) -> Jet {
        Jet { psi, psi_u, psi_r, ll }
    }

    #[test]
    fn zero_jet_gives_zero() {
        let z = Jet::default();
        assert_eq!(integrand_hs(&z, -10.0, 0.01, 0.5, 1.0, 1.0), 0.0);
        assert_eq!(integrand_su(&z, -10.0, 0.01, 1.0, 1.0), 0.0);
        assert_eq!(integrand_scri(&z, -10.0, 1.0), 0.0);
        assert_eq!(error_integrand(&z, -10.0, 0.01, 1.0, 0.3), 0.0);
    }

    #[test]
    fn printed_examples() {
        // pure d_u jet on scri
        assert_eq!(integrand_du(&jet(0.0, 2.0, 0.0, 0.0), -3.0, 0.0, 1.0, 0.0), 36.0);
        // S_u coefficient at uR = -1, m = 0
        assert_eq!(integrand_su(&jet(0.0, 0.0, 1.0, 0.0), -10.0, 0.1, 0.0, 0.0), 0.5);
        // scri block
        let j = jet(0.5, 0.25, 7.0, 6.0);
        assert!((integrand_scri(&j, -4.0, 2.0) - (1.0 + 1.5 + 0.25 + 0.0625)).abs() < 1e-15);
        // m = 0 error term is psi T psi
        let j = jet(0.3, -0.2, 0.7, 2.0);
        assert!((error_integrand(&j, -5.0, 0.1, 0.0, 0.0) - 0.3 * j.morawetz(-5.0, 0.1)).abs() < 1e-15);
        assert!((chart::killing_form_rr(-5.0, 0.1, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn error_vanishes_on_harmonic_static_data() {
        let j = jet(0.0, 0.0, 0.0, 0.0);
        assert_eq!(error_integrand(&j, -4.0, 0.2, 0.0, 0.0), 0.0);
        // T psi = 0 and m = 0 with b constant: all three summands vanish
        let (u, r) = (-4.0_f64, 0.1_f64);
        let psi_r = 0.3;
        let psi_u = 2.0 * (1.0 + u * r) * psi_r / (u * u);
        let j = jet(1.0, psi_u, psi_r, 0.0);
        assert!(j.morawetz(u, r).abs() < 1e-15);
        assert!(error_integrand(&j, u, r, 0.0, 0.0).abs() < 1e-15);
    }

    #[test]
    fn constants_at_eps_tenth() {
        let c = equivalence_constants(0.1, None);
        assert!((c.c_upper - 6.193055).abs() < 1e-6);
        assert_eq!(c.c_known, 0.25);
        assert!(!c.p_branch_included);
        let c0 = equivalence_constants(1e-9, Some(1.0 / 6.0));
        assert!((c0.c_upper - 5.5).abs() < 1e-6);
        assert!((c0.c_known - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_norm_closed_form() {
        let du = 1e-3;
        let n = 12001;
        let u0 = -6.0;
        let v: Vec<f64> = (0..n).map(|i| (-(u0 + i as f64 * du).powi(2)).exp()).collect();
        let got = h1_scri_norm_values(0, du, u0, &v);
        // int u^4 e^{-2u^2} = 3 sqrt(pi/2) / 16, int e^{-2u^2} = sqrt(pi/2)
        let q = (PI / 2.0).sqrt();
        let exact = (8.0 * PI * (3.0 * q / 16.0 + q)).sqrt();
        assert!((got - exact).abs() < 1e-6 * exact, "{got} vs {exact}");
    }

    #[test]
    fn slice_routes_agree() {
        for &(psi, pt, pr, ll, u, rr, m, b) in &[
            (0.3, -0.2, 0.9, 2.0, -50.0, 0.012, 1.0, 0.4),
            (1.1, 0.5, -0.4, 0.0, -130.0, 0.007, 1.0, 0.0),
            (-0.7, 2.0, 1.3, 6.0, -20.0, 0.04, 0.0, 1.0),
        ] {
            let c = integrand_slice_chart(psi, pt, pr, ll, u, rr, m, b);
            let f = integrand_slice_via_frame(psi, pt, pr, ll, u, rr, m, b);
            assert!((c - f).abs() < 1e-9 * c.abs().max(1.0), "{c} vs {f}");
        }
    }

    #[test]
    fn orthogonal_frame() {
        let v = integrand_slice_frame(0.5, [1.0, 0.2, -0.3], [0.0; 3], 3.0, 0.4, 2.0);
        let want = 3.0 * (0.125 + 0.5 * (1.0 + 0.04 + 0.09) + 0.08 + 0.5 * 0.0256);
        assert!((v - want).abs() < 1e-14);
    }
}
