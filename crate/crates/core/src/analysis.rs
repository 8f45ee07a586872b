//! Desk labs: Sobolev constants on shrinking balls, the cutoff density sequence,
//! Lipschitz ratios of the trace maps, the slowed-down Cauchy problem on scri and
//! the fixed-point recursion behind the Picard scheme.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cauchygrid::CauchyState;
use crate::chart::{self, ChartParams};
use crate::coeff::{smooth_step, CoeffB};
use crate::energy::{self, Jet};
use crate::interp;
use crate::error::{Error, Result};
use crate::nullgrid::{self, bump, Direction, GoursatSetup, NullGrid, ScriProfile};
use crate::scatter::{self, ScatterSetup, SigmaData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// Least-squares line through (log x, log y) or (x, y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub quantity: String,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual of the fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub name: String,
    pub parameter: String,
    pub sweep: Vec<f64>,
    pub columns: Vec<Column>,
    pub fit: Option<Fit>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl LabResult {
    fn new(name: &str, parameter: &str, sweep: Vec<f64>) -> Self {
        LabResult { name: name.into(), parameter: parameter.into(), sweep, columns: vec![], fit: None, checks: vec![], pass: false }
    }

    fn column(&mut self, name: &str, values: Vec<f64>) {
        self.columns.push(Column { name: name.into(), values });
    }

    fn check(&mut self, name: &str, measured: f64, bound: impl Into<String>, pass: bool) {
        self.checks.push(Check { name: name.into(), measured, bound: bound.into(), pass });
    }

    fn finish(mut self) -> Self {
        self.pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
        self
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn linear_fit(quantity: &str, x: &[f64], y: &[f64]) -> Fit {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Fit { quantity: quantity.into(), slope, intercept, residual }
}

pub fn loglog_fit(quantity: &str, x: &[f64], y: &[f64]) -> Fit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(quantity, &lx, &ly)
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

fn require_sweep(values: &[f64], what: &str) -> Result<()> {
    if values.len() < 5 {
        return Err(Error::Config(format!("{what} sweep needs at least 5 points")));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!("{what} sweep must be increasing")));
    }
    Ok(())
}

// ---------------------------------------------------------------- Sobolev

/// Radial test functions on the unit ball, rescaled to the ball of radius t.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestProfile {
    Constant,
    /// exp(1 - 1/(1 - rho^2)).
    Bump,
    /// 1 - rho^2 / 2.
    Parabola,
    /// cos(pi rho / 2).
    Cosine,
}

impl TestProfile {
    pub const ALL: [TestProfile; 4] = [TestProfile::Constant, TestProfile::Bump, TestProfile::Parabola, TestProfile::Cosine];

    /// (g, g') at rho in [0, 1].
    pub fn eval(self, rho: f64) -> (f64, f64) {
        match self {
            TestProfile::Constant => (1.0, 0.0),
            TestProfile::Bump => {
                if rho >= 1.0 {
                    return (0.0, 0.0);
                }
                let q = 1.0 - rho * rho;
                let g = (1.0 - 1.0 / q).exp();
                (g, -2.0 * rho / (q * q) * g)
            }
            TestProfile::Parabola => (1.0 - 0.5 * rho * rho, -rho),
            TestProfile::Cosine => ((0.5 * PI * rho).cos(), -0.5 * PI * (0.5 * PI * rho).sin()),
        }
    }
}

/// (L6 norm, unweighted H1 norm, weighted norm with t^-2 on the L2 part) on the ball of radius t.
pub fn ball_norms(profile: TestProfile, t: f64, panels: usize) -> (f64, f64, f64) {
    let l6 = simpson(|r| profile.eval(r / t).0.powi(6) * r * r, 0.0, t, panels);
    let grad = simpson(|r| (profile.eval(r / t).1 / t).powi(2) * r * r, 0.0, t, panels);
    let l2 = simpson(|r| profile.eval(r / t).0.powi(2) * r * r, 0.0, t, panels);
    let c = 4.0 * PI;
    ((c * l6).powf(1.0 / 6.0), (c * (grad + l2)).sqrt(), (c * (grad + l2 / (t * t))).sqrt())
}

/// L6 / H1 ratios on balls of radius t, the sup over `family` at each t, and the
/// weighted ratio of `weighted_profile`.
pub fn sobolev_cone_lab(t_values: &[f64], family: &[TestProfile], weighted_profile: TestProfile) -> Result<LabResult> {
    require_sweep(t_values, "t")?;
    if t_values[t_values.len() - 1] / t_values[0] < 10.0 * (1.0 - 1e-12) {
        return Err(Error::Config("t sweep must span at least one decade".into()));
    }
    if family.is_empty() {
        return Err(Error::Config("test family is empty".into()));
    }
    let panels = 4000;
    let mut lab = LabResult::new("sobolev", "t", t_values.to_vec());
    let sup: Vec<f64> = t_values
        .iter()
        .map(|&t| family.iter().map(|&p| {
            let (l6, h1, _) = ball_norms(p, t, panels);
            l6 / h1
        }).fold(0.0, f64::max))
        .collect();
    let weighted: Vec<f64> = t_values.iter().map(|&t| {
        let (l6, _, w) = ball_norms(weighted_profile, t, panels);
        l6 / w
    }).collect();
    let fit = loglog_fit("sup L6/H1 ratio", t_values, &sup);
    let band = weighted.iter().fold(0.0, |a: f64, b| a.max(*b)) / weighted.iter().fold(f64::MAX, |a, b| a.min(*b));
    let (unit, _, _) = ball_norms(TestProfile::Constant, 1.0, panels);
    let unit_ratio = unit / ball_norms(TestProfile::Constant, 1.0, panels).1;
    lab.check("slope", fit.slope, "-1 +/- 0.1", (fit.slope + 1.0).abs() <= 0.1);
    lab.check("weighted band", band, "<= 2", band <= 2.0);
    lab.check("constant at t = 1", unit_ratio, "(4 pi / 3)^(-1/3) to 1e-10", (unit_ratio - (4.0 * PI / 3.0).powf(-1.0 / 3.0)).abs() < 1e-10);
    lab.column("sup_ratio", sup);
    lab.column("weighted_ratio", weighted);
    lab.fit = Some(fit);
    Ok(lab.finish())
}

// ---------------------------------------------------------------- density

/// Cutoff profile: 0 on [0, 1/3], 1 on [1/2, inf), C-infinity in between.
pub fn cutoff_profile(x: f64) -> (f64, f64) {
    let y = 6.0 * x - 2.0;
    if y <= 0.0 || y >= 1.0 {
        return (smooth_step(y), 0.0);
    }
    let h = |s: f64| (-1.0 / s).exp();
    let (a, c) = (h(y), h(1.0 - y));
    let d = (a / (y * y) * c + a * c / ((1.0 - y) * (1.0 - y))) / ((a + c) * (a + c));
    (smooth_step(y), 6.0 * d)
}

/// ||1 - psi_n||^2 in H1 of the unit ball and the printed bound, psi_n(x) = f(n |x|).
pub fn density_terms(n: f64, panels: usize) -> (f64, f64) {
    let top = (0.5 / n).min(1.0);
    let l2 = simpson(|r| (1.0 - cutoff_profile(n * r).0).powi(2) * r * r, 0.0, top, panels);
    let grad = simpson(|r| (n * cutoff_profile(n * r).1).powi(2) * r * r, 0.0, top, panels);
    let flat = simpson(|r| (1.0 - cutoff_profile(n * r).0).powi(2), 0.0, top, panels);
    let sup_d = (0..=20000).map(|k| cutoff_profile(1.0 / 3.0 + k as f64 / 120000.0).1.abs()).fold(0.0, f64::max);
    (4.0 * PI * (l2 + grad), 4.0 * PI / 3.0 * (flat + sup_d * sup_d / n))
}

pub fn density_cutoff_lab(n_values: &[f64]) -> Result<LabResult> {
    require_sweep(n_values, "n")?;
    let mut lab = LabResult::new("density", "n", n_values.to_vec());
    let terms: Vec<(f64, f64)> = n_values.par_iter().map(|&n| density_terms(n, 4000)).collect();
    let norm: Vec<f64> = terms.iter().map(|t| t.0.sqrt()).collect();
    let bound: Vec<f64> = terms.iter().map(|t| t.1).collect();
    let monotone = norm.windows(2).all(|w| w[1] < w[0]);
    let worst = terms.iter().map(|(m, b)| m / b).fold(0.0, f64::max);
    let fit = loglog_fit("||1 - psi_n||", n_values, &norm);
    lab.check("monotone decrease", if monotone { 1.0 } else { 0.0 }, "strict", monotone);
    lab.check("printed bound", worst, "squared norm / bound <= 1 at every n", worst <= 1.0);
    lab.check("exponent", fit.slope, "-1/2 +/- 0.05", (fit.slope + 0.5).abs() <= 0.05);
    lab.column("norm", norm);
    lab.column("norm_sq", terms.iter().map(|t| t.0).collect());
    lab.column("bound", bound);
    lab.fit = Some(fit);
    Ok(lab.finish())
}

// ---------------------------------------------------------------- Lipschitz

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LipschitzMap {
    /// Slice data to scri: ||dT||^2_H1 / E(d data).
    T0Plus,
    /// Scri data to slice: E(d data) / ||d theta||^2_H1.
    TPlus0,
    /// Scri to scri through the scattering operator.
    Scattering,
}

/// Random smooth input described independently of the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub centre: f64,
    pub width: f64,
    pub amp: f64,
    /// Outgoing fraction of the time derivative for slice data.
    pub outgoing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzOptions {
    pub pairs: usize,
    pub seed: u64,
    /// Largest packet amplitude.
    pub radius: f64,
    /// Support window in u for scri data (slice data use r* = -u).
    pub window: (f64, f64),
    pub stability_tol: f64,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        LipschitzOptions { pairs: 20, seed: 7, radius: 0.1, window: (-190.0, -120.0), stability_tol: 0.15 }
    }
}

fn random_packets(rng: &mut ChaCha8Rng, opts: &LipschitzOptions, count: usize) -> Vec<Packet> {
    let (a, b) = opts.window;
    (0..count)
        .map(|_| {
            let width = rng.gen_range(0.15..0.3) * (b - a);
            let centre = rng.gen_range(a + 0.5 * width..b - 0.5 * width);
            Packet { centre, width, amp: rng.gen_range(-opts.radius..opts.radius), outgoing: rng.gen_range(0.0..1.0) }
        })
        .collect()
}

fn scri_input(packets: &[Packet], setup: &GoursatSetup, scale: f64) -> Result<ScriProfile> {
    let n = setup.grid.nu + 1;
    let lo = packets.iter().map(|p| p.centre - 0.5 * p.width).fold(f64::MAX, f64::min);
    let hi = packets.iter().map(|p| p.centre + 0.5 * p.width).fold(f64::MIN, f64::max);
    ScriProfile::from_fn(setup.l, setup.params.u_min, setup.du(), n, (lo, hi), |u| {
        scale * packets.iter().map(|p| bump(u, p.centre - 0.5 * p.width, p.centre + 0.5 * p.width, p.amp)).sum::<f64>()
    })
}

fn slice_input(packets: &[Packet], setup: &ScatterSetup, scale: f64) -> Result<SigmaData> {
    let (r0, h, n) = setup.sigma_lattice();
    // packets sit at r* = -u with Gaussian width a fifth of the bump width
    let g = |x: f64| -> (f64, f64) {
        packets.iter().fold((0.0, 0.0), |(v, d), p| {
            let w = 0.1 * p.width;
            let e = p.amp * scale * (-((x + p.centre) / w).powi(2)).exp();
            let de = -2.0 * (x + p.centre) / (w * w) * e;
            (v + e, d - (2.0 * p.outgoing - 1.0) * de)
        })
    };
    let st = CauchyState::from_fn(setup.goursat.l, r0, h, n, |x| g(x).0, |x| g(x).1);
    SigmaData::from_cauchy(&st, setup.goursat.params.m)
}

fn subtract_sigma(a: &SigmaData, b: &SigmaData) -> SigmaData {
    let mut d = a.clone();
    for k in 0..d.len() {
        d.theta[k] -= b.theta[k];
        d.xi[k] -= b.xi[k];
        d.psi_rs[k] -= b.psi_rs[k];
    }
    d
}

fn profile_diff(a: &ScriProfile, b: &ScriProfile) -> f64 {
    let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    energy::h1_scri_norm_values(a.l, a.du, a.u0, &d)
}

/// Lipschitz ratio of one pair of packet sets on one lattice.
fn pair_ratio(map: LipschitzMap, p1: &[Packet], p2: &[Packet], s1: f64, s2: f64, b: &CoeffB, setup: &ScatterSetup) -> Result<f64> {
    let m = setup.goursat.params.m;
    let zero = CoeffB::zero();
    match map {
        LipschitzMap::T0Plus => {
            let (d1, d2) = (slice_input(p1, setup, s1)?, slice_input(p2, setup, s2)?);
            let (o1, o2) = (scatter::trace_t0_plus(&d1, b, setup)?, scatter::trace_t0_plus(&d2, b, setup)?);
            let e = scatter::sigma_energy(&subtract_sigma(&d1, &d2), &zero, m)?;
            Ok(profile_diff(&o1, &o2).powi(2) / e)
        }
        LipschitzMap::TPlus0 => {
            let (t1, t2) = (scri_input(p1, &setup.goursat, s1)?, scri_input(p2, &setup.goursat, s2)?);
            let (o1, o2) = (scatter::trace_t_plus_0(&t1, b, setup)?, scatter::trace_t_plus_0(&t2, b, setup)?);
            let e = scatter::sigma_energy(&subtract_sigma(&o1, &o2), &zero, m)?;
            Ok(e / profile_diff(&t1, &t2).powi(2))
        }
        LipschitzMap::Scattering => {
            let (t1, t2) = (scri_input(p1, &setup.goursat, s1)?, scri_input(p2, &setup.goursat, s2)?);
            let (o1, o2) = (scatter::scattering_operator(&t1, b, setup)?, scatter::scattering_operator(&t2, b, setup)?);
            Ok(profile_diff(&o1, &o2).powi(2) / profile_diff(&t1, &t2).powi(2))
        }
    }
}

fn refined(setup: &ScatterSetup) -> ScatterSetup {
    let mut s = *setup;
    s.goursat.grid = NullGrid { nu: 2 * setup.goursat.grid.nu, nr: 2 * setup.goursat.grid.nr };
    s
}

/// Ratios over random pairs on `setup` and on the twice finer lattice, plus the
/// homogeneity test (theta, c theta) for c in {-1, 1/2, 2}.
pub fn lipschitz_lab(map: LipschitzMap, b: &CoeffB, setup: &ScatterSetup, opts: &LipschitzOptions) -> Result<LabResult> {
    if opts.pairs < 5 {
        return Err(Error::Config("Lipschitz lab needs at least 5 pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let pairs: Vec<(Vec<Packet>, Vec<Packet>)> = (0..opts.pairs).map(|_| (random_packets(&mut rng, opts, 2), random_packets(&mut rng, opts, 2))).collect();
    let fine = refined(setup);
    let eval = |s: &ScatterSetup| -> Result<Vec<f64>> { pairs.par_iter().map(|(a, c)| pair_ratio(map, a, c, 1.0, 1.0, b, s)).collect() };
    let base = eval(setup)?;
    let fine_r = eval(&fine)?;
    let name = match map {
        LipschitzMap::T0Plus => "lipschitz-t0plus",
        LipschitzMap::TPlus0 => "lipschitz-tplus0",
        LipschitzMap::Scattering => "lipschitz-scattering",
    };
    let mut lab = LabResult::new(name, "pair", (0..opts.pairs).map(|k| k as f64).collect());
    let max_b = base.iter().fold(0.0, |a: f64, v| a.max(*v));
    let max_f = fine_r.iter().fold(0.0, |a: f64, v| a.max(*v));
    let finite = base.iter().chain(&fine_r).all(|v| v.is_finite());
    let drift = (max_f / max_b - 1.0).abs();
    lab.check("finite", max_f, "finite", finite);
    lab.check("grid stability", drift, format!("|max_fine / max_base - 1| <= {}", opts.stability_tol), drift <= opts.stability_tol);
    if b.is_zero() {
        let p = &pairs[0].0;
        let r: Vec<f64> = [-1.0, 0.5, 2.0].iter().map(|&c| pair_ratio(map, p, p, 1.0, c, b, setup)).collect::<Result<_>>()?;
        let spread = r.iter().map(|v| (v / r[0] - 1.0).abs()).fold(0.0, f64::max);
        lab.check("homogeneity", spread, "<= 1e-10", spread <= 1e-10);
    }
    lab.column("ratio", base);
    lab.column("ratio_fine", fine_r);
    Ok(lab.finish())
}

// ---------------------------------------------------------------- slowdown

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowdownOptions {
    /// Time function t = u - kappa R of the split; None takes kappa = 1 / max a,
    /// the steepest slope whose levels stay uniformly spacelike.
    pub kappa: Option<f64>,
    pub courant: f64,
    /// Time steps per u cell; chosen from the CFL limit when None.
    pub steps_per_cell: Option<usize>,
    /// Largest ratio between the c_lambda values of the sweep.
    pub energy_band: f64,
}

impl Default for SlowdownOptions {
    fn default() -> Self {
        SlowdownOptions { kappa: None, courant: 0.5, steps_per_cell: None, energy_band: 10.0 }
    }
}

/// Coefficients of A d_tt + 2 B d_tR + C d_RR for the slowed operator in (t, R),
/// t = u - kappa R, mu = lambda^-2 - 1.
fn slowed_coefficients(rr: f64, m: f64, mu: f64, kappa: f64) -> (f64, f64, f64) {
    let a = rr * rr * (1.0 - 2.0 * m * rr);
    let d = 2.0 * kappa - kappa * kappa * a;
    let q = kappa * a - 1.0;
    (-(1.0 + mu) * d, -(1.0 + mu) * q, a - mu * q * q / d)
}

/// Largest |dR/dt| along the characteristics of the slowed operator.
fn slowed_speed(rr: f64, m: f64, mu: f64, kappa: f64) -> Result<f64> {
    let a = rr * rr * (1.0 - 2.0 * m * rr);
    if !(kappa * a < 2.0) {
        return Err(Error::Domain(format!("t = u - {kappa} R is not spacelike at R = {rr}")));
    }
    let (ca, cb, cc) = slowed_coefficients(rr, m, mu, kappa);
    let disc = (cb * cb - ca * cc).sqrt();
    Ok(((cb + disc) / ca).abs().max(((cb - disc) / ca).abs()))
}

fn default_kappa(setup: &GoursatSetup) -> f64 {
    let p = &setup.params;
    let a_max = (0..=64).map(|k| {
        let rr = k as f64 * p.r_max / 64.0;
        rr * rr * (1.0 - 2.0 * p.m * rr)
    }).fold(0.0, f64::max);
    1.0 / a_max
}

/// Lattice sample with zero outside [x0, x0 + (n - 1) h].
fn sample(values: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let end = x0 + (values.len() - 1) as f64 * h;
    if x < x0 || x > end {
        0.0
    } else {
        interp::interp1(values, x0, h, x)
    }
}

fn central_derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let at = |k: isize| if k < 0 || k >= n as isize { 0.0 } else { values[k as usize] };
    (0..n as isize).map(|k| (8.0 * (at(k + 1) - at(k - 1)) - (at(k + 2) - at(k - 2))) / (12.0 * h)).collect()
}

/// The slowed solution on the (u, R) lattice of `setup` (row-major), together with
/// the slice energy on t = support start - kappa R_max.
pub struct SlowedRun {
    pub values: Vec<f64>,
    pub kappa: f64,
    pub dt: f64,
    pub slice_energy: f64,
}

/// Solves the slowed Cauchy problem with data on scri by evolving toward the past in
/// t = u - kappa R with R as space: psi = theta and psi_R from the scri constraint
/// on R = 0, psi = 0 on the worldtube. The lower order terms are those of the
/// original equation.
pub fn slowed_solution(theta: &ScriProfile, lambda: f64, b: &CoeffB, setup: &GoursatSetup, opts: &SlowdownOptions) -> Result<SlowedRun> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Config(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    setup.validate()?;
    let p = setup.params;
    let m = p.m;
    let mu = 1.0 / (lambda * lambda) - 1.0;
    let kappa = opts.kappa.unwrap_or_else(|| default_kappa(setup));
    let du = setup.du();
    let nr = setup.grid.nr;
    let ny = nr + 1;
    let h = setup.dr();
    let mut smax: f64 = 0.0;
    for j in 0..=nr {
        smax = smax.max(slowed_speed(j as f64 * h, m, mu, kappa)?);
    }
    let sub = match opts.steps_per_cell {
        Some(s) => {
            let ratio = smax * du / s as f64 / h;
            if ratio > opts.courant {
                return Err(Error::CflViolation { ratio, limit: opts.courant });
            }
            s
        }
        None => (smax * du / (opts.courant * h)).ceil().max(1.0) as usize,
    };
    let dt = du / sub as f64;
    let t_end = p.u_min - kappa * p.r_max;
    let steps = ((p.u_max - t_end) / dt).ceil() as usize + 4;
    let ll = (setup.l * (setup.l + 1)) as f64;

    // scri data and the constraint 2 d_u psi_R = V psi + b psi^3 with psi_R(u_max) = 0
    let th = &theta.values;
    let th1 = central_derivative(th, du);
    let th2 = central_derivative(&th1, du);
    let src: Vec<f64> = (0..th.len()).map(|i| ll * th[i] + b.value(theta.u(i), 0.0) * th[i].powi(3)).collect();
    let mut w0 = vec![0.0; th.len()];
    for i in (0..th.len() - 1).rev() {
        w0[i] = w0[i + 1] - 0.25 * du * (src[i] + src[i + 1]);
    }
    let coef: Vec<(f64, f64, f64, f64, f64)> = (0..ny)
        .map(|j| {
            let rr = j as f64 * h;
            let (ca, cb, cc) = slowed_coefficients(rr, m, mu, kappa);
            (ca, cb, cc, 2.0 * rr - 6.0 * m * rr * rr, ll + 2.0 * m * rr)
        })
        .collect();
    let u0 = p.u_min;
    let rhs = |t: f64, psi: &[f64], pi: &[f64], dpsi: &mut [f64], dpi: &mut [f64]| {
        let mut g = vec![0.0; ny];
        let mut gp = vec![0.0; ny];
        g[0] = sample(&w0, u0, du, t) + kappa * sample(&th1, u0, du, t);
        for j in 1..nr {
            g[j] = (psi[j + 1] - psi[j - 1]) / (2.0 * h);
            gp[j] = (pi[j + 1] - pi[j - 1]) / (2.0 * h);
        }
        g[nr] = (3.0 * psi[nr] - 4.0 * psi[nr - 1] + psi[nr - 2]) / (2.0 * h);
        for j in 1..nr {
            let psi_rr = (g[j + 1] - g[j - 1]) / (2.0 * h);
            let (ca, cb, cc, ap, v) = coef[j];
            let u = t + kappa * j as f64 * h;
            let psi_r = g[j] - kappa * pi[j];
            dpsi[j] = pi[j];
            dpi[j] = -(2.0 * cb * gp[j] + cc * psi_rr + ap * psi_r - v * psi[j] - b.value(u, j as f64 * h) * psi[j].powi(3)) / ca;
        }
        dpsi[0] = sample(&th1, u0, du, t);
        dpi[0] = sample(&th2, u0, du, t);
        dpsi[nr] = 0.0;
        dpi[nr] = 0.0;
    };

    let mut psi = vec![0.0; ny];
    let mut pi = vec![0.0; ny];
    psi[0] = sample(th, u0, du, p.u_max);
    pi[0] = sample(&th1, u0, du, p.u_max);
    let mut levels = Vec::with_capacity((steps + 1) * ny);
    levels.extend_from_slice(&psi);
    let t_slice = theta.support.0 - kappa * p.r_max;
    let n_slice = ((p.u_max - t_slice) / dt).round().max(0.0) as usize;
    let mut slice_energy = 0.0;
    let mut k = [vec![0.0; ny], vec![0.0; ny], vec![0.0; ny], vec![0.0; ny]];
    let mut l = [vec![0.0; ny], vec![0.0; ny], vec![0.0; ny], vec![0.0; ny]];
    let mut tp = vec![0.0; ny];
    let mut tq = vec![0.0; ny];
    let step = -dt;
    for n in 0..steps {
        if n == n_slice {
            slice_energy = slowed_slice_energy(&psi, &pi, h, kappa);
        }
        let t0 = p.u_max - n as f64 * dt;
        rhs(t0, &psi, &pi, &mut k[0], &mut l[0]);
        for s in 1..4 {
            let c = if s == 3 { 1.0 } else { 0.5 };
            for j in 0..ny {
                tp[j] = psi[j] + c * step * k[s - 1][j];
                tq[j] = pi[j] + c * step * l[s - 1][j];
            }
            let (_, rest) = k.split_at_mut(s);
            let (_, lrest) = l.split_at_mut(s);
            rhs(t0 + c * step, &tp, &tq, &mut rest[0], &mut lrest[0]);
        }
        for j in 0..ny {
            psi[j] += step / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
            pi[j] += step / 6.0 * (l[0][j] + 2.0 * l[1][j] + 2.0 * l[2][j] + l[3][j]);
        }
        let t1 = t0 + step;
        psi[0] = sample(th, u0, du, t1);
        pi[0] = sample(&th1, u0, du, t1);
        if psi.iter().chain(&pi).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("slowed solution at t = {t1}")));
        }
        levels.extend_from_slice(&psi);
    }

    // back onto the (u, R) lattice: t = u - kappa R, interpolated across levels
    let nlev = levels.len() / ny;
    let mut values = vec![0.0; (setup.grid.nu + 1) * ny];
    for j in 0..ny {
        let column: Vec<f64> = (0..nlev).map(|n| levels[n * ny + j]).collect();
        for i in 0..=setup.grid.nu {
            let t = p.u_min + i as f64 * du - kappa * j as f64 * h;
            values[i * ny + j] = interp::interp1(&column, 0.0, dt, p.u_max - t);
        }
    }
    Ok(SlowedRun { values, kappa, dt, slice_energy })
}

/// 4 pi int (psi_u^2 + psi_R^2 + psi^2) dR on one level t = const.
fn slowed_slice_energy(psi: &[f64], pi: &[f64], h: f64, kappa: f64) -> f64 {
    let n = psi.len() - 1;
    let mut acc = 0.0;
    for j in 0..=n {
        let g = if j == 0 {
            (-3.0 * psi[0] + 4.0 * psi[1] - psi[2]) / (2.0 * h)
        } else if j == n {
            (3.0 * psi[n] - 4.0 * psi[n - 1] + psi[n - 2]) / (2.0 * h)
        } else {
            (psi[j + 1] - psi[j - 1]) / (2.0 * h)
        };
        let wt = if j == 0 || j == n { 0.5 } else { 1.0 };
        acc += wt * h * (pi[j] * pi[j] + (g - kappa * pi[j]).powi(2) + psi[j] * psi[j]);
    }
    4.0 * PI * acc
}

/// Nodes the characteristic solve determines from scri and the cone alone, away
/// from the worldtube: v = u + 2 r*(R) above the last ray that can meet a nonzero
/// worldtube value.
pub fn determined_region(setup: &GoursatSetup, support_end: f64) -> Result<Vec<bool>> {
    let p = &setup.params;
    let v_cut = support_end + 2.0 * chart::rstar_of_rinv(p.r_max, p.m)?;
    let ny = setup.grid.nr + 1;
    let mut mask = vec![false; (setup.grid.nu + 1) * ny];
    for i in 0..=setup.grid.nu {
        let u = p.u_min + i as f64 * setup.du();
        for j in 0..ny {
            mask[i * ny + j] = j == 0 || u + 2.0 * chart::rstar_of_rinv(j as f64 * setup.dr(), p.m)? > v_cut;
        }
    }
    Ok(mask)
}

/// Relative L2 distance between the slowed solutions and the characteristic solve on
/// the determined region, and c_lambda = slice energy / scri energy.
pub fn slowdown_lab(theta: &ScriProfile, lambdas: &[f64], b: &CoeffB, setup: &GoursatSetup, opts: &SlowdownOptions) -> Result<LabResult> {
    require_sweep(lambdas, "lambda")?;
    if lambdas.iter().any(|&l| !(l > 0.5 && l < 1.0)) {
        return Err(Error::Config("lambda values must lie in (1/2, 1)".into()));
    }
    let direct = nullgrid::solve_goursat(theta, Direction::Past, b, setup)?;
    let mask = determined_region(setup, theta.support.1)?;
    let cell = setup.du() * setup.dr();
    let norm = |f: &dyn Fn(usize) -> f64| mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| f(i).powi(2) * cell).sum::<f64>().sqrt();
    let ref_norm = norm(&|i| direct.values[i]);
    let ny = setup.grid.nr + 1;
    let ll = (setup.l * (setup.l + 1)) as f64;
    let dx = direct.dx_field();
    let scri_energy: f64 = 4.0 * PI
        * (0..=setup.grid.nu)
            .map(|i| {
                let u = theta.u(i);
                let j = Jet { psi: theta.values[i], psi_u: dx[i * ny], psi_r: 0.0, ll };
                energy::integrand_scri(&j, u, b.value(u, 0.0)) * setup.du()
            })
            .sum::<f64>();
    let runs: Vec<Result<(f64, f64)>> = lambdas
        .par_iter()
        .map(|&lam| {
            let run = slowed_solution(theta, lam, b, setup, opts)?;
            let diff = norm(&|i| run.values[i] - direct.values[i]);
            Ok((if ref_norm > 0.0 { diff / ref_norm } else { diff }, run.slice_energy))
        })
        .collect();
    let runs: Vec<(f64, f64)> = runs.into_iter().collect::<Result<_>>()?;
    let diffs: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let c_lambda: Vec<f64> = runs.iter().map(|r| if scri_energy > 0.0 { r.1 / scri_energy } else { 0.0 }).collect();
    let mut lab = LabResult::new("slowdown", "lambda", lambdas.to_vec());
    let all_zero = diffs.iter().all(|&d| d == 0.0);
    let decreasing = all_zero || diffs.windows(2).all(|w| w[1] < w[0]);
    lab.check("strictly decreasing", diffs[diffs.len() - 1], "differences decrease along the sweep", decreasing);
    let cmax = c_lambda.iter().fold(0.0, |a: f64, b| a.max(*b));
    let cmin = c_lambda.iter().fold(f64::MAX, |a, b| a.min(*b));
    let band = if cmax == 0.0 { 1.0 } else { cmax / cmin };
    lab.check("energy constant bounded", band, format!("max c / min c <= {}", opts.energy_band), band.is_finite() && band <= opts.energy_band);
    let mu: Vec<f64> = lambdas.iter().map(|l| 1.0 / (l * l) - 1.0).collect();
    if !all_zero {
        lab.fit = Some(loglog_fit("relative L2 difference vs 1/lambda^2 - 1", &mu, &diffs));
    }
    lab.column("mu", mu);
    lab.column("relative_l2_difference", diffs);
    lab.column("c_lambda", c_lambda);
    Ok(lab.finish())
}

// ---------------------------------------------------------------- Picard

/// Real roots of X^3 - X/alpha + beta by bisection on a sign-change scan.
pub fn cubic_roots_bisection(alpha: f64, beta: f64) -> Vec<f64> {
    let f = |x: f64| x * x * x - x / alpha + beta;
    let span = 2.0 * (4.0 / (3.0 * alpha)).sqrt() + beta.abs().cbrt() + 1e-3;
    let n = 4000;
    let mut roots = vec![];
    let mut x0 = -span;
    let mut f0 = f(x0);
    for k in 1..=n {
        let x1 = -span + 2.0 * span * k as f64 / n as f64;
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut a, mut b, mut fa) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 || b - a < 1e-300 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fa * fm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}

/// Limit of c_{n+1} = alpha (c_n^3 + beta) from c_0 = alpha beta, with the step count.
pub fn iterate_sequence(alpha: f64, beta: f64, tol: f64, max_iter: usize) -> (f64, usize) {
    let mut c = alpha * beta;
    for k in 0..max_iter {
        let next = alpha * (c * c * c + beta);
        if (next - c).abs() <= tol * next.abs().max(1e-300) {
            return (next, k + 1);
        }
        c = next;
    }
    (c, max_iter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardLabOptions {
    pub samples: usize,
    pub seed: u64,
    /// Fractions of the critical beta at which the field iteration is run.
    pub fractions: Vec<f64>,
}

impl Default for PicardLabOptions {
    fn default() -> Self {
        PicardLabOptions { samples: 1000, seed: 11, fractions: vec![0.01, 0.05, 0.1, 0.3, 0.6, 0.9] }
    }
}

/// Cardano roots against bisection, convergence of the scalar recursion, and
/// contraction of the field iteration for data scaled into the predicted regime.
/// alpha is measured from the solver as max(C_0 / beta, |u_1 - u_0|^2 / C_0^3)
/// with C the squared slice norm.
pub fn picard_lab(theta: &ScriProfile, b: &CoeffB, setup: &GoursatSetup, opts: &PicardLabOptions) -> Result<LabResult> {
    if opts.fractions.len() < 5 {
        return Err(Error::Config("Picard lab needs at least 5 data scales".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst_root: f64 = 0.0;
    let mut worst_limit: f64 = 0.0;
    for _ in 0..opts.samples {
        let alpha = 10f64.powf(rng.gen_range(-1.0..1.0));
        let crit = (4.0 / (27.0 * alpha.powi(3))).sqrt();
        let beta = rng.gen_range(0.0..0.999) * crit;
        let fp = nullgrid::fixed_point_analysis(alpha, beta)?;
        let (l0, l1, l2) = fp.roots.ok_or_else(|| Error::Domain("admissible sample without real roots".into()))?;
        let mut cardano = [l0, l1, l2];
        cardano.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut bis = cubic_roots_bisection(alpha, beta);
        bis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if bis.len() != 3 {
            worst_root = f64::INFINITY;
            continue;
        }
        for k in 0..3 {
            worst_root = worst_root.max((cardano[k] - bis[k]).abs());
        }
        let (lim, _) = iterate_sequence(alpha, beta, 1e-15, 10_000_000);
        worst_limit = worst_limit.max((lim - l2).abs() / l2.max(1e-300));
    }

    // alpha of the field iteration
    let lin = nullgrid::solve_goursat(theta, Direction::Past, &CoeffB::zero(), setup)?;
    let c0 = nullgrid::slice_sup_norm(&lin, &setup.params).powi(2);
    let beta0 = theta.h1 * theta.h1;
    let (_, first) = nullgrid::picard_solve(theta, Direction::Past, b, setup, 1, 0.0)?;
    let d = first.deltas.first().copied().unwrap_or(0.0);
    let a_nl = if c0 > 0.0 { d * d / c0.powi(3) } else { 0.0 };
    let a_lin = if beta0 > 0.0 { c0 / beta0 } else { 0.0 };
    let alpha = a_lin.max(a_nl);
    if !(alpha > 0.0) {
        return Err(Error::Domain("Picard lab needs nonzero data".into()));
    }
    let crit = (4.0 / (27.0 * alpha.powi(3))).sqrt();
    let mut lab = LabResult::new("picard", "beta / beta_crit", opts.fractions.clone());
    let mut ratio_max = vec![];
    let mut iters = vec![];
    for &f in &opts.fractions {
        // beta = ||s theta||^2
        let s = (f * crit / beta0).sqrt();
        let scaled = theta.map(|v| s * v)?;
        let (_, rep) = nullgrid::picard_solve(&scaled, Direction::Past, b, setup, setup.picard_max_iter, setup.picard_tol)?;
        // ratios once the deltas sit at round-off carry no information
        let floor = 1e-12 * rep.deltas.first().copied().unwrap_or(0.0);
        let useful: Vec<f64> = rep.ratios.iter().zip(rep.deltas.iter().skip(1)).filter(|(_, &d)| d > floor).map(|(r, _)| *r).collect();
        ratio_max.push(useful.iter().fold(0.0, |a: f64, v| a.max(*v)));
        iters.push(rep.iterations as f64);
    }
    let worst_ratio = ratio_max.iter().fold(0.0, |a: f64, v| a.max(*v));
    lab.check("Cardano vs bisection", worst_root, "<= 1e-12", worst_root <= 1e-12);
    lab.check("recursion limit is lambda_2", worst_limit, "relative <= 1e-9", worst_limit <= 1e-9);
    lab.check("field contraction", worst_ratio, "< 1", worst_ratio < 1.0);
    lab.column("max_ratio", ratio_max);
    lab.column("iterations", iters);
    lab.column("alpha", vec![alpha; opts.fractions.len()]);
    Ok(lab.finish())
}

/// The default Schwarzschild setup of the labs.
pub fn lab_setup(nu: usize, nr: usize, l: u32) -> GoursatSetup {
    let params = ChartParams { m: 1.0, u_min: -200.0, u_max: -100.0, r_max: 0.01, eps: 0.1, u0: -120.0 };
    GoursatSetup::new(params, NullGrid { nu, nr }, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_ratio_at_unit_radius() {
        let (l6, h1, _) = ball_norms(TestProfile::Constant, 1.0, 200);
        assert!((l6 / h1 - 0.6203504908994).abs() < 1e-9);
    }

    #[test]
    fn sobolev_slope_and_band() {
        let t: Vec<f64> = (0..6).map(|k| 0.1 * 10f64.powf(k as f64 / 5.0)).collect();
        let lab = sobolev_cone_lab(&t, &TestProfile::ALL, TestProfile::Bump).unwrap();
        assert!(lab.pass, "{:?}", lab.checks);
        assert!((lab.fit.unwrap().slope + 1.0).abs() < 0.02);
    }

    #[test]
    fn sobolev_rejects_short_sweeps() {
        assert!(sobolev_cone_lab(&[0.1, 0.2, 0.3, 0.4, 0.5], &TestProfile::ALL, TestProfile::Bump).is_err());
    }

    #[test]
    fn cutoff_profile_shape() {
        assert_eq!(cutoff_profile(0.2).0, 0.0);
        assert_eq!(cutoff_profile(0.6).0, 1.0);
        let h = 1e-6;
        let x = 0.41;
        let fd = (cutoff_profile(x + h).0 - cutoff_profile(x - h).0) / (2.0 * h);
        assert!((fd - cutoff_profile(x).1).abs() < 1e-6);
    }

    #[test]
    fn density_lab_passes() {
        let n: Vec<f64> = (0..8).map(|k| 2f64.powi(k)).collect();
        let lab = density_cutoff_lab(&n).unwrap();
        assert!(lab.pass, "{:?}", lab.checks);
    }

    #[test]
    fn bisection_finds_three_roots() {
        let r = cubic_roots_bisection(1.0, 0.1);
        assert_eq!(r.len(), 3);
        for x in r {
            assert!((x * x * x - x + 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn recursion_converges_to_the_attractive_root() {
        let fp = nullgrid::fixed_point_analysis(2.0, 0.1).unwrap();
        let (lim, _) = iterate_sequence(2.0, 0.1, 1e-15, 100_000);
        assert!((lim - fp.roots.unwrap().2).abs() < 1e-12);
    }

    #[test]
    fn time_function_must_stay_spacelike() {
        assert!(slowed_speed(0.05, 1.0, 0.02, 400.0).is_ok());
        assert!(slowed_speed(0.05, 1.0, 0.02, 1000.0).is_err());
    }

    #[test]
    fn zero_data_gives_zero_slowdown_differences() {
        let s = lab_setup(80, 10, 0);
        let z = ScriProfile::zero(0, -200.0, s.du(), 81);
        let lab = slowdown_lab(&z, &[0.6, 0.7, 0.8, 0.9, 0.95], &CoeffB::zero(), &s, &SlowdownOptions::default()).unwrap();
        assert!(lab.get("relative_l2_difference").unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn explicit_steps_respect_cfl() {
        let s = lab_setup(800, 10, 0);
        let z = ScriProfile::zero(0, -200.0, s.du(), 801);
        let opts = SlowdownOptions { kappa: Some(1.0), steps_per_cell: Some(1), ..SlowdownOptions::default() };
        assert!(matches!(slowed_solution(&z, 0.99, &CoeffB::zero(), &s, &opts), Err(Error::CflViolation { .. })));
    }
}
