//! Leapfrog evolution of one mode in the (t, r*) chart and the extraction of
//! characteristic data from its history.
//!
//! With psi = r phi the mode obeys
//! psi_tt - psi_r*r* + F (l(l+1)/r^2 + 2m/r^3) psi + F R^2 b psi^3 = 0, F = 1 - 2m/r,
//! which is the same function as the conformal field of the (u, R) chart.

use serde::{Deserialize, Serialize};

use crate::chart::{self, ChartParams};
use crate::coeff::CoeffB;
use crate::error::{Error, Result};
use crate::interp;
use crate::nullgrid::{ChartTag, ModeField};

/// Cauchy data and lattice of one mode at time t.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyState {
    pub l: u32,
    pub t: f64,
    pub rstar0: f64,
    pub drs: f64,
    pub psi: Vec<f64>,
    pub pi: Vec<f64>,
}

impl CauchyState {
    pub fn zeros(l: u32, rstar0: f64, drs: f64, n: usize) -> Self {
        CauchyState { l, t: 0.0, rstar0, drs, psi: vec![0.0; n], pi: vec![0.0; n] }
    }

    pub fn from_fn(l: u32, rstar0: f64, drs: f64, n: usize, psi: impl Fn(f64) -> f64, pi: impl Fn(f64) -> f64) -> Self {
        let r = |k: usize| rstar0 + k as f64 * drs;
        CauchyState { l, t: 0.0, rstar0, drs, psi: (0..n).map(|k| psi(r(k))).collect(), pi: (0..n).map(|k| pi(r(k))).collect() }
    }

    pub fn rstar(&self, k: usize) -> f64 {
        self.rstar0 + k as f64 * self.drs
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn rstar_max(&self) -> f64 {
        self.rstar(self.len() - 1)
    }

    /// Time reflection: pi changes sign.
    pub fn reflected(&self) -> Self {
        let mut s = self.clone();
        s.pi.iter_mut().for_each(|p| *p = -*p);
        s
    }
}

/// Evolution options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyOptions {
    /// dt / dr*.
    pub courant: f64,
    /// Values above this within 5 cells of an edge flag the run.
    pub flag_tol: f64,
    /// Values above this within 5 cells of an edge abort the run.
    pub contamination_tol: f64,
    /// Keep every n-th level as a snapshot.
    pub snapshot_stride: Option<usize>,
    /// Record every level at the lattice columns around these r*.
    pub probes: Vec<f64>,
    /// Record the discrete energy every n levels.
    pub energy_stride: Option<usize>,
}

impl Default for CauchyOptions {
    fn default() -> Self {
        CauchyOptions { courant: 0.5, flag_tol: 1e-13, contamination_tol: 1e-6, snapshot_stride: None, probes: vec![], energy_stride: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub psi: Vec<f64>,
}

/// Time series of psi at a few lattice columns, one sample per level.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub target: f64,
    pub first_column: usize,
    pub t0: f64,
    pub dt: f64,
    /// columns[c][n] = psi(t0 + n dt, r*_{first_column + c}).
    pub columns: Vec<Vec<f64>>,
    pub rstar0: f64,
    pub drs: f64,
}

impl ProbeSeries {
    /// psi(t, target) by 4 x 4 Lagrange interpolation in (t, r*).
    pub fn value(&self, t: f64) -> f64 {
        let nt = self.columns[0].len();
        let (it, wt) = interp::stencil(nt, self.t0, self.dt, t, 4);
        let x0 = self.rstar0 + self.first_column as f64 * self.drs;
        let (ic, wc) = interp::stencil(self.columns.len(), x0, self.drs, self.target, 4);
        let mut acc = 0.0;
        for (c, w1) in wc.iter().enumerate() {
            let col = &self.columns[ic + c];
            acc += w1 * wt.iter().enumerate().map(|(k, w2)| w2 * col[it + k]).sum::<f64>();
        }
        acc
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + (self.columns[0].len() - 1) as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyRun {
    pub state: CauchyState,
    /// Support reached the flag level near an edge.
    pub flagged: bool,
    pub max_edge_value: f64,
    pub snapshots: Vec<Snapshot>,
    pub probes: Vec<ProbeSeries>,
    /// (t, discrete energy).
    pub energy: Vec<(f64, f64)>,
    pub dt: f64,
}

/// Per-node potential and cubic weight F R^2 b along the lattice.
struct Coefficients {
    pot: Vec<f64>,
    cubic: Vec<f64>,
    /// Nodes whose radius is undefined (flat origin) are pinned to zero.
    pinned: Vec<bool>,
    rr: Vec<f64>,
}

fn coefficients(state: &CauchyState, b: &CoeffB, m: f64, t: f64) -> Result<Coefficients> {
    let n = state.len();
    let ll = (state.l * (state.l + 1)) as f64;
    let mut c = Coefficients { pot: vec![0.0; n], cubic: vec![0.0; n], pinned: vec![false; n], rr: vec![0.0; n] };
    for k in 0..n {
        let rs = state.rstar(k);
        if m == 0.0 && rs <= 0.0 {
            c.pinned[k] = true;
            continue;
        }
        let r = chart::r_of_rstar(rs, m)?;
        let rr = 1.0 / r;
        let f = 1.0 - 2.0 * m * rr;
        c.rr[k] = rr;
        c.pot[k] = f * (ll * rr * rr + 2.0 * m * rr.powi(3));
        c.cubic[k] = f * rr * rr * b.value(t - rs, rr);
    }
    Ok(c)
}

fn refresh_cubic(c: &mut Coefficients, state: &CauchyState, b: &CoeffB, m: f64, t: f64) {
    for k in 0..state.len() {
        if !c.pinned[k] {
            let rr = c.rr[k];
            c.cubic[k] = (1.0 - 2.0 * m * rr) * rr * rr * b.value(t - state.rstar(k), rr);
        }
    }
}

/// psi_r*r* - V psi - F R^2 b psi^3 at interior nodes; boundaries stay fixed.
fn acceleration(psi: &[f64], c: &Coefficients, h: f64, out: &mut [f64]) {
    let n = psi.len();
    let ih2 = 1.0 / (h * h);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for k in 1..n - 1 {
        if c.pinned[k] {
            out[k] = 0.0;
            continue;
        }
        let p = psi[k];
        out[k] = (psi[k + 1] - 2.0 * p + psi[k - 1]) * ih2 - c.pot[k] * p - c.cubic[k] * p * p * p;
    }
}

/// Discrete energy sum (pi^2 + (D psi)^2 + V psi^2 + F R^2 b psi^4 / 2) h.
pub fn discrete_energy(psi: &[f64], pi: &[f64], pot: &[f64], cubic: &[f64], h: f64) -> f64 {
    let mut e = 0.0;
    for k in 0..psi.len() - 1 {
        let d = (psi[k + 1] - psi[k]) / h;
        e += d * d * h;
    }
    for k in 0..psi.len() {
        e += (pi[k] * pi[k] + pot[k] * psi[k] * psi[k] + 0.5 * cubic[k] * psi[k].powi(4)) * h;
    }
    e
}

/// Energy of a state with the potential and cubic weight of the given chart.
pub fn state_energy(state: &CauchyState, b: &CoeffB, m: f64) -> Result<f64> {
    let c = coefficients(state, b, m, state.t)?;
    Ok(discrete_energy(&state.psi, &state.pi, &c.pot, &c.cubic, state.drs))
}

fn edge_max(psi: &[f64], pi: &[f64], inner: bool) -> (f64, usize) {
    let n = psi.len();
    let w = 5.min(n / 2);
    let mut best = (0.0, 0);
    let lo = if inner { 0..w + 1 } else { 0..0 };
    for k in lo.chain(n - 1 - w..n) {
        let v = psi[k].abs().max(pi[k].abs());
        if v > best.0 {
            best = (v, k);
        }
    }
    best
}

/// Leapfrog from `state` to `t_end` with a second-order Taylor start.
pub fn evolve_cauchy(state: &CauchyState, b: &CoeffB, params: &ChartParams, t_end: f64, opts: &CauchyOptions) -> Result<CauchyRun> {
    if opts.courant > 0.5 || !(opts.courant > 0.0) {
        return Err(Error::CflViolation { ratio: opts.courant, limit: 0.5 });
    }
    let n = state.len();
    if n < 12 {
        return Err(Error::Domain("Cauchy lattice needs at least 12 nodes".into()));
    }
    let m = params.m;
    let h = state.drs;
    let steps = ((t_end - state.t) / (opts.courant * h)).ceil().max(0.0) as usize;
    let dt = if steps > 0 { (t_end - state.t) / steps as f64 } else { opts.courant * h };
    let static_b = b.is_static();
    // the flat origin is a physical boundary, not a cut
    let inner_is_cut = !(m == 0.0 && state.rstar0 <= 0.0);
    let mut c = coefficients(state, b, m, state.t)?;

    let mut probes: Vec<ProbeSeries> = opts
        .probes
        .iter()
        .map(|&target| {
            let (first, _) = interp::stencil(n, state.rstar0, h, target, 4);
            ProbeSeries { target, first_column: first, t0: state.t, dt, columns: (0..4).map(|_| Vec::with_capacity(steps + 1)).collect(), rstar0: state.rstar0, drs: h }
        })
        .collect();
    let record = |probes: &mut Vec<ProbeSeries>, psi: &[f64]| {
        for p in probes.iter_mut() {
            for (c, col) in p.columns.iter_mut().enumerate() {
                col.push(psi[p.first_column + c]);
            }
        }
    };

    let mut prev = state.psi.clone();
    for (k, pinned) in c.pinned.iter().enumerate() {
        if *pinned {
            prev[k] = 0.0;
        }
    }
    let mut acc = vec![0.0; n];
    acceleration(&prev, &c, h, &mut acc);
    // third-order start: the jerk is the linearised acceleration applied to pi
    let mut jerk = vec![0.0; n];
    let lin = Coefficients { pot: c.pot.clone(), cubic: vec![0.0; n], pinned: c.pinned.clone(), rr: vec![] };
    acceleration(&state.pi, &lin, h, &mut jerk);
    for k in 0..n {
        jerk[k] -= 3.0 * c.cubic[k] * prev[k] * prev[k] * state.pi[k];
    }
    let mut cur: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 || k == n - 1 || c.pinned[k] {
                prev[k]
            } else {
                prev[k] + dt * state.pi[k] + 0.5 * dt * dt * acc[k] + dt * dt * dt / 6.0 * jerk[k]
            }
        })
        .collect();

    let mut snapshots = vec![];
    let mut energy = vec![];
    let mut flagged = false;
    let mut max_edge: f64 = 0.0;
    let check_edges = |psi: &[f64], pi: &[f64], t: f64, flagged: &mut bool, max_edge: &mut f64| -> Result<()> {
        let (v, k) = edge_max(psi, pi, inner_is_cut);
        *max_edge = max_edge.max(v);
        if v > opts.flag_tol {
            *flagged = true;
        }
        if v > opts.contamination_tol {
            return Err(Error::BoundaryContamination { t, rstar: state.rstar(k), value: v });
        }
        Ok(())
    };
    check_edges(&state.psi, &state.pi, state.t, &mut flagged, &mut max_edge)?;
    record(&mut probes, &prev);
    if let Some(st) = opts.snapshot_stride {
        let _ = st;
        snapshots.push(Snapshot { t: state.t, psi: prev.clone() });
    }
    if opts.energy_stride.is_some() {
        energy.push((state.t, discrete_energy(&state.psi, &state.pi, &c.pot, &c.cubic, h)));
    }

    let mut next = vec![0.0; n];
    let mut pi = vec![0.0; n];
    for step in 1..=steps {
        let t = state.t + step as f64 * dt;
        if step == steps {
            // pi at the final level needs one level beyond it
            break;
        }
        if !static_b {
            refresh_cubic(&mut c, state, b, m, t);
        }
        acceleration(&cur, &c, h, &mut acc);
        for k in 0..n {
            next[k] = if k == 0 || k == n - 1 || c.pinned[k] { cur[k] } else { 2.0 * cur[k] - prev[k] + dt * dt * acc[k] };
        }
        let want_energy = opts.energy_stride.is_some_and(|s| step % s == 0);
        let want_snap = opts.snapshot_stride.is_some_and(|s| step % s == 0);
        for k in 0..n {
            pi[k] = (next[k] - prev[k]) / (2.0 * dt);
        }
        check_edges(&cur, &pi, t, &mut flagged, &mut max_edge)?;
        if want_energy {
            energy.push((t, discrete_energy(&cur, &pi, &c.pot, &c.cubic, h)));
        }
        if want_snap {
            snapshots.push(Snapshot { t, psi: cur.clone() });
        }
        record(&mut probes, &cur);
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Cauchy level t = {t}")));
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    // Final level: one extra step for the centred time derivative.
    let t_fin = state.t + steps as f64 * dt;
    if steps > 0 {
        if !static_b {
            refresh_cubic(&mut c, state, b, m, t_fin);
        }
        acceleration(&cur, &c, h, &mut acc);
        for k in 0..n {
            next[k] = if k == 0 || k == n - 1 || c.pinned[k] { cur[k] } else { 2.0 * cur[k] - prev[k] + dt * dt * acc[k] };
            pi[k] = (next[k] - prev[k]) / (2.0 * dt);
        }
        check_edges(&cur, &pi, t_fin, &mut flagged, &mut max_edge)?;
        record(&mut probes, &cur);
        if opts.energy_stride.is_some() {
            energy.push((t_fin, discrete_energy(&cur, &pi, &c.pot, &c.cubic, h)));
        }
        if opts.snapshot_stride.is_some() {
            snapshots.push(Snapshot { t: t_fin, psi: cur.clone() });
        }
    } else {
        pi.copy_from_slice(&state.pi);
        cur = state.psi.clone();
    }
    Ok(CauchyRun {
        state: CauchyState { l: state.l, t: t_fin, rstar0: state.rstar0, drs: h, psi: cur, pi },
        flagged,
        max_edge_value: max_edge,
        snapshots,
        probes,
        energy,
        dt,
    })
}

/// psi and d_R psi along the cone t - r* = u_c at the given R samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeData {
    pub u_c: f64,
    pub r: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_r: Vec<f64>,
}

/// Interpolate a snapshot history (uniform in t) onto the cone u = u_c at the R samples.
pub fn extract_null_cone(snapshots: &[Snapshot], rstar0: f64, drs: f64, u_c: f64, r_samples: &[f64], m: f64) -> Result<ConeData> {
    if snapshots.len() < 4 {
        return Err(Error::ConeOutsideDomain("history needs at least four snapshots".into()));
    }
    let t0 = snapshots[0].t;
    let dt = snapshots[1].t - t0;
    let t1 = snapshots[snapshots.len() - 1].t;
    let nx = snapshots[0].psi.len();
    let x1 = rstar0 + (nx - 1) as f64 * drs;
    let mut out = ConeData { u_c, r: r_samples.to_vec(), psi: vec![], psi_r: vec![] };
    for &rr in r_samples {
        let rs = chart::rstar_of_rinv(rr, m)?;
        let t = u_c + rs;
        if t < t0 - 1e-12 || t > t1 + 1e-12 || rs < rstar0 || rs > x1 {
            return Err(Error::ConeOutsideDomain(format!("cone point (t = {t:.6}, r* = {rs:.6}) is outside the history")));
        }
        let (it, wt) = interp::stencil(snapshots.len(), t0, dt, t, 4);
        let (ix, wx) = interp::stencil(nx, rstar0, drs, rs, 4);
        let nodes_t: Vec<f64> = (0..4).map(|k| (it + k) as f64).collect();
        let nodes_x: Vec<f64> = (0..4).map(|k| (ix + k) as f64).collect();
        let dwt = interp::lagrange_deriv_weights(&nodes_t, (t - t0) / dt);
        let dwx = interp::lagrange_deriv_weights(&nodes_x, (rs - rstar0) / drs);
        let (mut v, mut vt, mut vx) = (0.0, 0.0, 0.0);
        for a in 0..4 {
            let row = &snapshots[it + a].psi;
            for c in 0..4 {
                let p = row[ix + c];
                v += wt[a] * wx[c] * p;
                vt += dwt[a] * wx[c] * p;
                vx += wt[a] * dwx[c] * p;
            }
        }
        vt /= dt;
        vx /= drs;
        let a = rr * rr * (1.0 - 2.0 * m * rr);
        out.psi.push(v);
        out.psi_r.push(-(vt + vx) / a);
    }
    Ok(out)
}

/// Snapshot history as a (t, r*) field.
pub fn history_field(run: &CauchyRun) -> Option<ModeField> {
    let snaps = &run.snapshots;
    if snaps.len() < 2 {
        return None;
    }
    let ny = snaps[0].psi.len();
    let mut f = ModeField::zeros(run.state.l, ChartTag::Cauchy, snaps.len(), ny, snaps[0].t, snaps[1].t - snaps[0].t, run.state.rstar0, run.state.drs);
    for (i, s) in snaps.iter().enumerate() {
        f.values[i * ny..(i + 1) * ny].copy_from_slice(&s.psi);
    }
    Some(f)
}
