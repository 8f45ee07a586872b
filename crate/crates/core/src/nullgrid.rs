//! Characteristic solver on the (u, R) lattice for one multipole mode.
//!
//! The mode equation is 2 d_u d_R psi = -d_R(a d_R psi) + V psi + b psi^3 with
//! a = R^2 (1 - 2mR) and V = l(l+1) + 2mR. It is written as a first-order system
//! in (psi, w = d_R psi) and discretized with the box scheme: each null cell
//! couples its four corners through a trapezoid in R for psi and a cell-averaged
//! balance for w. A level is filled by marching in R, with shooting whenever the
//! boundary value sits at the far end of the march.

use serde::{Deserialize, Serialize};

use crate::chart::ChartParams;
use crate::coeff::CoeffB;
use crate::energy;
use crate::error::{Error, Result};

/// Which coordinate pair the lattice axes carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChartTag {
    /// (u, R).
    Characteristic,
    /// (v, R), the time reflection of the characteristic chart.
    PastCharacteristic,
    /// (t, r*).
    Cauchy,
}

/// One mode sampled on a rectangular lattice. Row i is the level x0 + i dx,
/// column j is y0 + j dy. `deriv` holds d_y psi when the solver produces it.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub l: u32,
    pub chart: ChartTag,
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub dx: f64,
    pub y0: f64,
    pub dy: f64,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
}

impl ModeField {
    pub fn zeros(l: u32, chart: ChartTag, nx: usize, ny: usize, x0: f64, dx: f64, y0: f64, dy: f64) -> Self {
        ModeField { l, chart, nx, ny, x0, dx, y0, dy, values: vec![0.0; nx * ny], deriv: vec![0.0; nx * ny] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ny + j]
    }

    #[inline]
    pub fn d_at(&self, i: usize, j: usize) -> f64 {
        self.deriv[i * self.ny + j]
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.dy
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.ny..(i + 1) * self.ny]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nx).map(|i| self.at(i, j)).collect()
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} at x = {}, y = {}", self.x(k / self.ny), self.y(k % self.ny))));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Centred x-derivative on the lattice, one-sided second order at the ends.
    pub fn dx_field(&self) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = vec![0.0; nx * ny];
        let h = self.dx;
        for i in 0..nx {
            for j in 0..ny {
                let v = if nx < 3 {
                    0.0
                } else if i == 0 {
                    (-3.0 * self.at(0, j) + 4.0 * self.at(1, j) - self.at(2, j)) / (2.0 * h)
                } else if i == nx - 1 {
                    (3.0 * self.at(i, j) - 4.0 * self.at(i - 1, j) + self.at(i - 2, j)) / (2.0 * h)
                } else {
                    (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * h)
                };
                out[i * ny + j] = v;
            }
        }
        out
    }

    /// Restriction to the column y = y0 (scri for the characteristic charts).
    pub fn scri_trace(&self, support: (f64, f64)) -> Result<ScriProfile> {
        ScriProfile::new(self.l, self.x0, self.dx, self.column(0), support)
    }
}

/// Characteristic data theta(u) of one mode on scri with its weighted H1 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriProfile {
    pub l: u32,
    pub u0: f64,
    pub du: f64,
    pub values: Vec<f64>,
    /// Declared support interval; values outside it are exactly zero.
    pub support: (f64, f64),
    pub h1: f64,
}

impl ScriProfile {
    pub fn new(l: u32, u0: f64, du: f64, values: Vec<f64>, support: (f64, f64)) -> Result<Self> {
        if values.len() < 2 || !(du > 0.0) {
            return Err(Error::Domain("scri profile needs at least two samples and du > 0".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("scri profile value {v}")));
        }
        let h1 = energy::h1_scri_norm_values(l, du, u0, &values);
        Ok(ScriProfile { l, u0, du, values, support, h1 })
    }

    /// Samples f on the lattice, forcing exact zeros outside the support.
    pub fn from_fn(l: u32, u0: f64, du: f64, n: usize, support: (f64, f64), f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..n)
            .map(|i| {
                let u = u0 + i as f64 * du;
                if u <= support.0 || u >= support.1 {
                    0.0
                } else {
                    f(u)
                }
            })
            .collect();
        Self::new(l, u0, du, values, support)
    }

    pub fn zero(l: u32, u0: f64, du: f64, n: usize) -> Self {
        let mid = u0 + 0.5 * du * (n - 1) as f64;
        ScriProfile { l, u0, du, values: vec![0.0; n], support: (mid, mid), h1: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn u(&self, i: usize) -> f64 {
        self.u0 + i as f64 * self.du
    }

    pub fn u_max(&self) -> f64 {
        self.u(self.values.len() - 1)
    }

    /// Checks that the support sits strictly inside the lattice and values vanish outside it.
    pub fn check_support(&self) -> Result<()> {
        if self.values.iter().all(|&v| v == 0.0) {
            return Ok(());
        }
        let (a, b) = self.support;
        if !(a > self.u0 && b < self.u_max() && a < b) {
            return Err(Error::Domain(format!("support [{a}, {b}] not strictly inside [{}, {}]", self.u0, self.u_max())));
        }
        for (i, &v) in self.values.iter().enumerate() {
            let u = self.u(i);
            if (u < a || u > b) && v != 0.0 {
                return Err(Error::Domain(format!("profile nonzero ({v:e}) at u = {u} outside declared support")));
            }
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.l, self.u0, self.du, self.values.iter().map(|&v| f(v)).collect(), self.support)
    }

    pub fn combine(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.values.len() != other.values.len() || self.u0 != other.u0 || self.du != other.du || self.l != other.l {
            return Err(Error::Domain("profiles live on different lattices".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        let support = (self.support.0.min(other.support.0), self.support.1.max(other.support.1));
        Self::new(self.l, self.u0, self.du, values, support)
    }
}

/// C-infinity bump equal to `amp` at the centre of (a, b) and zero outside.
pub fn bump(u: f64, a: f64, b: f64, amp: f64) -> f64 {
    let x = (2.0 * u - a - b) / (b - a);
    if x.abs() >= 1.0 {
        0.0
    } else {
        amp * (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// Lattice resolution in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullGrid {
    pub nu: usize,
    pub nr: usize,
}

/// Everything a characteristic solve needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoursatSetup {
    pub params: ChartParams,
    pub grid: NullGrid,
    pub l: u32,
    /// Largest |psi| tolerated on the worldtube for past-directed solves.
    pub worldtube_tol: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl GoursatSetup {
    pub fn new(params: ChartParams, grid: NullGrid, l: u32) -> Self {
        GoursatSetup { params, grid, l, worldtube_tol: 1e-8, picard_tol: 1e-13, picard_max_iter: 50 }
    }

    pub fn du(&self) -> f64 {
        (self.params.u_max - self.params.u_min) / self.grid.nu as f64
    }

    pub fn dr(&self) -> f64 {
        self.params.r_max / self.grid.nr as f64
    }

    /// Does the worldtube point at retarded time u lie in the future of Sigma_0?
    /// Only there must a past-directed solve keep the worldtube clean.
    pub fn tube_is_physical(&self, u: f64) -> bool {
        match crate::chart::rstar_of_rinv(self.params.r_max, self.params.m) {
            Ok(rs) => u + rs >= 0.0,
            Err(_) => true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.grid.nu < 4 || self.grid.nr < 4 {
            return Err(Error::Config("null grid needs at least 4 cells per direction".into()));
        }
        Ok(())
    }

    fn check_profile(&self, theta: &ScriProfile) -> Result<()> {
        let du = self.du();
        if theta.len() != self.grid.nu + 1 || (theta.u0 - self.params.u_min).abs() > 1e-9 * du || (theta.du - du).abs() > 1e-12 * du {
            return Err(Error::Domain(format!(
                "profile lattice ({} points from {} step {}) does not match the setup ({} points from {} step {du})",
                theta.len(),
                theta.u0,
                theta.du,
                self.grid.nu + 1,
                self.params.u_min
            )));
        }
        if theta.l != self.l {
            return Err(Error::Domain(format!("profile is mode l = {}, setup is l = {}", theta.l, self.l)));
        }
        theta.check_support()
    }

    pub fn empty_field(&self, chart: ChartTag) -> ModeField {
        let (x0, dx) = match chart {
            ChartTag::PastCharacteristic => (-self.params.u_max, self.du()),
            _ => (self.params.u_min, self.du()),
        };
        ModeField::zeros(self.l, chart, self.grid.nu + 1, self.grid.nr + 1, x0, dx, 0.0, self.dr())
    }
}

/// Direction of the march in retarded time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Increasing u from zero data on u = u_min.
    Future,
    /// Decreasing u from zero data on u = u_max; the T_+^0 engine.
    Past,
}

/// G of the mode equation 2 d_u d_R psi = G at one point, from psi, d_R psi and d_R^2 psi.
pub fn reduced_equation_rhs(psi: f64, dpsi_r: f64, d2psi_r: f64, u: f64, rr: f64, l: u32, m: f64, b: &CoeffB) -> f64 {
    let f = 1.0 - 2.0 * m * rr;
    let a = rr * rr * f;
    let da = 2.0 * rr * f - 2.0 * m * rr * rr;
    let v = (l * (l + 1)) as f64 + 2.0 * m * rr;
    -(da * dpsi_r + a * d2psi_r) + v * psi + b.value(u, rr) * psi * psi * psi
}

/// Static coefficients along the R lattice.
struct Coeffs {
    h: f64,
    a: Vec<f64>,
    v: Vec<f64>,
}

impl Coeffs {
    fn new(setup: &GoursatSetup, nr: usize, h: f64) -> Self {
        let m = setup.params.m;
        let ll = (setup.l * (setup.l + 1)) as f64;
        let r: Vec<f64> = (0..=nr).map(|j| j as f64 * h).collect();
        Coeffs {
            h,
            a: r.iter().map(|&x| x * x * (1.0 - 2.0 * m * x)).collect(),
            v: r.iter().map(|&x| ll + 2.0 * m * x).collect(),
        }
    }
}

/// Treatment of the cubic term on one level.
#[derive(Clone, Copy)]
enum Cubic<'a> {
    /// b at the nodes; solved cell by cell.
    Implicit(&'a [f64]),
    /// A known nodal source replacing b psi^3.
    Frozen(&'a [f64]),
}

impl Cubic<'_> {
    #[inline]
    fn eval(&self, j: usize, psi: f64) -> f64 {
        match self {
            Cubic::Implicit(b) => b[j] * psi * psi * psi,
            Cubic::Frozen(f) => f[j],
        }
    }

    fn is_linear(&self) -> bool {
        match self {
            Cubic::Implicit(b) => b.iter().all(|&x| x == 0.0),
            Cubic::Frozen(_) => true,
        }
    }
}

struct Level<'a> {
    c: &'a Coeffs,
    /// Signed step u_new - u_old.
    k: f64,
    psi_old: &'a [f64],
    w_old: &'a [f64],
    s_old: &'a [f64],
    cubic: Cubic<'a>,
    tol: f64,
    max_iter: usize,
    u_new: f64,
}

impl Level<'_> {
    /// Solve w (c0 - vh) = rhs + nl(psi)/4, psi = p + s w for (psi, w).
    #[inline]
    fn close(&self, j: usize, denom: f64, rhs: f64, p: f64, s: f64, guess: f64) -> Result<(f64, f64)> {
        match self.cubic {
            Cubic::Frozen(_) => {
                let w = (rhs + 0.25 * self.cubic.eval(j, 0.0)) / denom;
                Ok((p + s * w, w))
            }
            Cubic::Implicit(b) if b[j] == 0.0 => {
                let w = rhs / denom;
                Ok((p + s * w, w))
            }
            Cubic::Implicit(_) => {
                let mut psi = guess;
                for _ in 0..self.max_iter {
                    let w = (rhs + 0.25 * self.cubic.eval(j, psi)) / denom;
                    let next = p + s * w;
                    if (next - psi).abs() <= self.tol * psi.abs().max(1.0) {
                        return Ok((next, (rhs + 0.25 * self.cubic.eval(j, next)) / denom));
                    }
                    psi = next;
                }
                Err(Error::NonlinearDivergence { u: self.u_new, r: j as f64 * self.c.h })
            }
        }
    }

    #[inline]
    fn source_new(&self, j: usize, psi: f64) -> f64 {
        self.c.v[j] * psi + self.cubic.eval(j, psi)
    }

    /// Fill j = 1..=N given (psi_0, w_0) on the new level.
    fn march_up(&self, psi: &mut [f64], w: &mut [f64]) -> Result<()> {
        let c = self.c;
        let h = c.h;
        let ik = 1.0 / self.k;
        let mut s_new_j = self.source_new(0, psi[0]);
        for j in 0..psi.len() - 1 {
            let rhs = 0.25 * (self.s_old[j] + self.s_old[j + 1] + s_new_j) - ik * (w[j] - self.w_old[j] - self.w_old[j + 1])
                - (c.a[j + 1] * self.w_old[j + 1] - c.a[j] * (w[j] + self.w_old[j])) / (2.0 * h)
                + 0.25 * c.v[j + 1] * (psi[j] + 0.5 * h * w[j]);
            let denom = ik + c.a[j + 1] / (2.0 * h) - c.v[j + 1] * h / 8.0;
            let p = psi[j] + 0.5 * h * w[j];
            let (pn, wn) = self.close(j + 1, denom, rhs, p, 0.5 * h, self.psi_old[j + 1])?;
            psi[j + 1] = pn;
            w[j + 1] = wn;
            s_new_j = self.source_new(j + 1, pn);
        }
        Ok(())
    }

    /// Fill j = N-1..=0 given (psi_N, w_N) on the new level.
    fn march_down(&self, psi: &mut [f64], w: &mut [f64]) -> Result<()> {
        let c = self.c;
        let h = c.h;
        let ik = 1.0 / self.k;
        let n = psi.len() - 1;
        let mut s_new_j1 = self.source_new(n, psi[n]);
        for j in (0..n).rev() {
            let p = psi[j + 1] - 0.5 * h * w[j + 1];
            let rhs = 0.25 * (self.s_old[j] + self.s_old[j + 1] + s_new_j1) - ik * (w[j + 1] - self.w_old[j] - self.w_old[j + 1])
                - (c.a[j + 1] * (w[j + 1] + self.w_old[j + 1]) - c.a[j] * self.w_old[j]) / (2.0 * h)
                + 0.25 * c.v[j] * p;
            let denom = ik - c.a[j] / (2.0 * h) + c.v[j] * h / 8.0;
            let (pn, wn) = self.close(j, denom, rhs, p, -0.5 * h, self.psi_old[j])?;
            psi[j] = pn;
            w[j] = wn;
            s_new_j1 = self.source_new(j, pn);
        }
        Ok(())
    }

    /// w_0 on the new level from the R = 0 reduction 2 d_u w = S.
    fn scri_w(&self, psi0: f64) -> f64 {
        self.w_old[0] + 0.25 * self.k * (self.s_old[0] + self.source_new(0, psi0))
    }
}

/// Secant shooting on a scalar residual; affine residuals settle after two probes.
fn shoot(mut residual: impl FnMut(f64) -> Result<f64>, p0: f64, linear: bool, tol: f64, max_iter: usize) -> Result<f64> {
    let r0 = residual(p0)?;
    if r0 == 0.0 {
        return Ok(p0);
    }
    let p1 = p0 - r0;
    let r1 = residual(p1)?;
    if linear {
        if r1 == r0 {
            return Ok(p1);
        }
        return Ok(p0 - r0 * (p1 - p0) / (r1 - r0));
    }
    let (mut pa, mut ra, mut pb, mut rb) = (p0, r0, p1, r1);
    for _ in 0..max_iter {
        if rb.abs() <= tol * pb.abs().max(1.0) || rb == ra {
            return Ok(pb);
        }
        let pc = pb - rb * (pb - pa) / (rb - ra);
        let rc = residual(pc)?;
        pa = pb;
        ra = rb;
        pb = pc;
        rb = rc;
    }
    if rb.abs() <= 1e3 * tol * pb.abs().max(1.0) {
        return Ok(pb);
    }
    Err(Error::NonlinearDivergence { u: f64::NAN, r: 0.0 })
}

/// Level-by-level driver shared by all characteristic solves on the (u, R) lattice.
struct Marcher<'a> {
    setup: &'a GoursatSetup,
    coeffs: Coeffs,
    b: &'a CoeffB,
    nr: usize,
}

impl<'a> Marcher<'a> {
    fn new(setup: &'a GoursatSetup, b: &'a CoeffB, nr: usize, h: f64) -> Self {
        Marcher { setup, coeffs: Coeffs::new(setup, nr, h), b, nr }
    }

    fn b_row(&self, u: f64) -> Vec<f64> {
        (0..=self.nr).map(|j| self.b.value(u, j as f64 * self.coeffs.h)).collect()
    }

    fn sources(&self, psi: &[f64], cubic: Cubic) -> Vec<f64> {
        (0..psi.len()).map(|j| self.coeffs.v[j] * psi[j] + cubic.eval(j, psi[j])).collect()
    }

    /// One level with psi_0 prescribed (forward Goursat).
    fn level_scri_up(&self, lv: &Level, psi0: f64, psi: &mut [f64], w: &mut [f64]) -> Result<()> {
        psi[0] = psi0;
        w[0] = lv.scri_w(psi0);
        lv.march_up(psi, w)
    }

    /// One level with psi_0 prescribed and w_N = 0 (past-directed Goursat).
    fn level_scri_down(&self, lv: &Level, psi0: f64, psi: &mut [f64], w: &mut [f64], guess: f64) -> Result<()> {
        let n = self.nr;
        let linear = lv.cubic.is_linear();
        let tol = self.setup.picard_tol;
        let p = shoot(
            |p| {
                psi[n] = p;
                w[n] = 0.0;
                lv.march_down(psi, w)?;
                Ok(psi[0] - psi0)
            },
            guess,
            linear,
            tol,
            self.setup.picard_max_iter,
        )
        .map_err(|_| Error::NonlinearDivergence { u: lv.u_new, r: self.setup.params.r_max })?;
        psi[n] = p;
        w[n] = 0.0;
        lv.march_down(psi, w)?;
        psi[0] = psi0;
        Ok(())
    }

    /// One level with psi_N prescribed (worldtube-anchored transport).
    fn level_tube_up(&self, lv: &Level, psi_n: f64, psi: &mut [f64], w: &mut [f64], guess: f64) -> Result<()> {
        let n = self.nr;
        let linear = lv.cubic.is_linear();
        let q = shoot(
            |q| {
                psi[0] = q;
                w[0] = lv.scri_w(q);
                lv.march_up(psi, w)?;
                Ok(psi[n] - psi_n)
            },
            guess,
            linear,
            self.setup.picard_tol,
            self.setup.picard_max_iter,
        )
        .map_err(|_| Error::NonlinearDivergence { u: lv.u_new, r: 0.0 })?;
        psi[0] = q;
        w[0] = lv.scri_w(q);
        lv.march_up(psi, w)?;
        psi[n] = psi_n;
        Ok(())
    }
}

/// Source replacing b psi^3 on every node, for the frozen Picard iteration.
type FrozenSource<'a> = Option<&'a [f64]>;

fn goursat_core(theta: &ScriProfile, direction: Direction, b: &CoeffB, setup: &GoursatSetup, frozen: FrozenSource) -> Result<ModeField> {
    let mut field = setup.empty_field(ChartTag::Characteristic);
    let nr = setup.grid.nr;
    let ny = nr + 1;
    let nu = setup.grid.nu;
    let mk = Marcher::new(setup, b, nr, field.dy);
    let order: Vec<usize> = match direction {
        Direction::Future => (0..=nu).collect(),
        Direction::Past => (0..=nu).rev().collect(),
    };
    let zero_b = b.is_zero();
    let zeros = vec![0.0; ny];
    let frozen_row = |i: usize| -> &[f64] { &frozen.unwrap()[i * ny..(i + 1) * ny] };
    // The first level carries the zero null data.
    let first = order[0];
    if theta.values[first] != 0.0 {
        return Err(Error::Domain("profile must vanish on the initial null line".into()));
    }
    let mut b_old = if zero_b || frozen.is_some() { zeros.clone() } else { mk.b_row(field.x(first)) };
    for step in 1..order.len() {
        let (io, inew) = (order[step - 1], order[step]);
        let u_new = field.x(inew);
        let b_new = if zero_b || frozen.is_some() { zeros.clone() } else { mk.b_row(u_new) };
        let (cub_old, cub_new) = match frozen {
            Some(_) => (Cubic::Frozen(frozen_row(io)), Cubic::Frozen(frozen_row(inew))),
            None => (Cubic::Implicit(&b_old), Cubic::Implicit(&b_new)),
        };
        let psi_old = field.values[io * ny..(io + 1) * ny].to_vec();
        let w_old = field.deriv[io * ny..(io + 1) * ny].to_vec();
        let s_old = mk.sources(&psi_old, cub_old);
        let lv = Level {
            c: &mk.coeffs,
            k: u_new - field.x(io),
            psi_old: &psi_old,
            w_old: &w_old,
            s_old: &s_old,
            cubic: cub_new,
            tol: setup.picard_tol,
            max_iter: setup.picard_max_iter,
            u_new,
        };
        let mut psi = vec![0.0; ny];
        let mut w = vec![0.0; ny];
        match direction {
            Direction::Future => mk.level_scri_up(&lv, theta.values[inew], &mut psi, &mut w)?,
            Direction::Past => {
                mk.level_scri_down(&lv, theta.values[inew], &mut psi, &mut w, psi_old[nr])?;
                if setup.tube_is_physical(u_new) && psi[nr].abs() > setup.worldtube_tol {
                    return Err(Error::WorldtubeContamination { u: u_new, value: psi[nr].abs(), tol: setup.worldtube_tol });
                }
            }
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("characteristic level u = {u_new}")));
        }
        field.values[inew * ny..(inew + 1) * ny].copy_from_slice(&psi);
        field.deriv[inew * ny..(inew + 1) * ny].copy_from_slice(&w);
        b_old = b_new;
    }
    Ok(field)
}

/// Characteristic solve with data theta on scri and zero data on the initial null line.
/// The cubic term is solved cell by cell.
pub fn solve_goursat(theta: &ScriProfile, direction: Direction, b: &CoeffB, setup: &GoursatSetup) -> Result<ModeField> {
    setup.validate()?;
    setup.check_profile(theta)?;
    goursat_core(theta, direction, b, setup, None)
}

/// Past-directed solve written in the (v, R) chart, v = t + r*, with data theta(v) on past scri
/// and zero data on v = v_min. Used to cross-check the time reflection.
/// The lattice is v_i = -u_max + i du; theta is indexed on that lattice.
pub fn solve_past_direct(theta_v: &[f64], b: &CoeffB, setup: &GoursatSetup) -> Result<ModeField> {
    setup.validate()?;
    let nu = setup.grid.nu;
    let nr = setup.grid.nr;
    if theta_v.len() != nu + 1 {
        return Err(Error::Domain("past profile must have nu + 1 samples".into()));
    }
    if !b.is_static() {
        return Err(Error::Domain("the direct past solve needs a static b".into()));
    }
    if theta_v[0] != 0.0 {
        return Err(Error::Domain("past profile must vanish on the initial null line".into()));
    }
    let mut field = setup.empty_field(ChartTag::PastCharacteristic);
    let ny = nr + 1;
    let h = field.dy;
    let co = Coeffs::new(setup, nr, h);
    let bn: Vec<f64> = (0..=nr).map(|j| b.value(0.0, j as f64 * h)).collect();
    let linear = bn.iter().all(|&x| x == 0.0);
    let src = |j: usize, p: f64| co.v[j] * p + bn[j] * p * p * p;
    for i in 1..=nu {
        let dv = field.x(i) - field.x(i - 1);
        let iv = 1.0 / dv;
        let psi_old = field.values[(i - 1) * ny..i * ny].to_vec();
        let w_old = field.deriv[(i - 1) * ny..i * ny].to_vec();
        let s_old: Vec<f64> = (0..ny).map(|j| src(j, psi_old[j])).collect();
        let mut psi = vec![0.0; ny];
        let mut w = vec![0.0; ny];
        // Box cell in (v, R): (1/dv) [w'_j + w'_{j+1} - w_j - w_{j+1}]
        //   = [a_{j+1}(w'_{j+1} + w_{j+1}) - a_j (w'_j + w_j)] / (2h) - (S_j + S_{j+1} + S'_j + S'_{j+1}) / 4.
        let sweep = |p: f64, psi: &mut [f64], w: &mut [f64]| -> Result<f64> {
            psi[nr] = p;
            w[nr] = 0.0;
            let mut s1 = src(nr, p);
            for j in (0..nr).rev() {
                let q = psi[j + 1] - 0.5 * h * w[j + 1];
                let known = iv * (w[j + 1] - w_old[j] - w_old[j + 1])
                    - (co.a[j + 1] * (w[j + 1] + w_old[j + 1]) - co.a[j] * w_old[j]) / (2.0 * h)
                    + 0.25 * (s_old[j] + s_old[j + 1] + s1);
                // Collecting w'_j: w'_j (den + V h / 8) = known + V q / 4 + b psi'_j^3 / 4.
                let den = -(iv + co.a[j] / (2.0 * h)) + co.v[j] * h / 8.0;
                let base = known + 0.25 * co.v[j] * q;
                let (mut pj, mut wj) = (q - 0.5 * h * base / den, base / den);
                if bn[j] != 0.0 {
                    pj = psi_old[j];
                    let mut settled = false;
                    for _ in 0..setup.picard_max_iter {
                        wj = (base + 0.25 * bn[j] * pj * pj * pj) / den;
                        let next = q - 0.5 * h * wj;
                        let done = (next - pj).abs() <= setup.picard_tol * pj.abs().max(1.0);
                        pj = next;
                        if done {
                            settled = true;
                            break;
                        }
                    }
                    if !settled {
                        return Err(Error::NonlinearDivergence { u: -field.x(i), r: j as f64 * h });
                    }
                    wj = (base + 0.25 * bn[j] * pj * pj * pj) / den;
                }
                psi[j] = pj;
                w[j] = wj;
                s1 = src(j, pj);
            }
            Ok(psi[0] - theta_v[i])
        };
        let p = shoot(|p| sweep(p, &mut psi, &mut w), psi_old[nr], linear, setup.picard_tol, setup.picard_max_iter)?;
        sweep(p, &mut psi, &mut w)?;
        psi[0] = theta_v[i];
        if setup.tube_is_physical(-field.x(i)) && psi[nr].abs() > setup.worldtube_tol {
            return Err(Error::WorldtubeContamination { u: -field.x(i), value: psi[nr].abs(), tol: setup.worldtube_tol });
        }
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("past characteristic level v = {}", field.x(i))));
        }
        field.values[i * ny..(i + 1) * ny].copy_from_slice(&psi);
        field.deriv[i * ny..(i + 1) * ny].copy_from_slice(&w);
    }
    Ok(field)
}

/// Forward transport on [u_c, u_max] x [0, R_ext] from zero data on the cone u = u_c,
/// with psi prescribed on the worldtube column R = R_ext. Returns the field; its
/// column 0 is the scri trace.
pub fn transport_from_worldtube(tube: &[f64], u_c: f64, du: f64, r_ext: f64, nr: usize, b: &CoeffB, setup: &GoursatSetup) -> Result<ModeField> {
    let nu = tube.len() - 1;
    if tube[0].abs() > setup.worldtube_tol {
        return Err(Error::ConeOutsideDomain(format!("worldtube value {:e} on the cone is not zero", tube[0])));
    }
    let h = r_ext / nr as f64;
    let mut field = ModeField::zeros(setup.l, ChartTag::Characteristic, nu + 1, nr + 1, u_c, du, 0.0, h);
    let mk = Marcher::new(setup, b, nr, h);
    let ny = nr + 1;
    let zero_b = b.is_zero();
    let zeros = vec![0.0; ny];
    let mut b_old = if zero_b { zeros.clone() } else { mk.b_row(u_c) };
    for i in 1..=nu {
        let u_new = field.x(i);
        let b_new = if zero_b { zeros.clone() } else { mk.b_row(u_new) };
        let psi_old = field.values[(i - 1) * ny..i * ny].to_vec();
        let w_old = field.deriv[(i - 1) * ny..i * ny].to_vec();
        let s_old = mk.sources(&psi_old, Cubic::Implicit(&b_old));
        let lv = Level {
            c: &mk.coeffs,
            k: du,
            psi_old: &psi_old,
            w_old: &w_old,
            s_old: &s_old,
            cubic: Cubic::Implicit(&b_new),
            tol: setup.picard_tol,
            max_iter: setup.picard_max_iter,
            u_new,
        };
        let mut psi = vec![0.0; ny];
        let mut w = vec![0.0; ny];
        mk.level_tube_up(&lv, tube[i], &mut psi, &mut w, psi_old[0])?;
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("transport level u = {u_new}")));
        }
        field.values[i * ny..(i + 1) * ny].copy_from_slice(&psi);
        field.deriv[i * ny..(i + 1) * ny].copy_from_slice(&w);
        b_old = b_new;
    }
    Ok(field)
}

/// Outcome of the global Picard iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    pub iterations: usize,
    /// Norm of delta_n = u_{n+1} - u_n.
    pub deltas: Vec<f64>,
    /// delta_n / delta_{n-1}.
    pub ratios: Vec<f64>,
    pub converged: bool,
}

impl PicardReport {
    pub fn final_ratio(&self) -> Option<f64> {
        self.ratios.last().copied()
    }
}

/// Sup over u-levels of the discrete slice H1 energy of a lattice function.
pub fn slice_sup_norm(field: &ModeField, params: &ChartParams) -> f64 {
    let ll = (field.l * (field.l + 1)) as f64;
    let m = params.m;
    let h = field.dy;
    let mut best: f64 = 0.0;
    for i in 0..field.nx {
        let u = field.x(i);
        let mut acc = 0.0;
        for j in 0..field.ny {
            let rr = field.y(j);
            let x = u * rr;
            let wt = if j == 0 || j == field.ny - 1 { 0.5 } else { 1.0 };
            let p = field.at(i, j);
            let d = field.d_at(i, j);
            acc += wt * h * (0.5 * ((2.0 + x).powi(2) - 2.0 * m * rr.powi(3) * u * u) * d * d + u * u * 0.5 * (ll + 1.0) * p * p);
        }
        best = best.max(acc);
    }
    best.sqrt()
}

fn difference(a: &ModeField, b: &ModeField) -> ModeField {
    let mut d = a.clone();
    for (x, y) in d.values.iter_mut().zip(&b.values) {
        *x -= y;
    }
    for (x, y) in d.deriv.iter_mut().zip(&b.deriv) {
        *x -= y;
    }
    d
}

/// Global Picard iteration: u_0 is the linear solve, u_{n+1} the linear solve with the
/// frozen source b u_n^3 on every node.
pub fn picard_solve(theta: &ScriProfile, direction: Direction, b: &CoeffB, setup: &GoursatSetup, max_iter: usize, tol: f64) -> Result<(ModeField, PicardReport)> {
    setup.validate()?;
    setup.check_profile(theta)?;
    let ny = setup.grid.nr + 1;
    let mut frozen = vec![0.0; (setup.grid.nu + 1) * ny];
    let mut current = goursat_core(theta, direction, b, setup, Some(&frozen))?;
    let mut report = PicardReport { iterations: 0, deltas: vec![], ratios: vec![], converged: false };
    let h = current.dy;
    let mut up_streak = 0;
    for _ in 0..max_iter {
        for i in 0..current.nx {
            let u = current.x(i);
            for j in 0..ny {
                let p = current.at(i, j);
                frozen[i * ny + j] = b.value(u, j as f64 * h) * p * p * p;
            }
        }
        let next = goursat_core(theta, direction, b, setup, Some(&frozen))?;
        let delta = slice_sup_norm(&difference(&next, &current), &setup.params);
        report.iterations += 1;
        if let Some(&prev) = report.deltas.last() {
            let ratio = if prev > 0.0 { delta / prev } else { 0.0 };
            report.ratios.push(ratio);
            up_streak = if ratio > 1.0 { up_streak + 1 } else { 0 };
        }
        report.deltas.push(delta);
        current = next;
        let scale = slice_sup_norm(&current, &setup.params).max(f64::MIN_POSITIVE);
        if delta <= tol * scale {
            report.converged = true;
            break;
        }
        if up_streak >= 5 {
            return Err(Error::NoContraction { ratios: report.ratios });
        }
    }
    Ok((current, report))
}

/// Roots of X^3 - X/alpha + beta and the small-data test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointAnalysis {
    /// (lambda_0, lambda_1, lambda_2) when all roots are real.
    pub roots: Option<(f64, f64, f64)>,
    pub small_data: bool,
}

pub fn fixed_point_analysis(alpha: f64, beta: f64) -> Result<FixedPointAnalysis> {
    if !(alpha > 0.0) || !(beta >= 0.0) {
        return Err(Error::Domain(format!("need alpha > 0 and beta >= 0, got ({alpha}, {beta})")));
    }
    let small_data = beta * beta < 4.0 / (27.0 * alpha.powi(3));
    if !small_data {
        return Ok(FixedPointAnalysis { roots: None, small_data });
    }
    let amp = (4.0 / (3.0 * alpha)).sqrt();
    let phi = (-(27.0 * beta * beta * alpha.powi(3) / 4.0).sqrt()).acos() / 3.0;
    let k = 2.0 * std::f64::consts::PI / 3.0;
    let l0 = amp * phi.cos();
    let l1 = amp * (phi + k).cos();
    let l2 = amp * (phi + 2.0 * k).cos();
    Ok(FixedPointAnalysis { roots: Some((l0, l1, l2)), small_data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_setup(nu: usize, nr: usize) -> GoursatSetup {
        let params = ChartParams { m: 0.0, u_min: -20.0, u_max: 0.0 - 4.0, r_max: 0.05, eps: 0.1, u0: -5.0 };
        GoursatSetup::new(params, NullGrid { nu, nr }, 0)
    }

    fn schw_setup(nu: usize, nr: usize, l: u32) -> GoursatSetup {
        let params = ChartParams { m: 1.0, u_min: -60.0, u_max: -20.0, r_max: 0.02, eps: 0.1, u0: -30.0 };
        GoursatSetup::new(params, NullGrid { nu, nr }, l)
    }

    fn profile(s: &GoursatSetup, a: f64, b: f64, amp: f64) -> ScriProfile {
        ScriProfile::from_fn(s.l, s.params.u_min, s.du(), s.grid.nu + 1, (a, b), |u| bump(u, a, b, amp)).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let b0 = CoeffB::zero();
        assert_eq!(reduced_equation_rhs(0.0, 0.0, 0.0, -3.0, 0.1, 2, 1.0, &b0), 0.0);
        assert!((reduced_equation_rhs(1.0, 0.0, 0.0, -3.0, 0.1, 1, 1.0, &b0) - 2.2).abs() < 1e-14);
        // m = 0, l = 0: psi = f(u) + g(u + 2/R) solves 2 psi_uR = -(R^2 psi_R)_R.
        let g = |x: f64| (0.3 * x).sin();
        let dg = |x: f64| 0.3 * (0.3 * x).cos();
        let d2g = |x: f64| -0.09 * (0.3 * x).sin();
        let (u, r) = (-2.0, 0.4);
        let x = u + 2.0 / r;
        let psi_r = -2.0 / (r * r) * dg(x);
        let psi_rr = 4.0 / r.powi(3) * dg(x) + 4.0 / r.powi(4) * d2g(x);
        let psi_ur = -2.0 / (r * r) * d2g(x);
        let gval = reduced_equation_rhs(g(x), psi_r, psi_rr, u, r, 0, 0.0, &b0);
        assert!((2.0 * psi_ur - gval).abs() < 1e-12);
        // and any R-independent psi has G = 0.
        assert_eq!(reduced_equation_rhs(0.7, 0.0, 0.0, u, r, 0, 0.0, &b0), 0.0);
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let s = schw_setup(40, 20, 0);
        let th = ScriProfile::zero(0, s.params.u_min, s.du(), 41);
        for dir in [Direction::Future, Direction::Past] {
            let f = solve_goursat(&th, dir, &CoeffB::cutoff(1.0, 0.005, 0.01), &s).unwrap();
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    #[test]
    fn flat_profile_is_constant_along_r() {
        let s = flat_setup(160, 40);
        let th = profile(&s, -15.0, -8.0, 1.0);
        let f = solve_goursat(&th, Direction::Future, &CoeffB::zero(), &s).unwrap();
        for i in 0..f.nx {
            for j in 0..f.ny {
                assert!((f.at(i, j) - th.values[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn scri_trace_is_imposed() {
        let s = schw_setup(80, 20, 1);
        let th = profile(&s, -50.0, -35.0, 0.3);
        for dir in [Direction::Future, Direction::Past] {
            let mut s2 = s;
            s2.worldtube_tol = 1.0;
            let f = solve_goursat(&th, dir, &CoeffB::cutoff(1.0, 0.01, 0.015), &s2).unwrap();
            assert_eq!(f.column(0), th.values);
        }
    }

    fn richardson(dir: Direction) -> f64 {
        let b = CoeffB::zero();
        let params = ChartParams { m: 1.0, u_min: -200.0, u_max: -100.0, r_max: 0.01, eps: 0.1, u0: -120.0 };
        let (lo, hi) = (-180.0, -130.0);
        let mut fields = vec![];
        for k in 0..3 {
            let s = GoursatSetup::new(params, NullGrid { nu: 200 << k, nr: 48 << k }, 1);
            let th = ScriProfile::from_fn(1, s.params.u_min, s.du(), s.grid.nu + 1, (lo, hi), |u| bump(u, lo, hi, 1.0)).unwrap();
            fields.push(solve_goursat(&th, dir, &b, &s).unwrap());
        }
        // compare on the coarse lattice, in the future of Sigma_0
        let f0 = &fields[0];
        let diff = |a: &ModeField, b: &ModeField, step: usize| {
            let mut e: f64 = 0.0;
            for i in 0..f0.nx {
                for j in 0..f0.ny {
                    let future = j == 0 || f0.x(i) + crate::chart::rstar_of_rinv(f0.y(j), 1.0).unwrap() >= 0.0;
                    if future {
                        e = e.max((a.at(i * step, j * step) - b.at(i * 2 * step, j * 2 * step)).abs());
                    }
                }
            }
            e
        };
        let e1 = diff(&fields[0], &fields[1], 1);
        let e2 = diff(&fields[1], &fields[2], 2);
        (e1 / e2).log2()
    }

    #[test]
    fn future_march_is_second_order() {
        let p = richardson(Direction::Future);
        assert!((1.9..=2.1).contains(&p), "order {p}");
    }

    #[test]
    fn past_march_is_second_order() {
        let p = richardson(Direction::Past);
        assert!((1.9..=2.1).contains(&p), "order {p}");
    }

    #[test]
    fn linear_superposition() {
        let s = schw_setup(60, 20, 2);
        let a = profile(&s, -55.0, -40.0, 1.0);
        let c = profile(&s, -45.0, -25.0, -0.5);
        let sum = a.combine(&c, |x, y| x + y).unwrap();
        let b = CoeffB::zero();
        let fa = solve_goursat(&a, Direction::Future, &b, &s).unwrap();
        let fc = solve_goursat(&c, Direction::Future, &b, &s).unwrap();
        let fs = solve_goursat(&sum, Direction::Future, &b, &s).unwrap();
        for k in 0..fs.values.len() {
            assert!((fs.values[k] - fa.values[k] - fc.values[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn causality_before_support() {
        let s = schw_setup(80, 20, 0);
        let th = profile(&s, -45.0, -35.0, 1.0);
        let f = solve_goursat(&th, Direction::Future, &CoeffB::zero(), &s).unwrap();
        for i in 0..f.nx {
            if f.x(i) <= -45.0 {
                assert!(f.row(i).iter().all(|v| v.abs() <= 1e-13));
            }
        }
    }

    #[test]
    fn picard_matches_cell_local_solve() {
        let s = schw_setup(80, 20, 0);
        let th = profile(&s, -50.0, -35.0, 0.5);
        let b = CoeffB::cutoff(1.0, 0.004, 0.008);
        let direct = solve_goursat(&th, Direction::Future, &b, &s).unwrap();
        let tol = 1e-12;
        let (pic, rep) = picard_solve(&th, Direction::Future, &b, &s, 60, tol).unwrap();
        assert!(rep.converged);
        assert!(rep.ratios.iter().all(|&r| r < 1.0), "{:?}", rep.ratios);
        let d = slice_sup_norm(&difference(&pic, &direct), &s.params);
        let scale = slice_sup_norm(&direct, &s.params);
        assert!(d <= 10.0 * tol * scale, "{d} vs {scale}");
    }

    #[test]
    fn picard_linear_is_one_step() {
        let s = schw_setup(40, 10, 0);
        let th = profile(&s, -50.0, -35.0, 0.5);
        let (_, rep) = picard_solve(&th, Direction::Future, &CoeffB::zero(), &s, 10, 1e-12).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.deltas, vec![0.0]);
    }

    #[test]
    fn cardano_examples() {
        let r = fixed_point_analysis(4.0, 0.0).unwrap();
        let (l0, l1, l2) = r.roots.unwrap();
        assert!((l0 - 0.5).abs() < 1e-15 && (l1 + 0.5).abs() < 1e-15 && l2.abs() < 1e-15);
        let r = fixed_point_analysis(1.0, 0.3).unwrap();
        assert!(r.small_data);
        let (l0, l1, l2) = r.roots.unwrap();
        assert!(l1 < 0.0 && 0.0 < l2 && l2 < l0);
        assert!((1.0 * (l2.powi(3) + 0.3) - l2).abs() < 1e-12);
        assert!(!fixed_point_analysis(1.0, 0.5).unwrap().small_data);
    }

    #[test]
    fn past_direct_matches_reflection() {
        let s = schw_setup(80, 20, 0);
        let th = profile(&s, -50.0, -35.0, 0.4);
        let b = CoeffB::cutoff(1.0, 0.01, 0.015);
        let mut s2 = s;
        s2.worldtube_tol = 1.0;
        let fu = solve_goursat(&th, Direction::Past, &b, &s2).unwrap();
        let tv: Vec<f64> = th.values.iter().rev().copied().collect();
        let fv = solve_past_direct(&tv, &b, &s2).unwrap();
        let n = fu.nx;
        for i in 0..n {
            for j in 0..fu.ny {
                assert!((fu.at(i, j) - fv.at(n - 1 - i, j)).abs() <= 1e-12);
            }
        }
    }
}
