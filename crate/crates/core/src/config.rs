//! Run configuration: flat INI sections, validated before any solve.

use std::path::PathBuf;

use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::analysis::{LipschitzMap, LipschitzOptions, PicardLabOptions, SlowdownOptions};
use crate::cauchygrid::CauchyOptions;
use crate::chart::ChartParams;
use crate::coeff::CoeffB;
use crate::energy::AuditOptions;
use crate::error::{Error, Result};
use crate::nullgrid::{bump, Direction, GoursatSetup, NullGrid, ScriProfile};
use crate::scatter::ScatterSetup;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BChoice {
    Zero,
    Constant { c: f64 },
    Cutoff { c: f64, r1: f64, r2: f64 },
    Power { c: f64, p: f64 },
}

impl BChoice {
    pub fn build(&self) -> CoeffB {
        match *self {
            BChoice::Zero => CoeffB::zero(),
            BChoice::Constant { c } => CoeffB::constant(c),
            BChoice::Cutoff { c, r1, r2 } => CoeffB::cutoff(c, r1, r2),
            BChoice::Power { c, p } => CoeffB::power(c, p),
        }
    }
}

/// Scri data: a C-infinity bump on [lo, hi]; Cauchy data: a Gaussian in r*.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub amp: f64,
    pub lo: f64,
    pub hi: f64,
    pub centre: f64,
    pub width: f64,
    /// Fraction of the Cauchy pulse moving outward.
    pub outgoing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchySpec {
    pub rstar_min: f64,
    pub rstar_max: f64,
    pub cells: usize,
    pub t_end: f64,
    pub courant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabSpec {
    pub sobolev_t: Vec<f64>,
    pub density_n: Vec<f64>,
    pub slowdown_lambda: Vec<f64>,
    pub slowdown_kappa: Option<f64>,
    pub lipschitz_map: LipschitzMap,
    pub lipschitz_pairs: usize,
    pub lipschitz_radius: f64,
    pub picard_samples: usize,
    pub picard_fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub chart: ChartParams,
    pub grid: NullGrid,
    pub l: u32,
    pub direction: Direction,
    pub b: BChoice,
    pub data: DataSpec,
    pub cauchy: CauchySpec,
    pub worldtube_tol: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub taper_width: Option<f64>,
    pub support_margin: Option<f64>,
    pub cone_shift: usize,
    pub inverse: bool,
    pub leaves: usize,
    pub p_branch: Option<f64>,
    pub audit_nu: usize,
    pub audit_nr: usize,
    pub lab: LabSpec,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            chart: ChartParams { m: 1.0, u_min: -200.0, u_max: -100.0, r_max: 0.01, eps: 0.1, u0: -150.0 },
            grid: NullGrid { nu: 400, nr: 48 },
            l: 0,
            direction: Direction::Past,
            b: BChoice::Zero,
            data: DataSpec { amp: 1.0, lo: -170.0, hi: -130.0, centre: 150.0, width: 3.0, outgoing: 1.0 },
            cauchy: CauchySpec { rstar_min: 100.0, rstar_max: 220.0, cells: 960, t_end: 20.0, courant: 0.5 },
            worldtube_tol: 1e-8,
            picard_tol: 1e-13,
            picard_max_iter: 50,
            taper_width: None,
            support_margin: None,
            cone_shift: 0,
            inverse: false,
            leaves: 32,
            p_branch: None,
            audit_nu: 200,
            audit_nr: 200,
            lab: LabSpec {
                sobolev_t: (0..=10).map(|k| 0.1 * 10f64.powf(k as f64 / 10.0)).collect(),
                density_n: (0..9).map(|k| 2f64.powi(k)).collect(),
                slowdown_lambda: vec![0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
                slowdown_kappa: None,
                lipschitz_map: LipschitzMap::T0Plus,
                lipschitz_pairs: 20,
                lipschitz_radius: 0.1,
                picard_samples: 1000,
                picard_fractions: vec![0.01, 0.05, 0.1, 0.3, 0.6, 0.9],
            },
            out: PathBuf::from("out"),
            seed: 7,
            threads: None,
        }
    }
}

fn list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|e| Error::Config(format!("bad number {x:?} in list: {e}")))).collect()
}

fn num<T: std::str::FromStr>(section: &str, key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse::<T>().map_err(|e| Error::Config(format!("[{section}] {key} = {v:?}: {e}")))
}

impl RunConfig {
    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        let mut c = RunConfig::default();
        let mut b_family = String::from("zero");
        let (mut bc, mut br1, mut br2, mut bp) = (1.0, 0.003, 0.006, 1.0);
        for (sec, props) in ini.iter() {
            let sec = sec.unwrap_or("");
            for (k, v) in props.iter() {
                match (sec, k) {
                    ("chart", "m") => c.chart.m = num(sec, k, v)?,
                    ("chart", "u_min") => c.chart.u_min = num(sec, k, v)?,
                    ("chart", "u_max") => c.chart.u_max = num(sec, k, v)?,
                    ("chart", "r_max") => c.chart.r_max = num(sec, k, v)?,
                    ("chart", "eps") => c.chart.eps = num(sec, k, v)?,
                    ("chart", "u0") => c.chart.u0 = num(sec, k, v)?,
                    ("grid", "nu") => c.grid.nu = num(sec, k, v)?,
                    ("grid", "nr") => c.grid.nr = num(sec, k, v)?,
                    ("grid", "l") => c.l = num(sec, k, v)?,
                    ("grid", "direction") => {
                        c.direction = match v.trim() {
                            "past" => Direction::Past,
                            "future" => Direction::Future,
                            o => return Err(Error::Config(format!("[grid] direction must be past or future, got {o:?}"))),
                        }
                    }
                    ("b", "family") => b_family = v.trim().to_string(),
                    ("b", "c") => bc = num(sec, k, v)?,
                    ("b", "r1") => br1 = num(sec, k, v)?,
                    ("b", "r2") => br2 = num(sec, k, v)?,
                    ("b", "p") => bp = num(sec, k, v)?,
                    ("data", "amp") => c.data.amp = num(sec, k, v)?,
                    ("data", "lo") => c.data.lo = num(sec, k, v)?,
                    ("data", "hi") => c.data.hi = num(sec, k, v)?,
                    ("data", "centre") => c.data.centre = num(sec, k, v)?,
                    ("data", "width") => c.data.width = num(sec, k, v)?,
                    ("data", "outgoing") => c.data.outgoing = num(sec, k, v)?,
                    ("cauchy", "rstar_min") => c.cauchy.rstar_min = num(sec, k, v)?,
                    ("cauchy", "rstar_max") => c.cauchy.rstar_max = num(sec, k, v)?,
                    ("cauchy", "cells") => c.cauchy.cells = num(sec, k, v)?,
                    ("cauchy", "t_end") => c.cauchy.t_end = num(sec, k, v)?,
                    ("cauchy", "courant") => c.cauchy.courant = num(sec, k, v)?,
                    ("tolerances", "worldtube") => c.worldtube_tol = num(sec, k, v)?,
                    ("tolerances", "picard") => c.picard_tol = num(sec, k, v)?,
                    ("tolerances", "picard_max_iter") => c.picard_max_iter = num(sec, k, v)?,
                    ("scatter", "taper_width") => c.taper_width = Some(num(sec, k, v)?),
                    ("scatter", "support_margin") => c.support_margin = Some(num(sec, k, v)?),
                    ("scatter", "cone_shift") => c.cone_shift = num(sec, k, v)?,
                    ("scatter", "inverse") => c.inverse = num(sec, k, v)?,
                    ("energy", "leaves") => c.leaves = num(sec, k, v)?,
                    ("energy", "p_branch") => c.p_branch = Some(num(sec, k, v)?),
                    ("audit", "nu") => c.audit_nu = num(sec, k, v)?,
                    ("audit", "nr") => c.audit_nr = num(sec, k, v)?,
                    ("lab", "sobolev_t") => c.lab.sobolev_t = list(v)?,
                    ("lab", "density_n") => c.lab.density_n = list(v)?,
                    ("lab", "slowdown_lambda") => c.lab.slowdown_lambda = list(v)?,
                    ("lab", "slowdown_kappa") => c.lab.slowdown_kappa = Some(num(sec, k, v)?),
                    ("lab", "lipschitz_map") => {
                        c.lab.lipschitz_map = match v.trim() {
                            "t0plus" => LipschitzMap::T0Plus,
                            "tplus0" => LipschitzMap::TPlus0,
                            "scattering" => LipschitzMap::Scattering,
                            o => return Err(Error::Config(format!("[lab] lipschitz_map must be t0plus, tplus0 or scattering, got {o:?}"))),
                        }
                    }
                    ("lab", "lipschitz_pairs") => c.lab.lipschitz_pairs = num(sec, k, v)?,
                    ("lab", "lipschitz_radius") => c.lab.lipschitz_radius = num(sec, k, v)?,
                    ("lab", "picard_samples") => c.lab.picard_samples = num(sec, k, v)?,
                    ("lab", "picard_fractions") => c.lab.picard_fractions = list(v)?,
                    ("run", "out") => c.out = PathBuf::from(v.trim()),
                    ("run", "seed") => c.seed = num(sec, k, v)?,
                    ("run", "threads") => c.threads = Some(num(sec, k, v)?),
                    _ => return Err(Error::Config(format!("unknown key [{sec}] {k}"))),
                }
            }
        }
        c.b = match b_family.as_str() {
            "zero" => BChoice::Zero,
            "constant" => BChoice::Constant { c: bc },
            "cutoff" => BChoice::Cutoff { c: bc, r1: br1, r2: br2 },
            "power" => BChoice::Power { c: bc, p: bp },
            o => return Err(Error::Config(format!("[b] family must be zero, constant, cutoff or power, got {o:?}"))),
        };
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_ini_str(&std::fs::read_to_string(path)?)
    }

    /// Checks every field against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        self.chart.validate()?;
        self.goursat().validate()?;
        let d = &self.data;
        if !(d.amp.is_finite() && d.lo < d.hi && d.width > 0.0 && (0.0..=1.0).contains(&d.outgoing)) {
            return Err(Error::Config("data: need finite amp, lo < hi, width > 0, outgoing in [0, 1]".into()));
        }
        if !(d.lo > self.chart.u_min && d.hi < self.chart.u_max) {
            return Err(Error::Config(format!("data support [{}, {}] must sit inside ({}, {})", d.lo, d.hi, self.chart.u_min, self.chart.u_max)));
        }
        let cs = &self.cauchy;
        if !(cs.rstar_min < cs.rstar_max && cs.cells >= 8 && cs.t_end > 0.0 && cs.courant > 0.0) {
            return Err(Error::Config("cauchy: need rstar_min < rstar_max, cells >= 8, t_end > 0, courant > 0".into()));
        }
        if !(self.worldtube_tol > 0.0 && self.picard_tol > 0.0 && self.picard_max_iter > 0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.leaves < 2 || self.audit_nu < 2 || self.audit_nr < 2 {
            return Err(Error::Config("energy leaves and audit samples must be at least 2".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.scatter().validate()?;
        Ok(())
    }

    pub fn goursat(&self) -> GoursatSetup {
        let mut s = GoursatSetup::new(self.chart, self.grid, self.l);
        s.worldtube_tol = self.worldtube_tol;
        s.picard_tol = self.picard_tol;
        s.picard_max_iter = self.picard_max_iter;
        s
    }

    pub fn scatter(&self) -> ScatterSetup {
        let mut s = ScatterSetup::new(self.goursat());
        if let Some(w) = self.taper_width {
            s.taper_width = w;
        }
        if let Some(w) = self.support_margin {
            s.support_margin = w;
        }
        s.cone_shift = self.cone_shift;
        s
    }

    pub fn coeff_b(&self) -> CoeffB {
        self.b.build()
    }

    pub fn scri_data(&self) -> Result<ScriProfile> {
        let g = self.goursat();
        let d = &self.data;
        ScriProfile::from_fn(self.l, self.chart.u_min, g.du(), self.grid.nu + 1, (d.lo, d.hi), |u| bump(u, d.lo, d.hi, d.amp))
    }

    pub fn cauchy_options(&self) -> CauchyOptions {
        CauchyOptions { courant: self.cauchy.courant, energy_stride: Some(1), ..CauchyOptions::default() }
    }

    pub fn audit_options(&self) -> AuditOptions {
        AuditOptions { leaves: self.leaves, p_branch: self.p_branch, ..AuditOptions::default() }
    }

    pub fn slowdown_options(&self) -> SlowdownOptions {
        SlowdownOptions { kappa: self.lab.slowdown_kappa, ..SlowdownOptions::default() }
    }

    pub fn lipschitz_options(&self) -> LipschitzOptions {
        let d = &self.data;
        LipschitzOptions { pairs: self.lab.lipschitz_pairs, seed: self.seed, radius: self.lab.lipschitz_radius, window: (d.lo, d.hi), ..LipschitzOptions::default() }
    }

    pub fn picard_options(&self) -> PicardLabOptions {
        PicardLabOptions { samples: self.lab.picard_samples, seed: self.seed, fractions: self.lab.picard_fractions.clone() }
    }

    /// Same configuration on a lattice refined by `k` in every direction.
    pub fn refined(&self, k: usize) -> Self {
        let mut c = self.clone();
        c.grid = NullGrid { nu: self.grid.nu * k, nr: self.grid.nr * k };
        c.cauchy.cells *= k;
        c.audit_nu *= k;
        c.audit_nr *= k;
        c
    }

    /// Canonical JSON used for the manifest hash.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}
