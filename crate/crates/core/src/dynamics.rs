//! Spherical shell code with the self-consistent QUMOND field.
//!
//! Each particle is a thin shell `(r, v_r, L, w)`. A shell feels
//! `r̈ = −gN − Δ + L²/r³` where `gN = (M_in + w/2)/r²` counts half of its own
//! weight as interior and
//!
//! ```text
//! Δ = r² [Q((M_in + w)/r²) − Q(M_in/r²)] / w
//! ```
//!
//! is the Mondian pull. Both terms are the exact gradient of the discrete
//! potential energy `E_pot^N + E_pot^Q` of the shell configuration, so the
//! kick–drift–kick leapfrog is symplectic for it and the monitored energy
//! only oscillates at `O(dt²)`.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::equilibrium::{EquilibriumModel, KineticModel};
use crate::error::{Error, Result};
use crate::functionals::{distance_fluid, grad_deviation, integrate_merged};
use crate::interpolation::{Family, InterpolationFunction};
use crate::quad::bracketed_root;
use crate::radial_field::{fmt_f64, RadialDensity, Snapshot};

/// Reflecting boundary relative to the equilibrium radius.
pub const FLOOR_FRACTION: f64 = 1e-6;
/// Smallest ensemble the sampler accepts.
pub const MIN_SHELLS: usize = 1000;
/// Proposals per accepted speed below which sampling is declared broken.
const ACCEPTANCE_FLOOR: f64 = 1e-4;
/// Diagnostic density bins per equilibrium radius.
pub const BINS_PER_RADIUS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shell {
    pub r: f64,
    pub v_r: f64,
    /// Specific angular momentum, constant in time.
    pub l: f64,
    /// Mass weight, constant in time.
    pub w: f64,
    /// Stable index used to break ties between coincident radii.
    pub id: usize,
}

/// Shells kept sorted by `(r, id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellEnsemble {
    shells: Vec<Shell>,
    /// Fixed mass at the origin, zero for a self-gravitating ensemble.
    pub point_mass: f64,
    pub time: f64,
    pub r_floor: f64,
    /// Gravitational accelerations of the sorted shells, if up to date.
    acc: Vec<f64>,
    acc_valid: bool,
}

impl ShellEnsemble {
    pub fn new(r: Vec<f64>, v_r: Vec<f64>, l: Vec<f64>, w: Vec<f64>, r_floor: f64) -> Result<Self> {
        let n = r.len();
        if v_r.len() != n || l.len() != n || w.len() != n {
            return Err(Error::Validation("shell columns differ in length".into()));
        }
        if !(r_floor > 0.0) {
            return Err(Error::Validation(format!(
                "r_floor must be positive, got {r_floor}"
            )));
        }
        if let Some(i) = (0..n)
            .find(|&i| !(r[i] > 0.0 && w[i] > 0.0 && l[i] >= 0.0 && r[i].is_finite() && v_r[i].is_finite()))
        {
            return Err(Error::Validation(format!(
                "shell {i} needs r > 0, w > 0, L >= 0 and finite values"
            )));
        }
        let mut shells: Vec<Shell> = (0..n)
            .map(|i| Shell {
                r: r[i],
                v_r: v_r[i],
                l: l[i],
                w: w[i],
                id: i,
            })
            .collect();
        shells.sort_by(|a, b| a.r.total_cmp(&b.r).then(a.id.cmp(&b.id)));
        Ok(Self {
            shells,
            point_mass: 0.0,
            time: 0.0,
            r_floor,
            acc: vec![0.0; n],
            acc_valid: false,
        })
    }

    /// Adds a fixed point mass at the origin.
    pub fn with_point_mass(mut self, m: f64) -> Self {
        self.point_mass = m;
        self.acc_valid = false;
        self
    }

    pub fn len(&self) -> usize {
        self.shells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shells.is_empty()
    }

    /// Shells sorted by radius.
    pub fn shells(&self) -> &[Shell] {
        &self.shells
    }

    pub fn shell(&self, id: usize) -> Option<&Shell> {
        self.shells.iter().find(|s| s.id == id)
    }

    /// Mass of the shells, excluding any point mass.
    pub fn total_mass(&self) -> f64 {
        self.shells.iter().map(|s| s.w).sum()
    }

    /// Applies `f` to every shell and restores the ordering.
    pub fn map_shells<F: Fn(&mut Shell) + Sync + Send>(&mut self, f: F) {
        self.shells.par_iter_mut().for_each(f);
        self.resort();
        self.acc_valid = false;
    }

    /// Restores the `(r, id)` order. Radii are positive, so their bit
    /// patterns sort like the values: the low bits are traded for the
    /// current position to get single-word keys, and a final insertion pass
    /// settles the few pairs that truncation left out of order.
    fn resort(&mut self) {
        let n = self.shells.len();
        if self.shells.windows(2).all(|w| w[0].r < w[1].r) {
            return;
        }
        let pos_bits = usize::BITS - n.leading_zeros();
        let mask = (1u64 << pos_bits) - 1;
        let mut keys: Vec<u64> = self
            .shells
            .iter()
            .enumerate()
            .map(|(pos, s)| (s.r.to_bits() & !mask) | pos as u64)
            .collect();
        keys.sort_unstable();
        let old = std::mem::take(&mut self.shells);
        self.shells = keys.iter().map(|k| old[(k & mask) as usize]).collect();
        let s = &mut self.shells;
        let after = |a: &Shell, b: &Shell| a.r > b.r || (a.r == b.r && a.id > b.id);
        for j in 1..n {
            let mut k = j;
            while k > 0 && after(&s[k - 1], &s[k]) {
                s.swap(k - 1, k);
                k -= 1;
            }
        }
    }

    /// Calls `visit(range, r, below, wg)` for each run of coincident radii,
    /// `below` including the point mass.
    fn for_each_group<F: FnMut(std::ops::Range<usize>, f64, f64, f64)>(&self, mut visit: F) {
        let s = &self.shells;
        let mut below = self.point_mass;
        let mut j = 0;
        while j < s.len() {
            let r = s[j].r;
            let mut k = j + 1;
            let mut wg = s[j].w;
            while k < s.len() && s[k].r == r {
                wg += s[k].w;
                k += 1;
            }
            visit(j..k, r, below, wg);
            below += wg;
            j = k;
        }
    }

    fn update_accelerations(&mut self, f: &InterpolationFunction) {
        let q = f.kernel();
        let mut acc = std::mem::take(&mut self.acc);
        acc.resize(self.len(), 0.0);
        let c = 2.0 / 3.0 * f.a0.sqrt();
        let mut sqrt_below = self.point_mass.sqrt();
        self.for_each_group(|range, r, below, wg| {
            let above = below + wg;
            let gn = (below + 0.5 * wg) / (r * r);
            let pull = match f.family {
                Family::Sqrt => {
                    // (a^{3/2} − b^{3/2}) / (a − b) without cancellation
                    let sqrt_above = above.sqrt();
                    let x = below / above;
                    let ratio = sqrt_above * (1.0 + x + x * x) / (1.0 + x * sqrt_below / sqrt_above);
                    sqrt_below = sqrt_above;
                    c * ratio / r
                }
                Family::Simple => {
                    let r2 = r * r;
                    r2 * (q.value(above / r2) - q.value(below / r2)) / wg
                }
            };
            acc[range].fill(-gn - pull);
        });
        self.acc = acc;
        self.acc_valid = true;
    }

    /// Gravitational radial acceleration `−gN − Δ` of each shell in sorted
    /// order; the centrifugal term is not included.
    pub fn accelerations(&mut self, f: &InterpolationFunction) -> &[f64] {
        if !self.acc_valid {
            self.update_accelerations(f);
        }
        &self.acc
    }

    /// One kick–drift–kick step of length `dt` (negative `dt` runs backward).
    ///
    /// The drift is the exact force-free motion at fixed `L`, a straight
    /// line in space, so the centrifugal barrier needs no small steps.
    pub fn step(&mut self, f: &InterpolationFunction, dt: f64) {
        if !self.acc_valid {
            self.update_accelerations(f);
        }
        let floor = self.r_floor;
        self.shells
            .par_iter_mut()
            .zip(self.acc.par_iter())
            .with_min_len(4096)
            .for_each(|(s, a)| {
                let v = s.v_r + 0.5 * dt * a;
                let tang = s.l / s.r;
                let (x, y) = (s.r + v * dt, tang * dt);
                let r = (x * x + y * y).sqrt();
                if r >= floor {
                    s.v_r = (s.r * v + (v * v + tang * tang) * dt) / r;
                    s.r = r;
                } else {
                    // through the guard ball: bounce with the free-motion energy
                    let e2 = v * v + tang * tang;
                    s.r = 2.0 * floor - r;
                    s.v_r = (e2 - (s.l / s.r).powi(2)).max(0.0).sqrt();
                }
            });
        self.resort();
        self.update_accelerations(f);
        self.shells
            .par_iter_mut()
            .zip(self.acc.par_iter())
            .with_min_len(4096)
            .for_each(|(s, a)| s.v_r += 0.5 * dt * a);
        self.time += dt;
    }

    /// Flips all radial velocities; with a negated step this retraces the run.
    pub fn reverse(&mut self) {
        self.shells.iter_mut().for_each(|s| s.v_r = -s.v_r);
    }

    /// `Σ ½ w (v_r² + L²/r²)`.
    pub fn kinetic_energy(&self) -> f64 {
        self.shells
            .iter()
            .map(|s| 0.5 * s.w * (s.v_r * s.v_r + s.l * s.l / (s.r * s.r)))
            .sum()
    }

    /// `E_pot^N + E_pot^Q` of the shell configuration, the latter against a
    /// uniform ball of the total mass and radius `reference_radius`. A point
    /// mass contributes its field from `r_floor` outward.
    pub fn potential_energy(&self, f: &InterpolationFunction, reference_radius: f64) -> f64 {
        let q = f.kernel();
        let mut bounds = vec![(self.r_floor, self.point_mass)];
        self.for_each_group(|_, r, below, wg| bounds.push((r, below + wg)));
        let (r_last, m_tot) = bounds[bounds.len() - 1];
        let r_big = r_last.max(reference_radius);

        let mut newton = 0.0;
        let mut mond = 0.0;
        for (k, &(a, m)) in bounds.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let next = bounds.get(k + 1).map(|b| b.0);
            // the point-mass self-energy inside the first shell is a dropped constant
            let inner = if k == 0 { 0.0 } else { 1.0 / a };
            newton += m * m * (inner - next.map_or(0.0, |b| 1.0 / b));
            let b = next.unwrap_or(r_big);
            if b > a {
                mond += match f.family {
                    Family::Sqrt => 2.0 / 3.0 * f.a0.sqrt() * m.powf(1.5) * (b / a).ln(),
                    Family::Simple => integrate_merged(&[a, b], b, |r| r * r * q.value(m / (r * r))),
                };
            }
        }
        let r_ref = reference_radius;
        let reference = integrate_merged(&[0.0, r_ref, r_big], r_big, |r| {
            let g = if r < r_ref {
                m_tot * r / (r_ref * r_ref * r_ref)
            } else {
                m_tot / (r * r)
            };
            r * r * q.value(g)
        });
        -0.5 * newton - (mond - reference)
    }

    pub fn energy(&self, f: &InterpolationFunction, reference_radius: f64) -> f64 {
        self.kinetic_energy() + self.potential_energy(f, reference_radius)
    }

    /// `2K / Σ w r (gN + Δ)`; one for a steady state.
    pub fn virial_ratio(&self, f: &InterpolationFunction) -> f64 {
        let mut e = self.clone();
        e.update_accelerations(f);
        let work: f64 = e.shells.iter().zip(&e.acc).map(|(s, a)| -s.w * s.r * a).sum();
        2.0 * self.kinetic_energy() / work
    }

    /// Cloud-in-cell density on a uniform grid of step `h` covering all shells.
    ///
    /// Nodal masses are divided by the volume of their hat function, so the
    /// piecewise-linear profile carries exactly the deposited mass.
    pub fn binned_density(&self, h: f64) -> Result<RadialDensity> {
        let r_max = self.shells.last().map_or(0.0, |s| s.r);
        let nodes = (r_max / h).floor() as usize + 3;
        let mut mass = vec![0.0; nodes];
        for s in &self.shells {
            let x = s.r / h;
            let j = x.floor() as usize;
            let t = x - j as f64;
            mass[j] += s.w * (1.0 - t);
            mass[j + 1] += s.w * t;
        }
        let grid: Vec<f64> = (0..nodes).map(|i| i as f64 * h).collect();
        let four_pi = 4.0 * std::f64::consts::PI;
        let rho = grid
            .iter()
            .zip(&mass)
            .map(|(&r, &m)| {
                let vol = if r == 0.0 {
                    four_pi * h * h * h / 12.0
                } else {
                    four_pi * h * (r * r + h * h / 6.0)
                };
                m / vol
            })
            .collect();
        RadialDensity::new(grid, rho)
    }

    /// Model snapshot with this ensemble as its shell table.
    pub fn to_snapshot(&self, eq: &EquilibriumModel) -> Snapshot {
        let mut snap = eq.to_snapshot().with_meta("time", fmt_f64(self.time));
        snap.shells = self.shells.iter().map(|s| [s.r, s.v_r, s.l, s.w]).collect();
        snap
    }
}

/// Draws `n` equal-weight shells from `f₀`.
///
/// Radii follow the equilibrium mass profile by inverting `M(r)`; speeds
/// follow the conditional `v² (Φ′)⁻¹(E₀ − U^M(r) − v²/2)`, sampled by
/// rejection in `t = v/v_max`; directions are isotropic.
pub fn sample_from_equilibrium(km: &KineticModel, n: usize, seed: u64) -> Result<ShellEnsemble> {
    if n < MIN_SHELLS {
        return Err(Error::Validation(format!(
            "need at least {MIN_SHELLS} shells, got {n}"
        )));
    }
    let d = &km.base.density;
    let m_tot = d.total_mass();
    let k = km.phi.exponent;
    // t² (1 − t²)^k peaks at t² = 1/(1 + k)
    let peak = {
        let t2 = 1.0 / (1.0 + k);
        t2 * (1.0 - t2).powf(k)
    };
    let floor = FLOOR_FRACTION * km.base.support_radius;
    let drawn: Vec<Result<([f64; 3], usize)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let target = m_tot * rng.gen::<f64>();
            let j = d
                .mass_cum()
                .partition_point(|&m| m < target)
                .clamp(1, d.len() - 1);
            let (a, b) = (d.grid()[j - 1], d.grid()[j]);
            let r = bracketed_root(|r| d.mass_at(r) - target, a, b, 1e-15 * b, 200)?.max(floor);
            let vmax = (2.0 * km.binding(r)).sqrt();
            let mut tries = 0usize;
            let t = loop {
                tries += 1;
                let t: f64 = rng.gen();
                let u: f64 = rng.gen();
                if u * peak <= t * t * (1.0 - t * t).powf(k) {
                    break t;
                }
                if tries as f64 * ACCEPTANCE_FLOOR > 1.0 {
                    return Err(Error::Sampler {
                        rate: 1.0 / tries as f64,
                        floor: ACCEPTANCE_FLOOR,
                    });
                }
            };
            let v = vmax * t;
            let mu: f64 = rng.gen_range(-1.0..1.0);
            Ok(([r, v * mu, r * v * (1.0 - mu * mu).sqrt()], tries))
        })
        .collect();
    let mut r = Vec::with_capacity(n);
    let mut v_r = Vec::with_capacity(n);
    let mut l = Vec::with_capacity(n);
    let mut proposals = 0usize;
    for x in drawn {
        let (s, tries) = x?;
        r.push(s[0]);
        v_r.push(s[1]);
        l.push(s[2]);
        proposals += tries;
    }
    let rate = n as f64 / proposals as f64;
    if rate < ACCEPTANCE_FLOOR {
        return Err(Error::Sampler {
            rate,
            floor: ACCEPTANCE_FLOOR,
        });
    }
    ShellEnsemble::new(r, v_r, l, vec![m_tot / n as f64; n], floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationKind {
    /// `v → (1 + ε) v`.
    VelocityScale,
    /// `r → (1 + ε) r` at fixed tangential speed and weight.
    RadialBreathing,
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::VelocityScale => "velocity_scale",
            Self::RadialBreathing => "radial_breathing",
        })
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "velocity_scale" => Ok(Self::VelocityScale),
            "radial_breathing" => Ok(Self::RadialBreathing),
            _ => Err(Error::Parse(format!(
                "unknown perturbation `{s}` (expected velocity_scale or radial_breathing)"
            ))),
        }
    }
}

pub fn perturb(e: &mut ShellEnsemble, kind: PerturbationKind, eps: f64) {
    let k = 1.0 + eps;
    match kind {
        PerturbationKind::VelocityScale => e.map_shells(|s| {
            s.v_r *= k;
            s.l *= k;
        }),
        PerturbationKind::RadialBreathing => e.map_shells(|s| {
            s.r *= k;
            s.l *= k;
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub d_fluid: f64,
    pub grad_l2_dev: f64,
    pub grad_l32_dev: f64,
    pub energy: f64,
    pub virial: f64,
}

/// Distance of the ensemble from the equilibrium plus conserved quantities.
pub fn diagnose(e: &ShellEnsemble, eq: &EquilibriumModel, reference_radius: f64) -> Result<DiagnosticsRow> {
    let h = eq.support_radius / BINS_PER_RADIUS as f64;
    let binned = e.binned_density(h)?;
    // deposit rounding only; the ensemble carries the equilibrium mass
    let fix = eq.density.total_mass() / binned.total_mass();
    let binned = RadialDensity::new(
        binned.grid().to_vec(),
        binned.rho().iter().map(|x| x * fix).collect(),
    )?;
    Ok(DiagnosticsRow {
        t: e.time,
        d_fluid: distance_fluid(&binned, eq)?,
        grad_l2_dev: grad_deviation(&binned, &eq.density, 2.0)?,
        grad_l32_dev: grad_deviation(&binned, &eq.density, 1.5)?,
        energy: e.energy(&eq.interp, reference_radius),
        virial: e.virial_ratio(&eq.interp),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityDiagnostics {
    pub rows: Vec<DiagnosticsRow>,
    pub dynamical_time: f64,
    pub shells: usize,
    /// Ensemble at the end of the run.
    pub last: ShellEnsemble,
}

impl StabilityDiagnostics {
    pub fn initial(&self) -> DiagnosticsRow {
        self.rows[0]
    }

    /// Component-wise maximum over time; for energy and virial, the value
    /// farthest from the initial one.
    pub fn max(&self) -> DiagnosticsRow {
        let i = self.rows[0];
        let farthest = |a: f64, b: f64, x0: f64| if (b - x0).abs() > (a - x0).abs() { b } else { a };
        let mut m = i;
        for r in &self.rows[1..] {
            m.t = m.t.max(r.t);
            m.d_fluid = m.d_fluid.max(r.d_fluid);
            m.grad_l2_dev = m.grad_l2_dev.max(r.grad_l2_dev);
            m.grad_l32_dev = m.grad_l32_dev.max(r.grad_l32_dev);
            m.energy = farthest(m.energy, r.energy, i.energy);
            m.virial = farthest(m.virial, r.virial, i.virial);
        }
        m
    }

    /// `max_t |E(t) − E(0)| / |E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.rows[0].energy;
        self.rows
            .iter()
            .map(|r| (r.energy - e0).abs())
            .fold(0.0, f64::max)
            / e0.abs()
    }

    /// Largest ratio of a deviation diagnostic to its initial value.
    pub fn growth_factor(&self) -> f64 {
        let (i, m) = (self.initial(), self.max());
        [
            m.d_fluid / i.d_fluid,
            m.grad_l2_dev / i.grad_l2_dev,
            m.grad_l32_dev / i.grad_l32_dev,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Largest ratio, over the deviation diagnostics, of the mean over the
    /// last quarter of the run to the mean over the first quarter.
    pub fn secular_growth(&self) -> f64 {
        let q = (self.rows.len() / 4).max(1);
        let mean = |rows: &[DiagnosticsRow], pick: fn(&DiagnosticsRow) -> f64| {
            rows.iter().map(pick).sum::<f64>() / rows.len() as f64
        };
        let (early, late) = (&self.rows[..q], &self.rows[self.rows.len() - q..]);
        let picks: [fn(&DiagnosticsRow) -> f64; 3] = [|r| r.d_fluid, |r| r.grad_l2_dev, |r| r.grad_l32_dev];
        picks
            .into_iter()
            .map(|p| mean(late, p) / mean(early, p))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,d_fluid,grad_l2_dev,grad_l32_dev,energy,virial\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(r.t),
                fmt_f64(r.d_fluid),
                fmt_f64(r.grad_l2_dev),
                fmt_f64(r.grad_l32_dev),
                fmt_f64(r.energy),
                fmt_f64(r.virial)
            );
        }
        out
    }

    /// `quantity,initial,max` plus the energy drift and growth factor.
    pub fn summary_csv(&self) -> String {
        let (i, m) = (self.initial(), self.max());
        let mut out = String::from("quantity,initial,max\n");
        for (k, a, b) in [
            ("d_fluid", i.d_fluid, m.d_fluid),
            ("grad_l2_dev", i.grad_l2_dev, m.grad_l2_dev),
            ("grad_l32_dev", i.grad_l32_dev, m.grad_l32_dev),
            ("energy", i.energy, m.energy),
            ("virial", i.virial, m.virial),
        ] {
            let _ = writeln!(out, "{k},{},{}", fmt_f64(a), fmt_f64(b));
        }
        let _ = writeln!(out, "energy_drift,0,{}", fmt_f64(self.energy_drift()));
        let _ = writeln!(out, "growth_factor,1,{}", fmt_f64(self.growth_factor()));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub shells: usize,
    /// Step as a fraction of `T_dyn`.
    pub dt_frac: f64,
    /// Run length in units of `T_dyn`.
    pub t_end_dyn: f64,
    /// Diagnostic samples per `T_dyn`.
    pub samples_per_dyn: usize,
    pub seed: u64,
    pub reference_radius: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            shells: 100_000,
            dt_frac: 1.0 / 400.0,
            t_end_dyn: 50.0,
            samples_per_dyn: 4,
            seed: 1,
            reference_radius: crate::functionals::DEFAULT_REFERENCE_RADIUS,
        }
    }
}

/// Perturbation amplitudes accepted by [`run_perturbation`].
pub fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=0.2).contains(&eps) {
        return Err(Error::Validation(format!("eps must lie in [0, 0.2], got {eps}")));
    }
    Ok(())
}

/// Samples `f₀`, applies the perturbation and evolves, recording
/// diagnostics at a fixed cadence.
pub fn run_perturbation(
    km: &KineticModel,
    kind: PerturbationKind,
    eps: f64,
    opts: &RunOptions,
) -> Result<StabilityDiagnostics> {
    check_eps(eps)?;
    if !(opts.dt_frac > 0.0 && opts.t_end_dyn >= 0.0 && opts.samples_per_dyn > 0) {
        return Err(Error::Validation(
            "need dt_frac > 0, t_end_dyn >= 0 and samples_per_dyn > 0".into(),
        ));
    }
    let eq = &km.base;
    let t_dyn = eq.dynamical_time();
    let mut e = sample_from_equilibrium(km, opts.shells, opts.seed)?;
    perturb(&mut e, kind, eps);
    let steps_per_sample = ((1.0 / opts.dt_frac) / opts.samples_per_dyn as f64)
        .round()
        .max(1.0) as usize;
    let dt = t_dyn / (steps_per_sample * opts.samples_per_dyn) as f64;
    let samples = (opts.t_end_dyn * opts.samples_per_dyn as f64).round() as usize;
    let f = eq.interp;
    let mut rows = vec![diagnose(&e, eq, opts.reference_radius)?];
    for _ in 0..samples {
        for _ in 0..steps_per_sample {
            e.step(&f, dt);
        }
        rows.push(diagnose(&e, eq, opts.reference_radius)?);
    }
    Ok(StabilityDiagnostics {
        rows,
        dynamical_time: t_dyn,
        shells: opts.shells,
        last: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ensemble(r: &[f64], v: &[f64], l: &[f64], w: &[f64]) -> ShellEnsemble {
        ShellEnsemble::new(r.to_vec(), v.to_vec(), l.to_vec(), w.to_vec(), 1e-9).unwrap()
    }

    #[test]
    fn circular_orbit_around_point_mass() {
        // gM = 1/r² + 1/r, so v_t² = 2 at r = 1
        let f = InterpolationFunction::sqrt();
        let mut e = ensemble(&[1.0], &[0.0], &[2f64.sqrt()], &[1e-12]).with_point_mass(1.0);
        let period = std::f64::consts::TAU / 2f64.sqrt();
        let steps = 10_000;
        for _ in 0..steps {
            e.step(&f, period / steps as f64);
        }
        assert!((e.shells()[0].r - 1.0).abs() < 1e-4, "{}", e.shells()[0].r);
    }

    #[test]
    fn nested_circular_orbits_are_steady() {
        // unit shell at r = 1/2 sees half itself: gN = 2, pull = (2/3)/(r w) = 4/3;
        // a light shell at r = 1 sees gN = 1 and pull = √gN = 1
        let f = InterpolationFunction::sqrt();
        let l_in = (10.0f64 / 3.0 * 0.125).sqrt();
        let mut e = ensemble(&[0.5, 1.0], &[0.0, 0.0], &[l_in, 2f64.sqrt()], &[1.0, 1e-12]);
        let acc = e.accelerations(&f).to_vec();
        assert_relative_eq!(acc[0], -10.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(acc[1], -2.0, max_relative = 1e-9);
        let period = std::f64::consts::TAU / 2f64.sqrt();
        for _ in 0..2000 {
            e.step(&f, period / 2000.0);
        }
        assert!((e.shells()[0].r - 0.5).abs() < 1e-5);
        assert!((e.shells()[1].r - 1.0).abs() < 1e-5);
        assert_relative_eq!(e.time, period, max_relative = 1e-12);
    }

    #[test]
    fn free_shell_at_rest_stays() {
        let f = InterpolationFunction::sqrt();
        let mut e = ensemble(&[0.5], &[0.0], &[0.0], &[1e-300]);
        for _ in 0..100 {
            e.step(&f, 0.01);
        }
        assert!((e.shells()[0].r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn radial_orbit_passes_the_centre() {
        let f = InterpolationFunction::sqrt();
        let mut e = ensemble(&[0.01], &[-1.0], &[0.0], &[1e-300]);
        e.step(&f, 0.02);
        let s = e.shells()[0];
        assert_relative_eq!(s.r, 0.01, max_relative = 1e-9);
        assert!(s.v_r > 0.0);
    }

    #[test]
    fn leapfrog_is_reversible() {
        let f = InterpolationFunction::simple();
        let n = 50;
        let r: Vec<f64> = (0..n).map(|i| 0.1 + 0.02 * i as f64).collect();
        let v: Vec<f64> = (0..n).map(|i| 0.1 * ((i * 7 % 11) as f64 - 5.0)).collect();
        let l: Vec<f64> = (0..n).map(|i| 0.05 + 0.01 * (i % 5) as f64).collect();
        let w = vec![1.0 / n as f64; n];
        let start = ShellEnsemble::new(r, v, l, w, 1e-6).unwrap();
        let mut e = start.clone();
        for _ in 0..200 {
            e.step(&f, 1e-3);
        }
        assert!(e.shells().iter().zip(start.shells()).any(|(a, b)| a.id != b.id));
        e.reverse();
        for _ in 0..200 {
            e.step(&f, 1e-3);
        }
        e.reverse();
        for s in start.shells() {
            let t = e.shell(s.id).unwrap();
            assert!((t.r - s.r).abs() < 1e-10 && (t.v_r - s.v_r).abs() < 1e-10);
            assert_eq!((t.l, t.w), (s.l, s.w));
        }
    }

    #[test]
    fn force_is_gradient_of_potential() {
        for f in [InterpolationFunction::sqrt(), InterpolationFunction::simple()] {
            let r = [0.3, 0.5, 0.9, 1.4];
            let w = [0.2, 0.5, 0.1, 0.7];
            let zero = [0.0; 4];
            let mut e = ensemble(&r, &zero, &zero, &w).with_point_mass(0.3);
            let acc = e.accelerations(&f).to_vec();
            for i in 0..4 {
                let h = 1e-6;
                let moved = |d: f64| {
                    let mut rr = r;
                    rr[i] += d;
                    ensemble(&rr, &zero, &zero, &w)
                        .with_point_mass(0.3)
                        .potential_energy(&f, 1.0)
                };
                let grad = (moved(h) - moved(-h)) / (2.0 * h);
                assert_relative_eq!(-grad / w[i], acc[i], max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn energy_is_conserved_at_second_order() {
        // nearly circular orbits, so shell crossings do not dominate the error
        let f = InterpolationFunction::sqrt();
        let n = 200;
        let r: Vec<f64> = (0..n).map(|i| 0.2 + 0.004 * i as f64).collect();
        let w = vec![1.0 / n as f64; n];
        let zero = vec![0.0; n];
        let mut cold = ensemble(&r, &zero, &zero, &w);
        let acc = cold.accelerations(&f).to_vec();
        let l: Vec<f64> = (0..n).map(|i| (-acc[i] * r[i].powi(3)).sqrt()).collect();
        let v: Vec<f64> = (0..n)
            .map(|i| 0.01 * ((i * 13 % 17) as f64 / 8.0 - 1.0))
            .collect();
        let drift = |dt: f64| {
            let mut e = ensemble(&r, &v, &l, &w);
            let e0 = e.energy(&f, 1.0);
            let mut worst: f64 = 0.0;
            for _ in 0..(1.0 / dt) as usize {
                e.step(&f, dt);
                worst = worst.max((e.energy(&f, 1.0) - e0).abs());
            }
            worst / e0.abs()
        };
        let (coarse, fine) = (drift(2e-3), drift(1e-3));
        assert!(coarse < 1e-8, "{coarse}");
        assert!(coarse / fine > 3.5, "{coarse} {fine}");
    }

    #[test]
    fn binned_density_keeps_mass() {
        let r: Vec<f64> = (1..=300).map(|i| i as f64 / 300.0).collect();
        let n = r.len();
        let e = ensemble(&r, &vec![0.0; n], &vec![0.0; n], &vec![0.01; n]);
        let d = e.binned_density(0.02).unwrap();
        assert_relative_eq!(d.total_mass(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn perturbation_kind_parses() {
        assert_eq!(
            "velocity_scale".parse::<PerturbationKind>().unwrap(),
            PerturbationKind::VelocityScale
        );
        assert_eq!(PerturbationKind::RadialBreathing.to_string(), "radial_breathing");
        assert!("squeeze".parse::<PerturbationKind>().is_err());
    }
}
