//! Spherically symmetric densities on a radial grid and their Newtonian and
//! Mondian fields.
//!
//! Densities are piecewise linear in `r` between grid nodes. Cumulative mass,
//! accelerations and potentials are all exact functionals of that
//! piecewise-linear profile up to the per-segment Gauss rule, which is what
//! makes energy differences between nearby densities reliable.

mod qumond;
mod snapshot;

pub use qumond::{qumond_direct, QumondOptions};
pub(crate) use snapshot::fmt_f64;
pub use snapshot::{Snapshot, SNAPSHOT_COLUMNS, SNAPSHOT_MAGIC};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::interpolation::{Family, InterpolationFunction};
use crate::quad::{Adaptive, GaussLegendre};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// First node of a standard grid relative to its outer radius.
pub const FIRST_NODE_FRACTION: f64 = 1e-6;
/// Growth factor of the geometric part of a standard grid.
const GEOMETRIC_RATIO: f64 = 1.05;

/// Strictly increasing radii starting at `0`.
///
/// Geometric near the centre (first node at `outer · 10⁻⁶`), uniform once the
/// geometric spacing reaches the uniform one.
pub fn standard_grid(outer: f64, n: usize) -> Vec<f64> {
    assert!(outer > 0.0 && n >= 2);
    let h = outer / n as f64;
    let mut r = vec![0.0, outer * FIRST_NODE_FRACTION];
    loop {
        let last = *r.last().expect("non-empty");
        let step = (last * (GEOMETRIC_RATIO - 1.0)).min(h);
        if last + step >= outer * (1.0 - 1e-12) {
            break;
        }
        r.push(last + step);
    }
    // fold the last partial step into the outer node
    let last = *r.last().expect("non-empty");
    if outer - last < 0.5 * h && r.len() > 2 {
        r.pop();
    }
    r.push(outer);
    r
}

/// Standard grid on `[0, support]` followed by `n_exterior` uniform nodes up
/// to `outer`.
pub fn grid_with_exterior(support: f64, n: usize, outer: f64, n_exterior: usize) -> Vec<f64> {
    let mut r = standard_grid(support, n);
    if outer > support && n_exterior > 0 {
        let h = (outer - support) / n_exterior as f64;
        for k in 1..=n_exterior {
            r.push(if k == n_exterior {
                outer
            } else {
                support + h * k as f64
            });
        }
    }
    r
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Validation("grid needs at least two nodes".into()));
    }
    if grid[0] != 0.0 {
        return Err(Error::Validation(format!(
            "grid must start at r = 0, starts at {}",
            grid[0]
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::Validation(format!(
            "grid not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Mass `4π ∫_a^{a+d} t² ρ(t) dt` of a linear piece with `ρ(a) = rho_a`
/// and slope `beta`.
#[inline]
fn linear_piece_mass(a: f64, d: f64, rho_a: f64, beta: f64) -> f64 {
    let a2 = a * a;
    FOUR_PI
        * (rho_a * (a2 * d + a * d * d + d * d * d / 3.0)
            + beta * (0.5 * a2 * d * d + 2.0 / 3.0 * a * d * d * d + 0.25 * d * d * d * d))
}

/// Cumulative mass `M(r_i) = 4π ∫₀^{r_i} s² ρ(s) ds`, exact for piecewise-linear ρ.
pub fn cumulative_mass(grid: &[f64], rho: &[f64]) -> Result<Vec<f64>> {
    validate_grid(grid)?;
    if grid.len() != rho.len() {
        return Err(Error::Validation(format!(
            "grid has {} nodes but density has {}",
            grid.len(),
            rho.len()
        )));
    }
    if let Some((i, v)) = rho
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
    {
        return Err(Error::Validation(format!(
            "density must be nonnegative and finite, node {i} has {v}"
        )));
    }
    Ok(running_mass(grid, rho))
}

fn running_mass(grid: &[f64], values: &[f64]) -> Vec<f64> {
    let mut m = Vec::with_capacity(grid.len());
    m.push(0.0);
    let mut acc = 0.0;
    for i in 0..grid.len() - 1 {
        let d = grid[i + 1] - grid[i];
        let beta = (values[i + 1] - values[i]) / d;
        acc += linear_piece_mass(grid[i], d, values[i], beta);
        m.push(acc);
    }
    m
}

/// `∫ φ dx` of a signed piecewise-linear profile given by nodal values.
pub fn net_mass(grid: &[f64], values: &[f64]) -> f64 {
    assert_eq!(grid.len(), values.len(), "one value per grid node");
    *running_mass(grid, values).last().expect("non-empty grid")
}

/// A nonnegative spherically symmetric density, piecewise linear in `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDensity {
    grid: Vec<f64>,
    rho: Vec<f64>,
    mass_cum: Vec<f64>,
    total_mass: f64,
    support_radius: f64,
}

impl RadialDensity {
    pub fn new(grid: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let mass_cum = cumulative_mass(&grid, &rho)?;
        let total_mass = *mass_cum.last().expect("validated grid");
        let support_radius = match rho.iter().rposition(|&v| v > 0.0) {
            None => 0.0,
            Some(i) if i + 1 < grid.len() => grid[i + 1],
            Some(i) => grid[i],
        };
        Ok(Self {
            grid,
            rho,
            mass_cum,
            total_mass,
            support_radius,
        })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Vec<f64>, f: F) -> Result<Self> {
        let rho = grid.iter().map(|&r| f(r)).collect();
        Self::new(grid, rho)
    }

    /// Uniform ball of the given mass and radius on a standard grid.
    pub fn uniform_ball(mass: f64, radius: f64, n: usize) -> Result<Self> {
        if !(mass >= 0.0 && radius > 0.0) {
            return Err(Error::Domain(format!(
                "uniform ball needs mass >= 0 and radius > 0, got {mass}, {radius}"
            )));
        }
        let rho0 = 3.0 * mass / (FOUR_PI * radius.powi(3));
        // the step at the edge coincides with the end of the grid
        let grid = standard_grid(radius, n);
        let rho = vec![rho0; grid.len()];
        Self::new(grid, rho)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn mass_cum(&self) -> &[f64] {
        &self.mass_cum
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn outer_radius(&self) -> f64 {
        *self.grid.last().expect("validated grid")
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Index `i` of the segment `[r_i, r_{i+1})` containing `r`, clamped to the grid.
    pub fn segment(&self, r: f64) -> usize {
        let n = self.grid.len();
        match self.grid.partition_point(|&x| x <= r) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    pub fn rho_at(&self, r: f64) -> f64 {
        if r < 0.0 || r >= self.outer_radius() {
            return if r == self.outer_radius() {
                *self.rho.last().expect("non-empty")
            } else {
                0.0
            };
        }
        let i = self.segment(r);
        let (a, b) = (self.grid[i], self.grid[i + 1]);
        let t = (r - a) / (b - a);
        self.rho[i] + t * (self.rho[i + 1] - self.rho[i])
    }

    /// Enclosed mass `M(r)`, exact for the piecewise-linear profile.
    pub fn mass_at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.outer_radius() {
            return self.total_mass;
        }
        let i = self.segment(r);
        let a = self.grid[i];
        let beta = (self.rho[i + 1] - self.rho[i]) / (self.grid[i + 1] - a);
        self.mass_cum[i] + linear_piece_mass(a, r - a, self.rho[i], beta)
    }

    /// Newtonian acceleration magnitude `M(r)/r²`.
    pub fn gn_at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else {
            self.mass_at(r) / (r * r)
        }
    }

    /// `4π ∫ r² F(r) dr` over the grid, with `F` evaluated at Gauss points.
    pub fn integrate_volume<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let gl = GaussLegendre::five();
        let mut acc = 0.0;
        for w in self.grid.windows(2) {
            for (x, wt) in gl.points(w[0], w[1]) {
                acc += wt * x * x * f(x);
            }
        }
        FOUR_PI * acc
    }

    /// L^p norm `(∫ ρ^p dx)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.integrate_volume(|r| self.rho_at(r).powf(p)).powf(1.0 / p)
    }

    /// New density on the same grid with `rho + tau * phi`.
    pub fn perturbed(&self, phi: &[f64], tau: f64) -> Result<Self> {
        if phi.len() != self.rho.len() {
            return Err(Error::Validation("perturbation length mismatch".into()));
        }
        let rho = self
            .rho
            .iter()
            .zip(phi)
            .map(|(r, p)| {
                let v = r + tau * p;
                // roundoff at nodes where the perturbation exactly cancels the density
                if v < 0.0 && v >= -1e-13 * (r.abs() + (tau * p).abs()) {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        Self::new(self.grid.clone(), rho)
    }
}

/// Sorted union of two grids, dropping near-duplicates.
pub(crate) fn merge_grids(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b).copied().collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for x in all {
        match out.last() {
            Some(&l) if x - l <= 1e-14 * x.abs().max(1e-300) => {}
            _ => out.push(x),
        }
    }
    out
}

/// Per-node Newtonian acceleration `M(r_i)/r_i²` (zero at the centre).
pub fn newtonian_field(d: &RadialDensity) -> Vec<f64> {
    d.grid
        .iter()
        .zip(&d.mass_cum)
        .map(|(&r, &m)| if r > 0.0 { m / (r * r) } else { 0.0 })
        .collect()
}

/// Per-node Mondian acceleration `gN + λ(gN) gN`.
pub fn mond_field(d: &RadialDensity, f: &InterpolationFunction) -> Vec<f64> {
    newtonian_field(d)
        .into_iter()
        .map(|g| f.mond_acceleration(g))
        .collect()
}

/// Additive convention for the Mondian potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialNormalization {
    /// `U^M(R₀) = 0` at the support radius.
    SurfaceZero,
    /// `U^M(0) = 0`.
    CenterZero,
    /// `U^N → 0` at infinity and `U^λ(0) = 0`.
    #[default]
    NewtonianAtInfinity,
}

impl fmt::Display for PotentialNormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PotentialNormalization::SurfaceZero => "surface_zero",
            PotentialNormalization::CenterZero => "center_zero",
            PotentialNormalization::NewtonianAtInfinity => "newtonian_at_infinity",
        })
    }
}

impl FromStr for PotentialNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "surface_zero" => Ok(Self::SurfaceZero),
            "center_zero" => Ok(Self::CenterZero),
            "newtonian_at_infinity" => Ok(Self::NewtonianAtInfinity),
            other => Err(Error::Parse(format!("unknown normalization `{other}`"))),
        }
    }
}

/// ∫_a^b F(s) ds for a field that may behave like √s at the origin.
///
/// The segment touching `r = 0` is integrated in `u = √s`.
pub(crate) fn integrate_segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let gl = GaussLegendre::five();
    if a == 0.0 {
        gl.integrate(|u| 2.0 * u * f(u * u), 0.0, b.sqrt())
    } else {
        gl.integrate(f, a, b)
    }
}

/// Newtonian and Mondian accelerations and potentials of one density.
#[derive(Debug, Clone)]
pub struct FieldProfile {
    density: RadialDensity,
    interp: InterpolationFunction,
    normalization: PotentialNormalization,
    pub gn: Vec<f64>,
    pub gm: Vec<f64>,
    pub un: Vec<f64>,
    pub ulam: Vec<f64>,
    pub um: Vec<f64>,
    offset: f64,
}

/// Fields and potentials of `d` under interpolation `f`.
///
/// `U^N(r) = −M/R − ∫_r^R gN`, `U^λ(r) = ∫₀^r λ(gN) gN` and
/// `U^M = U^N + U^λ + offset`, with the offset fixed by `norm`.
pub fn potentials(
    d: &RadialDensity,
    f: &InterpolationFunction,
    norm: PotentialNormalization,
) -> FieldProfile {
    let n = d.len();
    let gn = newtonian_field(d);
    let gm: Vec<f64> = gn.iter().map(|&g| f.mond_acceleration(g)).collect();

    let gn_fn = |s: f64| d.gn_at(s);
    let boost_fn = |s: f64| f.boost(d.gn_at(s));

    let mut ulam = vec![0.0; n];
    for i in 0..n - 1 {
        ulam[i + 1] = ulam[i] + integrate_segment(&boost_fn, d.grid[i], d.grid[i + 1]);
    }
    let mut un = vec![0.0; n];
    let r_out = d.outer_radius();
    un[n - 1] = -d.total_mass / r_out;
    for i in (0..n - 1).rev() {
        un[i] = un[i + 1] - integrate_segment(&gn_fn, d.grid[i], d.grid[i + 1]);
    }

    let mut prof = FieldProfile {
        density: d.clone(),
        interp: *f,
        normalization: norm,
        gn,
        gm,
        un,
        ulam,
        um: Vec::new(),
        offset: 0.0,
    };
    prof.offset = match norm {
        PotentialNormalization::NewtonianAtInfinity => 0.0,
        PotentialNormalization::CenterZero => -(prof.un[0] + prof.ulam[0]),
        PotentialNormalization::SurfaceZero => {
            let r0 = d.support_radius;
            -(prof.un_at(r0) + prof.ulam_at(r0))
        }
    };
    prof.um = prof
        .un
        .iter()
        .zip(&prof.ulam)
        .map(|(a, b)| a + b + prof.offset)
        .collect();
    prof
}

impl FieldProfile {
    pub fn density(&self) -> &RadialDensity {
        &self.density
    }

    pub fn grid(&self) -> &[f64] {
        &self.density.grid
    }

    pub fn interpolation(&self) -> &InterpolationFunction {
        &self.interp
    }

    pub fn normalization(&self) -> PotentialNormalization {
        self.normalization
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn gn_at(&self, r: f64) -> f64 {
        self.density.gn_at(r)
    }

    pub fn gm_at(&self, r: f64) -> f64 {
        self.interp.mond_acceleration(self.density.gn_at(r))
    }

    /// Newtonian potential at any radius.
    pub fn un_at(&self, r: f64) -> f64 {
        let d = &self.density;
        let r_out = d.outer_radius();
        if r >= r_out {
            return -d.total_mass / r;
        }
        let r = r.max(0.0);
        let i = d.segment(r);
        self.un[i] + integrate_segment(&|s| d.gn_at(s), d.grid[i], r)
    }

    /// Mondian correction potential `U^λ` at any radius, `U^λ(0) = 0`.
    pub fn ulam_at(&self, r: f64) -> f64 {
        let d = &self.density;
        let f = self.interp;
        let r_out = d.outer_radius();
        let last = *self.ulam.last().expect("non-empty");
        if r >= r_out {
            return last + self.exterior_ulam(r_out, r);
        }
        let r = r.max(0.0);
        let i = d.segment(r);
        self.ulam[i] + integrate_segment(&|s| f.boost(d.gn_at(s)), d.grid[i], r)
    }

    /// `∫_a^b λ(M/s²) M/s² ds` outside all mass.
    fn exterior_ulam(&self, a: f64, b: f64) -> f64 {
        let m = self.density.total_mass;
        if m <= 0.0 || b <= a {
            return 0.0;
        }
        match self.interp.family {
            Family::Sqrt => (self.interp.a0 * m).sqrt() * (b / a).ln(),
            Family::Simple => {
                let f = self.interp;
                // in t = ln s the integrand is smooth and bounded
                Adaptive::new(1e-12)
                    .with_abs(0.0)
                    .integrate(
                        |t: f64| {
                            let s = t.exp();
                            s * f.boost(m / (s * s))
                        },
                        a.ln(),
                        b.ln(),
                    )
                    .unwrap_or_else(|e| match e {
                        Error::ToleranceNotMet { estimate, .. } => estimate,
                        _ => f64::NAN,
                    })
            }
        }
    }

    /// Mondian potential `U^M` at any radius under this profile's normalization.
    pub fn um_at(&self, r: f64) -> f64 {
        self.un_at(r) + self.ulam_at(r) + self.offset
    }
}
