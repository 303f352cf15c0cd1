//! Prior of one real component of a hidden-vector entry and the scalar
//! conditional-mean denoiser applied to it.
//!
//! An entry is zero unless it holds the active signature of its sub-block
//! (probability `2^-l`), in which case it equals `|U| cos(phi)` for a neighbor
//! amplitude `|U|` and uniform phase. The continuous part is tabulated as a
//! piecewise-linear density, so posterior moments under Gaussian noise have
//! closed forms segment by segment.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::geometry::AmplitudeLaw;
use crate::quad;
use crate::special::{erf, erfcx};

/// Tabulation of the continuous part of the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorGrid {
    /// Knots on `[0, sqrt(theta)]`, clustered towards `sqrt(theta)`.
    pub inner_points: usize,
    /// Geometrically spaced knots on `[sqrt(theta), u_max]`.
    pub outer_points: usize,
    /// Amplitude tail probability cut off by truncation.
    pub tail_mass: f64,
    /// Largest tolerated deviation of the tabulated mass from one before the
    /// table is renormalized.
    pub mass_tolerance: f64,
}

impl Default for PriorGrid {
    fn default() -> Self {
        PriorGrid {
            inner_points: 96,
            outer_points: 1024,
            tail_mass: 1e-6,
            mass_tolerance: 2e-4,
        }
    }
}

/// Mixture of point masses and a piecewise-linear density.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    atoms: Vec<(f64, f64)>,
    knots: Vec<f64>,
    density: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl PriorModel {
    /// Prior made of point masses `(location, mass)` only.
    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(atoms, Vec::new(), Vec::new())
    }

    /// General mixture. `density` holds the continuous density at each knot
    /// and is linear in between; it vanishes outside the knot range.
    pub fn new(atoms: Vec<(f64, f64)>, knots: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if knots.len() != density.len() || knots.len() == 1 {
            return Err(Error::param("knots", "need matching knots and density, at least two"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("knots", "must be strictly increasing"));
        }
        if density.iter().any(|&d| !(d >= 0.0) || !d.is_finite()) {
            return Err(Error::param("density", "must be finite and non-negative"));
        }
        if atoms.iter().any(|&(x, w)| !x.is_finite() || !(w >= 0.0)) {
            return Err(Error::param("atoms", "must have finite locations and non-negative mass"));
        }
        let mut prior = PriorModel {
            atoms,
            knots,
            density,
            mean: 0.0,
            variance: 0.0,
        };
        let [m0, m1, m2] = prior.raw_moments();
        if !(m0 > 0.0) {
            return Err(Error::param("atoms", "prior has zero total mass"));
        }
        prior.mean = m1 / m0;
        prior.variance = (m2 / m0 - prior.mean * prior.mean).max(0.0);
        Ok(prior)
    }

    fn raw_moments(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for &(x, w) in &self.atoms {
            m[0] += w;
            m[1] += w * x;
            m[2] += w * x * x;
        }
        for i in 0..self.knots.len().saturating_sub(1) {
            let (a, b) = (self.knots[i], self.knots[i + 1]);
            let (fa, fb) = (self.density[i], self.density[i + 1]);
            // exact moments of a linear density on [a, b]
            let h = b - a;
            m[0] += h * (fa + fb) / 2.0;
            m[1] += h * (fa * (2.0 * a + b) + fb * (a + 2.0 * b)) / 6.0;
            m[2] += h
                * (fa * (3.0 * a * a + 2.0 * a * b + b * b) + fb * (a * a + 2.0 * a * b + 3.0 * b * b))
                / 12.0;
        }
        m
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn total_mass(&self) -> f64 {
        self.raw_moments()[0]
    }

    pub fn continuous_mass(&self) -> f64 {
        self.continuous_mass_between(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Mass of the continuous part on `[lo, hi]`.
    pub fn continuous_mass_between(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.knots.len().saturating_sub(1) {
            let (a, b) = (self.knots[i], self.knots[i + 1]);
            let (l, r) = (a.max(lo), b.min(hi));
            if r <= l {
                continue;
            }
            let fl = self.density_at(l);
            let fr = self.density_at(r);
            total += (r - l) * (fl + fr) / 2.0;
        }
        total
    }

    /// Continuous density at `x`.
    pub fn density_at(&self, x: f64) -> f64 {
        let k = &self.knots;
        if k.is_empty() || x < k[0] || x > k[k.len() - 1] {
            return 0.0;
        }
        let i = k.partition_point(|&v| v <= x).saturating_sub(1).min(k.len() - 2);
        let t = (x - k[i]) / (k[i + 1] - k[i]);
        self.density[i] + t * (self.density[i + 1] - self.density[i])
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Largest `|x|` carrying prior mass.
    pub fn support(&self) -> f64 {
        let atoms = self.atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max);
        let cont = match (self.knots.first(), self.knots.last()) {
            (Some(a), Some(b)) => a.abs().max(b.abs()),
            _ => 0.0,
        };
        atoms.max(cont)
    }
}

/// Prior of the real part of a hidden-vector entry: an atom of mass
/// `1 - 2^-l` at zero plus `2^-l` times the density of `|U| cos(phi)`, where
/// `|U|` follows the neighbor amplitude law truncated at its `1 - tail_mass`
/// quantile.
pub fn build_prior(theta: f64, alpha: f64, message_bits: u32, grid: &PriorGrid) -> Result<PriorModel> {
    if !(alpha > 2.0) {
        return Err(Error::param("alpha", "must exceed 2"));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::param("theta", "must be finite and positive"));
    }
    if !(grid.tail_mass > 0.0 && grid.tail_mass < 1.0) {
        return Err(Error::param("tail_mass", "must lie in (0, 1)"));
    }
    if grid.inner_points < 2 || grid.outer_points < 2 {
        return Err(Error::param("grid", "need at least two points per region"));
    }
    let law = AmplitudeLaw { theta, alpha };
    let r0 = law.min_amplitude();
    let umax = law.upper_quantile(grid.tail_mass);
    let keep = 1.0 - grid.tail_mass;

    let mut positive = Vec::with_capacity(grid.inner_points + grid.outer_points + 1);
    for j in 0..grid.inner_points {
        let s = 1.0 - j as f64 / grid.inner_points as f64;
        positive.push(r0 * (1.0 - s * s));
    }
    let ratio = (umax / r0).ln() / grid.outer_points as f64;
    for j in 0..=grid.outer_points {
        positive.push(if j == grid.outer_points {
            umax
        } else {
            r0 * (ratio * j as f64).exp()
        });
    }

    let mut values = Vec::with_capacity(positive.len());
    for &v in &positive {
        values.push(real_part_density(&law, v, umax)? / keep);
    }

    let mut knots: Vec<f64> = positive.iter().rev().map(|v| -v).collect();
    knots.pop(); // -0
    knots.extend_from_slice(&positive);
    let mut dens: Vec<f64> = values.iter().rev().copied().collect();
    dens.pop();
    dens.extend_from_slice(&values);

    let mass: f64 = knots
        .windows(2)
        .zip(dens.windows(2))
        .map(|(k, d)| (k[1] - k[0]) * (d[0] + d[1]) / 2.0)
        .sum();
    if (mass - 1.0).abs() > grid.mass_tolerance {
        return Err(Error::Refinement {
            mass,
            tolerance: grid.mass_tolerance,
        });
    }
    let active = (-(message_bits as f64) * std::f64::consts::LN_2).exp();
    for d in dens.iter_mut() {
        *d *= active / mass;
    }
    PriorModel::new(vec![(0.0, 1.0 - active)], knots, dens)
}

/// Density of `A cos(phi)` at `v` for `A` following `law` restricted to
/// `[sqrt(theta), umax]` (unnormalized by the truncation), `phi` uniform.
///
/// With `A = |v| cosh(w)` the arcsine kernel cancels and the integrand is
/// smooth: `f(v) = (1/pi) int p(|v| cosh w) dw`.
fn real_part_density(law: &AmplitudeLaw, v: f64, umax: f64) -> Result<f64> {
    let r0 = law.min_amplitude();
    let v = v.abs();
    let k = 4.0 / law.alpha;
    if v == 0.0 {
        // (1/pi) int p(a)/a da over [r0, umax]
        let c = k * law.theta.powf(2.0 / law.alpha) / (k + 1.0);
        return Ok(c * (r0.powf(-(k + 1.0)) - umax.powf(-(k + 1.0))) / PI);
    }
    if v >= umax {
        return Ok(0.0);
    }
    let lo = if v < r0 { (r0 / v).acosh() } else { 0.0 };
    let hi = (umax / v).acosh();
    if hi <= lo {
        return Ok(0.0);
    }
    let scale = law.pdf(v.max(r0));
    let mut panels = vec![lo];
    let mut w = lo;
    while w + 1.0 < hi {
        w += 1.0;
        panels.push(w);
    }
    panels.push(hi);
    let f = |w: f64| law.pdf(v * w.cosh());
    let val = quad::integrate_panels(f, &panels, 1e-11 * scale)?;
    Ok(val / PI)
}

// Gauss-Legendre rules on [-1, 1]
const GL3_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL3_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

// segments at least this many standard deviations from the observation are
// integrated in coordinates local to their near end
const FAR: f64 = 8.0;

/// Moments `sum_j binom(i, j) shift^(i-j) k_j` of `u + shift` from those of `u`.
fn shift_moments(k: [f64; 4], shift: f64) -> [f64; 4] {
    let s = shift;
    [
        k[0],
        k[1] + s * k[0],
        k[2] + 2.0 * s * k[1] + s * s * k[0],
        k[3] + 3.0 * s * k[2] + 3.0 * s * s * k[1] + s * s * s * k[0],
    ]
}

/// `int_0^h u^i exp(-a u - u^2 / 2) du` for large `a`, on panels that
/// resolve the `1/a` decay.
fn far_moments(a: f64, h: f64) -> [f64; 4] {
    let end = h.min(800.0 / a);
    let mut k = [0.0; 4];
    let (mut lo, mut width) = (0.0, 1.0 / a);
    while lo < end {
        let hi = (lo + width).min(end);
        let (c, r) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        for (&x, &w) in GL8_X.iter().zip(&GL8_W) {
            let u = c + r * x;
            let e = w * r * (-u * (a + u / 2.0)).exp();
            k[0] += e;
            k[1] += e * u;
            k[2] += e * u * u;
            k[3] += e * u * u * u;
        }
        lo = hi;
        width *= 2.0;
    }
    k
}

/// `int_a^b (t - c)^i exp(-(t^2 - d^2)/2) dt` for `i = 0..4`, where `d` is
/// the distance from the origin to `[a, b]`.
fn segment_moments(a: f64, b: f64, c: f64) -> ([f64; 4], f64) {
    if b <= 0.0 {
        let (m, d2) = segment_moments(-b, -a, -c);
        return ([m[0], -m[1], m[2], -m[3]], d2);
    }
    let d = if a >= 0.0 { a } else { 0.0 };
    let d2 = d * d;
    let h = b - a;
    if h * (1.0 + b) <= 0.5 {
        // the weight varies little across the segment; the rule's relative
        // error is below 1e-8 here
        let (mid, r) = ((a + b) / 2.0, h / 2.0);
        let mut m = [0.0; 4];
        for (&x, &w) in GL3_X.iter().zip(&GL3_W) {
            let t = mid + r * x;
            let e = w * r * (-(t - d) * (t + d) / 2.0).exp();
            let v = t - c;
            m[0] += e;
            m[1] += e * v;
            m[2] += e * v * v;
            m[3] += e * v * v * v;
        }
        return (m, d2);
    }
    if a >= FAR {
        return (shift_moments(far_moments(a, h), a - c), d2);
    }
    let ea = (-(a * a - d2) / 2.0).exp();
    let eb = (-(b - a) * (b + a) / 2.0 - (a * a - d2) / 2.0).exp();
    let root = (PI / 2.0).sqrt();
    let j0 = if a >= 0.0 {
        root * (erfcx(a * FRAC_1_SQRT_2) - (-(b - a) * (b + a) / 2.0).exp() * erfcx(b * FRAC_1_SQRT_2))
    } else {
        root * (erf(b * FRAC_1_SQRT_2) - erf(a * FRAC_1_SQRT_2))
    };
    let j1 = ea - eb;
    let j2 = j0 + a * ea - b * eb;
    let j3 = 2.0 * j1 + a * a * ea - b * b * eb;
    (shift_moments([j0, j1, j2, j3], -c), d2)
}

// pieces whose Gaussian factor is below exp(-690) relative to the nearest
// piece cannot change a double-precision result
const CUTOFF_D2: f64 = 1380.0;

/// Posterior mean and variance of `X ~ prior` given `X + N(0, noise_var) = y`.
pub fn conditional_mean_var(y: f64, noise_var: f64, prior: &PriorModel) -> Result<(f64, f64)> {
    if !y.is_finite() {
        return Err(Error::NonFinite(y));
    }
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::param("noise_var", format!("must be positive, got {noise_var}")));
    }
    let s = noise_var.sqrt();
    let std = |x: f64| (x - y) / s;

    // nearest point of the support, in data units and standardized; moments
    // are taken about it so that far observations keep their precision
    let mut nearest = (f64::INFINITY, y);
    for &(x, w) in &prior.atoms {
        if w > 0.0 && std(x).powi(2) < nearest.0 {
            nearest = (std(x).powi(2), x);
        }
    }
    let knots = &prior.knots;
    let has_cont = knots.len() >= 2;
    if has_cont {
        let (lo, hi) = (knots[0], knots[knots.len() - 1]);
        let x = y.clamp(lo, hi);
        if std(x).powi(2) < nearest.0 {
            nearest = (std(x).powi(2), x);
        }
    }
    let (ref_d2, x_ref) = nearest;
    if !ref_d2.is_finite() {
        return Err(Error::param("prior", "prior has no mass"));
    }
    let c = std(x_ref);

    // accumulate Z, Z E[V], Z E[V^2] with X = x_ref + s V
    let mut acc = [0.0f64; 3];
    for &(x, w) in &prior.atoms {
        if w <= 0.0 {
            continue;
        }
        let t = std(x);
        let v = t - c;
        let e = w * (-v * (t + c) / 2.0).exp();
        acc[0] += e;
        acc[1] += e * v;
        acc[2] += e * v * v;
    }
    if has_cont {
        let n = knots.len();
        let start = knots.partition_point(|&v| v <= x_ref).clamp(1, n - 1) - 1;
        let mut add_segment = |i: usize| -> bool {
            let (ta, tb) = (std(knots[i]), std(knots[i + 1]));
            let (m, d2) = segment_moments(ta, tb, c);
            if d2 - ref_d2 > CUTOFF_D2 {
                return false;
            }
            let scale = s * (-(d2 - ref_d2) / 2.0).exp();
            // density is linear in v = t - c: f = f0 + f1 v
            let (fa, fb) = (prior.density[i], prior.density[i + 1]);
            let f1 = (fb - fa) / (tb - ta);
            let f0 = fa + f1 * (c - ta);
            acc[0] += scale * (f0 * m[0] + f1 * m[1]);
            acc[1] += scale * (f0 * m[1] + f1 * m[2]);
            acc[2] += scale * (f0 * m[2] + f1 * m[3]);
            true
        };
        for i in start..n - 1 {
            if !add_segment(i) && i > start {
                break;
            }
        }
        for i in (0..start).rev() {
            if !add_segment(i) {
                break;
            }
        }
    }
    let z = acc[0];
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::NumericalConsistency(format!(
            "posterior normalizer {z} at y = {y}, noise variance {noise_var}"
        )));
    }
    let ev = acc[1] / z;
    let ev2 = acc[2] / z;
    let mean = x_ref + s * ev;
    let var = (noise_var * (ev2 - ev * ev)).max(0.0);
    Ok((mean, var))
}
