//! Error lower bounds for slotted ALOHA and CSMA broadcast.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{mean_neighbor_count, NetworkParams};
use crate::quad;
use crate::special::gamma;

/// Parameters shared by the random-access schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaParams {
    pub network: NetworkParams,
    /// Packet length `L` in bits: message bits plus sender id.
    pub packet_bits: u32,
    /// Message bits `l` carried by each packet.
    pub message_bits: u32,
    /// SINR threshold `delta`.
    pub sinr_threshold: f64,
    /// ALOHA transmit probability per frame.
    pub transmit_prob: f64,
    /// Symbol budget `M_a` / `M_c`.
    pub budget: f64,
}

impl RaParams {
    /// Packet length `l + ceil(log2 c)`, where `c` is the mean neighbor
    /// count: a sender id only has to be unique within a neighborhood.
    pub fn default_packet_bits(network: &NetworkParams, message_bits: u32) -> u32 {
        let c = mean_neighbor_count(network);
        message_bits + if c > 1.0 { c.log2().ceil() as u32 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.packet_bits < self.message_bits || self.packet_bits == 0 {
            return Err(Error::param("packet_bits", "must be positive and at least message_bits"));
        }
        if !(self.sinr_threshold > 0.0) || !self.sinr_threshold.is_finite() {
            return Err(Error::param("sinr_threshold", "must be finite and positive"));
        }
        if !(self.transmit_prob > 0.0 && self.transmit_prob < 1.0) {
            return Err(Error::param("transmit_prob", "must lie in (0, 1)"));
        }
        if !(self.budget >= 0.0) || !self.budget.is_finite() {
            return Err(Error::param("budget", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// `b = 2 / alpha`.
    pub fn b(&self) -> f64 {
        2.0 / self.network.path_loss_exponent
    }

    /// Frames per symbol: `log2(1 + delta) / L`.
    pub fn frames_per_symbol(&self) -> f64 {
        (1.0 + self.sinr_threshold).log2() / self.packet_bits as f64
    }

    /// Real-valued frame count `n = M log2(1 + delta) / L` used by the bounds.
    pub fn frames(&self) -> f64 {
        self.budget * self.frames_per_symbol()
    }

    /// Whole frames that fit in `budget` symbols.
    pub fn whole_frames(&self) -> usize {
        frames_in_budget(self.budget, self.frames_per_symbol())
    }
}

/// `floor(budget * frames_per_symbol)`, tolerant to rounding just below an
/// integer.
pub fn frames_in_budget(budget: f64, frames_per_symbol: f64) -> usize {
    let n = budget * frames_per_symbol;
    (n * (1.0 + 4.0 * f64::EPSILON)).floor().max(0.0) as usize
}

/// Law of the interference `I` from a Poisson field of transmitters with
/// unit-mean exponential fading, seen at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferenceLaw {
    /// Transmitter intensity `lambda p`.
    pub intensity: f64,
    pub path_loss_exponent: f64,
}

impl InterferenceLaw {
    pub fn b(&self) -> f64 {
        2.0 / self.path_loss_exponent
    }

    /// `A = lambda p b pi^2 / sin(b pi)`, so that `L(s) = exp(-A s^b)`.
    pub fn scale(&self) -> f64 {
        let b = self.b();
        self.intensity * b * PI * PI / (b * PI).sin()
    }

    /// Laplace transform `E[exp(-s I)]`.
    pub fn laplace(&self, s: f64) -> f64 {
        (-self.scale() * s.powf(self.b())).exp()
    }

    /// Characteristic function `E[exp(-i w I)]`, principal branch.
    pub fn fourier(&self, w: f64) -> Complex64 {
        let iw = Complex64::new(0.0, w);
        if w == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        (-self.scale() * iw.powf(self.b())).exp()
    }
}

/// `E[(I + 1/gamma)^(-b)]` for the interference seen by a receiver when all
/// other nodes transmit independently with probability `p`.
pub fn aloha_inner_expectation(network: &NetworkParams, transmit_prob: f64) -> Result<f64> {
    network.validate()?;
    let law = InterferenceLaw {
        intensity: network.intensity * transmit_prob,
        path_loss_exponent: network.path_loss_exponent,
    };
    let b = law.b();
    let j = fourier_integral(&law, 1.0 / network.snr)?;
    Ok((b * FRAC_PI_2).sin() * gamma(1.0 - b) * j / PI)
}

/// `int |w|^(b-1) exp(-A (i w)^b - i w x) dw` over the real line. Each
/// half-line is mapped by `u = |w|^b`, which removes the endpoint
/// singularity and turns the envelope into `exp(-A cos(b pi/2) u)`.
fn fourier_integral(law: &InterferenceLaw, shift: f64) -> Result<f64> {
    let b = law.b();
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::param("path_loss_exponent", "must exceed 2"));
    }
    let a = law.scale();
    if !(a > 0.0) {
        // no interferers: E[(1/gamma)^-b] = gamma^b; the integral form diverges
        return Ok(PI * shift.powf(-b) / ((b * FRAC_PI_2).sin() * gamma(1.0 - b)));
    }
    let decay = a * (b * FRAC_PI_2).cos();
    let cutoff = 12.0 * std::f64::consts::LN_10 / decay;
    let phase_rate = |u: f64| a * (b * FRAC_PI_2).sin() + shift * u.powf(1.0 / b - 1.0) / b;

    let mut panels = vec![0.0];
    let mut u = 0.0;
    while u < cutoff {
        let width = (1.0 / decay).min(PI / phase_rate(u.max(1e-300)));
        u = (u + width).min(cutoff);
        panels.push(u);
    }
    let mut total = Complex64::new(0.0, 0.0);
    for sign in [1.0, -1.0] {
        let f = |u: f64| -> Complex64 {
            let w = sign * u.powf(1.0 / b);
            let iw = Complex64::new(0.0, w);
            (-a * iw.powf(b) - Complex64::new(0.0, w * shift)).exp() / b
        };
        let tol = 1e-10 / decay;
        let re = quad::integrate_panels(|u| f(u).re, &panels, tol)?;
        let im = quad::integrate_panels(|u| f(u).im, &panels, tol)?;
        total += Complex64::new(re, im);
    }
    if total.im.abs() > 1e-6 * total.re.abs() {
        return Err(Error::NumericalConsistency(format!(
            "interference integral has imaginary part {:e} against real part {:e}",
            total.im, total.re
        )));
    }
    Ok(total.re)
}

/// Upper bound on the per-frame success probability of one ALOHA link.
pub fn aloha_success_term(ra: &RaParams) -> Result<f64> {
    ra.validate()?;
    let p = ra.transmit_prob;
    let e = aloha_inner_expectation(&ra.network, p)?;
    Ok(p * (1.0 - p) * (ra.network.gain_threshold / ra.sinr_threshold).powf(ra.b()) * e)
}

/// Lower bound on the probability that a receiver misses a given neighbor
/// after `ra.budget` symbols of slotted ALOHA.
pub fn aloha_error_lower_bound(ra: &RaParams) -> Result<f64> {
    let s = aloha_success_term(ra)?;
    Ok(bound_from_term(s, ra.frames()))
}

/// Upper bound on the per-frame success probability of one CSMA link.
pub fn csma_success_term(ra: &RaParams) -> Result<f64> {
    ra.validate()?;
    let c = mean_neighbor_count(&ra.network);
    if !(c > 0.0) {
        return Err(Error::param("intensity", "mean neighbor count must be positive"));
    }
    let net = &ra.network;
    let ratio = (net.gain_threshold * net.snr / ra.sinr_threshold).powf(ra.b());
    // e^-c + c - 1 loses all precision for tiny c
    let shape = if c < 1e-4 { c * c / 2.0 - c * c * c / 6.0 } else { (-c).exp() + c - 1.0 };
    Ok(ratio * shape / (c * c))
}

/// Lower bound on the probability that a receiver misses a given neighbor
/// after `ra.budget` symbols of CSMA.
pub fn csma_error_lower_bound(ra: &RaParams) -> Result<f64> {
    let s = csma_success_term(ra)?;
    Ok(bound_from_term(s, ra.frames()))
}

/// Probability that a node wins the timer contention in its neighborhood,
/// `(1 - e^-c) / c`.
pub fn csma_capture_probability(c: f64) -> Result<f64> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::param("c", "must be finite and non-negative"));
    }
    if c < 1e-8 {
        return Ok(1.0 - c / 2.0);
    }
    Ok(-(-c).exp_m1() / c)
}

/// `max(0, 1 - s)^n`.
pub fn bound_from_term(success: f64, frames: f64) -> f64 {
    let base = (1.0 - success).max(0.0);
    if frames == 0.0 {
        1.0
    } else {
        base.powf(frames)
    }
}

/// Smallest integer budget `M` with `max(0, 1 - s)^(M fps) <= target`, or
/// `None` if the bound never drops that low.
pub fn required_budget(success: f64, frames_per_symbol: f64, target: f64) -> Option<u64> {
    if target >= 1.0 {
        return Some(0);
    }
    if !(success > 0.0) || !(frames_per_symbol > 0.0) || !(target > 0.0) {
        return None;
    }
    if success >= 1.0 {
        return Some(1);
    }
    let m = (target.ln() / ((1.0 - success).ln() * frames_per_symbol)).ceil();
    let mut m = m.max(0.0) as u64;
    // settle rounding at the threshold
    while m > 0 && bound_from_term(success, (m - 1) as f64 * frames_per_symbol) <= target {
        m -= 1;
    }
    while bound_from_term(success, m as f64 * frames_per_symbol) > target {
        m += 1;
    }
    Some(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_ra(budget: f64) -> RaParams {
        let network = NetworkParams::reference();
        let c = mean_neighbor_count(&network);
        RaParams {
            network,
            packet_bits: RaParams::default_packet_bits(&network, 5),
            message_bits: 5,
            sinr_threshold: 3.5,
            transmit_prob: 1.0 / (c + 1.0),
            budget,
        }
    }

    #[test]
    fn packet_length_counts_neighborhood_id() {
        let ra = reference_ra(0.0);
        assert_eq!(ra.packet_bits, 9);
        assert_eq!(RaParams::default_packet_bits(&ra.network, 10), 14);
    }

    #[test]
    fn zero_budget_bounds_are_one() {
        let ra = reference_ra(0.0);
        assert_eq!(aloha_error_lower_bound(&ra).unwrap(), 1.0);
        assert_eq!(csma_error_lower_bound(&ra).unwrap(), 1.0);
    }

    #[test]
    fn laplace_at_zero_is_one() {
        let law = InterferenceLaw {
            intensity: 3e-4,
            path_loss_exponent: 4.0,
        };
        assert_eq!(law.laplace(0.0), 1.0);
        assert_eq!(law.fourier(0.0), Complex64::new(1.0, 0.0));
        assert!((law.fourier(-3.0) - law.fourier(3.0).conj()).norm() < 1e-15);
    }

    #[test]
    fn levy_case_matches_closed_form() {
        // alpha = 4: I is Levy with scale A^2/2, so E[(I + x)^(-1/2)] can be
        // integrated directly against its density
        let law = InterferenceLaw {
            intensity: 0.004 / 12.1,
            path_loss_exponent: 4.0,
        };
        let a = law.scale();
        let c = a * a / 2.0;
        let x = 1e-6;
        // with I = c / Z^2, Z ~ |N(0,1)|
        let f = |z: f64| {
            let i = c / (z * z);
            2.0 * (-z * z / 2.0).exp() / (2.0 * PI).sqrt() / (i + x).sqrt()
        };
        let direct = quad::integrate_panels(
            f,
            &[0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 3.0, 10.0],
            1e-10,
        )
        .unwrap();
        let j = fourier_integral(&law, x).unwrap();
        let via_fourier = (FRAC_PI_2 / 2.0).sin() * gamma(0.5) * j / PI;
        assert!(((via_fourier - direct) / direct).abs() < 1e-7, "{via_fourier} vs {direct}");
    }

    #[test]
    fn csma_term_at_reference_parameters() {
        let s = csma_success_term(&reference_ra(0.0)).unwrap();
        assert!((s - 0.0438).abs() < 5e-4, "{s}");
        let m = required_budget(s, reference_ra(0.0).frames_per_symbol(), 0.01).unwrap();
        assert!((400..=460).contains(&m), "{m}");
    }

    #[test]
    fn aloha_budget_at_reference_parameters() {
        let ra = reference_ra(0.0);
        let s = aloha_success_term(&ra).unwrap();
        let m = required_budget(s, ra.frames_per_symbol(), 0.01).unwrap();
        assert!(m >= 800, "{m}");
    }

    #[test]
    fn capture_probability_values() {
        assert!((csma_capture_probability(1e-12).unwrap() - 1.0).abs() < 1e-11);
        let c = mean_neighbor_count(&NetworkParams::reference());
        let v = csma_capture_probability(c).unwrap();
        assert!((v - 0.0899).abs() < 2e-4, "{v}");
    }

    #[test]
    fn required_budget_is_tight() {
        let (s, fps) = (0.03, 0.25);
        let m = required_budget(s, fps, 0.01).unwrap();
        assert!(bound_from_term(s, m as f64 * fps) <= 0.01);
        assert!(bound_from_term(s, (m - 1) as f64 * fps) > 0.01);
        assert_eq!(required_budget(0.0, fps, 0.01), None);
    }

    #[test]
    fn frame_count_survives_rounding() {
        // 0.1 * 30 = 3.0000000000000004 and 0.3 * 10 = 2.9999999999999996
        assert_eq!(frames_in_budget(10.0, 0.3), 3);
        assert_eq!(frames_in_budget(30.0, 0.1), 3);
    }
}
