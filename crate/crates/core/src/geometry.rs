//! Marked Poisson networks and the closed-form geometry they induce.
//!
//! Nodes are scattered over a square region. Every unordered pair carries an
//! exponential power fading gain with unit mean and a uniform phase, and two
//! nodes are neighbors when the faded channel gain `G R^-alpha` reaches the
//! threshold `theta`. Links are reciprocal, so all pairwise quantities are
//! stored once per unordered pair.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::special::gamma;

/// How many nodes a realization has.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Exactly this many nodes, placed uniformly (a Poisson process
    /// conditioned on its population).
    FixedCount(usize),
    /// Poisson(intensity * area) nodes.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Nodes per square meter.
    pub intensity: f64,
    /// Side of the square region in meters.
    pub side: f64,
    pub placement: Placement,
    pub path_loss_exponent: f64,
    /// Minimum channel gain `G R^-alpha` for two nodes to be neighbors.
    pub gain_threshold: f64,
    /// Nominal SNR (linear) at one meter without fading.
    pub snr: f64,
}

impl NetworkParams {
    /// 1000 nodes in a 500 m square, `alpha = 4`, `theta = 1e-6`, 60 dB.
    pub fn reference() -> Self {
        NetworkParams {
            intensity: 1000.0 / (500.0 * 500.0),
            side: 500.0,
            placement: Placement::FixedCount(1000),
            path_loss_exponent: 4.0,
            gain_threshold: 1e-6,
            snr: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent > 2.0) {
            return Err(Error::param(
                "path_loss_exponent",
                format!("must exceed 2, got {}", self.path_loss_exponent),
            ));
        }
        if !(self.gain_threshold > 0.0) {
            return Err(Error::param("gain_threshold", "must be positive"));
        }
        if !(self.snr > 0.0) {
            return Err(Error::param("snr", "must be positive"));
        }
        if !(self.intensity >= 0.0) || !self.intensity.is_finite() {
            return Err(Error::param("intensity", "must be finite and non-negative"));
        }
        if !(self.side > 0.0) || !self.side.is_finite() {
            return Err(Error::param("side", "must be finite and positive"));
        }
        Ok(())
    }

    pub fn amplitude_law(&self) -> AmplitudeLaw {
        AmplitudeLaw {
            theta: self.gain_threshold,
            alpha: self.path_loss_exponent,
        }
    }
}

/// Distribution of the channel amplitude `|U|` of a uniformly chosen neighbor:
/// a Pareto law on `[sqrt(theta), inf)` with tail index `4 / alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeLaw {
    pub theta: f64,
    pub alpha: f64,
}

impl AmplitudeLaw {
    pub fn min_amplitude(&self) -> f64 {
        self.theta.sqrt()
    }

    pub fn ccdf(&self, u: f64) -> f64 {
        if u <= self.min_amplitude() {
            1.0
        } else {
            self.theta.powf(2.0 / self.alpha) / u.powf(4.0 / self.alpha)
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        if u < self.min_amplitude() {
            0.0
        } else {
            let k = 4.0 / self.alpha;
            k * self.theta.powf(2.0 / self.alpha) / u.powf(k + 1.0)
        }
    }

    /// Amplitude exceeded with probability `tail`.
    pub fn upper_quantile(&self, tail: f64) -> f64 {
        self.min_amplitude() * tail.powf(-self.alpha / 4.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1 - U lies in (0, 1], so the quantile stays finite
        let v: f64 = 1.0 - rng.random::<f64>();
        self.upper_quantile(v)
    }
}

/// Complementary CDF of a neighbor's channel amplitude; 1 below `sqrt(theta)`.
pub fn neighbor_gain_ccdf(u: f64, params: &NetworkParams) -> f64 {
    params.amplitude_law().ccdf(u)
}

/// Density of a neighbor's channel amplitude.
pub fn neighbor_amplitude_pdf(u: f64, params: &NetworkParams) -> f64 {
    params.amplitude_law().pdf(u)
}

/// Mean number of neighbors of a typical node in the infinite plane,
/// `c = (2/alpha) pi lambda theta^(-2/alpha) Gamma(2/alpha)`.
pub fn mean_neighbor_count(params: &NetworkParams) -> f64 {
    let b = 2.0 / params.path_loss_exponent;
    if params.intensity == 0.0 {
        return 0.0;
    }
    b * PI * params.intensity * params.gain_threshold.powf(-b) * gamma(b)
}

/// Per-slot received power from transmitting non-neighbors plus unit thermal
/// noise, when every node transmits independently with probability `q`.
pub fn nonneighbor_interference_variance(params: &NetworkParams, q: f64) -> f64 {
    let a = params.path_loss_exponent;
    let b = 2.0 / a;
    4.0 / (a * (a - 2.0))
        * PI
        * params.intensity
        * q
        * params.snr
        * params.gain_threshold.powf(1.0 - b)
        * gamma(b)
        + 1.0
}

/// One frame's worth of node positions, fading gains and neighbor sets.
#[derive(Debug, Clone)]
pub struct NetworkRealization {
    params: NetworkParams,
    positions: Vec<[f64; 2]>,
    // packed upper triangle, row-major over i < j
    fading: Vec<f64>,
    phases: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

#[inline]
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl NetworkRealization {
    /// Builds a realization from explicit positions, fading gains and phases
    /// (packed upper triangle, pairs `(0,1), (0,2), ..., (1,2), ...`).
    pub fn from_parts(
        params: NetworkParams,
        positions: Vec<[f64; 2]>,
        fading: Vec<f64>,
        phases: Vec<f64>,
    ) -> Result<Self> {
        params.validate()?;
        let n = positions.len();
        let pairs = n * n.saturating_sub(1) / 2;
        if fading.len() != pairs || phases.len() != pairs {
            return Err(Error::param(
                "fading",
                format!("expected {pairs} pair entries for {n} nodes"),
            ));
        }
        let mut net = NetworkRealization {
            params,
            positions,
            fading,
            phases,
            neighbors: vec![Vec::new(); n],
        };
        for i in 0..n {
            for j in i + 1..n {
                if net.channel_gain(i, j) >= params.gain_threshold {
                    net.neighbors[i].push(j);
                    net.neighbors[j].push(i);
                }
            }
        }
        Ok(net)
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> [f64; 2] {
        self.positions[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let [xi, yi] = self.positions[i];
        let [xj, yj] = self.positions[j];
        (xi - xj).hypot(yi - yj)
    }

    /// Small-scale fading power gain `G_ij`.
    pub fn fading(&self, i: usize, j: usize) -> f64 {
        self.fading[pair_index(self.len(), i, j)]
    }

    /// Faded channel gain `G_ij R_ij^-alpha`.
    pub fn channel_gain(&self, i: usize, j: usize) -> f64 {
        self.fading(i, j) * self.distance(i, j).powf(-self.params.path_loss_exponent)
    }

    /// Complex coefficient `U_ij` with `|U_ij|^2 = G_ij R_ij^-alpha`.
    pub fn coefficient(&self, i: usize, j: usize) -> Complex64 {
        let phase = self.phases[pair_index(self.len(), i, j)];
        Complex64::from_polar(self.channel_gain(i, j).sqrt(), phase)
    }

    /// Neighbors of `i` in increasing id order.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_neighbor(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Number of directed neighbor pairs.
    pub fn directed_pairs(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Nodes at least `margin` meters from every edge of the region.
    pub fn interior(&self, margin: f64) -> Vec<usize> {
        let side = self.params.side;
        (0..self.len())
            .filter(|&i| {
                let [x, y] = self.positions[i];
                x >= margin && x <= side - margin && y >= margin && y <= side - margin
            })
            .collect()
    }

    /// Writes the realization as whitespace-separated columns: a `# nodes`
    /// section with `id x y` rows followed by a `# pairs` section with
    /// `i j fading phase` rows for every unordered pair `i < j`.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# nodes {}", self.len())?;
        writeln!(out, "# id x y")?;
        for (i, [x, y]) in self.positions.iter().enumerate() {
            writeln!(out, "{i} {x} {y}")?;
        }
        writeln!(out, "# pairs {}", self.fading.len())?;
        writeln!(out, "# i j fading phase")?;
        let n = self.len();
        for i in 0..n {
            for j in i + 1..n {
                let k = pair_index(n, i, j);
                writeln!(out, "{i} {j} {} {}", self.fading[k], self.phases[k])?;
            }
        }
        Ok(())
    }
}

/// Draws a realization. Deterministic in `(params, seed)`.
pub fn generate_network(params: &NetworkParams, seed: u64) -> Result<NetworkRealization> {
    params.validate()?;
    let mut rng = stream_rng(seed, Stream::Network, 0);
    let n = match params.placement {
        Placement::FixedCount(n) => n,
        Placement::Poisson => {
            let mean = params.intensity * params.side * params.side;
            if mean == 0.0 {
                0
            } else {
                let poisson = Poisson::new(mean)
                    .map_err(|e| Error::param("intensity", e.to_string()))?;
                poisson.sample(&mut rng) as usize
            }
        }
    };
    let positions: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                rng.random::<f64>() * params.side,
                rng.random::<f64>() * params.side,
            ]
        })
        .collect();
    let pairs = n * n.saturating_sub(1) / 2;
    let mut fading = Vec::with_capacity(pairs);
    let mut phases = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        fading.push(Exp1.sample(&mut rng));
        phases.push(rng.random::<f64>() * 2.0 * PI);
    }
    NetworkRealization::from_parts(*params, positions, fading, phases)
}
