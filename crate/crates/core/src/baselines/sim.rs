//! Monte Carlo simulation of ALOHA and CSMA broadcast over a fixed network.
//!
//! Fading is static across frames; only the access decisions are redrawn.
//! A directed pair succeeds in a frame when the sender transmits, the
//! receiver is silent and the SINR against every concurrent transmitter is at
//! least `delta`. Each sender is checked independently, so several packets
//! can be received at once when `delta < 1`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::NetworkRealization;
use crate::rng::{stream_rng, Stream};

use super::bounds::frames_in_budget;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Every node transmits independently with the given probability.
    Aloha,
    /// A node transmits iff its uniform timer beats all of its neighbors'.
    Csma,
}

/// First successful frame of every observed directed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RaOutcome {
    /// `(receiver, sender)` for every neighbor of every observed receiver.
    pub pairs: Vec<(usize, usize)>,
    /// Zero-based frame of the first success, or `None` within the horizon.
    pub first_success: Vec<Option<u32>>,
    /// Frames simulated.
    pub frames: usize,
}

impl RaOutcome {
    /// Fraction of pairs not served within the first `frames` frames.
    pub fn miss_probability(&self, frames: usize) -> Result<f64> {
        if frames > self.frames {
            return Err(Error::param(
                "frames",
                format!("only {} frames were simulated, asked for {frames}", self.frames),
            ));
        }
        if self.pairs.is_empty() {
            return Ok(0.0);
        }
        Ok(self.misses(frames) as f64 / self.pairs.len() as f64)
    }

    pub fn misses(&self, frames: usize) -> usize {
        self.first_success
            .iter()
            .filter(|f| f.is_none_or(|f| f as usize >= frames))
            .count()
    }

    /// Miss probability after a budget of `symbols` symbols.
    pub fn miss_after_symbols(&self, symbols: f64, frames_per_symbol: f64) -> Result<f64> {
        self.miss_probability(frames_in_budget(symbols, frames_per_symbol))
    }
}

/// Settings of one random-access simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaSimConfig {
    pub protocol: Protocol,
    pub sinr_threshold: f64,
    /// ALOHA transmit probability; unused by CSMA.
    pub transmit_prob: f64,
    pub frames: usize,
}

/// Runs `cfg.frames` frames and records first successes for every neighbor
/// pair of the given receivers.
pub fn simulate(
    net: &NetworkRealization,
    receivers: &[usize],
    cfg: &RaSimConfig,
    seed: u64,
) -> Result<RaOutcome> {
    if !(cfg.sinr_threshold > 0.0) {
        return Err(Error::param("sinr_threshold", "must be positive"));
    }
    if cfg.protocol == Protocol::Aloha && !(0.0..=1.0).contains(&cfg.transmit_prob) {
        return Err(Error::param("transmit_prob", "must lie in [0, 1]"));
    }
    let n = net.len();
    if let Some(&r) = receivers.iter().find(|&&r| r >= n) {
        return Err(Error::param("receivers", format!("node {r} does not exist")));
    }
    let snr = net.params().snr;

    // received power gamma * G R^-alpha from every node, per observed receiver
    let power: Vec<Vec<f64>> = receivers
        .iter()
        .map(|&r| (0..n).map(|j| if j == r { 0.0 } else { snr * net.channel_gain(r, j) }).collect())
        .collect();
    let mut pairs = Vec::new();
    let mut pair_start = Vec::with_capacity(receivers.len() + 1);
    for &r in receivers {
        pair_start.push(pairs.len());
        pairs.extend(net.neighbors(r).iter().map(|&j| (r, j)));
    }
    pair_start.push(pairs.len());
    let mut first_success = vec![None; pairs.len()];

    let stream = match cfg.protocol {
        Protocol::Aloha => Stream::Aloha,
        Protocol::Csma => Stream::Csma,
    };
    let mut rng = stream_rng(seed, stream, 0);
    let mut transmits = vec![false; n];
    let mut timers = vec![0.0f64; n];
    let mut active = Vec::with_capacity(n);
    for frame in 0..cfg.frames {
        match cfg.protocol {
            Protocol::Aloha => {
                for t in transmits.iter_mut() {
                    *t = rng.random::<f64>() < cfg.transmit_prob;
                }
            }
            Protocol::Csma => {
                for t in timers.iter_mut() {
                    *t = rng.random::<f64>();
                }
                csma_access(net, &timers, &mut transmits);
            }
        }
        active.clear();
        active.extend((0..n).filter(|&i| transmits[i]));

        for (ri, &r) in receivers.iter().enumerate() {
            if transmits[r] {
                continue;
            }
            let row = &power[ri];
            let total: f64 = active.iter().map(|&j| row[j]).sum::<f64>() + 1.0;
            for p in pair_start[ri]..pair_start[ri + 1] {
                if first_success[p].is_some() {
                    continue;
                }
                let j = pairs[p].1;
                if transmits[j] && row[j] >= cfg.sinr_threshold * (total - row[j]) {
                    first_success[p] = Some(frame as u32);
                }
            }
        }
    }
    Ok(RaOutcome {
        pairs,
        first_success,
        frames: cfg.frames,
    })
}

/// CSMA medium access: node `i` transmits iff `timers[i]` is below the timer
/// of every neighbor. Nodes without neighbors always transmit.
pub fn csma_access(net: &NetworkRealization, timers: &[f64], transmits: &mut [bool]) {
    for (i, t) in transmits.iter_mut().enumerate() {
        *t = net.neighbors(i).iter().all(|&j| timers[j] > timers[i]);
    }
}

pub fn simulate_aloha(
    net: &NetworkRealization,
    receivers: &[usize],
    sinr_threshold: f64,
    transmit_prob: f64,
    frames: usize,
    seed: u64,
) -> Result<RaOutcome> {
    let cfg = RaSimConfig {
        protocol: Protocol::Aloha,
        sinr_threshold,
        transmit_prob,
        frames,
    };
    simulate(net, receivers, &cfg, seed)
}

pub fn simulate_csma(
    net: &NetworkRealization,
    receivers: &[usize],
    sinr_threshold: f64,
    frames: usize,
    seed: u64,
) -> Result<RaOutcome> {
    let cfg = RaSimConfig {
        protocol: Protocol::Csma,
        sinr_threshold,
        transmit_prob: 0.0,
        frames,
    };
    simulate(net, receivers, &cfg, seed)
}
