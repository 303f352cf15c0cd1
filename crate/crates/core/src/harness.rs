//! Seeded parameter sweeps over the RODD decoder and the random-access
//! baselines, aggregated into per-pair miss probabilities.
//!
//! Every trial index owns one network realization (seeded by the trial index
//! alone), so all schemes and grid points of a sweep see the same networks.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{self, Protocol, RaParams, RaSimConfig};
use crate::decoder::{build_prior, DecodeOptions, Decoder, NoiseWiring, PriorGrid};
use crate::error::{Error, Result};
use crate::geometry::{generate_network, mean_neighbor_count, NetworkParams, NetworkRealization, Placement};
use crate::phy::{draw_messages, Frame, FrameOptions, InterferenceMode, RoddParams};
use crate::rng::{derive_seed, stream_rng, trial_seed, Stream};

/// A linear quantity that may be written as a number or as a decibel string
/// such as `"60dB"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level(pub f64);

impl Level {
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let v = if let Some(db) = lower.strip_suffix("db") {
            let db: f64 = db
                .trim()
                .parse()
                .map_err(|_| Error::param("level", format!("cannot parse `{s}`")))?;
            10f64.powf(db / 10.0)
        } else {
            t.parse()
                .map_err(|_| Error::param("level", format!("cannot parse `{s}`")))?
        };
        Ok(Level(v))
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Level::parse(s)
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Level(v)),
            Raw::Text(s) => Level::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

/// Network section of a sweep config; omitted fields take reference values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: Option<usize>,
    pub intensity: Option<f64>,
    pub side: f64,
    pub path_loss_exponent: f64,
    pub gain_threshold: f64,
    pub snr: Level,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let r = NetworkParams::reference();
        NetworkSpec {
            nodes: Some(1000),
            intensity: None,
            side: r.side,
            path_loss_exponent: r.path_loss_exponent,
            gain_threshold: r.gain_threshold,
            snr: Level(r.snr),
        }
    }
}

impl NetworkSpec {
    /// A fixed node count takes precedence; otherwise nodes are Poisson with
    /// the given intensity.
    pub fn params(&self) -> Result<NetworkParams> {
        let area = self.side * self.side;
        let (placement, intensity) = match (self.nodes, self.intensity) {
            (Some(n), _) => (Placement::FixedCount(n), n as f64 / area),
            (None, Some(l)) => (Placement::Poisson, l),
            (None, None) => return Err(Error::param("network", "need `nodes` or `intensity`")),
        };
        let p = NetworkParams {
            intensity,
            side: self.side,
            placement,
            path_loss_exponent: self.path_loss_exponent,
            gain_threshold: self.gain_threshold,
            snr: self.snr.0,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AlohaBound,
    AlohaMc,
    CsmaBound,
    CsmaMc,
    Rodd,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::AlohaBound => "aloha_bound",
            Scheme::AlohaMc => "aloha_mc",
            Scheme::CsmaBound => "csma_bound",
            Scheme::CsmaMc => "csma_mc",
            Scheme::Rodd => "rodd",
        }
    }

    fn is_bound(self) -> bool {
        matches!(self, Scheme::AlohaBound | Scheme::CsmaBound)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// RODD frame length `M_s`, which is also the symbol budget of the
    /// random-access schemes.
    FrameLen,
    SinrThreshold,
    Snr,
}

impl AxisKind {
    pub fn name(self) -> &'static str {
        match self {
            AxisKind::FrameLen => "frame_len",
            AxisKind::SinrThreshold => "sinr_threshold",
            AxisKind::Snr => "snr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: AxisKind,
    pub values: Vec<Level>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub iterations: usize,
    pub tolerance: f64,
    pub damping: f64,
    pub exact_denoiser: bool,
    pub noise_wiring: NoiseWiring,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        let d = DecodeOptions::default();
        DecoderConfig {
            iterations: d.iterations,
            tolerance: d.tolerance,
            damping: d.damping,
            exact_denoiser: d.exact_denoiser,
            noise_wiring: d.noise_wiring,
        }
    }
}

impl DecoderConfig {
    pub fn options(&self) -> DecodeOptions {
        DecodeOptions {
            iterations: self.iterations,
            tolerance: self.tolerance,
            damping: self.damping,
            exact_denoiser: self.exact_denoiser,
            noise_wiring: self.noise_wiring,
            ..DecodeOptions::default()
        }
    }
}

fn default_trials() -> usize {
    200
}

fn default_sinr() -> Level {
    Level(3.5)
}

/// One experiment: a grid over a single axis, a list of schemes and a shared
/// set of seeded network realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: String,
    #[serde(default)]
    pub network: NetworkSpec,
    pub message_bits: u32,
    /// RODD frame length / random-access budget when not swept.
    #[serde(default)]
    pub frame_len: Option<usize>,
    /// RODD on-probability; defaults to `1 / (c + 1)`.
    #[serde(default)]
    pub on_prob: Option<f64>,
    /// ALOHA transmit probability; defaults to `1 / (c + 1)`.
    #[serde(default)]
    pub transmit_prob: Option<f64>,
    /// Packet bits of the random-access schemes; defaults to
    /// `l + ceil(log2 c)`.
    #[serde(default)]
    pub packet_bits: Option<u32>,
    #[serde(default = "default_sinr")]
    pub sinr_threshold: Level,
    pub axis: Axis,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Only receivers at least this far from the region's edge are scored.
    #[serde(default)]
    pub boundary_margin: f64,
    /// Score a seeded random subset of this many receivers per network.
    #[serde(default)]
    pub receivers_per_network: Option<usize>,
    #[serde(default)]
    pub interference: InterferenceMode,
    #[serde(default)]
    pub decoder: DecoderConfig,
    /// Report wall-clock times; off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SweepConfig = serde_json::from_str(&text).map_err(|source| Error::Config {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.params()?;
        if self.axis.values.is_empty() {
            return Err(Error::param("axis", "grid must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::param("schemes", "must not be empty"));
        }
        if self.axis.name != AxisKind::FrameLen && self.frame_len.is_none() {
            return Err(Error::param("frame_len", "required unless the frame length is swept"));
        }
        for v in &self.axis.values {
            let ok = match self.axis.name {
                AxisKind::FrameLen => v.0 >= 1.0 && v.0.fract() == 0.0,
                _ => v.0 > 0.0 && v.0.is_finite(),
            };
            if !ok {
                return Err(Error::param("axis", format!("invalid {} value {}", self.axis.name.name(), v.0)));
            }
        }
        if !(self.boundary_margin >= 0.0) {
            return Err(Error::param("boundary_margin", "must be non-negative"));
        }
        if self.receivers_per_network == Some(0) {
            return Err(Error::param("receivers_per_network", "must be positive"));
        }
        for p in [self.on_prob, self.transmit_prob].into_iter().flatten() {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::param("on_prob", "probabilities must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Parameters at grid point `value`.
    fn point(&self, value: f64) -> Result<Point> {
        let mut network = self.network.params()?;
        let mut delta = self.sinr_threshold.0;
        let mut frame_len = self.frame_len.unwrap_or(0);
        match self.axis.name {
            AxisKind::FrameLen => frame_len = value as usize,
            AxisKind::SinrThreshold => delta = value,
            AxisKind::Snr => network.snr = value,
        }
        let c = mean_neighbor_count(&network);
        let q = self.on_prob.unwrap_or(1.0 / (c + 1.0));
        let p = self.transmit_prob.unwrap_or(1.0 / (c + 1.0));
        let rodd = RoddParams::new(self.message_bits, frame_len, q)?;
        let ra = RaParams {
            network,
            packet_bits: self
                .packet_bits
                .unwrap_or_else(|| RaParams::default_packet_bits(&network, self.message_bits)),
            message_bits: self.message_bits,
            sinr_threshold: delta,
            transmit_prob: p,
            budget: frame_len as f64,
        };
        ra.validate()?;
        Ok(Point {
            value,
            network,
            rodd,
            ra,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    value: f64,
    network: NetworkParams,
    rodd: RoddParams,
    ra: RaParams,
}

/// One output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub axis: String,
    pub value: f64,
    pub miss_prob: f64,
    pub stderr: f64,
    /// Network realizations behind the estimate (0 for analytic rows).
    pub trials: usize,
    pub wall_ms: u64,
}

/// Receivers scored in one network.
pub fn select_receivers(net: &NetworkRealization, margin: f64, limit: Option<usize>, seed: u64) -> Vec<usize> {
    let pool = if margin > 0.0 { net.interior(margin) } else { (0..net.len()).collect() };
    match limit {
        Some(k) if k < pool.len() => {
            let mut rng = stream_rng(seed, Stream::Receivers, 0);
            let mut picked: Vec<usize> = sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
            picked.sort_unstable();
            picked
        }
        _ => pool,
    }
}

/// Misses and pairs per grid point for one trial.
struct Tally {
    scheme: Scheme,
    trial: usize,
    counts: Vec<(usize, usize, usize)>, // (point, misses, pairs)
    wall: f64,
}

struct Job {
    scheme: Scheme,
    trial: usize,
    points: Vec<usize>,
}

/// Runs every scheme over the grid. Returns rows sorted by scheme and value.
pub fn run_sweep(cfg: &SweepConfig, workers: Option<usize>) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let points: Vec<Point> = cfg.axis.values.iter().map(|v| cfg.point(v.0)).collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut jobs = Vec::new();
    for &scheme in &cfg.schemes {
        if scheme.is_bound() {
            for pt in &points {
                let start = Instant::now();
                let miss = match scheme {
                    Scheme::AlohaBound => baselines::aloha_error_lower_bound(&pt.ra)?,
                    _ => baselines::csma_error_lower_bound(&pt.ra)?,
                };
                rows.push(ResultRow {
                    scheme: scheme.name().into(),
                    axis: cfg.axis.name.name().into(),
                    value: pt.value,
                    miss_prob: miss,
                    stderr: 0.0,
                    trials: 0,
                    wall_ms: if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 },
                });
            }
            continue;
        }
        // one random-access run covers every budget of a frame-length sweep
        let shared = scheme != Scheme::Rodd && cfg.axis.name == AxisKind::FrameLen;
        for trial in 0..cfg.trials {
            if shared {
                jobs.push(Job {
                    scheme,
                    trial,
                    points: (0..points.len()).collect(),
                });
            } else {
                jobs.extend((0..points.len()).map(|i| Job {
                    scheme,
                    trial,
                    points: vec![i],
                }));
            }
        }
    }

    let decoder = if cfg.schemes.contains(&Scheme::Rodd) {
        let net = &points[0].network;
        let prior = build_prior(net.gain_threshold, net.path_loss_exponent, cfg.message_bits, &PriorGrid::default())?;
        Some(Decoder::new(Arc::new(prior), cfg.decoder.options()))
    } else {
        None
    };

    let run = || -> Result<Vec<Tally>> {
        jobs.par_iter()
            .map(|job| run_job(cfg, &points, job, decoder.as_ref()))
            .collect()
    };
    let tallies = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?
            .install(run)?,
        None => run()?,
    };

    for &scheme in &cfg.schemes {
        if scheme.is_bound() {
            continue;
        }
        for (i, pt) in points.iter().enumerate() {
            let mut per_trial = Vec::new();
            let (mut misses, mut pairs, mut wall) = (0usize, 0usize, 0.0f64);
            for t in tallies.iter().filter(|t| t.scheme == scheme) {
                for &(p, m, n) in &t.counts {
                    if p == i {
                        misses += m;
                        pairs += n;
                        wall += t.wall / t.counts.len() as f64;
                        if n > 0 {
                            per_trial.push((t.trial, m as f64 / n as f64));
                        }
                    }
                }
            }
            per_trial.sort_by_key(|x| x.0);
            let miss = if pairs > 0 { misses as f64 / pairs as f64 } else { 0.0 };
            rows.push(ResultRow {
                scheme: scheme.name().into(),
                axis: cfg.axis.name.name().into(),
                value: pt.value,
                miss_prob: miss,
                stderr: standard_error(&per_trial.iter().map(|x| x.1).collect::<Vec<_>>(), miss, pairs),
                trials: cfg.trials,
                wall_ms: if cfg.timing { (wall * 1e3) as u64 } else { 0 },
            });
        }
    }
    sort_rows(&mut rows);
    Ok(rows)
}

/// Standard error of a pooled miss probability: spread of per-network rates
/// over `sqrt(trials)`, or the binomial error when only one network exists.
pub fn standard_error(rates: &[f64], pooled: f64, pairs: usize) -> f64 {
    let t = rates.len();
    if t >= 2 {
        let mean = rates.iter().sum::<f64>() / t as f64;
        let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
        (var / t as f64).sqrt()
    } else if pairs > 0 {
        (pooled * (1.0 - pooled) / pairs as f64).sqrt()
    } else {
        0.0
    }
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.value.total_cmp(&b.value)));
}

fn run_job(cfg: &SweepConfig, points: &[Point], job: &Job, decoder: Option<&Decoder>) -> Result<Tally> {
    let start = Instant::now();
    let seed = trial_seed(cfg.seed, job.trial as u64);
    // every point shares the geometry and fading; only the SNR may differ
    let net = generate_network(&points[job.points[0]].network, seed)?;
    let receivers = select_receivers(&net, cfg.boundary_margin, cfg.receivers_per_network, seed);
    let mut counts = Vec::with_capacity(job.points.len());
    match job.scheme {
        Scheme::Rodd => {
            let decoder = decoder.expect("decoder is built when rodd is scheduled");
            for &i in &job.points {
                let pt = &points[i];
                let regenerated;
                let net = if pt.network == *net.params() {
                    &net
                } else {
                    regenerated = generate_network(&pt.network, seed)?;
                    &regenerated
                };
                let messages = draw_messages(net.len(), &pt.rodd, seed);
                let frame = Frame::new(net, &pt.rodd, &messages, seed)?;
                let options = FrameOptions {
                    mode: cfg.interference,
                    ..FrameOptions::default()
                };
                let (mut misses, mut pairs) = (0, 0);
                for &rx in &receivers {
                    let inst = frame.observe(rx, &options)?;
                    if inst.neighbor_count() == 0 {
                        continue;
                    }
                    let res = decoder.decode(&inst)?;
                    misses += res.errors(&inst);
                    pairs += inst.neighbor_count();
                }
                counts.push((i, misses, pairs));
            }
        }
        Scheme::AlohaMc | Scheme::CsmaMc => {
            let protocol = if job.scheme == Scheme::AlohaMc { Protocol::Aloha } else { Protocol::Csma };
            let first = &points[job.points[0]];
            let horizon = job.points.iter().map(|&i| points[i].ra.whole_frames()).max().unwrap_or(0);
            let net = if first.network == *net.params() { net } else { generate_network(&first.network, seed)? };
            let sim = RaSimConfig {
                protocol,
                sinr_threshold: first.ra.sinr_threshold,
                transmit_prob: first.ra.transmit_prob,
                frames: horizon,
            };
            let sim_seed = derive_seed(seed, Stream::Trial, job.points[0] as u64);
            let out = baselines::simulate(&net, &receivers, &sim, sim_seed)?;
            for &i in &job.points {
                let m = out.misses(points[i].ra.whole_frames());
                counts.push((i, m, out.pairs.len()));
            }
        }
        _ => unreachable!("bounds are evaluated without jobs"),
    }
    Ok(Tally {
        scheme: job.scheme,
        trial: job.trial,
        counts,
        wall: start.elapsed().as_secs_f64(),
    })
}

/// Writes rows as CSV with a fixed header and LF line endings.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(["scheme", "axis", "value", "miss_prob", "stderr", "trials", "wall_ms"])?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut buf = std::io::BufWriter::new(file);
    write_csv(&sorted, &mut buf)?;
    buf.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
