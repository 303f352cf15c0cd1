//! Gaussian-approximated message passing over the sparse factor graph of one
//! observation, run separately on the real and imaginary systems.

pub mod interp;
pub mod prior;

use std::collections::HashMap;
use std::io::Write;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::ObservationInstance;
pub use interp::{build_interp_table, InterpGrid, InterpTable};
pub use prior::{build_prior, conditional_mean_var, PriorGrid, PriorModel};

/// Which SNR feeds the `M_s q (1 - q) / (2 gamma)` noise term of the
/// variance update. The residual computation always uses `gamma_s`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseWiring {
    /// `gamma_s`, i.e. normalized by the interference-plus-noise variance.
    #[default]
    Effective,
    /// `gamma M_s q (1 - q)`, ignoring interference.
    Nominal,
}

impl FromStr for NoiseWiring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(NoiseWiring::Effective),
            "nominal" => Ok(NoiseWiring::Nominal),
            _ => Err(Error::param("noise_wiring", format!("unknown wiring `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    /// Total iteration count `T`; `T - 1` message rounds precede the final
    /// estimate.
    pub iterations: usize,
    /// Early stop once no edge mean moves by more than this and the variance
    /// estimates have settled.
    pub tolerance: f64,
    pub initial_tau: f64,
    /// Weight of the new edge means and variances in each round (1 = none).
    pub damping: f64,
    /// Evaluate the denoiser per edge with the true degree instead of
    /// interpolation tables built for the mean degree.
    pub exact_denoiser: bool,
    pub noise_wiring: NoiseWiring,
    pub interp: InterpGrid,
    /// Table noise variances are rounded to multiples of this step in
    /// `ln(variance)` so tables can be shared; `None` disables sharing.
    pub table_resolution: Option<f64>,
    pub record_trace: bool,
    /// Keep a copy of every edge message after each round.
    pub record_states: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            iterations: 20,
            tolerance: 1e-6,
            initial_tau: 1e6,
            damping: 0.9,
            exact_denoiser: false,
            noise_wiring: NoiseWiring::Effective,
            interp: InterpGrid::default(),
            table_resolution: Some(1.0 / 128.0),
            record_trace: false,
            record_states: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    Converged,
    IterationLimit,
    /// No measurements; every index is reported as 0.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub tau_re: f64,
    pub tau_im: f64,
    /// Mean of `|y - sqrt(gamma_s) S m|^2` over rows, using edge means.
    pub residual: f64,
}

/// Edge messages after one round, in `(row, column)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub iteration: usize,
    pub tau: [f64; 2],
    pub z: Vec<[f64; 2]>,
    pub mean: Vec<[f64; 2]>,
    pub var: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Decoded message index per neighbor.
    pub indices: Vec<usize>,
    /// Final posterior-mean estimate of every hidden-vector entry.
    pub estimates: Vec<Complex64>,
    /// Scalar-channel observation fed to the final estimate of each entry.
    pub evidence: Vec<Complex64>,
    pub rounds: usize,
    pub status: DecodeStatus,
    /// A variance estimate hit the positive floor.
    pub tau_clamped: bool,
    pub trace: Vec<TraceRow>,
    /// `(row, column)` of each edge, matching [`DecoderState`] order.
    pub edges: Vec<(usize, usize)>,
    pub states: Vec<DecoderState>,
}

impl DecodeResult {
    /// Number of neighbors whose index was decoded wrongly; a degenerate
    /// instance counts every neighbor as wrong.
    pub fn errors(&self, instance: &ObservationInstance) -> usize {
        if self.status == DecodeStatus::Degenerate {
            return instance.neighbor_count();
        }
        self.indices
            .iter()
            .zip(&instance.true_indices)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

const TAU_FLOOR: f64 = 1e-24;
const TAU_SETTLED: f64 = 1e-3;
const CACHE_CAPACITY: usize = 1 << 14;

/// Interpolation tables for one prior, shared between decodes.
#[derive(Debug)]
pub struct TableCache {
    prior: Arc<PriorModel>,
    grid: InterpGrid,
    resolution: Option<f64>,
    tables: Mutex<HashMap<i64, Arc<InterpTable>>>,
}

impl TableCache {
    pub fn new(prior: Arc<PriorModel>, grid: InterpGrid, resolution: Option<f64>) -> Self {
        TableCache {
            prior,
            grid,
            resolution,
            tables: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, noise_var: f64) -> Result<Arc<InterpTable>> {
        let Some(step) = self.resolution else {
            return Ok(Arc::new(build_interp_table(&self.prior, noise_var, &self.grid)?));
        };
        let key = (noise_var.ln() / step).round() as i64;
        if let Some(t) = self.tables.lock().expect("table cache poisoned").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(build_interp_table(&self.prior, (key as f64 * step).exp(), &self.grid)?);
        let mut tables = self.tables.lock().expect("table cache poisoned");
        if tables.len() < CACHE_CAPACITY {
            tables.insert(key, Arc::clone(&table));
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.tables.lock().expect("table cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A prior together with decoding options and a table cache; cheap to share
/// across threads.
#[derive(Debug)]
pub struct Decoder {
    prior: Arc<PriorModel>,
    options: DecodeOptions,
    cache: TableCache,
}

/// Factor graph with edges stored row-major.
struct Graph {
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    coef: Vec<f64>,
    col_ptr: Vec<usize>,
    col_edges: Vec<u32>,
}

impl Graph {
    fn new(inst: &ObservationInstance) -> Self {
        let s = &inst.sensing;
        let mut row_ptr = vec![0usize; s.rows + 1];
        for &r in &s.row_idx {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..s.rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let nnz = s.nnz();
        let mut next = row_ptr.clone();
        let mut col = vec![0u32; nnz];
        let mut coef = vec![0.0; nnz];
        let mut col_edges = vec![0u32; nnz];
        for k in 0..s.cols {
            for p in s.col_ptr[k]..s.col_ptr[k + 1] {
                let r = s.row_idx[p] as usize;
                let e = next[r];
                next[r] += 1;
                col[e] = k as u32;
                coef[e] = s.signs[p] as f64 * s.scale;
                col_edges[p] = e as u32;
            }
        }
        Graph {
            row_ptr,
            col,
            coef,
            col_ptr: s.col_ptr.clone(),
            col_edges,
        }
    }

    fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    fn edges_of_col(&self, k: usize) -> &[u32] {
        &self.col_edges[self.col_ptr[k]..self.col_ptr[k + 1]]
    }
}

impl Decoder {
    pub fn new(prior: Arc<PriorModel>, options: DecodeOptions) -> Self {
        let cache = TableCache::new(Arc::clone(&prior), options.interp, options.table_resolution);
        Decoder { prior, options, cache }
    }

    pub fn prior(&self) -> &PriorModel {
        &self.prior
    }

    pub fn options(&self) -> &DecodeOptions {
        &self.options
    }

    pub fn cache(&self) -> &TableCache {
        &self.cache
    }

    pub fn decode(&self, inst: &ObservationInstance) -> Result<DecodeResult> {
        let opts = &self.options;
        let size = inst.rodd.codebook_size();
        let cols = inst.sensing.cols;
        if cols != size * inst.neighbor_count() {
            return Err(Error::param("instance", "sensing matrix does not match neighbor count"));
        }
        if opts.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if inst.is_degenerate() {
            return Ok(DecodeResult {
                indices: vec![0; inst.neighbor_count()],
                estimates: vec![Complex64::new(0.0, 0.0); cols],
                evidence: vec![Complex64::new(0.0, 0.0); cols],
                rounds: 0,
                status: DecodeStatus::Degenerate,
                tau_clamped: false,
                trace: Vec::new(),
                edges: Vec::new(),
                states: Vec::new(),
            });
        }
        let damping = opts.damping;
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::param("damping", "must lie in (0, 1]"));
        }
        let g = Graph::new(inst);
        let nnz = g.col.len();
        let gain = inst.effective_snr.sqrt();
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::param("effective_snr", "must be finite and positive"));
        }
        let decoder_snr = match opts.noise_wiring {
            NoiseWiring::Effective => inst.effective_snr,
            NoiseWiring::Nominal => inst.effective_snr * inst.noise_variance,
        };
        let mean_deg = inst.rodd.mean_degree();
        // guard against frames too short for the mean-degree substitution
        let edge_deg = (mean_deg - 1.0).max(1.0);
        let noise_term = mean_deg / (2.0 * decoder_snr);
        let prior_mv = (self.prior.mean(), self.prior.variance());
        let y: Vec<[f64; 2]> = inst.y.iter().map(|c| [c.re, c.im]).collect();

        let mut z = vec![[0.0; 2]; nnz];
        for mu in 0..g.rows() {
            for e in g.row_ptr[mu]..g.row_ptr[mu + 1] {
                let d = gain * g.coef[e];
                z[e] = [y[mu][0] / d, y[mu][1] / d];
            }
        }
        let mut m = vec![[0.0; 2]; nnz];
        let mut v = vec![[0.0; 2]; nnz];
        let mut tau = [opts.initial_tau; 2];
        let mut tau_clamped = false;
        let mut trace = Vec::new();
        let mut states = Vec::new();
        let mut rounds = 0;
        let mut status = DecodeStatus::IterationLimit;

        for t in 1..opts.iterations {
            let tables = if opts.exact_denoiser {
                None
            } else {
                Some([self.cache.get(tau[0] / edge_deg)?, self.cache.get(tau[1] / edge_deg)?])
            };
            let mut delta = 0.0f64;
            for k in 0..cols {
                let edges = g.edges_of_col(k);
                let d = edges.len();
                if d == 0 {
                    continue;
                }
                let mut sum = [0.0; 2];
                for &e in edges {
                    sum[0] += z[e as usize][0];
                    sum[1] += z[e as usize][1];
                }
                for &e in edges {
                    let e = e as usize;
                    let mut next = [prior_mv; 2];
                    if d > 1 {
                        let dm1 = (d - 1) as f64;
                        for i in 0..2 {
                            let input = (sum[i] - z[e][i]) / dm1;
                            next[i] = match &tables {
                                Some(tabs) => tabs[i].eval(input),
                                None => conditional_mean_var(input, tau[i] / dm1, &self.prior)?,
                            };
                        }
                    }
                    for i in 0..2 {
                        let (nm, nv) = if t > 1 {
                            (
                                damping * next[i].0 + (1.0 - damping) * m[e][i],
                                damping * next[i].1 + (1.0 - damping) * v[e][i],
                            )
                        } else {
                            next[i]
                        };
                        delta = delta.max((nm - m[e][i]).abs());
                        m[e][i] = nm;
                        v[e][i] = nv;
                    }
                }
            }

            let mut weighted = [0.0; 2];
            let mut residual = 0.0;
            for mu in 0..g.rows() {
                let (a, b) = (g.row_ptr[mu], g.row_ptr[mu + 1]);
                let mut total = [0.0; 2];
                let mut vsum = [0.0; 2];
                for e in a..b {
                    for i in 0..2 {
                        total[i] += g.coef[e] * m[e][i];
                        vsum[i] += v[e][i];
                    }
                }
                for e in a..b {
                    let d = gain * g.coef[e];
                    for i in 0..2 {
                        z[e][i] = (y[mu][i] - gain * (total[i] - g.coef[e] * m[e][i])) / d;
                    }
                }
                let deg = (b - a) as f64;
                for i in 0..2 {
                    weighted[i] += deg * vsum[i];
                    residual += (y[mu][i] - gain * total[i]).powi(2);
                }
            }
            let prev_tau = tau;
            for i in 0..2 {
                tau[i] = weighted[i] / nnz as f64 + noise_term;
                if !(tau[i] > TAU_FLOOR) {
                    if tau[i].is_nan() {
                        return Err(Error::NumericalConsistency(format!(
                            "variance estimate is NaN in round {t}"
                        )));
                    }
                    tau[i] = TAU_FLOOR;
                    tau_clamped = true;
                }
            }
            rounds = t;
            if opts.record_trace {
                trace.push(TraceRow {
                    iteration: t,
                    tau_re: tau[0],
                    tau_im: tau[1],
                    residual: residual / g.rows() as f64,
                });
            }
            if opts.record_states {
                states.push(DecoderState {
                    iteration: t,
                    tau,
                    z: z.clone(),
                    mean: m.clone(),
                    var: v.clone(),
                });
            }
            // means can stall while tau is still far from its fixed point
            // (e.g. all-zero means while noise is large), so both must settle
            let settled = (0..2).all(|i| (tau[i] - prev_tau[i]).abs() <= TAU_SETTLED * tau[i]);
            if t > 1 && delta < opts.tolerance && settled {
                status = DecodeStatus::Converged;
                break;
            }
        }

        let tables = if opts.exact_denoiser {
            None
        } else {
            Some([self.cache.get(tau[0] / mean_deg)?, self.cache.get(tau[1] / mean_deg)?])
        };
        let mut estimates = vec![Complex64::new(0.0, 0.0); cols];
        let mut evidence = vec![Complex64::new(0.0, 0.0); cols];
        for (k, est) in estimates.iter_mut().enumerate() {
            let edges = g.edges_of_col(k);
            if edges.is_empty() {
                *est = Complex64::new(prior_mv.0, prior_mv.0);
                continue;
            }
            let d = edges.len() as f64;
            let mut parts = [0.0; 2];
            let mut inputs = [0.0; 2];
            for i in 0..2 {
                let input = edges.iter().map(|&e| z[e as usize][i]).sum::<f64>() / d;
                inputs[i] = input;
                parts[i] = match &tables {
                    Some(tabs) => tabs[i].eval(input).0,
                    None => conditional_mean_var(input, tau[i] / d, &self.prior)?.0,
                };
            }
            *est = Complex64::new(parts[0], parts[1]);
            evidence[k] = Complex64::new(inputs[0], inputs[1]);
        }

        let indices = estimates.chunks(size).map(select_index).collect();

        let edges = if opts.record_states {
            (0..g.rows())
                .flat_map(|mu| (g.row_ptr[mu]..g.row_ptr[mu + 1]).map(move |e| (mu, e)))
                .map(|(mu, e)| (mu, g.col[e] as usize))
                .collect()
        } else {
            Vec::new()
        };

        Ok(DecodeResult {
            indices,
            estimates,
            evidence,
            rounds,
            status,
            tau_clamped,
            trace,
            edges,
            states,
        })
    }
}

/// Index of the largest-magnitude estimate in one sub-block; ties go to the
/// lowest index.
pub fn select_index(block: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_mag = f64::NEG_INFINITY;
    for (i, c) in block.iter().enumerate() {
        let mag = c.norm_sqr();
        if mag > best_mag {
            best = i;
            best_mag = mag;
        }
    }
    best
}

/// One-off decode without table sharing across calls.
pub fn decode(inst: &ObservationInstance, prior: &PriorModel, options: &DecodeOptions) -> Result<DecodeResult> {
    Decoder::new(Arc::new(prior.clone()), *options).decode(inst)
}
