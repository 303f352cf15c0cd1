//! On-off signature codebooks and the off-slot observation a receiver makes
//! during one synchronized frame.
//!
//! Every node owns `2^l` ternary signatures of length `M_s` whose entries are
//! 0 with probability `1 - q` and `+1`/`-1` with probability `q/2` each. A
//! node sends its message by transmitting the matching signature and listens
//! during the slots where that signature is zero. Stacking the neighbors'
//! codebooks restricted to those off-slots gives the sparse-recovery problem
//! `Y = sqrt(gamma_s) S X + W` solved by [`crate::decoder`].
//!
//! Message indices are zero-based throughout (`0..2^l`).

use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nonneighbor_interference_variance, AmplitudeLaw, NetworkRealization};
use crate::rng::{derive_seed, splitmix64, stream_rng, SimRng, Stream};

/// Largest codebook (`2^l * M_s` entries) generated without an explicit budget.
pub const DEFAULT_CODEBOOK_BUDGET: u128 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoddParams {
    /// Message bits `l`; each codebook holds `2^l` signatures.
    pub message_bits: u32,
    /// Frame length `M_s` in symbol slots.
    pub frame_len: usize,
    /// Per-slot on-probability `q`.
    pub on_prob: f64,
}

impl RoddParams {
    pub fn new(message_bits: u32, frame_len: usize, on_prob: f64) -> Result<Self> {
        let p = RoddParams {
            message_bits,
            frame_len,
            on_prob,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.message_bits == 0 || self.message_bits > 24 {
            return Err(Error::param("message_bits", "must lie in 1..=24"));
        }
        if self.frame_len == 0 || self.frame_len > u32::MAX as usize {
            return Err(Error::param("frame_len", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.on_prob) {
            return Err(Error::param("on_prob", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn codebook_size(&self) -> usize {
        1 << self.message_bits
    }

    /// `M_s q (1 - q)`, the expected number of nonzero off-slot entries of a
    /// neighbor's signature.
    pub fn mean_degree(&self) -> f64 {
        self.frame_len as f64 * self.on_prob * (1.0 - self.on_prob)
    }

    /// Column normalization `sqrt(M_s q (1 - q))`.
    pub fn column_norm(&self) -> f64 {
        self.mean_degree().sqrt()
    }

    /// `gamma_s = gamma M_s q (1 - q) / sigma^2`.
    pub fn effective_snr(&self, snr: f64, noise_variance: f64) -> f64 {
        snr * self.mean_degree() / noise_variance
    }
}

/// Average system load `beta = 2^l c / (M_s (1 - q))`.
pub fn system_load(rodd: &RoddParams, mean_neighbors: f64) -> f64 {
    rodd.codebook_size() as f64 * mean_neighbors
        / (rodd.frame_len as f64 * (1.0 - rodd.on_prob))
}

/// Borrowed view of one sparse signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature<'a> {
    pub slots: &'a [u32],
    pub signs: &'a [i8],
}

impl Signature<'_> {
    pub fn to_owned(&self) -> OwnedSignature {
        OwnedSignature {
            slots: self.slots.to_vec(),
            signs: self.signs.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OwnedSignature {
    pub slots: Vec<u32>,
    pub signs: Vec<i8>,
}

impl OwnedSignature {
    pub fn as_ref(&self) -> Signature<'_> {
        Signature {
            slots: &self.slots,
            signs: &self.signs,
        }
    }

    pub fn dense(&self, frame_len: usize) -> Vec<i8> {
        let mut v = vec![0i8; frame_len];
        for (&s, &g) in self.slots.iter().zip(&self.signs) {
            v[s as usize] = g;
        }
        v
    }
}

/// A node's `2^l` signatures, stored sparsely (slot indices and signs of
/// the nonzero entries).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    owner: usize,
    seed: u64,
    frame_len: usize,
    offsets: Vec<usize>,
    slots: Vec<u32>,
    signs: Vec<i8>,
}

impl Codebook {
    pub fn owner(&self) -> usize {
        self.owner
    }

    /// Seed the codebook was generated from (run seed mixed with owner id).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn size(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn signature(&self, index: usize) -> Signature<'_> {
        let (a, b) = (self.offsets[index], self.offsets[index + 1]);
        Signature {
            slots: &self.slots[a..b],
            signs: &self.signs[a..b],
        }
    }

    pub fn dense(&self, index: usize) -> Vec<i8> {
        self.signature(index).to_owned().dense(self.frame_len)
    }

    pub fn nonzeros(&self) -> usize {
        self.slots.len()
    }
}

/// Seed of node `node`'s codebook within a run: any receiver that knows the
/// run seed and the node id can rebuild it.
pub fn codebook_seed(run_seed: u64, node: usize) -> u64 {
    derive_seed(run_seed, Stream::Codebook, 0) ^ node as u64
}

fn push_signature(
    node_seed: u64,
    index: usize,
    rodd: &RoddParams,
    slots: &mut Vec<u32>,
    signs: &mut Vec<i8>,
) {
    let q = rodd.on_prob;
    if q <= 0.0 {
        return;
    }
    let mut rng = SimRng::seed_from_u64(splitmix64(node_seed ^ splitmix64(index as u64)));
    // gaps between nonzero entries are geometric, which reproduces i.i.d.
    // Bernoulli(q) supports exactly
    let gap = Geometric::new(q).expect("q in (0, 1)");
    let mut pos: u64 = 0;
    loop {
        pos += gap.sample(&mut rng);
        if pos >= rodd.frame_len as u64 {
            break;
        }
        slots.push(pos as u32);
        signs.push(if rng.random::<bool>() { 1 } else { -1 });
        pos += 1;
    }
}

/// The signature node `node` transmits for message `index`.
pub fn transmitted_signature(
    node: usize,
    index: usize,
    rodd: &RoddParams,
    run_seed: u64,
) -> OwnedSignature {
    let mut sig = OwnedSignature::default();
    push_signature(
        codebook_seed(run_seed, node),
        index,
        rodd,
        &mut sig.slots,
        &mut sig.signs,
    );
    sig
}

pub fn generate_codebook(node: usize, rodd: &RoddParams, run_seed: u64) -> Result<Codebook> {
    generate_codebook_with_budget(node, rodd, run_seed, DEFAULT_CODEBOOK_BUDGET)
}

pub fn generate_codebook_with_budget(
    node: usize,
    rodd: &RoddParams,
    run_seed: u64,
    budget: u128,
) -> Result<Codebook> {
    rodd.validate()?;
    let entries = (rodd.codebook_size() as u128) * rodd.frame_len as u128;
    if entries > budget {
        return Err(Error::Capacity { entries, budget });
    }
    let seed = codebook_seed(run_seed, node);
    let size = rodd.codebook_size();
    let expect = (entries as f64 * rodd.on_prob * 1.1) as usize + 16;
    let mut offsets = Vec::with_capacity(size + 1);
    let mut slots = Vec::with_capacity(expect);
    let mut signs = Vec::with_capacity(expect);
    offsets.push(0);
    for i in 0..size {
        push_signature(seed, i, rodd, &mut slots, &mut signs);
        offsets.push(slots.len());
    }
    Ok(Codebook {
        owner: node,
        seed,
        frame_len: rodd.frame_len,
        offsets,
        slots,
        signs,
    })
}

/// Uniform message indices for `nodes` nodes.
pub fn draw_messages(nodes: usize, rodd: &RoddParams, run_seed: u64) -> Vec<usize> {
    let mut rng = stream_rng(run_seed, Stream::Messages, 0);
    let size = rodd.codebook_size();
    (0..nodes).map(|_| rng.random_range(0..size)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceMode {
    /// Non-neighbor interference folded into circular Gaussian noise of
    /// variance `sigma^2`.
    #[default]
    Gaussian,
    /// Every non-neighbor's transmitted signature superposed explicitly, plus
    /// unit-variance thermal noise.
    Explicit,
}

impl std::str::FromStr for InterferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(InterferenceMode::Gaussian),
            "explicit" => Ok(InterferenceMode::Explicit),
            other => Err(Error::param("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameOptions {
    pub mode: InterferenceMode,
    /// Overrides the closed-form `sigma^2` used for normalization.
    pub noise_variance: Option<f64>,
    /// Drops all noise (while keeping `gamma_s` at its nominal value).
    pub noiseless: bool,
    /// Explicit mode only: non-neighbors stay silent.
    pub silence_non_neighbors: bool,
}

/// Sparse `M x N` sensing matrix in compressed-column form. Every stored
/// entry equals `sign * scale` with `scale = 1 / sqrt(M_s q (1 - q))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingMatrix {
    pub rows: usize,
    pub cols: usize,
    pub scale: f64,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<u32>,
    pub signs: Vec<i8>,
}

impl SensingMatrix {
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.col_ptr[k], self.col_ptr[k + 1]);
        self.row_idx[a..b]
            .iter()
            .zip(&self.signs[a..b])
            .map(move |(&r, &s)| (r as usize, s as f64 * self.scale))
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.column(col)
            .find(|&(r, _)| r == row)
            .map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for k in 0..self.cols {
            for (r, v) in self.column(k) {
                d[r][k] = v;
            }
        }
        d
    }
}

/// One receiver's decoding problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationInstance {
    pub receiver: usize,
    /// Neighbor ids in column-block order.
    pub neighbors: Vec<usize>,
    pub rodd: RoddParams,
    /// Frame slots where the receiver listens, ascending.
    pub off_slots: Vec<u32>,
    pub sensing: SensingMatrix,
    pub y: Vec<Complex64>,
    /// True channel coefficient of each neighbor.
    pub coefficients: Vec<Complex64>,
    /// True message index of each neighbor.
    pub true_indices: Vec<usize>,
    /// `sigma^2` used to normalize the observation.
    pub noise_variance: f64,
    /// `gamma_s` of the normalized model.
    pub effective_snr: f64,
}

impl ObservationInstance {
    /// Number of measurements `M`.
    pub fn measurements(&self) -> usize {
        self.off_slots.len()
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.off_slots.is_empty()
    }

    /// Dense hidden vector: `X[j 2^l + i] = U_j 1{w_j = i}`.
    pub fn hidden_vector(&self) -> Vec<Complex64> {
        let size = self.rodd.codebook_size();
        let mut x = vec![Complex64::new(0.0, 0.0); size * self.neighbors.len()];
        for (j, (&w, &u)) in self.true_indices.iter().zip(&self.coefficients).enumerate() {
            x[j * size + w] = u;
        }
        x
    }

    /// `Y - sqrt(gamma_s) S X` for a candidate hidden vector.
    pub fn residual(&self, x: &[Complex64]) -> Vec<Complex64> {
        let gain = self.effective_snr.sqrt();
        let mut r = self.y.clone();
        for (k, &xk) in x.iter().enumerate() {
            if xk == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (row, v) in self.sensing.column(k) {
                r[row] -= xk * (gain * v);
            }
        }
        r
    }

    /// Writes the instance as pretty-printed JSON.
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| Error::Config {
            path: path.to_path_buf(),
            source,
        })
    }
}

struct Assembly<'a> {
    receiver: usize,
    rodd: &'a RoddParams,
    run_seed: u64,
    own: Signature<'a>,
    neighbors: &'a [usize],
    coefficients: Vec<Complex64>,
    true_indices: Vec<usize>,
    snr: f64,
    noise_variance: f64,
    /// Multiplies the unit-variance noise draws.
    noise_scale: f64,
    noiseless: bool,
}

/// Slot-to-row map for the receiver's off-slots.
fn off_slot_rows(own: Signature<'_>, frame_len: usize) -> (Vec<u32>, Vec<u32>) {
    let mut on = vec![false; frame_len];
    for &s in own.slots {
        on[s as usize] = true;
    }
    let mut off = Vec::with_capacity(frame_len);
    let mut row_of = vec![u32::MAX; frame_len];
    for (slot, &is_on) in on.iter().enumerate() {
        if !is_on {
            row_of[slot] = off.len() as u32;
            off.push(slot as u32);
        }
    }
    (off, row_of)
}

/// Builds `S` and the neighbor part of `Y`. `extra` adds further signal
/// terms (explicit interference) before noise.
fn assemble(
    a: Assembly<'_>,
    extra: impl FnOnce(&[u32], f64, &mut [Complex64]),
) -> ObservationInstance {
    let rodd = a.rodd;
    let (off_slots, row_of) = off_slot_rows(a.own, rodd.frame_len);
    let m = off_slots.len();
    let size = rodd.codebook_size();
    let cols = size * a.neighbors.len();
    let scale = 1.0 / rodd.column_norm();
    let effective_snr = rodd.effective_snr(a.snr, a.noise_variance);
    let gain = effective_snr.sqrt();

    let mut col_ptr = Vec::with_capacity(cols + 1);
    let mut row_idx = Vec::new();
    let mut signs = Vec::new();
    col_ptr.push(0);
    let mut y = vec![Complex64::new(0.0, 0.0); m];
    let mut slots_buf = Vec::new();
    let mut signs_buf = Vec::new();
    for (j, &node) in a.neighbors.iter().enumerate() {
        let seed = codebook_seed(a.run_seed, node);
        for i in 0..size {
            slots_buf.clear();
            signs_buf.clear();
            push_signature(seed, i, rodd, &mut slots_buf, &mut signs_buf);
            let active = a.true_indices[j] == i;
            for (&slot, &sg) in slots_buf.iter().zip(&signs_buf) {
                let row = row_of[slot as usize];
                if row == u32::MAX {
                    continue;
                }
                row_idx.push(row);
                signs.push(sg);
                if active {
                    y[row as usize] += a.coefficients[j] * (gain * (sg as f64 * scale));
                }
            }
            col_ptr.push(row_idx.len());
        }
    }

    extra(&row_of, a.noise_variance, &mut y);

    if !a.noiseless {
        let mut rng = stream_rng(a.run_seed, Stream::Noise, a.receiver as u64);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        let noise_scale = a.noise_scale;
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * half, im * half) * noise_scale;
        }
    }

    ObservationInstance {
        receiver: a.receiver,
        neighbors: a.neighbors.to_vec(),
        rodd: *rodd,
        off_slots,
        sensing: SensingMatrix {
            rows: m,
            cols,
            scale,
            col_ptr,
            row_idx,
            signs,
        },
        y,
        coefficients: a.coefficients,
        true_indices: a.true_indices,
        noise_variance: a.noise_variance,
        effective_snr,
    }
}

/// Everything shared by all receivers of one frame: the network, the
/// messages and every node's transmitted signature.
pub struct Frame<'a> {
    net: &'a NetworkRealization,
    rodd: RoddParams,
    messages: Vec<usize>,
    run_seed: u64,
    transmitted: Vec<OwnedSignature>,
}

impl<'a> Frame<'a> {
    pub fn new(
        net: &'a NetworkRealization,
        rodd: &RoddParams,
        messages: &[usize],
        run_seed: u64,
    ) -> Result<Self> {
        rodd.validate()?;
        if messages.len() != net.len() {
            return Err(Error::param(
                "messages",
                format!("need one message per node ({}), got {}", net.len(), messages.len()),
            ));
        }
        if let Some(&w) = messages.iter().find(|&&w| w >= rodd.codebook_size()) {
            return Err(Error::param(
                "messages",
                format!("index {w} outside codebook of size {}", rodd.codebook_size()),
            ));
        }
        let transmitted = messages
            .iter()
            .enumerate()
            .map(|(i, &w)| transmitted_signature(i, w, rodd, run_seed))
            .collect();
        Ok(Frame {
            net,
            rodd: *rodd,
            messages: messages.to_vec(),
            run_seed,
            transmitted,
        })
    }

    pub fn transmitted(&self, node: usize) -> Signature<'_> {
        self.transmitted[node].as_ref()
    }

    pub fn messages(&self) -> &[usize] {
        &self.messages
    }

    pub fn observe(&self, receiver: usize, options: &FrameOptions) -> Result<ObservationInstance> {
        if receiver >= self.net.len() {
            return Err(Error::param("receiver", format!("node {receiver} does not exist")));
        }
        let params = self.net.params();
        let noise_variance = match options.noise_variance {
            Some(v) if v > 0.0 => v,
            Some(v) => return Err(Error::param("noise_variance", format!("must be positive, got {v}"))),
            None => nonneighbor_interference_variance(params, self.rodd.on_prob),
        };
        let neighbors = self.net.neighbors(receiver);
        let coefficients = neighbors
            .iter()
            .map(|&j| self.net.coefficient(receiver, j))
            .collect();
        let true_indices = neighbors.iter().map(|&j| self.messages[j]).collect();
        let explicit = options.mode == InterferenceMode::Explicit;
        // gaussian mode draws the normalized noise directly; explicit mode
        // draws unit thermal noise and applies the 1/sigma normalization
        let noise_scale = if explicit { 1.0 / noise_variance.sqrt() } else { 1.0 };
        let assembly = Assembly {
            receiver,
            rodd: &self.rodd,
            run_seed: self.run_seed,
            own: self.transmitted(receiver),
            neighbors,
            coefficients,
            true_indices,
            snr: params.snr,
            noise_variance,
            noise_scale,
            noiseless: options.noiseless,
        };
        let inst = assemble(assembly, |row_of, sigma2, y| {
            if !explicit || options.silence_non_neighbors {
                return;
            }
            let amp = (params.snr / sigma2).sqrt();
            for node in 0..self.net.len() {
                if node == receiver || self.net.is_neighbor(receiver, node) {
                    continue;
                }
                let u = self.net.coefficient(receiver, node) * amp;
                let sig = &self.transmitted[node];
                for (&slot, &sg) in sig.slots.iter().zip(&sig.signs) {
                    let row = row_of[slot as usize];
                    if row != u32::MAX {
                        y[row as usize] += u * sg as f64;
                    }
                }
            }
        });
        Ok(inst)
    }
}

/// Simulates one frame and returns `receiver`'s observation.
pub fn simulate_frame(
    net: &NetworkRealization,
    rodd: &RoddParams,
    messages: &[usize],
    receiver: usize,
    options: &FrameOptions,
    run_seed: u64,
) -> Result<ObservationInstance> {
    Frame::new(net, rodd, messages, run_seed)?.observe(receiver, options)
}

/// Parameters for a network-free instance: `K` neighbors whose coefficients
/// follow the neighbor amplitude law with uniform phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub neighbors: usize,
    pub rodd: RoddParams,
    pub snr: f64,
    pub noise_variance: f64,
    pub law: AmplitudeLaw,
    pub noiseless: bool,
}

/// Draws a standalone instance for decoder-only experiments. The receiver is
/// node 0 and the neighbors are nodes `1..=K`.
pub fn synthesize_instance(spec: &SyntheticSpec, run_seed: u64) -> Result<ObservationInstance> {
    spec.rodd.validate()?;
    let mut rng = stream_rng(run_seed, Stream::Trial, 0);
    let size = spec.rodd.codebook_size();
    let own_index = rng.random_range(0..size);
    let own = transmitted_signature(0, own_index, &spec.rodd, run_seed);
    let neighbors: Vec<usize> = (1..=spec.neighbors).collect();
    let coefficients = neighbors
        .iter()
        .map(|_| {
            let amp = spec.law.sample(&mut rng);
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            Complex64::from_polar(amp, phase)
        })
        .collect();
    let true_indices = neighbors.iter().map(|_| rng.random_range(0..size)).collect();
    Ok(assemble(
        Assembly {
            receiver: 0,
            rodd: &spec.rodd,
            run_seed,
            own: own.as_ref(),
            neighbors: &neighbors,
            coefficients,
            true_indices,
            snr: spec.snr,
            noise_variance: spec.noise_variance,
            noise_scale: 1.0,
            noiseless: spec.noiseless,
        },
        |_, _, _| {},
    ))
}
