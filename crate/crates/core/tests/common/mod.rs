//! Independent oracles shared by the integration tests. Nothing here calls
//! into the decoder; the instances are built by hand or through `phy`.
#![allow(dead_code, clippy::needless_range_loop)]

use num_complex::Complex64;
use rodd::phy::{ObservationInstance, RoddParams, SensingMatrix};

/// Posterior mean and variance of `x` given `y = x + N(0, s)` for a prior
/// made only of point masses `(location, mass)`.
pub fn discrete_posterior(y: f64, s: f64, atoms: &[(f64, f64)]) -> (f64, f64) {
    let logs: Vec<f64> = atoms
        .iter()
        .map(|&(x, w)| w.ln() - (y - x).powi(2) / (2.0 * s))
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = weights.iter().sum();
    let mean = atoms.iter().zip(&weights).map(|(a, w)| a.0 * w).sum::<f64>() / z;
    let second = atoms.iter().zip(&weights).map(|(a, w)| a.0 * a.0 * w).sum::<f64>() / z;
    (mean, second - mean * mean)
}

/// Dense `M x N` matrix from a sparse sensing matrix.
pub fn dense(inst: &ObservationInstance) -> Vec<Vec<f64>> {
    inst.sensing.to_dense()
}

/// Sensing matrix in compressed-column form from a dense matrix whose
/// entries are `sign * scale`.
pub fn sensing_from_signs(signs: &[Vec<i8>], scale: f64) -> SensingMatrix {
    let rows = signs.len();
    let cols = signs[0].len();
    let mut col_ptr = vec![0];
    let mut row_idx = Vec::new();
    let mut vals = Vec::new();
    for k in 0..cols {
        for (r, row) in signs.iter().enumerate() {
            if row[k] != 0 {
                row_idx.push(r as u32);
                vals.push(row[k]);
            }
        }
        col_ptr.push(row_idx.len());
    }
    SensingMatrix {
        rows,
        cols,
        scale,
        col_ptr,
        row_idx,
        signs: vals,
    }
}

/// The hand-sized instance: one neighbor, two candidate signatures, two
/// measurements and a fully dense `S = [[1, -1], [1, 1]]`.
pub fn micro_instance() -> ObservationInstance {
    let rodd = RoddParams::new(1, 4, 0.5).unwrap();
    ObservationInstance {
        receiver: 0,
        neighbors: vec![1],
        rodd,
        off_slots: vec![1, 3],
        sensing: sensing_from_signs(&[vec![1, -1], vec![1, 1]], 1.0),
        y: vec![Complex64::new(0.9, 0.3), Complex64::new(1.2, -0.4)],
        coefficients: vec![Complex64::new(0.5, 0.0)],
        true_indices: vec![0],
        noise_variance: 1.0,
        effective_snr: 4.0,
    }
}

/// Edge messages of one round, row-major over the nonzeros of `S`.
#[derive(Debug, Clone)]
pub struct OracleRound {
    pub tau: [f64; 2],
    pub z: Vec<[f64; 2]>,
    pub mean: Vec<[f64; 2]>,
    pub var: Vec<[f64; 2]>,
}

/// Direct evaluation of the message updates on a dense matrix with a
/// discrete prior, with the same damping and first-round conventions as the
/// decoder. Returns one entry per round.
pub fn reference_rounds(
    inst: &ObservationInstance,
    atoms: &[(f64, f64)],
    iterations: usize,
    initial_tau: f64,
    damping: f64,
) -> Vec<OracleRound> {
    let s = dense(inst);
    let (rows, cols) = (s.len(), s[0].len());
    let g = inst.effective_snr.sqrt();
    let y: Vec<[f64; 2]> = inst.y.iter().map(|c| [c.re, c.im]).collect();
    let total_mass: f64 = atoms.iter().map(|a| a.1).sum();
    let prior_mean = atoms.iter().map(|a| a.0 * a.1).sum::<f64>() / total_mass;
    let prior_var = atoms.iter().map(|a| (a.0 - prior_mean).powi(2) * a.1).sum::<f64>() / total_mass;
    let edges: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |k| (r, k)))
        .filter(|&(r, k)| s[r][k] != 0.0)
        .collect();
    let find = |r: usize, k: usize| edges.iter().position(|&e| e == (r, k)).unwrap();
    let mean_deg = inst.rodd.mean_degree();

    let mut z: Vec<[f64; 2]> = edges.iter().map(|&(r, k)| [y[r][0] / (g * s[r][k]), y[r][1] / (g * s[r][k])]).collect();
    let mut m = vec![[0.0; 2]; edges.len()];
    let mut v = vec![[0.0; 2]; edges.len()];
    let mut tau = [initial_tau; 2];
    let mut out = Vec::new();
    for t in 1..iterations {
        // variable-to-check: posterior given every other check's estimate
        for (e, &(r, k)) in edges.iter().enumerate() {
            let others: Vec<usize> = (0..rows).filter(|&n| n != r && s[n][k] != 0.0).map(|n| find(n, k)).collect();
            for i in 0..2 {
                let (nm, nv) = if others.is_empty() {
                    (prior_mean, prior_var)
                } else {
                    let d = others.len() as f64;
                    let input = others.iter().map(|&o| z[o][i]).sum::<f64>() / d;
                    discrete_posterior(input, tau[i] / d, atoms)
                };
                if t > 1 {
                    m[e][i] = damping * nm + (1.0 - damping) * m[e][i];
                    v[e][i] = damping * nv + (1.0 - damping) * v[e][i];
                } else {
                    m[e][i] = nm;
                    v[e][i] = nv;
                }
            }
        }
        // check-to-variable: residual of the row without this column
        let mut next_z = z.clone();
        for (e, &(r, k)) in edges.iter().enumerate() {
            for i in 0..2 {
                let mut others = 0.0;
                for j in 0..cols {
                    if j != k && s[r][j] != 0.0 {
                        others += s[r][j] * m[find(r, j)][i];
                    }
                }
                next_z[e][i] = (y[r][i] - g * others) / (g * s[r][k]);
            }
        }
        z = next_z;
        for i in 0..2 {
            let mut acc = 0.0;
            for r in 0..rows {
                let in_row: Vec<usize> = (0..cols).filter(|&j| s[r][j] != 0.0).map(|j| find(r, j)).collect();
                let vsum: f64 = in_row.iter().map(|&e| v[e][i]).sum();
                acc += in_row.len() as f64 * vsum;
            }
            tau[i] = acc / edges.len() as f64 + mean_deg / (2.0 * inst.effective_snr);
        }
        out.push(OracleRound {
            tau,
            z: z.clone(),
            mean: m.clone(),
            var: v.clone(),
        });
    }
    out
}

/// Least-squares residual energy of `y` against the span of the given real
/// columns (applied to real and imaginary parts alike).
fn projection_residual(y: &[Complex64], columns: &[Vec<f64>]) -> f64 {
    // Gram-Schmidt on the columns, dropping dependent ones
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in columns {
        let mut u = c.clone();
        for b in &basis {
            let dot: f64 = u.iter().zip(b).map(|(a, b)| a * b).sum();
            for (ui, bi) in u.iter_mut().zip(b) {
                *ui -= dot * bi;
            }
        }
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 {
            basis.push(u.iter().map(|a| a / norm).collect());
        }
    }
    let mut r: Vec<Complex64> = y.to_vec();
    for b in &basis {
        let dot: Complex64 = r.iter().zip(b).map(|(a, &b)| a * b).sum();
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri -= dot * bi;
        }
    }
    r.iter().map(|c| c.norm_sqr()).sum()
}

/// Exhaustive generalized-likelihood decoding: for every joint hypothesis of
/// message indices, fit the unknown complex coefficients by least squares
/// and keep the hypothesis with the smallest residual. Ties go to the
/// lexicographically first hypothesis.
pub fn exhaustive_ml(inst: &ObservationInstance) -> Vec<usize> {
    let s = dense(inst);
    let size = inst.rodd.codebook_size();
    let k = inst.neighbor_count();
    let column = |c: usize| -> Vec<f64> { s.iter().map(|row| row[c]).collect() };
    let hypotheses = size.pow(k as u32);
    let mut best = (f64::INFINITY, vec![0; k]);
    for h in 0..hypotheses {
        let mut idx = vec![0; k];
        let mut rest = h;
        for j in (0..k).rev() {
            idx[j] = rest % size;
            rest /= size;
        }
        let cols: Vec<Vec<f64>> = idx.iter().enumerate().map(|(j, &i)| column(j * size + i)).collect();
        let res = projection_residual(&inst.y, &cols);
        if res < best.0 - 1e-12 {
            best = (res, idx);
        }
    }
    best.1
}
