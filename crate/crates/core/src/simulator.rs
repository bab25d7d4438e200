//! Statevector simulation and the Meyer-Wallach entanglement measure.
//!
//! Basis convention: amplitude index `x` spells the bits `b_1 b_2 … b_n`
//! with qubit 0 (the first qubit) as the most significant bit. For three
//! qubits, `|100⟩` is index 4 and means qubit 0 is set.
//!
//! Rotations follow `R_P(θ) = exp(−iθP/2)`.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::{invalid, Error, Result};
use crate::rng::{derive_seed, stream};

/// Tolerance on |‖ψ‖² − 1| accepted by the entanglement measures.
pub const NORM_TOLERANCE: f64 = 1e-8;

/// Default number of parameter samples per entangling-capability label.
pub const DEFAULT_SAMPLE_COUNT: usize = 1000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 30 {
            return Err(invalid(format!("unsupported qubit count {n_qubits}")));
        }
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Ok(StateVector {
            n_qubits,
            amplitudes,
        })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut s = StateVector::zero(n_qubits)?;
        if index >= s.amplitudes.len() {
            return Err(invalid(format!("basis index {index} out of range")));
        }
        s.amplitudes[0] = ZERO;
        s.amplitudes[index] = ONE;
        Ok(s)
    }

    /// Wraps raw amplitudes; the length must be a power of two and the norm
    /// must be 1 within [`NORM_TOLERANCE`].
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(invalid(format!("amplitude count {len} is not a power of two ≥ 2")));
        }
        let s = StateVector {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        };
        s.check_normalized()?;
        Ok(s)
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid("cannot normalize a zero or non-finite vector"));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        StateVector::from_amplitudes(amplitudes)
    }

    /// Tensor product of single-qubit states, first factor = qubit 0.
    pub fn product(factors: &[[Complex64; 2]]) -> Result<Self> {
        let mut amps = vec![ONE];
        for f in factors {
            amps = amps
                .iter()
                .flat_map(|a| [a * f[0], a * f[1]])
                .collect();
        }
        StateVector::normalized(amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(invalid(format!("state is not normalized (‖ψ‖² = {n})")));
        }
        Ok(())
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn apply_in_place(&mut self, gate: &Gate, angle: Option<f64>) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match (gate.kind, angle) {
            (GateKind::CNOT, None) => {
                let cm = self.mask(gate.qubits[0]);
                let tm = self.mask(gate.qubits[1]);
                for x in 0..self.amplitudes.len() {
                    if x & cm != 0 && x & tm == 0 {
                        self.amplitudes.swap(x, x | tm);
                    }
                }
                Ok(())
            }
            (GateKind::CNOT, Some(_)) => Err(invalid("CNOT takes no angle")),
            (kind, Some(theta)) => {
                let m = rotation_matrix(kind, theta);
                let mask = self.mask(gate.qubits[0]);
                for x in 0..self.amplitudes.len() {
                    if x & mask == 0 {
                        let a0 = self.amplitudes[x];
                        let a1 = self.amplitudes[x | mask];
                        self.amplitudes[x] = m[0][0] * a0 + m[0][1] * a1;
                        self.amplitudes[x | mask] = m[1][0] * a0 + m[1][1] * a1;
                    }
                }
                Ok(())
            }
            (kind, None) => Err(invalid(format!("{kind} requires an angle"))),
        }
    }
}

/// 2×2 matrix of `exp(−iθP/2)` for P ∈ {X, Y, Z}.
pub fn rotation_matrix(kind: GateKind, theta: f64) -> [[Complex64; 2]; 2] {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    match kind {
        GateKind::RX => [
            [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
            [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
        ],
        GateKind::RY => [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
        ],
        GateKind::RZ => [
            [Complex64::new(c, -s), ZERO],
            [ZERO, Complex64::new(c, s)],
        ],
        GateKind::CNOT => panic!("CNOT is not a rotation"),
    }
}

/// `U_gate |ψ⟩`. `angle` must be present exactly for rotation gates.
pub fn apply_gate(state: &StateVector, gate: &Gate, angle: Option<f64>) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply_in_place(gate, angle)?;
    Ok(out)
}

fn run_into(circuit: &Circuit, params: &[f64], state: &mut StateVector) -> Result<()> {
    let expected = circuit.param_count();
    if params.len() != expected {
        return Err(Error::ParamCount {
            expected,
            actual: params.len(),
        });
    }
    state.amplitudes.fill(ZERO);
    state.amplitudes[0] = ONE;
    let mut angles = params.iter();
    for gate in circuit.gates() {
        let angle = if gate.kind.is_rotation() {
            angles.next().copied()
        } else {
            None
        };
        state.apply_in_place(gate, angle)?;
    }
    Ok(())
}

/// `U(θ)|0…0⟩`, consuming `params` in rotation-gate order.
pub fn run_circuit(circuit: &Circuit, params: &[f64]) -> Result<StateVector> {
    let mut state = StateVector::zero(circuit.n_qubits())?;
    run_into(circuit, params, &mut state)?;
    Ok(state)
}

/// Unnormalized `(n−1)`-qubit amplitudes produced by `Γ_i(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection(pub Vec<Complex64>);

impl Projection {
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|a| a.norm_sqr()).sum()
    }
}

fn project_into(state: &StateVector, qubit: usize, bit: usize, out: &mut Vec<Complex64>) {
    let p = state.n_qubits - 1 - qubit;
    let low_mask = (1usize << p) - 1;
    out.clear();
    out.extend((0..state.amplitudes.len() / 2).map(|k| {
        let x = ((k & !low_mask) << 1) | (bit << p) | (k & low_mask);
        state.amplitudes[x]
    }));
}

/// Keeps the basis terms whose bit for `qubit` equals `bit` and deletes that
/// bit from the index.
pub fn gamma_project(state: &StateVector, qubit: usize, bit: u8) -> Result<Projection> {
    if state.n_qubits < 2 {
        return Err(invalid("Γ projection needs at least two qubits"));
    }
    if qubit >= state.n_qubits {
        return Err(Error::QubitOutOfRange {
            index: qubit,
            n_qubits: state.n_qubits,
        });
    }
    if bit > 1 {
        return Err(invalid(format!("bit must be 0 or 1, got {bit}")));
    }
    let mut out = Vec::new();
    project_into(state, qubit, bit as usize, &mut out);
    Ok(Projection(out))
}

fn wedge_norm_sqr(u: &[Complex64], v: &[Complex64]) -> f64 {
    // the i = j terms vanish and (i, j) mirrors (j, i), so the ½ of the full
    // double sum equals the sum over i < j
    let mut acc = 0.0;
    for i in 0..u.len() {
        let (ui, vi) = (u[i], v[i]);
        for j in i + 1..u.len() {
            acc += (ui * v[j] - u[j] * vi).norm_sqr();
        }
    }
    acc
}

/// `½ Σ_{i,j} |u_i v_j − u_j v_i|²`.
pub fn generalized_distance(u: &[Complex64], v: &[Complex64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "distance between vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(wedge_norm_sqr(u, v))
}

fn check_measurable(state: &StateVector) -> Result<()> {
    if state.n_qubits < 2 {
        return Err(invalid("Meyer-Wallach measure needs at least two qubits"));
    }
    state.check_normalized()
}

fn mw_unchecked(state: &StateVector, u: &mut Vec<Complex64>, v: &mut Vec<Complex64>) -> f64 {
    let n = state.n_qubits;
    let total: f64 = (0..n)
        .map(|q| {
            project_into(state, q, 0, u);
            project_into(state, q, 1, v);
            wedge_norm_sqr(u, v)
        })
        .sum();
    (4.0 / n as f64 * total).min(1.0)
}

/// Meyer-Wallach measure `(4/n) Σ_i D(Γ_i(0)ψ, Γ_i(1)ψ)`.
pub fn mw_distance(state: &StateVector) -> Result<f64> {
    check_measurable(state)?;
    let (mut u, mut v) = (Vec::new(), Vec::new());
    Ok(mw_unchecked(state, &mut u, &mut v))
}

/// Meyer-Wallach measure through single-qubit purities,
/// `2 (1 − (1/n) Σ_i Tr ρ_i²)`. Independent of [`mw_distance`].
pub fn mw_purity(state: &StateVector) -> Result<f64> {
    check_measurable(state)?;
    let n = state.n_qubits;
    let mean_purity: f64 = (0..n)
        .map(|q| {
            let mask = state.mask(q);
            let (mut p0, mut p1, mut coh) = (0.0, 0.0, ZERO);
            for (x, a) in state.amplitudes.iter().enumerate() {
                if x & mask == 0 {
                    let b = state.amplitudes[x | mask];
                    p0 += a.norm_sqr();
                    p1 += b.norm_sqr();
                    coh += a * b.conj();
                }
            }
            p0 * p0 + p1 * p1 + 2.0 * coh.norm_sqr()
        })
        .sum::<f64>()
        / n as f64;
    Ok(2.0 * (1.0 - mean_purity))
}

/// Sampled entangling capability of a circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntEstimate {
    pub value: f64,
    pub sample_count: usize,
    pub seed: u64,
    /// Sample standard deviation over √sample_count.
    pub std_error: f64,
}

/// Like [`estimate_ent`], also returning every per-sample MW value.
pub fn estimate_ent_with_samples(
    circuit: &Circuit,
    sample_count: usize,
    seed: u64,
) -> Result<(EntEstimate, Vec<f64>)> {
    if sample_count < 1 {
        return Err(invalid("sample_count must be at least 1"));
    }
    if circuit.n_qubits() < 2 {
        return Err(invalid("Meyer-Wallach measure needs at least two qubits"));
    }
    if circuit.cnot_count() == 0 {
        // local rotations on |0…0⟩ only ever produce product states
        let estimate = EntEstimate {
            value: 0.0,
            sample_count,
            seed,
            std_error: 0.0,
        };
        return Ok((estimate, vec![0.0; sample_count]));
    }
    let mut rng = stream(seed);
    let mut params = vec![0.0; circuit.param_count()];
    let mut state = StateVector::zero(circuit.n_qubits())?;
    let (mut u, mut v) = (Vec::new(), Vec::new());
    let mut samples = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        for p in params.iter_mut() {
            *p = rng.random::<f64>() * TAU;
        }
        run_into(circuit, &params, &mut state)?;
        samples.push(mw_unchecked(&state, &mut u, &mut v));
    }
    let (mean, std) = mean_std(&samples);
    let estimate = EntEstimate {
        value: mean.clamp(0.0, 1.0),
        sample_count,
        seed,
        std_error: std / (sample_count as f64).sqrt(),
    };
    Ok((estimate, samples))
}

/// Mean MW over `sample_count` angle vectors drawn i.i.d. Uniform[0, 2π).
pub fn estimate_ent(circuit: &Circuit, sample_count: usize, seed: u64) -> Result<EntEstimate> {
    estimate_ent_with_samples(circuit, sample_count, seed).map(|(e, _)| e)
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub sample_count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Spread of repeated Ent estimates at each sample count. Repetition `r` at
/// sample-count position `k` is seeded with `derive_seed(seed, k·reps + r)`.
pub fn convergence_sweep(
    circuit: &Circuit,
    sample_counts: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if repetitions < 2 {
        return Err(invalid("repetitions must be at least 2"));
    }
    if sample_counts.is_empty() || sample_counts.contains(&0) {
        return Err(invalid("sample counts must be a non-empty list of positive integers"));
    }
    sample_counts
        .iter()
        .enumerate()
        .map(|(k, &count)| {
            let values = (0..repetitions)
                .map(|r| {
                    let s = derive_seed(seed, (k * repetitions + r) as u64);
                    estimate_ent(circuit, count, s).map(|e| e.value)
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = mean_std(&values);
            Ok(ConvergenceRow {
                sample_count: count,
                mean,
                std,
            })
        })
        .collect()
}

/// Tab-separated `sample_count mean std` with a header row.
pub fn write_convergence_tsv<W: Write>(mut out: W, rows: &[ConvergenceRow]) -> std::io::Result<()> {
    writeln!(out, "sample_count\tmean\tstd")?;
    for r in rows {
        writeln!(out, "{}\t{}\t{}", r.sample_count, r.mean, r.std)?;
    }
    Ok(())
}
