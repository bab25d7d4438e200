//! Gate encoding: one `n × n` matrix per gate, zero-padded to a fixed length.
//!
//! Codes: RX = 10, RY = 20, RZ = 30 on the diagonal entry of the target
//! qubit. CNOT uses +40 for the control and −40 for the target; by default
//! both sit on the diagonal, and [`CnotPlacement::OffDiagonal`] puts them at
//! `(control, target)` and `(target, control)` instead.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate, GateKind, DEFAULT_MAX_GATES};
use crate::error::{invalid, Error, Result};

pub const RX_CODE: f64 = 10.0;
pub const RY_CODE: f64 = 20.0;
pub const RZ_CODE: f64 = 30.0;
pub const CNOT_CODE: f64 = 40.0;

/// Divisor mapping raw codes into [−1, 1] before they reach the model.
pub const DEFAULT_SCALE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CnotPlacement {
    #[default]
    Diagonal,
    OffDiagonal,
}

fn rotation_code(kind: GateKind) -> f64 {
    match kind {
        GateKind::RX => RX_CODE,
        GateKind::RY => RY_CODE,
        GateKind::RZ => RZ_CODE,
        GateKind::CNOT => CNOT_CODE,
    }
}

/// Row-major `n × n` matrix of gate codes.
#[derive(Debug, Clone, PartialEq)]
pub struct GateEncodingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl GateEncodingMatrix {
    pub fn zeros(n: usize) -> Self {
        GateEncodingMatrix {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Builds from row-major entries; the length must be `n²`.
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::Shape(format!(
                "{} entries for a {n}×{n} matrix",
                entries.len()
            )));
        }
        Ok(GateEncodingMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.entries[row * self.n + col] = value;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_padding(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedCircuit {
    n: usize,
    placement: CnotPlacement,
    steps: Vec<GateEncodingMatrix>,
}

impl EncodedCircuit {
    /// Wraps externally built steps; nothing is validated until decoding.
    pub fn from_steps(n: usize, placement: CnotPlacement, steps: Vec<GateEncodingMatrix>) -> Self {
        EncodedCircuit { n, placement, steps }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn placement(&self) -> CnotPlacement {
        self.placement
    }

    pub fn steps(&self) -> &[GateEncodingMatrix] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn padding_count(&self) -> usize {
        self.steps.iter().filter(|s| s.is_padding()).count()
    }
}

pub fn encode_gate(gate: &Gate, n: usize, placement: CnotPlacement) -> Result<GateEncodingMatrix> {
    gate.validate(n)?;
    let mut m = GateEncodingMatrix::zeros(n);
    match gate.qubits.as_slice() {
        &[q] => m.set(q, q, rotation_code(gate.kind)),
        &[c, t] => match placement {
            CnotPlacement::Diagonal => {
                m.set(c, c, CNOT_CODE);
                m.set(t, t, -CNOT_CODE);
            }
            CnotPlacement::OffDiagonal => {
                m.set(c, t, CNOT_CODE);
                m.set(t, c, -CNOT_CODE);
            }
        },
        _ => unreachable!("validated arity"),
    }
    Ok(m)
}

/// One step per gate, then zero matrices up to `max_steps`.
pub fn encode_circuit(
    circuit: &Circuit,
    max_steps: usize,
    placement: CnotPlacement,
) -> Result<EncodedCircuit> {
    if circuit.len() > max_steps {
        return Err(Error::Capacity {
            gates: circuit.len(),
            capacity: max_steps,
        });
    }
    let n = circuit.n_qubits();
    let mut steps = circuit
        .gates()
        .iter()
        .map(|g| encode_gate(g, n, placement))
        .collect::<Result<Vec<_>>>()?;
    steps.resize(max_steps, GateEncodingMatrix::zeros(n));
    Ok(EncodedCircuit { n, placement, steps })
}

fn decode_step(m: &GateEncodingMatrix, placement: CnotPlacement) -> std::result::Result<Option<Gate>, String> {
    let n = m.n;
    let nonzero: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| (r, c, m.get(r, c)))
        .filter(|&(_, _, v)| v != 0.0)
        .collect();
    for &(r, c, v) in &nonzero {
        if ![RX_CODE, RY_CODE, RZ_CODE, CNOT_CODE, -CNOT_CODE].contains(&v) {
            return Err(format!("entry ({r},{c}) = {v} is not a gate code"));
        }
    }
    match nonzero.as_slice() {
        [] => Ok(None),
        &[(r, c, v)] => {
            let kind = match v {
                RX_CODE => GateKind::RX,
                RY_CODE => GateKind::RY,
                RZ_CODE => GateKind::RZ,
                _ => return Err(format!("lone entry {v} is not a rotation code")),
            };
            if r != c {
                return Err(format!("rotation code at off-diagonal ({r},{c})"));
            }
            Ok(Some(Gate::rotation(kind, r)))
        }
        &[(r1, c1, v1), (r2, c2, v2)] => {
            let (plus, minus) = match (v1, v2) {
                (CNOT_CODE, v) if v == -CNOT_CODE => ((r1, c1), (r2, c2)),
                (v, CNOT_CODE) if v == -CNOT_CODE => ((r2, c2), (r1, c1)),
                _ => return Err(format!("two entries {v1}, {v2} are not a ±40 pair")),
            };
            match placement {
                CnotPlacement::Diagonal if plus.0 == plus.1 && minus.0 == minus.1 => {
                    Ok(Some(Gate::cnot(plus.0, minus.0)))
                }
                CnotPlacement::OffDiagonal
                    if plus.0 != plus.1 && plus.0 == minus.1 && plus.1 == minus.0 =>
                {
                    Ok(Some(Gate::cnot(plus.0, plus.1)))
                }
                _ => Err(format!(
                    "CNOT entries at {plus:?} and {minus:?} do not match {placement:?} placement"
                )),
            }
        }
        more => Err(format!("{} nonzero entries", more.len())),
    }
}

/// Inverse of [`encode_circuit`]; padding is dropped and the strategy is
/// `Manual`.
pub fn decode_circuit(encoded: &EncodedCircuit) -> Result<Circuit> {
    let mut gates = Vec::new();
    let mut padding_seen = false;
    for (step, m) in encoded.steps.iter().enumerate() {
        if m.n != encoded.n {
            return Err(Error::Decode {
                step,
                reason: format!("{0}×{0} matrix in a {1}-qubit encoding", m.n, encoded.n),
            });
        }
        match decode_step(m, encoded.placement).map_err(|reason| Error::Decode { step, reason })? {
            None => padding_seen = true,
            Some(_) if padding_seen => {
                return Err(Error::Decode {
                    step,
                    reason: "gate step after padding".into(),
                })
            }
            Some(g) => gates.push(g),
        }
    }
    Circuit::manual(encoded.n, gates)
}

/// Flattens each step row-major and divides by `scale`: a `(T, n²)` array.
pub fn to_feature_sequence(encoded: &EncodedCircuit, scale: f64) -> Array2<f64> {
    assert!(scale > 0.0, "feature scale must be positive");
    let width = encoded.n * encoded.n;
    let mut out = Array2::zeros((encoded.steps.len(), width));
    for (mut row, m) in out.rows_mut().into_iter().zip(&encoded.steps) {
        for (dst, &v) in row.iter_mut().zip(&m.entries) {
            *dst = v / scale;
        }
    }
    out
}

/// Encoding settings shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub n_qubits: usize,
    pub max_steps: usize,
    pub placement: CnotPlacement,
    pub scale: f64,
}

impl Encoder {
    pub fn new(n_qubits: usize) -> Self {
        Encoder {
            n_qubits,
            max_steps: DEFAULT_MAX_GATES,
            placement: CnotPlacement::Diagonal,
            scale: DEFAULT_SCALE,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n_qubits * self.n_qubits
    }

    pub fn features(&self, circuit: &Circuit) -> Result<Array2<f64>> {
        if circuit.n_qubits() != self.n_qubits {
            return Err(Error::Shape(format!(
                "{}-qubit circuit given to a {}-qubit encoder",
                circuit.n_qubits(),
                self.n_qubits
            )));
        }
        if !(self.scale > 0.0) {
            return Err(invalid("feature scale must be positive"));
        }
        let encoded = encode_circuit(circuit, self.max_steps, self.placement)?;
        Ok(to_feature_sequence(&encoded, self.scale))
    }

    /// Stacks the features of many circuits into an `N × T × n²` array.
    pub fn feature_batch<'a>(&self, circuits: impl IntoIterator<Item = &'a Circuit>) -> Result<Array3<f64>> {
        let circuits: Vec<&Circuit> = circuits.into_iter().collect();
        let mut out = Array3::zeros((circuits.len(), self.max_steps, self.input_dim()));
        for (mut slot, c) in out.outer_iter_mut().zip(circuits) {
            slot.assign(&self.features(c)?);
        }
        Ok(out)
    }
}
