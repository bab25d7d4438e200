//! Circuit data model and random structure generators.
//!
//! A [`Circuit`] is a structure only: rotation gates carry no angle. The
//! angle vector is supplied at simulation time and consumed in the order the
//! rotation gates appear (see [`Circuit::param_count`]).

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Gate budget used by the default dataset.
pub const DEFAULT_MAX_GATES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    CNOT,
}

impl GateKind {
    pub const ALL: [GateKind; 4] = [GateKind::RX, GateKind::RY, GateKind::RZ, GateKind::CNOT];

    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::CNOT)
    }

    pub fn arity(self) -> usize {
        if self.is_rotation() {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateKind::RX => "RX",
            GateKind::RY => "RY",
            GateKind::RZ => "RZ",
            GateKind::CNOT => "CNOT",
        };
        f.write_str(s)
    }
}

/// A gate placement. For CNOT, `qubits` is `[control, target]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
}

impl Gate {
    pub fn rotation(kind: GateKind, qubit: usize) -> Self {
        debug_assert!(kind.is_rotation());
        Gate {
            kind,
            qubits: vec![qubit],
        }
    }

    pub fn rx(qubit: usize) -> Self {
        Gate::rotation(GateKind::RX, qubit)
    }

    pub fn ry(qubit: usize) -> Self {
        Gate::rotation(GateKind::RY, qubit)
    }

    pub fn rz(qubit: usize) -> Self {
        Gate::rotation(GateKind::RZ, qubit)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate {
            kind: GateKind::CNOT,
            qubits: vec![control, target],
        }
    }

    /// Checks arity, index range, and control ≠ target.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.qubits.len() != self.kind.arity() {
            return Err(invalid(format!(
                "{} expects {} qubit(s), got {}",
                self.kind,
                self.kind.arity(),
                self.qubits.len()
            )));
        }
        for &q in &self.qubits {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
        }
        if self.kind == GateKind::CNOT && self.qubits[0] == self.qubits[1] {
            return Err(invalid("CNOT control and target must differ"));
        }
        Ok(())
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.qubits.as_slice() {
            [q] => write!(f, "{} q{q}", self.kind),
            [c, t] => write!(f, "{}({c},{t})", self.kind),
            _ => write!(f, "{}{:?}", self.kind, self.qubits),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    GateStrategy,
    LayerStrategy,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    strategy: Strategy,
}

impl Circuit {
    pub fn new(n_qubits: usize, gates: Vec<Gate>, strategy: Strategy) -> Result<Self> {
        if n_qubits == 0 {
            return Err(invalid("circuit needs at least one qubit"));
        }
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Circuit {
            n_qubits,
            gates,
            strategy,
        })
    }

    pub fn manual(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        Circuit::new(n_qubits, gates, Strategy::Manual)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Number of rotation gates, i.e. the length of the angle vector.
    pub fn param_count(&self) -> usize {
        self.gates.iter().filter(|g| g.kind.is_rotation()).count()
    }

    pub fn cnot_count(&self) -> usize {
        self.gates.len() - self.param_count()
    }
}

fn check_budget(n_qubits: usize, n_gates: usize) -> Result<()> {
    if n_qubits < 2 {
        return Err(invalid(format!("n_qubits must be at least 2, got {n_qubits}")));
    }
    if n_gates < 1 {
        return Err(invalid("n_gates must be at least 1"));
    }
    Ok(())
}

/// Uniform kind, uniform qubit for rotations, uniform ordered pair for CNOT.
pub fn generate_gate_strategy<R: Rng + ?Sized>(
    n_qubits: usize,
    n_gates: usize,
    rng: &mut R,
) -> Result<Circuit> {
    check_budget(n_qubits, n_gates)?;
    let gates = (0..n_gates)
        .map(|_| {
            let kind = GateKind::ALL[rng.random_range(0..4)];
            if kind.is_rotation() {
                Gate::rotation(kind, rng.random_range(0..n_qubits))
            } else {
                let control = rng.random_range(0..n_qubits);
                // shift past the control to draw uniformly among the others
                let mut target = rng.random_range(0..n_qubits - 1);
                if target >= control {
                    target += 1;
                }
                Gate::cnot(control, target)
            }
        })
        .collect();
    Ok(Circuit {
        n_qubits,
        gates,
        strategy: Strategy::GateStrategy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn offset(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

/// A single homogeneous layer: one gate kind on one parity class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub kind: GateKind,
    pub parity: Parity,
    pub gates: Vec<Gate>,
}

/// Full placement of one layer, lowest qubit first.
///
/// Rotations go on every qubit of the parity class. CNOTs go on adjacent
/// disjoint pairs starting at the parity offset, control on the lower qubit,
/// without wrapping around the register.
pub fn layer_placements(kind: GateKind, parity: Parity, n_qubits: usize) -> Vec<Gate> {
    let start = parity.offset();
    if kind.is_rotation() {
        (start..n_qubits)
            .step_by(2)
            .map(|q| Gate::rotation(kind, q))
            .collect()
    } else {
        (start..n_qubits.saturating_sub(1))
            .step_by(2)
            .map(|q| Gate::cnot(q, q + 1))
            .collect()
    }
}

/// Layer-by-layer construction, exposing the layer boundaries. The final
/// layer is truncated to its lowest-index placements to hit the budget.
pub fn layer_plan<R: Rng + ?Sized>(
    n_qubits: usize,
    n_gates: usize,
    rng: &mut R,
) -> Result<Vec<Layer>> {
    check_budget(n_qubits, n_gates)?;
    let mut layers = Vec::new();
    let mut placed = 0;
    while placed < n_gates {
        let kind = GateKind::ALL[rng.random_range(0..4)];
        let parity = if rng.random_bool(0.5) {
            Parity::Odd
        } else {
            Parity::Even
        };
        let mut gates = layer_placements(kind, parity, n_qubits);
        if gates.is_empty() {
            // odd-parity CNOT on two qubits has no pair
            continue;
        }
        gates.truncate(n_gates - placed);
        placed += gates.len();
        layers.push(Layer {
            kind,
            parity,
            gates,
        });
    }
    Ok(layers)
}

pub fn generate_layer_strategy<R: Rng + ?Sized>(
    n_qubits: usize,
    n_gates: usize,
    rng: &mut R,
) -> Result<Circuit> {
    let gates = layer_plan(n_qubits, n_gates, rng)?
        .into_iter()
        .flat_map(|layer| layer.gates)
        .collect();
    Ok(Circuit {
        n_qubits,
        gates,
        strategy: Strategy::LayerStrategy,
    })
}

/// Generates with a fixed strategy. `Manual` is rejected.
pub fn generate_with<R: Rng + ?Sized>(
    strategy: Strategy,
    n_qubits: usize,
    n_gates: usize,
    rng: &mut R,
) -> Result<Circuit> {
    match strategy {
        Strategy::GateStrategy => generate_gate_strategy(n_qubits, n_gates, rng),
        Strategy::LayerStrategy => generate_layer_strategy(n_qubits, n_gates, rng),
        Strategy::Manual => Err(invalid("manual circuits cannot be generated")),
    }
}

/// Each circuit picks the gate or layer strategy with probability 1/2.
pub fn generate_mixed<R: Rng + ?Sized>(
    n_qubits: usize,
    n_gates: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Circuit>> {
    check_budget(n_qubits, n_gates)?;
    if count < 1 {
        return Err(invalid("count must be at least 1"));
    }
    (0..count)
        .map(|_| {
            let strategy = if rng.random_bool(0.5) {
                Strategy::GateStrategy
            } else {
                Strategy::LayerStrategy
            };
            generate_with(strategy, n_qubits, n_gates, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    #[test]
    fn param_count_examples() {
        assert_eq!(Circuit::manual(2, vec![]).unwrap().param_count(), 0);
        let c = Circuit::manual(2, vec![Gate::rx(0), Gate::cnot(0, 1), Gate::ry(1)]).unwrap();
        assert_eq!(c.param_count(), 2);
        assert_eq!(c.cnot_count(), 1);
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::cnot(1, 1).validate(3).is_err());
        assert!(matches!(
            Gate::rx(3).validate(3),
            Err(Error::QubitOutOfRange { index: 3, n_qubits: 3 })
        ));
        let bad = Gate {
            kind: GateKind::RY,
            qubits: vec![0, 1],
        };
        assert!(bad.validate(3).is_err());
        assert!(Circuit::manual(2, vec![Gate::cnot(0, 2)]).is_err());
    }

    #[test]
    fn gate_strategy_default_budget() {
        let c = generate_gate_strategy(6, 30, &mut stream(1)).unwrap();
        assert_eq!(c.len(), 30);
        assert_eq!(c.n_qubits(), 6);
        assert_eq!(c.strategy(), Strategy::GateStrategy);
        assert!(c.param_count() <= 30);
    }

    #[test]
    fn single_gate_circuit_is_valid() {
        for seed in 0..50 {
            let c = generate_gate_strategy(2, 1, &mut stream(seed)).unwrap();
            assert_eq!(c.len(), 1);
            c.gates()[0].validate(2).unwrap();
        }
    }

    #[test]
    fn generators_reject_bad_budgets() {
        let mut rng = stream(0);
        assert!(generate_gate_strategy(1, 30, &mut rng).is_err());
        assert!(generate_gate_strategy(6, 0, &mut rng).is_err());
        assert!(generate_layer_strategy(1, 30, &mut rng).is_err());
        assert!(generate_layer_strategy(6, 0, &mut rng).is_err());
        assert!(generate_mixed(6, 30, 0, &mut rng).is_err());
        assert!(generate_with(Strategy::Manual, 6, 30, &mut rng).is_err());
    }

    #[test]
    fn rx_even_layer_on_six_qubits() {
        let layer = layer_placements(GateKind::RX, Parity::Even, 6);
        assert_eq!(layer, vec![Gate::rx(0), Gate::rx(2), Gate::rx(4)]);
    }

    #[test]
    fn cnot_odd_layer_on_six_qubits() {
        let layer = layer_placements(GateKind::CNOT, Parity::Odd, 6);
        assert_eq!(layer, vec![Gate::cnot(1, 2), Gate::cnot(3, 4)]);
        // no wrap-around pair (5,0)
        let even = layer_placements(GateKind::CNOT, Parity::Even, 5);
        assert_eq!(even, vec![Gate::cnot(0, 1), Gate::cnot(2, 3)]);
    }

    #[test]
    fn rz_even_layer_truncates_to_budget() {
        let mut layer = layer_placements(GateKind::RZ, Parity::Even, 2);
        layer.truncate(1);
        assert_eq!(layer, vec![Gate::rz(0)]);
        for seed in 0..50 {
            let c = generate_layer_strategy(2, 1, &mut stream(seed)).unwrap();
            assert_eq!(c.len(), 1);
        }
    }

    #[test]
    fn mixed_generation_count_and_tags() {
        let cs = generate_mixed(6, 30, 200, &mut stream(3)).unwrap();
        assert_eq!(cs.len(), 200);
        assert!(cs.iter().all(|c| c.len() == 30 && c.n_qubits() == 6));
        assert!(cs.iter().any(|c| c.strategy() == Strategy::GateStrategy));
        assert!(cs.iter().any(|c| c.strategy() == Strategy::LayerStrategy));
    }

    #[test]
    fn mixed_strategy_is_balanced() {
        let n = 20_000;
        let cs = generate_mixed(6, 30, n, &mut stream(2024)).unwrap();
        let gate = cs
            .iter()
            .filter(|c| c.strategy() == Strategy::GateStrategy)
            .count() as f64;
        let mean = n as f64 * 0.5;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((gate - mean).abs() < 3.0 * sigma, "gate tally {gate}");
    }

    #[test]
    fn gate_kind_frequencies_pass_chi_square() {
        let mut counts = [0usize; 4];
        let mut rng = stream(99);
        for _ in 0..400 {
            let c = generate_gate_strategy(6, 30, &mut rng).unwrap();
            for g in c.gates() {
                counts[GateKind::ALL.iter().position(|k| *k == g.kind).unwrap()] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let expected = total as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 3 degrees of freedom, p = 0.001
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn cnot_pairs_cover_all_ordered_pairs() {
        let mut seen = std::collections::HashSet::new();
        let mut rng = stream(5);
        for _ in 0..200 {
            for g in generate_gate_strategy(4, 30, &mut rng).unwrap().gates() {
                if g.kind == GateKind::CNOT {
                    seen.insert((g.qubits[0], g.qubits[1]));
                }
            }
        }
        assert_eq!(seen.len(), 12);
    }

    proptest! {
        #[test]
        fn generated_circuits_are_valid_and_deterministic(
            seed in any::<u64>(),
            n_qubits in 2usize..8,
            n_gates in 1usize..40,
        ) {
            for strategy in [Strategy::GateStrategy, Strategy::LayerStrategy] {
                let a = generate_with(strategy, n_qubits, n_gates, &mut stream(seed)).unwrap();
                let b = generate_with(strategy, n_qubits, n_gates, &mut stream(seed)).unwrap();
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(a.len(), n_gates);
                prop_assert_eq!(a.strategy(), strategy);
                for g in a.gates() {
                    prop_assert!(g.validate(n_qubits).is_ok());
                }
            }
            let a = generate_mixed(n_qubits, n_gates, 3, &mut stream(seed)).unwrap();
            let b = generate_mixed(n_qubits, n_gates, 3, &mut stream(seed)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn layers_are_homogeneous_on_one_parity(
            seed in any::<u64>(),
            n_qubits in 2usize..8,
            n_gates in 1usize..40,
        ) {
            let layers = layer_plan(n_qubits, n_gates, &mut stream(seed)).unwrap();
            let last = layers.len() - 1;
            for (i, layer) in layers.iter().enumerate() {
                let full = layer_placements(layer.kind, layer.parity, n_qubits);
                if i < last {
                    prop_assert_eq!(&layer.gates, &full);
                } else {
                    prop_assert!(!layer.gates.is_empty());
                    prop_assert_eq!(&layer.gates[..], &full[..layer.gates.len()]);
                }
                for g in &layer.gates {
                    prop_assert_eq!(g.kind, layer.kind);
                    prop_assert_eq!(g.qubits[0] % 2, layer.parity.offset());
                }
            }
            let flat: Vec<Gate> = layers.into_iter().flat_map(|l| l.gates).collect();
            let circuit = generate_layer_strategy(n_qubits, n_gates, &mut stream(seed)).unwrap();
            prop_assert_eq!(circuit.gates(), &flat[..]);
        }
    }
}
