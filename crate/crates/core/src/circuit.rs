//! Layered parametric circuits.
//!
//! A layer is a column of single-qubit parametric rotations `exp(-iθG)` (one per
//! qubit) followed by a set of fixed blocks acting on disjoint singletons or
//! pairs of qubits. Inside a block, each encoding entry applies the input
//! rotations `exp(-i x_c K)` on the block's qubits and then its interleaver;
//! the block's fixed gate is applied last.
//!
//! Qubits and layers are 0-based everywhere except [`layer_qubit_index`], which
//! follows the 1-based layer-qubit convention `m(ℓ-1)+k`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QnnError, Result};
use crate::gates::{Axis, Unitary};

const TOL: f64 = 1e-12;

/// Weighted single-qubit observable `offset·1 + weight·(n·σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub axis: Axis,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Observable {
    pub fn pauli_z() -> Observable {
        Observable::weighted(Axis::Z, 1.0)
    }

    pub fn weighted(axis: Axis, weight: f64) -> Observable {
        Observable {
            axis,
            weight,
            offset: 0.0,
        }
    }

    pub fn trace(&self) -> f64 {
        2.0 * self.offset
    }

    pub fn spectral_norm(&self) -> f64 {
        self.offset.abs() + self.weight.abs() * self.axis.norm()
    }

    /// Expectation given the Bloch vector of the measured qubit.
    pub fn expectation(&self, bloch: [f64; 3]) -> f64 {
        let [x, y, z] = self.axis.0;
        self.offset + self.weight * (x * bloch[0] + y * bloch[1] + z * bloch[2])
    }
}

/// One input coordinate's encoding inside a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingEntry {
    /// Index into the layer's `pairing`.
    pub element: usize,
    pub coordinate: usize,
    /// One optional generator per qubit of the element (`null` = absent).
    pub generators: Vec<Option<Axis>>,
    #[serde(default)]
    pub interleaver: Option<Unitary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub param_axes: Vec<Axis>,
    pub pairing: Vec<Vec<usize>>,
    /// One entry per pairing element; `null` is the identity.
    pub fixed_gates: Vec<Option<Unitary>>,
    #[serde(default)]
    pub encoding: Vec<EncodingEntry>,
    /// Parameters of a mean-zero layer are drawn on `[0, 2π)`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub mean_zero: bool,
}

impl LayerSpec {
    /// Layer of parametric rotations with no fixed gates and no encoding.
    pub fn rotations_only(param_axes: Vec<Axis>) -> LayerSpec {
        LayerSpec {
            param_axes,
            pairing: Vec::new(),
            fixed_gates: Vec::new(),
            encoding: Vec::new(),
            mean_zero: false,
        }
    }

    /// Partner of `qubit` in this layer, if it sits in a pair.
    pub fn partner(&self, qubit: usize) -> Option<usize> {
        self.pairing
            .iter()
            .find(|e| e.len() == 2 && e.contains(&qubit))
            .map(|e| if e[0] == qubit { e[1] } else { e[0] })
    }

    pub fn param_period(&self) -> f64 {
        if self.mean_zero {
            TAU
        } else {
            PI
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub num_qubits: usize,
    pub num_layers: usize,
    pub normalization: f64,
    #[serde(default)]
    pub input_dim: usize,
    pub observable: Vec<Observable>,
    pub layers: Vec<LayerSpec>,
}

/// `m(ℓ-1)+k` with 1-based `layer` and `qubit`.
pub fn layer_qubit_index(layer: usize, qubit: usize, m: usize, num_layers: usize) -> Result<usize> {
    if layer == 0 || layer > num_layers || qubit == 0 || qubit > m {
        return Err(QnnError::Index(format!(
            "(layer {layer}, qubit {qubit}) outside 1..={num_layers} x 1..={m}"
        )));
    }
    Ok(m * (layer - 1) + qubit)
}

/// Inverse of [`layer_qubit_index`].
pub fn layer_qubit_of(index: usize, m: usize, num_layers: usize) -> Result<(usize, usize)> {
    if m == 0 || index == 0 || index > m * num_layers {
        return Err(QnnError::Index(format!(
            "parameter index {index} outside 1..={}",
            m * num_layers
        )));
    }
    Ok(((index - 1) / m + 1, (index - 1) % m + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub layer: Option<usize>,
    pub qubit: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, layer: Option<usize>, qubit: Option<usize>, message: String) {
        self.violations.push(Violation {
            layer,
            qubit,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "- {}", v.message)?;
        }
        Ok(())
    }
}

impl CircuitSpec {
    pub fn num_params(&self) -> usize {
        self.num_qubits * self.num_layers
    }

    /// 0-based flat index of the rotation on `qubit` in `layer`.
    pub fn param_index(&self, layer: usize, qubit: usize) -> usize {
        layer * self.num_qubits + qubit
    }

    pub fn param_periods(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.param_period(), self.num_qubits))
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_circuit(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(QnnError::InvalidCircuit(report))
        }
    }

    /// Appends a layer of X-axis rotations with no fixed gates and no encoding.
    /// Its parameters are drawn on `[0, 2π)`, which drives every `E[f_k]` to 0.
    pub fn append_mean_zero_layer(&self) -> CircuitSpec {
        let mut out = self.clone();
        out.layers.push(LayerSpec {
            mean_zero: true,
            ..LayerSpec::rotations_only(vec![Axis::X; self.num_qubits])
        });
        out.num_layers += 1;
        out
    }

    pub fn with_normalization(mut self, normalization: f64) -> CircuitSpec {
        self.normalization = normalization;
        self
    }
}

pub fn validate_circuit(spec: &CircuitSpec) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let m = spec.num_qubits;
    if m == 0 {
        rep.push(None, None, "circuit has no qubits".into());
    }
    if spec.num_layers != spec.layers.len() {
        rep.push(
            None,
            None,
            format!(
                "num_layers is {} but {} layers are listed",
                spec.num_layers,
                spec.layers.len()
            ),
        );
    }
    if !(spec.normalization.is_finite() && spec.normalization > 0.0) {
        rep.push(None, None, format!("normalization {} is not positive", spec.normalization));
    }
    if spec.observable.len() != m {
        rep.push(
            None,
            None,
            format!("{} observables listed for {m} qubits", spec.observable.len()),
        );
    }
    for (k, o) in spec.observable.iter().enumerate() {
        if o.trace().abs() > TOL {
            rep.push(None, Some(k), format!("observable on qubit {k} not traceless (trace {})", o.trace()));
        }
        if o.spectral_norm() > 1.0 + TOL {
            rep.push(
                None,
                Some(k),
                format!("observable on qubit {k} has spectral norm {} > 1", o.spectral_norm()),
            );
        }
        if !o.weight.is_finite() || !o.offset.is_finite() {
            rep.push(None, Some(k), format!("observable on qubit {k} is not finite"));
        }
    }
    for (l, layer) in spec.layers.iter().enumerate() {
        validate_layer(&mut rep, l, layer, m, spec.input_dim);
    }
    rep
}

fn validate_layer(rep: &mut ValidationReport, l: usize, layer: &LayerSpec, m: usize, input_dim: usize) {
    if layer.param_axes.len() != m {
        rep.push(
            Some(l),
            None,
            format!("layer {l} lists {} parametric generators for {m} qubits", layer.param_axes.len()),
        );
    }
    for (k, axis) in layer.param_axes.iter().enumerate() {
        if !axis.is_unit(TOL) {
            rep.push(
                Some(l),
                Some(k),
                format!(
                    "parametric generator of qubit {k} in layer {l} does not have spectrum {{-1,+1}} (axis norm {})",
                    axis.norm()
                ),
            );
        }
    }
    let mut seen = vec![false; m];
    for elem in &layer.pairing {
        if elem.is_empty() || elem.len() > 2 {
            rep.push(Some(l), None, format!("layer {l} element {elem:?} is not a singleton or pair"));
            continue;
        }
        if elem.len() == 2 && elem[0] == elem[1] {
            rep.push(Some(l), Some(elem[0]), format!("layer {l} pairs qubit {} with itself", elem[0]));
            continue;
        }
        for &q in elem {
            if q >= m {
                rep.push(Some(l), Some(q), format!("layer {l} refers to qubit {q} outside 0..{m}"));
            } else if seen[q] {
                rep.push(Some(l), Some(q), format!("qubit {q} acted on twice in layer {l}"));
            } else {
                seen[q] = true;
            }
        }
    }
    if layer.fixed_gates.len() != layer.pairing.len() {
        rep.push(
            Some(l),
            None,
            format!(
                "layer {l} has {} fixed gates for {} pairing elements",
                layer.fixed_gates.len(),
                layer.pairing.len()
            ),
        );
    }
    for (e, gate) in layer.fixed_gates.iter().enumerate() {
        let Some(elem) = layer.pairing.get(e) else { continue };
        if let Some(g) = gate {
            check_unitary(rep, l, g, elem.len(), &format!("fixed gate on element {elem:?}"));
        }
    }
    for entry in &layer.encoding {
        let Some(elem) = layer.pairing.get(entry.element) else {
            rep.push(Some(l), None, format!("layer {l} encoding refers to missing element {}", entry.element));
            continue;
        };
        if entry.coordinate >= input_dim {
            rep.push(
                Some(l),
                None,
                format!("layer {l} encodes coordinate {} but input_dim is {input_dim}", entry.coordinate),
            );
        }
        if entry.generators.len() != elem.len() {
            rep.push(
                Some(l),
                None,
                format!("layer {l} encoding on {elem:?} lists {} generators", entry.generators.len()),
            );
        }
        for (j, g) in entry.generators.iter().enumerate() {
            if let Some(axis) = g {
                if !axis.is_unit(TOL) {
                    let q = elem.get(j).copied();
                    rep.push(
                        Some(l),
                        q,
                        format!("encoding generator on {elem:?} in layer {l} does not have spectrum {{-1,+1}}"),
                    );
                }
            }
        }
        if let Some(u) = &entry.interleaver {
            check_unitary(rep, l, u, elem.len(), &format!("encoding interleaver on element {elem:?}"));
        }
    }
}

fn check_unitary(rep: &mut ValidationReport, l: usize, u: &Unitary, arity: usize, what: &str) {
    if u.dim() != 1 << arity {
        rep.push(Some(l), None, format!("{what} in layer {l} has dimension {} (expected {})", u.dim(), 1 << arity));
    } else if u.unitarity_defect() > TOL {
        rep.push(Some(l), None, format!("{what} in layer {l} is not unitary (defect {:.3e})", u.unitarity_defect()));
    }
}

/// Parameter vector `Θ` with one period tag per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub periods: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(spec: &CircuitSpec) -> ParamVector {
        ParamVector {
            values: vec![0.0; spec.num_params()],
            periods: spec.param_periods(),
        }
    }

    pub fn from_values(spec: &CircuitSpec, values: Vec<f64>) -> Result<ParamVector> {
        if values.len() != spec.num_params() {
            return Err(QnnError::Argument(format!(
                "parameter vector has length {}, circuit needs {}",
                values.len(),
                spec.num_params()
            )));
        }
        Ok(ParamVector {
            values,
            periods: spec.param_periods(),
        })
    }

    /// Independent uniform draws on each entry's period.
    pub fn uniform<R: Rng + ?Sized>(spec: &CircuitSpec, rng: &mut R) -> ParamVector {
        let periods = spec.param_periods();
        let values = periods.iter().map(|&p| rng.random::<f64>() * p).collect();
        ParamVector { values, periods }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_distance(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Training set `(X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Dataset> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(QnnError::Argument(format!(
                "dataset needs matching non-empty inputs/labels (got {} and {})",
                inputs.len(),
                labels.len()
            )));
        }
        for i in 0..inputs.len() {
            for j in 0..i {
                if inputs[i] == inputs[j] {
                    return Err(QnnError::Argument(format!("inputs {j} and {i} coincide")));
                }
            }
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_qubit_examples() {
        assert_eq!(layer_qubit_index(1, 1, 7, 3).unwrap(), 1);
        assert_eq!(layer_qubit_index(2, 6, 7, 3).unwrap(), 13);
        assert_eq!(layer_qubit_index(3, 7, 7, 3).unwrap(), 21);
        assert!(layer_qubit_index(0, 1, 7, 3).is_err());
        assert!(layer_qubit_index(4, 1, 7, 3).is_err());
        assert!(layer_qubit_index(1, 8, 7, 3).is_err());
    }

    #[test]
    fn layer_qubit_is_a_bijection() {
        let (m, l) = (5, 4);
        let mut hit = vec![false; m * l + 1];
        for layer in 1..=l {
            for q in 1..=m {
                let i = layer_qubit_index(layer, q, m, l).unwrap();
                assert!(!hit[i]);
                hit[i] = true;
                assert_eq!(layer_qubit_of(i, m, l).unwrap(), (layer, q));
            }
        }
        assert!(hit[1..].iter().all(|&h| h));
    }

    fn tiny(m: usize) -> CircuitSpec {
        CircuitSpec {
            num_qubits: m,
            num_layers: 1,
            normalization: 1.0,
            input_dim: 0,
            observable: vec![Observable::pauli_z(); m],
            layers: vec![LayerSpec::rotations_only(vec![Axis::Y; m])],
        }
    }

    #[test]
    fn overlapping_pairs_are_reported() {
        let mut c = tiny(4);
        c.layers[0].pairing = vec![vec![1, 2], vec![2, 3]];
        c.layers[0].fixed_gates = vec![Some(Unitary::cnot()), Some(Unitary::cnot())];
        let rep = c.validate();
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].message, "qubit 2 acted on twice in layer 0");
    }

    #[test]
    fn traced_observable_is_reported() {
        let mut c = tiny(2);
        c.observable[1] = Observable {
            axis: Axis::Z,
            weight: 0.5,
            offset: 0.25,
        };
        let rep = c.validate();
        assert_eq!(rep.violations.len(), 1);
        assert!(rep.violations[0].message.contains("not traceless"));
    }

    #[test]
    fn bad_axes_and_gates_are_reported() {
        let mut c = tiny(2);
        c.layers[0].param_axes[0] = Axis([0.5, 0.0, 0.0]);
        c.layers[0].pairing = vec![vec![0, 1]];
        c.layers[0].fixed_gates = vec![Some(Unitary::from_real(4, &[1.0; 16]))];
        let rep = c.validate();
        assert_eq!(rep.violations.len(), 2, "{rep}");
    }

    #[test]
    fn mean_zero_layer_shape() {
        let c = tiny(3).append_mean_zero_layer();
        assert_eq!(c.num_layers, 2);
        assert_eq!(c.num_params(), 6);
        assert!(c.validate().is_empty());
        assert_eq!(c.param_periods(), vec![PI, PI, PI, TAU, TAU, TAU]);
    }

    #[test]
    fn duplicate_inputs_rejected() {
        assert!(Dataset::new(vec![vec![0.1], vec![0.1]], vec![0.0, 1.0]).is_err());
        assert!(Dataset::new(vec![], vec![]).is_err());
    }
}
