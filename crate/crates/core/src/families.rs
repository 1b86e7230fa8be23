//! Built-in circuit families.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitSpec, EncodingEntry, LayerSpec, Observable};
use crate::error::{QnnError, Result};
use crate::gates::{Axis, Unitary};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Brick1d,
    Lattice2d,
    RandomPairing,
    Pathological,
    Product,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Brick1d,
        Family::Lattice2d,
        Family::RandomPairing,
        Family::Pathological,
        Family::Product,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Brick1d => "brick1d",
            Family::Lattice2d => "lattice2d",
            Family::RandomPairing => "random-pairing",
            Family::Pathological => "pathological",
            Family::Product => "product",
        }
    }
}

impl FromStr for Family {
    type Err = QnnError;

    fn from_str(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| QnnError::Argument(format!("unknown family '{s}'")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Family parameters. `input_dim` controls the layer-1 encoding: qubit `q`
/// encodes coordinate `q mod input_dim` with a Y-axis generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyParams {
    pub family: Family,
    pub m: usize,
    pub layers: usize,
    pub seed: u64,
    pub input_dim: usize,
}

impl FamilyParams {
    pub fn new(family: Family, m: usize, layers: usize, seed: u64) -> FamilyParams {
        FamilyParams {
            family,
            m,
            layers,
            seed,
            input_dim: 0,
        }
    }

    pub fn with_input_dim(mut self, input_dim: usize) -> FamilyParams {
        self.input_dim = input_dim;
        self
    }

    pub fn build(&self) -> Result<CircuitSpec> {
        builtin_family(self)
    }
}

pub fn builtin_family(p: &FamilyParams) -> Result<CircuitSpec> {
    if p.m == 0 {
        return Err(QnnError::Construction("m must be positive".into()));
    }
    if p.family != Family::Pathological && p.layers == 0 {
        return Err(QnnError::Construction("L must be positive".into()));
    }
    let spec = match p.family {
        Family::Brick1d => brick1d(p),
        Family::Lattice2d => lattice2d(p)?,
        Family::RandomPairing => random_pairing(p),
        Family::Product => product(p.m, p.layers, p.input_dim),
        Family::Pathological => pathological(p.m, p.layers)?,
    };
    debug_assert!(spec.validate().is_empty(), "{}", spec.validate());
    Ok(spec)
}

fn family_rng(p: &FamilyParams) -> rng::StreamRng {
    rng::stream(p.seed, &[tag::FAMILY, p.family as u64, p.m as u64, p.layers as u64])
}

fn random_axes<R: Rng>(rng: &mut R, m: usize) -> Vec<Axis> {
    (0..m)
        .map(|_| if rng.random::<bool>() { Axis::X } else { Axis::Y })
        .collect()
}

/// Completes `pairs` with singletons for the uncovered qubits and assigns
/// `gate` to every pair.
fn layer_from_pairs(axes: Vec<Axis>, pairs: Vec<[usize; 2]>, gates: Vec<Unitary>) -> LayerSpec {
    let m = axes.len();
    let mut covered = vec![false; m];
    let mut pairing = Vec::new();
    let mut fixed = Vec::new();
    for (pair, g) in pairs.into_iter().zip(gates) {
        covered[pair[0]] = true;
        covered[pair[1]] = true;
        pairing.push(pair.to_vec());
        fixed.push(Some(g));
    }
    for (q, c) in covered.iter().enumerate() {
        if !c {
            pairing.push(vec![q]);
            fixed.push(None);
        }
    }
    LayerSpec {
        param_axes: axes,
        pairing,
        fixed_gates: fixed,
        encoding: Vec::new(),
        mean_zero: false,
    }
}

/// Y-axis encoding on every qubit of `layer`; qubit `q` reads coordinate `q mod dim`.
fn encode_all_qubits(layer: &mut LayerSpec, dim: usize) {
    if dim == 0 {
        return;
    }
    for (e, elem) in layer.pairing.iter().enumerate() {
        let mut coords: Vec<usize> = elem.iter().map(|q| q % dim).collect();
        coords.sort_unstable();
        coords.dedup();
        for c in coords {
            layer.encoding.push(EncodingEntry {
                element: e,
                coordinate: c,
                generators: elem
                    .iter()
                    .map(|q| (q % dim == c).then_some(Axis::Y))
                    .collect(),
                interleaver: None,
            });
        }
    }
}

fn assemble(m: usize, input_dim: usize, mut layers: Vec<LayerSpec>) -> CircuitSpec {
    if let Some(first) = layers.first_mut() {
        encode_all_qubits(first, input_dim);
    }
    CircuitSpec {
        num_qubits: m,
        num_layers: layers.len(),
        normalization: (m as f64).sqrt(),
        input_dim,
        observable: vec![Observable::pauli_z(); m],
        layers,
    }
}

/// Nearest-neighbour CNOTs on a line, alternating even and odd bonds.
fn brick1d(p: &FamilyParams) -> CircuitSpec {
    let mut rng = family_rng(p);
    let layers = (0..p.layers)
        .map(|l| {
            let pairs: Vec<[usize; 2]> = (l % 2..p.m.saturating_sub(1))
                .step_by(2)
                .map(|q| [q, q + 1])
                .collect();
            let gates = vec![Unitary::cnot(); pairs.len()];
            layer_from_pairs(random_axes(&mut rng, p.m), pairs, gates)
        })
        .collect();
    assemble(p.m, p.input_dim, layers)
}

/// Grid shape `rows x cols` with `rows` the largest divisor of `m` not above `√m`.
pub fn grid_shape(m: usize) -> (usize, usize) {
    let rows = (1..=m).take_while(|r| r * r <= m).filter(|r| m.is_multiple_of(*r)).last().unwrap_or(1);
    (rows, m / rows)
}

/// CZs on the edges of a `rows x cols` grid, cycling through the four
/// (direction, parity) edge classes.
fn lattice2d(p: &FamilyParams) -> Result<CircuitSpec> {
    let (rows, cols) = grid_shape(p.m);
    if rows == 1 && p.m > 3 {
        return Err(QnnError::Construction(format!(
            "lattice2d needs a composite m (got {}), no 2D grid shape exists",
            p.m
        )));
    }
    let mut rng = family_rng(p);
    let idx = |r: usize, c: usize| r * cols + c;
    let layers = (0..p.layers)
        .map(|l| {
            let parity = (l / 2) % 2;
            let mut pairs = Vec::new();
            if l % 2 == 0 {
                for r in 0..rows {
                    for c in (parity..cols.saturating_sub(1)).step_by(2) {
                        pairs.push([idx(r, c), idx(r, c + 1)]);
                    }
                }
            } else {
                for c in 0..cols {
                    for r in (parity..rows.saturating_sub(1)).step_by(2) {
                        pairs.push([idx(r, c), idx(r + 1, c)]);
                    }
                }
            }
            let gates = vec![Unitary::cz(); pairs.len()];
            layer_from_pairs(random_axes(&mut rng, p.m), pairs, gates)
        })
        .collect();
    Ok(assemble(p.m, p.input_dim, layers))
}

/// Uniformly random near-perfect matchings with CNOT or CZ per pair.
fn random_pairing(p: &FamilyParams) -> CircuitSpec {
    let mut rng = family_rng(p);
    let layers = (0..p.layers)
        .map(|_| {
            let axes = random_axes(&mut rng, p.m);
            let mut order: Vec<usize> = (0..p.m).collect();
            order.shuffle(&mut rng);
            let pairs: Vec<[usize; 2]> = order.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            let gates = pairs
                .iter()
                .map(|_| if rng.random::<bool>() { Unitary::cnot() } else { Unitary::cz() })
                .collect();
            layer_from_pairs(axes, pairs, gates)
        })
        .collect();
    assemble(p.m, p.input_dim, layers)
}

/// Independent qubits: Y rotations only, no fixed gates.
pub fn product(m: usize, layers: usize, input_dim: usize) -> CircuitSpec {
    let layers = (0..layers)
        .map(|_| layer_from_pairs(vec![Axis::Y; m], Vec::new(), Vec::new()))
        .collect();
    assemble(m, input_dim, layers)
}

/// The non-Gaussian counterexample on `m ≥ 2` qubits and `3m-3` layers.
///
/// Layers `1..m-1` prepare a GHZ state, the Z-axis parameters of layer `m`
/// imprint the phase `Σα_k` (with `α_k = 2θ_[m k]`), the reverse cascade
/// moves it onto qubit 1, a Hadamard reads it out and a forward cascade
/// copies the bit onto every qubit. With `β_k = √k - √(k-1)` and `N = √m`
/// the model returns exactly `cos Σα_k`.
fn pathological(m: usize, layers: usize) -> Result<CircuitSpec> {
    if m < 2 || layers != 3 * m - 3 {
        return Err(QnnError::Construction(format!(
            "pathological family needs m >= 2 and L = 3m-3 (got m={m}, L={layers})"
        )));
    }
    let h_cnot = Unitary::cnot().matmul(&Unitary::kron(&Unitary::hadamard(), &Unitary::identity(2)));
    let mut chain: Vec<(usize, Unitary)> = Vec::with_capacity(layers);
    chain.push((0, h_cnot.clone()));
    for j in 1..m - 1 {
        chain.push((j, Unitary::cnot()));
    }
    for j in (0..m - 1).rev() {
        chain.push((j, Unitary::cnot()));
    }
    chain.push((0, h_cnot));
    for j in 1..m - 1 {
        chain.push((j, Unitary::cnot()));
    }
    debug_assert_eq!(chain.len(), layers);
    let layers = chain
        .into_iter()
        .map(|(j, g)| layer_from_pairs(vec![Axis::Z; m], vec![[j, j + 1]], vec![g]))
        .collect();
    let observable = (1..=m)
        .map(|k| Observable::weighted(Axis::Z, (k as f64).sqrt() - ((k - 1) as f64).sqrt()))
        .collect();
    Ok(CircuitSpec {
        num_qubits: m,
        num_layers: 3 * m - 3,
        normalization: (m as f64).sqrt(),
        input_dim: 0,
        observable,
        layers,
    })
}

/// 0-based layer holding the phase parameters of the pathological circuit.
pub fn pathological_phase_layer(m: usize) -> usize {
    m - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(f: Family, m: usize, l: usize, seed: u64) -> CircuitSpec {
        FamilyParams::new(f, m, l, seed).build().unwrap()
    }

    #[test]
    fn brick_pairings() {
        let c = build(Family::Brick1d, 4, 2, 0);
        assert_eq!(c.layers[0].pairing, vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(c.layers[1].pairing, vec![vec![1, 2], vec![0], vec![3]]);
    }

    #[test]
    fn pathological_weights() {
        let c = build(Family::Pathological, 3, 6, 0);
        assert_eq!(c.num_layers, 6);
        let w: Vec<f64> = c.observable.iter().map(|o| o.weight).collect();
        let want = [1.0, 2f64.sqrt() - 1.0, 3f64.sqrt() - 2f64.sqrt()];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(FamilyParams::new(Family::Pathological, 3, 5, 0).build().is_err());
        assert!(FamilyParams::new(Family::Pathological, 1, 0, 0).build().is_err());
    }

    #[test]
    fn lattice_pairs_are_grid_edges() {
        let c = build(Family::Lattice2d, 9, 2, 1);
        let edge = |a: usize, b: usize| {
            let (ra, ca, rb, cb) = (a / 3, a % 3, b / 3, b % 3);
            ra.abs_diff(rb) + ca.abs_diff(cb) == 1
        };
        for l in &c.layers {
            for e in l.pairing.iter().filter(|e| e.len() == 2) {
                assert!(edge(e[0], e[1]), "{e:?}");
            }
        }
        assert!(FamilyParams::new(Family::Lattice2d, 7, 2, 0).build().is_err());
    }

    #[test]
    fn every_family_validates() {
        for seed in 0..5 {
            for m in [2, 3, 4, 6, 8, 9, 10] {
                for l in 1..=5 {
                    for f in [Family::Brick1d, Family::RandomPairing, Family::Product] {
                        let c = FamilyParams::new(f, m, l, seed).with_input_dim(2).build().unwrap();
                        assert!(c.validate().is_empty(), "{f} m={m} L={l}: {}", c.validate());
                    }
                    if let Ok(c) = FamilyParams::new(Family::Lattice2d, m, l, seed).build() {
                        assert!(c.validate().is_empty());
                    }
                }
                let c = build(Family::Pathological, m, 3 * m - 3, seed);
                assert!(c.validate().is_empty());
            }
        }
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("mesh".parse::<Family>().is_err());
    }
}
