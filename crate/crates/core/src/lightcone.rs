//! Extended light cones, pruning and cardinalities.
//!
//! All sets are sorted `Vec<usize>` of 0-based qubits or flat parameter indices.

use serde::Serialize;

use crate::circuit::{CircuitSpec, LayerSpec};
use crate::error::{QnnError, Result};
use crate::gates::{Axis, Unitary, C64};

/// Largest local register the pruner accepts (`2^24` amplitudes).
pub const MAX_LOCAL_QUBITS: usize = 24;

/// Union of two sorted sets.
pub fn merge_union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Size of the intersection of two sorted sets.
pub fn intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn interaction(layer: &LayerSpec, k: usize) -> Vec<usize> {
    match layer.partner(k) {
        Some(p) if p < k => vec![p, k],
        Some(p) => vec![k, p],
        None => vec![k],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LightConeIndex {
    pub num_qubits: usize,
    pub num_layers: usize,
    /// `interactions[l][k]`: qubit `k` and its partner in layer `l`.
    pub interactions: Vec<Vec<Vec<usize>>>,
    /// `per_layer_past[k][l]`: qubits whose layer-`l` rotations reach observable `k`.
    pub per_layer_past: Vec<Vec<Vec<usize>>>,
    /// `past_cones[k]`: parameters observable `k` depends on.
    pub past_cones: Vec<Vec<usize>>,
    /// `future_cones[i]`: observables parameter `i` reaches.
    pub future_cones: Vec<Vec<usize>>,
    pub max_future: usize,
    pub max_past: usize,
    pub sigma1: usize,
    pub sigma2: usize,
    /// `dependency_sets[k]`: observables sharing a past-cone parameter with `k`.
    pub dependency_sets: Vec<Vec<usize>>,
}

pub fn build_lightcones(spec: &CircuitSpec) -> LightConeIndex {
    let m = spec.num_qubits;
    let nl = spec.layers.len();
    let interactions: Vec<Vec<Vec<usize>>> = spec
        .layers
        .iter()
        .map(|layer| (0..m).map(|k| interaction(layer, k)).collect())
        .collect();

    let mut per_layer_past = Vec::with_capacity(m);
    let mut past_cones = Vec::with_capacity(m);
    for k in 0..m {
        let mut js = vec![Vec::new(); nl];
        let mut current = vec![k];
        for l in (0..nl).rev() {
            let mut next = Vec::new();
            for &q in &current {
                next = merge_union(&next, &interactions[l][q]);
            }
            current = next;
            js[l] = current.clone();
        }
        let mut cone: Vec<usize> = js
            .iter()
            .enumerate()
            .flat_map(|(l, j)| j.iter().map(move |&q| l * m + q))
            .collect();
        cone.sort_unstable();
        past_cones.push(cone);
        per_layer_past.push(js);
    }

    let mut future_cones = vec![Vec::new(); nl * m];
    for l in (0..nl).rev() {
        for k in 0..m {
            let cone = if l + 1 == nl {
                interactions[l][k].clone()
            } else {
                interactions[l][k]
                    .iter()
                    .fold(Vec::new(), |acc, &q| merge_union(&acc, &future_cones[(l + 1) * m + q]))
            };
            future_cones[l * m + k] = cone;
        }
    }

    let max_future = future_cones.iter().map(Vec::len).max().unwrap_or(0);
    let max_past = past_cones.iter().map(Vec::len).max().unwrap_or(0);
    let sigma1 = future_cones.iter().map(Vec::len).sum();
    let sigma2 = future_cones.iter().map(|c| c.len() * c.len()).sum();
    let dependency_sets = past_cones
        .iter()
        .map(|cone| {
            cone.iter()
                .fold(Vec::new(), |acc, &i| merge_union(&acc, &future_cones[i]))
        })
        .collect();

    LightConeIndex {
        num_qubits: m,
        num_layers: nl,
        interactions,
        per_layer_past,
        past_cones,
        future_cones,
        max_future,
        max_past,
        sigma1,
        sigma2,
        dependency_sets,
    }
}

impl LightConeIndex {
    pub fn local_qubits(&self, k: usize) -> &[usize] {
        self.per_layer_past[k].first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sigma(&self, r: u32) -> f64 {
        self.future_cones.iter().map(|c| (c.len() as f64).powi(r as i32)).sum()
    }

    /// `max_j Σ_i |M_i ∩ M_j|`, using `Σ_i |M_i ∩ M_j| = Σ_{k∈M_j} |N_k|`.
    pub fn max_future_overlap_sum(&self) -> usize {
        self.future_cones
            .iter()
            .map(|mj| mj.iter().map(|&k| self.past_cones[k].len()).sum())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CardinalityReport {
    pub max_future: usize,
    pub max_past: usize,
    pub sigma1: usize,
    pub sigma2: usize,
    pub max_local_qubits: usize,
    pub max_local_dim: f64,
    pub max_dependency_set: usize,
    pub max_future_overlap_sum: usize,
    pub future_bound_ok: bool,
    pub past_bound_ok: bool,
    pub sigma1_bound_ok: bool,
    pub sigma2_bound_ok: bool,
    pub local_dim_bounds_ok: bool,
    pub dependency_bound_ok: bool,
    pub overlap_bound_ok: bool,
}

impl CardinalityReport {
    pub fn all_ok(&self) -> bool {
        self.future_bound_ok
            && self.past_bound_ok
            && self.sigma1_bound_ok
            && self.sigma2_bound_ok
            && self.local_dim_bounds_ok
            && self.dependency_bound_ok
            && self.overlap_bound_ok
    }
}

pub fn cardinality_report(lci: &LightConeIndex) -> CardinalityReport {
    let l = lci.num_layers as f64;
    let m = lci.num_qubits as f64;
    let max_local_qubits = (0..lci.num_qubits)
        .map(|k| lci.local_qubits(k).len())
        .max()
        .unwrap_or(0);
    let max_dependency_set = lci.dependency_sets.iter().map(Vec::len).max().unwrap_or(0);
    let max_future_overlap_sum = lci.max_future_overlap_sum();
    let (mf, mp) = (lci.max_future as f64, lci.max_past as f64);
    CardinalityReport {
        max_future: lci.max_future,
        max_past: lci.max_past,
        sigma1: lci.sigma1,
        sigma2: lci.sigma2,
        max_local_qubits,
        max_local_dim: 2f64.powi(max_local_qubits as i32),
        max_dependency_set,
        max_future_overlap_sum,
        future_bound_ok: mf <= 2f64.powf(l),
        past_bound_ok: mp <= 2f64.powf(l + 1.0),
        sigma1_bound_ok: lci.sigma1 as f64 <= 2.0 * m * 2f64.powf(l),
        sigma2_bound_ok: lci.sigma2 as f64 <= 2.0 * m * 2f64.powf(2.0 * l),
        local_dim_bounds_ok: lci.num_layers == 0
            || (mp / l <= max_local_qubits as f64 && max_local_qubits <= lci.max_past),
        dependency_bound_ok: max_dependency_set <= lci.max_future * lci.max_past,
        overlap_bound_ok: max_future_overlap_sum <= lci.max_future * lci.max_future * lci.max_past,
    }
}

/// One step of a pruned circuit on the local register. Qubit fields are
/// positions in `local_qubits`.
#[derive(Debug, Clone)]
pub enum LocalOp {
    Param { qubit: usize, param: usize, axis: Axis },
    Encode { qubit: usize, coordinate: usize, axis: Axis },
    Gate1 { qubit: usize, matrix: [C64; 4] },
    /// `hi` is the high bit of the 4x4 basis index.
    Gate2 { hi: usize, lo: usize, matrix: Box<[C64; 16]> },
}

#[derive(Debug, Clone)]
pub struct PrunedCircuit {
    pub target: usize,
    pub local_qubits: Vec<usize>,
    pub retained_params: Vec<usize>,
    /// `(layer, element index)` of every retained fixed block.
    pub retained_elements: Vec<(usize, usize)>,
    pub ops: Vec<LocalOp>,
    /// Position of the target in `local_qubits`.
    pub target_local: usize,
}

impl PrunedCircuit {
    pub fn local_dim(&self) -> usize {
        1 << self.local_qubits.len()
    }
}

fn gate_op(u: &Unitary, qubits: &[usize]) -> LocalOp {
    if qubits.len() == 1 {
        let d = u.data();
        LocalOp::Gate1 {
            qubit: qubits[0],
            matrix: [d[0], d[1], d[2], d[3]],
        }
    } else {
        let mut matrix = Box::new([C64::new(0.0, 0.0); 16]);
        matrix.copy_from_slice(u.data());
        LocalOp::Gate2 {
            hi: qubits[0],
            lo: qubits[1],
            matrix,
        }
    }
}

pub fn prune(spec: &CircuitSpec, k: usize, lci: &LightConeIndex) -> Result<PrunedCircuit> {
    prune_with_cap(spec, k, lci, MAX_LOCAL_QUBITS)
}

pub fn prune_with_cap(spec: &CircuitSpec, k: usize, lci: &LightConeIndex, cap: usize) -> Result<PrunedCircuit> {
    let m = spec.num_qubits;
    if k >= m {
        return Err(QnnError::Index(format!("qubit {k} outside 0..{m}")));
    }
    let local_qubits = lci.local_qubits(k).to_vec();
    if local_qubits.len() > cap {
        return Err(QnnError::Capacity {
            qubit: k,
            local_qubits: local_qubits.len(),
            cap,
        });
    }
    let mut pos = vec![usize::MAX; m];
    for (p, &q) in local_qubits.iter().enumerate() {
        pos[q] = p;
    }
    let mut ops = Vec::new();
    let mut retained_params = Vec::new();
    let mut retained_elements = Vec::new();
    for (l, layer) in spec.layers.iter().enumerate() {
        let j = &lci.per_layer_past[k][l];
        for &q in j {
            let axis = layer.param_axes[q];
            retained_params.push(l * m + q);
            if !axis.is_zero() {
                ops.push(LocalOp::Param {
                    qubit: pos[q],
                    param: l * m + q,
                    axis,
                });
            }
        }
        for (e, elem) in layer.pairing.iter().enumerate() {
            if !elem.iter().any(|q| j.binary_search(q).is_ok()) {
                continue;
            }
            retained_elements.push((l, e));
            let local: Vec<usize> = elem.iter().map(|&q| pos[q]).collect();
            for entry in layer.encoding.iter().filter(|en| en.element == e) {
                for (slot, g) in entry.generators.iter().enumerate() {
                    if let Some(axis) = g {
                        ops.push(LocalOp::Encode {
                            qubit: local[slot],
                            coordinate: entry.coordinate,
                            axis: *axis,
                        });
                    }
                }
                if let Some(u) = &entry.interleaver {
                    ops.push(gate_op(u, &local));
                }
            }
            if let Some(u) = &layer.fixed_gates[e] {
                ops.push(gate_op(u, &local));
            }
        }
    }
    Ok(PrunedCircuit {
        target: k,
        target_local: pos[k],
        local_qubits,
        retained_params,
        retained_elements,
        ops,
    })
}

/// Pruned circuit written back in the circuit file format, on the local
/// register. Removed rotations get the zero axis and observables other than
/// the target get weight 0.
#[derive(Debug, Clone, Serialize)]
pub struct PrunedDump {
    pub target: usize,
    pub local_qubits: Vec<usize>,
    /// Global flat index of every retained rotation.
    pub retained_params: Vec<usize>,
    pub circuit: CircuitSpec,
}

pub fn pruned_dump(spec: &CircuitSpec, pruned: &PrunedCircuit) -> PrunedDump {
    let m = spec.num_qubits;
    let lq = &pruned.local_qubits;
    let pos = |q: usize| lq.binary_search(&q).expect("retained gate outside local register");
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (l, layer) in spec.layers.iter().enumerate() {
        let param_axes = lq
            .iter()
            .map(|&q| {
                if pruned.retained_params.binary_search(&(l * m + q)).is_ok() {
                    layer.param_axes[q]
                } else {
                    Axis::NONE
                }
            })
            .collect();
        let mut out = LayerSpec::rotations_only(param_axes);
        out.mean_zero = layer.mean_zero;
        for &(_, e) in pruned.retained_elements.iter().filter(|(ll, _)| *ll == l) {
            let new_e = out.pairing.len();
            out.pairing.push(layer.pairing[e].iter().map(|&q| pos(q)).collect());
            out.fixed_gates.push(layer.fixed_gates[e].clone());
            for entry in layer.encoding.iter().filter(|en| en.element == e) {
                let mut entry = entry.clone();
                entry.element = new_e;
                out.encoding.push(entry);
            }
        }
        layers.push(out);
    }
    let observable = lq
        .iter()
        .map(|&q| {
            let mut o = spec.observable[q];
            if q != pruned.target {
                o.weight = 0.0;
            }
            o
        })
        .collect();
    PrunedDump {
        target: pruned.target,
        local_qubits: lq.clone(),
        retained_params: pruned.retained_params.clone(),
        circuit: CircuitSpec {
            num_qubits: lq.len(),
            num_layers: spec.num_layers,
            normalization: spec.normalization,
            input_dim: spec.input_dim,
            observable,
            layers,
        },
    }
}
