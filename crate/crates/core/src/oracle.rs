//! Reference full-register simulator, independent of the light-cone code.
//!
//! Qubit `q` is bit `m-1-q` of the basis index (big-endian), the opposite of
//! the local simulator, and every gate is applied through an explicit
//! gather/scatter over the full register. Intended for `m ≤ 12`.

use rand::Rng;

use crate::circuit::CircuitSpec;
use crate::gates::{Axis, Unitary, C64};

fn bit_of(m: usize, q: usize) -> usize {
    m - 1 - q
}

/// Applies a `2^a x 2^a` matrix to `qubits` (first qubit = most significant).
fn apply(state: &mut [C64], m: usize, qubits: &[usize], u: &[C64]) {
    let a = qubits.len();
    let d = 1usize << a;
    let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << bit_of(m, q)).collect();
    let all: usize = masks.iter().sum();
    let mut gathered = vec![C64::new(0.0, 0.0); d];
    let mut idx = vec![0usize; d];
    for base in 0..state.len() {
        if base & all != 0 {
            continue;
        }
        for (s, slot) in idx.iter_mut().enumerate() {
            let mut i = base;
            for (t, mask) in masks.iter().enumerate() {
                if s >> (a - 1 - t) & 1 == 1 {
                    i |= mask;
                }
            }
            *slot = i;
        }
        for s in 0..d {
            gathered[s] = state[idx[s]];
        }
        for r in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..d {
                acc += u[r * d + c] * gathered[c];
            }
            state[idx[r]] = acc;
        }
    }
}

fn rot(axis: &Axis, angle: f64) -> Vec<C64> {
    // exp(-i a n·σ) = cos a · 1 - i sin a · n·σ, built from the Pauli matrix.
    let g = axis.pauli_matrix();
    let (s, c) = angle.sin_cos();
    let id = [1.0, 0.0, 0.0, 1.0];
    (0..4)
        .map(|e| C64::new(c * id[e], 0.0) - C64::new(0.0, s) * g[e])
        .collect()
}

/// Output state of the full circuit on `|0…0⟩`.
pub fn full_state(spec: &CircuitSpec, theta: &[f64], x: &[f64]) -> Vec<C64> {
    let m = spec.num_qubits;
    let mut st = vec![C64::new(0.0, 0.0); 1 << m];
    st[0] = C64::new(1.0, 0.0);
    for (l, layer) in spec.layers.iter().enumerate() {
        for q in 0..m {
            let axis = &layer.param_axes[q];
            if !axis.is_zero() {
                apply(&mut st, m, &[q], &rot(axis, theta[l * m + q]));
            }
        }
        for (e, elem) in layer.pairing.iter().enumerate() {
            for entry in layer.encoding.iter().filter(|en| en.element == e) {
                for (slot, g) in entry.generators.iter().enumerate() {
                    if let Some(axis) = g {
                        apply(&mut st, m, &[elem[slot]], &rot(axis, x[entry.coordinate]));
                    }
                }
                if let Some(u) = &entry.interleaver {
                    apply(&mut st, m, elem, u.data());
                }
            }
            if let Some(u) = &layer.fixed_gates[e] {
                apply(&mut st, m, elem, u.data());
            }
        }
    }
    st
}

/// `⟨ψ|O_k|ψ⟩` for every `k`, computed as `⟨ψ|(O_k ψ)⟩`.
pub fn full_locals(spec: &CircuitSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let m = spec.num_qubits;
    let st = full_state(spec, theta, x);
    (0..m)
        .map(|k| {
            let o = &spec.observable[k];
            let mut op = o.axis.pauli_matrix().to_vec();
            for (e, v) in op.iter_mut().enumerate() {
                *v = *v * o.weight + if e == 0 || e == 3 { C64::new(o.offset, 0.0) } else { C64::new(0.0, 0.0) };
            }
            let mut phi = st.clone();
            apply(&mut phi, m, &[k], &op);
            st.iter().zip(&phi).map(|(a, b)| (a.conj() * b).re).sum()
        })
        .collect()
}

pub fn full_model(spec: &CircuitSpec, theta: &[f64], x: &[f64]) -> f64 {
    full_locals(spec, theta, x).iter().sum::<f64>() / spec.normalization
}

/// Central finite-difference gradient of the full model.
pub fn fd_gradient(spec: &CircuitSpec, theta: &[f64], x: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            t[i] = theta[i] + h;
            let up = full_model(spec, &t, x);
            t[i] = theta[i] - h;
            let dn = full_model(spec, &t, x);
            t[i] = theta[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference Hessian entry of the full model.
pub fn fd_hessian_entry(spec: &CircuitSpec, theta: &[f64], x: &[f64], i: usize, j: usize, h: f64) -> f64 {
    let mut t = theta.to_vec();
    let mut at = |di: f64, dj: f64| {
        t.copy_from_slice(theta);
        t[i] += di;
        t[j] += dj;
        full_model(spec, &t, x)
    };
    (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
}

/// Probes whether `f_k` depends on `θ_i`: perturbs `θ_i` by `π/3` at random
/// points and reports a change above `threshold`.
pub fn dependency_probe<R: Rng + ?Sized>(
    spec: &CircuitSpec,
    k: usize,
    i: usize,
    points: usize,
    threshold: f64,
    rng: &mut R,
) -> bool {
    let p = spec.num_params();
    (0..points).any(|_| {
        let mut theta: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * std::f64::consts::PI).collect();
        let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.random::<f64>() * std::f64::consts::PI).collect();
        let before = full_locals(spec, &theta, &x)[k];
        theta[i] += std::f64::consts::FRAC_PI_3;
        let after = full_locals(spec, &theta, &x)[k];
        (after - before).abs() > threshold
    })
}

/// Columns of `u` on `qubits`, embedded in the full register.
pub fn embed(m: usize, qubits: &[usize], u: &Unitary) -> Vec<Vec<C64>> {
    (0..1usize << m)
        .map(|col| {
            let mut e = vec![C64::new(0.0, 0.0); 1 << m];
            e[col] = C64::new(1.0, 0.0);
            apply(&mut e, m, qubits, u.data());
            e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnot_embedding_flips_target() {
        // |10⟩ (qubit 0 set) maps to |11⟩.
        let cols = embed(2, &[0, 1], &Unitary::cnot());
        assert!((cols[0b10][0b11].re - 1.0).abs() < 1e-15);
        let cols = embed(2, &[1, 0], &Unitary::cnot());
        assert!((cols[0b01][0b11].re - 1.0).abs() < 1e-15);
    }
}
