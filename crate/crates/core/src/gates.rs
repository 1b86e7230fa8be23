//! Small dense gate algebra: Bloch axes, 2x2/4x4 unitaries and the fixed gates
//! used by the built-in circuit families.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Direction `n` on the Bloch sphere; the associated generator is `n·σ`.
///
/// A unit axis gives a generator with spectrum exactly `{-1, +1}`. The zero
/// axis is accepted as "no generator" (identity gate) and is only produced by
/// pruned-circuit dumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Axis(pub [f64; 3]);

impl Axis {
    pub const X: Axis = Axis([1.0, 0.0, 0.0]);
    pub const Y: Axis = Axis([0.0, 1.0, 0.0]);
    pub const Z: Axis = Axis([0.0, 0.0, 1.0]);
    pub const NONE: Axis = Axis([0.0, 0.0, 0.0]);

    /// Normalizes `v`; `None` for (near-)zero vectors.
    pub fn new(v: [f64; 3]) -> Option<Axis> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        (n > 1e-300 && n.is_finite()).then(|| Axis([v[0] / n, v[1] / n, v[2] / n]))
    }

    pub fn norm(&self) -> f64 {
        let [x, y, z] = self.0;
        (x * x + y * y + z * z).sqrt()
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0.0; 3]
    }

    /// Row-major `n·σ`.
    pub fn pauli_matrix(&self) -> [C64; 4] {
        let [x, y, z] = self.0;
        [
            C64::new(z, 0.0),
            C64::new(x, -y),
            C64::new(x, y),
            C64::new(-z, 0.0),
        ]
    }

    /// `exp(-i·angle·n·σ)`; identity for the zero axis.
    pub fn rotation(&self, angle: f64) -> [C64; 4] {
        if self.is_zero() {
            return [ONE, ZERO, ZERO, ONE];
        }
        let (s, c) = angle.sin_cos();
        let [x, y, z] = self.0;
        // cos·1 - i·sin·(n·σ)
        [
            C64::new(c, -s * z),
            C64::new(-s * y, -s * x),
            C64::new(s * y, -s * x),
            C64::new(c, s * z),
        ]
    }
}

/// Dense square complex matrix of dimension 2 or 4, row-major.
///
/// Serialized as a list of rows, each entry an `[re, im]` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary {
    dim: usize,
    data: Vec<C64>,
}

impl Unitary {
    pub fn from_rows(rows: &[Vec<C64>]) -> Option<Unitary> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Unitary {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_real(dim: usize, entries: &[f64]) -> Unitary {
        assert_eq!(entries.len(), dim * dim);
        Unitary {
            dim,
            data: entries.iter().map(|&r| C64::new(r, 0.0)).collect(),
        }
    }

    pub fn from_data(dim: usize, data: Vec<C64>) -> Unitary {
        assert_eq!(data.len(), dim * dim);
        Unitary { dim, data }
    }

    pub fn identity(dim: usize) -> Unitary {
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Unitary { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    /// `self · other` (other applied first).
    pub fn matmul(&self, other: &Unitary) -> Unitary {
        assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                data[r * d + c] = (0..d).map(|k| self.get(r, k) * other.get(k, c)).sum();
            }
        }
        Unitary { dim: d, data }
    }

    /// `a ⊗ b` for two single-qubit gates; `a` acts on the high bit.
    pub fn kron(a: &Unitary, b: &Unitary) -> Unitary {
        assert!(a.dim == 2 && b.dim == 2);
        let mut data = vec![ZERO; 16];
        for r in 0..4 {
            for c in 0..4 {
                data[r * 4 + c] = a.get(r >> 1, c >> 1) * b.get(r & 1, c & 1);
            }
        }
        Unitary { dim: 4, data }
    }

    /// Max-entry deviation of `U†U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for r in 0..d {
            for c in 0..d {
                let v: C64 = (0..d).map(|k| self.get(k, r).conj() * self.get(k, c)).sum();
                let target = if r == c { ONE } else { ZERO };
                worst = worst.max((v - target).norm());
            }
        }
        worst
    }

    pub fn hadamard() -> Unitary {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Unitary::from_real(2, &[h, h, h, -h])
    }

    /// Control on the high bit of the 4x4 basis.
    pub fn cnot() -> Unitary {
        Unitary::from_real(
            4,
            &[
                1., 0., 0., 0., //
                0., 1., 0., 0., //
                0., 0., 0., 1., //
                0., 0., 1., 0.,
            ],
        )
    }

    pub fn cz() -> Unitary {
        Unitary::from_real(
            4,
            &[
                1., 0., 0., 0., //
                0., 1., 0., 0., //
                0., 0., 1., 0., //
                0., 0., 0., -1.,
            ],
        )
    }
}

impl Serialize for Unitary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .data
            .chunks(self.dim)
            .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Unitary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let rows: Vec<Vec<C64>> = rows
            .into_iter()
            .map(|r| r.into_iter().map(|[re, im]| C64::new(re, im)).collect())
            .collect();
        Unitary::from_rows(&rows).ok_or_else(|| serde::de::Error::custom("matrix must be square"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mul2(a: &[C64; 4], b: &[C64; 4]) -> [C64; 4] {
        [
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ]
    }

    proptest! {
        #[test]
        fn unit_axis_generators_square_to_identity(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            prop_assume!(x * x + y * y + z * z > 1e-6);
            let g = Axis::new([x, y, z]).unwrap().pauli_matrix();
            let g2 = mul2(&g, &g);
            for (k, e) in g2.iter().enumerate() {
                let target = if k == 0 || k == 3 { ONE } else { ZERO };
                prop_assert!((e - target).norm() < 1e-12);
            }
        }

        #[test]
        fn rotations_are_unitary(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, t in -7.0f64..7.0) {
            prop_assume!(x * x + y * y + z * z > 1e-6);
            let r = Axis::new([x, y, z]).unwrap().rotation(t);
            let u = Unitary::from_data(2, r.to_vec());
            prop_assert!(u.unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn fixed_gates_are_unitary() {
        for g in [Unitary::hadamard(), Unitary::cnot(), Unitary::cz()] {
            assert!(g.unitarity_defect() < 1e-15);
        }
        let hc = Unitary::cnot().matmul(&Unitary::kron(&Unitary::hadamard(), &Unitary::identity(2)));
        assert!(hc.unitarity_defect() < 1e-12);
    }

    #[test]
    fn unitary_serializes_as_re_im_rows() {
        let json = serde_json::to_string(&Unitary::hadamard()).unwrap();
        assert!(json.starts_with("[[[0.7071067811865476,0.0]"));
        let back: Unitary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Unitary::hadamard());
    }
}
