//! Dense local statevector simulation of pruned circuits.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{CircuitSpec, ParamVector};
use crate::error::{QnnError, Result};
use crate::gates::{C64, ZERO};
use crate::lightcone::{build_lightcones, prune_with_cap, LightConeIndex, LocalOp, PrunedCircuit, MAX_LOCAL_QUBITS};
use crate::rng::{self, tag};

/// Amplitudes over the local register; local qubit `p` is bit `p` of the index.
#[derive(Debug, Clone)]
pub struct LocalState {
    pub qubits: Vec<usize>,
    pub amplitudes: Vec<C64>,
}

impl LocalState {
    pub fn zero(qubits: Vec<usize>) -> LocalState {
        let mut amplitudes = vec![ZERO; 1 << qubits.len()];
        amplitudes[0] = C64::new(1.0, 0.0);
        LocalState { qubits, amplitudes }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn apply1(&mut self, q: usize, u: &[C64; 4]) {
        let bit = 1usize << q;
        let amps = &mut self.amplitudes;
        for base in 0..amps.len() {
            if base & bit != 0 {
                continue;
            }
            let (a0, a1) = (amps[base], amps[base | bit]);
            amps[base] = u[0] * a0 + u[1] * a1;
            amps[base | bit] = u[2] * a0 + u[3] * a1;
        }
    }

    fn apply2(&mut self, hi: usize, lo: usize, u: &[C64; 16]) {
        let (bh, bl) = (1usize << hi, 1usize << lo);
        let amps = &mut self.amplitudes;
        for base in 0..amps.len() {
            if base & (bh | bl) != 0 {
                continue;
            }
            let idx = [base, base | bl, base | bh, base | bh | bl];
            let a = idx.map(|i| amps[i]);
            for (r, &i) in idx.iter().enumerate() {
                amps[i] = u[4 * r] * a[0] + u[4 * r + 1] * a[1] + u[4 * r + 2] * a[2] + u[4 * r + 3] * a[3];
            }
        }
    }

    /// `(⟨X⟩, ⟨Y⟩, ⟨Z⟩)` of local qubit `q`.
    pub fn bloch(&self, q: usize) -> [f64; 3] {
        let bit = 1usize << q;
        let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
        for base in 0..self.amplitudes.len() {
            if base & bit != 0 {
                continue;
            }
            let (a0, a1) = (self.amplitudes[base], self.amplitudes[base | bit]);
            let c = a0.conj() * a1;
            x += 2.0 * c.re;
            y += 2.0 * c.im;
            z += a0.norm_sqr() - a1.norm_sqr();
        }
        [x, y, z]
    }
}

pub fn run_pruned(pruned: &PrunedCircuit, theta: &[f64], x: &[f64]) -> LocalState {
    let mut st = LocalState::zero(pruned.local_qubits.clone());
    for op in &pruned.ops {
        match op {
            LocalOp::Param { qubit, param, axis } => st.apply1(*qubit, &axis.rotation(theta[*param])),
            LocalOp::Encode { qubit, coordinate, axis } => st.apply1(*qubit, &axis.rotation(x[*coordinate])),
            LocalOp::Gate1 { qubit, matrix } => st.apply1(*qubit, matrix),
            LocalOp::Gate2 { hi, lo, matrix } => st.apply2(*hi, *lo, matrix),
        }
    }
    st
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelValue {
    pub value: f64,
    pub locals: Vec<f64>,
    pub normalization: f64,
}

/// A validated circuit with its light cones and one pruned circuit per observable.
#[derive(Debug, Clone)]
pub struct Qnn {
    pub spec: CircuitSpec,
    pub lci: LightConeIndex,
    pub pruned: Vec<PrunedCircuit>,
}

impl Qnn {
    pub fn new(spec: CircuitSpec) -> Result<Qnn> {
        Qnn::with_cap(spec, MAX_LOCAL_QUBITS)
    }

    pub fn with_cap(spec: CircuitSpec, cap: usize) -> Result<Qnn> {
        spec.ensure_valid()?;
        let lci = build_lightcones(&spec);
        let pruned = (0..spec.num_qubits)
            .map(|k| prune_with_cap(&spec, k, &lci, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(Qnn { spec, lci, pruned })
    }

    pub fn m(&self) -> usize {
        self.spec.num_qubits
    }

    pub fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    pub fn normalization(&self) -> f64 {
        self.spec.normalization
    }

    fn check_input(&self, theta: &[f64], x: &[f64]) {
        assert_eq!(theta.len(), self.num_params(), "parameter vector length");
        assert!(x.len() >= self.spec.input_dim, "input has {} coordinates, circuit reads {}", x.len(), self.spec.input_dim);
    }

    /// Unnormalized `f_k = ⟨O_k⟩`.
    pub fn eval_local(&self, k: usize, theta: &[f64], x: &[f64]) -> f64 {
        self.check_input(theta, x);
        let p = &self.pruned[k];
        let st = run_pruned(p, theta, x);
        self.spec.observable[k].expectation(st.bloch(p.target_local))
    }

    /// Bloch vector of the target qubit after the pruned circuit.
    pub fn local_bloch(&self, k: usize, theta: &[f64], x: &[f64]) -> [f64; 3] {
        let p = &self.pruned[k];
        run_pruned(p, theta, x).bloch(p.target_local)
    }

    pub fn eval_model(&self, theta: &[f64], x: &[f64]) -> ModelValue {
        let locals: Vec<f64> = (0..self.m()).map(|k| self.eval_local(k, theta, x)).collect();
        let value = locals.iter().sum::<f64>() / self.normalization();
        ModelValue {
            value,
            locals,
            normalization: self.normalization(),
        }
    }

    pub fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        (0..self.m()).map(|k| self.eval_local(k, theta, x)).sum::<f64>() / self.normalization()
    }

    /// Per-observable evaluation spread over the rayon pool.
    pub fn eval_par(&self, theta: &[f64], x: &[f64]) -> f64 {
        let locals: Vec<f64> = (0..self.m())
            .into_par_iter()
            .map(|k| self.eval_local(k, theta, x))
            .collect();
        locals.iter().sum::<f64>() / self.normalization()
    }

    /// Shot estimate of `Σ_{k∈subset} ⟨O_k⟩ / N`: each observable's outcome
    /// `±|w_k|` is drawn `shots` times, aggregated as one binomial count.
    pub fn sample_terms<R: Rng + ?Sized>(
        &self,
        subset: &[usize],
        theta: &[f64],
        x: &[f64],
        shots: u64,
        rng: &mut R,
    ) -> Result<f64> {
        if shots == 0 {
            return Err(QnnError::Argument("shots must be at least 1".into()));
        }
        let mut total = 0.0;
        for &k in subset {
            let obs = &self.spec.observable[k];
            let b = self.local_bloch(k, theta, x);
            let [nx, ny, nz] = obs.axis.0;
            let e = (nx * b[0] + ny * b[1] + nz * b[2]).clamp(-1.0, 1.0);
            let p = (1.0 + e) / 2.0;
            let ups = Binomial::new(shots, p).expect("probability in [0,1]").sample(rng);
            let mean_outcome = (2.0 * ups as f64 - shots as f64) / shots as f64;
            total += obs.weight * mean_outcome + obs.offset;
        }
        Ok(total / self.normalization())
    }

    pub fn sample_model<R: Rng + ?Sized>(&self, theta: &[f64], x: &[f64], shots: u64, rng: &mut R) -> Result<f64> {
        let all: Vec<usize> = (0..self.m()).collect();
        self.sample_terms(&all, theta, x, shots, rng)
    }

    /// Upper bound `(Σ_k |w_k|)² / (shots N²)` on the variance of [`Qnn::sample_model`].
    pub fn sample_variance_bound(&self, shots: u64) -> f64 {
        let w: f64 = self.spec.observable.iter().map(|o| o.weight.abs()).sum();
        w * w / (shots as f64 * self.normalization().powi(2))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub samples: usize,
    pub normalization: f64,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Covariance of `f` across probe inputs, row-major.
    pub covariance: Vec<Vec<f64>>,
    pub mean_diag_covariance: f64,
    /// Normalization that would make the mean diagonal covariance 1.
    pub suggested_normalization: f64,
    /// Per qubit, the largest `|z|` of `Ê[f_k] = 0` over probe inputs.
    pub qubit_mean_z: Vec<f64>,
}

/// Monte-Carlo mean and covariance of `f` over uniform parameters.
pub fn calibrate_normalization(qnn: &Qnn, probes: &[Vec<f64>], samples: usize, seed: u64) -> Result<Calibration> {
    if samples < 2 || probes.is_empty() {
        return Err(QnnError::Argument("calibration needs at least 2 samples and one probe".into()));
    }
    let m = qnn.m();
    let p = probes.len();
    let draws: Vec<Vec<Vec<f64>>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(seed, &[tag::CALIB, s as u64]);
            let theta = ParamVector::uniform(&qnn.spec, &mut r);
            probes
                .iter()
                .map(|x| (0..m).map(|k| qnn.eval_local(k, &theta.values, x)).collect())
                .collect()
        })
        .collect();
    let n = samples as f64;
    let norm = qnn.normalization();
    let f: Vec<Vec<f64>> = draws
        .iter()
        .map(|per_probe| per_probe.iter().map(|loc| loc.iter().sum::<f64>() / norm).collect())
        .collect();
    let mean: Vec<f64> = (0..p).map(|a| f.iter().map(|v| v[a]).sum::<f64>() / n).collect();
    let mut covariance = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in a..p {
            let c = f.iter().map(|v| (v[a] - mean[a]) * (v[b] - mean[b])).sum::<f64>() / (n - 1.0);
            covariance[a][b] = c;
            covariance[b][a] = c;
        }
    }
    let mean_se = (0..p).map(|a| (covariance[a][a] / n).sqrt()).collect();
    let mean_diag_covariance = (0..p).map(|a| covariance[a][a]).sum::<f64>() / p as f64;
    let qubit_mean_z = (0..m)
        .map(|k| {
            (0..p)
                .map(|a| {
                    let mu = draws.iter().map(|d| d[a][k]).sum::<f64>() / n;
                    let var = draws.iter().map(|d| (d[a][k] - mu).powi(2)).sum::<f64>() / (n - 1.0);
                    if var > 0.0 {
                        (mu / (var / n).sqrt()).abs()
                    } else if mu.abs() > 1e-12 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(Calibration {
        samples,
        normalization: norm,
        mean,
        mean_se,
        covariance,
        mean_diag_covariance,
        suggested_normalization: norm * mean_diag_covariance.sqrt(),
        qubit_mean_z,
    })
}
