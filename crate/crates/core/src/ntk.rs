//! Parameter-shift gradients and neural tangent kernels.

use std::f64::consts::FRAC_PI_4;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::ParamVector;
use crate::error::{QnnError, Result};
use crate::lightcone::intersection_len;
use crate::rng::{self, tag};
use crate::sim::Qnn;

pub const SHIFT: f64 = FRAC_PI_4;

#[derive(Debug, Clone, Serialize)]
pub struct GradientVector {
    pub values: Vec<f64>,
    pub exact: bool,
    pub shots: Option<u64>,
    /// Per-coordinate variance bound `A m² / (shots N²)` with `A = 2`.
    pub variance_bound: Option<f64>,
}

/// `f_k` summed over `subset` at `theta` with `θ_i` shifted by `d`.
fn shifted_sum(qnn: &Qnn, subset: &[usize], theta: &mut [f64], i: usize, d: f64, x: &[f64]) -> f64 {
    let keep = theta[i];
    theta[i] = keep + d;
    let v = subset.iter().map(|&k| qnn.eval_local(k, theta, x)).sum();
    theta[i] = keep;
    v
}

/// `∂_i f` by the two-point shift rule, touching only `f_k` with `k ∈ M_i`.
pub fn partial(qnn: &Qnn, theta: &mut [f64], x: &[f64], i: usize) -> f64 {
    let cone = &qnn.lci.future_cones[i];
    (shifted_sum(qnn, cone, theta, i, SHIFT, x) - shifted_sum(qnn, cone, theta, i, -SHIFT, x)) / qnn.normalization()
}

pub fn grad_values(qnn: &Qnn, theta: &[f64], x: &[f64]) -> Vec<f64> {
    (0..qnn.num_params())
        .into_par_iter()
        .map_init(|| theta.to_vec(), |t, i| partial(qnn, t, x, i))
        .collect()
}

pub fn grad_parameter_shift(qnn: &Qnn, theta: &[f64], x: &[f64]) -> GradientVector {
    GradientVector {
        values: grad_values(qnn, theta, x),
        exact: true,
        shots: None,
        variance_bound: None,
    }
}

/// Shift rule on the full model, every observable re-evaluated.
pub fn grad_naive(qnn: &Qnn, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..qnn.num_params())
        .map(|i| {
            t[i] = theta[i] + SHIFT;
            let up = qnn.eval(&t, x);
            t[i] = theta[i] - SHIFT;
            let dn = qnn.eval(&t, x);
            t[i] = theta[i];
            up - dn
        })
        .collect()
}

/// Unbiased shot estimate of the gradient. Each shifted point is measured
/// with fresh shots drawn from the stream `(seed, SHOTS, path.., i, ±)`.
pub fn grad_sampled(qnn: &Qnn, theta: &[f64], x: &[f64], shots: u64, seed: u64, path: &[u64]) -> Result<GradientVector> {
    if shots == 0 {
        return Err(QnnError::Argument("shots must be at least 1".into()));
    }
    let values = (0..qnn.num_params())
        .into_par_iter()
        .map_init(
            || theta.to_vec(),
            |t, i| -> Result<f64> {
                let cone = &qnn.lci.future_cones[i];
                let mut side = |sign: u64, d: f64| -> Result<f64> {
                    let mut key = vec![tag::SHOTS];
                    key.extend_from_slice(path);
                    key.extend_from_slice(&[i as u64, sign]);
                    let mut r = rng::stream(seed, &key);
                    let keep = t[i];
                    t[i] = keep + d;
                    let v = qnn.sample_terms(cone, t, x, shots, &mut r);
                    t[i] = keep;
                    v
                };
                Ok(side(0, SHIFT)? - side(1, -SHIFT)?)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    let m = qnn.m() as f64;
    Ok(GradientVector {
        values,
        exact: false,
        shots: Some(shots),
        variance_bound: Some(2.0 * m * m / (shots as f64 * qnn.normalization().powi(2))),
    })
}

/// `∂_i ∂_j f` by the nested shift rule (also valid for `i = j`).
pub fn second_derivative(qnn: &Qnn, theta: &[f64], x: &[f64], i: usize, j: usize) -> f64 {
    let (mi, mj) = (&qnn.lci.future_cones[i], &qnn.lci.future_cones[j]);
    let common: Vec<usize> = mi.iter().copied().filter(|k| mj.binary_search(k).is_ok()).collect();
    if common.is_empty() {
        return 0.0;
    }
    let mut t = theta.to_vec();
    let mut at = |a: f64, b: f64| {
        t.copy_from_slice(theta);
        t[i] += a;
        t[j] += b;
        common.iter().map(|&k| qnn.eval_local(k, &t, x)).sum::<f64>()
    };
    (at(SHIFT, SHIFT) - at(SHIFT, -SHIFT) - at(-SHIFT, SHIFT) + at(-SHIFT, -SHIFT)) / qnn.normalization()
}

/// Rows are inputs, columns parameters.
pub fn jacobian(qnn: &Qnn, theta: &[f64], inputs: &[Vec<f64>]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = inputs.par_iter().map(|x| grad_values(qnn, theta, x)).collect();
    let p = qnn.num_params();
    DMatrix::from_fn(inputs.len(), p, |a, i| rows[a][i])
}

/// `J Jᵀ / nk`, filled from the upper triangle so it is exactly symmetric.
pub fn gram(j: &DMatrix<f64>, nk: f64) -> DMatrix<f64> {
    let n = j.nrows();
    let mut k = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = j.row(a).dot(&j.row(b)) / nk;
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NtkKind {
    Empirical,
    AnalyticMc { samples: usize },
}

#[derive(Debug, Clone)]
pub struct NTKMatrix {
    pub entries: DMatrix<f64>,
    pub kind: NtkKind,
    pub nk: f64,
    /// The first `n_train` inputs form the training block.
    pub n_train: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub std_err: Option<DMatrix<f64>>,
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn spectrum_bounds(k: &DMatrix<f64>) -> (f64, f64) {
    if k.nrows() == 0 {
        return (0.0, 0.0);
    }
    let ev = SymmetricEigen::new(k.clone()).eigenvalues;
    (ev.min(), ev.max())
}

impl NTKMatrix {
    fn new(entries: DMatrix<f64>, kind: NtkKind, nk: f64, n_train: usize, std_err: Option<DMatrix<f64>>) -> NTKMatrix {
        let n_train = n_train.min(entries.nrows());
        let (lambda_min, lambda_max) = spectrum_bounds(&entries.view((0, 0), (n_train, n_train)).into_owned());
        NTKMatrix {
            entries,
            kind,
            nk,
            n_train,
            lambda_min,
            lambda_max,
            std_err,
        }
    }

    pub fn train_block(&self) -> DMatrix<f64> {
        self.entries.view((0, 0), (self.n_train, self.n_train)).into_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        spectrum_bounds(&self.entries).0
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }
}

pub fn empirical_ntk(qnn: &Qnn, theta: &[f64], inputs: &[Vec<f64>], n_train: usize, nk: f64) -> Result<NTKMatrix> {
    if inputs.is_empty() {
        return Err(QnnError::Argument("NTK needs at least one input".into()));
    }
    let j = jacobian(qnn, theta, inputs);
    Ok(NTKMatrix::new(gram(&j, nk), NtkKind::Empirical, nk, n_train, None))
}

/// Paired Monte-Carlo statistics for the Fourier bounds at one input:
/// `‖∇f‖² - 4f²` and `4|N|f² - ‖∇f‖²`, both non-negative in expectation.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichStat {
    pub mean_f_sq: f64,
    pub mean_grad_sq: f64,
    pub lower_gap: f64,
    pub lower_gap_se: f64,
    pub upper_gap: f64,
    pub upper_gap_se: f64,
}

impl SandwichStat {
    /// Both inequalities hold within `z` standard errors.
    pub fn holds(&self, z: f64) -> bool {
        self.lower_gap >= -z * self.lower_gap_se && self.upper_gap >= -z * self.upper_gap_se
    }
}

#[derive(Debug, Clone)]
pub struct AnalyticNtk {
    pub matrix: NTKMatrix,
    /// `E[∇f(x)·∇f(x')]` before dividing by `N_K`.
    pub raw_mean: DMatrix<f64>,
    pub sandwich: Vec<SandwichStat>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, (var / n).sqrt())
}

/// Monte-Carlo average of the empirical kernel over uniform parameters.
/// With `nk = None` the normalization is chosen so the mean diagonal is 1.
pub fn analytic_ntk_mc(
    qnn: &Qnn,
    inputs: &[Vec<f64>],
    n_train: usize,
    samples: usize,
    seed: u64,
    nk: Option<f64>,
) -> Result<AnalyticNtk> {
    if samples < 2 || inputs.is_empty() {
        return Err(QnnError::Argument("analytic NTK needs at least 2 samples and one input".into()));
    }
    let n = inputs.len();
    let draws: Vec<(DMatrix<f64>, Vec<f64>)> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut r = rng::stream(seed, &[tag::NTK_MC, s as u64]);
            let theta = ParamVector::uniform(&qnn.spec, &mut r);
            let j = jacobian(qnn, &theta.values, inputs);
            let f = inputs.iter().map(|x| qnn.eval(&theta.values, x)).collect();
            (gram(&j, 1.0), f)
        })
        .collect();
    let sf = samples as f64;
    let mut raw_mean = DMatrix::zeros(n, n);
    for (g, _) in &draws {
        raw_mean += g;
    }
    raw_mean /= sf;
    let mut raw_se = DMatrix::zeros(n, n);
    for (g, _) in &draws {
        raw_se += (g - &raw_mean).map(|v| v * v);
    }
    raw_se = raw_se.map(|v| (v / (sf - 1.0) / sf).sqrt());
    let nk = nk.unwrap_or_else(|| raw_mean.diagonal().mean());
    let past = qnn.lci.max_past as f64;
    let sandwich = (0..n)
        .map(|a| {
            let g2: Vec<f64> = draws.iter().map(|(g, _)| g[(a, a)]).collect();
            let f2: Vec<f64> = draws.iter().map(|(_, f)| f[a] * f[a]).collect();
            let lower: Vec<f64> = g2.iter().zip(&f2).map(|(g, f)| g - 4.0 * f).collect();
            let upper: Vec<f64> = g2.iter().zip(&f2).map(|(g, f)| 4.0 * past * f - g).collect();
            let (lower_gap, lower_gap_se) = mean_se(&lower);
            let (upper_gap, upper_gap_se) = mean_se(&upper);
            SandwichStat {
                mean_f_sq: mean_se(&f2).0,
                mean_grad_sq: mean_se(&g2).0,
                lower_gap,
                lower_gap_se,
                upper_gap,
                upper_gap_se,
            }
        })
        .collect();
    let matrix = NTKMatrix::new(
        &raw_mean / nk,
        NtkKind::AnalyticMc { samples },
        nk,
        n_train,
        Some(raw_se / nk),
    );
    Ok(AnalyticNtk {
        matrix,
        raw_mean,
        sandwich,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub lipschitz_lhs: f64,
    pub lipschitz_rhs: f64,
    pub lipschitz_ok: bool,
    /// Largest `|∂_i f| / (2|M_i|/N)` over both parameter points and all inputs.
    pub gradient_ratio: f64,
    pub gradient_ok: bool,
    /// Largest `|∂_i∂_j f| / (4|M_i∩M_j|/N)` at `theta0`.
    pub hessian_ratio: f64,
    pub hessian_ok: bool,
}

impl BoundsReport {
    pub fn all_ok(&self) -> bool {
        self.lipschitz_ok && self.gradient_ok && self.hessian_ok
    }
}

const BOUND_SLACK: f64 = 1e-9;

pub fn ntk_bounds_check(qnn: &Qnn, theta0: &[f64], theta1: &[f64], inputs: &[Vec<f64>], nk: f64) -> BoundsReport {
    let norm = qnn.normalization();
    let lci = &qnn.lci;
    let j0 = jacobian(qnn, theta0, inputs);
    let j1 = jacobian(qnn, theta1, inputs);
    let lipschitz_lhs = (gram(&j0, nk) - gram(&j1, nk)).amax();
    let dist = theta0.iter().zip(theta1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mf = lci.max_future as f64;
    let lipschitz_rhs = 16.0 * lci.sigma1 as f64 * mf * mf * lci.max_past as f64 / (nk * norm * norm) * dist;

    let mut gradient_ratio: f64 = 0.0;
    for j in [&j0, &j1] {
        for a in 0..j.nrows() {
            for i in 0..j.ncols() {
                let bound = 2.0 * lci.future_cones[i].len() as f64 / norm;
                gradient_ratio = gradient_ratio.max(j[(a, i)].abs() / bound);
            }
        }
    }

    let p = qnn.num_params();
    let pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| (i..p).map(move |j| (i, j)))
        .filter(|&(i, j)| intersection_len(&lci.future_cones[i], &lci.future_cones[j]) > 0)
        .collect();
    let hessian_ratio = inputs
        .par_iter()
        .map(|x| {
            pairs
                .iter()
                .map(|&(i, j)| {
                    let bound = 4.0 * intersection_len(&lci.future_cones[i], &lci.future_cones[j]) as f64 / norm;
                    second_derivative(qnn, theta0, x, i, j).abs() / bound
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);

    BoundsReport {
        lipschitz_lhs,
        lipschitz_rhs,
        lipschitz_ok: lipschitz_lhs <= lipschitz_rhs + BOUND_SLACK,
        gradient_ratio,
        gradient_ok: gradient_ratio <= 1.0 + BOUND_SLACK,
        hessian_ratio,
        hessian_ok: hessian_ratio <= 1.0 + BOUND_SLACK,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{CircuitSpec, LayerSpec, Observable};
    use crate::families::{product, Family, FamilyParams};
    use crate::gates::Axis;
    use crate::oracle;
    use std::f64::consts::{FRAC_PI_8, PI};

    fn cos_cell() -> Qnn {
        Qnn::new(CircuitSpec {
            num_qubits: 1,
            num_layers: 1,
            normalization: 1.0,
            input_dim: 0,
            observable: vec![Observable::pauli_z()],
            layers: vec![LayerSpec::rotations_only(vec![Axis::Y])],
        })
        .unwrap()
    }

    fn brick(m: usize, l: usize, seed: u64) -> Qnn {
        Qnn::new(FamilyParams::new(Family::Brick1d, m, l, seed).with_input_dim(2).build().unwrap()).unwrap()
    }

    fn point(q: &Qnn, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut r = rng::stream(seed, &[tag::PROBE]);
        let theta = ParamVector::uniform(&q.spec, &mut r).values;
        let x = (0..q.spec.input_dim).map(|_| rand::Rng::random::<f64>(&mut r) * PI).collect();
        (theta, x)
    }

    #[test]
    fn shift_rule_on_cos_cell() {
        let q = cos_cell();
        assert!(grad_values(&q, &[0.0], &[])[0].abs() < 1e-15);
        assert!((grad_values(&q, &[FRAC_PI_8], &[])[0] + 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn shift_rule_matches_finite_differences() {
        let q = brick(6, 3, 4);
        for s in 0..10 {
            let (theta, x) = point(&q, s);
            let g = grad_values(&q, &theta, &x);
            let fd = oracle::fd_gradient(&q.spec, &theta, &x, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn light_cone_gradient_equals_naive_path() {
        let q = brick(7, 3, 1);
        let (theta, x) = point(&q, 9);
        for (a, b) in grad_values(&q, &theta, &x).iter().zip(grad_naive(&q, &theta, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_shift_matches_finite_differences() {
        let q = brick(4, 2, 2);
        let (theta, x) = point(&q, 5);
        for i in 0..q.num_params() {
            for j in i..q.num_params() {
                let a = second_derivative(&q, &theta, &x, i, j);
                let b = oracle::fd_hessian_entry(&q.spec, &theta, &x, i, j, 1e-4);
                assert!((a - b).abs() < 1e-5, "({i},{j}) {a} vs {b}");
            }
        }
    }

    #[test]
    fn empirical_ntk_matches_oracle_gram() {
        let q = brick(5, 2, 3);
        let (theta, _) = point(&q, 1);
        let inputs = vec![vec![0.2, 1.0], vec![2.0, 0.5], vec![0.2, 1.0]];
        let k = empirical_ntk(&q, &theta, &inputs, 3, 2.5).unwrap();
        let grads: Vec<Vec<f64>> = inputs.iter().map(|x| oracle::fd_gradient(&q.spec, &theta, x, 1e-5)).collect();
        for a in 0..3 {
            for b in 0..3 {
                let want: f64 = grads[a].iter().zip(&grads[b]).map(|(u, v)| u * v).sum::<f64>() / 2.5;
                assert!((k.entries[(a, b)] - want).abs() < 1e-8);
            }
        }
        assert_eq!(k.symmetry_defect(), 0.0);
        assert!(k.lambda_min.abs() < 1e-10, "duplicate inputs make the block singular");
        assert!(k.min_eigenvalue() >= -1e-8);
    }

    #[test]
    fn sampled_gradient_converges() {
        let q = brick(4, 2, 0);
        let (theta, x) = point(&q, 2);
        let exact = grad_values(&q, &theta, &x);
        let est = grad_sampled(&q, &theta, &x, 100_000, 7, &[0]).unwrap();
        let bound = est.variance_bound.unwrap();
        for (a, b) in exact.iter().zip(&est.values) {
            assert!((a - b).abs() < 5.0 * bound.sqrt());
        }
        assert!(grad_sampled(&q, &theta, &x, 0, 7, &[0]).is_err());
    }

    #[test]
    fn bounds_hold_and_vanish_at_equal_points() {
        let q = brick(6, 3, 0);
        let (t0, _) = point(&q, 3);
        let inputs = vec![vec![0.3, 0.9]];
        let rep = ntk_bounds_check(&q, &t0, &t0, &inputs, 1.0);
        assert_eq!(rep.lipschitz_lhs, 0.0);
        assert_eq!(rep.lipschitz_rhs, 0.0);
        assert!(rep.all_ok(), "{rep:?}");
    }

    #[test]
    fn product_kernel_diagonal() {
        // f = Σ cos 2θ_k / √m so E‖∇f‖² = 4·E[sin² 2θ] = 2.
        let q = Qnn::new(product(4, 1, 0)).unwrap();
        let a = analytic_ntk_mc(&q, &[vec![]], 1, 2000, 1, None).unwrap();
        assert!((a.matrix.nk - 2.0).abs() < 0.1);
        assert!((a.matrix.entries[(0, 0)] - 1.0).abs() < 1e-12);
        let se = a.matrix.std_err.as_ref().unwrap()[(0, 0)];
        assert!(se < 0.05);
    }
}
