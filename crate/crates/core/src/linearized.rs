//! Closed-form dynamics of the linearized model and the time-t Gaussian process.
//!
//! Every matrix function of a kernel block goes through one symmetric
//! eigendecomposition `K = V diag(λ) Vᵀ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use rayon::prelude::*;

use crate::circuit::{Dataset, ParamVector};
use crate::error::{QnnError, Result};
use crate::ntk::{analytic_ntk_mc, gram, jacobian};
use crate::rng::{self, tag};
use crate::sim::{calibrate_normalization, Qnn};
use crate::stats::{median, normality_tests, NormalityReport, SampleEnsemble};
use crate::training::{train_gd, TrainConfig};

/// Blocks with a larger condition number receive a Tikhonov jitter.
pub const MAX_CONDITION: f64 = 1e12;
pub const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeKind {
    Continuous,
    Discrete,
}

/// Eigendecomposition of a kernel training block, jittered if near-singular.
#[derive(Debug, Clone)]
pub struct SpectralBlock {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
    pub condition: f64,
    pub jitter: f64,
}

impl SpectralBlock {
    pub fn new(block: &DMatrix<f64>) -> Result<SpectralBlock> {
        let n = block.nrows();
        let sym = (block + block.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym.clone());
        let cond = |v: &DVector<f64>| {
            let (lo, hi) = (v.min(), v.max());
            if lo <= 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        };
        let condition = cond(&eig.eigenvalues);
        if condition < MAX_CONDITION {
            return Ok(SpectralBlock {
                vectors: eig.eigenvectors,
                values: eig.eigenvalues,
                condition,
                jitter: 0.0,
            });
        }
        let jitter = JITTER_SCALE * sym.trace() / n as f64;
        let eig = SymmetricEigen::new(sym + DMatrix::identity(n, n) * jitter);
        let jittered = cond(&eig.eigenvalues);
        if !(jittered < MAX_CONDITION) || !(jitter > 0.0) {
            return Err(QnnError::Conditioning { condition });
        }
        Ok(SpectralBlock {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
            condition,
            jitter,
        })
    }

    pub fn lambda_min(&self) -> f64 {
        self.values.min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.max()
    }

    /// `V diag(g(λ)) Vᵀ`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.values.map(g));
        &self.vectors * d * self.vectors.transpose()
    }

    /// `K⁻¹ (1 - S_t(K))` with `S_t = e^{-η₀Kt}` or `(1-η₀K)^t`.
    pub fn relaxation_over_k(&self, eta0: f64, t: f64, kind: TimeKind) -> DMatrix<f64> {
        self.map(|l| relaxation(l, eta0, t, kind) / l)
    }

    /// `1 - S_t(K)`.
    pub fn relaxation(&self, eta0: f64, t: f64, kind: TimeKind) -> DMatrix<f64> {
        self.map(|l| relaxation(l, eta0, t, kind))
    }
}

/// `1 - e^{-η₀λt}` or `1 - (1-η₀λ)^t`, accurate for small `η₀λ`.
pub fn relaxation(lambda: f64, eta0: f64, t: f64, kind: TimeKind) -> f64 {
    let a = eta0 * lambda;
    match kind {
        TimeKind::Continuous => -(-a * t).exp_m1(),
        TimeKind::Discrete if a < 1.0 => -(t * (-a).ln_1p()).exp_m1(),
        TimeKind::Discrete => 1.0 - (1.0 - a).powf(t),
    }
}

/// Linearization of the model around `Θ₀` on a fixed input list whose first
/// `n_train` entries are the training inputs.
#[derive(Debug, Clone)]
pub struct LinearizedSolution {
    pub theta0: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    pub n_train: usize,
    pub labels: DVector<f64>,
    pub f0: DVector<f64>,
    pub jac0: DMatrix<f64>,
    /// `K̂₀` over all inputs.
    pub k0: DMatrix<f64>,
    pub nk: f64,
    pub eta0: f64,
    pub spectral: SpectralBlock,
}

impl LinearizedSolution {
    pub fn new(
        qnn: &Qnn,
        theta0: &[f64],
        train_inputs: &[Vec<f64>],
        labels: &[f64],
        probes: &[Vec<f64>],
        eta0: f64,
        nk: f64,
    ) -> Result<LinearizedSolution> {
        let mut inputs = train_inputs.to_vec();
        inputs.extend_from_slice(probes);
        let jac0 = jacobian(qnn, theta0, &inputs);
        let f0 = DVector::from_iterator(inputs.len(), inputs.iter().map(|x| qnn.eval(theta0, x)));
        LinearizedSolution::from_parts(theta0.to_vec(), inputs, train_inputs.len(), labels, f0, jac0, nk, eta0)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        theta0: Vec<f64>,
        inputs: Vec<Vec<f64>>,
        n_train: usize,
        labels: &[f64],
        f0: DVector<f64>,
        jac0: DMatrix<f64>,
        nk: f64,
        eta0: f64,
    ) -> Result<LinearizedSolution> {
        if labels.len() != n_train || n_train == 0 || f0.len() != jac0.nrows() {
            return Err(QnnError::Argument("linearized solution needs matching labels, values and gradients".into()));
        }
        let k0 = gram(&jac0, nk);
        let spectral = SpectralBlock::new(&k0.view((0, 0), (n_train, n_train)).into_owned())?;
        Ok(LinearizedSolution {
            theta0,
            inputs,
            n_train,
            labels: DVector::from_column_slice(labels),
            f0,
            jac0,
            k0,
            nk,
            eta0,
            spectral,
        })
    }

    fn residual0(&self) -> DVector<f64> {
        self.f0.rows(0, self.n_train) - &self.labels
    }

    fn k_all_train(&self) -> DMatrix<f64> {
        self.k0.columns(0, self.n_train).into_owned()
    }

    /// `f^lin` on every cached input at time `t`.
    pub fn predict(&self, t: f64, kind: TimeKind) -> DVector<f64> {
        let op = self.spectral.relaxation_over_k(self.eta0, t, kind);
        &self.f0 - self.k_all_train() * (op * self.residual0())
    }

    pub fn continuous(&self, t: f64) -> DVector<f64> {
        self.predict(t, TimeKind::Continuous)
    }

    pub fn discrete(&self, t: u64) -> DVector<f64> {
        self.predict(t as f64, TimeKind::Discrete)
    }

    pub fn lin_solution_continuous(&self, t: f64, index: usize) -> f64 {
        self.continuous(t)[index]
    }

    pub fn lin_solution_discrete(&self, t: u64, index: usize) -> f64 {
        self.discrete(t)[index]
    }
}

#[derive(Debug, Clone)]
pub struct GPPosterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub t: f64,
    pub kind: TimeKind,
    pub eta0: f64,
    pub jitter: f64,
    pub condition: f64,
}

/// Mean `B Y` and covariance `𝒦₀ - B𝒦₀(X,·) - (B𝒦₀(X,·))ᵀ + B𝒦₀(X,X)Bᵀ`
/// with `B = K̄(·,X) K̄⁻¹ (1 - S_t(K̄))`. Both kernels are indexed by the same
/// input list whose first `n_train` entries are the training inputs.
pub fn gp_posterior(
    kbar: &DMatrix<f64>,
    k0: &DMatrix<f64>,
    n_train: usize,
    labels: &[f64],
    eta0: f64,
    t: f64,
    kind: TimeKind,
) -> Result<GPPosterior> {
    let n = kbar.nrows();
    if kbar.ncols() != n || k0.shape() != (n, n) || labels.len() != n_train || n_train == 0 || n_train > n {
        return Err(QnnError::Argument("kernel shapes do not match the training set".into()));
    }
    let spectral = SpectralBlock::new(&kbar.view((0, 0), (n_train, n_train)).into_owned())?;
    let b = kbar.columns(0, n_train) * spectral.relaxation_over_k(eta0, t, kind);
    let mean = &b * DVector::from_column_slice(labels);
    let bk = &b * k0.rows(0, n_train);
    let k0xx = k0.view((0, 0), (n_train, n_train));
    let mut covariance = k0 - &bk - bk.transpose() + &b * k0xx * b.transpose();
    covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(GPPosterior {
        mean,
        covariance,
        t,
        kind,
        eta0,
        jitter: spectral.jitter,
        condition: spectral.condition,
    })
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct GpCheckConfig {
    pub eta0: f64,
    /// Number of GD steps.
    pub steps: usize,
    pub num_seeds: usize,
    pub kernel_samples: usize,
    pub cov_samples: usize,
    /// `None` sets `N_K` so the Monte-Carlo kernel has unit mean diagonal.
    pub nk: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GpCheckReport {
    pub n_train: usize,
    pub num_seeds: usize,
    pub steps: usize,
    pub nk: f64,
    pub empirical_mean: Vec<f64>,
    pub empirical_mean_se: Vec<f64>,
    pub empirical_variance: Vec<f64>,
    pub gp_mean: Vec<f64>,
    pub gp_variance: Vec<f64>,
    /// `(empirical mean - μ_t) / SE`.
    pub z_scores: Vec<f64>,
    /// Largest standard error of the Monte-Carlo kernel entries.
    pub kernel_max_se: f64,
    /// Largest standard error of the initial covariance estimate's means.
    pub cov_mean_max_se: f64,
    pub jitter: f64,
    pub normality: NormalityReport,
    pub final_loss_median: f64,
}

impl GpCheckReport {
    pub fn train_within(&self, z: f64) -> bool {
        self.z_scores[..self.n_train].iter().all(|v| v.abs() <= z)
    }
}

/// Trains `num_seeds` independently initialized copies by GD and compares the
/// spread of their outputs with the time-t Gaussian process built from
/// Monte-Carlo estimates of `K̄` and `𝒦₀` (independent sample sets).
pub fn gp_empirical_check(qnn: &Qnn, data: &Dataset, probes: &[Vec<f64>], cfg: &GpCheckConfig) -> Result<GpCheckReport> {
    if cfg.num_seeds < 2 {
        return Err(QnnError::Argument("GP check needs at least 2 seeds".into()));
    }
    let n = data.len();
    let mut inputs = data.inputs.clone();
    inputs.extend_from_slice(probes);
    let kbar = analytic_ntk_mc(qnn, &inputs, n, cfg.kernel_samples, cfg.seed, cfg.nk)?;
    let nk = kbar.matrix.nk;
    let cal = calibrate_normalization(qnn, &inputs, cfg.cov_samples, cfg.seed)?;
    let k0 = DMatrix::from_fn(inputs.len(), inputs.len(), |a, b| cal.covariance[a][b]);
    let post = gp_posterior(&kbar.matrix.entries, &k0, n, &data.labels, cfg.eta0, cfg.steps as f64, TimeKind::Discrete)?;

    let tcfg = TrainConfig::gd(cfg.eta0, cfg.steps, nk, cfg.seed);
    let runs: Vec<(Vec<f64>, f64)> = (0..cfg.num_seeds)
        .into_par_iter()
        .map(|s| {
            let theta0 = ParamVector::uniform(&qnn.spec, &mut rng::stream(cfg.seed, &[tag::PARAMS, s as u64])).values;
            let tr = train_gd(qnn, &theta0, data, &tcfg)?;
            let out = inputs.iter().map(|x| qnn.eval(&tr.theta_final, x)).collect();
            Ok((out, tr.final_loss()))
        })
        .collect::<Result<_>>()?;
    let sf = cfg.num_seeds as f64;
    let p = inputs.len();
    let values: Vec<Vec<f64>> = (0..p).map(|a| runs.iter().map(|r| r.0[a]).collect()).collect();
    let empirical_mean: Vec<f64> = values.iter().map(|v| v.iter().sum::<f64>() / sf).collect();
    let empirical_variance: Vec<f64> = values
        .iter()
        .zip(&empirical_mean)
        .map(|(v, mu)| v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (sf - 1.0))
        .collect();
    let empirical_mean_se: Vec<f64> = empirical_variance.iter().map(|v| (v / sf).sqrt()).collect();
    let gp_mean: Vec<f64> = post.mean.iter().copied().collect();
    let z_scores = (0..p).map(|a| (empirical_mean[a] - gp_mean[a]) / empirical_mean_se[a]).collect();
    let ens = SampleEnsemble {
        m: qnn.m(),
        layers: qnn.spec.num_layers,
        normalization: qnn.normalization(),
        seed: cfg.seed,
        probes: inputs.clone(),
        values,
    };
    Ok(GpCheckReport {
        n_train: n,
        num_seeds: cfg.num_seeds,
        steps: cfg.steps,
        nk,
        empirical_mean,
        empirical_mean_se,
        empirical_variance,
        gp_mean,
        gp_variance: post.covariance.diagonal().iter().copied().collect(),
        z_scores,
        kernel_max_se: kbar.matrix.std_err.as_ref().map_or(0.0, |e| e.amax()),
        cov_mean_max_se: cal.mean_se.iter().copied().fold(0.0, f64::max),
        jitter: post.jitter,
        normality: normality_tests(&ens)?,
        final_loss_median: median(runs.iter().map(|r| r.1).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let a = DMatrix::from_fn(n, n + 2, |_, _| next());
        &a * a.transpose() / (n as f64) + DMatrix::identity(n, n) * 0.05
    }

    /// Truncated Taylor series with scaling and squaring.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let norm = a.amax() * n as f64;
        let s = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scaled = a / 2f64.powi(s);
        let mut term = DMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn matrix_functions_match_oracles() {
        let k = spd(6, 3);
        let sb = SpectralBlock::new(&k).unwrap();
        let (eta0, t) = (0.3, 7.0);
        let id = DMatrix::identity(6, 6);
        let e = expm(&(&k * (-eta0 * t)));
        assert!((sb.relaxation(eta0, t, TimeKind::Continuous) - (&id - e)).amax() < 1e-9);
        let mut p = id.clone();
        for _ in 0..25 {
            p = &p * (&id - &k * eta0);
        }
        assert!((sb.relaxation(eta0, 25.0, TimeKind::Discrete) - (&id - p)).amax() < 1e-9);
    }

    fn synthetic(n_train: usize, n_probe: usize, params: usize, eta0: f64) -> LinearizedSolution {
        let n = n_train + n_probe;
        let mut s = 17u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let jac = DMatrix::from_fn(n, params, |_, _| next());
        let f0 = DVector::from_fn(n, |_, _| next());
        let labels: Vec<f64> = (0..n_train).map(|_| next()).collect();
        let inputs = (0..n).map(|a| vec![a as f64]).collect();
        LinearizedSolution::from_parts(vec![0.0; params], inputs, n_train, &labels, f0, jac, 2.0, eta0).unwrap()
    }

    #[test]
    fn zero_time_is_the_initial_model() {
        let s = synthetic(4, 3, 12, 0.5);
        assert_eq!(s.continuous(0.0), s.f0);
        assert_eq!(s.discrete(0), s.f0);
    }

    #[test]
    fn discrete_form_equals_linear_gd_iteration() {
        let s = synthetic(4, 3, 12, 0.5);
        let n = s.n_train;
        let mut dtheta = DVector::zeros(12);
        for t in 0..=200u64 {
            let f = &s.f0 + &s.jac0 * &dtheta;
            let closed = s.discrete(t);
            assert!((&f - &closed).amax() < 1e-9, "t={t}");
            let resid = f.rows(0, n) - &s.labels;
            dtheta -= s.jac0.rows(0, n).transpose() * resid * (s.eta0 / s.nk);
        }
    }

    #[test]
    fn continuous_form_equals_rk4() {
        let s = synthetic(4, 3, 12, 0.5);
        let n = s.n_train;
        let k_all = s.k0.columns(0, n).into_owned();
        let rhs = |f: &DVector<f64>| -> DVector<f64> { -(&k_all * (f.rows(0, n) - &s.labels)) * s.eta0 };
        let mut f = s.f0.clone();
        let h = 1e-3;
        for _ in 0..1000 {
            let k1 = rhs(&f);
            let k2 = rhs(&(&f + &k1 * (h / 2.0)));
            let k3 = rhs(&(&f + &k2 * (h / 2.0)));
            let k4 = rhs(&(&f + &k3 * h));
            f += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        assert!((f - s.continuous(1.0)).amax() < 1e-8);
    }

    #[test]
    fn training_inputs_converge_to_labels() {
        let s = synthetic(4, 3, 12, 0.5);
        let lmin = s.spectral.lambda_min();
        let late = s.continuous(1e3 / (s.eta0 * lmin));
        assert!((late.rows(0, 4) - &s.labels).amax() < 1e-8);
        let eta0 = 1.9 / (lmin + s.spectral.lambda_max());
        let s = synthetic(4, 3, 12, eta0);
        assert!((s.discrete(10_000).rows(0, 4) - &s.labels).amax() < 1e-6);
    }

    #[test]
    fn singular_block_is_jittered() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let k = &v * v.transpose();
        let sb = SpectralBlock::new(&k).unwrap();
        assert!(sb.jitter > 0.0);
        assert!(sb.condition > MAX_CONDITION);
        assert!(matches!(SpectralBlock::new(&DMatrix::zeros(2, 2)), Err(QnnError::Conditioning { .. })));
    }

    #[test]
    fn posterior_limits() {
        let k = spd(5, 9);
        let y = [0.3, -0.2, 0.5];
        let p0 = gp_posterior(&k, &k, 3, &y, 0.4, 0.0, TimeKind::Continuous).unwrap();
        assert!(p0.mean.amax() == 0.0);
        assert!((&p0.covariance - &k).amax() < 1e-15);
        let pinf = gp_posterior(&k, &k, 3, &y, 0.4, 1e6, TimeKind::Continuous).unwrap();
        for a in 0..3 {
            assert!((pinf.mean[a] - y[a]).abs() < 1e-8);
            assert!(pinf.covariance[(a, a)].abs() < 1e-8);
        }
        let ev = SymmetricEigen::new(pinf.covariance.clone()).eigenvalues;
        assert!(ev.min() > -1e-8);
    }

    #[test]
    fn discrete_approaches_continuous_for_small_steps() {
        let k = spd(5, 2);
        let y = [0.3, -0.2, 0.5];
        let lmax = SymmetricEigen::new(k.view((0, 0), (3, 3)).into_owned()).eigenvalues.max();
        let eta0 = 0.01 / lmax;
        let steps = (2.0 / eta0).round();
        let d = gp_posterior(&k, &k, 3, &y, eta0, steps, TimeKind::Discrete).unwrap();
        let c = gp_posterior(&k, &k, 3, &y, 1.0, steps * eta0, TimeKind::Continuous).unwrap();
        assert!((d.mean - c.mean).amax() < 0.05);
    }

    #[test]
    fn untrained_ensemble_has_zero_mean() {
        use crate::families::{Family, FamilyParams};
        use crate::training::{probe_inputs, synthetic_dataset};
        let spec = FamilyParams::new(Family::Brick1d, 12, 2, 0).with_input_dim(2).build().unwrap();
        let q = Qnn::new(spec.append_mean_zero_layer()).unwrap();
        let data = synthetic_dataset(3, 2, 1).unwrap();
        let cfg = GpCheckConfig {
            eta0: 0.3,
            steps: 0,
            num_seeds: 300,
            kernel_samples: 50,
            cov_samples: 200,
            nk: None,
            seed: 4,
        };
        let r = gp_empirical_check(&q, &data, &probe_inputs(2, 2), &cfg).unwrap();
        assert!(r.gp_mean.iter().all(|v| *v == 0.0));
        assert!(r.z_scores.iter().all(|z| z.abs() < 4.0), "{:?}", r.z_scores);
    }
}
