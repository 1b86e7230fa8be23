//! Gradient flow, gradient descent and noisy gradient descent on the
//! mean-squared loss, with lazy-training diagnostics.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circuit::Dataset;
use crate::error::{QnnError, Result};
use crate::linearized::{LinearizedSolution, TimeKind};
use crate::ntk::{grad_sampled, gram, jacobian, spectrum_bounds};
use crate::rng::{self, tag};
use crate::sim::Qnn;

pub const C0: f64 = 1.0 / (864.0 * PI * PI);
/// Variance constant of the two-point shift estimator.
pub const SHIFT_VARIANCE_A: f64 = 2.0;
pub const DEFAULT_MAX_SHOTS: f64 = 1e18;
/// Per-step loss increase tolerated by the flow integrator.
pub const FLOW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Flow,
    Gd,
    NoisyGd,
}

/// Per-coordinate variance target of the noisy gradient.
///
/// `Gaussian` is the stronger schedule needed for the trained-GP result
/// (`c₀η₀²λ⁴N_K²/(n²|M|²|Θ|³)·(δ/4)/(t+1)²·L`); `Trainability` is the weaker
/// one (extra factor `4N²`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceSchedule {
    Gaussian,
    Trainability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NoiseModel {
    /// Gaussian noise at `scale` times the schedule variance.
    Synthetic { scale: f64 },
    /// Physical shot estimator; `fixed = None` inverts the schedule each step.
    Shots { fixed: Option<u64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub eta0: f64,
    /// Number of GD steps, or RK4 steps for the flow.
    pub steps: usize,
    /// Flow step; `None` uses `0.05/(η₀λ_max)`.
    pub flow_h: Option<f64>,
    pub noise: NoiseModel,
    pub schedule: VarianceSchedule,
    pub delta: f64,
    pub seed: u64,
    pub nk: f64,
    /// Extra inputs for the sup-over-inputs diagnostics.
    pub probes: Vec<Vec<f64>>,
    /// Track NTK drift and the gap to the linearized model.
    pub diagnostics: bool,
    pub max_shots: f64,
}

impl TrainConfig {
    pub fn gd(eta0: f64, steps: usize, nk: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            mode: TrainMode::Gd,
            eta0,
            steps,
            flow_h: None,
            noise: NoiseModel::Synthetic { scale: 0.0 },
            schedule: VarianceSchedule::Gaussian,
            delta: 0.2,
            seed,
            nk,
            probes: Vec::new(),
            diagnostics: false,
            max_shots: DEFAULT_MAX_SHOTS,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub loss: f64,
    pub param_disp_inf: f64,
    pub resid_l2: f64,
    pub ntk_drift: f64,
    pub lin_gap: f64,
    pub grad_variance: f64,
    pub shots_used: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    #[serde(skip)]
    pub theta_final: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eta0_in_window: bool,
    pub warnings: Vec<String>,
    pub total_shots: f64,
    /// Shots the schedule asks for, ignoring the cap.
    pub planned_shots: f64,
    pub shots_capped: bool,
}

impl TrainTrace {
    pub fn final_loss(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn max_displacement(&self) -> f64 {
        self.rows.iter().map(|r| r.param_disp_inf).fold(0.0, f64::max)
    }

    pub fn max_ntk_drift(&self) -> f64 {
        self.rows.iter().map(|r| r.ntk_drift).fold(0.0, f64::max)
    }

    pub fn max_lin_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.lin_gap).fold(0.0, f64::max)
    }
}

pub fn model_outputs(qnn: &Qnn, theta: &[f64], inputs: &[Vec<f64>]) -> DVector<f64> {
    DVector::from_iterator(inputs.len(), inputs.iter().map(|x| qnn.eval(theta, x)))
}

/// `(1/2n) ‖F - Y‖²`.
pub fn loss_mse(qnn: &Qnn, theta: &[f64], data: &Dataset) -> f64 {
    let f = model_outputs(qnn, theta, &data.inputs);
    mse(&f, &data.labels)
}

fn mse(f: &DVector<f64>, y: &[f64]) -> f64 {
    f.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * y.len() as f64)
}

/// Per-coordinate variance target at step `t` for the current loss.
pub fn variance_target(
    schedule: VarianceSchedule,
    eta0: f64,
    lambda_min: f64,
    n: usize,
    nk: f64,
    normalization: f64,
    max_future: usize,
    num_params: usize,
    delta: f64,
    t: usize,
    loss: f64,
) -> f64 {
    let base = C0 * eta0 * eta0 * lambda_min.powi(4) / (n * n) as f64 * nk * nk
        / ((max_future * max_future) as f64 * (num_params as f64).powi(3))
        / ((t + 1) as f64).powi(2)
        * loss;
    match schedule {
        VarianceSchedule::Gaussian => base * delta / 4.0,
        VarianceSchedule::Trainability => base * delta * normalization * normalization,
    }
}

/// Shots per shifted point so that `A m² / (M N²)` meets `target`.
pub fn shots_for_variance(m: usize, normalization: f64, target: f64, cap: f64) -> (u64, bool) {
    let want = required_shots(m, normalization, target);
    if !(want.is_finite()) || want >= cap {
        (cap as u64, true)
    } else {
        (want.ceil().max(1.0) as u64, false)
    }
}

/// Uncapped shots per shifted point for the variance `target`.
pub fn required_shots(m: usize, normalization: f64, target: f64) -> f64 {
    SHIFT_VARIANCE_A * (m * m) as f64 / (normalization * normalization * target)
}

struct Probe {
    inputs: Vec<Vec<f64>>,
    k0: DMatrix<f64>,
    lin: LinearizedSolution,
}

struct Runner<'a> {
    qnn: &'a Qnn,
    data: &'a Dataset,
    cfg: &'a TrainConfig,
    theta0: Vec<f64>,
    probe: Option<Probe>,
}

impl<'a> Runner<'a> {
    fn n(&self) -> usize {
        self.data.len()
    }

    /// `∇L = (1/n) Jᵀ (F - Y)` along with `F`.
    fn loss_gradient(&self, theta: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let j = jacobian(self.qnn, theta, &self.data.inputs);
        let f = model_outputs(self.qnn, theta, &self.data.inputs);
        let r = &f - DVector::from_column_slice(&self.data.labels);
        (j.transpose() * r / self.n() as f64, f)
    }

    fn row(&self, step: usize, time: f64, theta: &[f64], kind: TimeKind) -> TraceRow {
        let f = model_outputs(self.qnn, theta, &self.data.inputs);
        let resid = &f - DVector::from_column_slice(&self.data.labels);
        let disp = theta
            .iter()
            .zip(&self.theta0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let (ntk_drift, lin_gap) = match &self.probe {
            Some(p) => {
                let kt = gram(&jacobian(self.qnn, theta, &p.inputs), self.cfg.nk);
                let drift = (kt - &p.k0).amax();
                let now = model_outputs(self.qnn, theta, &p.inputs);
                let lin = match kind {
                    TimeKind::Continuous => p.lin.continuous(time),
                    TimeKind::Discrete => p.lin.discrete(step as u64),
                };
                (drift, (now - lin).amax())
            }
            None => (f64::NAN, f64::NAN),
        };
        TraceRow {
            step,
            time,
            loss: resid.norm_squared() / (2.0 * self.n() as f64),
            param_disp_inf: disp,
            resid_l2: resid.norm(),
            ntk_drift,
            lin_gap,
            grad_variance: 0.0,
            shots_used: 0.0,
        }
    }
}

fn check_finite(theta: &[f64], step: usize) -> Result<()> {
    if theta.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(QnnError::NumericFault { step })
    }
}

fn setup<'a>(qnn: &'a Qnn, theta0: &[f64], data: &'a Dataset, cfg: &'a TrainConfig) -> Result<(Runner<'a>, TrainTrace)> {
    if theta0.len() != qnn.num_params() {
        return Err(QnnError::Argument(format!(
            "initial parameters have length {}, circuit needs {}",
            theta0.len(),
            qnn.num_params()
        )));
    }
    if !(cfg.eta0 > 0.0 && cfg.nk > 0.0) {
        return Err(QnnError::Argument("eta0 and nk must be positive".into()));
    }
    let j0 = jacobian(qnn, theta0, &data.inputs);
    let (lambda_min, lambda_max) = spectrum_bounds(&gram(&j0, cfg.nk));
    let eta0_in_window = cfg.eta0 < 2.0 / (lambda_min + lambda_max);
    let mut warnings = Vec::new();
    if cfg.mode != TrainMode::Flow && !eta0_in_window {
        warnings.push(format!(
            "eta0 = {} is outside the window 2/(λmin+λmax) = {:.4e} of the initial kernel",
            cfg.eta0,
            2.0 / (lambda_min + lambda_max)
        ));
    }
    let probe = if cfg.diagnostics {
        let mut inputs = data.inputs.clone();
        inputs.extend(cfg.probes.iter().cloned());
        let lin = LinearizedSolution::new(qnn, theta0, &data.inputs, &data.labels, &cfg.probes, cfg.eta0, cfg.nk)?;
        let k0 = lin.k0.clone();
        Some(Probe { inputs, k0, lin })
    } else {
        None
    };
    let runner = Runner {
        qnn,
        data,
        cfg,
        theta0: theta0.to_vec(),
        probe,
    };
    let trace = TrainTrace {
        rows: Vec::new(),
        theta_final: theta0.to_vec(),
        lambda_min,
        lambda_max,
        eta0_in_window,
        warnings,
        total_shots: 0.0,
        planned_shots: 0.0,
        shots_capped: false,
    };
    Ok((runner, trace))
}

pub fn train_gd(qnn: &Qnn, theta0: &[f64], data: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    let mut cfg = cfg.clone();
    cfg.mode = TrainMode::Gd;
    descend(qnn, theta0, data, &cfg)
}

pub fn train_noisy_gd(qnn: &Qnn, theta0: &[f64], data: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    let mut cfg = cfg.clone();
    cfg.mode = TrainMode::NoisyGd;
    descend(qnn, theta0, data, &cfg)
}

pub fn train(qnn: &Qnn, theta0: &[f64], data: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    match cfg.mode {
        TrainMode::Flow => train_flow(qnn, theta0, data, cfg),
        _ => descend(qnn, theta0, data, cfg),
    }
}

fn descend(qnn: &Qnn, theta0: &[f64], data: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    let (runner, mut trace) = setup(qnn, theta0, data, cfg)?;
    let n = data.len();
    let eta = n as f64 * cfg.eta0 / cfg.nk;
    let mut theta = theta0.to_vec();
    for t in 0..=cfg.steps {
        let mut row = runner.row(t, t as f64, &theta, TimeKind::Discrete);
        if t == cfg.steps {
            trace.rows.push(row);
            break;
        }
        let (mut g, f) = runner.loss_gradient(&theta);
        if cfg.mode == TrainMode::NoisyGd {
            let target = variance_target(
                cfg.schedule,
                cfg.eta0,
                trace.lambda_min,
                n,
                cfg.nk,
                qnn.normalization(),
                qnn.lci.max_future,
                qnn.num_params(),
                cfg.delta,
                t,
                row.loss,
            );
            match cfg.noise {
                NoiseModel::Synthetic { scale } => {
                    let var = scale * target;
                    row.grad_variance = var;
                    if var > 0.0 {
                        let mut r = rng::stream(cfg.seed, &[tag::NOISE, t as u64]);
                        let normal = Normal::new(0.0, var.sqrt()).expect("finite variance");
                        for gi in g.iter_mut() {
                            *gi += normal.sample(&mut r);
                        }
                    }
                }
                NoiseModel::Shots { fixed } => {
                    let (shots, capped) = match fixed {
                        Some(s) => (s, false),
                        None => shots_for_variance(qnn.m(), qnn.normalization(), target, cfg.max_shots),
                    };
                    trace.shots_capped |= capped;
                    let per_point = match fixed {
                        Some(s) => s as f64,
                        None => required_shots(qnn.m(), qnn.normalization(), target),
                    };
                    trace.planned_shots += n as f64 * per_point * (1.0 + 2.0 * qnn.num_params() as f64);
                    g = shot_gradient(qnn, &theta, data, shots, cfg.seed, t)?;
                    let m = qnn.m() as f64;
                    row.grad_variance = SHIFT_VARIANCE_A * m * m / (shots as f64 * qnn.normalization().powi(2));
                    row.shots_used = n as f64 * shots as f64 * (1.0 + 2.0 * qnn.num_params() as f64);
                    trace.total_shots += row.shots_used;
                }
            }
        }
        let _ = f;
        for (th, gi) in theta.iter_mut().zip(g.iter()) {
            *th -= eta * gi;
        }
        check_finite(&theta, t + 1)?;
        trace.rows.push(row);
    }
    trace.theta_final = theta;
    Ok(trace)
}

/// `(1/n) Σ_a (F̂_a - y_a) ∇̂f(x_a)` with independent shot estimates.
fn shot_gradient(qnn: &Qnn, theta: &[f64], data: &Dataset, shots: u64, seed: u64, t: usize) -> Result<DVector<f64>> {
    let n = data.len();
    let mut g = DVector::zeros(qnn.num_params());
    for (a, (x, y)) in data.inputs.iter().zip(&data.labels).enumerate() {
        let mut r = rng::stream(seed, &[tag::SHOTS, t as u64, a as u64, u64::MAX]);
        let f = qnn.sample_model(theta, x, shots, &mut r)?;
        let d = grad_sampled(qnn, theta, x, shots, seed, &[t as u64, a as u64])?;
        g += DVector::from_vec(d.values) * (f - y);
    }
    Ok(g / n as f64)
}

pub fn train_flow(qnn: &Qnn, theta0: &[f64], data: &Dataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    let (runner, mut trace) = setup(qnn, theta0, data, cfg)?;
    let h = cfg
        .flow_h
        .unwrap_or(0.05 / (cfg.eta0 * trace.lambda_max.max(f64::MIN_POSITIVE)));
    if !(h > 0.0 && h.is_finite()) {
        return Err(QnnError::Argument(format!("flow step {h} is not positive")));
    }
    let eta = data.len() as f64 * cfg.eta0 / cfg.nk;
    let rhs = |th: &[f64]| -> DVector<f64> { -runner.loss_gradient(th).0 * eta };
    let mut theta = DVector::from_column_slice(theta0);
    let mut prev_loss = f64::INFINITY;
    for s in 0..=cfg.steps {
        let row = runner.row(s, s as f64 * h, theta.as_slice(), TimeKind::Continuous);
        if row.loss > prev_loss + FLOW_TOLERANCE {
            return Err(QnnError::StepRejected {
                step: s,
                increase: row.loss - prev_loss,
            });
        }
        prev_loss = row.loss;
        trace.rows.push(row);
        if s == cfg.steps {
            break;
        }
        let k1 = rhs(theta.as_slice());
        let k2 = rhs((&theta + &k1 * (h / 2.0)).as_slice());
        let k3 = rhs((&theta + &k2 * (h / 2.0)).as_slice());
        let k4 = rhs((&theta + &k3 * h).as_slice());
        theta += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        check_finite(theta.as_slice(), s + 1)?;
    }
    trace.theta_final = theta.as_slice().to_vec();
    Ok(trace)
}

/// Measured quantity next to its shape-only bound (all unknown constants 1).
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub measured: f64,
    pub shape_bound: f64,
    pub anomalous: bool,
}

pub const ANOMALY_FACTOR: f64 = 10.0;

fn bound(name: &'static str, measured: f64, shape_bound: f64) -> BoundCheck {
    BoundCheck {
        name,
        measured,
        shape_bound,
        anomalous: measured > ANOMALY_FACTOR * shape_bound,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<BoundCheck>,
    pub initial_gaps_zero: bool,
}

/// Compares a trace against the shape of the lazy-training bounds using the
/// circuit's cardinalities, `N`, `N_K` and the initial `λ_min`.
pub fn diagnostics(trace: &TrainTrace, qnn: &Qnn, n: usize, cfg: &TrainConfig) -> DiagnosticsReport {
    let lci = &qnn.lci;
    let nf = n as f64;
    let log2n = (2.0 * nf).ln();
    let lmin = trace.lambda_min;
    let (mf, np) = (lci.max_future as f64, lci.max_past as f64);
    let norm = qnn.normalization();
    let nk = cfg.nk;
    let lm = qnn.num_params() as f64;
    let flow = cfg.mode == TrainMode::Flow;

    let resid_ratio = trace
        .rows
        .iter()
        .map(|r| {
            let decay = if flow {
                (-cfg.eta0 * lmin * r.time / 3.0).exp()
            } else {
                (1.0 - cfg.eta0 * lmin / 3.0).powf(r.time)
            };
            r.resid_l2 / ((nf * log2n).sqrt() * decay)
        })
        .fold(0.0, f64::max);
    let disp = (if flow { 1.0 } else { 6.0 }) / lmin * nf * log2n.sqrt() * mf / (nk * norm);
    let drift = nf * log2n.sqrt() * lci.sigma1 as f64 * mf.powi(3) * np / (lmin * nk * nk * norm.powi(3));
    let gap = nf * nf * log2n * lm * mf.powi(4) * np / (lmin * lmin * nk * nk * norm.powi(3));
    let first = trace.rows.first();
    DiagnosticsReport {
        checks: vec![
            bound("residual_decay", resid_ratio, 1.0),
            bound("param_displacement", trace.max_displacement(), disp),
            bound("ntk_drift", trace.max_ntk_drift(), drift),
            bound("linearization_gap", trace.max_lin_gap(), gap),
        ],
        initial_gaps_zero: first.is_some_and(|r| r.param_disp_inf == 0.0 && !(r.ntk_drift > 0.0) && !(r.lin_gap > 0.0)),
    }
}

/// Labelled inputs `x ∈ [0,π]^dim` drawn uniformly, labels `sin(Σ_j (j+1) x_j) / 2`.
pub fn synthetic_dataset(n: usize, dim: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng::stream(seed, &[tag::DATA, n as u64, dim as u64]);
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| r.random::<f64>() * PI).collect())
        .collect();
    let labels = inputs.iter().map(|x| target_function(x)).collect();
    Dataset::new(inputs, labels)
}

pub fn target_function(x: &[f64]) -> f64 {
    0.5 * x.iter().enumerate().map(|(j, v)| (j + 1) as f64 * v).sum::<f64>().sin()
}

/// Deterministic low-discrepancy points in `[0,π]^dim` (additive recurrence
/// on the generalized golden ratio).
pub fn probe_inputs(count: usize, dim: usize) -> Vec<Vec<f64>> {
    let d = dim.max(1) as f64;
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d + 1.0));
    }
    let alpha: Vec<f64> = (1..=dim).map(|j| phi.powi(-(j as i32)).fract()).collect();
    (1..=count)
        .map(|i| alpha.iter().map(|a| (0.5 + a * i as f64).fract() * PI).collect())
        .collect()
}

pub const DEFAULT_PROBES: usize = 8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::ParamVector;
    use crate::families::{Family, FamilyParams};

    fn brick(m: usize, l: usize) -> Qnn {
        let c = FamilyParams::new(Family::Brick1d, m, l, 0).with_input_dim(2).build().unwrap();
        Qnn::new(c.append_mean_zero_layer()).unwrap()
    }

    fn init(q: &Qnn, seed: u64) -> Vec<f64> {
        ParamVector::uniform(&q.spec, &mut rng::stream(seed, &[tag::PARAMS])).values
    }

    #[test]
    fn loss_definition() {
        let q = brick(4, 2);
        let th = init(&q, 1);
        let data = synthetic_dataset(5, 2, 3).unwrap();
        let f: Vec<f64> = data.inputs.iter().map(|x| q.eval(&th, x)).collect();
        let direct: f64 = f.iter().zip(&data.labels).map(|(a, b)| 0.5 * (a - b).powi(2)).sum::<f64>() / 5.0;
        assert!((loss_mse(&q, &th, &data) - direct).abs() < 1e-12);
        let fit = Dataset::new(data.inputs.clone(), f).unwrap();
        assert_eq!(loss_mse(&q, &th, &fit), 0.0);
        assert!((mse(&DVector::from_vec(vec![0.0]), &[2.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn fitted_start_stays_put() {
        let q = brick(4, 2);
        let th = init(&q, 2);
        let data = synthetic_dataset(3, 2, 1).unwrap();
        let f = data.inputs.iter().map(|x| q.eval(&th, x)).collect();
        let fit = Dataset::new(data.inputs.clone(), f).unwrap();
        let tr = train_gd(&q, &th, &fit, &TrainConfig::gd(0.3, 5, 1.0, 0)).unwrap();
        assert_eq!(tr.theta_final, th);
    }

    #[test]
    fn flow_loss_is_monotone() {
        let q = brick(6, 2);
        let th = init(&q, 3);
        let data = synthetic_dataset(4, 2, 2).unwrap();
        let mut cfg = TrainConfig::gd(0.5, 60, 1.0, 0);
        cfg.mode = TrainMode::Flow;
        let tr = train_flow(&q, &th, &data, &cfg).unwrap();
        for w in tr.rows.windows(2) {
            assert!(w[1].loss <= w[0].loss + FLOW_TOLERANCE);
        }
        assert!(tr.final_loss() < tr.rows[0].loss);
    }

    #[test]
    fn zero_noise_reproduces_gd() {
        let q = brick(4, 2);
        let th = init(&q, 4);
        let data = synthetic_dataset(3, 2, 5).unwrap();
        let cfg = TrainConfig::gd(0.3, 10, 1.0, 9);
        let a = train_gd(&q, &th, &data, &cfg).unwrap();
        let b = train_noisy_gd(&q, &th, &data, &cfg).unwrap();
        assert_eq!(a.theta_final, b.theta_final);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits());
        }
    }

    #[test]
    fn diagnostics_start_at_zero() {
        let q = brick(4, 2);
        let th = init(&q, 5);
        let data = synthetic_dataset(3, 2, 6).unwrap();
        let mut cfg = TrainConfig::gd(0.3, 3, 1.0, 0);
        cfg.diagnostics = true;
        cfg.probes = probe_inputs(2, 2);
        let tr = train_gd(&q, &th, &data, &cfg).unwrap();
        let r0 = &tr.rows[0];
        assert_eq!((r0.param_disp_inf, r0.ntk_drift, r0.lin_gap), (0.0, 0.0, 0.0));
        assert_eq!(tr.rows.len(), 4);
        assert!(diagnostics(&tr, &q, 3, &cfg).initial_gaps_zero);
    }

    #[test]
    fn shot_schedule_inverts_the_variance_bound() {
        let (m, norm) = (16, 4.0);
        let (s, capped) = shots_for_variance(m, norm, 1e-3, DEFAULT_MAX_SHOTS);
        assert!(!capped);
        let achieved = SHIFT_VARIANCE_A * (m * m) as f64 / (s as f64 * norm * norm);
        assert!(achieved <= 1e-3 && achieved > 0.999e-3);
        assert!(shots_for_variance(m, norm, 0.0, DEFAULT_MAX_SHOTS).1);
    }

    #[test]
    fn probes_are_distinct_and_in_range() {
        let p = probe_inputs(8, 3);
        for (i, a) in p.iter().enumerate() {
            assert!(a.iter().all(|v| (0.0..=PI).contains(v)));
            for b in &p[..i] {
                assert_ne!(a, b);
            }
        }
    }
}
