//! Desk-scale acceptance experiments. Each criterion runs end to end from a
//! fixed seed and reports PASS/FAIL with its measured quantities.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{CircuitSpec, Dataset, ParamVector};
use crate::error::{QnnError, Result};
use crate::families::{Family, FamilyParams};
use crate::lightcone::cardinality_report;
use crate::linearized::{gp_empirical_check, GpCheckConfig, LinearizedSolution};
use crate::ntk::{analytic_ntk_mc, grad_parameter_shift, gram, jacobian, second_derivative, spectrum_bounds};
use crate::oracle;
use crate::rng::{self, tag};
use crate::sim::Qnn;
use crate::stats::{cumulants, median, normality_tests, sample_init_ensemble, InitLaw};
use crate::training::{
    probe_inputs, synthetic_dataset, train_flow, train_gd, train_noisy_gd, NoiseModel, TrainConfig, TrainMode,
    VarianceSchedule, DEFAULT_PROBES, FLOW_TOLERANCE,
};

pub const DEFAULT_SEED: u64 = 20_240_917;

pub const IDS: [&str; 11] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11"];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: Vec<(String, f64)>,
    pub runtime_secs: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<34} {}  ({:.1}s)  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.runtime_secs,
            self.detail
        )
    }
}

struct Outcome {
    passed: bool,
    detail: String,
    metrics: Vec<(String, f64)>,
}

fn outcome(passed: bool, detail: String, metrics: Vec<(&str, f64)>) -> Outcome {
    Outcome {
        passed,
        detail,
        metrics: metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

pub fn name_of(id: &str) -> Option<&'static str> {
    Some(match id {
        "A1" => "pruning equivalence",
        "A2" => "light-cone soundness and bounds",
        "A3" => "gradient exactness",
        "A4" => "closed-form linearized dynamics",
        "A5" => "lazy-training scaling",
        "A6" => "training convergence",
        "A7" => "non-Gaussian counterexample",
        "A8" => "Gaussianization with width",
        "A9" => "Fourier sandwich",
        "A10" => "noisy training",
        "A11" => "time-t GP agreement",
        _ => return None,
    })
}

pub fn run_criterion(id: &str, seed: u64) -> Result<CriterionResult> {
    let id = id.to_ascii_uppercase();
    let name = name_of(&id).ok_or_else(|| QnnError::Argument(format!("unknown suite id {id}")))?;
    let start = Instant::now();
    let out = match id.as_str() {
        "A1" => a1(seed),
        "A2" => a2(seed),
        "A3" => a3(seed),
        "A4" => a4(seed),
        "A5" => a5(seed),
        "A6" => a6(seed),
        "A7" => a7(seed),
        "A8" => a8(seed),
        "A9" => a9(seed),
        "A10" => a10(seed),
        _ => a11(seed),
    }?;
    Ok(CriterionResult {
        id,
        name: name.to_string(),
        passed: out.passed,
        detail: out.detail,
        metrics: out.metrics,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs `"all"` or a single id.
pub fn reproduce(suite: &str, seed: u64) -> Result<Vec<CriterionResult>> {
    if suite.eq_ignore_ascii_case("all") {
        IDS.iter().map(|id| run_criterion(id, seed)).collect()
    } else {
        Ok(vec![run_criterion(suite, seed)?])
    }
}

/// Brick-wall circuit with two layers, a mean-zero layer and 2-d inputs.
pub fn brick_circuit(m: usize, seed: u64) -> Result<Qnn> {
    let spec = FamilyParams::new(Family::Brick1d, m, 2, seed).with_input_dim(2).build()?;
    Qnn::new(spec.append_mean_zero_layer())
}

/// Random circuit from the brick, lattice or random-pairing family with
/// `m ≤ 10` and `L ≤ 5`.
pub fn random_corpus_circuit<R: Rng + ?Sized>(rng: &mut R) -> Result<CircuitSpec> {
    let family = *[Family::Brick1d, Family::Lattice2d, Family::RandomPairing].choose(rng).expect("non-empty");
    let m = match family {
        Family::Lattice2d => *[4usize, 6, 8, 9, 10].choose(rng).expect("non-empty"),
        _ => rng.random_range(2..=10),
    };
    let layers = rng.random_range(1..=5);
    let dim = rng.random_range(1..=3);
    FamilyParams::new(family, m, layers, rng.random()).with_input_dim(dim).build()
}

fn random_point<R: Rng + ?Sized>(spec: &CircuitSpec, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let theta = ParamVector::uniform(spec, rng).values;
    let x = (0..spec.input_dim).map(|_| rng.random::<f64>() * PI).collect();
    (theta, x)
}

fn corpus(seed: u64, count: usize) -> Result<Vec<CircuitSpec>> {
    let mut r = rng::stream(seed, &[tag::ACCEPT, 1]);
    (0..count).map(|_| random_corpus_circuit(&mut r)).collect()
}

fn a1(seed: u64) -> Result<Outcome> {
    const TOL: f64 = 1e-10;
    let specs = corpus(seed, 50)?;
    let worst = specs
        .par_iter()
        .enumerate()
        .map(|(c, spec)| {
            let q = Qnn::new(spec.clone())?;
            let mut r = rng::stream(seed, &[tag::ACCEPT, 11, c as u64]);
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let (theta, x) = random_point(spec, &mut r);
                let full = oracle::full_locals(spec, &theta, &x);
                for (k, fk) in full.iter().enumerate() {
                    worst = worst.max((q.eval_local(k, &theta, &x) - fk).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(outcome(
        worst <= TOL,
        format!("50 circuits x 20 points, max |pruned - full| = {worst:.2e} (tol {TOL:.0e})"),
        vec![("max_deviation", worst)],
    ))
}

fn a2(seed: u64) -> Result<Outcome> {
    const THRESHOLD: f64 = 1e-9;
    let specs = corpus(seed, 50)?;
    let results = specs
        .par_iter()
        .enumerate()
        .map(|(c, spec)| {
            let q = Qnn::new(spec.clone())?;
            let report = cardinality_report(&q.lci);
            let mut r = rng::stream(seed, &[tag::ACCEPT, 21, c as u64]);
            let mut fired = 0usize;
            let mut probed = 0usize;
            for k in 0..spec.num_qubits {
                let cone = &q.lci.past_cones[k];
                for i in 0..spec.num_params() {
                    if cone.binary_search(&i).is_err() {
                        probed += 1;
                        if oracle::dependency_probe(spec, k, i, 2, THRESHOLD, &mut r) {
                            fired += 1;
                        }
                    }
                }
            }
            Ok((report.all_ok(), fired, probed))
        })
        .collect::<Result<Vec<_>>>()?;
    let bounds_ok = results.iter().filter(|r| r.0).count();
    let fired: usize = results.iter().map(|r| r.1).sum();
    let probed: usize = results.iter().map(|r| r.2).sum();
    Ok(outcome(
        fired == 0 && bounds_ok == results.len(),
        format!(
            "{probed} out-of-cone probes, {fired} fired; cardinality bounds hold on {bounds_ok}/{} circuits",
            results.len()
        ),
        vec![("probes", probed as f64), ("fired", fired as f64), ("bounds_ok", bounds_ok as f64)],
    ))
}

fn a3(seed: u64) -> Result<Outcome> {
    const FIRST_TOL: f64 = 1e-6;
    const SECOND_TOL: f64 = 1e-5;
    let specs = corpus(seed ^ 0x33, 10)?;
    let results = specs
        .par_iter()
        .enumerate()
        .map(|(c, spec)| {
            let q = Qnn::new(spec.clone())?;
            let mut r = rng::stream(seed, &[tag::ACCEPT, 31, c as u64]);
            let (mut d1, mut d2): (f64, f64) = (0.0, 0.0);
            let p = spec.num_params();
            for _ in 0..10 {
                let (theta, x) = random_point(spec, &mut r);
                let g = grad_parameter_shift(&q, &theta, &x);
                let fd = oracle::fd_gradient(spec, &theta, &x, 1e-5);
                for (a, b) in g.values.iter().zip(&fd) {
                    d1 = d1.max((a - b).abs());
                }
                for _ in 0..4 {
                    let (i, j) = (r.random_range(0..p), r.random_range(0..p));
                    let h = second_derivative(&q, &theta, &x, i, j);
                    let fd = oracle::fd_hessian_entry(spec, &theta, &x, i, j, 1e-4);
                    d2 = d2.max((h - fd).abs());
                }
            }
            Ok((d1, d2))
        })
        .collect::<Result<Vec<_>>>()?;
    let d1 = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let d2 = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(outcome(
        d1 <= FIRST_TOL && d2 <= SECOND_TOL,
        format!("shift vs FD: first {d1:.2e} (tol {FIRST_TOL:.0e}), second {d2:.2e} (tol {SECOND_TOL:.0e})"),
        vec![("first_order", d1), ("second_order", d2)],
    ))
}

/// Default `N_K`: Monte-Carlo mean of `‖∇f‖²` over the given inputs.
pub fn default_nk(qnn: &Qnn, inputs: &[Vec<f64>], samples: usize, seed: u64) -> Result<f64> {
    Ok(analytic_ntk_mc(qnn, inputs, inputs.len(), samples, seed, None)?.matrix.nk)
}

fn a4(seed: u64) -> Result<Outcome> {
    let q = brick_circuit(8, seed)?;
    let data = synthetic_dataset(4, 2, seed)?;
    let probes = probe_inputs(4, 2);
    let theta0 = ParamVector::uniform(&q.spec, &mut rng::stream(seed, &[tag::PARAMS, 4])).values;
    let nk = default_nk(&q, &data.inputs, 64, seed)?;
    let k = gram(&jacobian(&q, &theta0, &data.inputs), nk);
    let (lmin, lmax) = spectrum_bounds(&k);
    let eta0 = 1.0 / (lmin + lmax);
    let lin = LinearizedSolution::new(&q, &theta0, &data.inputs, &data.labels, &probes, eta0, nk)?;

    // Explicit linear GD in parameter space.
    let n = data.len();
    let jx = lin.jac0.rows(0, n).into_owned();
    let y = DVector::from_column_slice(&data.labels);
    let f0x = lin.f0.rows(0, n).into_owned();
    let step = |d: &DVector<f64>, scale: f64| -> DVector<f64> { -(jx.transpose() * (&f0x + &jx * d - &y)) * scale };
    let mut d = DVector::zeros(q.num_params());
    let mut discrete_dev: f64 = 0.0;
    for t in 0..=200u64 {
        let iter = &lin.f0 + &lin.jac0 * &d;
        discrete_dev = discrete_dev.max((iter - lin.discrete(t)).amax());
        d += step(&d, eta0 / nk);
    }

    // RK4 of the linearized flow dΘ/dt = -(η₀/N_K) Jᵀ(F - Y).
    let h = 1e-3;
    let mut d = DVector::zeros(q.num_params());
    let mut continuous_dev: f64 = 0.0;
    let s = eta0 / nk;
    for i in 1..=5000 {
        let k1 = step(&d, s);
        let k2 = step(&(&d + &k1 * (h / 2.0)), s);
        let k3 = step(&(&d + &k2 * (h / 2.0)), s);
        let k4 = step(&(&d + &k3 * h), s);
        d += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if i % 1000 == 0 {
            let ode = &lin.f0 + &lin.jac0 * &d;
            continuous_dev = continuous_dev.max((ode - lin.continuous(i as f64 * h)).amax());
        }
    }

    let resid = (lin.discrete(10_000).rows(0, n) - &y).amax();
    Ok(outcome(
        discrete_dev <= 1e-9 && continuous_dev <= 1e-8 && resid <= 1e-6,
        format!(
            "discrete vs iteration {discrete_dev:.2e} (tol 1e-9), continuous vs RK4 {continuous_dev:.2e} (tol 1e-8), residual at t=1e4 {resid:.2e} (tol 1e-6), cond {:.1}",
            lmax / lmin
        ),
        vec![
            ("discrete_dev", discrete_dev),
            ("continuous_dev", continuous_dev),
            ("residual", resid),
        ],
    ))
}

const LAZY_ETA0: f64 = 0.4;

/// Medians over seeds of sup-displacement, NTK drift and linearization gap.
fn lazy_medians(m: usize, seeds: usize, steps: usize, seed: u64) -> Result<[f64; 3]> {
    let q = brick_circuit(m, seed)?;
    let data = synthetic_dataset(4, 2, seed)?;
    let nk = default_nk(&q, &data.inputs, 64, seed)?;
    let mut cfg = TrainConfig::gd(LAZY_ETA0, steps, nk, seed);
    cfg.diagnostics = true;
    cfg.probes = probe_inputs(DEFAULT_PROBES, 2);
    let traces = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let theta0 = ParamVector::uniform(&q.spec, &mut rng::stream(seed, &[tag::PARAMS, m as u64, s as u64])).values;
            train_gd(&q, &theta0, &data, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok([
        median(traces.iter().map(|t| t.max_displacement()).collect()),
        median(traces.iter().map(|t| t.max_ntk_drift()).collect()),
        median(traces.iter().map(|t| t.max_lin_gap()).collect()),
    ])
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn a5(seed: u64) -> Result<Outcome> {
    let widths = [8usize, 16, 32];
    let meds = widths
        .iter()
        .map(|&m| lazy_medians(m, 10, 100, seed))
        .collect::<Result<Vec<_>>>()?;
    let col = |j: usize| -> Vec<f64> { meds.iter().map(|r| r[j]).collect() };
    let (disp, drift, gap) = (col(0), col(1), col(2));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" > ");
    Ok(outcome(
        non_increasing(&disp) && non_increasing(&drift) && non_increasing(&gap),
        format!(
            "m=8,16,32 medians: displacement {}; NTK drift {}; lin gap {}",
            fmt(&disp),
            fmt(&drift),
            fmt(&gap)
        ),
        vec![
            ("disp_m8", disp[0]),
            ("disp_m16", disp[1]),
            ("disp_m32", disp[2]),
            ("drift_m8", drift[0]),
            ("drift_m16", drift[1]),
            ("drift_m32", drift[2]),
            ("gap_m8", gap[0]),
            ("gap_m16", gap[1]),
            ("gap_m32", gap[2]),
        ],
    ))
}

fn a6(seed: u64) -> Result<Outcome> {
    const TARGET: f64 = 1e-4;
    let q = brick_circuit(16, seed)?;
    let data = synthetic_dataset(4, 2, seed)?;
    let nk = default_nk(&q, &data.inputs, 64, seed)?;
    let theta0 = ParamVector::uniform(&q.spec, &mut rng::stream(seed, &[tag::PARAMS, 6])).values;
    let (lmin, lmax) = spectrum_bounds(&gram(&jacobian(&q, &theta0, &data.inputs), nk));
    let eta0 = 1.0 / (lmin + lmax);
    let gd = train_gd(&q, &theta0, &data, &TrainConfig::gd(eta0, 500, nk, seed))?;
    let final_loss = gd.final_loss();
    let mut cfg = TrainConfig::gd(eta0, 400, nk, seed);
    cfg.mode = TrainMode::Flow;
    let (flow_ok, flow_detail, flow_rise) = match train_flow(&q, &theta0, &data, &cfg) {
        Ok(tr) => {
            let rise = tr.rows.windows(2).map(|w| w[1].loss - w[0].loss).fold(f64::NEG_INFINITY, f64::max);
            (
                rise <= FLOW_TOLERANCE,
                format!("flow monotone over {} RK4 steps (max rise {rise:.1e})", cfg.steps),
                rise,
            )
        }
        Err(e) => (false, format!("flow rejected: {e}"), f64::NAN),
    };
    Ok(outcome(
        final_loss <= TARGET && flow_ok,
        format!("GD loss after 500 steps {final_loss:.2e} (target {TARGET:.0e}, eta0 {eta0:.3}); {flow_detail}"),
        vec![("final_loss", final_loss), ("eta0", eta0), ("flow_max_rise", flow_rise)],
    ))
}

fn a7(seed: u64) -> Result<Outcome> {
    let spec = FamilyParams::new(Family::Pathological, 8, 21, 0).build()?;
    let q = Qnn::new(spec)?;
    let ens = sample_init_ensemble(&q, &[vec![]], 10_000, seed, InitLaw::Pathological)?;
    let v = &ens.values[0];
    let support_ok = v.iter().all(|x| (x.abs() - 1.0).abs() < 1e-9);
    let p_plus = v.iter().filter(|x| **x > 0.0).count() as f64 / v.len() as f64;
    let ks_p = normality_tests(&ens)?.per_probe[0].ks_p;
    Ok(outcome(
        support_ok && (0.48..=0.52).contains(&p_plus) && ks_p < 1e-6,
        format!("support {{-1,+1}}: {support_ok}, P(+1) = {p_plus:.4}, KS p = {ks_p:.1e}"),
        vec![("p_plus", p_plus), ("ks_p", ks_p)],
    ))
}

fn a8(seed: u64) -> Result<Outcome> {
    const ALPHA: f64 = 0.01;
    const MAX_REJECTION: f64 = 0.2;
    let widths = [8usize, 16, 32, 64];
    let probes = probe_inputs(5, 2);
    let mut kurt = Vec::new();
    let mut rates = Vec::new();
    for &m in &widths {
        let q = brick_circuit(m, seed)?;
        let ens = sample_init_ensemble(&q, &probes, 10_000, rng::derive_seed(seed, &[m as u64]), InitLaw::Uniform)?;
        let c = cumulants(&ens, 4)?;
        kurt.push(median(c.iter().map(|p| p.excess_kurtosis.abs()).collect()));
        rates.push(normality_tests(&ens)?.rejection_rate(ALPHA));
    }
    let last = *rates.last().expect("non-empty");
    Ok(outcome(
        non_increasing(&kurt) && last <= MAX_REJECTION,
        format!(
            "median |excess kurtosis| m=8,16,32,64: {}; rejection rate at alpha=0.01: {}",
            kurt.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", "),
            rates.iter().map(|x| format!("{x:.1}")).collect::<Vec<_>>().join(", ")
        ),
        vec![
            ("kurt_m8", kurt[0]),
            ("kurt_m16", kurt[1]),
            ("kurt_m32", kurt[2]),
            ("kurt_m64", kurt[3]),
            ("reject_m64", last),
        ],
    ))
}

fn a9(seed: u64) -> Result<Outcome> {
    let circuits = [
        (Family::Brick1d, 8, 2),
        (Family::Brick1d, 12, 3),
        (Family::Lattice2d, 9, 2),
        (Family::RandomPairing, 10, 2),
        (Family::RandomPairing, 8, 3),
    ];
    let inputs = probe_inputs(3, 2);
    let mut ok = 0;
    let mut worst_z = f64::INFINITY;
    for (c, &(family, m, l)) in circuits.iter().enumerate() {
        let spec = FamilyParams::new(family, m, l, seed ^ c as u64).with_input_dim(2).build()?;
        let q = Qnn::new(spec.append_mean_zero_layer())?;
        let a = analytic_ntk_mc(&q, &inputs, inputs.len(), 2000, rng::derive_seed(seed, &[9, c as u64]), None)?;
        for s in &a.sandwich {
            if s.holds(3.0) {
                ok += 1;
            }
            worst_z = worst_z
                .min(s.lower_gap / s.lower_gap_se.max(f64::MIN_POSITIVE))
                .min(s.upper_gap / s.upper_gap_se.max(f64::MIN_POSITIVE));
        }
    }
    let total = circuits.len() * inputs.len();
    Ok(outcome(
        ok == total,
        format!("{ok}/{total} (circuit, input) pairs inside the sandwich within 3 SE; smallest gap z = {worst_z:.2}"),
        vec![("inside", ok as f64), ("min_gap_z", worst_z)],
    ))
}

fn a10(seed: u64) -> Result<Outcome> {
    const SEEDS: usize = 20;
    let q = brick_circuit(16, seed)?;
    let data = synthetic_dataset(4, 2, seed)?;
    let nk = default_nk(&q, &data.inputs, 64, seed)?;
    let mut cfg = TrainConfig::gd(LAZY_ETA0, 100, nk, seed);
    cfg.delta = 0.2;
    cfg.schedule = VarianceSchedule::Gaussian;
    let runs = (0..SEEDS)
        .into_par_iter()
        .map(|s| {
            let theta0 = ParamVector::uniform(&q.spec, &mut rng::stream(seed, &[tag::PARAMS, 10, s as u64])).values;
            let det = train_gd(&q, &theta0, &data, &cfg)?;
            let mut noisy_cfg = cfg.clone();
            noisy_cfg.seed = rng::derive_seed(seed, &[s as u64]);
            noisy_cfg.noise = NoiseModel::Synthetic { scale: 1.0 };
            let noisy = train_noisy_gd(&q, &theta0, &data, &noisy_cfg)?;
            noisy_cfg.noise = NoiseModel::Synthetic { scale: 0.0 };
            let zero = train_noisy_gd(&q, &theta0, &data, &noisy_cfg)?;
            let exact = zero.theta_final == det.theta_final
                && zero.rows.iter().zip(&det.rows).all(|(a, b)| a.loss.to_bits() == b.loss.to_bits());
            Ok((noisy.final_loss() <= 2.0 * det.final_loss(), exact))
        })
        .collect::<Result<Vec<_>>>()?;
    let good = runs.iter().filter(|r| r.0).count();
    let exact = runs.iter().all(|r| r.1);
    let frac = good as f64 / SEEDS as f64;

    // Shot budget of the schedule at two widths, three steps each.
    let mut budgets = Vec::new();
    let mut capped = false;
    for m in [8usize, 16] {
        let qm = brick_circuit(m, seed)?;
        let mut shot_cfg = cfg.clone();
        shot_cfg.nk = default_nk(&qm, &data.inputs, 64, seed)?;
        shot_cfg.steps = 3;
        shot_cfg.noise = NoiseModel::Shots { fixed: None };
        let theta0 = ParamVector::uniform(&qm.spec, &mut rng::stream(seed, &[tag::PARAMS, 10, m as u64])).values;
        let tr = train_noisy_gd(&qm, &theta0, &data, &shot_cfg)?;
        capped |= tr.shots_capped;
        budgets.push(tr.planned_shots);
    }
    let budget_ok = budgets.iter().all(|b| b.is_finite() && *b > 0.0);
    let exponent = (budgets[1] / budgets[0]).log2();
    Ok(outcome(
        frac >= 0.7 && exact && budget_ok,
        format!(
            "{good}/{SEEDS} noisy runs within 2x deterministic loss; zero-noise bit-exact: {exact}; \
             planned shots for 3 steps {:.2e} (m=8), {:.2e} (m=16), growth m^{exponent:.1}; simulator cap hit: {capped}",
            budgets[0], budgets[1]
        ),
        vec![
            ("fraction_ok", frac),
            ("shot_budget_m8", budgets[0]),
            ("shot_budget_m16", budgets[1]),
            ("budget_exponent", exponent),
        ],
    ))
}

fn a11(seed: u64) -> Result<Outcome> {
    let q = brick_circuit(32, seed)?;
    let data: Dataset = synthetic_dataset(4, 2, seed)?;
    let cfg = GpCheckConfig {
        eta0: LAZY_ETA0,
        steps: 20,
        num_seeds: 200,
        kernel_samples: 400,
        cov_samples: 2000,
        nk: None,
        seed,
    };
    let r = gp_empirical_check(&q, &data, &probe_inputs(2, 2), &cfg)?;
    let z: Vec<f64> = r.z_scores[..r.n_train].to_vec();
    Ok(outcome(
        r.train_within(3.0),
        format!(
            "training-input z-scores {} (|z| <= 3 required); median final loss {:.2e}",
            z.iter().map(|v| format!("{v:+.2}")).collect::<Vec<_>>().join(", "),
            r.final_loss_median
        ),
        vec![("max_abs_z", z.iter().fold(0.0f64, |a, v| a.max(v.abs())))],
    ))
}

/// Helper for callers that want `K̂₀` and its train block spectrum.
pub fn initial_kernel(qnn: &Qnn, theta0: &[f64], inputs: &[Vec<f64>], nk: f64) -> (DMatrix<f64>, f64, f64) {
    let k = gram(&jacobian(qnn, theta0, inputs), nk);
    let (a, b) = spectrum_bounds(&k);
    (k, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_have_names() {
        for id in IDS {
            assert!(name_of(id).is_some());
        }
        assert!(run_criterion("A99", 0).is_err());
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = corpus(5, 5).unwrap();
        let b = corpus(5, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.num_qubits, y.num_qubits);
            assert_eq!(x.layers.len(), y.layers.len());
        }
    }
}
