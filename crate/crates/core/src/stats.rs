//! Initialization ensembles, k-statistics with jackknife errors, dependency
//! graphs, Janson cumulant bounds and normality tests.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::circuit::ParamVector;
use crate::error::{QnnError, Result};
use crate::families::pathological_phase_layer;
use crate::lightcone::LightConeIndex;
use crate::rng::{self, tag};
use crate::sim::Qnn;

pub const MAX_ORDER: usize = 6;

/// Law of the initial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitLaw {
    /// Independent uniform parameters over each period.
    Uniform,
    /// All parameters zero except the phase layer of the pathological
    /// circuit, whose entries are `0` or `π/2` with equal probability.
    Pathological,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleEnsemble {
    pub m: usize,
    pub layers: usize,
    pub normalization: f64,
    pub seed: u64,
    pub probes: Vec<Vec<f64>>,
    /// `values[a][s]` is `f(Θ_s, x_a)`.
    pub values: Vec<Vec<f64>>,
}

impl SampleEnsemble {
    pub fn samples(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// `Σ_k f_k(Θ_s, x_a)` without the normalization.
    pub fn unnormalized(&self, a: usize) -> Vec<f64> {
        self.values[a].iter().map(|v| v * self.normalization).collect()
    }

    /// Largest `|f|` allowed by `|f_k| ≤ 1`.
    pub fn value_bound(&self) -> f64 {
        self.m as f64 / self.normalization + 1e-9
    }

    pub fn within_bound(&self) -> bool {
        let b = self.value_bound();
        self.values.iter().flatten().all(|v| v.abs() <= b)
    }
}

pub fn draw_params<R: Rng + ?Sized>(qnn: &Qnn, law: InitLaw, rng: &mut R) -> Vec<f64> {
    match law {
        InitLaw::Uniform => ParamVector::uniform(&qnn.spec, rng).values,
        InitLaw::Pathological => {
            let m = qnn.m();
            let mut theta = vec![0.0; qnn.num_params()];
            let l = pathological_phase_layer(m);
            for q in 0..m {
                if rng.random::<bool>() {
                    theta[l * m + q] = FRAC_PI_2;
                }
            }
            theta
        }
    }
}

/// Exact model values at `samples` independent initializations; draw `s`
/// uses the stream `(seed, ENSEMBLE, s)`.
pub fn sample_init_ensemble(qnn: &Qnn, probes: &[Vec<f64>], samples: usize, seed: u64, law: InitLaw) -> Result<SampleEnsemble> {
    if samples < 2 || probes.is_empty() {
        return Err(QnnError::Argument("ensemble needs at least 2 samples and one probe".into()));
    }
    let draws: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let theta = draw_params(qnn, law, &mut rng::stream(seed, &[tag::ENSEMBLE, s as u64]));
            probes.iter().map(|x| qnn.eval(&theta, x)).collect()
        })
        .collect();
    let values = (0..probes.len()).map(|a| draws.iter().map(|d| d[a]).collect()).collect();
    Ok(SampleEnsemble {
        m: qnn.m(),
        layers: qnn.spec.num_layers,
        normalization: qnn.normalization(),
        seed,
        probes: probes.to_vec(),
        values,
    })
}

/// Per-observable values `f_k(Θ_s, x)`, indexed `[s][k]`.
pub fn sample_locals(qnn: &Qnn, x: &[f64], samples: usize, seed: u64, law: InitLaw) -> Vec<Vec<f64>> {
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let theta = draw_params(qnn, law, &mut rng::stream(seed, &[tag::ENSEMBLE, s as u64]));
            (0..qnn.m()).map(|k| qnn.eval_local(k, &theta, x)).collect()
        })
        .collect()
}

/// `k_r = Σ coeff · Π S_p / n^{(b)}`: one term per (number of distinct
/// indices `b`, multiset of power-sum orders).
struct KStatTerms {
    terms: Vec<(usize, f64, Vec<usize>)>,
}

fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut cur: Vec<Vec<usize>> = Vec::new();
    fn rec(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            rec(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    rec(0, n, &mut cur, &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn mobius(partition: &[Vec<usize>]) -> f64 {
    partition
        .iter()
        .map(|b| if (b.len() - 1) % 2 == 0 { 1.0 } else { -1.0 } * factorial(b.len() - 1))
        .product()
}

impl KStatTerms {
    fn new(r: usize) -> KStatTerms {
        let mut acc: BTreeMap<(usize, Vec<usize>), f64> = BTreeMap::new();
        // κ_r = Σ_π μ(π) Π_B μ'_{|B|}; each product of moments over distinct
        // indices is estimated by an augmented sum, itself expanded in power
        // sums by Möbius inversion over partitions of the blocks.
        for pi in set_partitions(r) {
            let sizes: Vec<usize> = pi.iter().map(Vec::len).collect();
            let b = sizes.len();
            let outer = if (b - 1).is_multiple_of(2) { 1.0 } else { -1.0 } * factorial(b - 1);
            for sigma in set_partitions(b) {
                let inner = mobius(&sigma);
                let mut mono: Vec<usize> = sigma.iter().map(|c| c.iter().map(|&j| sizes[j]).sum()).collect();
                mono.sort_unstable();
                *acc.entry((b, mono)).or_insert(0.0) += outer * inner;
            }
        }
        KStatTerms {
            terms: acc
                .into_iter()
                .filter(|(_, c)| *c != 0.0)
                .map(|((b, mono), c)| (b, c, mono))
                .collect(),
        }
    }

    fn eval(&self, s: &[f64; MAX_ORDER + 1], n: f64) -> f64 {
        self.terms
            .iter()
            .map(|(b, c, mono)| {
                let falling: f64 = (0..*b).map(|j| n - j as f64).product();
                c * mono.iter().map(|&p| s[p]).product::<f64>() / falling
            })
            .sum()
    }
}

fn kstat_terms(r: usize) -> &'static KStatTerms {
    static CACHE: OnceLock<Vec<KStatTerms>> = OnceLock::new();
    &CACHE.get_or_init(|| (0..=MAX_ORDER).map(|r| KStatTerms::new(r.max(1))).collect())[r]
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CumulantEstimate {
    pub order: usize,
    pub value: f64,
    pub jackknife_se: f64,
}

impl CumulantEstimate {
    pub fn z(&self) -> f64 {
        self.value / self.jackknife_se
    }
}

/// k-statistics `k_1..k_max_order` with delete-one jackknife errors.
pub fn k_statistics(data: &[f64], max_order: usize) -> Result<Vec<CumulantEstimate>> {
    if max_order == 0 || max_order > MAX_ORDER {
        return Err(QnnError::Argument(format!("cumulant order must be in 1..={MAX_ORDER}")));
    }
    let n = data.len();
    if n <= max_order + 1 {
        return Err(QnnError::Argument(format!(
            "order {max_order} needs more than {} samples",
            max_order + 1
        )));
    }
    let nf = n as f64;
    let mean = data.iter().sum::<f64>() / nf;
    let c: Vec<f64> = data.iter().map(|v| v - mean).collect();
    let mut s = [0.0; MAX_ORDER + 1];
    for &v in &c {
        let mut p = 1.0;
        for sp in s.iter_mut() {
            *sp += p;
            p *= v;
        }
    }
    (1..=max_order)
        .map(|r| {
            let terms = kstat_terms(r);
            let full = if r == 1 { mean } else { terms.eval(&s, nf) };
            let loo: Vec<f64> = c
                .iter()
                .map(|&v| {
                    let mut si = s;
                    let mut p = 1.0;
                    for sp in si.iter_mut() {
                        *sp -= p;
                        p *= v;
                    }
                    let k = terms.eval(&si, nf - 1.0);
                    if r == 1 { k + mean } else { k }
                })
                .collect();
            let lbar = loo.iter().sum::<f64>() / nf;
            let var = (nf - 1.0) / nf * loo.iter().map(|v| (v - lbar).powi(2)).sum::<f64>();
            Ok(CumulantEstimate {
                order: r,
                value: full,
                jackknife_se: var.sqrt(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeCumulants {
    pub probe: usize,
    pub cumulants: Vec<CumulantEstimate>,
    pub excess_kurtosis: f64,
}

pub fn cumulants(ens: &SampleEnsemble, max_order: usize) -> Result<Vec<ProbeCumulants>> {
    ens.values
        .iter()
        .enumerate()
        .map(|(a, v)| {
            let cumulants = k_statistics(v, max_order.max(2))?;
            let excess_kurtosis = if max_order >= 4 {
                cumulants[3].value / cumulants[1].value.powi(2)
            } else {
                f64::NAN
            };
            let mut cumulants = cumulants;
            cumulants.truncate(max_order);
            Ok(ProbeCumulants {
                probe: a,
                cumulants,
                excess_kurtosis,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DependencyGraph {
    pub vertices: usize,
    /// Sorted neighbours, excluding the vertex itself.
    pub adjacency: Vec<Vec<usize>>,
    pub max_degree: usize,
    pub degree_bound: usize,
}

impl DependencyGraph {
    pub fn is_symmetric(&self) -> bool {
        self.adjacency
            .iter()
            .enumerate()
            .all(|(k, nb)| nb.iter().all(|&j| self.adjacency[j].binary_search(&k).is_ok()))
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Observables are joined when they share a past-cone parameter.
pub fn build_dependency_graph(lci: &LightConeIndex) -> DependencyGraph {
    let adjacency: Vec<Vec<usize>> = lci
        .dependency_sets
        .iter()
        .enumerate()
        .map(|(k, set)| set.iter().copied().filter(|&j| j != k).collect())
        .collect();
    let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
    let degree_bound = lci.max_future * lci.max_past;
    assert!(max_degree <= degree_bound, "dependency degree {max_degree} exceeds {degree_bound}");
    DependencyGraph {
        vertices: lci.num_qubits,
        adjacency,
        max_degree,
        degree_bound,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JansonReport {
    pub order: usize,
    pub probe: usize,
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    pub margin: f64,
    pub passed: bool,
}

/// `C_r = 2^{r-1} r^{r-2}`.
pub fn janson_constant(r: usize) -> f64 {
    2f64.powi(r as i32 - 1) * (r as f64).powi(r as i32 - 2)
}

/// Compares `|κ̂_r(Σ_k f_k)|` with `C_r m (D+1)^{r-1}` (all `|f_k| ≤ 1`).
pub fn janson_diagnostic(ens: &SampleEnsemble, graph: &DependencyGraph, r: usize) -> Result<Vec<JansonReport>> {
    if r < 2 {
        return Err(QnnError::Argument("Janson diagnostic needs order >= 2".into()));
    }
    let bound = janson_constant(r) * ens.m as f64 * ((graph.max_degree + 1) as f64).powi(r as i32 - 1);
    (0..ens.values.len())
        .map(|a| {
            let k = k_statistics(&ens.unnormalized(a), r)?[r - 1];
            let passed = k.value.abs() <= bound + 4.0 * k.jackknife_se;
            Ok(JansonReport {
                order: r,
                probe: a,
                estimate: k.value,
                se: k.jackknife_se,
                bound,
                margin: bound - k.value.abs(),
                passed,
            })
        })
        .collect()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn mean_sd(data: &[f64]) -> (f64, f64) {
    let n = data.len() as f64;
    let mu = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
    (mu, var.sqrt())
}

/// Standardized, sorted data.
fn standardized(data: &[f64]) -> Option<Vec<f64>> {
    let (mu, sd) = mean_sd(data);
    if !(sd > 0.0) {
        return None;
    }
    let mut z: Vec<f64> = data.iter().map(|v| (v - mu) / sd).collect();
    z.sort_by(f64::total_cmp);
    Some(z)
}

fn ks_statistic(sorted_z: &[f64]) -> f64 {
    let n = sorted_z.len() as f64;
    let nd = std_normal();
    sorted_z
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let c = nd.cdf(z);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

fn stephens_modified(d: f64, n: f64) -> f64 {
    d * (n.sqrt() - 0.01 + 0.85 / n.sqrt())
}

/// Null distribution of the modified statistic, simulated once.
fn lilliefors_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        const REPS: usize = 20_000;
        const N: usize = 200;
        let mut t: Vec<f64> = (0..REPS)
            .into_par_iter()
            .map(|r| {
                let mut g = rng::stream(0, &[tag::CALIB, 0x4c49_4c4c, r as u64]);
                let x: Vec<f64> = (0..N).map(|_| StandardNormal.sample(&mut g)).collect();
                stephens_modified(ks_statistic(&standardized(&x).expect("nondegenerate")), N as f64)
            })
            .collect();
        t.sort_by(f64::total_cmp);
        t
    })
}

/// Lilliefors p-value: Dallal–Wilkinson tail formula below 0.1, simulated
/// null table above.
pub fn lilliefors_p(d: f64, n: usize) -> f64 {
    let nf = n as f64;
    let (dd, ne) = if n > 100 { (d * (nf / 100.0).powf(0.49), 100.0) } else { (d, nf) };
    let dw = (-7.01256 * dd * dd * (ne + 2.78019) + 2.99587 * dd * (ne + 2.78019).sqrt() - 0.122119 + 0.974598 / ne.sqrt()
        + 1.67997 / ne)
        .exp();
    if dw <= 0.1 {
        return dw.max(0.0);
    }
    let table = lilliefors_table();
    let dstar = stephens_modified(d, nf);
    let above = table.len() - table.partition_point(|&v| v < dstar);
    (above as f64 / table.len() as f64).max(0.1)
}

/// Modified Anderson–Darling statistic `A*²` and its p-value.
pub fn anderson_darling(sorted_z: &[f64]) -> (f64, f64) {
    let n = sorted_z.len();
    let nf = n as f64;
    let nd = std_normal();
    let tiny = f64::MIN_POSITIVE;
    let s: f64 = (0..n)
        .map(|i| {
            let lo = nd.cdf(sorted_z[i]).max(tiny).ln();
            let hi = nd.sf(sorted_z[n - 1 - i]).max(tiny).ln();
            (2 * i + 1) as f64 * (lo + hi)
        })
        .sum();
    let a2 = -nf - s / nf;
    let a = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a >= 0.6 {
        (1.2937 - 5.709 * a + 0.0186 * a * a).exp()
    } else if a >= 0.34 {
        (0.9177 - 4.279 * a - 1.38 * a * a).exp()
    } else if a >= 0.2 {
        1.0 - (-8.318 + 42.796 * a - 59.938 * a * a).exp()
    } else {
        1.0 - (-13.436 + 101.14 * a - 223.73 * a * a).exp()
    };
    (a, p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityStats {
    pub probe: usize,
    pub samples: usize,
    pub degenerate: bool,
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub ad_statistic: f64,
    pub ad_p: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl NormalityStats {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.ks_p < alpha
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MardiaPair {
    pub a: usize,
    pub b: usize,
    pub skew_statistic: f64,
    pub skew_p: f64,
    pub kurtosis_z: f64,
    pub kurtosis_p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityReport {
    pub per_probe: Vec<NormalityStats>,
    pub pairs: Vec<MardiaPair>,
}

impl NormalityReport {
    pub fn rejection_rate(&self, alpha: f64) -> f64 {
        let r = self.per_probe.iter().filter(|s| s.rejects(alpha)).count();
        r as f64 / self.per_probe.len() as f64
    }

    pub fn median_abs_excess_kurtosis(&self) -> f64 {
        median(self.per_probe.iter().map(|s| s.excess_kurtosis.abs()).collect())
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

pub fn univariate_normality(data: &[f64], probe: usize) -> Result<NormalityStats> {
    if data.len() < 8 {
        return Err(QnnError::Argument("normality tests need at least 8 samples".into()));
    }
    let n = data.len();
    let Some(z) = standardized(data) else {
        return Ok(NormalityStats {
            probe,
            samples: n,
            degenerate: true,
            ks_statistic: f64::NAN,
            ks_p: 0.0,
            ad_statistic: f64::NAN,
            ad_p: 0.0,
            skewness: f64::NAN,
            excess_kurtosis: f64::NAN,
        });
    };
    let ks = ks_statistic(&z);
    let (ad, ad_p) = anderson_darling(&z);
    let k = k_statistics(data, 4)?;
    Ok(NormalityStats {
        probe,
        samples: n,
        degenerate: false,
        ks_statistic: ks,
        ks_p: lilliefors_p(ks, n),
        ad_statistic: ad,
        ad_p,
        skewness: k[2].value / k[1].value.powf(1.5),
        excess_kurtosis: k[3].value / k[1].value.powi(2),
    })
}

/// Mardia skewness and kurtosis for a bivariate sample.
pub fn mardia_pair(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let n = x.len();
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut s = Matrix2::zeros();
    for i in 0..n {
        let d = Vector2::new(x[i] - mx, y[i] - my);
        s += d * d.transpose();
    }
    s /= nf;
    let l = s.cholesky()?.l();
    let linv = l.try_inverse()?;
    let mut m3 = [0.0; 8];
    let mut b2 = 0.0;
    for i in 0..n {
        let z = linv * Vector2::new(x[i] - mx, y[i] - my);
        for (idx, slot) in m3.iter_mut().enumerate() {
            *slot += z[idx & 1] * z[(idx >> 1) & 1] * z[(idx >> 2) & 1];
        }
        b2 += z.norm_squared().powi(2);
    }
    let b1: f64 = m3.iter().map(|v| (v / nf).powi(2)).sum();
    b2 /= nf;
    let skew = nf * b1 / 6.0;
    let skew_p = 1.0 - ChiSquared::new(4.0).ok()?.cdf(skew);
    let kz = (b2 - 8.0) / (64.0 / nf).sqrt();
    let kp = 2.0 * std_normal().sf(kz.abs());
    Some((skew, skew_p, kz, kp))
}

pub fn normality_tests(ens: &SampleEnsemble) -> Result<NormalityReport> {
    let per_probe = ens
        .values
        .iter()
        .enumerate()
        .map(|(a, v)| univariate_normality(v, a))
        .collect::<Result<Vec<_>>>()?;
    let p = ens.values.len();
    let mut pairs = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            if let Some((skew_statistic, skew_p, kurtosis_z, kurtosis_p)) = mardia_pair(&ens.values[a], &ens.values[b]) {
                pairs.push(MardiaPair {
                    a,
                    b,
                    skew_statistic,
                    skew_p,
                    kurtosis_z,
                    kurtosis_p,
                });
            }
        }
    }
    Ok(NormalityReport { per_probe, pairs })
}

/// Pearson correlation and its approximate standard error `1/√n`.
pub fn correlation(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, sx) = mean_sd(x);
    let (my, sy) = mean_sd(y);
    let c = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
    (c / (sx * sy), 1.0 / n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{product, Family, FamilyParams};
    use proptest::prelude::{prop, prop_assert, proptest, ProptestConfig};

    /// Cumulants from raw moments by the standard recursion.
    fn cumulants_from_moments(mu: &[f64]) -> Vec<f64> {
        let r = mu.len() - 1;
        let mut k = vec![0.0; r + 1];
        for n in 1..=r {
            let mut v = mu[n];
            for j in 1..n {
                v -= binom(n - 1, j - 1) * k[j] * mu[n - j];
            }
            k[n] = v;
        }
        k
    }

    fn binom(n: usize, k: usize) -> f64 {
        (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
    }

    /// Exact expectation of the k-statistic over every sample of size `n`
    /// from the two-point law `P(b) = p, P(a) = 1 - p`.
    fn exact_expectation(n: usize, a: f64, b: f64, p: f64, r: usize) -> f64 {
        (0..1u32 << n)
            .map(|mask| {
                let ones = mask.count_ones() as i32;
                let w = p.powi(ones) * (1.0 - p).powi(n as i32 - ones);
                let x: Vec<f64> = (0..n).map(|i| if mask >> i & 1 == 1 { b } else { a }).collect();
                let k = if ones == 0 || ones as usize == n {
                    if r == 1 { x[0] } else { 0.0 }
                } else {
                    k_statistics(&x, r).unwrap()[r - 1].value
                };
                w * k
            })
            .sum()
    }

    #[test]
    fn kstats_are_unbiased_on_two_point_laws() {
        for &(a, b, p) in &[(-1.0, 1.0, 0.5), (0.0, 1.0, 0.3), (-0.5, 2.0, 0.8)] {
            let mu: Vec<f64> = (0..=MAX_ORDER).map(|j| (1.0 - p) * f64::powi(a, j as i32) + p * f64::powi(b, j as i32)).collect();
            let kappa = cumulants_from_moments(&mu);
            for r in 1..=MAX_ORDER {
                let e = exact_expectation(10, a, b, p, r);
                assert!((e - kappa[r]).abs() < 1e-9 * (1.0 + kappa[r].abs()), "r={r} {e} vs {}", kappa[r]);
            }
        }
    }

    #[test]
    fn low_order_kstats_match_closed_forms() {
        let x = [0.3, -1.2, 2.5, 0.7, 0.1, -0.4, 1.9];
        let n = x.len() as f64;
        let mu = x.iter().sum::<f64>() / n;
        let s2: f64 = x.iter().map(|v| (v - mu).powi(2)).sum();
        let s3: f64 = x.iter().map(|v| (v - mu).powi(3)).sum();
        let k = k_statistics(&x, 3).unwrap();
        assert!((k[0].value - mu).abs() < 1e-14);
        assert!((k[1].value - s2 / (n - 1.0)).abs() < 1e-12);
        assert!((k[2].value - n * s3 / ((n - 1.0) * (n - 2.0))).abs() < 1e-12);
    }

    #[test]
    fn gaussian_cumulants_vanish() {
        let mut g = rng::stream(11, &[1]);
        let x: Vec<f64> = (0..10_000).map(|_| 1.5 + 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut g)).collect();
        let k = k_statistics(&x, 6).unwrap();
        assert!((k[0].value - 1.5).abs() < 4.0 * k[0].jackknife_se);
        assert!((k[1].value - 4.0).abs() < 4.0 * k[1].jackknife_se);
        for e in &k[2..] {
            assert!(e.z().abs() < 4.0, "order {} z={}", e.order, e.z());
        }
    }

    #[test]
    fn null_calibration_of_ks() {
        let ps: Vec<f64> = (0..50)
            .map(|r| {
                let mut g = rng::stream(3, &[r]);
                let x: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut g)).collect();
                univariate_normality(&x, 0).unwrap().ks_p
            })
            .collect();
        let med = median(ps);
        assert!((0.2..=0.8).contains(&med), "median p {med}");
    }

    #[test]
    fn lilliefors_tail_matches_critical_values() {
        // Dallal–Wilkinson tail matches the tabulated 1% point at n = 30.
        let p = lilliefors_p(0.187, 30);
        assert!((p - 0.01).abs() < 0.003, "{p}");
        assert!(lilliefors_p(0.01, 1000) > 0.5);
    }

    #[test]
    fn pathological_ensemble_is_two_point() {
        let spec = FamilyParams::new(Family::Pathological, 6, 15, 0).build().unwrap();
        let q = Qnn::new(spec).unwrap();
        let ens = sample_init_ensemble(&q, &[vec![]], 4000, 5, InitLaw::Pathological).unwrap();
        assert!(ens.values[0].iter().all(|v| (v.abs() - 1.0).abs() < 1e-12));
        let c = &cumulants(&ens, 4).unwrap()[0];
        assert!((c.excess_kurtosis + 2.0).abs() < 0.05);
        let nt = normality_tests(&ens).unwrap();
        assert!(nt.per_probe[0].ks_p < 1e-6);
        let g = build_dependency_graph(&q.lci);
        assert_eq!(g.edge_count(), 6 * 5 / 2);
    }

    #[test]
    fn product_cells_have_variance_half() {
        let q = Qnn::new(product(16, 1, 1)).unwrap();
        let ens = sample_init_ensemble(&q, &[vec![0.3]], 4000, 2, InitLaw::Uniform).unwrap();
        let k = k_statistics(&ens.values[0], 2).unwrap();
        assert!((k[1].value - 0.5).abs() < 4.0 * k[1].jackknife_se);
        assert!(ens.within_bound());
        let g = build_dependency_graph(&q.lci);
        assert_eq!(g.max_degree, 0);
        let j = janson_diagnostic(&ens, &g, 2).unwrap();
        assert!(j[0].passed && (j[0].bound - 32.0).abs() < 1e-12);
    }

    #[test]
    fn brick_graph_degree_is_strictly_below_bound() {
        let spec = FamilyParams::new(Family::Brick1d, 8, 2, 0).build().unwrap();
        let q = Qnn::new(spec).unwrap();
        let g = build_dependency_graph(&q.lci);
        assert!(g.is_symmetric());
        assert!(g.max_degree < g.degree_bound);
    }

    #[test]
    fn non_adjacent_observables_are_uncorrelated() {
        let spec = FamilyParams::new(Family::Brick1d, 8, 2, 1).with_input_dim(1).build().unwrap();
        let q = Qnn::new(spec.append_mean_zero_layer()).unwrap();
        let g = build_dependency_graph(&q.lci);
        let locals = sample_locals(&q, &[0.4], 10_000, 3, InitLaw::Uniform);
        for a in 0..8 {
            for b in a + 1..8 {
                if !g.adjacent(a, b) {
                    let x: Vec<f64> = locals.iter().map(|v| v[a]).collect();
                    let y: Vec<f64> = locals.iter().map(|v| v[b]).collect();
                    let (r, se) = correlation(&x, &y);
                    assert!(r.abs() < 4.0 * se, "({a},{b}) r={r}");
                }
            }
        }
    }

    #[test]
    fn mardia_accepts_gaussian_pairs() {
        let mut g = rng::stream(8, &[2]);
        let x: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut g)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.6 * v + 0.8 * Distribution::<f64>::sample(&StandardNormal, &mut g)).collect();
        let (_, sp, _, kp) = mardia_pair(&x, &y).unwrap();
        assert!(sp > 1e-3 && kp > 1e-3);
        let u: Vec<f64> = (0..5000).map(|_| g.random::<f64>()).collect();
        let (_, _, kz, _) = mardia_pair(&u, &x).unwrap();
        assert!(kz < -5.0);
    }

    #[test]
    fn anderson_darling_flags_uniform_data() {
        let mut g = rng::stream(4, &[0]);
        let u: Vec<f64> = (0..2000).map(|_| g.random::<f64>()).collect();
        let s = univariate_normality(&u, 0).unwrap();
        assert!(s.ad_p < 1e-3 && s.ks_p < 1e-3);
        assert!((s.excess_kurtosis + 1.2).abs() < 0.2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kstats_shift_invariant(xs in prop::collection::vec(-3.0f64..3.0, 10..40), c in -5.0f64..5.0) {
            let a = k_statistics(&xs, 6).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
            let b = k_statistics(&shifted, 6).unwrap();
            prop_assert!((b[0].value - a[0].value - c).abs() < 1e-9);
            for r in 1..6 {
                prop_assert!((a[r].value - b[r].value).abs() < 1e-6 * (1.0 + a[r].value.abs()));
            }
        }

        #[test]
        fn kstats_scale_homogeneous(xs in prop::collection::vec(-3.0f64..3.0, 10..40), s in 0.2f64..3.0) {
            let a = k_statistics(&xs, 6).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|v| v * s).collect();
            let b = k_statistics(&scaled, 6).unwrap();
            for r in 0..6 {
                let want = a[r].value * s.powi(r as i32 + 1);
                prop_assert!((b[r].value - want).abs() < 1e-6 * (1.0 + want.abs()));
            }
        }
    }
}
