//! Training phase: fit true/false-positive probe distributions, locate where the
//! densities cross, and turn each informative probe into an axiom.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{Label, ProbeId, ProbeRecord, ProbeVector};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gaussian,
    Histogram,
    /// Gaussian unless the sample's excess kurtosis exceeds 2 in magnitude.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GaussianComponent<T: Scalar> {
    pub weight: T,
    pub mean: T,
    pub std: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "kind", rename_all = "snake_case")]
pub enum DistributionModel<T: Scalar> {
    Gaussian { mean: T, std: T },
    Mixture { components: Vec<GaussianComponent<T>> },
    Histogram { edges: Vec<T>, densities: Vec<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ProbeDistribution<T: Scalar> {
    pub probe: ProbeId,
    pub model: DistributionModel<T>,
    pub sample_count: usize,
    /// Observed sample range; crossings are searched inside the union of both supports.
    pub support: (T, T),
}

/// Quadrature panels for gaussian mass. Even, as Simpson's rule requires.
const SIMPSON_PANELS: usize = 4096;
/// Gaussian tails beyond this many standard deviations are treated as empty.
const TAIL_SIGMAS: f64 = 12.0;
const CROSSING_GRID: usize = 512;

fn gaussian_pdf<T: Scalar>(x: T, mean: T, std: T) -> T {
    let z = (x - mean) / std;
    (-(z * z) / T::lit(2.0)).exp() / (std * T::TAU().sqrt())
}

fn gaussian_ln_pdf<T: Scalar>(x: T, mean: T, std: T) -> T {
    let z = (x - mean) / std;
    -(z * z) / T::lit(2.0) - std.ln() - T::TAU().sqrt().ln()
}

/// Composite Simpson integral of the gaussian pdf over `[a, b]`.
fn gaussian_mass<T: Scalar>(mean: T, std: T, a: T, b: T) -> T {
    let tail = T::lit(TAIL_SIGMAS) * std;
    let lo = a.max(mean - tail);
    let hi = b.min(mean + tail);
    if !(hi > lo) {
        return T::zero();
    }
    let n = SIMPSON_PANELS;
    let h = (hi - lo) / T::from_count(n);
    let mut acc = gaussian_pdf(lo, mean, std) + gaussian_pdf(hi, mean, std);
    for i in 1..n {
        let w = if i % 2 == 1 { T::lit(4.0) } else { T::lit(2.0) };
        acc += w * gaussian_pdf(lo + h * T::from_count(i), mean, std);
    }
    (acc * h / T::lit(3.0)).min(T::one())
}

impl<T: Scalar> ProbeDistribution<T> {
    /// Analytic gaussian with a `±6σ` support.
    pub fn gaussian(probe: ProbeId, mean: T, std: T) -> Self {
        let six = T::lit(6.0) * std;
        Self {
            probe,
            model: DistributionModel::Gaussian { mean, std },
            sample_count: 0,
            support: (mean - six, mean + six),
        }
    }

    /// Analytic mixture; weights are normalized. Support spans `±6σ` around every component.
    pub fn mixture(probe: ProbeId, components: Vec<GaussianComponent<T>>) -> Self {
        let total: T = components.iter().map(|c| c.weight).sum();
        let six = T::lit(6.0);
        let lo = components.iter().map(|c| c.mean - six * c.std).fold(T::infinity(), T::min);
        let hi = components.iter().map(|c| c.mean + six * c.std).fold(T::neg_infinity(), T::max);
        let components = components
            .into_iter()
            .map(|c| GaussianComponent {
                weight: c.weight / total,
                ..c
            })
            .collect();
        Self {
            probe,
            model: DistributionModel::Mixture { components },
            sample_count: 0,
            support: (lo, hi),
        }
    }

    pub fn density(&self, x: T) -> T {
        match &self.model {
            DistributionModel::Gaussian { mean, std } => gaussian_pdf(x, *mean, *std),
            DistributionModel::Mixture { components } => components
                .iter()
                .map(|c| c.weight * gaussian_pdf(x, c.mean, c.std))
                .sum(),
            DistributionModel::Histogram { edges, densities } => {
                let last = *edges.last().expect("histogram has edges");
                if x < edges[0] || x > last {
                    return T::zero();
                }
                if x == last {
                    return *densities.last().expect("histogram has bins");
                }
                let i = edges.partition_point(|e| *e <= x) - 1;
                densities[i]
            }
        }
    }

    pub fn ln_density(&self, x: T) -> T {
        match &self.model {
            DistributionModel::Gaussian { mean, std } => gaussian_ln_pdf(x, *mean, *std),
            DistributionModel::Mixture { components } => {
                let terms: Vec<T> = components
                    .iter()
                    .map(|c| c.weight.ln() + gaussian_ln_pdf(x, c.mean, c.std))
                    .collect();
                let peak = terms.iter().copied().fold(T::neg_infinity(), T::max);
                if peak == T::neg_infinity() {
                    return peak;
                }
                peak + terms.iter().map(|t| (*t - peak).exp()).sum::<T>().ln()
            }
            DistributionModel::Histogram { .. } => self.density(x).ln(),
        }
    }

    /// Probability mass in `[a, b]`; either end may be infinite.
    pub fn mass(&self, a: T, b: T) -> T {
        if !(b > a) {
            return T::zero();
        }
        match &self.model {
            DistributionModel::Gaussian { mean, std } => gaussian_mass(*mean, *std, a, b),
            DistributionModel::Mixture { components } => components
                .iter()
                .map(|c| c.weight * gaussian_mass(c.mean, c.std, a, b))
                .sum::<T>()
                .min(T::one()),
            DistributionModel::Histogram { edges, densities } => {
                let mut m = T::zero();
                for (i, d) in densities.iter().enumerate() {
                    let lo = edges[i].max(a);
                    let hi = edges[i + 1].min(b);
                    if hi > lo {
                        m += *d * (hi - lo);
                    }
                }
                m.min(T::one())
            }
        }
    }

    /// Location of the highest density.
    pub fn mode(&self) -> T {
        match &self.model {
            DistributionModel::Gaussian { mean, .. } => *mean,
            DistributionModel::Mixture { components } => components
                .iter()
                .map(|c| c.mean)
                .max_by(|a, b| {
                    self.density(*a)
                        .partial_cmp(&self.density(*b))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("mixture has components"),
            DistributionModel::Histogram { edges, densities } => {
                let mut best = 0;
                for (i, d) in densities.iter().enumerate() {
                    if *d > densities[best] {
                        best = i;
                    }
                }
                (edges[best] + edges[best + 1]) / T::lit(2.0)
            }
        }
    }

    pub fn mean(&self) -> T {
        match &self.model {
            DistributionModel::Gaussian { mean, .. } => *mean,
            DistributionModel::Mixture { components } => components.iter().map(|c| c.weight * c.mean).sum(),
            DistributionModel::Histogram { edges, densities } => densities
                .iter()
                .enumerate()
                .map(|(i, d)| *d * (edges[i + 1] - edges[i]) * (edges[i] + edges[i + 1]) / T::lit(2.0))
                .sum(),
        }
    }

    pub fn std(&self) -> T {
        match &self.model {
            DistributionModel::Gaussian { std, .. } => *std,
            DistributionModel::Mixture { components } => {
                let mu = self.mean();
                components
                    .iter()
                    .map(|c| c.weight * (c.std * c.std + (c.mean - mu) * (c.mean - mu)))
                    .sum::<T>()
                    .sqrt()
            }
            DistributionModel::Histogram { edges, densities } => {
                let mu = self.mean();
                densities
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        let (lo, hi) = (edges[i], edges[i + 1]);
                        let c = (lo + hi) / T::lit(2.0);
                        let w = hi - lo;
                        *d * w * ((c - mu) * (c - mu) + w * w / T::lit(12.0))
                    })
                    .sum::<T>()
                    .sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub kind: ModelKind,
    pub min_samples: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            kind: ModelKind::Auto,
            min_samples: 30,
        }
    }
}

fn calib_err(probe: ProbeId, reason: impl Into<String>) -> Error {
    Error::Calibration {
        probe,
        reason: reason.into(),
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile<T: Scalar>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = T::lit(pos - i as f64);
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (sorted[i + 1] - sorted[i]) * frac
}

const MAX_HISTOGRAM_BINS: usize = 512;

fn fit_histogram<T: Scalar>(sorted: &[T], std: T) -> (Vec<T>, Vec<T>) {
    let n = sorted.len();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let cbrt_n = T::from_count(n).cbrt();
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    // Freedman-Diaconis, Scott's rule when the IQR collapses
    let mut width = T::lit(2.0) * iqr / cbrt_n;
    if !(width > T::zero()) {
        width = T::lit(3.49) * std / cbrt_n;
    }
    let bins = ((hi - lo) / width)
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .clamp(1, MAX_HISTOGRAM_BINS);
    let width = (hi - lo) / T::from_count(bins);
    let edges: Vec<T> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * T::from_count(i) })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in sorted {
        let i = ((v - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1);
        counts[i] += 1;
    }
    let total = T::from_count(n);
    let densities = counts
        .iter()
        .enumerate()
        .map(|(i, c)| T::from_count(*c) / (total * (edges[i + 1] - edges[i])))
        .collect();
    (edges, densities)
}

/// Fits one probe's sample. Gaussian parameters are maximum likelihood (population std).
pub fn fit_distribution<T: Scalar>(
    probe: ProbeId,
    samples: &[T],
    opts: &FitOptions,
) -> Result<ProbeDistribution<T>> {
    if samples.len() < opts.min_samples.max(2) {
        return Err(calib_err(
            probe,
            format!("needs at least {} samples, got {}", opts.min_samples.max(2), samples.len()),
        ));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(calib_err(probe, format!("non-finite sample {bad}")));
    }
    let n = T::from_count(samples.len());
    let mean = samples.iter().copied().sum::<T>() / n;
    let m2 = samples.iter().map(|v| (*v - mean).powi(2)).sum::<T>() / n;
    let std = m2.sqrt();
    if !(std > T::epsilon() * mean.abs().max(T::one())) {
        return Err(calib_err(probe, "zero variance, distribution is degenerate"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let support = (sorted[0], sorted[sorted.len() - 1]);

    let use_histogram = match opts.kind {
        ModelKind::Gaussian => false,
        ModelKind::Histogram => true,
        ModelKind::Auto => {
            let m4 = samples.iter().map(|v| (*v - mean).powi(4)).sum::<T>() / n;
            let excess_kurtosis = m4 / (m2 * m2) - T::lit(3.0);
            excess_kurtosis.abs() > T::lit(2.0)
        }
    };
    let model = if use_histogram {
        let (edges, densities) = fit_histogram(&sorted, std);
        DistributionModel::Histogram { edges, densities }
    } else {
        DistributionModel::Gaussian { mean, std }
    };
    Ok(ProbeDistribution {
        probe,
        model,
        sample_count: samples.len(),
        support,
    })
}

/// Region `[lower, upper]` where the TP density dominates, and its TP mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TpBounds<T: Scalar> {
    pub lower: T,
    pub upper: T,
    pub p_tp: T,
}

fn bisect<T: Scalar>(f: &impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let lo_sign = f(lo) > T::zero();
    for _ in 0..200 {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == T::zero() {
            return mid;
        }
        if (v > T::zero()) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo + (hi - lo) / T::lit(2.0)
}

/// Density crossing points of TP vs FP bracketing the TP mode, searched on a 512-point
/// grid over the union of both supports and refined by bisection.
pub fn intersect_bounds<T: Scalar>(tp: &ProbeDistribution<T>, fp: &ProbeDistribution<T>) -> Result<TpBounds<T>> {
    let probe = tp.probe;
    let lo = tp.support.0.min(fp.support.0);
    let hi = tp.support.1.max(fp.support.1);
    if !(hi > lo) {
        return Err(calib_err(probe, "empty search range"));
    }
    // log-ratio keeps gaussian tails from underflowing to 0 - 0
    let diff = |x: T| {
        let d = tp.ln_density(x) - fp.ln_density(x);
        if d.is_nan() {
            T::zero()
        } else {
            d
        }
    };
    let step = (hi - lo) / T::from_count(CROSSING_GRID - 1);
    let grid: Vec<T> = (0..CROSSING_GRID)
        .map(|i| if i == CROSSING_GRID - 1 { hi } else { lo + step * T::from_count(i) })
        .collect();
    let values: Vec<T> = grid.iter().map(|x| diff(*x)).collect();

    let tol = T::lit(1e-9);
    let informative = grid
        .iter()
        .zip(&values)
        .any(|(x, d)| d.abs() > tol && (tp.density(*x) - fp.density(*x)).abs() > T::zero());
    if !informative {
        return Err(calib_err(probe, "TP and FP densities are identical, probe is uninformative"));
    }

    let mut crossings = Vec::new();
    let mut last: Option<(T, bool)> = None;
    for (x, d) in grid.iter().zip(&values) {
        if *d == T::zero() {
            continue;
        }
        let positive = *d > T::zero();
        if let Some((px, psign)) = last {
            if psign != positive {
                crossings.push(bisect(&diff, px, *x));
            }
        }
        last = Some((*x, positive));
    }

    let region_around = |center: T| {
        let lower = crossings
            .iter()
            .copied()
            .filter(|c| *c < center)
            .fold(T::neg_infinity(), T::max);
        let upper = crossings
            .iter()
            .copied()
            .filter(|c| *c > center)
            .fold(T::infinity(), T::min);
        (lower, upper)
    };

    let mode = tp.mode().max(lo).min(hi);
    let (lower, upper) = if diff(mode) > T::zero() {
        region_around(mode)
    } else {
        // TP never dominates at its own mode: take the TP-dominated region holding the most TP mass
        let mut cuts = vec![T::neg_infinity()];
        cuts.extend(crossings.iter().copied());
        cuts.push(T::infinity());
        let mut best: Option<(T, T, T)> = None;
        for w in cuts.windows(2) {
            let probe_at = match (w[0].is_finite(), w[1].is_finite()) {
                (true, true) => (w[0] + w[1]) / T::lit(2.0),
                (false, true) => (w[1] + lo) / T::lit(2.0),
                (true, false) => (w[0] + hi) / T::lit(2.0),
                (false, false) => mode,
            };
            if diff(probe_at) <= T::zero() {
                continue;
            }
            let m = tp.mass(w[0], w[1]);
            if best.map_or(true, |b| m > b.2) {
                best = Some((w[0], w[1], m));
            }
        }
        let (l, u, _) = best.ok_or_else(|| calib_err(probe, "TP density never exceeds FP density"))?;
        (l, u)
    };
    Ok(TpBounds {
        lower,
        upper,
        p_tp: tp.mass(lower, upper),
    })
}

/// Calibrated constraint `Pr(lower <= probe <= upper) >= p_tp` over a window of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AxiomSpec<T: Scalar> {
    pub probe: ProbeId,
    /// May be `-inf`.
    pub lower: T,
    /// May be `+inf`.
    pub upper: T,
    pub p_tp: T,
    pub window: usize,
    /// Tolerance of the probabilistic predicate; `1 - p_tp` unless overridden.
    pub epsilon: T,
}

impl<T: Scalar> AxiomSpec<T> {
    pub fn new(probe: ProbeId, lower: T, upper: T, p_tp: T, window: usize) -> Self {
        Self {
            probe,
            lower,
            upper,
            p_tp,
            window,
            epsilon: T::one() - p_tp,
        }
    }

    pub fn contains(&self, v: T) -> bool {
        v >= self.lower && v <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LabeledSample<T: Scalar> {
    pub probes: ProbeVector<T>,
    pub label: Label,
}

impl<T: Scalar> LabeledSample<T> {
    pub fn from_record(rec: &ProbeRecord<T>) -> Option<Self> {
        rec.label.map(|label| Self {
            probes: rec.probes,
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub window: usize,
    pub fit: FitOptions,
    pub probes: Vec<ProbeId>,
    /// Per-probe `p_tp` overrides; `epsilon` follows as `1 - p_tp`.
    pub p_tp_override: BTreeMap<ProbeId, f64>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            window: 10,
            fit: FitOptions::default(),
            probes: ProbeId::ALL.to_vec(),
            p_tp_override: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CalibratedProbe<T: Scalar> {
    pub probe: ProbeId,
    pub tp: ProbeDistribution<T>,
    pub fp: ProbeDistribution<T>,
    pub bounds: TpBounds<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedProbe {
    pub probe: ProbeId,
    pub reason: String,
}

/// Axioms plus the fitted distributions behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Calibration<T: Scalar> {
    pub axioms: Vec<AxiomSpec<T>>,
    pub probes: Vec<CalibratedProbe<T>>,
    pub skipped: Vec<SkippedProbe>,
}

impl<T: Scalar> Calibration<T> {
    pub fn probe(&self, id: ProbeId) -> Option<&CalibratedProbe<T>> {
        self.probes.iter().find(|p| p.probe == id)
    }
}

fn calibrate_probe<T: Scalar>(
    probe: ProbeId,
    samples: &[LabeledSample<T>],
    cfg: &CalibrationConfig,
) -> Result<(AxiomSpec<T>, CalibratedProbe<T>)> {
    let values = |label: Label| -> Vec<T> {
        samples
            .iter()
            .filter(|s| s.label == label)
            .filter_map(|s| s.probes.get(probe))
            .collect()
    };
    let (tp_vals, fp_vals) = (values(Label::TruePositive), values(Label::FalsePositive));
    if fp_vals.is_empty() {
        return Err(calib_err(probe, "no false-positive samples"));
    }
    if tp_vals.is_empty() {
        return Err(calib_err(probe, "no true-positive samples"));
    }
    let tp = fit_distribution(probe, &tp_vals, &cfg.fit)?;
    let fp = fit_distribution(probe, &fp_vals, &cfg.fit)?;
    let mut bounds = intersect_bounds(&tp, &fp)?;

    let (lower, upper) = if probe.is_deviation() {
        if !bounds.upper.is_finite() {
            return Err(calib_err(probe, "no upper crossing for a deviation probe"));
        }
        bounds.p_tp = tp.mass(T::neg_infinity(), bounds.upper);
        (T::zero(), bounds.upper)
    } else {
        if !bounds.lower.is_finite() && !bounds.upper.is_finite() {
            return Err(calib_err(probe, "TP density dominates everywhere, no bound"));
        }
        (bounds.lower, bounds.upper)
    };

    let p_tp = match cfg.p_tp_override.get(&probe) {
        Some(p) => T::lit(*p),
        None => bounds.p_tp,
    };
    if !(p_tp > T::zero() && p_tp < T::one()) {
        return Err(calib_err(probe, format!("p_tp {p_tp} outside (0, 1)")));
    }
    let axiom = AxiomSpec::new(probe, lower, upper, p_tp, cfg.window);
    Ok((axiom, CalibratedProbe { probe, tp, fp, bounds }))
}

/// One axiom per probe that calibrates; the rest are skipped with a logged reason.
pub fn build_axiom_set<T: Scalar>(samples: &[LabeledSample<T>], cfg: &CalibrationConfig) -> Result<Calibration<T>> {
    let mut out = Calibration {
        axioms: Vec::new(),
        probes: Vec::new(),
        skipped: Vec::new(),
    };
    for &probe in &cfg.probes {
        match calibrate_probe(probe, samples, cfg) {
            Ok((axiom, fitted)) => {
                out.axioms.push(axiom);
                out.probes.push(fitted);
            }
            Err(e) => {
                let reason = match e {
                    Error::Calibration { reason, .. } => reason,
                    other => other.to_string(),
                };
                log::info!("skipping probe {probe}: {reason}");
                out.skipped.push(SkippedProbe { probe, reason });
            }
        }
    }
    if out.axioms.is_empty() {
        let reasons: Vec<String> = out.skipped.iter().map(|s| format!("{}: {}", s.probe, s.reason)).collect();
        return Err(Error::EmptyAxiomSet(reasons.join("; ")));
    }
    Ok(out)
}
