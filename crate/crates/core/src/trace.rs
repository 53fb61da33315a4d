//! The weighted eigenvalue trace
//!
//! ```text
//! 𝒯(ω) = Tr(H 1_I(H)) / Tr(1_I(H))
//! ```
//!
//! over a scaled window `I = E + L^{-d}·[a, b]`, i.e. the mean of the `k`
//! eigenvalues in the window counted with multiplicity. Its ω-gradient is
//! `∂ₛ𝒯 = (1/k) Σ_φ ‖Pₛ φ‖²` over an orthonormal basis of the in-window
//! eigenspace, which is basis independent, entrywise non-negative and sums to
//! one because the `Pₛ` partition the identity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DisorderSpec, LatticeModel, PerturbationScheme, SchemeKind};
use crate::process::fit_power_law;
use crate::seed;
use crate::spectral::{decompose_symmetric, EnergyWindow, ScaledInterval, SpectralData};

#[derive(Debug, Clone)]
pub struct WeightedTraceReport {
    pub value: f64,
    pub count: usize,
    pub gradient: Vec<f64>,
    pub interval: ScaledInterval,
    /// `‖Pₛ φⱼ‖²`, one row per variable `s`, one column per in-window eigenvector.
    pub occupations: DMatrix<f64>,
}

impl WeightedTraceReport {
    pub fn gradient_l1(&self) -> f64 {
        self.gradient.iter().map(|g| g.abs()).sum()
    }
}

pub fn weighted_trace(
    spec: &SpectralData,
    scheme: &PerturbationScheme,
    iv: &ScaledInterval,
) -> Result<WeightedTraceReport> {
    let vectors = spec.eigenvectors.as_ref().ok_or(Error::MissingEigenvectors)?;
    if vectors.nrows() != scheme.matrix_dim() {
        return Err(Error::InvalidArgument(format!(
            "eigenvectors have length {} but the scheme acts on dimension {}",
            vectors.nrows(),
            scheme.matrix_dim()
        )));
    }
    let window = iv.window();
    let range = spec.indices_in(&window);
    let count = range.len();
    if count == 0 {
        return Err(Error::EmptyWindow {
            lo: window.lo,
            hi: window.hi,
        });
    }
    let value = spec.eigenvalues[range.clone()].iter().sum::<f64>() / count as f64;
    let mut occupations = DMatrix::zeros(scheme.len(), count);
    for (col, index) in range.enumerate() {
        let v = vectors.column(index);
        for (s, support) in scheme.supports().iter().enumerate() {
            occupations[(s, col)] = support.iter().map(|&k| v[k] * v[k]).sum();
        }
    }
    let gradient = occupations
        .row_iter()
        .map(|row| row.sum() / count as f64)
        .collect();
    Ok(WeightedTraceReport {
        value,
        count,
        gradient,
        interval: *iv,
        occupations,
    })
}

/// Spectrum of `H(ω)` for a model.
fn spectrum(model: &LatticeModel, omega: &[f64], want_vectors: bool) -> Result<SpectralData> {
    let h = model.hamiltonian(omega)?;
    crate::spectral::eigendecompose(&h, want_vectors)
}

fn mean_in(spec: &SpectralData, window: &EnergyWindow) -> (f64, usize) {
    let r = spec.indices_in(window);
    let k = r.len();
    (spec.eigenvalues[r].iter().sum::<f64>() / k.max(1) as f64, k)
}

/// Refuses windows with an eigenvalue closer than `margin` to an endpoint.
fn require_margin(spec: &SpectralData, window: &EnergyWindow, margin: f64) -> Result<()> {
    for &lambda in &spec.eigenvalues {
        let d = (lambda - window.lo).abs().min((lambda - window.hi).abs());
        if d < margin {
            return Err(Error::UnstableWindow(format!(
                "eigenvalue {lambda} lies within {margin:e} of window [{}, {}]",
                window.lo, window.hi
            )));
        }
    }
    Ok(())
}

fn require_count(spec: &SpectralData, window: &EnergyWindow, expected: usize, s: usize) -> Result<()> {
    let k = spec.count_in(window);
    if k != expected {
        return Err(Error::UnstableWindow(format!(
            "window count changed from {expected} to {k} when perturbing variable {s}"
        )));
    }
    Ok(())
}

fn perturbed(omega: &[f64], s: usize, delta: f64) -> Vec<f64> {
    let mut w = omega.to_vec();
    w[s] += delta;
    w
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `max_s |numeric_s - analytic_s| / max_s |analytic_s|`.
    pub max_relative_error: f64,
}

/// Compares the analytic gradient of 𝒯 with central differences of step `step`.
///
/// Every projector has norm one, so each eigenvalue moves by at most `step`
/// under a coordinate perturbation; windows with an eigenvalue within
/// `10·step` of an endpoint are refused.
pub fn gradient_fd_check(
    model: &LatticeModel,
    omega: &[f64],
    iv: &ScaledInterval,
    step: f64,
) -> Result<GradientCheck> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let window = iv.window();
    let base = spectrum(model, omega, true)?;
    let report = weighted_trace(&base, model.scheme(), iv)?;
    require_margin(&base, &window, 10.0 * step)?;
    let mut numeric = Vec::with_capacity(omega.len());
    for s in 0..omega.len() {
        let plus = spectrum(model, &perturbed(omega, s, step), false)?;
        let minus = spectrum(model, &perturbed(omega, s, -step), false)?;
        require_count(&plus, &window, report.count, s)?;
        require_count(&minus, &window, report.count, s)?;
        let (tp, _) = mean_in(&plus, &window);
        let (tm, _) = mean_in(&minus, &window);
        numeric.push((tp - tm) / (2.0 * step));
    }
    let scale = report.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let max_relative_error = numeric
        .iter()
        .zip(&report.gradient)
        .map(|(n, a)| (n - a).abs())
        .fold(0.0f64, f64::max)
        / scale;
    Ok(GradientCheck {
        analytic: report.gradient,
        numeric,
        max_relative_error,
    })
}

/// `|ω·∇𝒯 − (𝒯 − (1/k) Σ ⟨φ, Δφ⟩)|` over the in-window eigenvectors.
pub fn euler_identity_residual(model: &LatticeModel, omega: &[f64], iv: &ScaledInterval) -> Result<f64> {
    let spec = spectrum(model, omega, true)?;
    let report = weighted_trace(&spec, model.scheme(), iv)?;
    let vectors = spec.eigenvectors.as_ref().expect("requested");
    let lap = model.hopping();
    let hopping_mean = spec
        .indices_in(&iv.window())
        .map(|j| {
            let v = vectors.column(j);
            v.dot(&(lap * v))
        })
        .sum::<f64>()
        / report.count as f64;
    let directional: f64 = omega.iter().zip(&report.gradient).map(|(w, g)| w * g).sum();
    Ok((directional - (report.value - hopping_mean)).abs())
}

/// `u_i v_j − u_j v_i`.
pub fn pair_determinant(u: &[f64], v: &[f64], i: usize, j: usize) -> f64 {
    u[i] * v[j] - u[j] * v[i]
}

/// `max_{i≠j} |u_i v_j − u_j v_i|`.
pub fn max_pair_determinant(u: &[f64], v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            best = best.max(pair_determinant(u, v, i, j).abs());
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub i: usize,
    pub j: usize,
    /// `∂ᵢ𝒯 ∂ⱼ𝒯′ − ∂ⱼ𝒯 ∂ᵢ𝒯′`.
    pub determinant: f64,
    /// `(∂ᵢ𝒯, ∂ⱼ𝒯)`.
    pub first: (f64, f64),
    /// `(∂ᵢ𝒯′, ∂ⱼ𝒯′)`.
    pub second: (f64, f64),
    pub max_abs: f64,
}

/// Jacobian determinant of `(ωᵢ, ωⱼ) ↦ (𝒯, 𝒯′)` for two windows of one realization.
pub fn jacobian_pair(
    first: &WeightedTraceReport,
    second: &WeightedTraceReport,
    i: usize,
    j: usize,
) -> Result<JacobianReport> {
    let (u, v) = (&first.gradient, &second.gradient);
    if u.len() != v.len() {
        return Err(Error::InvalidArgument(format!(
            "gradients have different lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    if i == j {
        return Err(Error::InvalidArgument(format!("Jacobian needs distinct sites, got i = j = {i}")));
    }
    if i >= u.len() || j >= u.len() {
        return Err(Error::InvalidArgument(format!(
            "site pair ({i}, {j}) out of range for {} variables",
            u.len()
        )));
    }
    Ok(JacobianReport {
        i,
        j,
        determinant: pair_determinant(u, v, i, j),
        first: (u[i], u[j]),
        second: (v[i], v[j]),
        max_abs: max_pair_determinant(u, v),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinorCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// `max_{j≠k} (u_j v_k − u_k v_j)² ≥ ‖u − v‖₁² / (4 n⁵)` for probability vectors.
pub fn minor_inequality_check(u: &[f64], v: &[f64]) -> Result<MinorCheck> {
    let n = u.len();
    if v.len() != n {
        return Err(Error::InvalidArgument(format!(
            "u has {n} entries but v has {}",
            v.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2, got {n}")));
    }
    for (name, x) in [("u", u), ("v", v)] {
        if x.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be entrywise non-negative")));
        }
        let total: f64 = x.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "{name} must have l1 norm 1, got {total}"
            )));
        }
    }
    let lhs = max_pair_determinant(u, v).powi(2);
    let l1: f64 = u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum();
    let rhs = l1 * l1 / (4.0 * (n as f64).powi(5));
    Ok(MinorCheck {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

/// `‖∇𝒯 − ∇𝒯′‖₁`.
pub fn gradient_gap_l1(first: &WeightedTraceReport, second: &WeightedTraceReport) -> f64 {
    first
        .gradient
        .iter()
        .zip(&second.gradient)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// `max_{i≠j} J_ij² ≥ (2³/n⁵)·‖∇𝒯 − ∇𝒯′‖₁²` with `n` the number of variables.
pub fn chained_jacobian_bound(
    first: &WeightedTraceReport,
    second: &WeightedTraceReport,
) -> Result<MinorCheck> {
    let n = first.gradient.len();
    if second.gradient.len() != n || n < 2 {
        return Err(Error::InvalidArgument(
            "need two gradients of equal length >= 2".into(),
        ));
    }
    let lhs = max_pair_determinant(&first.gradient, &second.gradient).powi(2);
    let gap = gradient_gap_l1(first, second);
    let rhs = 8.0 / (n as f64).powi(5) * gap * gap;
    Ok(MinorCheck {
        lhs,
        rhs,
        holds: lhs >= rhs,
    })
}

/// Hessian of 𝒯 by central differences of the analytic gradient.
/// Entry `(i, j)` is `∂ⱼ𝒯(ω + h eᵢ) − ∂ⱼ𝒯(ω − h eᵢ)` over `2h`.
pub fn hessian_fd(
    model: &LatticeModel,
    omega: &[f64],
    iv: &ScaledInterval,
    step: f64,
) -> Result<DMatrix<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let window = iv.window();
    let base = spectrum(model, omega, false)?;
    let count = base.count_in(&window);
    if count == 0 {
        return Err(Error::EmptyWindow {
            lo: window.lo,
            hi: window.hi,
        });
    }
    require_margin(&base, &window, 10.0 * step)?;
    let n = omega.len();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let plus = spectrum(model, &perturbed(omega, i, step), true)?;
        let minus = spectrum(model, &perturbed(omega, i, -step), true)?;
        require_count(&plus, &window, count, i)?;
        require_count(&minus, &window, count, i)?;
        let gp = weighted_trace(&plus, model.scheme(), iv)?.gradient;
        let gm = weighted_trace(&minus, model.scheme(), iv)?.gradient;
        for j in 0..n {
            hess[(i, j)] = (gp[j] - gm[j]) / (2.0 * step);
        }
    }
    Ok(hess)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianProbeConfig {
    pub dim: usize,
    pub scales: Vec<u64>,
    /// Cube half-side is `⌈L^α⌉`.
    pub alpha: f64,
    pub scheme: SchemeKind,
    pub disorder: DisorderSpec,
    pub center: f64,
    pub base: (f64, f64),
    /// Accepted realizations per scale.
    pub probes: usize,
    /// Realizations tried per scale before giving up.
    pub max_attempts: usize,
    pub cap: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianProbeRow {
    pub scale: u64,
    pub ell: usize,
    pub accepted: usize,
    pub attempts: usize,
    /// Median over accepted realizations of `max_{ij} |Hess_ij|`.
    pub median_max_entry: f64,
    /// Largest `|H_ij − H_ji| / max|H|` seen.
    pub max_asymmetry: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianProbe {
    pub rows: Vec<HessianProbeRow>,
    /// Slope of `ln(median max entry)` against `ln L`.
    pub fitted_slope: Option<f64>,
    /// `3dα − 2d`.
    pub envelope_slope: f64,
}

/// Hessian magnitude of 𝒯 on cubes of half-side `⌈L^α⌉` as `L` grows.
///
/// For each `L`, realizations are drawn until `probes` of them have a
/// nonempty window whose eigenvalues all stay `10h` away from the endpoints,
/// with `h = 1e-4·K`.
pub fn hessian_scaling_probe(cfg: &HessianProbeConfig) -> Result<HessianProbe> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 2.0 / 3.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 2/3), got {}",
            cfg.alpha
        )));
    }
    if cfg.probes == 0 {
        return Err(Error::InvalidArgument("probes must be positive".into()));
    }
    let strength = cfg.disorder.strength();
    if strength <= 0.0 {
        return Err(Error::InvalidArgument("Hessian probe needs K > 0".into()));
    }
    let step = 1e-4 * strength;
    let mut rows = Vec::with_capacity(cfg.scales.len());
    for &scale in &cfg.scales {
        let ell = ((scale as f64).powf(cfg.alpha).ceil() as usize).max(1);
        let model = LatticeModel::for_half_side(cfg.dim, ell, cfg.scheme, cfg.cap)?;
        let disorder = cfg.disorder.reseeded(seed::level_seed(cfg.disorder.base_seed(), scale));
        let iv = ScaledInterval::new(cfg.center, cfg.base, scale, cfg.dim)?;
        let window = iv.window();
        let mut maxima = Vec::with_capacity(cfg.probes);
        let mut asym = 0.0f64;
        let mut attempts = 0;
        while maxima.len() < cfg.probes && attempts < cfg.max_attempts {
            let r = attempts as u64;
            attempts += 1;
            let omega = crate::lattice::sample_disorder(&disorder, r, model.scheme());
            let h = model.hamiltonian(&omega)?;
            let (values, _) = decompose_symmetric(&h.matrix, false)?;
            let spec = SpectralData::from_eigenvalues(values);
            if spec.count_in(&window) == 0 || require_margin(&spec, &window, 10.0 * step).is_err() {
                continue;
            }
            let hess = match hessian_fd(&model, &omega, &iv, step) {
                Ok(hess) => hess,
                Err(Error::UnstableWindow(_)) => continue,
                Err(e) => return Err(e),
            };
            let max_entry = hess.amax();
            if max_entry > 0.0 {
                asym = asym.max((&hess - hess.transpose()).amax() / max_entry);
            }
            maxima.push(max_entry);
        }
        maxima.sort_by(f64::total_cmp);
        let median = if maxima.is_empty() {
            f64::NAN
        } else {
            maxima[maxima.len() / 2]
        };
        rows.push(HessianProbeRow {
            scale,
            ell,
            accepted: maxima.len(),
            attempts,
            median_max_entry: median,
            max_asymmetry: asym,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.scale as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_max_entry).collect();
    let d = cfg.dim as f64;
    Ok(HessianProbe {
        fitted_slope: fit_power_law(&xs, &ys).map(|f| f.slope),
        rows,
        envelope_slope: 3.0 * d * cfg.alpha - 2.0 * d,
    })
}
