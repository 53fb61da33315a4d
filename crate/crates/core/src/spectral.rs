//! Full symmetric eigendecomposition and the spectral quantities built on it:
//! interval counts, multiplicity clustering and localization diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, HamiltonianMatrix, SchemeKind};

mod oracle;

pub use oracle::brute_force_oracle;

/// Where a spectrum came from.
#[derive(Debug, Clone, Default)]
pub struct SpectrumSource {
    pub geometry: Option<BoxGeometry>,
    pub scheme: Option<SchemeKind>,
    pub realization: Option<u64>,
}

/// Eigenvalues in ascending order, and optionally the matching orthonormal
/// eigenvectors as matrix columns.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<DMatrix<f64>>,
    pub source: SpectrumSource,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Wraps a precomputed spectrum; values are sorted.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        Self {
            eigenvalues,
            eigenvectors: None,
            source: SpectrumSource::default(),
        }
    }

    /// Index range of eigenvalues inside the closed window.
    pub fn indices_in(&self, window: &EnergyWindow) -> std::ops::Range<usize> {
        let start = self.eigenvalues.partition_point(|&x| x < window.lo);
        let end = self.eigenvalues.partition_point(|&x| x <= window.hi);
        start..end.max(start)
    }

    pub fn count_in(&self, window: &EnergyWindow) -> usize {
        self.indices_in(window).len()
    }
}

/// A closed energy interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Interval(format!("need finite lo <= hi, got [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// The window `E + L^{-d}·[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledInterval {
    center: f64,
    base: (f64, f64),
    scale: u64,
    dim: usize,
}

impl ScaledInterval {
    /// A zero-width base interval (`a == b`) is allowed and realizes `[E, E]`.
    pub fn new(center: f64, base: (f64, f64), scale: u64, dim: usize) -> Result<Self> {
        let (a, b) = base;
        if !(center.is_finite() && a.is_finite() && b.is_finite()) {
            return Err(Error::Interval("center and base interval must be finite".into()));
        }
        if a > b {
            return Err(Error::Interval(format!("base interval [{a}, {b}] is reversed")));
        }
        if scale == 0 || dim == 0 {
            return Err(Error::Interval("scale L and dimension d must be positive".into()));
        }
        Ok(Self {
            center,
            base,
            scale,
            dim,
        })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn base(&self) -> (f64, f64) {
        self.base
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L^{-d}`.
    pub fn factor(&self) -> f64 {
        (self.scale as f64).powi(-(self.dim as i32))
    }

    pub fn window(&self) -> EnergyWindow {
        let f = self.factor();
        EnergyWindow {
            lo: self.center + self.base.0 * f,
            hi: self.center + self.base.1 * f,
        }
    }

    pub fn width(&self) -> f64 {
        (self.base.1 - self.base.0) * self.factor()
    }

    /// The same base interval and center at another scale.
    pub fn at_scale(&self, scale: u64) -> Result<Self> {
        Self::new(self.center, self.base, scale, self.dim)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    for col in 0..n {
        for row in 0..n {
            let x = m[(row, col)];
            if !x.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            if row < col && x != m[(col, row)] {
                return Err(Error::NotSymmetric { row, col });
            }
        }
    }
    Ok(())
}

/// Eigenvalues (ascending) and optionally eigenvectors of a raw symmetric matrix.
pub fn decompose_symmetric(
    m: &DMatrix<f64>,
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<DMatrix<f64>>)> {
    check_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), want_vectors.then(|| DMatrix::zeros(0, 0))));
    }
    if !want_vectors {
        let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence(format!("{n}x{n} matrix produced non-finite eigenvalues")));
        }
        values.sort_by(f64::total_cmp);
        return Ok((values, None));
    }
    let max_iter = 200 * n + 1000;
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, max_iter).ok_or_else(|| {
        Error::NoConvergence(format!("{n}x{n} matrix after {max_iter} QR iterations"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = want_vectors.then(|| eig.eigenvectors.select_columns(order.iter()));
    Ok((values, vectors))
}

/// Full eigendecomposition of a Hamiltonian.
pub fn eigendecompose(h: &HamiltonianMatrix, want_vectors: bool) -> Result<SpectralData> {
    let (eigenvalues, eigenvectors) = decompose_symmetric(&h.matrix, want_vectors).map_err(|e| {
        match e {
            Error::NoConvergence(msg) => Error::NoConvergence(format!(
                "{msg} (box side {} d={} scheme {} realization {:?})",
                h.geometry.side(),
                h.geometry.dim(),
                h.scheme.map(|s| s.label()).unwrap_or_else(|| "none".into()),
                h.realization
            )),
            other => other,
        }
    })?;
    Ok(SpectralData {
        eigenvalues,
        eigenvectors,
        source: SpectrumSource {
            geometry: Some(h.geometry.clone()),
            scheme: h.scheme,
            realization: h.realization,
        },
    })
}

/// Number of eigenvalues in the closed realized window, i.e. `Tr 1_I(H)`.
pub fn count_in_interval(spec: &SpectralData, iv: &ScaledInterval) -> usize {
    spec.count_in(&iv.window())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Mean of the clustered eigenvalues.
    pub value: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityCensus {
    pub clusters: Vec<Cluster>,
    pub gap_tolerance: f64,
    pub max_multiplicity: usize,
}

impl MultiplicityCensus {
    pub fn scanned(&self) -> usize {
        self.clusters.iter().map(|c| c.multiplicity).sum()
    }
}

/// Single-linkage clustering of the eigenvalues in `window`: neighbours at
/// distance `<= gap_tolerance` share a cluster.
pub fn multiplicity_census(
    spec: &SpectralData,
    window: &EnergyWindow,
    gap_tolerance: f64,
) -> Result<MultiplicityCensus> {
    if !(gap_tolerance.is_finite() && gap_tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gap tolerance must be positive, got {gap_tolerance}"
        )));
    }
    let values = &spec.eigenvalues[spec.indices_in(window)];
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > gap_tolerance {
            let members = &values[start..i];
            if !members.is_empty() {
                clusters.push(Cluster {
                    value: members.iter().sum::<f64>() / members.len() as f64,
                    multiplicity: members.len(),
                });
            }
            start = i;
        }
    }
    let max_multiplicity = clusters.iter().map(|c| c.multiplicity).max().unwrap_or(0);
    Ok(MultiplicityCensus {
        clusters,
        gap_tolerance,
        max_multiplicity,
    })
}

/// `1 / Σ |v(x)|⁴` for a vector normalized to one.
pub fn participation_ratio(v: &[f64]) -> f64 {
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let quartic: f64 = v.iter().map(|x| (x * x / norm2).powi(2)).sum();
    1.0 / quartic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub index: usize,
    pub eigenvalue: f64,
    pub participation_ratio: f64,
    /// Site of maximal amplitude.
    pub peak_site: usize,
    /// Least-squares rate κ in `|v(x)| ~ exp(-κ·dist(x, peak))`; `None` when
    /// fewer than two distinct distances carry resolvable amplitude.
    pub decay_rate: Option<f64>,
}

/// Amplitudes below this fraction of the peak are treated as round-off.
const AMPLITUDE_FLOOR: f64 = 1e-12;

/// Participation ratio (per site, fiber components combined) and exponential
/// decay fit for every eigenvector with eigenvalue in `window`.
pub fn localization_diagnostics(
    spec: &SpectralData,
    window: &EnergyWindow,
) -> Result<Vec<LocalizationReport>> {
    let vectors = spec.eigenvectors.as_ref().ok_or(Error::MissingEigenvectors)?;
    let n = vectors.nrows();
    let geometry = match &spec.source.geometry {
        Some(g) => g.clone(),
        None => BoxGeometry::with_side(1, n.max(1), 1)?,
    };
    let fiber = geometry.fiber_dim();
    let mut reports = Vec::new();
    for index in spec.indices_in(window) {
        let column = vectors.column(index);
        let site_amp: Vec<f64> = (0..geometry.num_sites())
            .map(|x| {
                (0..fiber)
                    .map(|c| column[x * fiber + c].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let peak_site = site_amp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let peak = site_amp[peak_site];
        let points: Vec<(f64, f64)> = site_amp
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > AMPLITUDE_FLOOR * peak)
            .map(|(x, &a)| (geometry.distance(x, peak_site) as f64, a.ln()))
            .collect();
        reports.push(LocalizationReport {
            index,
            eigenvalue: spec.eigenvalues[index],
            participation_ratio: participation_ratio(&site_amp),
            peak_site,
            decay_rate: least_squares_slope(&points).map(|s| -s),
        });
    }
    Ok(reports)
}

fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}
