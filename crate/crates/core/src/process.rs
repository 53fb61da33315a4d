//! Local eigenvalue counts and the estimators built on them.
//!
//! Every estimator reduces a realization to a small integer observation and
//! folds observations into integer tallies. Floating point only appears when a
//! tally is turned into [`EstimateRecord`]s, so aggregates do not depend on
//! the order or grouping in which realizations were processed.

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lattice::{sample_disorder, BoxGeometry, DisorderSpec, LatticeModel, SchemeKind};
use crate::seed;
use crate::spectral::{decompose_symmetric, multiplicity_census, EnergyWindow, ScaledInterval, SpectralData};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub name: String,
    pub value: f64,
    /// 95% half-width.
    pub ci: f64,
    pub n: u64,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    pub version: String,
}

impl EstimateRecord {
    pub fn new(name: &str, value: f64, ci: f64, n: u64, params: &BTreeMap<String, Value>, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            value,
            ci,
            n,
            params: params.clone(),
            seed,
            version: VERSION.to_string(),
        }
    }

    pub fn with_param(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

/// Wilson score interval for `successes` out of `n`: `(center, half-width)`.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    (center, half)
}

/// Wilson half-width only.
pub fn wilson_halfwidth(successes: u64, n: u64) -> f64 {
    wilson_interval(successes, n).1
}

/// Mean and normal-approximation half-width from exact integer power sums.
pub fn mean_interval(n: u64, sum: u64, sum_sq: u128) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = sum as f64 / n as f64;
    let var = sample_variance(n, sum, sum_sq);
    (mean, Z95 * (var / n as f64).sqrt())
}

/// Unbiased sample variance from exact power sums.
pub fn sample_variance(n: u64, sum: u64, sum_sq: u128) -> f64 {
    if n < 2 {
        return 0.0;
    }
    // n·Σx² − (Σx)² is an exact non-negative integer.
    let centered = n as u128 * sum_sq - (sum as u128) * (sum as u128);
    centered as f64 / (n as f64 * (n - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero with two points.
    pub slope_se: f64,
    /// Points with a positive value, the only ones used.
    pub points: usize,
}

/// Least-squares fit of `ln y = intercept + slope·ln x` over points with `y > 0`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Option<PowerLawFit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if pts.len() > 2 {
        let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(PowerLawFit {
        slope,
        intercept,
        slope_se,
        points: pts.len(),
    })
}

/// Model parameters at one value of `L`.
///
/// Local Hamiltonians live on cubes of half-side `ell`; `L` enters through the
/// window scaling `L^{-d}` and, for coverings, the size of the big box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub dim: usize,
    pub scale: u64,
    pub ell: usize,
    pub scheme: SchemeKind,
    pub disorder: DisorderSpec,
    pub cap: usize,
}

impl LevelConfig {
    pub fn new(
        dim: usize,
        scale: u64,
        ell: usize,
        scheme: SchemeKind,
        disorder: DisorderSpec,
        cap: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Geometry("dimension must be at least 1".into()));
        }
        if scale == 0 {
            return Err(Error::Geometry("L must be at least 1".into()));
        }
        Ok(Self {
            dim,
            scale,
            ell,
            scheme,
            disorder,
            cap,
        })
    }

    /// `ell = ⌊L^α⌋`, which must be at least 1.
    pub fn from_alpha(
        dim: usize,
        scale: u64,
        alpha: f64,
        scheme: SchemeKind,
        disorder: DisorderSpec,
        cap: usize,
    ) -> Result<Self> {
        let ell = ell_for(scale, alpha)?;
        Self::new(dim, scale, ell, scheme, disorder, cap)
    }

    /// The disorder law seeded for this `L`.
    pub fn level_disorder(&self) -> DisorderSpec {
        self.disorder
            .reseeded(seed::level_seed(self.disorder.base_seed(), self.scale))
    }

    pub fn cube_model(&self) -> Result<LatticeModel> {
        LatticeModel::for_half_side(self.dim, self.ell, self.scheme, self.cap)
    }

    /// Parameters shared by every record at this level.
    pub fn params(&self) -> BTreeMap<String, Value> {
        let mut p = BTreeMap::new();
        p.insert("d".into(), json!(self.dim));
        p.insert("L".into(), json!(self.scale));
        p.insert("ell".into(), json!(self.ell));
        p.insert("scheme".into(), serde_json::to_value(self.scheme).expect("plain enum"));
        p.insert("K".into(), json!(self.disorder.strength()));
        p.insert("law".into(), serde_json::to_value(self.disorder.law()).expect("plain enum"));
        p
    }
}

/// `⌊L^α⌋`, rejecting values below 1.
pub fn ell_for(scale: u64, alpha: f64) -> Result<usize> {
    let v = (scale as f64).powf(alpha);
    if !(v >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "L^alpha = {scale}^{alpha} = {v} is below 1"
        )));
    }
    Ok(v.floor() as usize)
}

/// The array of disjoint cubes `Λ_ℓ(n_p)` packed from the corner of `Λ_L`.
///
/// Cube `p` draws its disorder with the keys of the big-box sites anchoring
/// its variables, so distinct cubes never share a random variable.
#[derive(Debug, Clone)]
pub struct CoveringConfig {
    level: LevelConfig,
    big_box: BoxGeometry,
    cube_side: usize,
    per_axis: usize,
    model: LatticeModel,
    keys: Vec<Vec<u64>>,
}

impl CoveringConfig {
    pub fn new(level: &LevelConfig) -> Result<Self> {
        let box_side = level.scheme.box_side(level.scale as usize);
        let cube_side = level.scheme.box_side(level.ell);
        if cube_side > box_side {
            return Err(Error::Geometry(format!(
                "cube side {cube_side} exceeds box side {box_side}"
            )));
        }
        let big_box = BoxGeometry::with_side(level.dim, box_side, 1)?;
        let model = level.cube_model()?;
        let per_axis = box_side / cube_side;
        let count = per_axis.pow(level.dim as u32);
        let cube_geom = BoxGeometry::with_side(level.dim, cube_side, 1)?;
        let anchors = model.scheme().anchors();
        let mut keys = Vec::with_capacity(count);
        for p in 0..count {
            let corner = corner_of(p, per_axis, level.dim, cube_side);
            let cube_keys = anchors
                .iter()
                .map(|&a| {
                    let global: Vec<usize> = cube_geom
                        .offsets(a)
                        .iter()
                        .zip(&corner)
                        .map(|(o, c)| o + c)
                        .collect();
                    big_box.index_of_offsets(&global).expect("cube inside box") as u64
                })
                .collect();
            keys.push(cube_keys);
        }
        Ok(Self {
            level: level.clone(),
            big_box,
            cube_side,
            per_axis,
            model,
            keys,
        })
    }

    pub fn level(&self) -> &LevelConfig {
        &self.level
    }

    pub fn box_side(&self) -> usize {
        self.big_box.side()
    }

    pub fn cube_side(&self) -> usize {
        self.cube_side
    }

    /// `N_L = ⌊box side / cube side⌋^d`.
    pub fn num_cubes(&self) -> usize {
        self.keys.len()
    }

    /// Offsets of cube `p`'s minimal corner inside the big box.
    pub fn corner(&self, p: usize) -> Vec<usize> {
        corner_of(p, self.per_axis, self.level.dim, self.cube_side)
    }

    /// Big-box site indices covered by cube `p`.
    pub fn cube_sites(&self, p: usize) -> Vec<usize> {
        let corner = self.corner(p);
        let cube_geom = self.model.geometry();
        (0..cube_geom.num_sites())
            .map(|a| {
                let global: Vec<usize> = cube_geom
                    .offsets(a)
                    .iter()
                    .zip(&corner)
                    .map(|(o, c)| o + c)
                    .collect();
                self.big_box.index_of_offsets(&global).expect("cube inside box")
            })
            .collect()
    }

    /// Disorder keys used by cube `p`.
    pub fn cube_keys(&self, p: usize) -> &[u64] {
        &self.keys[p]
    }

    pub fn model(&self) -> &LatticeModel {
        &self.model
    }

    pub fn params(&self) -> BTreeMap<String, Value> {
        let mut p = self.level.params();
        p.insert("N_L".into(), json!(self.num_cubes()));
        p
    }
}

fn corner_of(p: usize, per_axis: usize, dim: usize, cube_side: usize) -> Vec<usize> {
    let mut rest = p;
    (0..dim)
        .map(|_| {
            let c = rest % per_axis;
            rest /= per_axis;
            c * cube_side
        })
        .collect()
}

/// Eigenvalues of a model at one disorder vector.
fn eigenvalues(model: &LatticeModel, omega: &[f64]) -> Result<SpectralData> {
    let h = model.hamiltonian(omega)?;
    let (values, _) = decompose_symmetric(&h.matrix, false)?;
    Ok(SpectralData::from_eigenvalues(values))
}

/// Per-realization reduction plus integer aggregation.
pub trait Estimator: Sync {
    type Sample: Send;
    type Tally: Default + Clone + Serialize + DeserializeOwned + Send;

    fn sample(&self, realization: u64) -> Result<Self::Sample>;
    fn absorb(&self, tally: &mut Self::Tally, sample: Self::Sample);
    fn records(&self, tally: &Self::Tally) -> Vec<EstimateRecord>;
}

/// Samples `range` in parallel; results come back in realization order.
pub fn sample_range<E: Estimator>(est: &E, range: Range<u64>) -> Result<Vec<E::Sample>> {
    range.into_par_iter().map(|r| est.sample(r)).collect()
}

const CHUNK: u64 = 4096;

/// Runs realizations `0..n` and returns the final tally.
pub fn run_estimator<E: Estimator>(est: &E, n: u64) -> Result<E::Tally> {
    let mut tally = E::Tally::default();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        for s in sample_range(est, start..end)? {
            est.absorb(&mut tally, s);
        }
        start = end;
    }
    Ok(tally)
}

fn window_params(p: &mut BTreeMap<String, Value>, key_e: &str, key_i: &str, iv: &ScaledInterval) {
    p.insert(key_e.into(), json!(iv.center()));
    let (a, b) = iv.base();
    p.insert(key_i.into(), json!([a, b]));
}

/// `|E − E′| > 4d`, unless overridden.
pub fn check_separation(dim: usize, e: f64, e_prime: f64, allow_close: bool) -> Result<()> {
    let gap = (e - e_prime).abs();
    if !allow_close && !(gap > 4.0 * dim as f64) {
        return Err(Error::InvalidArgument(format!(
            "energies must satisfy |E - E'| > 4d = {}, got {gap} (set allow_close_energies to override)",
            4 * dim
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- Wegner

#[derive(Debug, Clone)]
pub struct WegnerEstimator {
    level: LevelConfig,
    model: LatticeModel,
    disorder: DisorderSpec,
    interval: ScaledInterval,
    window: EnergyWindow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WegnerTally {
    pub n: u64,
    pub hits: u64,
    pub count_sum: u64,
}

impl WegnerEstimator {
    pub fn new(level: &LevelConfig, interval: ScaledInterval) -> Result<Self> {
        let interval = interval.at_scale(level.scale)?;
        Ok(Self {
            model: level.cube_model()?,
            disorder: level.level_disorder(),
            window: interval.window(),
            level: level.clone(),
            interval,
        })
    }
}

impl Estimator for WegnerEstimator {
    type Sample = u32;
    type Tally = WegnerTally;

    fn sample(&self, r: u64) -> Result<u32> {
        let omega = sample_disorder(&self.disorder, r, self.model.scheme());
        Ok(eigenvalues(&self.model, &omega)?.count_in(&self.window) as u32)
    }

    fn absorb(&self, t: &mut WegnerTally, x: u32) {
        t.n += 1;
        t.hits += (x >= 1) as u64;
        t.count_sum += x as u64;
    }

    fn records(&self, t: &WegnerTally) -> Vec<EstimateRecord> {
        let mut params = self.level.params();
        window_params(&mut params, "E", "I", &self.interval);
        let seed = self.disorder.base_seed();
        let p = if t.n == 0 { 0.0 } else { t.hits as f64 / t.n as f64 };
        vec![EstimateRecord::new("wegner", p, wilson_halfwidth(t.hits, t.n), t.n, &params, seed)]
    }
}

/// `P{X_ℓ(I_L(E)) ≥ 1}` on a single cube.
pub fn wegner_estimate(level: &LevelConfig, interval: ScaledInterval, n: u64) -> Result<EstimateRecord> {
    let est = WegnerEstimator::new(level, interval)?;
    let tally = run_estimator(&est, n)?;
    Ok(est.records(&tally).remove(0))
}

// ---------------------------------------------------------------- Minami

#[derive(Debug, Clone)]
pub struct MinamiEstimator {
    inner: WegnerEstimator,
    rank: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MinamiTally {
    pub n: u64,
    /// Realizations with `X > m`.
    pub tail: u64,
    /// `Σ χ_{X>m}·X·(X − m)`.
    pub moment_sum: u64,
    pub moment_sq_sum: u128,
}

impl MinamiTally {
    pub fn absorb_count(&mut self, x: u32, m: u32) {
        self.n += 1;
        if x > m {
            self.tail += 1;
            let v = x as u64 * (x - m) as u64;
            self.moment_sum += v;
            self.moment_sq_sum += v as u128 * v as u128;
        }
    }
}

impl MinamiEstimator {
    /// `rank` defaults to the scheme rank.
    pub fn new(level: &LevelConfig, interval: ScaledInterval, rank: Option<usize>) -> Result<Self> {
        let inner = WegnerEstimator::new(level, interval)?;
        let rank = rank.unwrap_or_else(|| inner.model.scheme().rank()) as u32;
        Ok(Self { inner, rank })
    }
}

impl Estimator for MinamiEstimator {
    type Sample = u32;
    type Tally = MinamiTally;

    fn sample(&self, r: u64) -> Result<u32> {
        self.inner.sample(r)
    }

    fn absorb(&self, t: &mut MinamiTally, x: u32) {
        t.absorb_count(x, self.rank);
    }

    fn records(&self, t: &MinamiTally) -> Vec<EstimateRecord> {
        let mut params = self.inner.level.params();
        window_params(&mut params, "E", "I", &self.inner.interval);
        params.insert("m".into(), json!(self.rank));
        let seed = self.inner.disorder.base_seed();
        let tail = if t.n == 0 { 0.0 } else { t.tail as f64 / t.n as f64 };
        let (mean, ci) = mean_interval(t.n, t.moment_sum, t.moment_sq_sum);
        vec![
            EstimateRecord::new("minami_tail", tail, wilson_halfwidth(t.tail, t.n), t.n, &params, seed),
            EstimateRecord::new("minami_moment", mean, ci, t.n, &params, seed),
        ]
    }
}

/// `P{X > m}` and `E[χ_{X>m}·X·(X − m)]` on a single cube.
pub fn minami_statistic(
    level: &LevelConfig,
    interval: ScaledInterval,
    rank: Option<usize>,
    n: u64,
) -> Result<(EstimateRecord, EstimateRecord)> {
    let est = MinamiEstimator::new(level, interval, rank)?;
    let tally = run_estimator(&est, n)?;
    let mut r = est.records(&tally);
    let moment = r.pop().expect("two records");
    Ok((r.pop().expect("two records"), moment))
}

// ---------------------------------------------------------------- joint

#[derive(Debug, Clone)]
pub struct JointEstimator {
    level: LevelConfig,
    model: LatticeModel,
    disorder: DisorderSpec,
    first: ScaledInterval,
    second: ScaledInterval,
    windows: (EnergyWindow, EnergyWindow),
}

/// Multinomial cell counts for two events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub n: u64,
    pub both: u64,
    pub first_only: u64,
    pub second_only: u64,
}

impl PairTally {
    pub fn absorb_events(&mut self, a: bool, b: bool) {
        self.n += 1;
        match (a, b) {
            (true, true) => self.both += 1,
            (true, false) => self.first_only += 1,
            (false, true) => self.second_only += 1,
            (false, false) => {}
        }
    }

    pub fn absorb_counts(&mut self, a: u32, b: u32) {
        self.absorb_events(a >= 1, b >= 1);
    }

    pub fn first(&self) -> u64 {
        self.both + self.first_only
    }

    pub fn second(&self) -> u64 {
        self.both + self.second_only
    }

    fn frac(&self, k: u64) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            k as f64 / self.n as f64
        }
    }

    /// `|p_AB − p_A·p_B|` with a delta-method 95% half-width.
    pub fn defect(&self) -> (f64, f64) {
        if self.n == 0 {
            return (0.0, 0.0);
        }
        let p11 = self.frac(self.both);
        let p10 = self.frac(self.first_only);
        let p01 = self.frac(self.second_only);
        let p00 = 1.0 - p11 - p10 - p01;
        let pa = p11 + p10;
        let pb = p11 + p01;
        let d = p11 - pa * pb;
        // gradient of d over the four cells (p00 does not enter)
        let g = [1.0 - pa - pb, -pb, -pa, 0.0];
        let p = [p11, p10, p01, p00];
        let m1: f64 = g.iter().zip(&p).map(|(g, p)| g * p).sum();
        let m2: f64 = g.iter().zip(&p).map(|(g, p)| g * g * p).sum();
        let var = ((m2 - m1 * m1) / self.n as f64).max(0.0);
        (d.abs(), Z95 * var.sqrt())
    }
}

impl JointEstimator {
    pub fn new(
        level: &LevelConfig,
        first: ScaledInterval,
        second: ScaledInterval,
        allow_close: bool,
    ) -> Result<Self> {
        check_separation(level.dim, first.center(), second.center(), allow_close)?;
        let first = first.at_scale(level.scale)?;
        let second = second.at_scale(level.scale)?;
        Ok(Self {
            model: level.cube_model()?,
            disorder: level.level_disorder(),
            windows: (first.window(), second.window()),
            level: level.clone(),
            first,
            second,
        })
    }
}

impl Estimator for JointEstimator {
    type Sample = (u32, u32);
    type Tally = PairTally;

    fn sample(&self, r: u64) -> Result<(u32, u32)> {
        let omega = sample_disorder(&self.disorder, r, self.model.scheme());
        let spec = eigenvalues(&self.model, &omega)?;
        Ok((spec.count_in(&self.windows.0) as u32, spec.count_in(&self.windows.1) as u32))
    }

    fn absorb(&self, t: &mut PairTally, (a, b): (u32, u32)) {
        t.absorb_counts(a, b);
    }

    fn records(&self, t: &PairTally) -> Vec<EstimateRecord> {
        let mut params = self.level.params();
        window_params(&mut params, "E", "I", &self.first);
        window_params(&mut params, "E_prime", "J", &self.second);
        let seed = self.disorder.base_seed();
        let rec = |name, k| EstimateRecord::new(name, t.frac(k), wilson_halfwidth(k, t.n), t.n, &params, seed);
        vec![
            rec("joint", t.both),
            rec("marginal_first", t.first()),
            rec("marginal_second", t.second()),
        ]
    }
}

/// `P{X(I_L(E)) ≥ 1 ∧ X(J_L(E′)) ≥ 1}` and both marginals on a single cube.
pub fn joint_decorrelation(
    level: &LevelConfig,
    first: ScaledInterval,
    second: ScaledInterval,
    allow_close: bool,
    n: u64,
) -> Result<Vec<EstimateRecord>> {
    let est = JointEstimator::new(level, first, second, allow_close)?;
    let tally = run_estimator(&est, n)?;
    Ok(est.records(&tally))
}

// ---------------------------------------------------------------- covering samples

/// Counts of one realization on every cube of a covering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSample {
    pub realization: u64,
    /// `η_p(I)` per cube.
    pub first: Vec<u32>,
    /// `η_p(J)` per cube, empty when only one window is tracked.
    pub second: Vec<u32>,
}

impl CountSample {
    /// `ζ(I) = Σ_p η_p(I)`.
    pub fn zeta_first(&self) -> u32 {
        self.first.iter().sum()
    }

    pub fn zeta_second(&self) -> u32 {
        self.second.iter().sum()
    }
}

/// Samples every cube of a covering against one or two windows.
pub fn covering_counts(
    covering: &CoveringConfig,
    disorder: &DisorderSpec,
    realization: u64,
    first: &EnergyWindow,
    second: Option<&EnergyWindow>,
) -> Result<CountSample> {
    let n = covering.num_cubes();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(if second.is_some() { n } else { 0 });
    for p in 0..n {
        let omega = disorder.sample_keys(realization, covering.cube_keys(p));
        let spec = eigenvalues(covering.model(), &omega)?;
        a.push(spec.count_in(first) as u32);
        if let Some(w) = second {
            b.push(spec.count_in(w) as u32);
        }
    }
    Ok(CountSample {
        realization,
        first: a,
        second: b,
    })
}

// ---------------------------------------------------------------- independence

#[derive(Debug, Clone)]
pub struct IndependenceEstimator {
    covering: CoveringConfig,
    disorder: DisorderSpec,
    first: ScaledInterval,
    second: ScaledInterval,
    windows: (EnergyWindow, EnergyWindow),
}

impl IndependenceEstimator {
    pub fn new(
        covering: &CoveringConfig,
        first: ScaledInterval,
        second: ScaledInterval,
        allow_close: bool,
    ) -> Result<Self> {
        let level = covering.level();
        check_separation(level.dim, first.center(), second.center(), allow_close)?;
        let first = first.at_scale(level.scale)?;
        let second = second.at_scale(level.scale)?;
        Ok(Self {
            disorder: level.level_disorder(),
            covering: covering.clone(),
            windows: (first.window(), second.window()),
            first,
            second,
        })
    }
}

impl Estimator for IndependenceEstimator {
    type Sample = (u32, u32);
    type Tally = PairTally;

    fn sample(&self, r: u64) -> Result<(u32, u32)> {
        let s = covering_counts(&self.covering, &self.disorder, r, &self.windows.0, Some(&self.windows.1))?;
        Ok((s.zeta_first(), s.zeta_second()))
    }

    fn absorb(&self, t: &mut PairTally, (a, b): (u32, u32)) {
        t.absorb_counts(a, b);
    }

    fn records(&self, t: &PairTally) -> Vec<EstimateRecord> {
        let mut params = self.covering.params();
        window_params(&mut params, "E", "I", &self.first);
        window_params(&mut params, "E_prime", "J", &self.second);
        let seed = self.disorder.base_seed();
        let (defect, ci) = t.defect();
        let rec = |name, k| EstimateRecord::new(name, t.frac(k), wilson_halfwidth(k, t.n), t.n, &params, seed);
        vec![
            EstimateRecord::new("independence_defect", defect, ci, t.n, &params, seed),
            rec("zeta_joint", t.both),
            rec("zeta_first", t.first()),
            rec("zeta_second", t.second()),
        ]
    }
}

/// `|P{ζ(I) ≥ 1 ∧ ζ(J) ≥ 1} − P{ζ(I) ≥ 1}·P{ζ(J) ≥ 1}|` over a covering.
pub fn independence_defect(
    covering: &CoveringConfig,
    first: ScaledInterval,
    second: ScaledInterval,
    allow_close: bool,
    n: u64,
) -> Result<Vec<EstimateRecord>> {
    let est = IndependenceEstimator::new(covering, first, second, allow_close)?;
    let tally = run_estimator(&est, n)?;
    Ok(est.records(&tally))
}

// ---------------------------------------------------------------- count distribution

#[derive(Debug, Clone)]
pub struct CountEstimator {
    covering: CoveringConfig,
    disorder: DisorderSpec,
    interval: ScaledInterval,
    window: EnergyWindow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountTally {
    pub n: u64,
    /// `ζ(I)` value → realizations.
    pub zeta: BTreeMap<u32, u64>,
    /// Nonzero per-cube count `η_p(I)` → cubes.
    pub jumps: BTreeMap<u32, u64>,
    pub cubes: u64,
    pub sum: u64,
    pub sum_sq: u128,
}

impl CountTally {
    pub fn absorb_cubes(&mut self, per_cube: &[u32]) {
        let z: u32 = per_cube.iter().sum();
        self.n += 1;
        *self.zeta.entry(z).or_default() += 1;
        for &c in per_cube {
            self.cubes += 1;
            if c >= 1 {
                *self.jumps.entry(c).or_default() += 1;
            }
        }
        self.sum += z as u64;
        self.sum_sq += z as u128 * z as u128;
    }

    pub fn mean(&self) -> f64 {
        mean_interval(self.n, self.sum, self.sum_sq).0
    }

    pub fn variance(&self) -> f64 {
        sample_variance(self.n, self.sum, self.sum_sq)
    }

    /// Fraction of nonzero cubes whose count is at most `m`.
    pub fn jump_fraction_at_most(&self, m: u32) -> f64 {
        let total: u64 = self.jumps.values().sum();
        if total == 0 {
            return 1.0;
        }
        self.jumps.range(..=m).map(|(_, c)| c).sum::<u64>() as f64 / total as f64
    }
}

impl CountEstimator {
    pub fn new(covering: &CoveringConfig, interval: ScaledInterval) -> Result<Self> {
        let interval = interval.at_scale(covering.level().scale)?;
        Ok(Self {
            disorder: covering.level().level_disorder(),
            covering: covering.clone(),
            window: interval.window(),
            interval,
        })
    }
}

impl Estimator for CountEstimator {
    type Sample = Vec<u32>;
    type Tally = CountTally;

    fn sample(&self, r: u64) -> Result<Vec<u32>> {
        Ok(covering_counts(&self.covering, &self.disorder, r, &self.window, None)?.first)
    }

    fn absorb(&self, t: &mut CountTally, s: Vec<u32>) {
        t.absorb_cubes(&s);
    }

    fn records(&self, t: &CountTally) -> Vec<EstimateRecord> {
        let mut params = self.covering.params();
        window_params(&mut params, "E", "I", &self.interval);
        let seed = self.disorder.base_seed();
        let (mean, mean_ci) = mean_interval(t.n, t.sum, t.sum_sq);
        let var = t.variance();
        let dispersion = if mean > 0.0 { var / mean } else { 0.0 };
        let mut out = vec![
            EstimateRecord::new("zeta_mean", mean, mean_ci, t.n, &params, seed),
            EstimateRecord::new("zeta_variance", var, 0.0, t.n, &params, seed),
            EstimateRecord::new("zeta_dispersion", dispersion, 0.0, t.n, &params, seed),
        ];
        for (&k, &c) in &t.zeta {
            out.push(
                EstimateRecord::new("zeta_pmf", c as f64 / t.n as f64, wilson_halfwidth(c, t.n), t.n, &params, seed)
                    .with_param("k", json!(k)),
            );
        }
        let jumps: u64 = t.jumps.values().sum();
        for (&k, &c) in &t.jumps {
            out.push(
                EstimateRecord::new("jump_pmf", c as f64 / jumps as f64, wilson_halfwidth(c, jumps), jumps, &params, seed)
                    .with_param("k", json!(k)),
            );
        }
        out
    }
}

/// Distribution of `ζ(I)` and of per-cube jump sizes over a covering.
pub fn count_distribution(covering: &CoveringConfig, interval: ScaledInterval, n: u64) -> Result<(CountTally, Vec<EstimateRecord>)> {
    let est = CountEstimator::new(covering, interval)?;
    let tally = run_estimator(&est, n)?;
    let records = est.records(&tally);
    Ok((tally, records))
}

// ---------------------------------------------------------------- multiplicity

#[derive(Debug, Clone)]
pub struct MultiplicityEstimator {
    level: LevelConfig,
    model: LatticeModel,
    disorder: DisorderSpec,
    window: EnergyWindow,
    gap_tolerance: f64,
    rank: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityTally {
    pub n: u64,
    pub max_seen: u32,
    /// Realizations whose largest cluster exceeds the rank.
    pub violations: u64,
    /// Largest cluster size per realization → realizations.
    pub histogram: BTreeMap<u32, u64>,
}

impl MultiplicityTally {
    pub fn absorb_max(&mut self, max: u32, rank: u32) {
        self.n += 1;
        self.max_seen = self.max_seen.max(max);
        self.violations += (max > rank) as u64;
        *self.histogram.entry(max).or_default() += 1;
    }
}

impl MultiplicityEstimator {
    /// Spectrum in `window` (absolute energies, not L-scaled) on the cube.
    pub fn new(level: &LevelConfig, window: EnergyWindow, gap_tolerance: f64) -> Result<Self> {
        if !(gap_tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gap tolerance must be positive, got {gap_tolerance}"
            )));
        }
        let model = level.cube_model()?;
        let rank = model.scheme().rank() as u32;
        Ok(Self {
            disorder: level.level_disorder(),
            level: level.clone(),
            model,
            window,
            gap_tolerance,
            rank,
        })
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    /// Largest cluster size of an arbitrary symmetric matrix in the window.
    pub fn census_of_matrix(&self, m: &nalgebra::DMatrix<f64>) -> Result<u32> {
        let (values, _) = decompose_symmetric(m, false)?;
        self.census_of(&SpectralData::from_eigenvalues(values))
    }

    fn census_of(&self, spec: &SpectralData) -> Result<u32> {
        Ok(multiplicity_census(spec, &self.window, self.gap_tolerance)?.max_multiplicity as u32)
    }
}

impl Estimator for MultiplicityEstimator {
    type Sample = u32;
    type Tally = MultiplicityTally;

    fn sample(&self, r: u64) -> Result<u32> {
        let omega = sample_disorder(&self.disorder, r, self.model.scheme());
        self.census_of(&eigenvalues(&self.model, &omega)?)
    }

    fn absorb(&self, t: &mut MultiplicityTally, max: u32) {
        t.absorb_max(max, self.rank);
    }

    fn records(&self, t: &MultiplicityTally) -> Vec<EstimateRecord> {
        let mut params = self.level.params();
        params.insert("window".into(), json!([self.window.lo, self.window.hi]));
        params.insert("gap_tolerance".into(), json!(self.gap_tolerance));
        params.insert("m".into(), json!(self.rank));
        let seed = self.disorder.base_seed();
        let frac = if t.n == 0 { 0.0 } else { t.violations as f64 / t.n as f64 };
        vec![
            EstimateRecord::new("multiplicity_max", t.max_seen as f64, 0.0, t.n, &params, seed),
            EstimateRecord::new(
                "multiplicity_violation_fraction",
                frac,
                wilson_halfwidth(t.violations, t.n),
                t.n,
                &params,
                seed,
            ),
        ]
    }
}

/// Largest eigenvalue cluster per realization, against the scheme rank.
pub fn multiplicity_sweep(
    level: &LevelConfig,
    window: EnergyWindow,
    gap_tolerance: f64,
    n: u64,
) -> Result<(MultiplicityTally, Vec<EstimateRecord>)> {
    let est = MultiplicityEstimator::new(level, window, gap_tolerance)?;
    let tally = run_estimator(&est, n)?;
    let records = est.records(&tally);
    Ok((tally, records))
}
