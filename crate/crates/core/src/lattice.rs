//! Lattice geometry, projection families, disorder sampling and assembly of
//! the finite-volume Hamiltonian `H = Δ + Σᵢ ωᵢ Pᵢ`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Default upper bound on the dense matrix dimension.
pub const DEFAULT_DIMENSION_CAP: usize = 4096;

/// A box of `side^d` lattice sites, optionally carrying an internal fiber
/// `ℂ^m` at every site.
///
/// Sites are enumerated lexicographically with the first axis most
/// significant. Coordinates along each axis run over `-(side/2) .. side - side/2`,
/// so an odd side `2L+1` gives the centered box `{-L, …, L}^d` and an even
/// side `2L` gives `{-L, …, L-1}^d`. Matrix index of `(site, c)` is
/// `site * fiber_dim + c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxGeometry {
    dim: usize,
    side: usize,
    fiber_dim: usize,
    num_sites: usize,
}

impl BoxGeometry {
    /// The centered box `Λ_L = {-L, …, L}^d`.
    pub fn centered(dim: usize, half_side: usize, fiber_dim: usize) -> Result<Self> {
        Self::with_side(dim, 2 * half_side + 1, fiber_dim)
    }

    pub fn with_side(dim: usize, side: usize, fiber_dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Geometry("dimension d must be positive".into()));
        }
        if side == 0 {
            return Err(Error::Geometry("box side must be positive".into()));
        }
        if fiber_dim == 0 {
            return Err(Error::Geometry("fiber dimension must be positive".into()));
        }
        let num_sites = u32::try_from(dim)
            .ok()
            .and_then(|d| side.checked_pow(d))
            .filter(|n| n.checked_mul(fiber_dim).is_some())
            .ok_or_else(|| Error::Geometry(format!("box {side}^{dim} overflows")))?;
        Ok(Self {
            dim,
            side,
            fiber_dim,
            num_sites,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// `L` for a box of side `2L+1` or `2L`.
    pub fn half_side(&self) -> usize {
        self.side / 2
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn matrix_dim(&self) -> usize {
        self.num_sites * self.fiber_dim
    }

    fn origin(&self) -> i64 {
        -((self.side / 2) as i64)
    }

    /// Per-axis offsets in `0..side` of a site.
    pub fn offsets(&self, index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        let mut rest = index;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.side;
            rest /= self.side;
        }
        out
    }

    pub fn index_of_offsets(&self, offsets: &[usize]) -> Option<usize> {
        if offsets.len() != self.dim {
            return None;
        }
        let mut index = 0;
        for &k in offsets {
            if k >= self.side {
                return None;
            }
            index = index * self.side + k;
        }
        Some(index)
    }

    /// Lattice coordinates of a site.
    pub fn site(&self, index: usize) -> Vec<i64> {
        let origin = self.origin();
        self.offsets(index)
            .into_iter()
            .map(|k| origin + k as i64)
            .collect()
    }

    pub fn index_of(&self, coords: &[i64]) -> Option<usize> {
        let origin = self.origin();
        let offsets = coords
            .iter()
            .map(|&c| usize::try_from(c - origin).ok())
            .collect::<Option<Vec<_>>>()?;
        self.index_of_offsets(&offsets)
    }

    pub fn sites(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.num_sites).map(|i| self.site(i))
    }

    /// Unordered nearest-neighbour pairs `(x, y)` with `x < y`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.num_sites * self.dim);
        let mut stride = 1;
        let mut strides = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            strides[axis] = stride;
            stride *= self.side;
        }
        for x in 0..self.num_sites {
            let offsets = self.offsets(x);
            for axis in 0..self.dim {
                if offsets[axis] + 1 < self.side {
                    edges.push((x, x + strides[axis]));
                }
            }
        }
        edges
    }

    /// ℓ¹ lattice distance between two sites.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        self.offsets(a)
            .into_iter()
            .zip(self.offsets(b))
            .map(|(p, q)| p.abs_diff(q))
            .sum()
    }
}

/// How the random variables couple to the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    /// One variable per site, `Pᵢ = |i⟩⟨i|`.
    RankOne,
    /// One variable per cube of side `block`, `Pᵢ = χ_{cube}`; rank `block^d`.
    Polymer { block: usize },
    /// Matrix-valued model on `ℓ²(ℤᵈ) ⊗ ℂ^m`, `Pᵢ = |i⟩⟨i| ⊗ I_m`.
    Fiber { m: usize },
}

impl SchemeKind {
    pub fn rank(&self, dim: usize) -> usize {
        match *self {
            SchemeKind::RankOne => 1,
            SchemeKind::Polymer { block } => block.pow(dim as u32),
            SchemeKind::Fiber { m } => m,
        }
    }

    pub fn fiber_dim(&self) -> usize {
        match *self {
            SchemeKind::Fiber { m } => m,
            _ => 1,
        }
    }

    /// Side of the box with half-side `half` used with this scheme.
    ///
    /// Polymer blocks must tile the box, so an even block side gets an even
    /// box side `2·half`; every other case uses the centered side `2·half+1`.
    pub fn box_side(&self, half: usize) -> usize {
        match *self {
            SchemeKind::Polymer { block } if block % 2 == 0 => 2 * half,
            _ => 2 * half + 1,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            SchemeKind::RankOne => "rank_one".into(),
            SchemeKind::Polymer { block } => format!("polymer(b={block})"),
            SchemeKind::Fiber { m } => format!("fiber(m={m})"),
        }
    }
}

/// The family `{Pᵢ : i ∈ 𝒥}` on a concrete box.
///
/// Every projector is a coordinate projection, stored as its support (a list
/// of matrix indices). Supports are disjoint and cover all matrix indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationScheme {
    kind: SchemeKind,
    rank: usize,
    /// Anchor site of each variable: the site itself, or the block's minimal corner.
    anchors: Vec<usize>,
    supports: Vec<Vec<usize>>,
    /// Matrix index -> owning variable.
    owner: Vec<usize>,
}

impl PerturbationScheme {
    pub fn new(kind: SchemeKind, geom: &BoxGeometry) -> Result<Self> {
        let dim = geom.dim();
        let (anchors, supports) = match kind {
            SchemeKind::RankOne => {
                if geom.fiber_dim() != 1 {
                    return Err(Error::Scheme(
                        "rank-one scheme needs a scalar box (fiber dimension 1)".into(),
                    ));
                }
                let n = geom.num_sites();
                ((0..n).collect(), (0..n).map(|x| vec![x]).collect())
            }
            SchemeKind::Polymer { block } => {
                if block == 0 {
                    return Err(Error::Scheme("polymer block side must be positive".into()));
                }
                if geom.fiber_dim() != 1 {
                    return Err(Error::Scheme(
                        "polymer scheme needs a scalar box (fiber dimension 1)".into(),
                    ));
                }
                if geom.side() % block != 0 {
                    return Err(Error::Scheme(format!(
                        "block must divide box side: block side {block} does not divide box side {}",
                        geom.side()
                    )));
                }
                polymer_blocks(geom, block)
            }
            SchemeKind::Fiber { m } => {
                if m == 0 {
                    return Err(Error::Scheme("fiber dimension m must be positive".into()));
                }
                if geom.fiber_dim() != m {
                    return Err(Error::Scheme(format!(
                        "fiber scheme with m = {m} needs a box with fiber dimension {m}, got {}",
                        geom.fiber_dim()
                    )));
                }
                let n = geom.num_sites();
                (
                    (0..n).collect(),
                    (0..n).map(|x| (x * m..(x + 1) * m).collect()).collect(),
                )
            }
        };
        let mut owner = vec![usize::MAX; geom.matrix_dim()];
        for (i, support) in supports.iter().enumerate() {
            for &k in support {
                owner[k] = i;
            }
        }
        debug_assert!(owner.iter().all(|&o| o != usize::MAX));
        Ok(Self {
            kind,
            rank: kind.rank(dim),
            anchors,
            supports,
            owner,
        })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    /// Uniform rank `m_k` of the projectors.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of random variables, `|𝒥|`.
    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    /// Dimension of the space the projectors act on.
    pub fn matrix_dim(&self) -> usize {
        self.owner.len()
    }

    /// Site index anchoring each variable (all sites, or block corners).
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    /// Index of the projector whose support contains matrix index `k`.
    pub fn owner_of(&self, k: usize) -> usize {
        self.owner[k]
    }

    /// `‖Pₛ v‖²` for every variable `s`.
    pub fn occupations(&self, v: &[f64]) -> Vec<f64> {
        self.supports
            .iter()
            .map(|support| support.iter().map(|&k| v[k] * v[k]).sum())
            .collect()
    }
}

fn polymer_blocks(geom: &BoxGeometry, block: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let dim = geom.dim();
    let per_axis = geom.side() / block;
    let count = per_axis.pow(dim as u32);
    let mut anchors = Vec::with_capacity(count);
    let mut supports = Vec::with_capacity(count);
    let cells = block.pow(dim as u32);
    for b in 0..count {
        let mut corner = vec![0; dim];
        let mut rest = b;
        for axis in (0..dim).rev() {
            corner[axis] = (rest % per_axis) * block;
            rest /= per_axis;
        }
        let mut support = Vec::with_capacity(cells);
        for c in 0..cells {
            let mut offsets = corner.clone();
            let mut rest = c;
            for axis in (0..dim).rev() {
                offsets[axis] += rest % block;
                rest /= block;
            }
            support.push(geom.index_of_offsets(&offsets).expect("block inside box"));
        }
        support.sort_unstable();
        anchors.push(geom.index_of_offsets(&corner).expect("corner inside box"));
        supports.push(support);
    }
    (anchors, supports)
}

/// Single-site law of the `ωᵢ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DisorderLaw {
    /// Uniform on `[-K, K]`.
    Uniform,
    /// `K (2B - 1)` with `B ~ Beta(a, a)`; bounded density for `a >= 1`.
    ScaledSymmetricBeta { a: f64 },
}

impl DisorderLaw {
    pub fn label(&self) -> String {
        match *self {
            DisorderLaw::Uniform => "uniform".into(),
            DisorderLaw::ScaledSymmetricBeta { a } => format!("beta(a={a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSpec {
    law: DisorderLaw,
    strength: f64,
    base_seed: u64,
}

impl DisorderSpec {
    /// `strength` is the support bound `K`. `K = 0` gives the free Laplacian.
    pub fn new(law: DisorderLaw, strength: f64, base_seed: u64) -> Result<Self> {
        if !strength.is_finite() || strength < 0.0 {
            return Err(Error::Disorder(format!(
                "support bound K must be finite and non-negative, got {strength}"
            )));
        }
        if let DisorderLaw::ScaledSymmetricBeta { a } = law {
            if !(a.is_finite() && a >= 1.0) {
                return Err(Error::Disorder(format!(
                    "beta shape a must be >= 1 for a bounded density, got {a}"
                )));
            }
        }
        Ok(Self {
            law,
            strength,
            base_seed,
        })
    }

    pub fn uniform(strength: f64, base_seed: u64) -> Result<Self> {
        Self::new(DisorderLaw::Uniform, strength, base_seed)
    }

    pub fn law(&self) -> DisorderLaw {
        self.law
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Same law with a different base seed.
    pub fn reseeded(&self, base_seed: u64) -> Self {
        Self { base_seed, ..*self }
    }

    /// The variable with disorder key `key` in realization `realization`.
    /// A pure function of `(base_seed, realization, key)`.
    pub fn value(&self, realization: u64, key: u64) -> f64 {
        let realization_seed = seed::realization_seed(self.base_seed, realization);
        self.value_with_seed(realization_seed, key)
    }

    fn value_with_seed(&self, realization_seed: u64, key: u64) -> f64 {
        if self.strength == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(realization_seed, key));
        let k = self.strength;
        match self.law {
            DisorderLaw::Uniform => rng.random_range(-k..=k),
            DisorderLaw::ScaledSymmetricBeta { a } => {
                let beta = Beta::new(a, a).expect("validated shape");
                let b: f64 = beta.sample(&mut rng);
                (k * (2.0 * b - 1.0)).clamp(-k, k)
            }
        }
    }

    /// Variables for an explicit list of disorder keys.
    pub fn sample_keys(&self, realization: u64, keys: &[u64]) -> Vec<f64> {
        let realization_seed = seed::realization_seed(self.base_seed, realization);
        keys.iter()
            .map(|&key| self.value_with_seed(realization_seed, key))
            .collect()
    }
}

/// ω indexed by 𝒥: component `i` uses disorder key `i`.
pub fn sample_disorder(
    spec: &DisorderSpec,
    realization: u64,
    scheme: &PerturbationScheme,
) -> Vec<f64> {
    let keys: Vec<u64> = (0..scheme.len() as u64).collect();
    spec.sample_keys(realization, &keys)
}

/// Which nearest-neighbour bonds carry hopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Hopping {
    #[default]
    Full,
    /// Diagnostic mode: only bonds inside a single projector support.
    WithinBlocks,
}

/// A dense real symmetric Hamiltonian together with what produced it.
#[derive(Debug, Clone)]
pub struct HamiltonianMatrix {
    pub matrix: DMatrix<f64>,
    pub geometry: BoxGeometry,
    pub scheme: Option<SchemeKind>,
    pub disorder: Vec<f64>,
    pub realization: Option<u64>,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn check_cap(geom: &BoxGeometry, cap: usize) -> Result<()> {
    let dim = geom.matrix_dim();
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    Ok(())
}

fn adjacency(geom: &BoxGeometry, keep: impl Fn(usize, usize) -> bool) -> DMatrix<f64> {
    let m = geom.fiber_dim();
    let n = geom.matrix_dim();
    let mut a = DMatrix::zeros(n, n);
    for (x, y) in geom.edges() {
        for c in 0..m {
            let (p, q) = (x * m + c, y * m + c);
            if keep(p, q) {
                a[(p, q)] = 1.0;
                a[(q, p)] = 1.0;
            }
        }
    }
    a
}

/// The adjacency operator of the box graph (Dirichlet truncation), `⊗ I` on
/// the fiber.
pub fn build_laplacian(geom: &BoxGeometry, cap: usize) -> Result<HamiltonianMatrix> {
    check_cap(geom, cap)?;
    Ok(HamiltonianMatrix {
        matrix: adjacency(geom, |_, _| true),
        geometry: geom.clone(),
        scheme: None,
        disorder: Vec::new(),
        realization: None,
    })
}

/// `H = Δ + Σᵢ ωᵢ Pᵢ`.
pub fn assemble_hamiltonian(
    geom: &BoxGeometry,
    scheme: &PerturbationScheme,
    omega: &[f64],
    cap: usize,
) -> Result<HamiltonianMatrix> {
    LatticeModel::new(geom.clone(), scheme.kind(), cap)?.hamiltonian(omega)
}

/// Geometry, scheme and cached hopping matrix for repeated assembly.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    geometry: BoxGeometry,
    scheme: PerturbationScheme,
    hopping: DMatrix<f64>,
    cap: usize,
}

impl LatticeModel {
    pub fn new(geometry: BoxGeometry, kind: SchemeKind, cap: usize) -> Result<Self> {
        Self::with_hopping(geometry, kind, Hopping::Full, cap)
    }

    pub fn with_hopping(
        geometry: BoxGeometry,
        kind: SchemeKind,
        hopping: Hopping,
        cap: usize,
    ) -> Result<Self> {
        check_cap(&geometry, cap)?;
        let scheme = PerturbationScheme::new(kind, &geometry)?;
        let hopping = match hopping {
            Hopping::Full => adjacency(&geometry, |_, _| true),
            Hopping::WithinBlocks => {
                adjacency(&geometry, |p, q| scheme.owner_of(p) == scheme.owner_of(q))
            }
        };
        Ok(Self {
            geometry,
            scheme,
            hopping,
            cap,
        })
    }

    /// Scalar (or fiber `m`) centered box of half-side `half` for `kind`,
    /// with the side parity required by the scheme.
    pub fn for_half_side(dim: usize, half: usize, kind: SchemeKind, cap: usize) -> Result<Self> {
        let geometry = BoxGeometry::with_side(dim, kind.box_side(half), kind.fiber_dim())?;
        Self::new(geometry, kind, cap)
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    pub fn scheme(&self) -> &PerturbationScheme {
        &self.scheme
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// The hopping part (the Laplacian, unless built in diagnostic mode).
    pub fn hopping(&self) -> &DMatrix<f64> {
        &self.hopping
    }

    pub fn hamiltonian(&self, omega: &[f64]) -> Result<HamiltonianMatrix> {
        if omega.len() != self.scheme.len() {
            return Err(Error::DisorderLength {
                expected: self.scheme.len(),
                got: omega.len(),
            });
        }
        let mut matrix = self.hopping.clone();
        for (support, &w) in self.scheme.supports().iter().zip(omega) {
            for &k in support {
                matrix[(k, k)] += w;
            }
        }
        Ok(HamiltonianMatrix {
            matrix,
            geometry: self.geometry.clone(),
            scheme: Some(self.scheme.kind()),
            disorder: omega.to_vec(),
            realization: None,
        })
    }

    /// Samples ω for `realization` (keys `0..|𝒥|`) and assembles `H`.
    pub fn realize(&self, disorder: &DisorderSpec, realization: u64) -> Result<HamiltonianMatrix> {
        let omega = sample_disorder(disorder, realization, &self.scheme);
        let mut h = self.hamiltonian(&omega)?;
        h.realization = Some(realization);
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(dim: usize, half: usize) -> BoxGeometry {
        BoxGeometry::centered(dim, half, 1).unwrap()
    }

    #[test]
    fn centered_box_enumeration() {
        let g = scalar(2, 1);
        assert_eq!(g.num_sites(), 9);
        let sites: Vec<_> = g.sites().collect();
        assert_eq!(sites[0], vec![-1, -1]);
        assert_eq!(sites[1], vec![-1, 0]);
        assert_eq!(sites[8], vec![1, 1]);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(g.index_of(s), Some(i));
        }
        assert_eq!(g.index_of(&[2, 0]), None);
    }

    #[test]
    fn even_side_box() {
        let g = BoxGeometry::with_side(1, 4, 1).unwrap();
        let sites: Vec<_> = g.sites().map(|s| s[0]).collect();
        assert_eq!(sites, vec![-2, -1, 0, 1]);
    }

    #[test]
    fn three_site_path() {
        let h = build_laplacian(&scalar(1, 1), DEFAULT_DIMENSION_CAP).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        assert_eq!(h.matrix, expected);
    }

    #[test]
    fn laplacian_row_sums_bounded() {
        for dim in 1..=3 {
            let h = build_laplacian(&scalar(dim, 2), DEFAULT_DIMENSION_CAP).unwrap();
            for row in h.matrix.row_iter() {
                assert!(row.sum() <= 2.0 * dim as f64);
            }
            assert_eq!(h.matrix, h.matrix.transpose());
        }
    }

    #[test]
    fn fiber_laplacian_is_block_diagonal_in_fiber() {
        let g = BoxGeometry::centered(1, 1, 2).unwrap();
        let h = build_laplacian(&g, DEFAULT_DIMENSION_CAP).unwrap();
        assert_eq!(h.dim(), 6);
        assert_eq!(h.matrix[(0, 2)], 1.0);
        assert_eq!(h.matrix[(1, 3)], 1.0);
        assert_eq!(h.matrix[(0, 3)], 0.0);
        assert_eq!(h.matrix[(0, 1)], 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let g = scalar(2, 10);
        let err = build_laplacian(&g, 100).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { dim: 441, cap: 100 }));
        assert!(err.to_string().contains("cap of 100"));
    }

    #[test]
    fn single_site_rank_one() {
        let g = scalar(1, 0);
        let s = PerturbationScheme::new(SchemeKind::RankOne, &g).unwrap();
        let h = assemble_hamiltonian(&g, &s, &[5.0], DEFAULT_DIMENSION_CAP).unwrap();
        assert_eq!(h.matrix, DMatrix::from_element(1, 1, 5.0));
    }

    #[test]
    fn polymer_four_sites() {
        let g = BoxGeometry::with_side(1, 4, 1).unwrap();
        let s = PerturbationScheme::new(SchemeKind::Polymer { block: 2 }, &g).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.rank(), 2);
        let (a, c) = (0.7, -1.3);
        let h = assemble_hamiltonian(&g, &s, &[a, c], DEFAULT_DIMENSION_CAP).unwrap();
        let lap = build_laplacian(&g, DEFAULT_DIMENSION_CAP).unwrap().matrix;
        let expected = lap + DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![a, a, c, c]));
        assert_eq!(h.matrix, expected);
    }

    #[test]
    fn polymer_rejects_non_divisor() {
        let g = scalar(1, 20);
        let err = PerturbationScheme::new(SchemeKind::Polymer { block: 3 }, &g).unwrap_err();
        assert!(err.to_string().contains("block must divide box side"));
        assert!(err.to_string().contains("41"));
    }

    #[test]
    fn polymer_2d_rank_and_anchors() {
        let g = BoxGeometry::with_side(2, 4, 1).unwrap();
        let s = PerturbationScheme::new(SchemeKind::Polymer { block: 2 }, &g).unwrap();
        assert_eq!(s.rank(), 4);
        assert_eq!(s.len(), 4);
        assert_eq!(s.anchors(), &[0, 2, 8, 10]);
        assert_eq!(s.supports()[0], vec![0, 1, 4, 5]);
    }

    #[test]
    fn scheme_needs_matching_fiber() {
        let g = scalar(1, 2);
        assert!(PerturbationScheme::new(SchemeKind::Fiber { m: 2 }, &g).is_err());
        let g2 = BoxGeometry::centered(1, 2, 2).unwrap();
        assert!(PerturbationScheme::new(SchemeKind::RankOne, &g2).is_err());
    }

    #[test]
    fn disorder_length_mismatch() {
        let g = scalar(1, 2);
        let s = PerturbationScheme::new(SchemeKind::RankOne, &g).unwrap();
        let err = assemble_hamiltonian(&g, &s, &[0.0; 3], DEFAULT_DIMENSION_CAP).unwrap_err();
        assert!(matches!(err, Error::DisorderLength { expected: 5, got: 3 }));
    }

    #[test]
    fn disorder_is_deterministic_and_bounded() {
        let g = scalar(1, 10);
        let s = PerturbationScheme::new(SchemeKind::RankOne, &g).unwrap();
        for law in [DisorderLaw::Uniform, DisorderLaw::ScaledSymmetricBeta { a: 2.0 }] {
            let spec = DisorderSpec::new(law, 2.0, 99).unwrap();
            let a = sample_disorder(&spec, 3, &s);
            let b = sample_disorder(&spec, 3, &s);
            assert_eq!(a, b);
            assert_ne!(a, sample_disorder(&spec, 4, &s));
            assert!(a.iter().all(|w| (-2.0..=2.0).contains(w)));
        }
    }

    #[test]
    fn component_depends_only_on_its_key() {
        let spec = DisorderSpec::uniform(1.0, 5).unwrap();
        let short = spec.sample_keys(11, &[0, 1, 2]);
        let long = spec.sample_keys(11, &[7, 2, 0, 1]);
        assert_eq!(short[0], long[2]);
        assert_eq!(short[1], long[3]);
        assert_eq!(short[2], long[1]);
        assert_eq!(spec.value(11, 7), long[0]);
    }

    #[test]
    fn uniform_mean_within_clt_bound() {
        let k = 3.0;
        let spec = DisorderSpec::uniform(k, 2024).unwrap();
        let n = 100_000u64;
        let keys: Vec<u64> = (0..n).collect();
        let mean = spec.sample_keys(0, &keys).iter().sum::<f64>() / n as f64;
        let bound = 3.0 * k / (3.0 * n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn zero_strength_gives_zero_potential() {
        let spec = DisorderSpec::uniform(0.0, 1).unwrap();
        assert_eq!(spec.sample_keys(0, &[0, 1, 2]), vec![0.0; 3]);
        assert!(DisorderSpec::uniform(-1.0, 1).is_err());
        assert!(DisorderSpec::new(DisorderLaw::ScaledSymmetricBeta { a: 0.5 }, 1.0, 1).is_err());
    }

    #[test]
    fn within_blocks_hopping_decouples_polymer_blocks() {
        let g = BoxGeometry::with_side(1, 6, 1).unwrap();
        let model =
            LatticeModel::with_hopping(g, SchemeKind::Polymer { block: 2 }, Hopping::WithinBlocks, 64)
                .unwrap();
        let a = model.hopping();
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(1, 2)], 0.0);
        assert_eq!(a[(2, 3)], 1.0);
    }
}
