//! BD-RIS training tensors.
//!
//! A design is built from a base tensor `𝒵` (`N̄×N̄×K₁`) of cyclically
//! row/column-shifted unitary DFT matrices and a `K₂×Q` group scaling matrix
//! `Θ`: slice `k = k₂·K₁ + k₁` of group `q` is `Θ(k₂, q)·𝒵..k₁`. Designs
//! meant for alternating least squares additionally rotate every slice as
//! `D·S·D*` with random unit-modulus diagonals so that no two slices of a
//! group are proportional.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::random::{derive_seed, stream, unit_phase};
use crate::tensor::{block_diag, kron, pinv, singular_values, unfold, ComplexMatrix, Mode, Tensor3, ONE, ZERO};

/// Relative tolerance for deciding that two slices are proportional.
pub const PROPORTIONALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ls,
    Btkf,
    Btals,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Ls, Algorithm::Btkf, Algorithm::Btals];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ls => "ls",
            Algorithm::Btkf => "btkf",
            Algorithm::Btals => "btals",
        }
    }

    /// Whether designs for this estimator use the random slice rotation.
    pub fn default_rotated(self) -> bool {
        matches!(self, Algorithm::Btals)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Algorithm::Ls),
            "btkf" => Ok(Algorithm::Btkf),
            "btals" => Ok(Algorithm::Btals),
            other => arg_err(format!("unknown algorithm '{other}' (expected ls, btkf or btals)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaKind {
    Hadamard,
    #[default]
    Dft,
}

impl fmt::Display for ThetaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaKind::Hadamard => "hadamard",
            ThetaKind::Dft => "dft",
        })
    }
}

/// Geometry and construction parameters of a training design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignConfig {
    pub nbar: usize,
    pub q: usize,
    pub k1: usize,
    pub k2: usize,
    pub theta: ThetaKind,
    pub rotated: bool,
    pub seed: u64,
}

/// Default `(K₁, K₂)` split of `K` training blocks.
///
/// `K₂ = Q` when `Q` divides `K` and `K/Q ≤ N̄²`; otherwise `K₁` is the largest
/// divisor of `K` not exceeding `N̄²`.
pub fn default_split(nbar: usize, q: usize, k: usize) -> (usize, usize) {
    let max_k1 = nbar * nbar;
    if q > 0 && k % q == 0 && k / q <= max_k1 {
        return (k / q, q);
    }
    let k1 = (1..=max_k1.min(k)).rev().find(|d| k % d == 0).unwrap_or(1);
    (k1, k / k1)
}

impl DesignConfig {
    pub fn new(nbar: usize, q: usize, k1: usize, k2: usize) -> Result<Self> {
        let cfg = Self {
            nbar,
            q,
            k1,
            k2,
            theta: ThetaKind::Dft,
            rotated: false,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config with `K` blocks split by [`default_split`].
    pub fn with_blocks(nbar: usize, q: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return arg_err("training length K must be positive");
        }
        let (k1, k2) = default_split(nbar, q, k);
        Self::new(nbar, q, k1, k2)
    }

    /// Config with `K` blocks and the rotation default of `algorithm`.
    pub fn for_algorithm(nbar: usize, q: usize, k: usize, algorithm: Algorithm, seed: u64) -> Result<Self> {
        Ok(Self::with_blocks(nbar, q, k)?
            .rotated(algorithm.default_rotated())
            .seed(seed))
    }

    pub fn theta(mut self, kind: ThetaKind) -> Self {
        self.theta = kind;
        self
    }

    pub fn rotated(mut self, rotated: bool) -> Self {
        self.rotated = rotated;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn k(&self) -> usize {
        self.k1 * self.k2
    }

    pub fn n(&self) -> usize {
        self.nbar * self.q
    }

    pub fn validate(&self) -> Result<()> {
        if self.nbar == 0 || self.q == 0 {
            return arg_err("group size and group count must be positive");
        }
        if self.k1 == 0 || self.k2 == 0 {
            return arg_err("K1 and K2 must be positive");
        }
        if self.k1 > self.nbar * self.nbar {
            return arg_err(format!(
                "K1 = {} exceeds the {} distinct base slices available for group size {}",
                self.k1,
                self.nbar * self.nbar,
                self.nbar
            ));
        }
        Ok(())
    }

    /// Serializes the config as a design file. Slices are never stored; they
    /// are regenerated from these fields.
    pub fn to_toml_string(&self) -> String {
        let file = DesignFile {
            nbar: self.nbar,
            q: self.q,
            k: None,
            k1: Some(self.k1),
            k2: Some(self.k2),
            theta: Some(self.theta),
            rotated: Some(self.rotated),
            seed: self.rotated.then_some(self.seed),
        };
        toml::to_string(&file).expect("design file serializes")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let file: DesignFile =
            toml::from_str(s).map_err(|e| Error::Config(format!("design file: {e}")))?;
        file.into_config()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct DesignFile {
    pub nbar: usize,
    pub q: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DesignFile {
    pub(crate) fn into_config(self) -> Result<DesignConfig> {
        let mut cfg = match (self.k, self.k1, self.k2) {
            (Some(k), None, None) => DesignConfig::with_blocks(self.nbar, self.q, k)?,
            (k, Some(k1), Some(k2)) => {
                if k.is_some_and(|k| k != k1 * k2) {
                    return Err(Error::Config(format!("k = {} but k1·k2 = {}", k.unwrap(), k1 * k2)));
                }
                DesignConfig::new(self.nbar, self.q, k1, k2)?
            }
            _ => return Err(Error::Config("design file needs either k or both k1 and k2".into())),
        };
        cfg.theta = self.theta.unwrap_or_default();
        cfg.rotated = self.rotated.unwrap_or(false);
        cfg.seed = self.seed.unwrap_or(0);
        Ok(cfg)
    }
}

/// Unitary `n`-point DFT matrix, `F(i, j) = exp(−2πi·ij/n)/√n`.
pub fn unitary_dft(n: usize) -> ComplexMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    ComplexMatrix::from_fn(n, n, |i, j| dft_entry(n, i * j) * scale)
}

fn dft_entry(n: usize, ij: usize) -> Complex64 {
    // reduce before scaling to keep the phase exact for large products
    Complex64::from_polar(1.0, -TAU * ((ij % n) as f64) / n as f64)
}

/// Cyclic shift `Π` with `(Π·A)(i, ·) = A((i+1) mod n, ·)`.
fn cyclic_shift(n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |i, j| if j == (i + 1) % n { ONE } else { ZERO })
}

/// Base tensor `𝒵` (`N̄×N̄×K₁`).
///
/// Slice `a·N̄ + b` is `Π^a·F·(Πᵀ)^b`: the unitary DFT with rows cyclically
/// shifted by `a` and columns by `b`. At `K₁ = N̄²` the 3-mode unfolding
/// satisfies `[𝒵]₍₃₎ᴴ[𝒵]₍₃₎ = N̄·I`.
pub fn build_base_tensor(nbar: usize, k1: usize) -> Result<Tensor3> {
    if nbar == 0 || k1 == 0 {
        return arg_err("group size and K1 must be positive");
    }
    if k1 > nbar * nbar {
        return arg_err(format!("K1 = {k1} exceeds N̄² = {}", nbar * nbar));
    }
    let f = unitary_dft(nbar);
    let shift = cyclic_shift(nbar);
    let shift_t = shift.transpose();
    let mut row_shifted = f.clone();
    let mut slices = Vec::with_capacity(k1);
    'outer: for _a in 0..nbar {
        let mut s = row_shifted.clone();
        for _b in 0..nbar {
            if slices.len() == k1 {
                break 'outer;
            }
            slices.push(s.clone());
            s = &s * &shift_t;
        }
        row_shifted = &shift * &row_shifted;
    }
    Tensor3::from_slices(&slices)
}

/// Hadamard matrix of order `n` with ±1 entries, when one is constructible.
///
/// Covers orders 1 and 2, Paley type I (`p + 1`, `p ≡ 3 mod 4` prime), Paley
/// type II (`2(p + 1)`, `p ≡ 1 mod 4` prime) and Sylvester doublings of those.
pub fn hadamard(n: usize) -> Option<Vec<Vec<i8>>> {
    match n {
        0 => None,
        1 => Some(vec![vec![1]]),
        2 => Some(vec![vec![1, 1], vec![1, -1]]),
        _ if n % 4 != 0 => None,
        _ => paley_one(n)
            .or_else(|| paley_two(n))
            .or_else(|| hadamard(n / 2).map(|h| sylvester_double(&h))),
    }
}

fn sylvester_double(h: &[Vec<i8>]) -> Vec<Vec<i8>> {
    let n = h.len();
    (0..2 * n)
        .map(|i| {
            (0..2 * n)
                .map(|j| {
                    let v = h[i % n][j % n];
                    if i >= n && j >= n {
                        -v
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

fn is_prime(p: usize) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| p % d != 0)
}

fn quadratic_character(p: usize) -> Vec<i8> {
    let mut chi = vec![-1i8; p];
    chi[0] = 0;
    for x in 1..p {
        chi[x * x % p] = 1;
    }
    chi
}

/// Jacobsthal matrix `Q(i, j) = χ(j − i)` over GF(p).
fn jacobsthal(p: usize) -> Vec<Vec<i8>> {
    let chi = quadratic_character(p);
    (0..p)
        .map(|i| (0..p).map(|j| chi[(j + p - i) % p]).collect())
        .collect()
}

fn paley_one(n: usize) -> Option<Vec<Vec<i8>>> {
    let p = n - 1;
    if !(is_prime(p) && p % 4 == 3) {
        return None;
    }
    let q = jacobsthal(p);
    // H = I + [[0, 1ᵀ], [−1, Q]]
    let mut h = vec![vec![0i8; n]; n];
    for i in 0..n {
        for j in 0..n {
            let s = match (i, j) {
                (0, 0) => 0,
                (0, _) => 1,
                (_, 0) => -1,
                _ => q[i - 1][j - 1],
            };
            h[i][j] = s + i8::from(i == j);
        }
    }
    Some(h)
}

fn paley_two(n: usize) -> Option<Vec<Vec<i8>>> {
    if n % 2 != 0 {
        return None;
    }
    let m = n / 2;
    let p = m.checked_sub(1)?;
    if !(is_prime(p) && p % 4 == 1) {
        return None;
    }
    let q = jacobsthal(p);
    // symmetric conference matrix C = [[0, 1ᵀ], [1, Q]]
    let conf = |i: usize, j: usize| -> i8 {
        match (i, j) {
            (0, 0) => 0,
            (0, _) | (_, 0) => 1,
            _ => q[i - 1][j - 1],
        }
    };
    let mut h = vec![vec![0i8; n]; n];
    for i in 0..m {
        for j in 0..m {
            let cij = conf(i, j);
            let block: [[i8; 2]; 2] = if i == j {
                [[1, -1], [-1, -1]]
            } else {
                [[cij, cij], [cij, -cij]]
            };
            for (a, row) in block.iter().enumerate() {
                for (b, &v) in row.iter().enumerate() {
                    h[2 * i + a][2 * j + b] = v;
                }
            }
        }
    }
    Some(h)
}

/// Group scaling matrix `Θ` (`K₂×Q`, unit-modulus entries): the leading
/// block of a Hadamard or (unnormalized) DFT matrix of order `max(K₂, Q)`.
pub fn build_theta(k2: usize, q: usize, kind: ThetaKind) -> Result<ComplexMatrix> {
    if k2 == 0 || q == 0 {
        return arg_err("K2 and Q must be positive");
    }
    let order = k2.max(q);
    match kind {
        ThetaKind::Dft => Ok(ComplexMatrix::from_fn(k2, q, |i, j| dft_entry(order, i * j))),
        ThetaKind::Hadamard => {
            let Some(h) = hadamard(order) else {
                return arg_err(format!(
                    "no Hadamard matrix of order {order} is available; use theta = \"dft\""
                ));
            };
            Ok(ComplexMatrix::from_fn(k2, q, |i, j| {
                Complex64::new(f64::from(h[i][j]), 0.0)
            }))
        }
    }
}

/// `D·slice·D*` with `D = diag(w_row)`.
///
/// `w_row` must have unit-modulus entries; designs fix its first entry to 1.
pub fn apply_random_rotation(slice: &ComplexMatrix, w_row: &[Complex64]) -> Result<ComplexMatrix> {
    let n = slice.nrows();
    if slice.ncols() != n || w_row.len() != n {
        return Err(Error::Dimension(format!(
            "rotation of a {:?} slice needs {n} phases, got {}",
            slice.shape(),
            w_row.len()
        )));
    }
    if let Some(w) = w_row.iter().find(|w| (w.norm() - 1.0).abs() > 1e-12) {
        return arg_err(format!("rotation entry {w} is not unit modulus"));
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        w_row[i] * slice[(i, j)] * w_row[j].conj()
    }))
}

/// Block unfolding of per-group tensors: `blkdiag([𝒮⁽q⁾]₍ₙ₎)` for modes 1 and
/// 2, and the compact concatenation `[[𝒮⁽¹⁾]₍₃₎, …, [𝒮⁽Q⁾]₍₃₎]` for mode 3.
pub fn block_unfolding(groups: &[Tensor3], mode: Mode) -> ComplexMatrix {
    let parts: Vec<ComplexMatrix> = groups.iter().map(|g| unfold(g, mode)).collect();
    match mode {
        Mode::One | Mode::Two => block_diag(&parts),
        Mode::Three => {
            let rows = parts.first().map_or(0, |p| p.nrows());
            let cols: usize = parts.iter().map(|p| p.ncols()).sum();
            let mut out = ComplexMatrix::zeros(rows, cols);
            let mut c = 0;
            for p in &parts {
                out.columns_mut(c, p.ncols()).copy_from(p);
                c += p.ncols();
            }
            out
        }
    }
}

/// A fully constructed training design. Immutable after construction.
#[derive(Debug)]
pub struct TrainingDesign {
    config: DesignConfig,
    base: Tensor3,
    theta: ComplexMatrix,
    rotations: Vec<ComplexMatrix>,
    groups: Vec<Tensor3>,
    s3: ComplexMatrix,
    s1: OnceLock<ComplexMatrix>,
    s2: OnceLock<ComplexMatrix>,
    ls_filter: OnceLock<ComplexMatrix>,
}

impl TrainingDesign {
    pub fn build(config: DesignConfig) -> Result<Self> {
        config.validate()?;
        let DesignConfig { nbar, q, k1, .. } = config;
        let k = config.k();
        let base = build_base_tensor(nbar, k1)?;
        let theta = build_theta(config.k2, q, config.theta)?;

        let rotations: Vec<ComplexMatrix> = (0..q)
            .map(|g| {
                if !config.rotated {
                    return ComplexMatrix::from_element(k, nbar, ONE);
                }
                let mut rng = stream(derive_seed(config.seed, &[g as u64]));
                ComplexMatrix::from_fn(k, nbar, |_, n| if n == 0 { ONE } else { ZERO })
                    .map_with_location(|_, n, z| if n == 0 { z } else { unit_phase(&mut rng) })
            })
            .collect();

        let base_slices = base.slices();
        let mut groups = Vec::with_capacity(q);
        for (g, w) in rotations.iter().enumerate() {
            let mut slices = Vec::with_capacity(k);
            for kk in 0..k {
                let (k2, k1) = (kk / config.k1, kk % config.k1);
                let s = &base_slices[k1] * theta[(k2, g)];
                let s = if config.rotated {
                    let row: Vec<Complex64> = w.row(kk).iter().copied().collect();
                    apply_random_rotation(&s, &row)?
                } else {
                    s
                };
                slices.push(s);
            }
            groups.push(Tensor3::from_slices(&slices)?);
        }

        let s3 = if config.rotated {
            block_unfolding(&groups, Mode::Three)
        } else {
            kron(&theta, &unfold(&base, Mode::Three))
        };

        Ok(Self {
            config,
            base,
            theta,
            rotations,
            groups,
            s3,
            s1: OnceLock::new(),
            s2: OnceLock::new(),
            ls_filter: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn nbar(&self) -> usize {
        self.config.nbar
    }

    pub fn q(&self) -> usize {
        self.config.q
    }

    pub fn k(&self) -> usize {
        self.config.k()
    }

    pub fn base_tensor(&self) -> &Tensor3 {
        &self.base
    }

    pub fn theta(&self) -> &ComplexMatrix {
        &self.theta
    }

    /// Rotation phases `W⁽q⁾` (`K×N̄`); all ones for unrotated designs.
    pub fn rotation_matrix(&self, q: usize) -> &ComplexMatrix {
        &self.rotations[q]
    }

    pub fn group_tensors(&self) -> &[Tensor3] {
        &self.groups
    }

    /// Compact 3-mode unfolding `S₃` (`K × N̄²Q`).
    pub fn s3(&self) -> &ComplexMatrix {
        &self.s3
    }

    /// Block-diagonal 1-mode unfolding `S₁` (`N̄Q × N̄KQ`).
    pub fn s1(&self) -> &ComplexMatrix {
        self.s1.get_or_init(|| {
            if self.config.rotated {
                block_unfolding(&self.groups, Mode::One)
            } else {
                self.kron_block_unfolding(Mode::One)
            }
        })
    }

    /// Block-diagonal 2-mode unfolding `S₂` (`N̄Q × N̄KQ`).
    pub fn s2(&self) -> &ComplexMatrix {
        self.s2.get_or_init(|| {
            if self.config.rotated {
                block_unfolding(&self.groups, Mode::Two)
            } else {
                self.kron_block_unfolding(Mode::Two)
            }
        })
    }

    /// `blkdiag(θ_qᵀ ⊗ [𝒵]₍ₙ₎)` for the unrotated structure.
    fn kron_block_unfolding(&self, mode: Mode) -> ComplexMatrix {
        let z = unfold(&self.base, mode);
        let blocks: Vec<ComplexMatrix> = (0..self.config.q)
            .map(|g| kron(&self.theta.columns(g, 1).transpose(), &z))
            .collect();
        block_diag(&blocks)
    }

    /// True when `S₃ᴴS₃ = (K/N̄)·I` holds by construction, which lets the LS
    /// filter reduce to a scaled matched filter.
    pub fn is_column_orthogonal(&self) -> bool {
        let c = &self.config;
        !c.rotated && c.k1 == c.nbar * c.nbar && c.k2 >= c.q
    }

    /// Left inverse of `S₃` used by the LS filter: `(N̄/K)·S₃ᴴ` for
    /// column-orthogonal designs, `S₃⁺` otherwise.
    pub fn ls_filter(&self) -> &ComplexMatrix {
        self.ls_filter.get_or_init(|| {
            if self.is_column_orthogonal() {
                self.s3.adjoint() * Complex64::new(self.config.nbar as f64 / self.k() as f64, 0.0)
            } else {
                pinv(&self.s3)
            }
        })
    }

    /// Scattering matrix of block `k` (zero-based): `blkdiag(𝒮⁽¹⁾..k, …, 𝒮⁽Q⁾..k)`.
    pub fn assemble_scattering_matrix(&self, k: usize) -> Result<ComplexMatrix> {
        if k >= self.k() {
            return arg_err(format!("block index {k} out of range for K = {}", self.k()));
        }
        let blocks: Vec<ComplexMatrix> = self.groups.iter().map(|g| g.slice(k)).collect();
        Ok(block_diag(&blocks))
    }

    /// Full `N×N×K` training tensor with block-diagonal frontal slices.
    pub fn full_tensor(&self) -> Tensor3 {
        let slices: Vec<ComplexMatrix> = (0..self.k())
            .map(|k| self.assemble_scattering_matrix(k).expect("k in range"))
            .collect();
        Tensor3::from_slices(&slices).expect("equal slice shapes")
    }

    /// Proportional-slice test used by the BTALS validator.
    ///
    /// Groups of size `N̄ ≥ 2` are checked one by one. For `N̄ = 1` every
    /// group slice is a scalar, so the assembled diagonal slices are compared
    /// instead.
    pub fn has_proportional_slices(&self) -> bool {
        if self.config.nbar > 1 {
            return has_proportional_slices(&self.groups);
        }
        let q = self.config.q;
        let diagonals = Tensor3::from_fn(q, 1, self.k(), |i, _, k| self.groups[i].get(0, 0, k));
        has_proportional_slices(std::slice::from_ref(&diagonals))
    }
}

/// True iff some group has two frontal slices that are scalar multiples of
/// each other, judged by `|⟨vec Sₖ, vec Sₖ′⟩| ≥ (1 − tol)·‖Sₖ‖·‖Sₖ′‖`.
pub fn has_proportional_slices(groups: &[Tensor3]) -> bool {
    groups.iter().any(|g| {
        let (d1, d2, k) = g.dims();
        let len = d1 * d2;
        let data = g.as_slice();
        let norms: Vec<f64> = (0..k)
            .map(|i| data[i * len..(i + 1) * len].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .collect();
        (0..k).any(|a| {
            (a + 1..k).any(|b| {
                let sa = &data[a * len..(a + 1) * len];
                let sb = &data[b * len..(b + 1) * len];
                let inner: Complex64 = sa.iter().zip(sb).map(|(x, y)| x.conj() * y).sum();
                let scale = norms[a] * norms[b];
                if scale == 0.0 {
                    return true;
                }
                inner.norm() >= (1.0 - PROPORTIONALITY_TOL) * scale
            })
        })
    })
}

/// One identifiability condition and whether it held.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub rule: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub algorithm: Algorithm,
    pub config: DesignConfig,
    pub m_t: usize,
    pub m_r: usize,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        write!(
            f,
            "{} with nbar={} q={} k={} (k1={}, k2={}) m_t={} m_r={}: {}",
            self.algorithm,
            c.nbar,
            c.q,
            c.k(),
            c.k1,
            c.k2,
            self.m_t,
            self.m_r,
            if self.passed() { "pass" } else { "FAIL" }
        )?;
        for v in self.violations() {
            write!(f, "; violated {} ({})", v.rule, v.detail)?;
        }
        Ok(())
    }
}

fn numerical_rank(m: &ComplexMatrix) -> usize {
    let Ok(sv) = singular_values(m) else {
        return 0;
    };
    let smax = sv.first().copied().unwrap_or(0.0);
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

fn push_check(checks: &mut Vec<Check>, rule: &str, passed: bool, detail: String) {
    checks.push(Check {
        rule: rule.to_string(),
        passed,
        detail,
    });
}

fn count_checks(config: &DesignConfig, m_t: usize, m_r: usize, algorithm: Algorithm) -> Vec<Check> {
    let mut checks = Vec::new();
    let (nbar, q, k, n) = (config.nbar, config.q, config.k(), config.n());
    match algorithm {
        Algorithm::Ls | Algorithm::Btkf => {
            let need = nbar * nbar * q;
            push_check(&mut checks, "K >= nbar^2*Q", k >= need, format!("K = {k}, nbar^2*Q = {need}"));
        }
        Algorithm::Btals => {
            push_check(&mut checks, "K*M_T >= N", k * m_t >= n, format!("K*M_T = {}, N = {n}", k * m_t));
            push_check(&mut checks, "K*M_R >= N", k * m_r >= n, format!("K*M_R = {}, N = {n}", k * m_r));
            push_check(&mut checks, "K >= 3", k >= 3, format!("K = {k}"));
        }
    }
    checks
}

/// The dimension-counting subset of [`validate_identifiability`]; cheap
/// enough to run on every estimator call.
pub fn check_dimensions(config: &DesignConfig, m_t: usize, m_r: usize, algorithm: Algorithm) -> ValidationReport {
    ValidationReport {
        algorithm,
        config: config.clone(),
        m_t,
        m_r,
        checks: count_checks(config, m_t, m_r, algorithm),
    }
}

/// Checks the identifiability conditions of `algorithm` for a design built
/// from `config` with `m_t` transmit and `m_r` receive antennas.
///
/// LS and BTKF need `K ≥ N̄²Q` (and `S₃` of full column rank). BTALS needs
/// `K·M_T ≥ N`, `K·M_R ≥ N`, `K ≥ 3`, no proportional slices and full row
/// rank `S₁`, `S₂`. Failures are reported, never raised.
pub fn validate_identifiability(
    config: &DesignConfig,
    m_t: usize,
    m_r: usize,
    algorithm: Algorithm,
) -> ValidationReport {
    match config.validate().and_then(|_| TrainingDesign::build(config.clone())) {
        Ok(d) => validate_design(&d, m_t, m_r, algorithm),
        Err(e) => {
            let mut checks = count_checks(config, m_t, m_r, algorithm);
            push_check(&mut checks, "design construction", false, e.to_string());
            ValidationReport {
                algorithm,
                config: config.clone(),
                m_t,
                m_r,
                checks,
            }
        }
    }
}

/// [`validate_identifiability`] for an already built design.
pub fn validate_design(design: &TrainingDesign, m_t: usize, m_r: usize, algorithm: Algorithm) -> ValidationReport {
    let config = design.config();
    let mut checks = count_checks(config, m_t, m_r, algorithm);
    let n = config.n();
    match algorithm {
        Algorithm::Ls | Algorithm::Btkf => {
            let need = config.nbar * config.nbar * config.q;
            if checks.iter().all(|c| c.passed) {
                let rank = numerical_rank(design.s3());
                push_check(&mut checks, "S3 full column rank", rank == need, format!("rank {rank} of {need} columns"));
            }
        }
        Algorithm::Btals => {
            let prop = design.has_proportional_slices();
            push_check(
                &mut checks,
                "no proportional frontal slices",
                !prop,
                if prop {
                    "some group has proportional slices".into()
                } else {
                    "all slices pairwise non-proportional".into()
                },
            );
            // S₁ and S₂ are block diagonal, so rank is additive over groups.
            for (rule, mode) in [("S1 full row rank", Mode::One), ("S2 full row rank", Mode::Two)] {
                let rank: usize = design
                    .group_tensors()
                    .iter()
                    .map(|g| numerical_rank(&unfold(g, mode)))
                    .sum();
                push_check(&mut checks, rule, rank == n, format!("rank {rank} of {n} rows"));
            }
        }
    }
    ValidationReport {
        algorithm,
        config: config.clone(),
        m_t,
        m_r,
        checks,
    }
}
