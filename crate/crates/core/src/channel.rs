//! Ground-truth channels and received-pilot synthesis.
//!
//! Pilots follow the matched-filtered model: block `k` of the received tensor
//! is `G·S_k·Hᵀ` plus white noise scaled to a target SNR, where the SNR is the
//! noiseless tensor energy over the expected noise energy.

use num_complex::Complex64;

use crate::design::TrainingDesign;
use crate::error::{arg_err, dim_err, Result};
use crate::random::{complex_gaussian, complex_gaussian_matrix, stream};
use crate::tensor::{block_kron, column_block, n_mode_product, ComplexMatrix, Mode, Tensor3};

/// Transmitter–RIS channel `H` (`M_T×N`) and RIS–receiver channel `G`
/// (`M_R×N`), partitioned into `Q` column groups of width `N̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    pub h: ComplexMatrix,
    pub g: ComplexMatrix,
    pub nbar: usize,
    pub q: usize,
}

impl ChannelPair {
    pub fn new(h: ComplexMatrix, g: ComplexMatrix, nbar: usize, q: usize) -> Result<Self> {
        let n = nbar * q;
        if n == 0 {
            return arg_err("group size and group count must be positive");
        }
        if h.ncols() != n || g.ncols() != n {
            return dim_err(format!(
                "H has {} and G has {} columns, expected N = {n}",
                h.ncols(),
                g.ncols()
            ));
        }
        Ok(Self { h, g, nbar, q })
    }

    pub fn m_t(&self) -> usize {
        self.h.nrows()
    }

    pub fn m_r(&self) -> usize {
        self.g.nrows()
    }

    pub fn n(&self) -> usize {
        self.nbar * self.q
    }

    pub fn h_block(&self, q: usize) -> ComplexMatrix {
        column_block(&self.h, q, self.nbar)
    }

    pub fn g_block(&self, q: usize) -> ComplexMatrix {
        column_block(&self.g, q, self.nbar)
    }
}

/// Draws `H` then `G` with i.i.d. CN(0, 1) entries from one seeded stream.
pub fn draw_channels(m_t: usize, m_r: usize, nbar: usize, q: usize, seed: u64) -> Result<ChannelPair> {
    if m_t == 0 || m_r == 0 {
        return arg_err("antenna counts must be positive");
    }
    let n = nbar * q;
    let mut rng = stream(seed);
    let h = complex_gaussian_matrix(&mut rng, m_t, n);
    let g = complex_gaussian_matrix(&mut rng, m_r, n);
    ChannelPair::new(h, g, nbar, q)
}

/// Combined channel `H |⊗| G` (`M_R·M_T × N̄²Q`).
pub fn combined_channel(ch: &ChannelPair) -> ComplexMatrix {
    block_kron(&ch.h, &ch.g, ch.q).expect("channel blocks are consistent")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPilots {
    /// Received tensor, `M_R×M_T×K`.
    pub y: Tensor3,
    pub snr_db: f64,
    pub noise_seed: u64,
    /// `‖𝒴₀‖²_F` of the noiseless tensor.
    pub noiseless_power: f64,
    /// Per-entry noise variance actually applied.
    pub noise_variance: f64,
}

impl ReceivedPilots {
    /// Wraps a tensor as noise-free pilots.
    pub fn noiseless(y: Tensor3) -> Self {
        let noiseless_power = y.norm_squared();
        Self {
            y,
            snr_db: f64::INFINITY,
            noise_seed: 0,
            noiseless_power,
            noise_variance: 0.0,
        }
    }

    pub fn m_r(&self) -> usize {
        self.y.dims().0
    }

    pub fn m_t(&self) -> usize {
        self.y.dims().1
    }

    pub fn k(&self) -> usize {
        self.y.dims().2
    }
}

fn check_geometry(design: &TrainingDesign, ch: &ChannelPair) -> Result<()> {
    if design.nbar() != ch.nbar || design.q() != ch.q {
        return dim_err(format!(
            "design has (nbar, q) = ({}, {}) but channels have ({}, {})",
            design.nbar(),
            design.q(),
            ch.nbar,
            ch.q
        ));
    }
    Ok(())
}

/// `𝒴₀ = Σ_q 𝒮⁽q⁾ ×₁ G⁽q⁾ ×₂ H⁽q⁾`.
pub fn noiseless_pilots(design: &TrainingDesign, ch: &ChannelPair) -> Result<Tensor3> {
    check_geometry(design, ch)?;
    let mut y = Tensor3::zeros(ch.m_r(), ch.m_t(), design.k());
    for (q, s) in design.group_tensors().iter().enumerate() {
        let term = n_mode_product(&n_mode_product(s, &ch.g_block(q), Mode::One)?, &ch.h_block(q), Mode::Two)?;
        y.add_assign_unchecked(&term);
    }
    Ok(y)
}

/// Per-entry noise variance giving `signal_power / (entries·σ²) = 10^(snr/10)`.
fn noise_variance(signal_power: f64, entries: usize, snr_db: f64) -> Result<f64> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return arg_err(format!("SNR must be finite or +inf, got {snr_db}"));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(signal_power / (entries as f64 * 10f64.powf(snr_db / 10.0)))
}

fn add_noise(data: &mut [Complex64], variance: f64, seed: u64) {
    if variance == 0.0 {
        return;
    }
    let sd = variance.sqrt();
    let mut rng = stream(seed);
    for z in data {
        *z += complex_gaussian(&mut rng) * sd;
    }
}

/// Received pilots after matched filtering. `snr_db = +∞` disables noise.
pub fn synthesize_pilots(
    design: &TrainingDesign,
    ch: &ChannelPair,
    snr_db: f64,
    seed: u64,
) -> Result<ReceivedPilots> {
    let mut y = noiseless_pilots(design, ch)?;
    let power = y.norm_squared();
    let variance = noise_variance(power, y.as_slice().len(), snr_db)?;
    add_noise(y.as_mut_slice(), variance, seed);
    Ok(ReceivedPilots {
        y,
        snr_db,
        noise_seed: seed,
        noiseless_power: power,
        noise_variance: variance,
    })
}

/// First `M_T` rows of the unitary `T`-point DFT: orthogonal pilots with
/// `X·Xᴴ = I`.
pub fn dft_pilots(m_t: usize, t: usize) -> Result<ComplexMatrix> {
    if t < m_t || m_t == 0 {
        return arg_err(format!("pilot length {t} must be at least M_T = {m_t} > 0"));
    }
    let scale = 1.0 / (t as f64).sqrt();
    Ok(ComplexMatrix::from_fn(m_t, t, |i, j| {
        Complex64::from_polar(scale, -std::f64::consts::TAU * ((i * j) % t) as f64 / t as f64)
    }))
}

/// Simulates the raw received block `G·S_k·Hᵀ·X + B̄_k` and then matched
/// filters it with `Xᴴ/c`.
///
/// The SNR is applied to the raw signal, so pilots longer than `M_T` lower
/// the filtered noise variance by `M_T/T`. With `T = M_T` the output has the
/// same statistics as [`synthesize_pilots`].
pub fn synthesize_prefilter_pilots(
    design: &TrainingDesign,
    ch: &ChannelPair,
    x: &ComplexMatrix,
    snr_db: f64,
    seed: u64,
) -> Result<ReceivedPilots> {
    let (m_t, t) = x.shape();
    if m_t != ch.m_t() {
        return dim_err(format!("pilot matrix has {m_t} rows, channel has M_T = {}", ch.m_t()));
    }
    if t < m_t {
        return arg_err(format!("pilot length {t} is shorter than M_T = {m_t}"));
    }
    let gram = x * x.adjoint();
    let c = gram[(0, 0)].re;
    let off = (&gram - ComplexMatrix::identity(m_t, m_t) * Complex64::new(c, 0.0))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if c <= 0.0 || off > 1e-10 * c {
        return arg_err("pilot rows are not orthogonal with equal energy (X·Xᴴ ≠ c·I)");
    }

    let y0 = noiseless_pilots(design, ch)?;
    let k = design.k();
    let m_r = ch.m_r();
    let mut raw: Vec<ComplexMatrix> = (0..k).map(|kk| y0.slice(kk) * x).collect();
    let raw_power: f64 = raw.iter().map(|b| b.norm_squared()).sum();
    let variance = noise_variance(raw_power, m_r * t * k, snr_db)?;
    let mut rng = stream(seed);
    if variance > 0.0 {
        let sd = variance.sqrt();
        for b in &mut raw {
            for z in b.iter_mut() {
                *z += complex_gaussian(&mut rng) * sd;
            }
        }
    }
    let filter = x.adjoint() / Complex64::new(c, 0.0);
    let slices: Vec<ComplexMatrix> = raw.iter().map(|b| b * &filter).collect();
    Ok(ReceivedPilots {
        y: Tensor3::from_slices(&slices)?,
        snr_db,
        noise_seed: seed,
        noiseless_power: y0.norm_squared(),
        noise_variance: variance / c,
    })
}
