//! LS, BTKF and BTALS channel estimators.
//!
//! All three consume matched-filtered pilots `𝒴` (`M_R×M_T×K`) and the
//! training design that produced them. LS recovers the combined channel
//! `H |⊗| G`; BTKF and BTALS additionally return `H` and `G`, each known only
//! up to one complex scalar per group.

use num_complex::Complex64;

use crate::channel::{ChannelPair, ReceivedPilots};
use crate::design::{check_dimensions, Algorithm, TrainingDesign};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::random::{complex_gaussian_matrix, stream};
use crate::tensor::{
    block_kron, column_block, kron_rearrange, pinv, rank_one_approx, stacked_identity, unfold, unvec, ComplexMatrix,
    Mode,
};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub algorithm: Algorithm,
    /// `Ĥ` (`M_T×N`); absent for LS.
    pub h_hat: Option<ComplexMatrix>,
    /// `Ĝ` (`M_R×N`); absent for LS.
    pub g_hat: Option<ComplexMatrix>,
    /// Combined-channel estimate (`M_R·M_T × N̄²Q`).
    pub t_hat: ComplexMatrix,
    /// Output of the LS filtering stage, kept by BTKF.
    pub filtered: Option<ComplexMatrix>,
    pub iterations: Option<usize>,
    /// Normalized residual after each BTALS iteration.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Per-group scalars applied to `Ĝ` by [`resolve_scaling`].
    pub ambiguity: Option<Vec<Complex64>>,
}

impl EstimationResult {
    fn combined(algorithm: Algorithm, t_hat: ComplexMatrix) -> Self {
        Self {
            algorithm,
            h_hat: None,
            g_hat: None,
            t_hat,
            filtered: None,
            iterations: None,
            residuals: Vec::new(),
            converged: true,
            ambiguity: None,
        }
    }
}

/// How the BTALS pseudo-inverse operands are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// `[S_1·Hᵀ, …, S_K·Hᵀ]` built slice by slice from the block-diagonal
    /// scattering matrices.
    #[default]
    Full,
    /// `S₁·(Ī |⊗| H)ᵀ` from the cached block unfoldings.
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtalsOptions {
    pub eta: f64,
    pub max_iters: usize,
    pub init_seed: u64,
    pub form: UpdateForm,
}

impl Default for BtalsOptions {
    fn default() -> Self {
        Self {
            eta: 1e-6,
            max_iters: 200,
            init_seed: 0,
            form: UpdateForm::Full,
        }
    }
}

impl BtalsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return arg_err(format!("eta must be positive and finite, got {}", self.eta));
        }
        if self.max_iters == 0 {
            return arg_err("max_iters must be at least 1");
        }
        Ok(())
    }
}

fn check_pilots(y: &ReceivedPilots, design: &TrainingDesign, algorithm: Algorithm) -> Result<()> {
    if y.k() != design.k() {
        return dim_err(format!("pilots have K = {}, design has K = {}", y.k(), design.k()));
    }
    let report = check_dimensions(design.config(), y.m_t(), y.m_r(), algorithm);
    if !report.passed() {
        return Err(Error::Identifiability(report));
    }
    Ok(())
}

/// LS filtering stage shared by LS and BTKF: `(S₃⁺·[𝒴]₍₃₎)ᵀ`.
fn ls_stage(y: &ReceivedPilots, design: &TrainingDesign) -> ComplexMatrix {
    (design.ls_filter() * unfold(&y.y, Mode::Three)).transpose()
}

/// Least-squares estimate of the combined channel.
pub fn estimate_ls(y: &ReceivedPilots, design: &TrainingDesign) -> Result<EstimationResult> {
    check_pilots(y, design, Algorithm::Ls)?;
    Ok(EstimationResult::combined(Algorithm::Ls, ls_stage(y, design)))
}

/// Splits each Kronecker block of a filtered combined channel into its
/// factors: returns `(Ĥ, Ĝ)` with `Ĥ⁽q⁾ ⊗ Ĝ⁽q⁾` the best rank-one fit of
/// block `q`.
pub fn btkf_factorize(
    z: &ComplexMatrix,
    m_r: usize,
    m_t: usize,
    nbar: usize,
    q: usize,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if z.shape() != (m_r * m_t, nbar * nbar * q) {
        return dim_err(format!(
            "filtered channel must be {}x{}, got {:?}",
            m_r * m_t,
            nbar * nbar * q,
            z.shape()
        ));
    }
    let mut h = ComplexMatrix::zeros(m_t, nbar * q);
    let mut g = ComplexMatrix::zeros(m_r, nbar * q);
    for group in 0..q {
        let zbar = kron_rearrange(&column_block(z, group, nbar * nbar), m_r, m_t, nbar)?;
        let r1 = rank_one_approx(&zbar)?;
        if r1.sigma == 0.0 {
            return Err(Error::DegenerateInput(format!("group {group} has an all-zero block")));
        }
        let s = Complex64::new(r1.sigma.sqrt(), 0.0);
        let gq: Vec<Complex64> = r1.u.iter().map(|x| x * s).collect();
        let hq: Vec<Complex64> = r1.v.iter().map(|x| x.conj() * s).collect();
        g.columns_mut(group * nbar, nbar).copy_from(&unvec(&gq, m_r, nbar)?);
        h.columns_mut(group * nbar, nbar).copy_from(&unvec(&hq, m_t, nbar)?);
    }
    Ok((h, g))
}

/// Block Tucker Kronecker factorization: LS filtering followed by a rank-one
/// factorization per group.
pub fn estimate_btkf(y: &ReceivedPilots, design: &TrainingDesign) -> Result<EstimationResult> {
    check_pilots(y, design, Algorithm::Btkf)?;
    let z = ls_stage(y, design);
    let (h, g) = btkf_factorize(&z, y.m_r(), y.m_t(), design.nbar(), design.q())?;
    let t_hat = block_kron(&h, &g, design.q())?;
    Ok(EstimationResult {
        algorithm: Algorithm::Btkf,
        h_hat: Some(h),
        g_hat: Some(g),
        t_hat,
        filtered: Some(z),
        iterations: None,
        residuals: Vec::new(),
        converged: true,
        ambiguity: None,
    })
}

/// `y·p⁺` for a wide `p`, via QR of `pᴴ` when `p` has full row rank.
fn right_solve(y: &ComplexMatrix, p: &ComplexMatrix) -> ComplexMatrix {
    if p.nrows() <= p.ncols() {
        let qr = p.adjoint().qr();
        let r = qr.r();
        let diag: Vec<f64> = r.diagonal().iter().map(|z| z.norm()).collect();
        let rmax = diag.iter().cloned().fold(0.0, f64::max);
        let tol = p.ncols() as f64 * f64::EPSILON * rmax;
        if rmax > 0.0 && diag.iter().all(|&d| d > tol) {
            let rhs = (y * qr.q()).adjoint();
            if let Some(x) = r.solve_upper_triangular(&rhs) {
                return x.adjoint();
            }
        }
    }
    y * pinv(p)
}

struct BtalsProblem<'a> {
    design: &'a TrainingDesign,
    /// `slices[q][k]` is the `k`-th frontal slice of group `q`.
    slices: Vec<Vec<ComplexMatrix>>,
    form: UpdateForm,
    nbar: usize,
    k: usize,
}

impl<'a> BtalsProblem<'a> {
    fn new(design: &'a TrainingDesign, form: UpdateForm) -> Self {
        let slices = match form {
            UpdateForm::Full => design.group_tensors().iter().map(|g| g.slices()).collect(),
            UpdateForm::Block => Vec::new(),
        };
        Self {
            design,
            slices,
            form,
            nbar: design.nbar(),
            k: design.k(),
        }
    }

    /// Operand `P` with `[𝒴]₍₁₎ = G·P` given `H` (`transpose = false`), or
    /// `[𝒴]₍₂₎ = H·P` given `G` (`transpose = true`).
    fn operand(&self, other: &ComplexMatrix, transpose: bool) -> ComplexMatrix {
        let q = self.design.q();
        match self.form {
            UpdateForm::Block => {
                let ibar = stacked_identity(self.k, q);
                let s = if transpose { self.design.s2() } else { self.design.s1() };
                s * block_kron(&ibar, other, q).expect("consistent blocks").transpose()
            }
            UpdateForm::Full => {
                let m = other.nrows();
                let nbar = self.nbar;
                let mut p = ComplexMatrix::zeros(nbar * q, self.k * m);
                for (group, slices) in self.slices.iter().enumerate() {
                    let ot = other.columns(group * nbar, nbar).transpose();
                    for (kk, s) in slices.iter().enumerate() {
                        let block = if transpose { s.transpose() * &ot } else { s * &ot };
                        p.view_mut((group * nbar, kk * m), (nbar, m)).copy_from(&block);
                    }
                }
                p
            }
        }
    }
}

/// Block Tucker alternating least squares from a random `CN(0, 1)` start.
pub fn estimate_btals(y: &ReceivedPilots, design: &TrainingDesign, opts: &BtalsOptions) -> Result<EstimationResult> {
    let n = design.nbar() * design.q();
    let h0 = complex_gaussian_matrix(&mut stream(opts.init_seed), y.m_t(), n);
    estimate_btals_with_init(y, design, opts, h0)
}

/// BTALS from a caller-supplied `Ĥ₍₀₎` (`M_T×N`).
///
/// Each iteration solves for `Ĝ` given `Ĥ`, then for `Ĥ` given `Ĝ`, and
/// records `εᵢ = ‖[𝒴]₍₃₎ − S₃·(Ĥ |⊗| Ĝ)ᵀ‖² / ‖[𝒴]₍₃₎‖²`. Iteration stops
/// once two successive residuals differ by at most `eta`.
pub fn estimate_btals_with_init(
    y: &ReceivedPilots,
    design: &TrainingDesign,
    opts: &BtalsOptions,
    h0: ComplexMatrix,
) -> Result<EstimationResult> {
    opts.validate()?;
    check_pilots(y, design, Algorithm::Btals)?;
    let q = design.q();
    let n = design.nbar() * q;
    if h0.shape() != (y.m_t(), n) {
        return dim_err(format!("initial H must be {}x{n}, got {:?}", y.m_t(), h0.shape()));
    }
    let y1 = unfold(&y.y, Mode::One);
    let y2 = unfold(&y.y, Mode::Two);
    let y_energy = y2.norm_squared();
    if y_energy == 0.0 {
        return Err(Error::DegenerateInput("received pilots are all zero".into()));
    }

    let problem = BtalsProblem::new(design, opts.form);
    let mut h = h0;
    let mut g = ComplexMatrix::zeros(y.m_r(), n);
    let mut residuals = Vec::new();
    let mut converged = false;
    for i in 0..opts.max_iters {
        g = right_solve(&y1, &problem.operand(&h, false));
        let p2 = problem.operand(&g, true);
        h = right_solve(&y2, &p2);
        // same residual as in mode 3, at M_T·N·K·M_R cost
        let eps = (&y2 - &h * p2).norm_squared() / y_energy;
        if !eps.is_finite() {
            return Err(Error::NumericalFailure(format!("residual became {eps} at iteration {}", i + 1)));
        }
        let prev = residuals.last().copied();
        residuals.push(eps);
        if prev.is_some_and(|p: f64| (eps - p).abs() <= opts.eta) {
            converged = true;
            break;
        }
    }
    let t_hat = block_kron(&h, &g, q)?;
    Ok(EstimationResult {
        algorithm: Algorithm::Btals,
        h_hat: Some(h),
        g_hat: Some(g),
        t_hat,
        filtered: None,
        iterations: Some(residuals.len()),
        residuals,
        converged,
        ambiguity: None,
    })
}

/// Runs `algorithm` with default options where applicable.
pub fn estimate(
    algorithm: Algorithm,
    y: &ReceivedPilots,
    design: &TrainingDesign,
    btals: &BtalsOptions,
) -> Result<EstimationResult> {
    match algorithm {
        Algorithm::Ls => estimate_ls(y, design),
        Algorithm::Btkf => estimate_btkf(y, design),
        Algorithm::Btals => estimate_btals(y, design, btals),
    }
}

/// Removes the per-group scaling ambiguity against known channels.
///
/// For each group `α = ⟨Ĝ⁽q⁾, G⁽q⁾⟩ / ‖Ĝ⁽q⁾‖²`; `Ĝ⁽q⁾` is scaled by `α` and
/// `Ĥ⁽q⁾` by `1/α`. `T̂` is left as is.
pub fn resolve_scaling(result: &EstimationResult, truth: &ChannelPair) -> Result<EstimationResult> {
    let (Some(h), Some(g)) = (&result.h_hat, &result.g_hat) else {
        return arg_err("result carries no per-channel estimates");
    };
    if h.shape() != truth.h.shape() || g.shape() != truth.g.shape() {
        return dim_err("estimate and truth shapes differ");
    }
    let nbar = truth.nbar;
    let mut h = h.clone();
    let mut g = g.clone();
    let mut alphas = Vec::with_capacity(truth.q);
    for group in 0..truth.q {
        let gq = g.columns(group * nbar, nbar).into_owned();
        let energy = gq.norm_squared();
        if energy == 0.0 {
            return Err(Error::DegenerateInput(format!("group {group} estimate has zero norm")));
        }
        let alpha = gq.dotc(&truth.g_block(group)) / energy;
        let scaled_g = gq * alpha;
        g.columns_mut(group * nbar, nbar).copy_from(&scaled_g);
        let scaled_h = h.columns(group * nbar, nbar) / alpha;
        h.columns_mut(group * nbar, nbar).copy_from(&scaled_h);
        alphas.push(alpha);
    }
    Ok(EstimationResult {
        h_hat: Some(h),
        g_hat: Some(g),
        ambiguity: Some(alphas),
        ..result.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{combined_channel, draw_channels, synthesize_pilots};
    use crate::design::DesignConfig;
    use crate::tensor::Tensor3;
    use crate::testutil::{c, max_abs};
    use proptest::prelude::*;

    fn nmse(est: &ComplexMatrix, truth: &ComplexMatrix) -> f64 {
        (est - truth).norm_squared() / truth.norm_squared()
    }

    fn setup(
        nbar: usize,
        q: usize,
        k: usize,
        m: (usize, usize),
        algorithm: Algorithm,
        snr: f64,
        seed: u64,
    ) -> (TrainingDesign, ChannelPair, ReceivedPilots) {
        let cfg = DesignConfig::for_algorithm(nbar, q, k, algorithm, seed).unwrap();
        let d = TrainingDesign::build(cfg).unwrap();
        let ch = draw_channels(m.0, m.1, nbar, q, seed + 1).unwrap();
        let y = synthesize_pilots(&d, &ch, snr, seed + 2).unwrap();
        (d, ch, y)
    }

    const NOISELESS: f64 = f64::INFINITY;

    #[test]
    fn ls_noiseless_exact() {
        for (nbar, q, k) in [(2, 2, 8), (1, 3, 3), (3, 1, 9), (2, 2, 12)] {
            let (d, ch, y) = setup(nbar, q, k, (2, 3), Algorithm::Ls, NOISELESS, 1);
            let est = estimate_ls(&y, &d).unwrap();
            assert!(nmse(&est.t_hat, &combined_channel(&ch)) < 1e-20);
            assert!(est.h_hat.is_none() && est.g_hat.is_none());
        }
        // rotated designs go through the pseudo-inverse
        let cfg = DesignConfig::with_blocks(2, 2, 8).unwrap().rotated(true).seed(3);
        let d = TrainingDesign::build(cfg).unwrap();
        assert!(!d.is_column_orthogonal());
        let ch = draw_channels(2, 2, 2, 2, 4).unwrap();
        let y = synthesize_pilots(&d, &ch, NOISELESS, 0).unwrap();
        assert!(nmse(&estimate_ls(&y, &d).unwrap().t_hat, &combined_channel(&ch)) < 1e-20);
    }

    #[test]
    fn ls_scalar_case() {
        let d = TrainingDesign::build(DesignConfig::new(1, 1, 1, 1).unwrap()).unwrap();
        let ch = ChannelPair::new(
            ComplexMatrix::from_row_slice(2, 1, &[c(1.0, 2.0), c(0.5, 0.0)]),
            ComplexMatrix::from_row_slice(3, 1, &[c(-1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)]),
            1,
            1,
        )
        .unwrap();
        let y = synthesize_pilots(&d, &ch, NOISELESS, 0).unwrap();
        let est = estimate_ls(&y, &d).unwrap();
        let vec_g = ch.g.column(0);
        let vec_h = ch.h.column(0);
        // T = vec(G)·vec(H)ᵀ stacked as vec, i.e. h ⊗ g
        for mt in 0..2 {
            for mr in 0..3 {
                assert!((est.t_hat[(mr + 3 * mt, 0)] - vec_g[mr] * vec_h[mt]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn ls_rejects_short_training() {
        let (d, _, y) = setup(2, 2, 4, (2, 2), Algorithm::Ls, NOISELESS, 0);
        match estimate_ls(&y, &d) {
            Err(Error::Identifiability(rep)) => assert!(!rep.passed()),
            other => panic!("expected identifiability error, got {other:?}"),
        }
        assert!(matches!(estimate_btkf(&y, &d), Err(Error::Identifiability(_))));
    }

    #[test]
    fn matched_filter_equals_pseudo_inverse() {
        let d = TrainingDesign::build(DesignConfig::new(2, 3, 4, 4).unwrap()).unwrap();
        assert!(d.is_column_orthogonal());
        assert!(max_abs(&(d.ls_filter() - pinv(d.s3()))) < 1e-12);
    }

    fn group_scalar(est: &ComplexMatrix, truth: &ComplexMatrix) -> (Complex64, f64) {
        let s = truth.dotc(est) / truth.norm_squared();
        (s, (est - truth * s).norm() / est.norm())
    }

    #[test]
    fn btkf_noiseless_exact_with_group_scalars() {
        for (nbar, q, m) in [(2, 3, (2, 3)), (1, 4, (3, 2)), (3, 1, (2, 2)), (1, 1, (1, 1))] {
            let k = nbar * nbar * q;
            let (d, ch, y) = setup(nbar, q, k, m, Algorithm::Btkf, NOISELESS, 7);
            let est = estimate_btkf(&y, &d).unwrap();
            assert!(nmse(&est.t_hat, &combined_channel(&ch)) < 1e-20);
            let (h, g) = (est.h_hat.as_ref().unwrap(), est.g_hat.as_ref().unwrap());
            for group in 0..q {
                let (alpha, ga) = group_scalar(&column_block(g, group, nbar), &ch.g_block(group));
                let (beta, hb) = group_scalar(&column_block(h, group, nbar), &ch.h_block(group));
                assert!(ga < 1e-10 && hb < 1e-10);
                assert!((alpha * beta - 1.0).norm() < 1e-10);
            }
            assert_eq!(est.t_hat, block_kron(h, g, q).unwrap());
        }
    }

    #[test]
    fn btkf_first_stage_is_ls() {
        let (d, _, y) = setup(2, 2, 8, (2, 2), Algorithm::Btkf, 10.0, 5);
        let ls = estimate_ls(&y, &d).unwrap();
        let btkf = estimate_btkf(&y, &d).unwrap();
        assert_eq!(btkf.filtered.unwrap(), ls.t_hat);
    }

    #[test]
    fn btkf_groups_are_independent() {
        let (d, _, y) = setup(2, 3, 12, (2, 3), Algorithm::Btkf, 10.0, 2);
        let z = estimate_btkf(&y, &d).unwrap().filtered.unwrap();
        let (h, g) = btkf_factorize(&z, 3, 2, 2, 3).unwrap();
        let perm = [2usize, 0, 1];
        let mut zp = z.clone();
        for (dst, &src) in perm.iter().enumerate() {
            zp.columns_mut(dst * 4, 4).copy_from(&z.columns(src * 4, 4));
        }
        let (hp, gp) = btkf_factorize(&zp, 3, 2, 2, 3).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            assert_eq!(column_block(&hp, dst, 2), column_block(&h, src, 2));
            assert_eq!(column_block(&gp, dst, 2), column_block(&g, src, 2));
        }
    }

    #[test]
    fn btkf_zero_block_is_degenerate() {
        let d = TrainingDesign::build(DesignConfig::new(1, 2, 1, 2).unwrap()).unwrap();
        let y = ReceivedPilots::noiseless(Tensor3::zeros(2, 2, 2));
        assert!(matches!(estimate_btkf(&y, &d), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn estimators_ignore_channel_scaling() {
        let (d, ch, _) = setup(2, 2, 8, (2, 3), Algorithm::Btkf, 10.0, 9);
        let beta = c(0.7, -1.3);
        let scaled = ChannelPair::new(&ch.h * beta, &ch.g / beta, 2, 2).unwrap();
        let y = synthesize_pilots(&d, &ch, 10.0, 1).unwrap();
        let ys = synthesize_pilots(&d, &scaled, 10.0, 1).unwrap();
        for alg in [Algorithm::Ls, Algorithm::Btkf] {
            let a = estimate(alg, &y, &d, &BtalsOptions::default()).unwrap().t_hat;
            let b = estimate(alg, &ys, &d, &BtalsOptions::default()).unwrap().t_hat;
            assert!((&a - &b).norm() / a.norm() < 1e-12, "{alg}");
        }
    }

    #[test]
    fn btals_noiseless_large_group() {
        let (d, ch, y) = setup(4, 16, 64, (4, 4), Algorithm::Btals, NOISELESS, 21);
        let opts = BtalsOptions {
            eta: 1e-20,
            ..BtalsOptions::default()
        };
        let est = estimate_btals(&y, &d, &opts).unwrap();
        assert!(*est.residuals.last().unwrap() <= 1e-16, "{:?}", est.residuals.last());
        assert!(nmse(&est.t_hat, &combined_channel(&ch)) <= 1e-8);
    }

    #[test]
    fn btals_from_truth_stops_immediately() {
        let (d, ch, y) = setup(2, 4, 8, (3, 2), Algorithm::Btals, NOISELESS, 4);
        let est = estimate_btals_with_init(&y, &d, &BtalsOptions::default(), ch.h.clone()).unwrap();
        assert!(est.converged);
        assert!(est.iterations.unwrap() <= 2);
    }

    #[test]
    fn btals_residuals_non_increasing() {
        for seed in 0..5 {
            let (d, _, y) = setup(2, 4, 6, (2, 2), Algorithm::Btals, 5.0, 100 + seed);
            let est = estimate_btals(&y, &d, &BtalsOptions::default()).unwrap();
            for w in est.residuals.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{w:?}");
            }
        }
    }

    #[test]
    fn btals_update_forms_agree() {
        let (d, _, y) = setup(2, 3, 5, (2, 3), Algorithm::Btals, 15.0, 8);
        let base = BtalsOptions {
            eta: 1e-300,
            max_iters: 5,
            ..BtalsOptions::default()
        };
        let full = estimate_btals(&y, &d, &base).unwrap();
        let block = estimate_btals(&y, &d, &BtalsOptions { form: UpdateForm::Block, ..base }).unwrap();
        assert_eq!(full.iterations, Some(5));
        let rel = |a: &Option<ComplexMatrix>, b: &Option<ComplexMatrix>| {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            (a - b).norm() / b.norm()
        };
        assert!(rel(&full.h_hat, &block.h_hat) < 1e-10);
        assert!(rel(&full.g_hat, &block.g_hat) < 1e-10);
    }

    #[test]
    fn btals_option_and_gating_errors() {
        let (d, _, y) = setup(2, 4, 8, (2, 2), Algorithm::Btals, 10.0, 0);
        let bad = BtalsOptions {
            eta: 0.0,
            ..BtalsOptions::default()
        };
        assert!(matches!(estimate_btals(&y, &d, &bad), Err(Error::Argument(_))));
        let bad = BtalsOptions {
            max_iters: 0,
            ..BtalsOptions::default()
        };
        assert!(matches!(estimate_btals(&y, &d, &bad), Err(Error::Argument(_))));

        let (d, _, y) = setup(4, 4, 2, (2, 2), Algorithm::Btals, 10.0, 0);
        assert!(matches!(
            estimate_btals(&y, &d, &BtalsOptions::default()),
            Err(Error::Identifiability(_))
        ));
    }

    #[test]
    fn resolve_scaling_cases() {
        let ch = draw_channels(2, 3, 2, 2, 1).unwrap();
        let fake = EstimationResult {
            algorithm: Algorithm::Btkf,
            h_hat: Some(&ch.h / c(2.0, 0.0)),
            g_hat: Some(&ch.g * c(2.0, 0.0)),
            t_hat: combined_channel(&ch),
            filtered: None,
            iterations: None,
            residuals: Vec::new(),
            converged: true,
            ambiguity: None,
        };
        let res = resolve_scaling(&fake, &ch).unwrap();
        assert!(max_abs(&(res.g_hat.as_ref().unwrap() - &ch.g)) < 1e-15);
        assert!(max_abs(&(res.h_hat.as_ref().unwrap() - &ch.h)) < 1e-15);
        assert_eq!(res.ambiguity.as_ref().unwrap().len(), 2);

        let (d, ch, y) = setup(2, 2, 8, (2, 2), Algorithm::Btkf, NOISELESS, 3);
        let est = estimate_btkf(&y, &d).unwrap();
        let res = resolve_scaling(&est, &ch).unwrap();
        assert_eq!(res.t_hat, est.t_hat);
        let rebuilt = block_kron(res.h_hat.as_ref().unwrap(), res.g_hat.as_ref().unwrap(), 2).unwrap();
        assert!(max_abs(&(rebuilt - &est.t_hat)) < 1e-14);
        assert!(nmse(res.h_hat.as_ref().unwrap(), &ch.h) < 1e-10);
        assert!(nmse(res.g_hat.as_ref().unwrap(), &ch.g) < 1e-10);

        let ls = estimate_ls(&y, &d).unwrap();
        assert!(resolve_scaling(&ls, &ch).is_err());
        let mut zero = est.clone();
        zero.g_hat = Some(ComplexMatrix::zeros(2, 4));
        assert!(matches!(resolve_scaling(&zero, &ch), Err(Error::DegenerateInput(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn noiseless_exactness_at_minimum_training(
            nbar in 1usize..=3,
            q in 1usize..=3,
            m_t in 1usize..=3,
            m_r in 1usize..=3,
            seed in any::<u64>(),
        ) {
            let k = nbar * nbar * q;
            let (d, ch, y) = setup(nbar, q, k, (m_t, m_r), Algorithm::Btkf, NOISELESS, seed % 1_000_000);
            let truth = combined_channel(&ch);
            prop_assert!(nmse(&estimate_ls(&y, &d).unwrap().t_hat, &truth) <= 1e-10);
            prop_assert!(nmse(&estimate_btkf(&y, &d).unwrap().t_hat, &truth) <= 1e-10);
        }

        #[test]
        fn residuals_never_increase(seed in 0u64..1000, snr in 0.0f64..30.0) {
            let (d, _, y) = setup(2, 2, 4, (2, 2), Algorithm::Btals, snr, seed);
            let est = estimate_btals(&y, &d, &BtalsOptions { init_seed: seed, ..BtalsOptions::default() }).unwrap();
            for w in est.residuals.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
