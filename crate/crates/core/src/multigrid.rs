//! Mixed- and progressive-precision multigrid in BFP arithmetic.
//!
//! The hierarchy is set up in [`ExtFloat`] (assembly, `D = I` scaling,
//! Chebyshev coefficients); the solve runs entirely on BFP blocks through
//! [`qcomp`] / [`nnqcomp`]. Level `j` has mesh size `2^-j`, level 1 is the
//! coarsest.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rug::{Float, Rational};
use thiserror::Error;

use crate::bfp::{BfpBlock, BfpScalar, GAMMA_WIDTH};
use crate::blas::{nnqcomp, qcomp, BfpMatrix, BlasError, Eaxpby, Egemv, Espmv, ExactKernel, QcompOptions};
use crate::ext::{ext, ratio, ExtFloat, EXT_PREC};
use crate::fem::{prolongation, Discretization, FemError, Pde, ProblemSpec};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum MgError {
    #[error(transparent)]
    Blas(#[from] BlasError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("{0}")]
    Invalid(String),
}

/// Safety factor applied to the power-iteration estimate of `ρ(D^-1 A)`.
pub const RHO_SAFETY: f64 = 1.01;

/// Coefficients of two fused Chebyshev steps, `y = (c1 I + c2 A) r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebCoeffs {
    pub rho: Float,
    pub eta: Float,
    pub alpha: Float,
    pub c: Float,
    pub beta: Float,
    pub c1: Float,
    pub c2: Float,
}

/// `η` may be 0 or 1 here so the whole search grid is admissible.
pub fn chebyshev_coeffs(rho: &Float, eta: &Float) -> Result<ChebCoeffs, MgError> {
    if *rho <= 0 || *eta < 0 || *eta > 1 {
        return Err(MgError::Invalid(format!("chebyshev coefficients need ρ > 0 and η in [0, 1], got {rho}, {eta}")));
    }
    let prec = rho.prec().max(eta.prec());
    let alpha = Float::with_val(prec, 1 + eta) * rho / 2u32;
    let c = Float::with_val(prec, 1 - eta) * rho / 2u32;
    let beta = Float::with_val(prec, &alpha - Float::with_val(prec, c.square_ref()) / Float::with_val(prec, &alpha * 2u32));
    let c1 = Float::with_val(prec, 2u32) / &beta;
    let c2 = -(Float::with_val(prec, 1u32) / Float::with_val(prec, &alpha * &beta));
    Ok(ChebCoeffs { rho: rho.clone(), eta: eta.clone(), alpha, c, beta, c1, c2 })
}

/// Exact rational form of [`chebyshev_coeffs`], returning `(c1, c2)`.
pub fn chebyshev_coeffs_exact(rho: &Rational, eta: &Rational) -> Result<(Rational, Rational), MgError> {
    if *rho <= 0 || *eta < 0 || *eta > 1 {
        return Err(MgError::Invalid("chebyshev coefficients need ρ > 0 and η in [0, 1]".into()));
    }
    let alpha = Rational::from(1 + eta) * rho / 2u32;
    let c = Rational::from(1 - eta) * rho / 2u32;
    let beta = Rational::from(&alpha - Rational::from(c.square_ref()) / Rational::from(&alpha * 2u32));
    let c1 = Rational::from(2u32) / &beta;
    let c2 = -(Rational::from(1u32) / (alpha * beta));
    Ok((c1, c2))
}

/// Upper bound on the largest eigenvalue of `A x = λ D x`: power iteration on
/// `D^-1 A` with the `D`-Rayleigh quotient, times [`RHO_SAFETY`].
pub fn max_gen_eig_upper(a: &CsrMatrix<Float>, d: &[Float], prec: u32) -> Float {
    let n = a.rows();
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut x: Vec<Float> = (0..n)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ext(prec, (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
        })
        .collect();
    let mut lambda = Float::new(prec);
    let tol = ext(prec, 1e-20);
    for it in 0..200_000 {
        let y = a.mul_vec(&x, prec);
        let mut num = Float::new(prec);
        let mut den = Float::new(prec);
        for ((xi, yi), di) in x.iter().zip(&y).zip(d) {
            num += Float::with_val(prec, xi * yi);
            den += Float::with_val(prec, xi.square_ref()) * di;
        }
        let next = num / den;
        let change = Float::with_val(prec, &next - &lambda).abs();
        lambda = next;
        if it > 10 && change <= Float::with_val(prec, &lambda * &tol) {
            break;
        }
        let mut scale = Float::new(prec);
        x = y.into_iter().zip(d).map(|(yi, di)| yi / di).collect();
        for v in &x {
            if Float::with_val(prec, v.abs_ref()) > scale {
                scale = Float::with_val(prec, v.abs_ref());
            }
        }
        for v in &mut x {
            *v /= &scale;
        }
    }
    lambda * ext(prec, RHO_SAFETY)
}

/// Mantissa widths of one level: `w̌` (stored `A`, `b`), `w` (working), `ẇ` (inner).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Widths {
    pub input: u32,
    pub work: u32,
    pub inner: u32,
}

impl Widths {
    pub fn flat(w: u32) -> Widths {
        Widths { input: w, work: w, inner: w }
    }

    pub fn is_ordered(&self) -> bool {
        self.input >= self.work && self.work >= self.inner
    }

    /// Raises `w` and `w̌` as needed so that `w̌ >= w >= ẇ`.
    pub fn ordered(self) -> Widths {
        let work = self.work.max(self.inner);
        Widths { input: self.input.max(work), work, inner: self.inner }
    }
}

/// Widths for levels `1..=L`; levels beyond the last entry reuse it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrecisionSchedule {
    levels: Vec<Widths>,
}

impl PrecisionSchedule {
    /// The same widths on every level.
    pub fn flat(widths: Widths) -> PrecisionSchedule {
        PrecisionSchedule { levels: vec![widths] }
    }

    pub fn from_fn(levels: u32, f: impl Fn(u32) -> Widths) -> PrecisionSchedule {
        assert!(levels >= 1);
        PrecisionSchedule { levels: (1..=levels).map(f).collect() }
    }

    /// `w̌_j = j(m+k) + q̌`, `w_j = kj + q_w`, `ẇ_j = jm + q̇`, then ordered.
    pub fn affine(levels: u32, m: u32, k: u32, q_input: u32, q_work: u32, q_inner: u32) -> PrecisionSchedule {
        PrecisionSchedule::from_fn(levels, |j| {
            Widths { input: j * (m + k) + q_input, work: k * j + q_work, inner: j * m + q_inner }.ordered()
        })
    }

    pub fn at(&self, level: u32) -> Widths {
        let i = (level.max(1) as usize - 1).min(self.levels.len() - 1);
        self.levels[i]
    }

    pub fn levels(&self) -> &[Widths] {
        &self.levels
    }

    pub fn is_ordered(&self) -> bool {
        self.levels.iter().all(Widths::is_ordered)
    }
}

/// The eight kernel call sites of IR, V-cycle and FMG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    IrResidualFirst,
    IrResidual,
    IrCorrection,
    Relax,
    VResidual,
    Restrict,
    VCorrection,
    FmgProlong,
}

impl Step {
    pub const ALL: [Step; 8] = [
        Step::IrResidualFirst,
        Step::IrResidual,
        Step::IrCorrection,
        Step::Relax,
        Step::VResidual,
        Step::Restrict,
        Step::VCorrection,
        Step::FmgProlong,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Step::IrResidualFirst => "ir_residual_first",
            Step::IrResidual => "ir_residual",
            Step::IrCorrection => "ir_correction",
            Step::Relax => "v_relax",
            Step::VResidual => "v_residual",
            Step::Restrict => "v_restrict",
            Step::VCorrection => "v_correction",
            Step::FmgProlong => "fmg_prolong",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormalizationMode {
    /// Every call through `qcomp`.
    Qcomp,
    /// Every call through `nnqcomp`.
    Nnqcomp,
    /// `qcomp` for the IR residual of the first iterations, `nnqcomp` elsewhere.
    Hybrid,
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormalizationMode::Qcomp => "qcomp",
            NormalizationMode::Nnqcomp => "nnqcomp",
            NormalizationMode::Hybrid => "hybrid",
        })
    }
}

impl FromStr for NormalizationMode {
    type Err = MgError;
    fn from_str(s: &str) -> Result<Self, MgError> {
        match s {
            "qcomp" => Ok(NormalizationMode::Qcomp),
            "nnqcomp" => Ok(NormalizationMode::Nnqcomp),
            "hybrid" => Ok(NormalizationMode::Hybrid),
            _ => Err(MgError::Invalid(format!("unknown normalization mode {s:?}"))),
        }
    }
}

/// Rule for `γ` and `w_tmp` at each call site.
///
/// `γ` per step, with all norms taken as exact upper bounds of the BFP
/// operands:
///
/// | step | γ |
/// |---|---|
/// | IR residual, i = 1 | last residual norm of the coarser FMG level |
/// | IR residual, i > 1 | previous residual norm |
/// | IR correction | ‖x‖ + ‖y‖ |
/// | V relax | c1 ‖r‖ |
/// | V residual | (2 c1 + 1) ‖r‖ / 4 |
/// | V restrict | ‖R‖ ‖r_v‖ |
/// | V correction | ‖y‖ + ‖d‖ |
/// | FMG prolong | ‖x‖ |
///
/// Without a coarser level the first residual uses `‖A‖ ‖x‖ + ‖b‖`, which is
/// `‖b‖` for a zero guess.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GammaPolicy {
    pub mode: NormalizationMode,
    /// `w*_add` indexed by [`Step::index`].
    pub w_add: [u32; 8],
    /// `w_add^max`; `None` means no cap.
    pub w_add_cap: Option<u32>,
    /// IR iterations that keep `qcomp` for the residual in hybrid mode.
    pub hybrid_iters: usize,
    /// Repeat a saturated `nnqcomp` call through `qcomp`.
    pub saturation_fallback: bool,
}

impl Default for GammaPolicy {
    fn default() -> Self {
        GammaPolicy { mode: NormalizationMode::Qcomp, w_add: [5, 4, 0, 2, 4, 6, 1, 0], w_add_cap: None, hybrid_iters: 2, saturation_fallback: false }
    }
}

impl GammaPolicy {
    pub fn with_mode(mode: NormalizationMode) -> Self {
        GammaPolicy { mode, ..GammaPolicy::default() }
    }

    pub fn with_cap(cap: Option<u32>) -> Self {
        GammaPolicy { w_add_cap: cap, ..GammaPolicy::default() }
    }

    pub fn extra_bits(&self, step: Step) -> u32 {
        let add = self.w_add[step.index()];
        self.w_add_cap.map_or(add, |cap| add.min(cap))
    }

    pub fn w_tmp(&self, step: Step, w_out: u32) -> u32 {
        w_out + self.extra_bits(step)
    }

    /// Whether the call goes through `qcomp`.
    pub fn normalized(&self, step: Step, ir_iter: usize) -> bool {
        match self.mode {
            NormalizationMode::Qcomp => true,
            NormalizationMode::Nnqcomp => false,
            NormalizationMode::Hybrid => {
                matches!(step, Step::IrResidualFirst | Step::IrResidual) && ir_iter <= self.hybrid_iters
            }
        }
    }
}

/// Norm inputs of one call site; see [`GammaPolicy`].
#[derive(Debug, Clone)]
pub struct GammaContext {
    /// The step's primary norm (residual, `‖x‖`, ...).
    pub norm: BfpScalar,
    /// Second summand for the correction steps.
    pub other: Option<BfpScalar>,
    /// Constant factor (`c1`, `(2c1+1)/4`, `‖R‖`) rounded up.
    pub factor: Option<BfpScalar>,
}

/// `(γ, w_tmp)` for a call at `step` producing `w_out` bits.
pub fn gamma_policy_eval(policy: &GammaPolicy, step: Step, ctx: &GammaContext, w_out: u32) -> (BfpScalar, u32) {
    let mut gamma = ctx.norm.clone();
    if let Some(other) = &ctx.other {
        gamma = gamma.add_upper(other, GAMMA_WIDTH);
    }
    if let Some(f) = &ctx.factor {
        gamma = gamma.mul_upper(f, GAMMA_WIDTH);
    }
    (gamma, policy.w_tmp(step, w_out))
}

/// `‖x‖_∞` rounded up, or `None` for a zero block.
fn norm(x: &BfpBlock) -> Option<BfpScalar> {
    (!x.is_zero()).then(|| x.inf_norm_upper(GAMMA_WIDTH))
}

/// `‖x‖ + ‖y‖`, ignoring zero operands.
fn sum_norms(x: &BfpBlock, y: &BfpBlock) -> BfpScalar {
    match (norm(x), norm(y)) {
        (Some(a), Some(b)) => a.add_upper(&b, GAMMA_WIDTH),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => x.inf_norm_upper(GAMMA_WIDTH),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    A,
    P,
    R,
}

/// One level of the hierarchy after the `D = I` setup.
#[derive(Debug)]
pub struct LevelData {
    pub level: u32,
    /// Unscaled discretization (original `A`, `b`, error functional).
    pub disc: Discretization,
    /// `D^-1 A`.
    pub a: CsrMatrix<Float>,
    /// `D^-1 b`.
    pub b: Vec<Float>,
    pub diag: Vec<Float>,
    /// Prolongation from level `level - 1`.
    pub p: Option<CsrMatrix<Float>>,
    /// `D_c^-1 Pᵀ D_f`, restriction to level `level - 1`.
    pub r: Option<CsrMatrix<Float>>,
    pub a_norm: Float,
    pub r_norm: Option<Float>,
    pub reference: Option<Vec<Float>>,
    pub reference_error: Option<Float>,
    ops: Mutex<HashMap<(Operator, u32), Arc<BfpMatrix>>>,
    rhs: Mutex<HashMap<u32, Arc<BfpBlock>>>,
    energy: Mutex<Option<Arc<EnergyNorm>>>,
}

impl LevelData {
    pub fn dofs(&self) -> usize {
        self.a.rows()
    }

    fn operator(&self, op: Operator) -> &CsrMatrix<Float> {
        match op {
            Operator::A => &self.a,
            Operator::P => self.p.as_ref().expect("no prolongation on the coarsest level"),
            Operator::R => self.r.as_ref().expect("no restriction on the coarsest level"),
        }
    }

    /// `op` quantized to `w` bits, cached per width.
    pub fn quant(&self, op: Operator, w: u32) -> Arc<BfpMatrix> {
        let mut cache = self.ops.lock().unwrap();
        Arc::clone(cache.entry((op, w)).or_insert_with(|| Arc::new(BfpMatrix::from_csr(self.operator(op), w))))
    }

    pub fn quant_b(&self, w: u32) -> Arc<BfpBlock> {
        let mut cache = self.rhs.lock().unwrap();
        Arc::clone(cache.entry(w).or_insert_with(|| Arc::new(BfpBlock::from_float_vector(&self.b, w))))
    }

    /// `‖u - x‖_L` for BFP coefficients `x`.
    pub fn energy_error(&self, x: &BfpBlock) -> Float {
        self.disc.energy_error(&x.to_floats(self.disc.prec))
    }

    /// `‖u - x‖_L / ‖u - u_h‖_L`.
    pub fn error_ratio(&self, x: &BfpBlock) -> f64 {
        let reference = self.reference_error.as_ref().expect("hierarchy built without reference solutions");
        (self.energy_error(x) / reference).to_f64()
    }

    /// Energy-norm machinery for operator rates on this level.
    pub fn energy_norm(&self) -> Result<Arc<EnergyNorm>, MgError> {
        let mut slot = self.energy.lock().unwrap();
        if let Some(e) = slot.as_ref() {
            return Ok(Arc::clone(e));
        }
        let e = Arc::new(EnergyNorm::new(&self.disc.a.to_f64())?);
        *slot = Some(Arc::clone(&e));
        Ok(e)
    }
}

/// `‖V‖_A = ‖Lᵀ V L^-T‖_2` for `A = L Lᵀ`, in double precision.
#[derive(Debug, Clone)]
pub struct EnergyNorm {
    l_t: DMatrix<f64>,
    l_inv_t: DMatrix<f64>,
}

impl EnergyNorm {
    pub fn new(a: &CsrMatrix<f64>) -> Result<EnergyNorm, MgError> {
        let n = a.rows();
        let dense = DMatrix::from_row_slice(n, n, &a.to_dense());
        let chol = dense.cholesky().ok_or_else(|| MgError::Invalid("energy matrix is not positive definite".into()))?;
        let l_t = chol.l().transpose();
        let l_inv_t = l_t
            .clone()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| MgError::Invalid("singular Cholesky factor".into()))?;
        Ok(EnergyNorm { l_t, l_inv_t })
    }

    pub fn dim(&self) -> usize {
        self.l_t.nrows()
    }

    /// `‖v‖_A` for a linear map given by its columns.
    pub fn operator_norm(&self, v: &DMatrix<f64>) -> f64 {
        let n = self.dim();
        if n <= 256 {
            return (&self.l_t * v * &self.l_inv_t).singular_values().max();
        }
        let apply = |x: &DVector<f64>| &self.l_t * (v * (&self.l_inv_t * x));
        let apply_t = |x: &DVector<f64>| self.l_inv_t.tr_mul(&v.tr_mul(&self.l_t.tr_mul(x)));
        lanczos_max(n, |x| apply_t(&apply(x))).max(0.0).sqrt()
    }
}

/// Largest eigenvalue of a symmetric operator by Lanczos with full
/// reorthogonalization.
pub(crate) fn lanczos_max(n: usize, op: impl Fn(&DVector<f64>) -> DVector<f64>) -> f64 {
    let steps = n.min(200);
    let mut q = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut last = f64::NAN;
    for k in 0..steps {
        let mut w = op(&basis[k]);
        alpha.push(basis[k].dot(&w));
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let t = DMatrix::from_fn(k + 1, k + 1, |i, j| match i.abs_diff(j) {
            0 => alpha[i],
            1 => beta[i.min(j)],
            _ => 0.0,
        });
        let lambda = t.symmetric_eigenvalues().max();
        let nb = w.norm();
        if nb <= 1e-14 * lambda.abs() || (k > 4 && (lambda - last).abs() <= 1e-15 * lambda.abs()) {
            return lambda;
        }
        last = lambda;
        beta.push(nb);
        basis.push(w / nb);
    }
    last
}

/// How `η` is chosen during setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Fixed(f64),
    /// Minimize the V-cycle rate over `η = i / steps`, `i = 0..=steps`.
    Grid(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyOptions {
    pub prec: u32,
    /// Level on which `ρ` and `η` are estimated (the finest if shallower).
    pub l_est: u32,
    pub eta: EtaChoice,
    /// Compute the direct reference solution and its error on every level.
    pub reference: bool,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        HierarchyOptions { prec: EXT_PREC, l_est: 5, eta: EtaChoice::Grid(100), reference: true }
    }
}

/// Levels `1..=L` of one problem with shared Chebyshev coefficients.
#[derive(Debug)]
pub struct Hierarchy {
    pub spec: ProblemSpec,
    pub prec: u32,
    levels: Vec<LevelData>,
    pub l_est: u32,
    pub cheb: ChebCoeffs,
    /// V-cycle rates over the `η` grid (empty for a fixed `η`).
    pub eta_rates: Vec<f64>,
    c1_up: BfpScalar,
    vres_up: BfpScalar,
    scalars: Mutex<HashMap<u32, (BfpScalar, BfpScalar)>>,
}

impl Hierarchy {
    pub fn build(spec: &ProblemSpec, opts: &HierarchyOptions) -> Result<Hierarchy, MgError> {
        spec.validate()?;
        let prec = opts.prec;
        let top = spec.level;
        let mut levels: Vec<LevelData> = Vec::with_capacity(top as usize);
        for j in 1..=top {
            let s = spec.with_level(j);
            let disc = Discretization::new(&s, prec)?;
            let diag = disc.a.diagonal();
            if diag.iter().any(|d| *d <= 0) {
                return Err(MgError::Invalid(format!("non-positive diagonal on level {j}")));
            }
            let inv: Vec<Float> = diag.iter().map(|d| Float::with_val(prec, 1u32) / d).collect();
            let a = disc.a.scale(Some(&inv), None, prec);
            let b = disc.b.iter().zip(&inv).map(|(b, d)| Float::with_val(prec, b * d)).collect();
            let (p, r, r_norm) = if j > 1 {
                let p = prolongation(&s, prec);
                let coarse_inv: Vec<Float> =
                    levels[j as usize - 2].diag.iter().map(|d| Float::with_val(prec, 1u32) / d).collect();
                let r = p.transpose().scale(Some(&coarse_inv), Some(&diag), prec);
                let rn = r.inf_norm(prec);
                (Some(p), Some(r), Some(rn))
            } else {
                (None, None, None)
            };
            let (reference, reference_error) = if opts.reference {
                let u = disc.reference_solve()?;
                let e = disc.energy_error(&u);
                (Some(u), Some(e))
            } else {
                (None, None)
            };
            let a_norm = a.inf_norm(prec);
            levels.push(LevelData {
                level: j,
                disc,
                a,
                b,
                diag,
                p,
                r,
                a_norm,
                r_norm,
                reference,
                reference_error,
                ops: Mutex::default(),
                rhs: Mutex::default(),
                energy: Mutex::default(),
            });
        }
        let l_est = opts.l_est.clamp(1, top);
        let est = &levels[l_est as usize - 1];
        let rho = max_gen_eig_upper(&est.disc.a, &est.diag, prec);
        let (eta, eta_rates) = match opts.eta {
            EtaChoice::Fixed(v) => (Float::with_val(prec, v), Vec::new()),
            EtaChoice::Grid(steps) => {
                let (i, rates) = estimate_eta(&levels[..l_est as usize], &rho, steps)?;
                (ratio(prec, i as i64, i64::from(steps.max(1))), rates)
            }
        };
        let cheb = chebyshev_coeffs(&rho, &eta)?;
        debug!("ρ = {}, η = {}, c1 = {}, c2 = {}", rho.to_f64(), eta.to_f64(), cheb.c1.to_f64(), cheb.c2.to_f64());
        let c1_up = BfpScalar::from_float_upper(&cheb.c1, GAMMA_WIDTH);
        let vres = (Float::with_val(prec, &cheb.c1 * 2u32) + 1u32) / 4u32;
        let vres_up = BfpScalar::from_float_upper(&vres, GAMMA_WIDTH);
        Ok(Hierarchy {
            spec: spec.clone(),
            prec,
            levels,
            l_est,
            cheb,
            eta_rates,
            c1_up,
            vres_up,
            scalars: Mutex::default(),
        })
    }

    pub fn depth(&self) -> u32 {
        self.levels.len() as u32
    }

    pub fn level(&self, j: u32) -> &LevelData {
        &self.levels[j as usize - 1]
    }

    pub fn levels(&self) -> &[LevelData] {
        &self.levels
    }

    pub fn eta(&self) -> f64 {
        self.cheb.eta.to_f64()
    }

    /// `(c1, c2)` quantized (floor) to `w` bits.
    pub fn cheb_scalars(&self, w: u32) -> (BfpScalar, BfpScalar) {
        let mut cache = self.scalars.lock().unwrap();
        cache
            .entry(w)
            .or_insert_with(|| {
                (BfpScalar::from_float(&self.cheb.c1, w.max(2)), BfpScalar::from_float(&self.cheb.c2, w.max(2)))
            })
            .clone()
    }
}

/// Exact-arithmetic model of the V-cycle in double precision.
struct Model<'a> {
    levels: Vec<(CsrMatrix<f64>, Option<CsrMatrix<f64>>, Option<CsrMatrix<f64>>)>,
    energy: &'a EnergyNorm,
}

impl Model<'_> {
    fn vcycle(&self, l: usize, r: &[f64], c1: f64, c2: f64) -> Vec<f64> {
        let (a, p, rr) = &self.levels[l - 1];
        let ar = a.mul_vec_f64(r);
        let mut y: Vec<f64> = ar.iter().zip(r).map(|(ar, r)| c2 * ar + c1 * r).collect();
        if l > 1 {
            let ay = a.mul_vec_f64(&y);
            let rv: Vec<f64> = ay.iter().zip(r).map(|(a, r)| a - r).collect();
            let rc = rr.as_ref().unwrap().mul_vec_f64(&rv);
            let d = self.vcycle(l - 1, &rc, c1, c2);
            let pd = p.as_ref().unwrap().mul_vec_f64(&d);
            for (yi, pi) in y.iter_mut().zip(pd) {
                *yi -= pi;
            }
        }
        y
    }

    /// `‖I - B A‖_A` of one IR-V step on the finest model level.
    fn rate(&self, c1: f64, c2: f64) -> f64 {
        let l = self.levels.len();
        let a = &self.levels[l - 1].0;
        let n = a.rows();
        let mut v = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let r = a.mul_vec_f64(&e);
            let y = self.vcycle(l, &r, c1, c2);
            for i in 0..n {
                v[(i, k)] = e[i] - y[i];
            }
        }
        self.energy.operator_norm(&v)
    }
}

/// Grid search for `η = i / steps` minimizing the exact V-cycle rate on the
/// finest of `levels`; ties go to the smaller `i`. Returns `i` and all rates.
pub fn estimate_eta(levels: &[LevelData], rho: &Float, steps: u32) -> Result<(u32, Vec<f64>), MgError> {
    let top = levels.last().ok_or_else(|| MgError::Invalid("empty hierarchy".into()))?;
    let energy = top.energy_norm()?;
    let model = Model {
        levels: levels.iter().map(|l| (l.a.to_f64(), l.p.as_ref().map(|p| p.to_f64()), l.r.as_ref().map(|r| r.to_f64()))).collect(),
        energy: &energy,
    };
    let steps = steps.max(1);
    let mut rates = Vec::with_capacity(steps as usize + 1);
    let mut best = 0;
    for i in 0..=steps {
        let eta = ratio(rho.prec(), i64::from(i), i64::from(steps));
        let cheb = chebyshev_coeffs(rho, &eta)?;
        let rate = model.rate(cheb.c1.to_f64(), cheb.c2.to_f64());
        if rate < rates.get(best as usize).copied().unwrap_or(f64::INFINITY) {
            best = i;
        }
        rates.push(rate);
    }
    Ok((best, rates))
}

/// One kernel invocation, recorded when tracing is on.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: Step,
    pub level: u32,
    pub ir_iter: usize,
    pub w_out: u32,
    pub w_tmp: u32,
    pub gamma: f64,
    /// `‖z_out‖_∞`.
    pub out_norm: f64,
    pub normalized: bool,
    pub overflow: bool,
    pub underflow: bool,
    pub recomputed: bool,
    pub saturated: usize,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "step,level,ir_iter,w_out,w_tmp,gamma,out_norm,normalized,overflow,underflow,recomputed,saturated";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6e},{:.6e},{},{},{},{},{}",
            self.step,
            self.level,
            self.ir_iter,
            self.w_out,
            self.w_tmp,
            self.gamma,
            self.out_norm,
            u8::from(self.normalized),
            u8::from(self.overflow),
            u8::from(self.underflow),
            u8::from(self.recomputed),
            self.saturated
        )
    }
}

/// Right-hand side of an IR solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rhs {
    /// The level's `D^-1 b`.
    Level,
    /// Homogeneous system, used to build error propagation matrices.
    Zero,
}

#[derive(Debug, Clone)]
pub struct IrOutcome {
    pub x: BfpBlock,
    pub iterations: usize,
    pub residual_norms: Vec<f64>,
    /// Bound on the last computed residual, the next level's first `γ`.
    pub last_residual: Option<BfpScalar>,
}

#[derive(Debug, Clone)]
pub struct FmgOutcome {
    /// Approximation on every level `1..=ℓ`.
    pub solutions: Vec<BfpBlock>,
}

/// BFP solver bound to a hierarchy, a width schedule and a `γ` policy.
pub struct Solver<'h> {
    h: &'h Hierarchy,
    pub schedule: PrecisionSchedule,
    pub policy: GammaPolicy,
    pub trace: Option<Vec<TraceRecord>>,
}

impl<'h> Solver<'h> {
    pub fn new(h: &'h Hierarchy, schedule: PrecisionSchedule, policy: GammaPolicy) -> Solver<'h> {
        Solver { h, schedule, policy, trace: None }
    }

    pub fn traced(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn hierarchy(&self) -> &'h Hierarchy {
        self.h
    }

    fn run(
        &mut self,
        step: Step,
        level: u32,
        ir_iter: usize,
        w_out: u32,
        ctx: GammaContext,
        kernel: &dyn ExactKernel,
    ) -> Result<BfpBlock, MgError> {
        let (gamma, w_tmp) = gamma_policy_eval(&self.policy, step, &ctx, w_out);
        let normalized = self.policy.normalized(step, ir_iter);
        let (block, report, w_tmp, normalized) = if normalized {
            let (b, r) = qcomp(kernel, w_out, w_tmp, &gamma, QcompOptions::default())?;
            (b, r, w_tmp, true)
        } else {
            let (b, r) = nnqcomp(kernel, w_out, &gamma)?;
            if r.saturated > 0 && self.policy.saturation_fallback {
                let (b, mut again) = qcomp(kernel, w_out, w_tmp, &gamma, QcompOptions::default())?;
                again.saturated = r.saturated;
                (b, again, w_tmp, true)
            } else {
                (b, r, w_out, false)
            }
        };
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                step,
                level,
                ir_iter,
                w_out,
                w_tmp,
                gamma: gamma.to_f64(),
                out_norm: if block.is_zero() { 0.0 } else { block.inf_norm_upper(GAMMA_WIDTH).to_f64() },
                normalized,
                overflow: report.window.overflow,
                underflow: report.window.underflow,
                recomputed: report.recomputed,
                saturated: report.saturated,
            });
        }
        Ok(block)
    }

    /// Iterative refinement on `level` with one V(1,0)-cycle per iteration.
    ///
    /// Runs at most `max_iters` corrections, stops early when `‖r‖_∞ < tol`
    /// or when `observer(i, x)` returns false after correction `i`.
    #[allow(clippy::too_many_arguments)]
    pub fn ir(
        &mut self,
        level: u32,
        rhs: Rhs,
        x0: BfpBlock,
        max_iters: usize,
        tol: Option<f64>,
        gamma_first: Option<BfpScalar>,
        observer: &mut dyn FnMut(usize, &BfpBlock) -> bool,
    ) -> Result<IrOutcome, MgError> {
        let w = self.schedule.at(level);
        let lev = self.h.level(level);
        let a = lev.quant(Operator::A, w.input);
        let b = match rhs {
            Rhs::Level => lev.quant_b(w.input),
            Rhs::Zero => Arc::new(BfpBlock::zeros(lev.dofs(), w.input)),
        };
        let (one, minus_one) = (BfpScalar::one(), BfpScalar::minus_one());
        let mut x = x0;
        let mut prev: Option<BfpScalar> = None;
        let mut residual_norms = Vec::new();
        let mut iterations = 0;
        for i in 1..=max_iters {
            let (step, gamma) = if i == 1 {
                let g = gamma_first.clone().unwrap_or_else(|| {
                    let ax = norm(&x).map(|nx| nx.mul_upper(&BfpScalar::from_float_upper(&lev.a_norm, GAMMA_WIDTH), GAMMA_WIDTH));
                    match (ax, norm(&b)) {
                        (Some(p), Some(q)) => p.add_upper(&q, GAMMA_WIDTH),
                        (Some(p), None) | (None, Some(p)) => p,
                        (None, None) => x.inf_norm_upper(GAMMA_WIDTH),
                    }
                });
                (Step::IrResidualFirst, g)
            } else {
                (Step::IrResidual, prev.clone().expect("residual of the previous iteration"))
            };
            let ctx = GammaContext { norm: gamma, other: None, factor: None };
            let r = self.run(step, level, i, w.inner, ctx, &Egemv::new(&a, &x, &b, &one, &minus_one)?)?;
            let rn = r.inf_norm_upper(GAMMA_WIDTH);
            let exact_norm = if r.is_zero() { 0.0 } else { rn.to_f64() };
            residual_norms.push(exact_norm);
            prev = Some(rn);
            if tol.is_some_and(|t| exact_norm < t) {
                break;
            }
            let y = self.vcycle(level, &r)?;
            let ctx = GammaContext { norm: sum_norms(&x, &y), other: None, factor: None };
            x = self.run(Step::IrCorrection, level, i, w.work, ctx, &Eaxpby::new(&x, &y, &one, &minus_one)?)?;
            iterations = i;
            if !observer(i, &x) {
                break;
            }
        }
        Ok(IrOutcome { x, iterations, residual_norms, last_residual: prev })
    }

    /// V(1,0)-cycle approximating `A y = r` on `level`.
    pub fn vcycle(&mut self, level: u32, r: &BfpBlock) -> Result<BfpBlock, MgError> {
        let w = self.schedule.at(level).inner;
        let h = self.h;
        let lev = h.level(level);
        let a = lev.quant(Operator::A, w);
        let (c1, c2) = h.cheb_scalars(w);
        let r_norm = r.inf_norm_upper(GAMMA_WIDTH);
        let ctx = GammaContext { norm: r_norm.clone(), other: None, factor: Some(h.c1_up.clone()) };
        let mut y = self.run(Step::Relax, level, 0, w, ctx, &Egemv::new(&a, r, r, &c2, &c1)?)?;
        if level > 1 {
            let (one, minus_one) = (BfpScalar::one(), BfpScalar::minus_one());
            let ctx = GammaContext { norm: r_norm, other: None, factor: Some(h.vres_up.clone()) };
            let rv = self.run(Step::VResidual, level, 0, w, ctx, &Egemv::new(&a, &y, r, &one, &minus_one)?)?;
            let rm = lev.quant(Operator::R, w);
            let r_up = BfpScalar::from_float_upper(lev.r_norm.as_ref().unwrap(), GAMMA_WIDTH);
            let ctx = GammaContext { norm: rv.inf_norm_upper(GAMMA_WIDTH), other: None, factor: Some(r_up) };
            let rc = self.run(Step::Restrict, level, 0, w, ctx, &Espmv::new(&rm, &rv)?)?;
            let d = self.vcycle(level - 1, &rc)?;
            let pm = lev.quant(Operator::P, w);
            let ctx = GammaContext { norm: sum_norms(&y, &d), other: None, factor: None };
            y = self.run(Step::VCorrection, level, 0, w, ctx, &Egemv::new(&pm, &d, &y, &minus_one, &one)?)?;
        }
        Ok(y)
    }

    /// FMG(1,0) up to `level` with `iters(j)` IR-V iterations on level `j`.
    pub fn fmg(&mut self, level: u32, iters: &dyn Fn(u32) -> usize) -> Result<FmgOutcome, MgError> {
        let mut solutions = Vec::with_capacity(level as usize);
        self.fmg_level(level, iters, &mut solutions)?;
        Ok(FmgOutcome { solutions })
    }

    fn fmg_level(
        &mut self,
        level: u32,
        iters: &dyn Fn(u32) -> usize,
        out: &mut Vec<BfpBlock>,
    ) -> Result<Option<BfpScalar>, MgError> {
        let w = self.schedule.at(level);
        let (x, gamma_first) = if level > 1 {
            let coarse_residual = self.fmg_level(level - 1, iters, out)?;
            let xc = out.last().expect("coarse solution");
            let p = self.h.level(level).quant(Operator::P, w.work);
            let ctx = GammaContext { norm: xc.inf_norm_upper(GAMMA_WIDTH), other: None, factor: None };
            let kernel = Espmv::new(&p, xc)?;
            (self.run(Step::FmgProlong, level, 0, w.work, ctx, &kernel)?, coarse_residual)
        } else {
            (BfpBlock::zeros(self.h.level(1).dofs(), w.work), None)
        };
        let outcome = self.ir(level, Rhs::Level, x, iters(level), None, gamma_first, &mut |_, _| true)?;
        out.push(outcome.x);
        Ok(outcome.last_residual)
    }
}

/// IR-V iterations per FMG level for the model problems.
pub fn default_fmg_iterations(pde: Pde, degree: usize) -> usize {
    match pde {
        Pde::Poisson => [2, 1, 1, 3, 7, 15][degree.clamp(1, 6) - 1],
        Pde::Biharmonic => [2, 1, 2, 4][degree.clamp(3, 6) - 3],
    }
}

/// `‖V‖_A` of one IR-V step on `level`, with `V` built column by column in BFP.
pub fn conv_rate_vcycle(
    h: &Hierarchy,
    schedule: &PrecisionSchedule,
    policy: &GammaPolicy,
    level: u32,
) -> Result<f64, MgError> {
    let lev = h.level(level);
    let n = lev.dofs();
    let energy = lev.energy_norm()?;
    let mut solver = Solver::new(h, schedule.clone(), policy.clone());
    let w = schedule.at(level).work.max(2);
    let mut v = DMatrix::zeros(n, n);
    for k in 0..n {
        let x = BfpBlock::unit(n, k, w);
        let out = solver.ir(level, Rhs::Zero, x, 1, None, None, &mut |_, _| true)?;
        for (i, value) in out.x.to_f64s().into_iter().enumerate() {
            v[(i, k)] = value;
        }
    }
    Ok(energy.operator_norm(&v))
}

/// Smallest `q` in `lo..=hi` with `pred(q)`, assuming monotonicity; returns
/// `(hi, false)` if even `hi` fails.
pub fn min_satisfying(
    lo: u32,
    hi: u32,
    mut pred: impl FnMut(u32) -> Result<bool, MgError>,
) -> Result<(u32, bool), MgError> {
    if !pred(hi)? {
        return Ok((hi, false));
    }
    let (mut lo, mut hi) = (lo, hi);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok((hi, true))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecEstParams {
    pub j_c: u32,
    pub q_max: u32,
    pub rho_thresh: f64,
}

impl Default for PrecEstParams {
    fn default() -> Self {
        PrecEstParams { j_c: 5, q_max: 64, rho_thresh: 1.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecEstimate {
    /// Additive constant of `w̌_j = j(m+k) + q̌`.
    pub q_input: u32,
    /// Additive constant of `ẇ_j = jm + q̇`.
    pub q_inner: u32,
    pub rho_ref: f64,
    /// False if some search hit `q_max` without meeting the threshold.
    pub feasible: bool,
    /// `(which, q, rate)` for every rate evaluated.
    pub evaluations: Vec<(char, u32, f64)>,
}

/// Estimates `q̌` and `q̇` from V-cycle rates on level `j_c`, given the
/// working widths `work(j)`.
pub fn bfp_prec_est(
    h: &Hierarchy,
    work: &dyn Fn(u32) -> u32,
    params: &PrecEstParams,
    policy: &GammaPolicy,
) -> Result<PrecEstimate, MgError> {
    let j_c = params.j_c.min(h.depth());
    let m = h.spec.m() as u32;
    let k = h.spec.k() as u32;
    let schedule = |qc: u32, qd: u32| {
        PrecisionSchedule::from_fn(j_c, |j| Widths { input: j * (m + k) + qc, work: work(j), inner: j * m + qd })
    };
    let mut evaluations = Vec::new();
    let mut rate = |which: char, qc: u32, qd: u32| -> Result<f64, MgError> {
        let r = conv_rate_vcycle(h, &schedule(qc, qd), policy, j_c)?;
        evaluations.push((which, if which == 'c' { qc } else { qd }, r));
        Ok(r)
    };
    let rho_ref = rate('r', params.q_max, params.q_max)?;
    let (q_input, ok_c) =
        min_satisfying(1, params.q_max, |q| Ok(rate('c', q, params.q_max)? / rho_ref < params.rho_thresh))?;
    let (q_inner, ok_d) = min_satisfying(1, params.q_max, |q| Ok(rate('d', q_input, q)? / rho_ref < params.rho_thresh))?;
    if !(ok_c && ok_d) {
        warn!("precision estimation reached q_max = {} without meeting the rate threshold", params.q_max);
    }
    Ok(PrecEstimate { q_input, q_inner, rho_ref, feasible: ok_c && ok_d, evaluations })
}

/// Working-width surrogate `w_j = k j + q_w`: the smallest `q_w` for which FMG
/// reaches an error ratio of at most `ratio_bound` on level `j_c`, with `w̌`
/// and `ẇ` at their `q_max` schedules.
pub fn estimate_w(
    h: &Hierarchy,
    params: &PrecEstParams,
    ratio_bound: f64,
    iters: &dyn Fn(u32) -> usize,
    policy: &GammaPolicy,
) -> Result<(u32, bool), MgError> {
    let j_c = params.j_c.min(h.depth());
    let m = h.spec.m() as u32;
    let k = h.spec.k() as u32;
    let q_max = params.q_max;
    min_satisfying(1, q_max, |q| {
        let schedule = PrecisionSchedule::from_fn(j_c, |j| Widths {
            input: j * (m + k) + q_max,
            work: k * j + q,
            inner: j * m + q_max,
        });
        let mut solver = Solver::new(h, schedule, policy.clone());
        let out = solver.fmg(j_c, iters)?;
        Ok(h.level(j_c).error_ratio(out.solutions.last().unwrap()) <= ratio_bound)
    })
}

/// The same FMG(1,0) in [`ExtFloat`] arithmetic with exact coefficients;
/// returns the approximation on every level.
pub fn ext_fmg(h: &Hierarchy, level: u32, iters: &dyn Fn(u32) -> usize) -> Vec<Vec<ExtFloat>> {
    let prec = h.prec;
    let (c1, c2) = (&h.cheb.c1, &h.cheb.c2);
    fn vcycle(h: &Hierarchy, l: u32, r: &[Float], c1: &Float, c2: &Float, prec: u32) -> Vec<Float> {
        let lev = h.level(l);
        let ar = lev.a.mul_vec(r, prec);
        let mut y: Vec<Float> =
            ar.iter().zip(r).map(|(a, r)| Float::with_val(prec, c2 * a) + Float::with_val(prec, c1 * r)).collect();
        if l > 1 {
            let ay = lev.a.mul_vec(&y, prec);
            let rv: Vec<Float> = ay.into_iter().zip(r).map(|(a, r)| a - r).collect();
            let rc = lev.r.as_ref().unwrap().mul_vec(&rv, prec);
            let d = vcycle(h, l - 1, &rc, c1, c2, prec);
            let pd = lev.p.as_ref().unwrap().mul_vec(&d, prec);
            for (yi, pi) in y.iter_mut().zip(pd) {
                *yi -= pi;
            }
        }
        y
    }
    let mut out: Vec<Vec<Float>> = Vec::new();
    for l in 1..=level {
        let lev = h.level(l);
        let mut x = match out.last() {
            Some(xc) => lev.p.as_ref().unwrap().mul_vec(xc, prec),
            None => vec![Float::new(prec); lev.dofs()],
        };
        for _ in 0..iters(l) {
            let ax = lev.a.mul_vec(&x, prec);
            let r: Vec<Float> = ax.into_iter().zip(&lev.b).map(|(a, b)| a - b).collect();
            let y = vcycle(h, l, &r, c1, c2, prec);
            for (xi, yi) in x.iter_mut().zip(y) {
                *xi -= yi;
            }
        }
        out.push(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hierarchy(pde: Pde, p: usize, level: u32) -> Hierarchy {
        let spec = ProblemSpec::new(pde, 1, p, level).unwrap();
        let opts = HierarchyOptions { prec: 256, eta: EtaChoice::Grid(20), ..HierarchyOptions::default() };
        Hierarchy::build(&spec, &opts).unwrap()
    }

    #[test]
    fn chebyshev_closed_form() {
        let (c1, c2) = chebyshev_coeffs_exact(&Rational::from(2), &Rational::from((1, 2))).unwrap();
        assert_eq!(c1, Rational::from((24, 17)));
        assert_eq!(c2, Rational::from((-8, 17)));
        let f = chebyshev_coeffs(&Float::with_val(200, 2), &Float::with_val(200, 0.5)).unwrap();
        assert!((f.c1.to_f64() - 24.0 / 17.0).abs() < 1e-15);
        assert!(chebyshev_coeffs(&Float::with_val(64, -1), &Float::with_val(64, 0.5)).is_err());
    }

    #[test]
    fn power_iteration_bounds_linear_poisson() {
        let spec = ProblemSpec::new(Pde::Poisson, 1, 1, 5).unwrap();
        let d = Discretization::new(&spec, 200).unwrap();
        let rho = max_gen_eig_upper(&d.a, &d.a.diagonal(), 200).to_f64();
        let lmax = 1.0 + (std::f64::consts::PI / 32.0).cos();
        assert!(rho >= lmax && rho <= 1.01 * 2.0, "{rho}");
    }

    #[test]
    fn setup_scales_diagonal_to_one() {
        let h = hierarchy(Pde::Poisson, 2, 4);
        for lev in h.levels() {
            for i in 0..lev.dofs() {
                let v = lev.a.get(i, i).unwrap();
                assert!((Float::with_val(256, v - 1u32)).abs() < Float::with_val(256, 1e-70));
            }
        }
        assert!(h.cheb.c1 > 0 && h.cheb.c2 < 0);
        assert_eq!(h.eta_rates.len(), 21);
    }

    #[test]
    fn policy_widths_and_modes() {
        let p = GammaPolicy::default();
        assert_eq!(p.w_tmp(Step::Restrict, 10), 16);
        assert_eq!(GammaPolicy::with_cap(Some(2)).w_tmp(Step::Restrict, 10), 12);
        assert_eq!(GammaPolicy::with_cap(Some(0)).w_tmp(Step::IrResidualFirst, 10), 10);
        let hy = GammaPolicy::with_mode(NormalizationMode::Hybrid);
        assert!(hy.normalized(Step::IrResidual, 2));
        assert!(!hy.normalized(Step::IrResidual, 3));
        assert!(!hy.normalized(Step::Relax, 1));
    }

    #[test]
    fn fmg_call_counts_match_accounting() {
        let h = hierarchy(Pde::Poisson, 1, 5);
        let mut s = Solver::new(&h, PrecisionSchedule::flat(Widths::flat(60)), GammaPolicy::default()).traced();
        s.fmg(5, &|_| 2).unwrap();
        let finest = s.trace.unwrap().iter().filter(|t| t.level == 5).count();
        assert_eq!(finest, 13);
    }

    #[test]
    fn wide_fmg_agrees_with_extended_fmg() {
        let h = hierarchy(Pde::Poisson, 2, 5);
        let mut s = Solver::new(&h, PrecisionSchedule::flat(Widths::flat(240)), GammaPolicy::default());
        let out = s.fmg(5, &|_| 2).unwrap();
        let ext = ext_fmg(&h, 5, &|_| 2);
        let bfp = out.solutions[4].to_floats(256);
        let scale = crate::ext::max_abs(&ext[4], 256);
        for (a, b) in bfp.iter().zip(&ext[4]) {
            let diff = Float::with_val(256, a - b).abs() / &scale;
            assert!(diff < Float::with_val(256, 1e-45), "{diff}");
        }
    }

    #[test]
    fn zero_residual_gives_zero_correction() {
        let h = hierarchy(Pde::Poisson, 1, 4);
        let mut s = Solver::new(&h, PrecisionSchedule::flat(Widths::flat(20)), GammaPolicy::default());
        let y = s.vcycle(4, &BfpBlock::zeros(h.level(4).dofs(), 20)).unwrap();
        assert!(y.is_zero());
    }

    #[test]
    fn exact_vcycle_rate_is_below_one() {
        let h = hierarchy(Pde::Poisson, 1, 5);
        let rate = conv_rate_vcycle(&h, &PrecisionSchedule::flat(Widths::flat(200)), &GammaPolicy::default(), 5).unwrap();
        assert!(rate > 0.0 && rate < 1.0, "{rate}");
        let best = h.eta_rates.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((rate - best).abs() < 1e-6, "{rate} vs {best}");
    }

    #[test]
    fn binary_search_contract() {
        let (q, ok) = min_satisfying(1, 64, |q| Ok(q >= 17)).unwrap();
        assert_eq!((q, ok), (17, true));
        assert_eq!(min_satisfying(1, 64, |_| Ok(true)).unwrap(), (1, true));
        assert_eq!(min_satisfying(1, 64, |_| Ok(false)).unwrap(), (64, false));
    }
}
