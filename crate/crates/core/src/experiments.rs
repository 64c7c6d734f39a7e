//! Experiment drivers shared by the command line tool and the acceptance run.

use log::{debug, info, warn};
use rug::Float;

use crate::analysis::{self, AnalysisError};
use crate::bfp::BfpBlock;
use crate::fem::{Pde, ProblemSpec};
use crate::multigrid::{
    bfp_prec_est, default_fmg_iterations, estimate_w, GammaPolicy, Hierarchy, MgError, NormalizationMode,
    PrecEstParams, PrecisionSchedule, Rhs, Solver, Step, Widths,
};

/// Stopping rules of one accepted-or-not IR-V run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrAcceptance {
    pub max_iters: usize,
    pub ratio_bound: f64,
    /// Give up after this many iterations without a new best ratio.
    pub stagnation: usize,
    /// Give up once the ratio exceeds this value.
    pub divergence: f64,
}

impl Default for IrAcceptance {
    fn default() -> Self {
        IrAcceptance { max_iters: 50, ratio_bound: 1.5, stagnation: 10, divergence: 1e12 }
    }
}

/// Runs IR-V on level `j` and reports whether the ratio bound was reached.
pub fn ir_reaches(
    h: &Hierarchy,
    j: u32,
    schedule: &PrecisionSchedule,
    policy: &GammaPolicy,
    x0: BfpBlock,
    rules: &IrAcceptance,
) -> Result<(bool, Vec<f64>), MgError> {
    let lev = h.level(j);
    let mut solver = Solver::new(h, schedule.clone(), policy.clone());
    let mut ratios = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut reached = false;
    solver.ir(j, Rhs::Level, x0, rules.max_iters, None, None, &mut |_, x| {
        let r = lev.error_ratio(x);
        ratios.push(r);
        if r <= rules.ratio_bound {
            reached = true;
            return false;
        }
        if r < best {
            best = r;
            since_best = 0;
        } else {
            since_best += 1;
        }
        !(since_best >= rules.stagnation || !r.is_finite() || r > rules.divergence)
    })?;
    Ok((reached, ratios))
}

/// `P_j u_{j-1}`, the prolongated reference of the next coarser level, at `w` bits.
pub fn prolongated_reference(h: &Hierarchy, j: u32, w: u32) -> BfpBlock {
    let lev = h.level(j);
    if j == 1 {
        return BfpBlock::zeros(lev.dofs(), w);
    }
    let coarse = h.level(j - 1).reference.as_ref().expect("hierarchy built without reference solutions");
    let v = lev.p.as_ref().expect("prolongation").mul_vec(coarse, h.prec);
    BfpBlock::from_float_vector(&v, w)
}

/// Which width a min-width result refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthKind {
    Input,
    Work,
    Inner,
}

impl WidthKind {
    pub const ALL: [WidthKind; 3] = [WidthKind::Input, WidthKind::Work, WidthKind::Inner];

    /// CSV token: `w_check`, `w` or `w_dot`.
    pub fn token(self) -> &'static str {
        match self {
            WidthKind::Input => "w_check",
            WidthKind::Work => "w",
            WidthKind::Inner => "w_dot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinWidthOptions {
    pub rules: IrAcceptance,
    /// Width of the not yet searched quantities.
    pub high: u32,
    pub start: u32,
    pub max_bits: u32,
}

impl Default for MinWidthOptions {
    fn default() -> Self {
        MinWidthOptions { rules: IrAcceptance::default(), high: 200, start: 2, max_bits: 200 }
    }
}

/// Minimal widths on level `j`, `None` where the scan hit `max_bits`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinWidths {
    pub level: u32,
    pub input: Option<u32>,
    pub work: Option<u32>,
    pub inner: Option<u32>,
}

impl MinWidths {
    pub fn get(&self, kind: WidthKind) -> Option<u32> {
        match kind {
            WidthKind::Input => self.input,
            WidthKind::Work => self.work,
            WidthKind::Inner => self.inner,
        }
    }
}

/// Staged linear search: `w̌` with `w = ẇ = high`, then `w` with `ẇ = high`,
/// then `ẇ`. Widths are flat over the hierarchy and IR-V starts from the
/// prolongated coarse reference.
pub fn min_width(h: &Hierarchy, j: u32, opts: &MinWidthOptions) -> Result<MinWidths, MgError> {
    let policy = GammaPolicy::default();
    let scan = |make: &dyn Fn(u32) -> Widths| -> Result<Option<u32>, MgError> {
        for bits in opts.start..=opts.max_bits {
            let widths = make(bits);
            let x0 = prolongated_reference(h, j, widths.work);
            let (ok, ratios) = ir_reaches(h, j, &PrecisionSchedule::flat(widths), &policy, x0, &opts.rules)?;
            debug!("level {j} {widths:?}: {} iterations, accepted {ok}", ratios.len());
            if ok {
                return Ok(Some(bits));
            }
        }
        Ok(None)
    };
    let high = opts.high;
    let input = scan(&|b| Widths { input: b, work: high, inner: high })?;
    let wi = input.unwrap_or(high);
    let work = scan(&|b| Widths { input: wi, work: b, inner: high })?;
    let ww = work.unwrap_or(high);
    let inner = scan(&|b| Widths { input: wi, work: ww, inner: b })?;
    info!("level {j}: min widths {input:?} {work:?} {inner:?}");
    Ok(MinWidths { level: j, input, work, inner })
}

/// Least-squares slope of the minimal widths of `kind` against the level.
pub fn width_slope(rows: &[MinWidths], kind: WidthKind) -> Option<f64> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in rows {
        x.push(f64::from(r.level));
        y.push(f64::from(r.get(kind)?));
    }
    (x.len() >= 2).then(|| analysis::least_squares_slope(&x, &y))
}

/// Estimated affine schedule: `estimate_w` for `q_w`, then BFP precision estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedSchedule {
    pub q_input: u32,
    pub q_work: u32,
    pub q_inner: u32,
    pub rho_ref: f64,
    pub feasible: bool,
    pub schedule: PrecisionSchedule,
}

pub fn estimate_schedule(
    h: &Hierarchy,
    levels: u32,
    iters: usize,
    policy: &GammaPolicy,
    params: &PrecEstParams,
) -> Result<EstimatedSchedule, MgError> {
    let (m, k) = (h.spec.m() as u32, h.spec.k() as u32);
    let (q_work, ok_w) = estimate_w(h, params, 1.5, &|_| iters, policy)?;
    let est = bfp_prec_est(h, &|j| k * j + q_work, params, policy)?;
    let schedule = PrecisionSchedule::affine(levels, m, k, est.q_input, q_work, est.q_inner);
    info!("estimated q = ({}, {q_work}, {}), feasible {}", est.q_input, est.q_inner, est.feasible && ok_w);
    Ok(EstimatedSchedule {
        q_input: est.q_input,
        q_work,
        q_inner: est.q_inner,
        rho_ref: est.rho_ref,
        feasible: est.feasible && ok_w,
        schedule,
    })
}

/// One FMG level of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FmgLevel {
    pub level: u32,
    pub widths: Widths,
    pub error: f64,
    pub ref_error: f64,
    pub ratio: f64,
    /// Recompute-triggering calls per [`Step`].
    pub recomputed: [usize; 8],
    pub calls: usize,
    pub saturated: usize,
}

pub fn run_fmg(
    h: &Hierarchy,
    level: u32,
    schedule: &PrecisionSchedule,
    policy: &GammaPolicy,
    iters: usize,
) -> Result<Vec<FmgLevel>, MgError> {
    let mut solver = Solver::new(h, schedule.clone(), policy.clone()).traced();
    let out = solver.fmg(level, &|_| iters)?;
    let trace = solver.trace.take().unwrap_or_default();
    let rows = out
        .solutions
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let j = i as u32 + 1;
            let lev = h.level(j);
            let error = lev.energy_error(x).to_f64();
            let ref_error = lev.reference_error.as_ref().map_or(f64::NAN, Float::to_f64);
            let mut recomputed = [0; 8];
            let (mut calls, mut saturated) = (0, 0);
            for t in trace.iter().filter(|t| t.level == j) {
                calls += 1;
                saturated += t.saturated;
                if t.recomputed {
                    recomputed[t.step.index()] += 1;
                }
            }
            FmgLevel { level: j, widths: schedule.at(j), error, ref_error, ratio: error / ref_error, recomputed, calls, saturated }
        })
        .collect();
    Ok(rows)
}

/// FMG variants compared across schedules and normalization modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmgMode {
    Fixed64,
    ProgressiveQcomp,
    ProgressiveNnqcomp,
    ProgressiveHybrid,
}

impl FmgMode {
    pub const ALL: [FmgMode; 4] =
        [FmgMode::Fixed64, FmgMode::ProgressiveQcomp, FmgMode::ProgressiveNnqcomp, FmgMode::ProgressiveHybrid];

    pub fn name(self) -> &'static str {
        match self {
            FmgMode::Fixed64 => "fixed64",
            FmgMode::ProgressiveQcomp => "progressive-qcomp",
            FmgMode::ProgressiveNnqcomp => "progressive-nnqcomp",
            FmgMode::ProgressiveHybrid => "progressive-hybrid",
        }
    }

    pub fn from_name(s: &str) -> Option<FmgMode> {
        FmgMode::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn normalization(self) -> NormalizationMode {
        match self {
            FmgMode::Fixed64 | FmgMode::ProgressiveQcomp => NormalizationMode::Qcomp,
            FmgMode::ProgressiveNnqcomp => NormalizationMode::Nnqcomp,
            FmgMode::ProgressiveHybrid => NormalizationMode::Hybrid,
        }
    }
}

/// Schedule and FMG rows of one mode; progressive schedules are estimated
/// under the policy of the mode itself.
pub fn fmg_experiment(
    h: &Hierarchy,
    level: u32,
    mode: FmgMode,
    base: &GammaPolicy,
    params: &PrecEstParams,
    iters: usize,
) -> Result<(Option<EstimatedSchedule>, Vec<FmgLevel>), MgError> {
    let policy = GammaPolicy { mode: mode.normalization(), ..base.clone() };
    let (est, schedule) = match mode {
        FmgMode::Fixed64 => (None, PrecisionSchedule::flat(Widths::flat(64))),
        _ => {
            let est = estimate_schedule(h, level, iters, &policy, params)?;
            let s = est.schedule.clone();
            (Some(est), s)
        }
    };
    let rows = run_fmg(h, level, &schedule, &policy, iters)?;
    Ok((est, rows))
}

/// First level `j` after which the error fails to drop by `factor`, i.e.
/// `e_{j+1} > e_j / factor`, over consecutive entries starting at `first`.
pub fn stall_level(rows: &[FmgLevel], first: u32, factor: f64) -> Option<u32> {
    rows.windows(2).find(|w| w[0].level >= first && w[1].error > w[0].error / factor).map(|w| w[0].level)
}

/// Smallest level `j` from which no later level reduces the error by
/// `factor`; `None` if the last level still does.
pub fn stall_onset(rows: &[FmgLevel], factor: f64) -> Option<u32> {
    let mut onset = None;
    for w in rows.windows(2).rev() {
        if w[1].error > w[0].error / factor {
            onset = Some(w[0].level);
        } else {
            break;
        }
    }
    onset
}

/// Smallest per-level error reduction `e_j / e_{j+1}` over levels `>= from`.
pub fn min_reduction(rows: &[FmgLevel], from: u32) -> f64 {
    rows.windows(2).filter(|w| w[0].level >= from).map(|w| w[0].error / w[1].error).fold(f64::INFINITY, f64::min)
}

/// Recompute counts at the finest level for one `w_add` cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecomputeRow {
    pub cap: Option<u32>,
    pub recomputed: usize,
    pub calls: usize,
}

pub const RECOMPUTE_CAPS: [Option<u32>; 4] = [Some(0), Some(2), Some(4), None];

pub fn recompute_table(
    h: &Hierarchy,
    level: u32,
    schedule: &PrecisionSchedule,
    iters: usize,
    caps: &[Option<u32>],
) -> Result<Vec<RecomputeRow>, MgError> {
    let mut out = Vec::new();
    for &cap in caps {
        let rows = run_fmg(h, level, schedule, &GammaPolicy::with_cap(cap), iters)?;
        let finest = rows.last().expect("at least one level");
        out.push(RecomputeRow { cap, recomputed: finest.recomputed.iter().sum(), calls: finest.calls });
    }
    if out.windows(2).any(|w| w[1].recomputed > w[0].recomputed) {
        warn!("recompute counts increase with the cap: {out:?}");
    }
    Ok(out)
}

/// Per-step names in the order of [`FmgLevel::recomputed`].
pub fn step_names() -> [&'static str; 8] {
    Step::ALL.map(Step::name)
}

/// Quantization error of one eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantErrorRow {
    pub level: u32,
    pub index: usize,
    pub w: u32,
    pub error: f64,
    pub sqrt_kappa_eps: f64,
}

pub fn quant_error_rows(
    spec: &ProblemSpec,
    count: usize,
    widths: &[u32],
    prec: u32,
) -> Result<Vec<QuantErrorRow>, AnalysisError> {
    let disc = crate::fem::Discretization::new(spec, prec).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
    let cond = analysis::condition_numbers(&disc.a, spec.m(), prec)?;
    let (_, vecs) = analysis::smallest_eigpairs(&disc.a, count.min(disc.a.rows()), prec)?;
    let sqrt_kappa = cond.kappa.to_f64().sqrt();
    let mut rows = Vec::new();
    for (i, v) in vecs.iter().enumerate() {
        for &w in widths {
            let e = analysis::quant_error(v, w, &disc.a, prec)?;
            rows.push(QuantErrorRow {
                level: spec.level,
                index: i + 1,
                w,
                error: e.relative.to_f64(),
                sqrt_kappa_eps: sqrt_kappa * 2f64.powi(1 - w as i32),
            });
        }
    }
    Ok(rows)
}

/// Default FMG iteration count `N` for a problem.
pub fn default_iterations(spec: &ProblemSpec) -> usize {
    default_fmg_iterations(spec.pde, spec.degree)
}

/// `true` for the problem classes with tabulated defaults.
pub fn supported(pde: Pde, degree: usize) -> bool {
    match pde {
        Pde::Poisson => (1..=6).contains(&degree),
        Pde::Biharmonic => (3..=6).contains(&degree),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multigrid::HierarchyOptions;

    fn hierarchy(pde: Pde, p: usize, j: u32) -> Hierarchy {
        Hierarchy::build(&ProblemSpec::new(pde, 1, p, j).unwrap(), &HierarchyOptions::default()).unwrap()
    }

    #[test]
    fn exact_widths_accept_immediately() {
        let h = hierarchy(Pde::Poisson, 1, 5);
        let s = PrecisionSchedule::flat(Widths::flat(120));
        let (ok, ratios) =
            ir_reaches(&h, 5, &s, &GammaPolicy::default(), prolongated_reference(&h, 5, 120), &IrAcceptance::default())
                .unwrap();
        assert!(ok);
        assert!(ratios.len() <= 3, "{ratios:?}");
    }

    #[test]
    fn base_level_min_width_runs() {
        let h = hierarchy(Pde::Poisson, 1, 2);
        let mw = min_width(&h, 1, &MinWidthOptions::default()).unwrap();
        assert!(mw.input.is_some() && mw.work.is_some() && mw.inner.is_some());
    }

    #[test]
    fn min_widths_grow_with_level() {
        let h = hierarchy(Pde::Poisson, 1, 6);
        let rows: Vec<MinWidths> = (3..=6).map(|j| min_width(&h, j, &MinWidthOptions::default()).unwrap()).collect();
        let s = width_slope(&rows, WidthKind::Input).unwrap();
        assert!(s > 0.5, "{rows:?}");
        assert!(rows.last().unwrap().input >= rows[0].input);
    }

    #[test]
    fn fixed64_fmg_counts_thirteen_finest_calls() {
        let h = hierarchy(Pde::Poisson, 1, 6);
        let (est, rows) =
            fmg_experiment(&h, 6, FmgMode::Fixed64, &GammaPolicy::default(), &PrecEstParams::default(), 2).unwrap();
        assert!(est.is_none());
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[5].calls, 13);
        assert!(rows.iter().all(|r| r.ratio <= 1.5), "{rows:?}");
    }

    #[test]
    fn recompute_table_totals_match_calls() {
        let h = hierarchy(Pde::Poisson, 1, 6);
        let s = PrecisionSchedule::affine(6, 1, 2, 1, 1, 8);
        let t = recompute_table(&h, 6, &s, 2, &RECOMPUTE_CAPS).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|r| r.calls == 13 && r.recomputed <= r.calls));
    }

    #[test]
    fn stall_detection() {
        let row = |level, error| FmgLevel {
            level,
            widths: Widths::flat(8),
            error,
            ref_error: error,
            ratio: 1.0,
            recomputed: [0; 8],
            calls: 0,
            saturated: 0,
        };
        let rows = vec![row(1, 1.0), row(2, 0.1), row(3, 0.01), row(4, 0.009), row(5, 0.009)];
        assert_eq!(stall_level(&rows, 1, 2.0), Some(3));
        assert_eq!(stall_level(&rows[..3], 1, 2.0), None);
        assert!((min_reduction(&rows[..3], 1) - 10.0).abs() < 1e-9);
        assert_eq!(stall_onset(&rows, 2.0), Some(3));
        assert_eq!(stall_onset(&rows[..3], 2.0), None);
        let bump = vec![row(1, 1.0), row(2, 0.9), row(3, 0.1), row(4, 0.09)];
        assert_eq!(stall_onset(&bump, 2.0), Some(3));
        assert_eq!(stall_level(&bump, 1, 2.0), Some(1));
    }

    #[test]
    fn quant_error_rows_are_bounded() {
        let spec = ProblemSpec::new(Pde::Poisson, 1, 1, 5).unwrap();
        let rows = quant_error_rows(&spec, 8, &[5, 10, 15], 256).unwrap();
        assert_eq!(rows.len(), 24);
        assert!(rows.iter().all(|r| r.error <= 4.0 * r.sqrt_kappa_eps));
    }
}
