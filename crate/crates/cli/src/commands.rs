//! The five experiment commands; each returns CSV text and failed checks.

use std::fmt::Write as _;

use anyhow::Result;
use bfpmg::experiments::{
    self, estimate_schedule, fmg_experiment, min_width, quant_error_rows, recompute_table, run_fmg, step_names,
    width_slope, FmgLevel, FmgMode, IrAcceptance, MinWidthOptions, WidthKind,
};
use bfpmg::multigrid::{
    EtaChoice, GammaPolicy, Hierarchy, HierarchyOptions, NormalizationMode, PrecisionSchedule, Widths,
};
use log::{info, warn};

use crate::config::{ExperimentConfig, ScheduleMode};

/// Output of one command.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub csv: String,
    /// Failed checks; a non-empty list maps to exit code 2.
    pub violations: Vec<String>,
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

fn cap_token(cap: Option<u32>) -> String {
    cap.map_or_else(|| "inf".to_string(), |c| c.to_string())
}

fn hierarchy(cfg: &ExperimentConfig, p: usize) -> Result<Hierarchy> {
    let spec = cfg.spec(p, *cfg.levels.end())?;
    let opts =
        HierarchyOptions { prec: cfg.prec, eta: EtaChoice::Grid(cfg.eta_steps), reference: true, ..Default::default() };
    info!("building {} d={} p={p} up to level {}", cfg.pde, cfg.dim, spec.level);
    Ok(Hierarchy::build(&spec, &opts)?)
}

fn iterations(cfg: &ExperimentConfig, h: &Hierarchy) -> usize {
    cfg.iterations.unwrap_or_else(|| experiments::default_iterations(&h.spec))
}

fn policy(cfg: &ExperimentConfig, mode: NormalizationMode) -> GammaPolicy {
    GammaPolicy {
        mode,
        w_add_cap: cfg.w_add_cap,
        saturation_fallback: cfg.saturation_fallback,
        ..GammaPolicy::default()
    }
}

pub fn quant_error(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report { csv: cfg.header("quant-error"), ..Report::default() };
    r.csv.push_str("pde,p,j,i,w,E,sqrt_kappa_times_eps\n");
    for &p in &cfg.degrees {
        for j in cfg.levels.clone() {
            let rows = quant_error_rows(&cfg.spec(p, j)?, cfg.count, &cfg.widths, cfg.prec)?;
            for row in rows {
                let _ = writeln!(
                    r.csv,
                    "{},{p},{j},{},{},{},{}",
                    cfg.pde,
                    row.index,
                    row.w,
                    sci(row.error),
                    sci(row.sqrt_kappa_eps)
                );
                if row.error > 4.0 * row.sqrt_kappa_eps {
                    r.violations.push(format!("p={p} j={j} i={} w={}: E exceeds 4 sqrt(kappa) eps", row.index, row.w));
                }
            }
        }
    }
    Ok(r)
}

pub fn min_width_cmd(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report { csv: cfg.header("min-width"), ..Report::default() };
    r.csv.push_str("pde,p,j,which,min_bits\n");
    let opts = MinWidthOptions {
        rules: IrAcceptance { max_iters: cfg.max_iters, ratio_bound: cfg.ratio_bound, ..IrAcceptance::default() },
        max_bits: cfg.max_bits,
        ..MinWidthOptions::default()
    };
    let mut slopes = String::new();
    for &p in &cfg.degrees {
        let h = hierarchy(cfg, p)?;
        let mut rows = Vec::new();
        for j in cfg.levels.clone() {
            let mw = min_width(&h, j, &opts)?;
            for kind in WidthKind::ALL {
                let bits = mw.get(kind);
                let _ = writeln!(r.csv, "{},{p},{j},{},{}", cfg.pde, kind.token(), bits.map_or("NA".into(), |b| b.to_string()));
                if bits.is_none() {
                    r.violations.push(format!("p={p} j={j}: no {} up to {} bits", kind.token(), cfg.max_bits));
                }
            }
            rows.push(mw);
        }
        for kind in WidthKind::ALL {
            if rows.windows(2).any(|w| w[1].get(kind) < w[0].get(kind)) {
                warn!("p={p}: {} decreases with the level", kind.token());
            }
            if let Some(s) = width_slope(&rows, kind) {
                let _ = writeln!(slopes, "# slope p={p} {}={s:.4}", kind.token());
            }
        }
    }
    r.csv.push_str(&slopes);
    Ok(r)
}

fn fmg_rows(r: &mut String, cfg: &ExperimentConfig, mode: &str, p: usize, rows: &[FmgLevel]) {
    for row in rows.iter().filter(|row| cfg.levels.contains(&row.level)) {
        let per_step: Vec<String> = row.recomputed.iter().map(usize::to_string).collect();
        let _ = writeln!(
            r,
            "{mode},{},{p},{},{},{},{},{},{},{},{},{},{},{}",
            cfg.pde,
            row.level,
            row.widths.input,
            row.widths.work,
            row.widths.inner,
            sci(row.error),
            sci(row.ref_error),
            format_args!("{:.6}", row.ratio),
            row.calls,
            row.recomputed.iter().sum::<usize>(),
            row.saturated,
            per_step.join(",")
        );
    }
}

fn fmg_header() -> String {
    format!(
        "mode,pde,p,j,w_check,w,w_dot,error,ref_error,ratio,calls,recomputed,saturated,{}\n",
        step_names().map(|s| format!("rec_{s}")).join(",")
    )
}

pub fn fmg(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report { csv: cfg.header("fmg"), ..Report::default() };
    r.csv.push_str(&fmg_header());
    for &p in &cfg.degrees {
        let h = hierarchy(cfg, p)?;
        let n = iterations(cfg, &h);
        let top = *cfg.levels.end();
        for &mode in &cfg.modes {
            let base = policy(cfg, mode.normalization());
            let (_, rows) = fmg_experiment(&h, top, mode, &base, &cfg.params, n)?;
            fmg_rows(&mut r.csv, cfg, mode.name(), p, &rows);
            if mode != FmgMode::Fixed64 {
                for row in rows.iter().filter(|row| cfg.levels.contains(&row.level) && row.ratio > cfg.ratio_bound) {
                    r.violations.push(format!("{} p={p} j={}: ratio {:.4}", mode.name(), row.level, row.ratio));
                }
            }
        }
    }
    Ok(r)
}

pub fn prec_est(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report { csv: cfg.header("prec-est"), ..Report::default() };
    r.csv.push_str("pde,p,q_check,q_w,q_dot,rho_ref,feasible,j,w_check,w,w_dot,error,ref_error,ratio\n");
    for &p in &cfg.degrees {
        let h = hierarchy(cfg, p)?;
        let n = iterations(cfg, &h);
        let pol = policy(cfg, NormalizationMode::Qcomp);
        let top = *cfg.levels.end();
        let est = estimate_schedule(&h, top, n, &pol, &cfg.params)?;
        if !est.feasible {
            r.violations.push(format!("p={p}: estimation reached q_max"));
        }
        if !est.schedule.is_ordered() {
            r.violations.push(format!("p={p}: schedule not ordered"));
        }
        let rows = run_fmg(&h, top, &est.schedule, &pol, n)?;
        for row in rows.iter().filter(|row| cfg.levels.contains(&row.level)) {
            let _ = writeln!(
                r.csv,
                "{},{p},{},{},{},{:.6},{},{},{},{},{},{},{},{:.6}",
                cfg.pde,
                est.q_input,
                est.q_work,
                est.q_inner,
                est.rho_ref,
                est.feasible,
                row.level,
                row.widths.input,
                row.widths.work,
                row.widths.inner,
                sci(row.error),
                sci(row.ref_error),
                row.ratio
            );
            if row.ratio > cfg.ratio_bound {
                r.violations.push(format!("p={p} j={}: ratio {:.4}", row.level, row.ratio));
            }
        }
    }
    Ok(r)
}

pub fn recompute_table_cmd(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report { csv: cfg.header("recompute-table"), ..Report::default() };
    r.csv.push_str("pde,p,j,cap,recomputed,calls\n");
    let top = *cfg.levels.end();
    for &p in &cfg.degrees {
        let h = hierarchy(cfg, p)?;
        let n = iterations(cfg, &h);
        let schedule = match cfg.schedule {
            ScheduleMode::Estimated => {
                estimate_schedule(&h, top, n, &GammaPolicy::default(), &cfg.params)?.schedule
            }
            ScheduleMode::Fixed(w) => PrecisionSchedule::flat(Widths::flat(w)),
        };
        for row in recompute_table(&h, top, &schedule, n, &cfg.caps)? {
            let _ = writeln!(r.csv, "{},{p},{top},{},{},{}", cfg.pde, cap_token(row.cap), row.recomputed, row.calls);
            if row.cap.is_none() && row.recomputed > 0 {
                r.violations.push(format!("p={p}: {} recomputations with an unbounded cap", row.recomputed));
            }
        }
    }
    Ok(r)
}
