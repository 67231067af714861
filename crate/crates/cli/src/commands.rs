use std::collections::BTreeMap;

use levy_lp::cz::{
    critical_deltas, cz_decompose, engulfing_check, hormander_check, weak11_and_lp_check,
    HormanderOpts, SpaceTimeGrid,
};
use levy_lp::density::{
    density_on, derivative_norm_report, ld1_report, multi_indices, scaled_density_sweep,
    tail_mass_check,
};
use levy_lp::estimates::{energy_identity_check, explicit_constant_suite, function_bank};
use levy_lp::grid::{GridFunction, TimeGridFunction};
use levy_lp::measure::LevyMeasureSpec;
use levy_lp::quad::geomspace;
use levy_lp::report::EstimateReport;
use levy_lp::scaling::{check_d, check_h, MinorizingMeasure};
use levy_lp::simulate::{sample_paths, scaling_identity_check, SimParams};
use levy_lp::solve::{
    evaluate_at, mc_agreement, residual_check, solve_elliptic_mc, solve_elliptic_spectral,
    solve_parabolic_mc, solve_parabolic_spectral, uniform_times, ProblemSpec, Solution, TimeRule,
};
use levy_lp::symbol::{evaluate, symbol_bounds_table, FreqGrid, SymbolTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{CzInput, ForcingConfig, ProblemKind, RunConfig, VerifyItem};
use crate::error::CliError;
use crate::output::{num, Output};

fn lattice(cfg: &RunConfig, spec: &LevyMeasureSpec) -> FreqGrid {
    FreqGrid::Lattice {
        dim: spec.dim,
        n: cfg.grid.n,
        period: cfg.grid.period,
    }
}

pub fn symbol(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let spec = cfg.measure.build()?;
    let sf = if cfg.symbol.bounds {
        Some(cfg.scaling()?)
    } else {
        None
    };
    let table = evaluate(&spec, &lattice(cfg, &spec))?;
    out.write("symbol.csv", &table.to_csv())?;
    if let Some(sf) = sf {
        let r = symbol_bounds_table(&table, &sf)?;
        out.write_json("symbol_bounds.json", &r)?;
        if !r.pass {
            return Err(CliError::Verification("symbol_bounds".into()));
        }
    }
    Ok(())
}

pub fn density(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let dc = cfg
        .density
        .as_ref()
        .ok_or_else(|| CliError::Validation("density needs a [density] section".into()))?;
    let spec = cfg.measure.build()?;
    let mut slices = Vec::with_capacity(dc.times.len());
    for &t in &dc.times {
        let (n, period) = if dc.min_period > 0.0 {
            let g = levy_lp::density::auto_grid(&spec, t, dc.min_period)?;
            (g.n, g.period)
        } else {
            (cfg.grid.n, cfg.grid.period)
        };
        slices.push(density_on(&spec, t, n, period, dc.order)?);
    }
    let mut table = slices.remove(0);
    for s in slices {
        table.extend(s);
    }
    for i in 0..table.len() {
        out.write(&format!("density_{i:03}.csv"), &table.slice_csv(i))?;
    }
    let mut manifest = table.manifest();
    if let Ok(sf) = cfg.scaling() {
        let gamma: Vec<Option<f64>> = table.times.iter().map(|t| sf.gamma(*t).ok()).collect();
        manifest["gamma"] = json!(gamma);
    }
    out.write_json("density.json", &manifest)
}

pub fn simulate(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let sc = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Validation("simulate needs a [simulate] section".into()))?;
    let spec = cfg.measure.build()?;
    let sample = sample_paths(
        &spec,
        &SimParams::new(sc.horizon, sc.n_paths, sc.eps_cut, cfg.seed()?),
    )?;
    out.write("terminal.csv", &sample.terminal_csv())?;
    out.write_json("sample.json", &sample.manifest())
}

fn forcing(cfg: &RunConfig, fc: &ForcingConfig, dim: usize) -> Result<GridFunction, CliError> {
    let (n, l) = (cfg.grid.n, cfg.grid.period);
    match fc {
        ForcingConfig::Constant { value } => Ok(GridFunction::from_real_fn(dim, n, l, |_| *value)?),
        ForcingConfig::Bank { index, seed } => function_bank(dim, n, l, index + 1, *seed)?
            .pop()
            .ok_or_else(|| CliError::Validation("empty function bank".into())),
        ForcingConfig::Csv { path } => {
            let values = read_last_column(path)?;
            let re = values
                .into_iter()
                .map(|v| num_complex::Complex64::new(v, 0.0))
                .collect();
            Ok(GridFunction::from_values(dim, n, l, re)?)
        }
    }
}

/// Last column of every data row of a CSV with a header row.
fn read_last_column(path: &std::path::Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cell = l.rsplit(',').next().unwrap_or("").trim();
            cell.parse::<f64>().map_err(|_| {
                CliError::Validation(format!("{}: bad value {cell:?}", path.display()))
            })
        })
        .collect()
}

/// Probe points on the diagonal of the period cell.
fn probes(dim: usize, count: usize, period: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| vec![period * i as f64 / count as f64; dim])
        .collect()
}

fn time_csv(u: &TimeGridFunction) -> String {
    let dim = u.slices.first().map_or(1, |s| s.dim);
    let mut s = String::from("t");
    for a in 0..dim {
        s.push_str(&format!(",x{a}"));
    }
    s.push_str(",re,im\n");
    for (t, g) in u.times.iter().zip(&u.slices) {
        for i in 0..g.len() {
            s.push_str(&num(*t));
            for x in g.point(i) {
                s.push(',');
                s.push_str(&num(x));
            }
            s.push_str(&format!(
                ",{},{}\n",
                num(g.values[i].re),
                num(g.values[i].im)
            ));
        }
    }
    s
}

pub fn solve(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let pc = cfg
        .problem
        .as_ref()
        .ok_or_else(|| CliError::Validation("solve needs a [problem] section".into()))?;
    let spec = cfg.measure.build()?;
    let f = forcing(cfg, &pc.forcing, spec.dim)?;
    let table = levy_lp::symbol::evaluate_on(&spec, &f)?;
    let mut summary = BTreeMap::new();
    let (ps, residual, reference, probe_t) = match pc.kind {
        ProblemKind::Parabolic => {
            let ps = ProblemSpec::parabolic_static(spec, pc.lambda, pc.horizon, f)?;
            let times = uniform_times(pc.horizon, cfg.grid.time_steps);
            let u = solve_parabolic_spectral(&ps, &table, &times)?;
            out.write("solution.csv", &time_csv(&u))?;
            let r = residual_check(&ps, &Solution::Parabolic(u.clone()), &table)?;
            let last = u.slices.last().cloned().expect("at least one slice");
            (ps, r, last, pc.horizon)
        }
        ProblemKind::Elliptic => {
            let ps = ProblemSpec::elliptic(spec, pc.lambda, f)?;
            let v = solve_elliptic_spectral(&ps, &table)?;
            out.write("solution.csv", &v.to_csv())?;
            let r = residual_check(&ps, &Solution::Elliptic(v.clone()), &table)?;
            (ps, r, v, 0.0)
        }
    };
    summary.insert("problem_digest", json!(ps.digest()));
    summary.insert(
        "grid",
        json!({"dim": ps.spec.dim, "n": cfg.grid.n, "period": cfg.grid.period, "time_steps": cfg.grid.time_steps}),
    );
    summary.insert(
        "residual",
        serde_json::to_value(&residual).expect("serializable"),
    );
    let mut failed = !residual.pass;
    if let Some(mc) = &pc.mc {
        let sim = SimParams::new(0.0, mc.n_paths, mc.eps_cut, cfg.seed()?);
        let xs = probes(ps.spec.dim, mc.probes, cfg.grid.period);
        let sol = match pc.kind {
            ProblemKind::Parabolic => {
                let pts: Vec<(f64, Vec<f64>)> = xs.iter().map(|x| (probe_t, x.clone())).collect();
                solve_parabolic_mc(&ps, &sim, &pts, TimeRule::default())?
            }
            ProblemKind::Elliptic => {
                solve_elliptic_mc(&ps, &sim, &xs, mc.t_max, 1e-6, TimeRule::default())?
            }
        };
        let agree = mc_agreement(&sol, &evaluate_at(&reference, &xs))?;
        failed |= !agree.pass;
        summary.insert(
            "mc_agreement",
            serde_json::to_value(&agree).expect("serializable"),
        );
        summary.insert(
            "mc_solution",
            serde_json::to_value(&sol).expect("serializable"),
        );
    }
    out.write_json("solve.json", &summary)?;
    if failed {
        return Err(CliError::Verification(
            "residual or Monte Carlo agreement".into(),
        ));
    }
    Ok(())
}

type ItemResult = Result<(bool, Value), CliError>;

struct Context {
    spec: LevyMeasureSpec,
    spec0: LevyMeasureSpec,
    table: SymbolTable,
}

fn report_value(r: &EstimateReport) -> (bool, Value) {
    (r.pass, serde_json::to_value(r).expect("serializable"))
}

fn run_item(cfg: &RunConfig, ctx: &Context, item: VerifyItem) -> ItemResult {
    let spec = &ctx.spec;
    let vc = cfg.verify.as_ref().expect("checked by caller");
    match item {
        VerifyItem::SymbolBounds => Ok(report_value(&symbol_bounds_table(
            &ctx.table,
            &cfg.scaling()?,
        )?)),
        VerifyItem::ExplicitConstants => {
            let bank = function_bank(
                spec.dim,
                cfg.grid.n,
                cfg.grid.period,
                vc.bank_size,
                vc.bank_seed,
            )?;
            let suite = explicit_constant_suite(
                spec,
                &ctx.table,
                &bank,
                vc.lambda,
                1.0,
                cfg.grid.time_steps,
            )?;
            let failing: Vec<&EstimateReport> = suite.reports.iter().filter(|r| !r.pass).collect();
            Ok((
                suite.pass,
                json!({
                    "pass": suite.pass,
                    "worst_ratio": suite.worst_ratio,
                    "reports": suite.reports.len(),
                    "bank_size": bank.len(),
                    "failing": failing,
                }),
            ))
        }
        VerifyItem::EnergyIdentity => {
            let bank = function_bank(spec.dim, cfg.grid.n, cfg.grid.period, 3, vc.bank_seed)?;
            let reports = bank
                .iter()
                .map(|v| energy_identity_check(spec, &ctx.table, v))
                .collect::<levy_lp::Result<Vec<_>>>()?;
            let pass = reports.iter().all(|r| r.pass);
            Ok((pass, json!({"pass": pass, "reports": reports})))
        }
        VerifyItem::AssumptionH => {
            let b = cfg.measure.bernstein().ok_or_else(|| {
                CliError::Validation("assumption_h needs a subordinated measure".into())
            })?;
            let r = check_h(b, spec.dim, &geomspace(1e-4, 1e4, 33))?;
            Ok((r.pass, serde_json::to_value(&r).expect("serializable")))
        }
        VerifyItem::AssumptionD => {
            let sf = cfg.scaling()?;
            let mu0 = MinorizingMeasure::default_for(spec, &sf)?;
            let r = check_d(
                spec,
                &sf,
                &mu0,
                &geomspace(1e-2, 1e2, 9),
                &geomspace(1e-3, 1e3, 7),
            )?;
            Ok(report_value(&r.to_report()))
        }
        VerifyItem::TailMass => {
            let sim = cfg.seed.map(|s| SimParams::new(0.0, 200_000, 1e-2, s));
            Ok(report_value(&tail_mass_check(
                spec,
                1.0,
                &geomspace(1e-3, 1e-1, 5),
                sim.as_ref(),
            )?))
        }
        VerifyItem::ScalingIdentity => {
            let sim = SimParams::new(0.0, 20_000, 1e-3, cfg.seed()?);
            Ok(report_value(&scaling_identity_check(
                spec,
                &cfg.scaling()?,
                &[1.0, 4.0, 16.0],
                1.0,
                &sim,
            )?))
        }
        VerifyItem::DensityBounds => {
            let sf = cfg.scaling()?;
            let mu0 = MinorizingMeasure::default_for(spec, &sf)?.mu0;
            let dt = scaled_density_sweep(spec, &sf, 2.0, &[0.5, 1.0, 2.0], 0.0, 4, 2)?;
            let mut betas = vec![vec![0; spec.dim]];
            betas.extend(multi_indices(spec.dim, 2));
            let reports = betas
                .iter()
                .map(|b| derivative_norm_report(&dt, &sf, b, 2.0, Some(&mu0)))
                .collect::<levy_lp::Result<Vec<_>>>()?;
            let pass = reports.iter().all(|r| r.pass);
            Ok((pass, json!({"pass": pass, "reports": reports})))
        }
        VerifyItem::Ld1 => {
            let ts = [0.01, 0.03, 0.1, 0.3, 1.0, 2.0, 6.0, 20.0, 60.0, 200.0];
            Ok(report_value(&ld1_report(
                &ctx.spec0,
                spec,
                &cfg.scaling()?,
                1.0,
                &ts,
                1,
            )?))
        }
        VerifyItem::Engulfing => Ok(report_value(&engulfing_check(
            &cfg.scaling()?,
            spec.dim,
            1000,
            cfg.seed.unwrap_or(0),
        )?)),
        VerifyItem::Hormander => {
            let opts = HormanderOpts {
                seed: cfg.seed.unwrap_or(0),
                ..HormanderOpts::default()
            };
            Ok(report_value(&hormander_check(
                spec,
                &ctx.spec0,
                &cfg.scaling()?,
                &geomspace(0.1, 10.0, 5),
                &opts,
            )?))
        }
    }
}

pub fn verify(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let vc = cfg
        .verify
        .as_ref()
        .ok_or_else(|| CliError::Validation("verify needs a [verify] section".into()))?;
    if vc.items.is_empty() {
        return Err(CliError::Validation("empty verification selector".into()));
    }
    let mut items = vc.items.clone();
    items.sort_by_key(|i| i.name());
    items.dedup();
    let spec = cfg.measure.build()?;
    let spec0 = cfg.measure0().build()?;
    let table = evaluate(&spec, &lattice(cfg, &spec))?;
    let ctx = Context { spec, spec0, table };
    let results: Vec<(VerifyItem, ItemResult)> = items
        .par_iter()
        .map(|i| (*i, run_item(cfg, &ctx, *i)))
        .collect();
    let mut reports = BTreeMap::new();
    let mut failed = Vec::new();
    for (item, r) in results {
        let (pass, value) = r?;
        if !pass {
            failed.push(item.name());
        }
        reports.insert(item.name(), value);
    }
    let all = failed.is_empty();
    out.write_json(
        "verify.json",
        &json!({"pass": all, "failed": failed, "reports": reports}),
    )?;
    if all {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

pub fn cz(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let cc = cfg
        .cz
        .as_ref()
        .ok_or_else(|| CliError::Validation("cz needs a [cz] section".into()))?;
    let sf = cfg.scaling()?;
    let dim = cfg.measure.build()?.dim;
    let mut f = SpaceTimeGrid::zeros(dim, 0.0, cc.dt, cc.nt, 0.0, cc.dx, cc.nx)?;
    match &cc.input {
        CzInput::Spike { mass } => {
            let mut center = vec![cc.nt / 2];
            center.extend(std::iter::repeat_n(cc.nx / 2, dim));
            let i = f.ravel(&center);
            f.values[i] = mass / f.cell_measure();
        }
        CzInput::Random { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed()?);
            f.values.iter_mut().for_each(|v| {
                *v = amplitude * rng.random_range(-1.0..1.0) * rng.random_range(0.0f64..1.0).powi(6)
            });
        }
        CzInput::Csv { path } => {
            let values = read_last_column(path)?;
            if values.len() != f.len() {
                return Err(CliError::Validation(format!(
                    "{} has {} values, the grid has {}",
                    path.display(),
                    values.len(),
                    f.len()
                )));
            }
            f.values = values;
        }
    }
    let dec = cz_decompose(&f, cc.alpha, &sf, cc.pad)?;
    let padded = &dec.f;
    let deltas = critical_deltas(padded, &sf.kappa, padded.norm(1.0) / cc.alpha)?;
    let alphas: Vec<f64> = (-2..=2).map(|k| cc.alpha * 2f64.powi(k)).collect();
    let weak = weak11_and_lp_check(padded, &sf, &deltas, &alphas, &[2.0])?;
    out.write("cz_f.csv", &padded.to_csv())?;
    out.write("cz_g.csv", &dec.g_part.to_csv())?;
    out.write("cz_b.csv", &dec.bad_sum().to_csv())?;
    let parts: Vec<Value> = dec
        .bad_parts
        .iter()
        .map(|b| json!({"center": b.center, "d": b.d, "mean": b.mean, "cells": b.cells.len()}))
        .collect();
    out.write_json(
        "cz.json",
        &json!({
            "alpha": cc.alpha,
            "pad": dec.pad,
            "params": dec.params,
            "open_volume": dec.open_volume,
            "star_volume": dec.star_volume,
            "bad_parts": parts,
            "decomposition": dec.report,
            "weak11": weak,
        }),
    )?;
    if dec.report.pass && weak.pass {
        Ok(())
    } else {
        Err(CliError::Verification("cz_decompose or weak-(1,1)".into()))
    }
}
