//! One pipeline per experiment kind. Each writes its tables through the
//! shared [`OutputDir`] and returns the numbers recorded in the manifest.

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{
    AutoCutoff, CutoffSpec, ExperimentConfig, ExperimentKind, ParityChoice, PropagatorChoice, VariablesChoice,
    DEFAULT_B_KHZ,
};
use super::decoherence::{apply_dephasing_decay, enhanced_grid, separation, window_average, WindowAverage};
use super::output::{fmt_f64, OutputDir, Table};
use super::{config::parse_generator, Context};
use crate::classical::{
    integrate, lambda_c, lyapunov_max, phase_diagram_scan, critical_point_exponent, LyapunovOptions, MeanField,
    PhasePoint, ScanConfig, SeparationObservable, Tolerance, Variables,
};
use crate::error::{Error, Result};
use crate::fit::{extract_lambda_q, scrambling_time, ExponentFit, FitWindowPolicy};
use crate::model::{BlochAxis, InitialState, ModelParams};
use crate::mqc::{
    optimize_axis, partial_trace_spins, purity_decomposition, renyi2, renyi_spin_phonon, subsystem_fotoc_renyi,
    AxisGrid, AxisStrategy,
};
use crate::propagate::{self, select_cutoff, time_grid, ChebyshevPropagator, CutoffPolicy, EigenSystem, Propagator};
use crate::spectrum::{
    converged_levels, diagonal_ensemble, goe_gap_ratio, level_statistics_of, poisson_gap_ratio, thermal_ensemble,
    thermal_reduced_spin, thermal_renyi_profile, time_averaged_distributions, total_variation, ParityPolicy,
    SpacingOptions,
};
use crate::twa::{evolve_ensemble, extract_exponents, sample_initial, TwaObservable, TwaOptions};

/// Twin-trajectory separation used for λ_c.
const TWIN_EPSILON: f64 = 1e-7;

pub(crate) fn dispatch(cfg: &ExperimentConfig, ctx: &Context, out: &mut OutputDir) -> Result<Value> {
    match cfg.experiment.kind {
        ExperimentKind::Spectrum => spectrum(cfg, ctx, out),
        ExperimentKind::LyapunovMap => lyapunov_map(cfg, ctx, out),
        ExperimentKind::Fotoc => fotoc(cfg, ctx, out),
        ExperimentKind::Twa => twa(cfg, ctx, out),
        ExperimentKind::Renyi => renyi(cfg, ctx, out),
        ExperimentKind::Thermalize => thermalize(cfg, ctx, out),
    }
}

/// Couplings and field of the `[model]` section with a placeholder cutoff.
pub fn base_params(cfg: &ExperimentConfig) -> Result<ModelParams> {
    let m = &cfg.model;
    let p = ModelParams::new(m.n_spins, m.g_khz, m.delta_khz, m.b_khz.unwrap_or(DEFAULT_B_KHZ), 1)?;
    match m.field_ratio {
        Some(r) => p.with_field_ratio(r),
        None => Ok(p),
    }
}

fn grid(cfg: &ExperimentConfig) -> Vec<f64> {
    time_grid(cfg.time.start_ms, cfg.time.end_ms, cfg.time.points)
}

/// Applies the configured cutoff, running the convergence ladder for `"auto"`.
fn resolve_cutoff(cfg: &ExperimentConfig, p: ModelParams, ctx: &Context) -> Result<(ModelParams, Value)> {
    match cfg.model.n_max {
        Some(CutoffSpec::Fixed(n)) => Ok((p.with_cutoff(n)?, json!({ "n_max": n, "mode": "fixed" }))),
        Some(CutoffSpec::Named(AutoCutoff::Auto)) => {
            let largest = (ctx.limits.max_sparse_dim / p.spin_dim()).saturating_sub(1);
            let policy = CutoffPolicy {
                tail_threshold: cfg.fotoc.tail_threshold,
                max_cutoff: CutoffPolicy::default().max_cutoff.min(largest),
                ..CutoffPolicy::default()
            };
            let report = select_cutoff(&p, &cfg.initial_state()?, &grid(cfg), &policy)?;
            let q = p.with_cutoff(report.n_max)?;
            Ok((q, json!({ "n_max": report.n_max, "mode": "auto", "ladder": report })))
        }
        None => Err(Error::Config {
            line: None,
            key: Some("model.n_max".into()),
            message: format!("missing boson cutoff, required by the {} experiment", cfg.experiment.kind.name()),
        }),
    }
}

fn check_dense(p: &ModelParams, ctx: &Context) -> Result<()> {
    let block = p.dim().div_ceil(2);
    if block > ctx.limits.max_dim {
        return Err(Error::ResourceLimit(format!(
            "dimension {} needs dense parity blocks of about {block}, above the ceiling {}; raise limits.max_dim or pass --allow-large",
            p.dim(),
            ctx.limits.max_dim
        )));
    }
    Ok(())
}

fn check_sparse(p: &ModelParams, ctx: &Context) -> Result<()> {
    if p.dim() > ctx.limits.max_sparse_dim {
        return Err(Error::ResourceLimit(format!(
            "dimension {} exceeds the sparse ceiling {}; raise limits.max_sparse_dim or pass --allow-large",
            p.dim(),
            ctx.limits.max_sparse_dim
        )));
    }
    Ok(())
}

fn dense_system(p: &ModelParams, ctx: &Context, vectors: bool) -> Result<EigenSystem> {
    check_dense(p, ctx)?;
    EigenSystem::dicke_with(p, vectors, ctx.limits.max_dim)
}

fn fit_json(fit: &Result<ExponentFit>) -> Value {
    match fit {
        Ok(f) => json!({ "fit": f }),
        Err(e) => json!({ "fit": null, "reason": e.to_string() }),
    }
}

fn mean_field_point(init: &InitialState, n_spins: usize) -> PhasePoint {
    PhasePoint::from_array(init.mean_field(n_spins))
}

/// λ_L of the initial state's mean-field image, with the fixed-point value.
fn classical_exponents(p: &ModelParams, init: &InitialState, opts: &LyapunovOptions) -> Result<Value> {
    let mf = MeanField::new(p, Variables::Rescaled);
    let x0 = mean_field_point(init, p.n_spins);
    let ll = lyapunov_max(&x0, &mf, opts)?;
    let lc = lambda_c(&x0, &mf, SeparationObservable::Occupation, TWIN_EPSILON, opts);
    Ok(json!({
        "lambda_l": ll.lambda,
        "lambda_l_drift": ll.drift,
        "lambda_l_converged": ll.converged,
        "lambda_c": lc.as_ref().ok().map(|e| e.lambda),
        "lambda_c_reason": lc.as_ref().err().map(|e| e.to_string()),
        "fixed_point_exponent": critical_point_exponent(p),
    }))
}

fn fotoc(cfg: &ExperimentConfig, ctx: &Context, out: &mut OutputDir) -> Result<Value> {
    let (p, cutoff) = resolve_cutoff(cfg, base_params(cfg)?, ctx)?;
    let times = grid(cfg);
    let init = cfg.initial_state()?;
    let psi0 = init.prepare(&p)?;
    let dphi = cfg.fotoc.dphi.unwrap_or(1e-2 / p.n_spins as f64);
    let dense = match cfg.fotoc.propagator {
        PropagatorChoice::Auto => check_dense(&p, ctx).is_ok(),
        PropagatorChoice::Dense => true,
        PropagatorChoice::Chebyshev => false,
    };
    let prop: Box<dyn Propagator> = if dense {
        Box::new(dense_system(&p, ctx, true)?)
    } else {
        check_sparse(&p, ctx)?;
        Box::new(ChebyshevPropagator::dicke(&p)?)
    };
    let policy = FitWindowPolicy::default();
    let mut generators = Vec::new();
    for name in &cfg.fotoc.generators {
        let g = parse_generator(name)?;
        let s = propagate::fotoc(&psi0, prop.as_ref(), &p, g, dphi, &times)?;
        s.check_tail(cfg.fotoc.tail_threshold, p.n_max)?;
        let loss = s.scaled_loss();
        let mut t = Table::new(&["t_ms", "F", "one_minus_F_over_dphi2", "var_G"])
            .meta("generator", name)
            .meta("dphi", fmt_f64(dphi));
        for i in 0..times.len() {
            t.push_f64(&[times[i], s.fidelity[i], loss[i], s.variance[i]]);
        }
        let file = format!("fotoc_{name}.csv");
        out.write_table(&file, &t)?;
        let star = scrambling_time(&times, &loss)?;
        generators.push(json!({
            "generator": name,
            "file": file,
            "lambda_q": fit_json(&extract_lambda_q(&times, &loss, &policy)),
            "t_star_ms": star.t_ms,
            "t_star_at_grid_end": star.at_end,
            "max_tail": s.max_tail,
        }));
    }
    Ok(json!({
        "params": p,
        "field_ratio": p.field_ratio().ok(),
        "cutoff": cutoff,
        "propagator": if dense { "dense" } else { "chebyshev" },
        "dphi": dphi,
        "fit_policy": policy,
        "generators": generators,
        "classical": classical_exponents(&p, &init, &LyapunovOptions::default())?,
    }))
}

fn twa(cfg: &ExperimentConfig, ctx: &Context, out: &mut OutputDir) -> Result<Value> {
    let p = base_params(cfg)?;
    let w = &cfg.twa;
    if w.trajectories > ctx.limits.max_trajectories {
        return Err(Error::ResourceLimit(format!(
            "{} trajectories exceed the ceiling {}; raise limits.max_trajectories or pass --allow-large",
            w.trajectories, ctx.limits.max_trajectories
        )));
    }
    let init = cfg.initial_state()?;
    let times = grid(cfg);
    let ens = sample_initial(&init, p.n_spins, w.trajectories, ctx.seed)?;
    let mut opts = TwaOptions::for_size(p.n_spins);
    match w.variables {
        VariablesChoice::Auto => {}
        VariablesChoice::Bare => opts.variables = Variables::Bare,
        VariablesChoice::Rescaled => opts.variables = Variables::Rescaled,
    }
    opts.tol = Tolerance { rtol: w.rtol, atol: w.atol };
    opts.blocks = w.blocks;
    let m = evolve_ensemble(&ens, &p, &times, &opts)?;
    for obs in TwaObservable::ALL {
        let s = m.get(obs);
        let mut t = Table::new(&["t_ms", "mean_G", "var_G", "stderr_var"]).meta("observable", obs.tag());
        for i in 0..times.len() {
            t.push_f64(&[times[i], s.mean[i], s.variance[i], s.stderr_var[i]]);
        }
        out.write_table(&format!("twa_{}.csv", obs.tag()), &t)?;
    }
    let policy = FitWindowPolicy::default();
    let exponents = extract_exponents(&m, &policy)?;
    Ok(json!({
        "params": { "n_spins": p.n_spins, "g_khz": p.g_khz, "delta_khz": p.delta_khz, "b_khz": p.b_khz },
        "field_ratio": p.field_ratio().ok(),
        "seed": ctx.seed,
        "trajectories": m.trajectories,
        "blocks": m.blocks,
        "sampling": ens.tag(),
        "variables": opts.variables,
        "max_energy_drift": m.max_energy_drift,
        "fit_policy": policy,
        "exponents": exponents,
        "classical": classical_exponents(&p, &init, &LyapunovOptions::default())?,
    }))
}

fn lyapunov_map(cfg: &ExperimentConfig, ctx: &Context, out: &mut OutputDir) -> Result<Value> {
    let p = base_params(cfg)?;
    let s = &cfg.scan;
    let bins = ((s.energy_max - s.energy_min) / s.energy_step).round().max(1.0) as usize;
    let lyapunov = LyapunovOptions {
        t_end: s.t_end_ms,
        renorm_interval: s.renorm_interval_ms,
        ..LyapunovOptions::default()
    };
    let scan = ScanConfig {
        field_ratios: s.field_ratios.clone(),
        energy_edges: (0..=bins).map(|i| s.energy_min + s.energy_step * i as f64).collect(),
        samples_per_field: s.samples_per_field,
        r_max: s.r_max,
        seed: ctx.seed,
        lyapunov,
    };
    let cells = phase_diagram_scan(&p, &scan)?;
    let mut t = Table::new(&["sqrt_Bc_over_B", "E_over_Ec_bin", "lambda_L", "n_samples"]);
    for c in &cells {
        t.push(vec![
            fmt_f64(c.sqrt_bc_over_b),
            fmt_f64(c.energy_center()),
            fmt_f64(c.lambda_max.unwrap_or(f64::NAN)),
            c.samples.to_string(),
        ]);
    }
    out.write_table("scan.csv", &t)?;

    // single trajectory of the configured initial state at the model field
    let init = cfg.initial_state()?;
    let mf = MeanField::new(&p, Variables::Rescaled);
    let x0 = mean_field_point(&init, p.n_spins);
    let traj = integrate(&x0, &mf, &grid(cfg), Tolerance::default())?;
    let mut t = Table::new(&["t_ms", "S_x", "S_y", "S_z", "alpha_re", "alpha_im", "energy"]);
    for (time, x) in traj.times.iter().zip(&traj.points) {
        t.push_f64(&[*time, x.sx, x.sy, x.sz, x.alpha_re, x.alpha_im, mf.energy(x)]);
    }
    out.write_table("trajectory.csv", &t)?;
    let est = lyapunov_max(&x0, &mf, &lyapunov)?;
    let mut t = Table::new(&["t_ms", "lambda_running"]);
    for (time, l) in &est.history {
        t.push_f64(&[*time, *l]);
    }
    out.write_table("lyapunov_history.csv", &t)?;
    let filled = cells.iter().filter(|c| c.lambda_max.is_some()).count();
    Ok(json!({
        "params": { "n_spins": p.n_spins, "g_khz": p.g_khz, "delta_khz": p.delta_khz, "b_khz": p.b_khz },
        "critical_field_khz": p.critical_field_khz()?,
        "seed": ctx.seed,
        "cells": cells.len(),
        "filled_cells": filled,
        "trajectory": {
            "lambda_l": est.lambda,
            "drift": est.drift,
            "converged": est.converged,
            "t_end_ms": est.t_end,
        },
    }))
}

fn sector_label(s: Option<u8>) -> String {
    s.map_or_else(|| "mixed".to_string(), |v| v.to_string())
}

fn spectrum(cfg: &ExperimentConfig, ctx: &Context, out: &mut OutputDir) -> Result<Value> {
    let (p, cutoff) = resolve_cutoff(cfg, base_params(cfg)?, ctx)?;
    let sp = &cfg.spectrum;
    let fine_n = sp.fine_n_max.unwrap_or((p.n_max as f64 * 1.2).ceil() as usize);
    if fine_n <= p.n_max {
        return Err(Error::Config {
            line: None,
            key: Some("spectrum.fine_n_max".into()),
            message: format!("must exceed the working cutoff {}", p.n_max),
        });
    }
    let pf = p.with_cutoff(fine_n)?;
    let coarse = dense_system(&p, ctx, false)?;
    let fine = dense_system(&pf, ctx, false)?;
    let levels = converged_levels(&coarse, &fine, sp.converged_tolerance)?;
    let e_c = p.critical_energy();
    let mut t = Table::new(&["sector", "energy", "E_over_Ec"]);
    for (sector, e) in &levels {
        for &x in e {
            t.push(vec![sector_label(*sector), fmt_f64(x), fmt_f64(x / e_c.abs())]);
        }
    }
    out.write_table("levels.csv", &t)?;

    let opts = SpacingOptions {
        degree: sp.degree,
        trim: sp.trim,
        bins: sp.bins,
        min_levels: sp.min_levels,
        ..SpacingOptions::default()
    };
    let policy = match sp.parity {
        ParityChoice::Resolved => ParityPolicy::Resolved,
        ParityChoice::Mixed => ParityPolicy::Mixed,
    };
    let stats = level_statistics_of(&levels, e_c, policy, &opts)?;
    let goe = goe_gap_ratio(sp.oracle_matrices, sp.oracle_dim, ctx.seed)?;
    let poisson = poisson_gap_ratio(sp.oracle_matrices, sp.oracle_dim, ctx.seed);

    let mut summary = Table::new(&[
        "window", "sector", "levels", "sufficient", "degree", "mean_ratio", "ks_wigner", "ks_poisson",
    ]);
    let mut hist = Table::new(&["window", "sector", "s_lo", "s_hi", "density", "wigner", "poisson"]);
    let mut windows = Vec::new();
    for s in &stats {
        summary.push(vec![
            s.window.tag().into(),
            sector_label(s.sector),
            s.levels.to_string(),
            s.sufficient.to_string(),
            s.degree.to_string(),
            fmt_f64(s.mean_ratio),
            fmt_f64(s.ks_wigner),
            fmt_f64(s.ks_poisson),
        ]);
        if s.sufficient {
            for (d, e) in s.histogram.density.iter().zip(s.histogram.edges.windows(2)) {
                let c = 0.5 * (e[0] + e[1]);
                let wigner = std::f64::consts::FRAC_PI_2 * c * (-std::f64::consts::FRAC_PI_4 * c * c).exp();
                hist.push(vec![
                    s.window.tag().into(),
                    sector_label(s.sector),
                    fmt_f64(e[0]),
                    fmt_f64(e[1]),
                    fmt_f64(*d),
                    fmt_f64(wigner),
                    fmt_f64((-c).exp()),
                ]);
            }
        }
        windows.push(json!({
            "window": s.window.tag(),
            "sector": s.sector,
            "levels": s.levels,
            "sufficient": s.sufficient,
            "mean_ratio": s.mean_ratio,
            "ks_wigner": s.ks_wigner,
            "ks_poisson": s.ks_poisson,
            "degree": s.degree,
            "degree_sensitivity": s.degree_sensitivity,
            "closer_to_wigner": s.sufficient.then(|| s.ks_wigner < s.ks_poisson),
            "closer_to_goe_ratio": s.sufficient.then(|| (s.mean_ratio - goe.mean).abs() < (s.mean_ratio - poisson.mean).abs()),
        }));
    }
    out.write_table("level_stats.csv", &summary)?;
    out.write_table("spacing_histogram.csv", &hist)?;
    Ok(json!({
        "params": p,
        "field_ratio": p.field_ratio().ok(),
        "critical_energy": e_c,
        "cutoff": cutoff,
        "fine_n_max": fine_n,
        "converged_levels": levels.iter().map(|(s, e)| json!({ "sector": s, "count": e.len() })).collect::<Vec<_>>(),
        "oracle": { "goe": goe, "poisson": poisson, "matrices": sp.oracle_matrices, "dim": sp.oracle_dim },
        "windows": windows,
    }))
}

/// Estimators of one evolved state.
struct RenyiRow {
    s2: f64,
    axis: BlochAxis,
    sf_spin: f64,
    sf_spin_boson: f64,
    sf_sx: f64,
    i0_spin: f64,
    i0_boson: f64,
    d_diag: f64,
    c_off: f64,
    i0_sx: f64,
}

fn renyi_row(psi: &crate::model::StateVector, axes: &AxisGrid) -> Result<RenyiRow> {
    let axis = optimize_axis(psi, AxisStrategy::MaxVariance, axes)?.axis;
    let r = renyi_spin_phonon(psi, Some(axis))?;
    let dx = purity_decomposition(psi, BlochAxis::X);
    let d = r.decomposition;
    Ok(RenyiRow {
        s2: r.s2,
        axis,
        sf_spin: r.sf_spin,
        sf_spin_boson: r.sf_spin_boson,
        sf_sx: dx.sf_spin(),
        i0_spin: d.i0_spin,
        i0_boson: d.i0_boson,
        d_diag: d.d_diag,
        c_off: d.c_off,
        i0_sx: dx.i0_spin,
    })
}

fn in_window(times: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    let eps = 1e-9 * hi.abs().max(1.0);
    (0..times.len()).filter(|&i| times[i] >= lo - eps && times[i] <= hi + eps).collect()
}

fn pick(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

fn renyi(cfg: &ExperimentConfig, ctx: &Context, out: &mut OutputDir) -> Result<Value> {
    let base = base_params(cfg)?;
    let rc = &cfg.renyi;
    let ratios = if rc.field_ratios.is_empty() { vec![base.field_ratio()?] } else { rc.field_ratios.clone() };
    let (enhancement, gamma) = cfg.decoherence.map_or((1.0, 0.0), |d| (d.enhancement, d.gamma_per_ms()));
    let model_times = grid(cfg);
    // the enhanced model reaches the same states at compressed physical times
    let times = enhanced_grid(&model_times, enhancement);
    let window = in_window(&model_times, rc.window_start_ms, rc.window_end_ms);
    let axes = AxisGrid {
        n_theta: rc.axis_theta_points,
        n_phi: rc.axis_phi_points,
    };
    let init = cfg.initial_state()?;
    let n = base.n_spins;

    let mut summary = Table::new(&[
        "field_ratio",
        "S2_mean",
        "S2_se",
        "SF_regime_mean",
        "SF_regime_se",
        "SF_Sr_n_mean",
        "SF_Sx_mean",
        "SF_decayed_mean",
        "SF_decayed_se",
    ]);
    let mut per_field = Vec::new();
    let (mut chaotic, mut regular) = (Vec::<WindowAverage>::new(), Vec::<WindowAverage>::new());
    let mut subsystem = Value::Null;
    for (k, &ratio) in ratios.iter().enumerate() {
        let (p, cutoff) = resolve_cutoff(cfg, base.with_field_ratio(ratio)?, ctx)?;
        let es0 = dense_system(&p, ctx, true)?;
        let es = es0.scaled(enhancement);
        let psi0 = init.prepare(&p)?;
        let states: Vec<_> = times.par_iter().map(|&t| es.evolve(&psi0, t)).collect::<Result<_>>()?;
        let rows: Vec<RenyiRow> = states.par_iter().map(|s| renyi_row(s, &axes)).collect::<Result<_>>()?;
        let regular_side = ratio >= 1.0;
        let i0_regime: Vec<f64> = rows
            .iter()
            .map(|r| if regular_side { r.i0_sx } else { r.i0_spin + r.i0_boson })
            .collect();
        let decayed: Vec<f64> = apply_dephasing_decay(&i0_regime, &times, gamma, n).iter().map(|v| -v.ln()).collect();

        let mut t = Table::new(&[
            "t_ms", "S2", "SF_Sr", "SF_Sr_n", "SF_Sx", "theta", "phi", "I0_Sr", "I0_n", "D_diag", "C_off", "SF_regime",
            "SF_decayed",
        ])
        .meta("field_ratio", fmt_f64(ratio))
        .meta("estimator", if regular_side { "SF_Sx" } else { "SF_Sr_n" });
        let mut cols: [Vec<f64>; 4] = Default::default();
        for (i, r) in rows.iter().enumerate() {
            let regime = -i0_regime[i].ln();
            t.push_f64(&[
                times[i], r.s2, r.sf_spin, r.sf_spin_boson, r.sf_sx, r.axis.theta, r.axis.phi, r.i0_spin, r.i0_boson,
                r.d_diag, r.c_off, regime, decayed[i],
            ]);
            cols[0].push(r.s2);
            cols[1].push(regime);
            cols[2].push(r.sf_spin_boson);
            cols[3].push(r.sf_sx);
        }
        let file = format!("renyi_field_{k}.csv");
        out.write_table(&file, &t)?;
        let avg = |v: &[f64]| window_average(&pick(v, &window), rc.average_blocks);
        let (s2, regime, srn, sx, dec) =
            (avg(&cols[0])?, avg(&cols[1])?, avg(&cols[2])?, avg(&cols[3])?, avg(&decayed)?);
        summary.push_f64(&[
            ratio,
            s2.mean,
            s2.stderr,
            regime.mean,
            regime.stderr,
            srn.mean,
            sx.mean,
            dec.mean,
            dec.stderr,
        ]);
        if regular_side {
            regular.push(dec);
        } else {
            chaotic.push(dec);
        }
        per_field.push(json!({
            "field_ratio": ratio,
            "file": file,
            "cutoff": cutoff,
            "s2": s2,
            "sf_regime": regime,
            "sf_spin_boson": srn,
            "sf_sx": sx,
            "sf_decayed": dec,
        }));

        if k == 0 && !rc.subsystem_sizes.is_empty() {
            subsystem = subsystem_profile(cfg, &es0, &psi0, &states, &rows, &window, out)?;
        }
    }
    out.write_table("renyi_summary.csv", &summary)?;
    let sep = separation(&chaotic, &regular);
    Ok(json!({
        "params": base,
        "window_ms": [rc.window_start_ms / enhancement, rc.window_end_ms / enhancement],
        "decoherence": { "gamma_per_ms": gamma, "enhancement": enhancement },
        "fields": per_field,
        "separation": sep.as_ref().ok(),
        "separation_significant": sep.as_ref().ok().map(|s| s.significant()),
        "separation_reason": sep.as_ref().err().map(|e| e.to_string()),
        "subsystem": subsystem,
    }))
}

/// Time-averaged exact and FOTOC subsystem entropies with the thermal curve.
fn subsystem_profile(
    cfg: &ExperimentConfig,
    es: &EigenSystem,
    psi0: &crate::model::StateVector,
    states: &[crate::model::StateVector],
    rows: &[RenyiRow],
    window: &[usize],
    out: &mut OutputDir,
) -> Result<Value> {
    let rc = &cfg.renyi;
    let sizes = &rc.subsystem_sizes;
    let thermal = thermal_ensemble(es, es.mean_energy(&es.coefficients(psi0)?))?;
    let curve = thermal_renyi_profile(es, &thermal, sizes)?;
    let mut t = Table::new(&["L_A", "S2_mean", "S2_se", "SF_mean", "SF_se", "S2_thermal"]);
    let mut entries = Vec::new();
    for (&l, (_, th)) in sizes.iter().zip(&curve) {
        let est: Vec<(f64, f64)> = window
            .par_iter()
            .map(|&i| subsystem_fotoc_renyi(&states[i], l, rows[i].axis).map(|e| (e.s2, e.estimator())))
            .collect::<Result<_>>()?;
        let (s2, sf): (Vec<f64>, Vec<f64>) = est.into_iter().unzip();
        let (a, b) = (window_average(&s2, rc.average_blocks)?, window_average(&sf, rc.average_blocks)?);
        t.push(vec![
            l.to_string(),
            fmt_f64(a.mean),
            fmt_f64(a.stderr),
            fmt_f64(b.mean),
            fmt_f64(b.stderr),
            fmt_f64(*th),
        ]);
        entries.push(json!({ "l_a": l, "s2": a, "sf": b, "s2_thermal": th }));
    }
    out.write_table("renyi_subsystem.csv", &t)?;
    Ok(json!({ "beta": thermal.beta, "thermal_residual": thermal.residual, "sizes": entries }))
}

fn thermalize(cfg: &ExperimentConfig, ctx: &Context, out: &mut OutputDir) -> Result<Value> {
    let (p, cutoff) = resolve_cutoff(cfg, base_params(cfg)?, ctx)?;
    let h = &cfg.thermalize;
    let es = dense_system(&p, ctx, true)?;
    let psi0 = cfg.initial_state()?.prepare(&p)?;
    let window = time_grid(h.window_start_ms, h.window_end_ms, h.window_points);
    let avg = time_averaged_distributions(&es, &psi0, &window)?;
    let diag = diagonal_ensemble(&es, &psi0)?;
    let half = window.len() / 2;
    let early = time_averaged_distributions(&es, &psi0, &window[..half])?;
    let late = time_averaged_distributions(&es, &psi0, &window[half..])?;
    let thermal = thermal_ensemble(&es, diag.energy)?;
    let thermal_m = thermal_reduced_spin(&es, &thermal)?.diag().to_vec();

    let mut t = Table::new(&["variable", "value", "p_time_avg", "p_diagonal"]);
    for (m, (a, d)) in avg.m_values().iter().zip(avg.p_m.iter().zip(&diag.distributions.p_m)) {
        t.push(vec!["M_z".into(), fmt_f64(*m), fmt_f64(*a), fmt_f64(*d)]);
    }
    for (k, (a, d)) in avg.p_n.iter().zip(&diag.distributions.p_n).enumerate() {
        t.push(vec!["n".into(), k.to_string(), fmt_f64(*a), fmt_f64(*d)]);
    }
    out.write_table("distributions.csv", &t)?;

    let n = p.n_spins;
    let sizes: Vec<usize> = if h.subsystem_sizes.is_empty() { (1..=n / 2).collect() } else { h.subsystem_sizes.clone() };
    let profiles: Vec<Vec<f64>> = window
        .par_iter()
        .map(|&time| {
            let rho = es.evolve(&psi0, time)?.reduced_spin();
            sizes.iter().map(|&l| Ok(renyi2(partial_trace_spins(rho.view(), n, l)?.view()))).collect()
        })
        .collect::<Result<_>>()?;
    let curve = thermal_renyi_profile(&es, &thermal, &sizes)?;
    let mut t = Table::new(&["L_A", "S2_time_avg", "S2_thermal"]);
    for (j, (l, th)) in curve.iter().enumerate() {
        let mean = profiles.iter().map(|v| v[j]).sum::<f64>() / profiles.len() as f64;
        t.push(vec![l.to_string(), fmt_f64(mean), fmt_f64(*th)]);
    }
    out.write_table("entropy_profile.csv", &t)?;
    Ok(json!({
        "params": p,
        "field_ratio": p.field_ratio().ok(),
        "cutoff": cutoff,
        "window_ms": [h.window_start_ms, h.window_end_ms],
        "energy": diag.energy,
        "tv_m": total_variation(&avg.p_m, &diag.distributions.p_m),
        "tv_n": total_variation(&avg.p_n, &diag.distributions.p_n),
        "distance": avg.distance(&diag.distributions),
        "half_window_distance": early.distance(&late),
        "thermal": {
            "beta": thermal.beta,
            "residual": thermal.residual,
            "negative_branch": thermal.negative_branch,
            "tv_m_diagonal": total_variation(&thermal_m, &diag.distributions.p_m),
        },
    }))
}

#[cfg(test)]
mod tests {
    use super::super::{parse_config, run, RunManifest, RunOptions};
    use super::*;

    fn run_text(text: &str) -> (tempfile::TempDir, Result<RunManifest>) {
        let cfg = parse_config(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = run(
            &cfg,
            &RunOptions {
                out: Some(dir.path().to_path_buf()),
                threads: Some(1),
                ..RunOptions::default()
            },
        );
        (dir, m)
    }

    fn read(dir: &tempfile::TempDir, name: &str) -> String {
        std::fs::read_to_string(dir.path().join(name)).unwrap()
    }

    #[test]
    fn fotoc_writes_series_and_exponents() {
        let (dir, m) = run_text(
            "[experiment]\nkind = \"fotoc\"\n[model]\nn_spins = 6\nfield_ratio = 0.2\nn_max = 80\n[time]\nend_ms = 4.0\npoints = 81\n",
        );
        let m = m.unwrap();
        let text = read(&dir, "fotoc_X.csv");
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# generator=X"));
        assert!(lines.next().unwrap().starts_with("# dphi="));
        assert_eq!(lines.next(), Some("t_ms,F,one_minus_F_over_dphi2,var_G"));
        assert_eq!(lines.count(), 81);
        let g = &m.results["generators"][0];
        assert!(g["t_star_ms"].as_f64().unwrap() > 0.0);
        assert!(m.results["classical"]["lambda_l"].as_f64().unwrap() > 0.0);
        assert_eq!(m.outputs.len(), 2);
    }

    #[test]
    fn cutoff_breach_is_a_contract_violation() {
        let (_dir, m) = run_text(
            "[experiment]\nkind = \"fotoc\"\n[model]\nn_spins = 10\nfield_ratio = 0.2\nn_max = 4\n[time]\nend_ms = 4.0\npoints = 21\n",
        );
        let e = m.unwrap_err();
        assert!(matches!(e, Error::CutoffTail { .. }), "{e}");
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn automatic_cutoff_is_recorded() {
        let (_dir, m) = run_text(
            "[experiment]\nkind = \"fotoc\"\n[model]\nn_spins = 4\nfield_ratio = 0.2\nn_max = \"auto\"\n[time]\nend_ms = 2.0\npoints = 21\n[fotoc]\ngenerators = [\"S_y\"]\n",
        );
        let m = m.unwrap();
        assert_eq!(m.results["cutoff"]["mode"], "auto");
        assert!(m.results["cutoff"]["n_max"].as_u64().unwrap() >= 32);
    }

    #[test]
    fn lyapunov_map_layout() {
        let (dir, m) = run_text(
            "[experiment]\nkind = \"lyapunov-map\"\n[model]\nn_spins = 10\n[time]\nend_ms = 2.0\npoints = 11\n[scan]\nfield_ratios = [0.2, 4.0]\nenergy_min = -1.5\nenergy_max = 1.5\nenergy_step = 0.5\nsamples_per_field = 12\nt_end_ms = 5.0\n",
        );
        m.unwrap();
        let text = read(&dir, "scan.csv");
        assert!(text.starts_with("sqrt_Bc_over_B,E_over_Ec_bin,lambda_L,n_samples\n"));
        assert_eq!(text.lines().count(), 1 + 2 * 6);
        assert_eq!(read(&dir, "trajectory.csv").lines().count(), 12);
    }

    #[test]
    fn spectrum_reports_windows_and_oracles() {
        let (dir, m) = run_text(
            "[experiment]\nkind = \"spectrum\"\n[model]\nn_spins = 6\nfield_ratio = 0.2\nn_max = 60\n[spectrum]\nfine_n_max = 80\nmin_levels = 10\noracle_matrices = 10\noracle_dim = 60\n",
        );
        let m = m.unwrap();
        let goe = m.results["oracle"]["goe"]["mean"].as_f64().unwrap();
        let poisson = m.results["oracle"]["poisson"]["mean"].as_f64().unwrap();
        assert!(goe > poisson);
        assert_eq!(m.results["windows"].as_array().unwrap().len(), 4);
        assert_eq!(read(&dir, "level_stats.csv").lines().count(), 5);
    }

    #[test]
    fn renyi_with_decoherence_and_subsystems() {
        let (dir, m) = run_text(
            "[experiment]\nkind = \"renyi\"\n[model]\nn_spins = 6\nn_max = 80\n[time]\nend_ms = 4.0\npoints = 41\n[renyi]\nfield_ratios = [0.2, 4.0]\nwindow_start_ms = 1.0\nwindow_end_ms = 4.0\nsubsystem_sizes = [1, 2, 3]\naxis_theta_points = 6\naxis_phi_points = 12\n[decoherence]\ngamma_per_s = 60.0\nenhancement = 16.0\n",
        );
        let m = m.unwrap();
        assert_eq!(read(&dir, "renyi_summary.csv").lines().count(), 3);
        assert_eq!(read(&dir, "renyi_subsystem.csv").lines().count(), 4);
        let w = m.results["window_ms"].as_array().unwrap();
        assert_eq!(w[1].as_f64().unwrap(), 0.25);
        assert!(m.results["separation"]["difference"].is_f64());
        // t = 0 of the regular field: product state, S2 = 0, decayed S_F = 0
        let first = read(&dir, "renyi_field_1.csv");
        let row: Vec<f64> = first.lines().nth(3).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert!(row[1].abs() < 1e-12 && row[12].abs() < 1e-12, "{row:?}");
    }

    #[test]
    fn thermalize_compares_with_the_diagonal_ensemble() {
        let (dir, m) = run_text(
            "[experiment]\nkind = \"thermalize\"\n[model]\nn_spins = 6\nfield_ratio = 0.2\nn_max = 80\n[thermalize]\nwindow_points = 21\n",
        );
        let m = m.unwrap();
        let d = m.results["distance"].as_f64().unwrap();
        assert!(d >= 0.0 && d < 1.0);
        assert!(m.results["thermal"]["residual"].as_f64().unwrap() < 1e-8);
        assert_eq!(read(&dir, "entropy_profile.csv").lines().count(), 4);
        assert_eq!(read(&dir, "distributions.csv").lines().count(), 1 + 7 + 81);
    }
}
