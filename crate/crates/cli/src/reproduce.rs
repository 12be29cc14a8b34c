//! Figure data sets: plot-ready CSV plus a `manifest.json`.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde_json::{json, Value};

use hom_core::analytic::{
    fmt_sig, g2_full_curve, g2_orthogonal_ideal, g2_parallel_ideal, hbt_dot_curve, symmetric_grid,
    visibility_convolved, visibility_ideal, Response,
};
use hom_core::config::{self, SCHEMA_VERSION};
use hom_core::correlator::{correlate, dip_statistics, paired_visibility};
use hom_core::fringe::contrast_map_csv;
use hom_core::inference::{
    fit_gamma_from_acquisitions, predict_optimum, simulate_paired, AcquisitionPlan, PairedAcquisition,
    VisibilityCurve,
};
use hom_core::mc::{simulate, McMode, McRunConfig};

use crate::{axis, positive, to_json, write_file, CliResult, Context, DEFAULT_SEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Fig1b,
    Fig2b,
    Fig3,
    Fig4,
}

impl Figure {
    fn name(self) -> &'static str {
        match self {
            Figure::Fig1b => "fig1b",
            Figure::Fig2b => "fig2b",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }
}

const MC_RATE_PER_PS: f64 = 2e-5;
const FIG3_DURATION_PS: f64 = 2e10;
const FIG4_RATIOS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const WINDOW_PS: f64 = 6400.0;

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, name: &str, text: &str) -> CliResult<()> {
        write_file(&self.dir.join(name), text.as_bytes())?;
        self.files.push(name.to_string());
        Ok(())
    }
}

pub(crate) fn run(ctx: &Context, figure: Figure) -> CliResult<()> {
    let dir = ctx
        .out
        .clone()
        .unwrap_or_else(|| Path::new("figures").join(figure.name()));
    let mut w = Writer { dir, files: Vec::new() };
    let extra = match figure {
        Figure::Fig1b => fig1b(&mut w)?,
        Figure::Fig2b => fig2b(ctx, &mut w)?,
        Figure::Fig3 => fig3(ctx, &mut w)?,
        Figure::Fig4 => fig4(ctx, &mut w)?,
    };
    let mut manifest = json!({
        "figure": figure.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": SCHEMA_VERSION,
        "config_source": ctx.config_source,
        "config": config::format(&ctx.params),
        "files": w.files,
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut manifest, extra) {
        m.extend(e);
    }
    w.put("manifest.json", &to_json(&manifest))?;
    println!("wrote {} files to {}", w.files.len(), w.dir.display());
    Ok(())
}

fn fig1b(w: &mut Writer) -> CliResult<Value> {
    let mut csv = String::from("ratio,g2_parallel,g2_orthogonal,visibility\n");
    for i in 0..=200 {
        let r = i as f64 / 20.0;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig(r, 9),
            fmt_sig(g2_parallel_ideal(r), 12),
            fmt_sig(g2_orthogonal_ideal(r), 12),
            fmt_sig(visibility_ideal(r), 12)
        ));
    }
    w.put("fig1b.csv", &csv)?;
    Ok(json!({ "ratio_grid": "0 to 10 in steps of 0.05" }))
}

fn fig2b(ctx: &Context, w: &mut Writer) -> CliResult<Value> {
    let delays = axis(1200.0, 10.0, false);
    let detunings = axis(30.0, 0.25, true);
    let csv = contrast_map_csv(
        &delays,
        &detunings,
        ctx.params.quantum.tau_coh_ps(),
        ctx.params.coherent.tau_coh_laser_ps(),
    );
    w.put("fig2b.csv", &csv)?;
    Ok(json!({ "delay_ps": [0.0, 1200.0, 10.0], "detuning_ueV": [-30.0, 30.0, 0.25] }))
}

fn fig3(ctx: &Context, w: &mut Writer) -> CliResult<Value> {
    let seed = ctx.seed.unwrap_or(DEFAULT_SEED);
    let duration = positive("duration-ps", ctx.duration_ps.unwrap_or(FIG3_DURATION_PS))?;
    let bin = ctx.bin_ps();
    let p = ctx.params.with_ratio(1.0)?;
    let fwhm = p.detector.pair_fwhm_ps();
    let step = if fwhm > 0.0 { fwhm / 32.0 } else { 1.0 };
    let half = WINDOW_PS + bin;

    // analytic panels
    let hbt_i = hbt_dot_curve(half, Some(step), &p, Response::Ideal)?;
    let hbt_c = hbt_dot_curve(half, Some(step), &p, Response::Convolved)?;
    let grid = symmetric_grid(half, step);
    let par = p.with_phi_deg(0.0)?;
    let orth = p.with_phi_deg(90.0)?;
    let par_i = g2_full_curve(grid.clone(), &par, Response::Ideal)?;
    let par_c = g2_full_curve(grid.clone(), &par, Response::Convolved)?;
    let orth_i = g2_full_curve(grid.clone(), &orth, Response::Ideal)?;
    let orth_c = g2_full_curve(grid, &orth, Response::Convolved)?;
    let mut csv = String::from(
        "tau_ps,hbt_dot_ideal,hbt_dot_convolved,hbt_laser,orthogonal_ideal,orthogonal_convolved,parallel_ideal,parallel_convolved\n",
    );
    for i in 0..hbt_i.len() {
        csv.push_str(&format!(
            "{},{},{},1,{},{},{},{}\n",
            fmt_sig(hbt_i.tau_ps[i], 9),
            fmt_sig(hbt_i.values[i], 9),
            fmt_sig(hbt_c.values[i], 9),
            fmt_sig(orth_i.values[i], 9),
            fmt_sig(orth_c.values[i], 9),
            fmt_sig(par_i.values[i], 9),
            fmt_sig(par_c.values[i], 9)
        ));
    }
    w.put("fig3_curves.csv", &csv)?;

    // simulated panels
    let runs = [
        ("hbt_dot", McMode::HbtDot, p),
        ("hbt_laser", McMode::HbtLaser, p),
        ("orthogonal", McMode::TwoSource, orth),
        ("parallel", McMode::TwoSource, par),
    ];
    let mut summary = serde_json::Map::new();
    let mut dips = Vec::new();
    for (i, (name, mode, params)) in runs.into_iter().enumerate() {
        let run_seed = seed.wrapping_add(i as u64);
        let cfg = McRunConfig::new(params, mode, MC_RATE_PER_PS, duration, run_seed)?;
        let h = correlate(&simulate(&cfg)?, bin, WINDOW_PS)?;
        let dip = dip_statistics(&h, &cfg.model_curve(half)?)?;
        w.put(&format!("fig3_mc_{name}.csv"), &h.to_csv())?;
        summary.insert(
            name.to_string(),
            json!({
                "seed": run_seed,
                "coincidences": h.total_counts(),
                "g2_zero": dip.g2_zero,
                "g2_zero_stderr": dip.g2_zero_stderr,
                "chi2_per_dof": dip.chi2_per_dof,
            }),
        );
        dips.push(dip);
    }
    let v = paired_visibility(&dips[3], &dips[2])?;
    Ok(json!({
        "seed": seed,
        "duration_ps": duration,
        "bin_ps": bin,
        "rate_per_ps": MC_RATE_PER_PS,
        "ratio": 1.0,
        "mc": summary,
        "visibility_mc": v.visibility,
        "visibility_mc_sigma": v.sigma,
        "visibility_model": visibility_convolved(1.0, &p)?,
    }))
}

fn fig4(ctx: &Context, w: &mut Writer) -> CliResult<Value> {
    let p = ctx.params;
    let seed = ctx.seed.unwrap_or(DEFAULT_SEED);
    let plan = AcquisitionPlan {
        bin_width_ps: ctx.bin_ps(),
        ..AcquisitionPlan::default()
    };

    let mut csv = String::from("ratio,visibility_model,visibility_ideal\n");
    for i in 1..=120 {
        let r = i as f64 / 20.0;
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(r, 9),
            fmt_sig(visibility_convolved(r, &p)?, 12),
            fmt_sig(p.interference.gamma().powi(2) * visibility_ideal(r), 12)
        ));
    }
    w.put("fig4_model.csv", &csv)?;

    let opt = predict_optimum(&p)?;
    let mut acqs: Vec<PairedAcquisition> = Vec::with_capacity(FIG4_RATIOS.len());
    let mut seeds = Vec::new();
    for (i, &r) in FIG4_RATIOS.iter().enumerate() {
        let s = seed.wrapping_add(2 * i as u64);
        let acq = match ctx.duration_ps {
            Some(d) => {
                let target = plan_for_duration(&plan, r, d);
                simulate_paired(&p, r, &target, s)?
            }
            None => simulate_paired(&p, r, &plan, s)?,
        };
        seeds.push(s);
        acqs.push(acq);
    }
    let (fit, points) = fit_gamma_from_acquisitions(&acqs, &p, 2)?;
    let mut curve = VisibilityCurve::new(points);
    curve.fit = Some(fit);
    w.put("fig4_points.csv", &curve.to_csv())?;

    Ok(json!({
        "seed": seed,
        "ratios": FIG4_RATIOS,
        "point_seeds": seeds,
        "gamma_profile": p.interference.gamma(),
        "ratio_star": opt.ratio_star,
        "v_max": opt.v_max,
        "fit": {
            "gamma_hat": fit.gamma_hat,
            "stderr": fit.stderr,
            "chi2_per_dof": fit.chi2_per_dof,
        },
    }))
}

/// A plan whose target count yields run length `duration_ps` at `ratio`.
fn plan_for_duration(plan: &AcquisitionPlan, ratio: f64, duration_ps: f64) -> AcquisitionPlan {
    let scale = duration_ps / plan.duration_ps(ratio);
    AcquisitionPlan {
        target_coincidences: plan.target_coincidences * scale,
        ..*plan
    }
}
