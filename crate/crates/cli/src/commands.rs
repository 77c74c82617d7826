//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use cpcgate::calibration::calibrate;
use cpcgate::config::{InputSpec, RawConfig, ResolvedConfig};
use cpcgate::ensemble::{ensemble_gamma22, run_ensemble};
use cpcgate::gridio::{load_grid, StoredGrid};
use cpcgate::observables::{coherence_widths, gamma22, slowness, CoherenceWindow};
use cpcgate::oracle::flip_residual;
use cpcgate::units::{normalize_both, PhysicalParams};
use cpcgate::{ComplexGrid2D, Preset, RunRecord};
use rayon::prelude::*;

use crate::output::{csv_field, num, probes_csv, sha256_hex, trace_csv, ArtifactWriter, RunManifest, SOFTWARE};

pub fn load_config(path: Option<&Path>) -> Result<RawConfig> {
    match path {
        Some(p) => RawConfig::from_path(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(RawConfig::default()),
    }
}

/// Key numbers of a finished run.
#[derive(Clone, Copy, Debug)]
pub struct RunOutcome {
    pub final_fidelity: f64,
    pub final_n_a: f64,
}

fn snapshot_label(input: &InputSpec, index: usize, z: f64) -> String {
    // S3 positions are the primed set; the centre line is shared.
    let primed = matches!(input, InputSpec::Preset(Preset::S3)) && z != 0.0;
    format!("{}{}", index + 1, if primed { "p" } else { "" })
}

fn write_record(w: &mut ArtifactWriter, rec: &RunRecord, cfg: &ResolvedConfig) -> Result<()> {
    w.text("trace.csv", "trace", &trace_csv(rec))?;
    for (k, snap) in rec.snapshots.iter().enumerate() {
        let label = snapshot_label(&cfg.input, k, snap.requested);
        w.snapshot(&format!("snapshot_{label}.cpcg"), snap, label.clone())?;
    }
    for (level, snap) in &rec.fidelity_snapshots {
        w.snapshot(&format!("fidelity_{level}.cpcg"), snap, format!("F>={level}"))?;
    }
    if !cfg.sim.probes.is_empty() {
        w.text("probes.csv", "probes", &probes_csv(rec, &cfg.sim.probes))?;
    }
    Ok(())
}

/// Propagates the resolved configuration and writes artifacts plus a
/// manifest into `out`.
pub fn run_to_dir(cfg: &ResolvedConfig, out: &Path) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut w = ArtifactWriter::new(out)?;
    let (outcome, steps, drift, zero_flag) = match &cfg.input {
        InputSpec::Ensemble(_) => {
            let spec = cfg.input.ensemble()?.expect("ensemble input");
            let rec = run_ensemble(&spec, &cfg.sim)?;
            let mut s = String::from("z,F\n");
            for (z, f) in rec.z_trace.iter().zip(&rec.mixed_fidelity_trace) {
                writeln!(s, "{},{}", num(*z), num(*f))?;
            }
            w.text("ensemble.csv", "ensemble_trace", &s)?;
            for (k, b) in rec.branches.iter().enumerate() {
                let mut sub = w.subdir(&format!("branch_{k}"))?;
                write_record(&mut sub, b, cfg)?;
                w.absorb(sub);
            }
            let n_a = rec
                .weights
                .iter()
                .zip(&rec.branches)
                .map(|(p, b)| p * b.norm_a_trace.last().expect("trace") / b.input_norm2)
                .sum();
            let drift = rec.branches.iter().map(|b| b.max_conservation_drift()).fold(0.0, f64::max);
            let outcome = RunOutcome {
                final_fidelity: rec.final_mixed_fidelity(),
                final_n_a: n_a,
            };
            (outcome, rec.branches[0].steps, drift, rec.branches.iter().any(|b| b.zero_norm_flag))
        }
        input => {
            let psi = input.build(&cfg.sim.eta, &cfg.sim.nu)?;
            let rec = cpcgate::run(&psi, &cfg.sim)?;
            write_record(&mut w, &rec, cfg)?;
            let outcome = RunOutcome {
                final_fidelity: rec.final_fidelity(),
                final_n_a: *rec.norm_a_trace.last().expect("trace"),
            };
            (outcome, rec.steps, rec.max_conservation_drift(), rec.zero_norm_flag)
        }
    };
    let canonical = cfg.canonical_json();
    let manifest = RunManifest {
        software: SOFTWARE,
        config_digest: sha256_hex(canonical.as_bytes()),
        config: serde_json::from_str(&canonical)?,
        input: cfg.input.label(),
        steps,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        final_fidelity: outcome.final_fidelity,
        final_n_a: outcome.final_n_a,
        max_conservation_drift: drift,
        zero_norm_flag: zero_flag,
        artifacts: w.artifacts,
    };
    manifest.write(out)?;
    Ok(outcome)
}

pub fn cmd_run(config: Option<&Path>, out: &Path) -> Result<()> {
    let raw = load_config(config)?;
    if raw.sweep.is_some() {
        bail!("config contains a \"sweep\" section; use the sweep subcommand");
    }
    let cfg = raw.resolve()?;
    let o = run_to_dir(&cfg, out)?;
    println!("input        {}", cfg.input.label());
    println!("steps        {}", cfg.sim.steps());
    println!("F(L/2)       {:.6}", o.final_fidelity);
    println!("n_a(L/2)     {:.3e}", o.final_n_a);
    println!("manifest     {}", out.join("manifest.json").display());
    Ok(())
}

pub fn cmd_sweep(config: Option<&Path>, out: &Path) -> Result<()> {
    let raw = load_config(config)?;
    let sweep = raw.sweep.clone().ok_or_else(|| anyhow!("config has no \"sweep\" section"))?;
    let points = sweep.points()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let width = points.len().to_string().len().max(3);
    let results: Vec<(PathBuf, Result<RunOutcome>)> = points
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let dir = out.join(format!("point_{k:0width$}"));
            let r = raw
                .with_point(p)
                .and_then(|c| c.resolve())
                .map_err(anyhow::Error::from)
                .and_then(|c| run_to_dir(&c, &dir));
            (dir, r)
        })
        .collect();

    let keys: Vec<&str> = points[0].iter().map(|(k, _)| *k).collect();
    let mut csv = format!("point,{},F,n_a,status\n", keys.join(","));
    let mut failures = 0;
    for (k, (p, (_, r))) in points.iter().zip(&results).enumerate() {
        let vals: Vec<String> = p.iter().map(|(_, v)| v.to_string()).collect();
        match r {
            Ok(o) => writeln!(csv, "{k},{},{},{},ok", vals.join(","), num(o.final_fidelity), num(o.final_n_a))?,
            Err(e) => {
                failures += 1;
                writeln!(csv, "{k},{},,,{}", vals.join(","), csv_field(&format!("error: {e:#}")))?;
            }
        }
    }
    std::fs::write(out.join("summary.csv"), &csv)?;
    print!("{csv}");
    if failures == results.len() {
        bail!("all {failures} sweep points failed");
    }
    if failures > 0 {
        eprintln!("warning: {failures} of {} sweep points failed", results.len());
    }
    Ok(())
}

pub fn cmd_calibrate(config: Option<&Path>, out: Option<&Path>, scan_points: usize, tol: f64) -> Result<()> {
    let cfg = load_config(config)?.resolve()?;
    let input = cfg.input.build(&cfg.sim.eta, &cfg.sim.nu)?;
    let sigma = cfg.sim.kernel.sigma();
    let t = calibrate(&input, &cfg.sim, scan_points, tol)?;
    let rows = [
        ("gamma_0", "WKB seed", t.wkb, flip_residual(t.wkb, sigma)?),
        ("gamma_*", "oscillator flip", t.oscillator, t.oscillator_residual),
        ("gamma_**", "full simulation; residual 1 - F(L/2)", t.full.gamma, 1.0 - t.full.fidelity),
    ];
    println!("{:<10} {:>12} {:>12}  stage", "name", "value", "residual");
    let mut csv = String::from("name,stage,value,residual\n");
    for (name, stage, v, r) in rows {
        println!("{name:<10} {v:>12.6} {r:>12.3e}  {stage}");
        writeln!(csv, "{name},{},{v},{r}", csv_field(stage))?;
    }
    println!("F(L/2) at gamma_** = {:.8} ({} simulations)", t.full.fidelity, t.full.evaluations);
    if t.full.at_boundary {
        eprintln!("warning: best coarse sample lies on the search boundary");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("calibration.csv"), csv)?;
        let mut scan = String::from("gamma,F\n");
        for (g, f) in &t.full.scan {
            writeln!(scan, "{},{}", num(*g), num(*f))?;
        }
        std::fs::write(dir.join("calibration_scan.csv"), scan)?;
    }
    Ok(())
}

/// Delay window half extent wide enough for unit-width pulses.
pub const DEFAULT_COHERENCE_WINDOW: f64 = 4.0;

pub fn cmd_coherence(
    config: Option<&Path>,
    grid: Option<&Path>,
    half_extent: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?.resolve()?;
    let sigma = cfg.sim.kernel.sigma();
    let window = CoherenceWindow::wide(sigma, half_extent.unwrap_or(DEFAULT_COHERENCE_WINDOW));
    let (label, states): (String, Vec<(f64, ComplexGrid2D)>) = match grid {
        Some(path) => match load_grid(path)? {
            StoredGrid::Two(g) => (path.display().to_string(), vec![(1.0, g)]),
            StoredGrid::One(_) => bail!("{} holds a 1-D grid; coherence needs a 2-D state", path.display()),
        },
        None => match cfg.input.ensemble()? {
            Some(spec) => {
                let grids = spec
                    .branches()
                    .iter()
                    .map(|b| b.shape.build(&cfg.sim.eta, &cfg.sim.nu))
                    .collect::<cpcgate::Result<Vec<_>>>()?;
                (cfg.input.label(), spec.weights().into_iter().zip(grids).collect())
            }
            None => (cfg.input.label(), vec![(1.0, cfg.input.build(&cfg.sim.eta, &cfg.sim.nu)?)]),
        },
    };
    let map = if states.len() == 1 {
        gamma22(&states[0].1, window)?
    } else {
        let (w, g): (Vec<f64>, Vec<ComplexGrid2D>) = states.iter().cloned().unzip();
        ensemble_gamma22(&w, &g, window)?
    };
    let widths = coherence_widths(&map)?;
    let mut margin = 0.0f64;
    let mut gradient = 0.0f64;
    for (_, psi) in &states {
        let r = slowness(psi, sigma)?;
        margin = margin.max(r.margin);
        gradient = gradient.max(r.gradient);
    }
    let rows = [
        ("T4", widths.diagonal),
        ("width_anti_diagonal", widths.anti_diagonal),
        ("width_tau_s", widths.tau_s),
        ("width_tau_i", widths.tau_i),
        ("slowness_margin", margin),
        ("gradient_sigma", gradient),
    ];
    println!("input {label}, sigma = {sigma}");
    let mut csv = String::from("quantity,value\n");
    for (name, v) in rows {
        println!("{name:<20} {v:>12.6}");
        writeln!(csv, "{name},{v}")?;
    }
    if widths.clipped {
        eprintln!("warning: |Gamma| did not fall to half inside the window; widths are lower bounds");
    }
    writeln!(csv, "clipped,{}", widths.clipped)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("coherence.csv"), csv)?;
    }
    Ok(())
}

/// Physical inputs for `units`; absent values fall back to the
/// fused-silica example set.
#[derive(Clone, Debug, Default)]
pub struct UnitsArgs {
    pub params: Option<PathBuf>,
    pub n2: Option<f64>,
    pub i_p: Option<f64>,
    pub lambda_p: Option<f64>,
    pub area: Option<f64>,
    pub beta1: Option<f64>,
    pub tau_fwhm: Option<f64>,
    pub sigma_phys: Option<f64>,
    pub assume_example: bool,
}

pub const EXAMPLE_LAMBDA_P: f64 = 800e-9;
pub const EXAMPLE_AREA: f64 = 1e-12;

pub fn cmd_units(args: &UnitsArgs, out: Option<&Path>) -> Result<()> {
    let base = PhysicalParams::fused_silica_example();
    let mut p = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => base,
    };
    let mut source: Vec<(&str, &str)> = Vec::new();
    let from_file = args.params.is_some();
    let default_tag = if from_file { "input" } else { "default" };
    macro_rules! apply {
        ($field:ident, $arg:expr, $name:literal) => {
            if let Some(v) = $arg {
                p.$field = v;
                source.push(($name, "input"));
            } else {
                source.push(($name, default_tag));
            }
        };
    }
    apply!(n2, args.n2, "n2");
    apply!(i_p, args.i_p, "I_p");
    apply!(beta1, args.beta1, "beta1");
    apply!(tau_fwhm, args.tau_fwhm, "tau_fwhm");
    apply!(sigma_phys, args.sigma_phys, "sigma_phys");
    let mut assumptions = Vec::new();
    for (name, arg, example, slot) in [
        ("lambda_p", args.lambda_p, EXAMPLE_LAMBDA_P, &mut p.lambda_p),
        ("S", args.area, EXAMPLE_AREA, &mut p.area),
    ] {
        if arg.is_some() {
            *slot = arg;
            source.push((name, "input"));
        } else if slot.is_some() {
            source.push((name, "input"));
        } else if args.assume_example {
            *slot = Some(example);
            source.push((name, "ASSUMED"));
            assumptions.push(format!("{name} = {example:e} is an assumption, not a measured input"));
        } else {
            source.push((name, "missing"));
        }
    }
    let both = normalize_both(&p)?;

    let tag = |name: &str| source.iter().find(|(n, _)| *n == name).map(|(_, s)| *s).unwrap_or("");
    let mut rows: Vec<(String, String, String, &str)> = vec![
        ("n2".into(), format!("{:e}", p.n2), "cm^2/W".into(), tag("n2")),
        ("I_p".into(), format!("{:e}", p.i_p), "W/cm^2".into(), tag("I_p")),
        ("lambda_p".into(), format!("{:e}", p.lambda_p.unwrap_or(f64::NAN)), "m".into(), tag("lambda_p")),
        ("S".into(), format!("{:e}", p.area.unwrap_or(f64::NAN)), "m^2".into(), tag("S")),
        ("beta1".into(), format!("{:e}", p.beta1), "s/m".into(), tag("beta1")),
        ("tau_fwhm".into(), format!("{:e}", p.tau_fwhm), "s".into(), tag("tau_fwhm")),
        ("sigma_phys".into(), format!("{:e}", p.sigma_phys), "s".into(), tag("sigma_phys")),
        (
            "gamma_phys".into(),
            format!("{:.7e}", both[0].gamma_physical),
            cpcgate::units::dims::GAMMA_RAW.to_string(),
            "derived",
        ),
    ];
    for n in &both {
        let r = n.reading.label();
        rows.push((format!("tau [{r}]"), format!("{:.6e}", n.tau), "s".into(), "derived"));
        rows.push((format!("z0 [{r}]"), format!("{:.6}", n.z0), "m".into(), "derived"));
        rows.push((format!("sigma/tau [{r}]"), format!("{:.6}", n.sigma_over_tau), "1".into(), "derived"));
        rows.push((format!("gamma [{r}]"), format!("{:.6}", n.gamma), "1".into(), "derived"));
    }
    println!("{:<24} {:>16}  {:<14} source", "quantity", "value", "unit");
    let mut csv = String::from("quantity,value,unit,source\n");
    for (q, v, u, s) in &rows {
        println!("{q:<24} {v:>16}  {u:<14} {s}");
        writeln!(csv, "{},{v},{},{s}", csv_field(q), csv_field(u))?;
    }
    for a in &assumptions {
        println!("note: {a}");
    }
    for n in &both {
        for w in &n.warnings {
            eprintln!("warning [{}]: {w}", n.reading.label());
        }
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("units.csv"), csv)?;
    }
    Ok(())
}

pub fn cmd_presets() {
    println!(
        "{:<4} {:>6} {:>8} {:>6} {:>6} {:>9} {:>6} {:>6}  snapshots / description",
        "name", "tau_s", "tau_i", "t_s0", "t_i0", "phi", "C_s", "C_i"
    );
    for p in Preset::ALL {
        let s = p.spec();
        println!(
            "{:<4} {:>6.3} {:>8.4} {:>6.2} {:>6.2} {:>9.5} {:>6.1} {:>6.1}  {:?}",
            p.name(),
            s.tau_s,
            s.tau_i,
            s.t_s0,
            s.t_i0,
            s.phi,
            s.c_s,
            s.c_i,
            p.snapshot_zs()
        );
        println!("{:<4} {}", "", p.description());
    }
}
