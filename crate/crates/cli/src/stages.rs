//! One function per pipeline stage. Each writes its artifact and returns the
//! paths it wrote.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use dunklab::critical_radius::CriticalRadiusField;
use dunklab::cubes::{build_stopping_time, CubeCollection};
use dunklab::dunkl_ops::{leibniz_residual, quadratic_form, SmoothField};
use dunklab::fefferman_phong::{fp_verify, standard_family, support_region};
use dunklab::hardy::{atom_fixture, eligible_cubes, negative_control, validate_atom, HardyEngine, Semigroup};
use dunklab::heat::{Grid1D, HeatKernelEngine, HeatRoute, SchrodingerKernelEngine};
use dunklab::measure::Region;
use dunklab::potential::Polynomial;
use serde::Serialize;
use serde_json::json;

use crate::config::{parse_axis, Context, ARTIFACT_VERSION};

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

fn fmt_point(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

/// Tensor grid from a per-axis list.
fn tensor(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    pts
}

#[derive(Serialize)]
struct BallRecord {
    x: Vec<f64>,
    r: f64,
    value: f64,
    est_error: f64,
}

pub fn ball_volume(ctx: &Context, x: &[f64], r: f64, out: Option<&Path>) -> Result<()> {
    if x.len() != ctx.rs.dim() {
        bail!("point has {} coordinates, expected {}", x.len(), ctx.rs.dim());
    }
    let est = ctx.pm.measure.ball_volume_estimate(x, r)?;
    let doc = json!({"version": ARTIFACT_VERSION, "value": est.value, "est_error": est.error});
    match out {
        Some(p) => write_json(p, &doc),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
    }
}

pub fn measure(ctx: &Context, out: &Path) -> Result<Vec<PathBuf>> {
    let dim = ctx.rs.dim();
    let centers = tensor(&[-1.5, 0.0, 0.75], dim);
    let radii = [0.1, 0.5, 1.0, 4.0];
    let mut balls = Vec::new();
    let mut sample = Vec::new();
    for c in &centers {
        for &r in &radii {
            let est = ctx.pm.measure.ball_volume_estimate(c, r)?;
            balls.push(BallRecord {
                x: c.clone(),
                r,
                value: est.value,
                est_error: est.error,
            });
            sample.push((c.clone(), r));
        }
    }
    let doubling = ctx.pm.measure.doubling_diagnostic(&sample)?;
    write_json(
        out,
        &json!({
            "version": ARTIFACT_VERSION,
            "homogeneous_dimension": ctx.rs.homogeneous_dimension(),
            "balls": balls,
            "doubling": doubling,
        }),
    )?;
    Ok(vec![out.to_path_buf()])
}

/// Reverse Hölder sweep: one row per ball.
pub fn potential(ctx: &Context, q: f64, out: &Path) -> Result<Vec<PathBuf>> {
    let dim = ctx.rs.dim();
    let cfg = &ctx.config.domain;
    let mut centers_axis = Vec::new();
    for i in 0..5 {
        centers_axis.push(0.5 * (cfg.lo[0] + (cfg.hi[0] - cfg.lo[0]) * i as f64 / 4.0));
    }
    let radii = [0.25, 0.5, 1.0, 2.0, 4.0];
    let mut w = csv_writer(out)?;
    w.write_record(["version", "center", "radius", "lhs", "rhs", "ratio"])?;
    for c in tensor(&centers_axis, dim) {
        for &r in &radii {
            let region = Region::ball(&c, r);
            let (vol, mu) = ctx.pm.volumes(&region)?;
            let vq = ctx.pm.measure.integrate(|y| ctx.pm.v(y).powf(q), &region, None)?.value;
            let lhs = (vq / vol).powf(1.0 / q);
            let rhs = mu / vol;
            let ratio = if rhs > 0.0 { lhs / rhs } else { f64::NAN };
            w.write_record([
                ARTIFACT_VERSION.to_string(),
                fmt_point(&c),
                r.to_string(),
                format!("{lhs:e}"),
                format!("{rhs:e}"),
                format!("{ratio:e}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(vec![out.to_path_buf()])
}

pub fn m_field(ctx: &Context, grid: &str, out: &Path) -> Result<Vec<PathBuf>> {
    let axis = parse_axis(grid)?;
    let field = CriticalRadiusField::new(ctx.pm.clone());
    let mut w = csv_writer(out)?;
    w.write_record(["version", "point", "m", "r_star", "F_at_rstar"])?;
    for x in tensor(&axis, ctx.rs.dim()) {
        let v = field.evaluate(&x)?;
        w.write_record([
            ARTIFACT_VERSION.to_string(),
            fmt_point(&x),
            format!("{:e}", v.m),
            format!("{:e}", v.r_star),
            format!("{:e}", v.f_at_r_star),
        ])?;
    }
    w.flush()?;
    Ok(vec![out.to_path_buf()])
}

pub fn build_cubes(ctx: &Context, lo: &[f64], hi: &[f64], max_depth: u32) -> Result<CubeCollection> {
    Ok(build_stopping_time(lo, hi, &ctx.pm, max_depth)?)
}

pub fn cubes(ctx: &Context, lo: &[f64], hi: &[f64], max_depth: u32, out: &Path) -> Result<Vec<PathBuf>> {
    let cc = build_cubes(ctx, lo, hi, max_depth)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = cc.to_json();
    text.push('\n');
    std::fs::write(out, text)?;
    Ok(vec![out.to_path_buf()])
}

pub fn load_cubes(ctx: &Context, path: &Path) -> Result<CubeCollection> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(CubeCollection::from_json(&text, &ctx.config.domain.lo, &ctx.config.domain.hi)?)
}

fn leibniz_pairs(dim: usize) -> Vec<(&'static str, SmoothField, SmoothField)> {
    let c = |v: f64| vec![v; dim];
    let x0 = |p: u32| {
        let mut e = vec![0u32; dim];
        e[0] = p;
        e
    };
    vec![
        ("gauss-gauss", SmoothField::gaussian(1.0, 0.5, &c(0.3)), SmoothField::gaussian(1.0, 1.0, &c(-0.4))),
        (
            "gauss-poly",
            SmoothField::gaussian(1.0, 0.8, &c(0.0)),
            SmoothField::polynomial(Polynomial::new(vec![(1.0, x0(1)), (0.5, x0(2))])),
        ),
        (
            "poly-gauss",
            SmoothField::polynomial(Polynomial::new(vec![(1.0, x0(3)), (-2.0, x0(0))])),
            SmoothField::gaussian(1.0, 0.3, &c(1.0)),
        ),
    ]
}

pub fn ops_leibniz(ctx: &Context, out: &Path) -> Result<Vec<PathBuf>> {
    let dim = ctx.rs.dim();
    let axis: Vec<f64> = (0..10).map(|i| -2.3 + 0.5 * i as f64).collect();
    let sample = tensor(&axis, dim);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, f, g) in leibniz_pairs(dim) {
        for j in 0..dim {
            let r = leibniz_residual(&ctx.rs, &f, &g, j, &sample);
            worst = worst.max(r);
            rows.push(json!({"pair": name, "j": j, "residual": r}));
        }
    }
    write_json(
        out,
        &json!({"version": ARTIFACT_VERSION, "points": sample.len(), "pairs": rows, "max_residual": worst}),
    )?;
    Ok(vec![out.to_path_buf()])
}

pub fn ops_qform(ctx: &Context, out: &Path) -> Result<Vec<PathBuf>> {
    let dim = ctx.rs.dim();
    let mut w = csv_writer(out)?;
    w.write_record(["version", "f_id", "gradient_part", "potential_part", "total"])?;
    for tf in standard_family(dim) {
        let region = support_region(&tf.field, dim)?;
        let q = quadratic_form(&tf.field, &ctx.pm, &region, Some(ctx.config.tol))?;
        w.write_record([
            ARTIFACT_VERSION.to_string(),
            tf.id.clone(),
            format!("{:e}", q.gradient_part),
            format!("{:e}", q.potential_part),
            format!("{:e}", q.total),
        ])?;
    }
    w.flush()?;
    Ok(vec![out.to_path_buf()])
}

pub fn heat(ctx: &Context, t: f64, grid: &str, out: &Path) -> Result<Vec<PathBuf>> {
    if !(t > 0.0) {
        bail!("t must be positive");
    }
    let dim = ctx.rs.dim();
    let engine = HeatKernelEngine::new(ctx.rs.clone())?;
    let mut normalization_error: f64 = 0.0;
    for v in [0.0, 1.0, 3.0] {
        let x = vec![v; dim];
        normalization_error = normalization_error.max((engine.normalization(&x, t, HeatRoute::Spectral)? - 1.0).abs());
    }
    let axis: Vec<f64> = if dim == 1 {
        (0..=20).map(|i| -5.0 + 0.5 * i as f64).collect()
    } else {
        (0..=10).map(|i| -5.0 + i as f64).collect()
    };
    let pts = tensor(&axis, dim);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = pts
        .iter()
        .flat_map(|x| pts.iter().map(move |y| (x.clone(), y.clone())))
        .collect();
    let mut symmetry_error: f64 = 0.0;
    for (x, y) in pairs.iter().step_by(7) {
        let a = engine.closed_form(x, y, t);
        let b = engine.closed_form(y, x, t);
        if a > 0.0 {
            symmetry_error = symmetry_error.max((a - b).abs() / a);
        }
    }
    let (semigroup_error, lattice_symmetry) = if dim == 1 {
        let sch = SchrodingerKernelEngine::new(engine.clone(), ctx.pm.profile.clone(), Grid1D::parse(grid)?)?;
        sch.check_grid(t)?;
        let k = sch.kernel_matrix(t);
        let scale = k.iter().cloned().fold(0.0, f64::max);
        let mut asym: f64 = 0.0;
        for ((i, j), v) in k.indexed_iter() {
            asym = asym.max((v - k[[j, i]]).abs() / scale);
        }
        (Some(sch.semigroup_error(t / 2.0, t / 2.0)), Some(asym))
    } else {
        (None, None)
    };
    let bound = engine.gaussian_bound_check(&ctx.config.heat.t_grid, &pairs)?;
    write_json(
        out,
        &json!({
            "version": ARTIFACT_VERSION,
            "t": t,
            "normalization_error": normalization_error,
            "symmetry_error": symmetry_error.max(lattice_symmetry.unwrap_or(0.0)),
            "gaussian_bound": {"C": bound.constant, "c": bound.c, "C_linear": bound.constant_linear, "scan": bound.rows},
            "semigroup_error": semigroup_error,
        }),
    )?;
    Ok(vec![out.to_path_buf()])
}

pub fn fp(ctx: &Context, out: &Path) -> Result<Vec<PathBuf>> {
    let field = CriticalRadiusField::new(ctx.pm.clone());
    let report = fp_verify(&standard_family(ctx.rs.dim()), &ctx.pm, &field, ctx.config.tol, ctx.config.fp_c_frozen)?;
    let mut w = csv_writer(out)?;
    w.write_record(["version", "f_id", "lhs", "rhs", "ratio"])?;
    for e in &report.entries {
        w.write_record([
            report.version.to_string(),
            e.f_id.clone(),
            format!("{:e}", e.lhs),
            format!("{:e}", e.rhs),
            format!("{:e}", e.ratio),
        ])?;
    }
    w.flush()?;
    if !report.within_frozen {
        bail!("largest ratio {} exceeds the frozen constant", report.empirical_constant);
    }
    Ok(vec![out.to_path_buf()])
}

fn flags(v: &dunklab::hardy::AtomValidation) -> String {
    [(v.support, 'A'), (v.size, 'B'), (v.cancellation, 'C')]
        .iter()
        .map(|&(ok, c)| if ok { c } else { '-' })
        .collect()
}

pub fn hardy(ctx: &Context, cc: &CubeCollection, n: usize, seed: u64, out: &Path, summary: &Path) -> Result<Vec<PathBuf>> {
    let heat = HeatKernelEngine::new(ctx.rs.clone())?;
    let engine = SchrodingerKernelEngine::new(heat, ctx.pm.profile.clone(), Grid1D::parse(&ctx.config.hardy.grid)?)?;
    let reach = ctx.config.hardy.reach;
    let atoms = atom_fixture(&engine, cc, n, seed, reach)?;
    let eligible = eligible_cubes(cc, reach);
    let big = *eligible
        .iter()
        .filter(|&&i| cc.cubes[i].center[0].abs() < reach)
        .max_by(|&&a, &&b| cc.cubes[a].side.total_cmp(&cc.cubes[b].side).then(b.cmp(&a)))
        .context("no cube for the negative control")?;
    let neg = negative_control(&engine, cc, big)?;
    let hardy = HardyEngine::new(engine);
    let mut fs: Vec<Vec<f64>> = atoms.iter().map(|a| a.atom.values.clone()).collect();
    fs.push(neg.values.clone());
    let norms = hardy.h1_norms(&fs, Semigroup::Schrodinger);
    let mut w = csv_writer(out)?;
    w.write_record(["version", "atom_id", "Q_id", "r", "h1_norm", "valid_flags"])?;
    for (a, nv) in atoms.iter().zip(&norms) {
        let v = validate_atom(hardy.engine(), &a.atom);
        w.write_record([
            ARTIFACT_VERSION.to_string(),
            a.atom_id.to_string(),
            a.q_id.to_string(),
            format!("{:e}", a.r),
            format!("{nv:e}"),
            flags(&v),
        ])?;
    }
    w.flush()?;
    let family_max = norms[..atoms.len()].iter().cloned().fold(0.0, f64::max);
    let neg_norm = norms[atoms.len()];
    write_json(
        summary,
        &json!({
            "version": ARTIFACT_VERSION,
            "atoms": atoms.len(),
            "seed": seed,
            "time_grid": hardy.config,
            "family_max": family_max,
            "negative_control": {"cube": big, "r": neg.radius, "h1_norm": neg_norm, "factor": neg_norm / family_max},
        }),
    )?;
    Ok(vec![out.to_path_buf(), summary.to_path_buf()])
}
