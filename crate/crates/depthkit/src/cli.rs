//! Command-line surface: conversion, upsampling, phase-field inspection,
//! synthetic fixtures, evaluation, and a one-shot pipeline demo.
//!
//! Every subcommand is deterministic given its flags and seed; repeated
//! runs produce byte-identical PFM/CSV artifacts. Flag values may also come
//! from `DEPTHKIT_`-prefixed environment variables where marked.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::canonical::{self, ResampleMode};
use crate::depth::{self, EvalReport};
use crate::dgse::{self, ScaleField, Shift};
use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::grid::{DepthMap, Grid};
use crate::io::{lut, pfm, pgm, weights};
use crate::rope::{self, TokenGrid};
use crate::synth::{self, SceneSpec};

#[derive(Debug, Parser)]
#[command(name = "depthkit", version, about = "Cross-camera depth estimation kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resample a source-camera depth map into the canonical ERP space
    ErpConvert(ErpConvertArgs),
    /// Upsample a low-resolution scale map under relative-depth guidance
    DgseUpsample(DgseUpsampleArgs),
    /// Write a rotary phase field to CSV
    RopeDump(RopeDumpArgs),
    /// Render an analytic scene into ground-truth and relative depth maps
    Synth(SynthArgs),
    /// Score a predicted depth map against ground truth
    Eval(EvalArgs),
    /// Run the full relative-to-metric pipeline on an analytic scene
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Nearest,
    Bilinear,
}

impl From<ModeArg> for ResampleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Nearest => ResampleMode::Nearest,
            ModeArg::Bilinear => ResampleMode::Bilinear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneArg {
    Box,
    Ground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleSourceArg {
    /// Median-pooled per-pixel true scales (analytic best case)
    Oracle,
    /// Deterministic toy attention head with seeded weights
    Head,
}

#[derive(Debug, Args)]
pub struct ErpConvertArgs {
    /// Source depth map (PFM)
    #[arg(long)]
    pub input: PathBuf,
    /// Optional validity mask for the source (PGM); default: value > 0
    #[arg(long)]
    pub input_mask: Option<PathBuf>,
    /// Source camera description (JSON)
    #[arg(long)]
    pub camera: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub erp_height: usize,
    #[arg(long, default_value_t = 512)]
    pub erp_width: usize,
    /// Longitude limit in radians (requires --fov-phi)
    #[arg(long, requires = "fov_phi")]
    pub fov_theta: Option<f64>,
    /// Latitude limit in radians (requires --fov-theta)
    #[arg(long, requires = "fov_theta")]
    pub fov_phi: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Nearest)]
    pub mode: ModeArg,
    /// Output ERP depth (PFM)
    #[arg(long)]
    pub out: PathBuf,
    /// Output validity mask (PGM); default: --out with .pgm extension
    #[arg(long)]
    pub out_mask: Option<PathBuf>,
    #[arg(long, env = "DEPTHKIT_CACHE_DIR", default_value = ".depthkit-cache")]
    pub cache_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DgseUpsampleArgs {
    /// Full-resolution relative depth guide (PFM)
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub depth_mask: Option<PathBuf>,
    /// Low-resolution scale map (PFM), pooled shape of --depth at --stride
    #[arg(long)]
    pub scales: PathBuf,
    #[arg(long, default_value_t = 14, env = "DEPTHKIT_STRIDE")]
    pub stride: usize,
    /// Output full-resolution scale map (PFM)
    #[arg(long)]
    pub out: PathBuf,
    /// Also check analytic gradients against central finite differences
    /// (quadratic cost; intended for small inputs)
    #[arg(long)]
    pub grad_check: bool,
}

#[derive(Debug, Args)]
pub struct RopeDumpArgs {
    #[arg(long, default_value_t = 8)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Pole attenuation floor in (0, 1]; omit for the unweighted 2D field
    /// (equivalent to --delta 1.0)
    #[arg(long)]
    pub delta: Option<f64>,
    /// Output CSV: row, col, slot, phase, weight
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SceneArg::Box)]
    pub scene: SceneArg,
    /// Box half-extents in meters, comma separated
    #[arg(long, default_value = "1.0,1.0,1.0", value_parser = parse_triple)]
    pub box_half_extents: [f64; 3],
    /// Camera position inside the box, comma separated
    #[arg(long, default_value = "0.0,0.0,0.0", value_parser = parse_triple)]
    pub camera_pos: [f64; 3],
    #[arg(long, default_value_t = 1.5)]
    pub camera_height: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ground_offset: f64,
    /// Render through this camera (JSON) instead of the default ERP grid
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub erp_height: usize,
    #[arg(long, default_value_t = 128)]
    pub erp_width: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Extra validity mask (PGM) intersected with both maps
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Ignore ground-truth pixels deeper than this many meters
    #[arg(long)]
    pub cap: Option<f64>,
    /// Output CSV report
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SceneArg::Box)]
    pub scene: SceneArg,
    #[arg(long, default_value = "2.5,2.0,3.0", value_parser = parse_triple)]
    pub box_half_extents: [f64; 3],
    #[arg(long, default_value = "0.9,-0.6,0.7", value_parser = parse_triple)]
    pub camera_pos: [f64; 3],
    #[arg(long, default_value_t = 1.5)]
    pub camera_height: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ground_offset: f64,
    #[arg(long, default_value_t = 128)]
    pub erp_height: usize,
    #[arg(long, default_value_t = 256)]
    pub erp_width: usize,
    #[arg(long, default_value_t = 14, env = "DEPTHKIT_STRIDE")]
    pub stride: usize,
    /// Multiplicative warp amplitude applied to the relative depth
    /// (0 leaves it untouched)
    #[arg(long, default_value_t = 0.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 42, env = "DEPTHKIT_SEED")]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ScaleSourceArg::Oracle)]
    pub scale_source: ScaleSourceArg,
    #[arg(long)]
    pub cap: Option<f64>,
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got '{s}'"));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("bad number '{part}'"))?;
    }
    Ok(out)
}

/// Nine significant digits, stable across runs; used for all CSV output.
fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn load_depth(path: &Path, mask: Option<&Path>) -> Result<DepthMap> {
    let values = pfm::read_pfm(path)?;
    let valid = match mask {
        Some(mask_path) => {
            let m = pgm::read_mask(mask_path)?;
            if m.shape() != values.shape() {
                return Err(Error::Shape(format!(
                    "mask {:?} does not match depth {:?}",
                    m.shape(),
                    values.shape()
                )));
            }
            m
        }
        None => values.map(|v| *v > 0.0),
    };
    DepthMap::new(values, valid)
}

fn write_depth(dir_or_path: &Path, d: &DepthMap, mask_path: Option<&Path>) -> Result<()> {
    pfm::write_pfm(dir_or_path, &d.values)?;
    if let Some(mask_path) = mask_path {
        pgm::write_mask(mask_path, &d.valid)?;
    }
    Ok(())
}

fn write_report_csv(path: &Path, rows: &[(&str, EvalReport)], with_method: bool) -> Result<()> {
    let mut text = String::new();
    if with_method {
        text.push_str("method,");
    }
    text.push_str("delta1,delta2,delta3,abs_rel,rmse,valid_count\n");
    for (name, r) in rows {
        if with_method {
            text.push_str(name);
            text.push(',');
        }
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_sig9(r.delta1),
            fmt_sig9(r.delta2),
            fmt_sig9(r.delta3),
            fmt_sig9(r.abs_rel),
            fmt_sig9(r.rmse),
            r.valid_count
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ErpConvert(args) => cmd_erp_convert(&args),
        Command::DgseUpsample(args) => cmd_dgse_upsample(&args),
        Command::RopeDump(args) => cmd_rope_dump(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Demo(args) => cmd_demo(&args),
    }
}

/// Build or reuse the cached lookup table for (camera, ERP size, limits).
fn cached_lookup_table(
    cam: &CameraModel,
    erp_size: (usize, usize),
    fov: Option<(f64, f64)>,
    cache_dir: &Path,
) -> Result<canonical::ErpLookupTable> {
    let fingerprint = canonical::table_fingerprint(cam, erp_size, fov);
    let hex: String = fingerprint.iter().map(|b| format!("{b:02x}")).collect();
    let cache_path = cache_dir.join(format!("{hex}.erplut"));

    if cache_path.is_file() {
        let start = Instant::now();
        match lut::read_lut(&cache_path, (cam.height(), cam.width())) {
            Ok(table) if table.fingerprint == fingerprint && table.erp_size == erp_size => {
                println!(
                    "lookup table: cache hit ({:.1} ms)",
                    start.elapsed().as_secs_f64() * 1e3
                );
                return Ok(table);
            }
            _ => println!("lookup table: cache entry unusable, rebuilding"),
        }
    }

    let start = Instant::now();
    let table = canonical::build_lookup_table(cam, erp_size, fov)?;
    std::fs::create_dir_all(cache_dir)?;
    // atomic replace-on-complete so concurrent runs never see partial files
    let tmp = cache_dir.join(format!(
        "{hex}.erplut.tmp-{}-{}",
        std::process::id(),
        start.elapsed().as_nanos()
    ));
    lut::write_lut(&tmp, &table)?;
    std::fs::rename(&tmp, &cache_path)?;
    println!(
        "lookup table: cache miss, built in {:.1} ms",
        start.elapsed().as_secs_f64() * 1e3
    );
    Ok(table)
}

fn cmd_erp_convert(args: &ErpConvertArgs) -> Result<()> {
    let cam = CameraModel::from_json(&std::fs::read_to_string(&args.camera)?)?;
    let src = load_depth(&args.input, args.input_mask.as_deref())?;
    if src.shape() != (cam.height(), cam.width()) {
        return Err(Error::Shape(format!(
            "input {:?} does not match camera size {}x{}",
            src.shape(),
            cam.height(),
            cam.width()
        )));
    }
    let fov = args.fov_theta.zip(args.fov_phi);
    let table = cached_lookup_table(
        &cam,
        (args.erp_height, args.erp_width),
        fov,
        &args.cache_dir,
    )?;
    let erp = table.resample_depth(&src, args.mode.into())?;
    let mask_path = args
        .out_mask
        .clone()
        .unwrap_or_else(|| args.out.with_extension("pgm"));
    write_depth(&args.out, &erp, Some(&mask_path))?;
    println!(
        "wrote {} and {} ({} of {} pixels valid)",
        args.out.display(),
        mask_path.display(),
        erp.valid_count(),
        args.erp_height * args.erp_width
    );
    Ok(())
}

/// Central finite differences for the guided-upsample gradient check.
fn fd_grad_check(
    s_lo: &ScaleField,
    d_hi: &DepthMap,
    d_lo: &DepthMap,
    r: usize,
) -> Result<(f64, f64)> {
    const H: f64 = 1e-6;
    let upstream = Grid::filled(d_hi.height(), d_hi.width(), 1.0);
    let (grad_s, grad_d) = dgse::guided_upsample_grad(s_lo, d_hi, d_lo, r, &upstream)?;
    let loss = |s: &ScaleField, d: &DepthMap| -> Result<f64> {
        let w = dgse::routing_weights(d, d_lo, r)?;
        let up = dgse::guided_upsample(s, &w)?;
        Ok(up.values.data().iter().sum())
    };
    let rel_err = |analytic: f64, fd: f64| {
        (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8)
    };

    let mut max_s = 0.0f64;
    let mut s_plus = s_lo.clone();
    for r_ in 0..s_lo.values.height() {
        for c in 0..s_lo.values.width() {
            let orig = s_lo.values[(r_, c)];
            s_plus.values.set(r_, c, orig + H);
            let fp = loss(&s_plus, d_hi)?;
            s_plus.values.set(r_, c, orig - H);
            let fm = loss(&s_plus, d_hi)?;
            s_plus.values.set(r_, c, orig);
            max_s = max_s.max(rel_err(grad_s[(r_, c)], (fp - fm) / (2.0 * H)));
        }
    }

    let mut max_d = 0.0f64;
    let mut d_plus = d_hi.clone();
    for r_ in 0..d_hi.height() {
        for c in 0..d_hi.width() {
            if !d_hi.valid[(r_, c)] {
                continue;
            }
            let orig = d_hi.values[(r_, c)];
            d_plus.values.set(r_, c, orig + H);
            let fp = loss(s_lo, &d_plus)?;
            d_plus.values.set(r_, c, orig - H);
            let fm = loss(s_lo, &d_plus)?;
            d_plus.values.set(r_, c, orig);
            max_d = max_d.max(rel_err(grad_d[(r_, c)], (fp - fm) / (2.0 * H)));
        }
    }
    Ok((max_s, max_d))
}

fn cmd_dgse_upsample(args: &DgseUpsampleArgs) -> Result<()> {
    let d_hi = load_depth(&args.depth, args.depth_mask.as_deref())?;
    let s_lo = ScaleField::new(pfm::read_pfm(&args.scales)?)?;
    let d_lo = dgse::median_pool(&d_hi, args.stride)?;
    if s_lo.shape() != d_lo.shape() {
        return Err(Error::Shape(format!(
            "scale map {:?} does not match pooled shape {:?} at stride {}",
            s_lo.shape(),
            d_lo.shape(),
            args.stride
        )));
    }
    let w = dgse::routing_weights(&d_hi, &d_lo, args.stride)?;
    let s_hi = dgse::guided_upsample(&s_lo, &w)?;
    pfm::write_pfm(&args.out, &s_hi.values)?;
    println!("wrote {}", args.out.display());

    if args.grad_check {
        let (max_s, max_d) = fd_grad_check(&s_lo, &d_hi, &d_lo, args.stride)?;
        println!("grad-check max relative error (scales): {max_s:.3e}");
        println!("grad-check max relative error (depth):  {max_d:.3e}");
    }
    Ok(())
}

fn cmd_rope_dump(args: &RopeDumpArgs) -> Result<()> {
    let field = rope::build_phase_field((args.height, args.width), args.channels, args.delta)?;
    let mut text = String::from("row,col,slot,phase,weight\n");
    for row in 0..args.height {
        for col in 0..args.width {
            for slot in 0..args.channels / 2 {
                text.push_str(&format!(
                    "{row},{col},{slot},{},{}\n",
                    fmt_sig9(field.phase(row, col, slot)),
                    fmt_sig9(field.weight(row, col))
                ));
            }
        }
    }
    std::fs::write(&args.out, text)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn scene_from_args(scene: SceneArg, box_half: [f64; 3], cam_pos: [f64; 3], height: f64, offset: f64) -> SceneSpec {
    match scene {
        SceneArg::Box => SceneSpec::BoxRoom {
            half_extents: box_half,
            camera_pos: cam_pos,
        },
        SceneArg::Ground => SceneSpec::GroundPlane {
            camera_height: height,
            ground_offset: offset,
        },
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let scene = scene_from_args(
        args.scene,
        args.box_half_extents,
        args.camera_pos,
        args.camera_height,
        args.ground_offset,
    );
    let cam = match &args.camera {
        Some(path) => CameraModel::from_json(&std::fs::read_to_string(path)?)?,
        None => CameraModel::Equirect {
            width: args.erp_width,
            height: args.erp_height,
        },
    };
    std::fs::create_dir_all(&args.out_dir)?;
    let gt = synth::render_depth(&scene, &cam)?;
    let (rel, median_scale) = depth::median_scale_normalize(&gt)?;
    write_depth(
        &args.out_dir.join("gt.pfm"),
        &gt,
        Some(&args.out_dir.join("gt_mask.pgm")),
    )?;
    pfm::write_pfm(args.out_dir.join("rel.pfm"), &rel.values)?;

    let sidecar = serde_json::json!({
        "scene": scene,
        "camera": serde_json::from_str::<serde_json::Value>(&cam.to_json())?,
        "median_scale": median_scale,
    });
    std::fs::write(
        args.out_dir.join("scene.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    println!(
        "wrote gt.pfm, gt_mask.pgm, rel.pfm, scene.json under {}",
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut pred = load_depth(&args.pred, None)?;
    let mut gt = load_depth(&args.gt, None)?;
    if let Some(mask_path) = &args.mask {
        let mask = pgm::read_mask(mask_path)?;
        if mask.shape() != pred.shape() {
            return Err(Error::Shape(format!(
                "mask {:?} does not match prediction {:?}",
                mask.shape(),
                pred.shape()
            )));
        }
        for (r, c, m) in mask.iter_indexed() {
            if !*m {
                pred.valid.set(r, c, false);
                gt.valid.set(r, c, false);
            }
        }
    }
    let report = depth::evaluate(&pred, &gt, args.cap)?;
    write_report_csv(&args.out, &[("eval", report)], false)?;
    println!(
        "delta1 = {:.3}, delta2 = {:.3}, delta3 = {:.3}, abs_rel = {:.4}, rmse = {:.4} ({} px)",
        report.delta1, report.delta2, report.delta3, report.abs_rel, report.rmse, report.valid_count
    );
    Ok(())
}

/// Deterministic token features standing in for global encoder features:
/// simple functions of the pooled depth and the token position.
fn tokens_from_depth(d_lo: &DepthMap, channels: usize) -> Result<TokenGrid> {
    let (h, w) = d_lo.shape();
    let median = d_lo.median()?;
    let grid = TokenGrid::from_fn(h, w, channels, |r, c, ch| {
        let v = if d_lo.valid[(r, c)] {
            d_lo.values[(r, c)] / median
        } else {
            0.0
        };
        match ch % 8 {
            0 => 1.0,
            1 => v,
            2 => (std::f64::consts::TAU * (r as f64 + 0.5) / h as f64).sin(),
            3 => (std::f64::consts::TAU * (c as f64 + 0.5) / w as f64).cos(),
            4 => v.sin(),
            5 => v.cos(),
            6 => r as f64 / h as f64,
            _ => c as f64 / w as f64,
        }
    })?;
    let mut cls = vec![0.0; channels];
    cls[0] = 1.0;
    grid.with_cls(cls)
}

fn cmd_demo(args: &DemoArgs) -> Result<()> {
    fn stage(name: &'static str) -> impl Fn(Error) -> Error {
        move |e| Error::Config(format!("demo stage {name}: {e}"))
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let scene = scene_from_args(
        args.scene,
        args.box_half_extents,
        args.camera_pos,
        args.camera_height,
        args.ground_offset,
    );

    // ground truth and the (optionally warped) relative-depth stand-in
    let erp_cam = CameraModel::Equirect {
        width: args.erp_width,
        height: args.erp_height,
    };
    let gt = synth::render_depth(&scene, &erp_cam).map_err(stage("synth"))?;
    let warp = synth::smooth_warp_field(gt.shape(), args.amplitude, args.seed)
        .map_err(stage("warp"))?;
    let d_hat = synth::apply_warp(&gt, &warp).map_err(stage("warp"))?;
    let (d_rel, _) = depth::median_scale_normalize(&d_hat).map_err(stage("normalize"))?;

    // depth-guided routing
    let d_lo = dgse::median_pool(&d_rel, args.stride).map_err(stage("median_pool"))?;
    let routing =
        dgse::routing_weights(&d_rel, &d_lo, args.stride).map_err(stage("routing_weights"))?;

    // low-resolution scales: analytic oracle or the toy head
    let (s_lo, shift) = match args.scale_source {
        ScaleSourceArg::Oracle => (
            synth::oracle_scale_field(&gt, &d_rel, args.stride).map_err(stage("oracle_scales"))?,
            0.0,
        ),
        ScaleSourceArg::Head => {
            let head = dgse::HeadWeights::seeded(8, args.seed).map_err(stage("head"))?;
            weights::write_head_weights(args.out_dir.join("head.dgsew"), &head)
                .map_err(stage("head"))?;
            let tokens = tokens_from_depth(&d_lo, 8).map_err(stage("head"))?;
            let (s_r, t) = dgse::scale_head(&tokens, &head).map_err(stage("head"))?;
            (s_r, t)
        }
    };
    let s_hi = dgse::guided_upsample(&s_lo, &routing).map_err(stage("guided_upsample"))?;
    let guided =
        depth::compose_metric(&d_rel, &s_hi, &Shift::Scalar(shift)).map_err(stage("compose"))?;

    // single-scalar baseline: median scaling, s* = median(gt)/median(d_rel)
    let s_median = gt.median().map_err(stage("baseline"))?
        / d_rel.median().map_err(stage("baseline"))?;
    let baseline_field = ScaleField::new(Grid::filled(gt.height(), gt.width(), s_median))
        .map_err(stage("baseline"))?;
    let baseline = depth::compose_metric(&d_rel, &baseline_field, &Shift::Scalar(0.0))
        .map_err(stage("baseline"))?;

    let guided_report = depth::evaluate(&guided, &gt, args.cap).map_err(stage("evaluate"))?;
    let baseline_report = depth::evaluate(&baseline, &gt, args.cap).map_err(stage("evaluate"))?;

    // artifacts
    write_depth(
        &args.out_dir.join("gt.pfm"),
        &gt,
        Some(&args.out_dir.join("gt_mask.pgm")),
    )?;
    pfm::write_pfm(args.out_dir.join("warp.pfm"), &warp)?;
    pfm::write_pfm(args.out_dir.join("d_rel.pfm"), &d_rel.values)?;
    pfm::write_pfm(args.out_dir.join("scale_lo.pfm"), &s_lo.values)?;
    pfm::write_pfm(args.out_dir.join("scale_hi.pfm"), &s_hi.values)?;
    pfm::write_pfm(args.out_dir.join("metric_guided.pfm"), &guided.values)?;
    pfm::write_pfm(args.out_dir.join("metric_baseline.pfm"), &baseline.values)?;
    write_report_csv(
        &args.out_dir.join("report.csv"),
        &[
            ("guided", guided_report),
            ("median_baseline", baseline_report),
        ],
        true,
    )?;

    let nonpositive = guided.count_nonpositive();
    if nonpositive > 0 {
        println!("diagnostic: {nonpositive} composed depths are non-positive");
    }
    println!(
        "guided:          delta1 = {:.3}, abs_rel = {:.4}",
        guided_report.delta1, guided_report.abs_rel
    );
    println!(
        "median baseline: delta1 = {:.3}, abs_rel = {:.4}",
        baseline_report.delta1, baseline_report.abs_rel
    );
    println!("wrote report.csv under {}", args.out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triple_parser() {
        assert_eq!(parse_triple("1,2.5,-3").unwrap(), [1.0, 2.5, -3.0]);
        assert!(parse_triple("1,2").is_err());
        assert!(parse_triple("a,b,c").is_err());
    }

    #[test]
    fn sig9_formatting_is_stable() {
        assert_eq!(fmt_sig9(1.0), "1.00000000e0");
        assert_eq!(fmt_sig9(0.3716629), "3.71662900e-1");
    }
}
