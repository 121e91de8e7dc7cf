//! End-to-end checks of the command-line surface.

use std::path::Path;
use std::process::Command;

use depthkit::geometry::CameraModel;
use depthkit::grid::Grid;
use depthkit::io::pfm;

const BIN: &str = env!("CARGO_BIN_EXE_depthkit");

fn run(args: &[&str]) -> String {
    let output = Command::new(BIN)
        .args(args)
        .env_remove("DEPTHKIT_CACHE_DIR")
        .env_remove("DEPTHKIT_SEED")
        .env_remove("DEPTHKIT_STRIDE")
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

#[test]
fn identity_erp_conversion_reproduces_input_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let cam = CameraModel::Equirect {
        width: 64,
        height: 32,
    };
    let cam_path = root.join("erp.json");
    std::fs::write(&cam_path, cam.to_json()).unwrap();

    // strictly positive input so the default validity mask is all-true
    let input = Grid::from_fn(32, 64, |r, c| 1.0 + (r * 64 + c) as f64 * 0.01);
    let input_path = root.join("in.pfm");
    pfm::write_pfm(&input_path, &input).unwrap();

    let out_path = root.join("out.pfm");
    run(&[
        "erp-convert",
        "--input",
        input_path.to_str().unwrap(),
        "--camera",
        cam_path.to_str().unwrap(),
        "--erp-height",
        "32",
        "--erp-width",
        "64",
        "--mode",
        "nearest",
        "--out",
        out_path.to_str().unwrap(),
        "--cache-dir",
        root.join("cache").to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&input_path).unwrap(),
        std::fs::read(&out_path).unwrap(),
        "identity conversion must reproduce the input bytes"
    );
}

fn csv_row(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect()
}

#[test]
fn fisheye_conversion_matches_erp_render() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let cam = CameraModel::KannalaBrandt {
        fx: 81.0,
        fy: 81.0,
        cx: 127.5,
        cy: 127.5,
        k: [0.02, -0.003, 0.0, 0.0],
        width: 256,
        height: 256,
    };
    let cam_path = root.join("kb.json");
    std::fs::write(&cam_path, cam.to_json()).unwrap();

    let scene_flags = [
        "--scene",
        "box",
        "--box-half-extents",
        "2.5,2.0,3.0",
        "--camera-pos",
        "0.3,-0.2,0.4",
    ];

    // fisheye render, then its ERP resampling
    let fisheye_dir = root.join("fisheye");
    let mut args = vec!["synth"];
    args.extend_from_slice(&scene_flags);
    args.extend_from_slice(&[
        "--camera",
        cam_path.to_str().unwrap(),
        "--out-dir",
        fisheye_dir.to_str().unwrap(),
    ]);
    run(&args);

    let erp_path = root.join("erp.pfm");
    run(&[
        "erp-convert",
        "--input",
        fisheye_dir.join("gt.pfm").to_str().unwrap(),
        "--input-mask",
        fisheye_dir.join("gt_mask.pgm").to_str().unwrap(),
        "--camera",
        cam_path.to_str().unwrap(),
        "--erp-height",
        "128",
        "--erp-width",
        "256",
        "--out",
        erp_path.to_str().unwrap(),
        "--cache-dir",
        root.join("cache").to_str().unwrap(),
    ]);

    // direct ERP render of the same scene
    let direct_dir = root.join("direct");
    let mut args = vec!["synth"];
    args.extend_from_slice(&scene_flags);
    args.extend_from_slice(&[
        "--erp-height",
        "128",
        "--erp-width",
        "256",
        "--out-dir",
        direct_dir.to_str().unwrap(),
    ]);
    run(&args);

    let report = root.join("report.csv");
    run(&[
        "eval",
        "--pred",
        erp_path.to_str().unwrap(),
        "--gt",
        direct_dir.join("gt.pfm").to_str().unwrap(),
        "--mask",
        root.join("erp.pgm").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    let row = csv_row(&report);
    let (delta1, abs_rel) = (row[0], row[3]);
    assert!(abs_rel < 0.01, "A.Rel {abs_rel:.5} reaches 0.01");
    assert!(delta1 > 0.999, "delta1 {delta1:.5} not above 0.999");
}

fn parse_ms(stdout: &str) -> f64 {
    let line = stdout
        .lines()
        .find(|l| l.contains("lookup table"))
        .expect("cache status line");
    let tail = line.split('(').nth(1).or_else(|| line.split("in ").nth(1)).unwrap();
    tail.split_whitespace()
        .next()
        .unwrap()
        .trim_end_matches(')')
        .parse()
        .unwrap()
}

#[test]
fn large_table_cache_hit_is_faster_than_build() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let cam = CameraModel::KannalaBrandt {
        fx: 162.0,
        fy: 162.0,
        cx: 255.5,
        cy: 255.5,
        k: [0.02, -0.003, 0.0, 0.0],
        width: 512,
        height: 512,
    };
    let cam_path = root.join("kb.json");
    std::fs::write(&cam_path, cam.to_json()).unwrap();

    let input = Grid::filled(512, 512, 2.0);
    let input_path = root.join("in.pfm");
    pfm::write_pfm(&input_path, &input).unwrap();

    let convert = |out: &str| {
        run(&[
            "erp-convert",
            "--input",
            input_path.to_str().unwrap(),
            "--camera",
            cam_path.to_str().unwrap(),
            "--erp-height",
            "1024",
            "--erp-width",
            "2048",
            "--out",
            root.join(out).to_str().unwrap(),
            "--cache-dir",
            root.join("cache").to_str().unwrap(),
        ])
    };
    let first = convert("a.pfm");
    let second = convert("b.pfm");
    assert!(first.contains("cache miss"), "first run: {first}");
    assert!(second.contains("cache hit"), "second run: {second}");
    let (build_ms, hit_ms) = (parse_ms(&first), parse_ms(&second));
    assert!(
        hit_ms < build_ms,
        "cache hit ({hit_ms} ms) not faster than the build ({build_ms} ms)"
    );
}

#[test]
fn rope_dump_defaults_to_the_unweighted_field() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let plain = root.join("plain.csv");
    let delta_one = root.join("delta1.csv");
    run(&[
        "rope-dump",
        "--height",
        "6",
        "--width",
        "12",
        "--channels",
        "8",
        "--out",
        plain.to_str().unwrap(),
    ]);
    run(&[
        "rope-dump",
        "--height",
        "6",
        "--width",
        "12",
        "--channels",
        "8",
        "--delta",
        "1.0",
        "--out",
        delta_one.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&plain).unwrap(),
        std::fs::read(&delta_one).unwrap(),
        "delta = 1 must reproduce the default dump byte for byte"
    );

    // spot-check the CSV layout
    let text = std::fs::read_to_string(&plain).unwrap();
    assert_eq!(text.lines().next().unwrap(), "row,col,slot,phase,weight");
    assert_eq!(text.lines().count(), 1 + 6 * 12 * 4);
}

#[test]
fn grad_check_reports_small_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let depth = Grid::from_fn(12, 12, |r, c| 1.0 + ((r * 12 + c) as f64 * 0.618).sin().abs());
    let depth_path = root.join("depth.pfm");
    pfm::write_pfm(&depth_path, &depth).unwrap();
    let scales = Grid::from_fn(3, 3, |r, c| 1.0 + (r + c) as f64 * 0.25);
    let scales_path = root.join("scales.pfm");
    pfm::write_pfm(&scales_path, &scales).unwrap();

    let stdout = run(&[
        "dgse-upsample",
        "--depth",
        depth_path.to_str().unwrap(),
        "--scales",
        scales_path.to_str().unwrap(),
        "--stride",
        "4",
        "--out",
        root.join("up.pfm").to_str().unwrap(),
        "--grad-check",
    ]);
    let parse = |needle: &str| -> f64 {
        stdout
            .lines()
            .find(|l| l.contains(needle))
            .unwrap_or_else(|| panic!("missing '{needle}' in: {stdout}"))
            .rsplit(' ')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(parse("(scales)") < 1e-5);
    assert!(parse("(depth)") < 1e-4);
}

#[test]
fn unperturbed_demo_prints_unit_delta1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let stdout = run(&[
        "demo",
        "--out-dir",
        out.to_str().unwrap(),
        "--erp-height",
        "64",
        "--erp-width",
        "128",
    ]);
    assert!(
        stdout.contains("guided:          delta1 = 1.000"),
        "unexpected demo output: {stdout}"
    );
    assert!(
        stdout.contains("median baseline: delta1 = 1.000"),
        "unexpected demo output: {stdout}"
    );
}

#[test]
fn bad_inputs_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // missing input file
    let output = Command::new(BIN)
        .args([
            "erp-convert",
            "--input",
            root.join("nope.pfm").to_str().unwrap(),
            "--camera",
            root.join("nope.json").to_str().unwrap(),
            "--out",
            root.join("out.pfm").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(!output.stderr.is_empty());

    // malformed camera JSON
    let cam_path = root.join("bad.json");
    std::fs::write(&cam_path, r#"{"kind":"kb","width":8}"#).unwrap();
    let input = Grid::filled(8, 8, 1.0);
    let input_path = root.join("in.pfm");
    pfm::write_pfm(&input_path, &input).unwrap();
    let output = Command::new(BIN)
        .args([
            "erp-convert",
            "--input",
            input_path.to_str().unwrap(),
            "--camera",
            cam_path.to_str().unwrap(),
            "--out",
            root.join("out.pfm").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn fov_limited_conversion_masks_the_back_hemisphere() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cam = CameraModel::Equirect {
        width: 64,
        height: 32,
    };
    let cam_path = root.join("erp.json");
    std::fs::write(&cam_path, cam.to_json()).unwrap();
    let input_path = root.join("in.pfm");
    pfm::write_pfm(&input_path, &Grid::filled(32, 64, 3.0)).unwrap();

    let out = root.join("out.pfm");
    let stdout = run(&[
        "erp-convert",
        "--input",
        input_path.to_str().unwrap(),
        "--camera",
        cam_path.to_str().unwrap(),
        "--erp-height",
        "32",
        "--erp-width",
        "64",
        "--fov-theta",
        "1.5707963",
        "--fov-phi",
        "1.5707964",
        "--out",
        out.to_str().unwrap(),
        "--cache-dir",
        root.join("cache").to_str().unwrap(),
    ]);
    // half the longitudes fall outside the limit
    assert!(stdout.contains("1024 of 2048 pixels valid"), "{stdout}");
}

#[test]
fn demo_with_head_scales_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    run(&[
        "demo",
        "--out-dir",
        out.to_str().unwrap(),
        "--erp-height",
        "64",
        "--erp-width",
        "128",
        "--scale-source",
        "head",
        "--amplitude",
        "0.1",
    ]);
    assert!(out.join("report.csv").is_file());
    assert!(out.join("head.dgsew").is_file());
    let text = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(text.lines().count() == 3, "expected header + two rows");
}
