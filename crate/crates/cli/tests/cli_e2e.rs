//! End-to-end subcommand tests driving the installed binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use endoraw_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_endoraw"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SENSOR: &str = "e2e-sensor";

fn write_clean(dir: &Path, name: &str, samples: Vec<u16>, w: usize, h: usize) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let frame = RawFrame {
        width: w,
        height: h,
        samples,
        bit_depth: 10,
        bayer_pattern: BayerPattern::Rggb,
        black_level: 64,
        analog_gain: 8.0,
        exposure_time_ms: 4.0,
        sensor_id: SENSOR.to_string(),
        frame_index: 0,
    };
    let path = dir.join(name);
    save_frame(&frame, &path).unwrap();
    path
}

fn scene_samples(w: usize, h: usize, seed: u64) -> Vec<u16> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(10.0..18.0),
                rng.random_range(0.4..1.0),
            )
        })
        .collect();
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let mut v = 0.15;
            for &(bx, by, s, a) in &blobs {
                let d2 = (x - bx).powi(2) + (y - by).powi(2);
                v += a * (-d2 / (2.0 * s * s)).exp();
            }
            (164.0 + 700.0 * (v / 1.6).min(1.0)).round() as u16
        })
        .collect()
}

fn smooth_map(w: usize, h: usize) -> FpnMap {
    let plane = |base: f64, amp: f64, px: f64, py: f64, phase: f64| -> Vec<f32> {
        (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (base
                    + amp
                        * (2.0 * std::f64::consts::PI * x / px + phase).cos()
                        * (2.0 * std::f64::consts::PI * y / py).cos()) as f32
            })
            .collect()
    };
    FpnMap {
        width: w,
        height: h,
        k: plane(0.25, 0.25, 37.0, 41.0, 0.0),
        b: plane(8.0, 6.0, 29.0, 31.0, 1.0),
        fit_residual_rms: 0.0,
        calibration_points: vec![(8.0, 4.0), (8.0, 8.0)],
        sensor_id: SENSOR.to_string(),
    }
}

#[test]
fn every_subcommand_documents_its_flags() {
    let expectations: &[(&str, &[&str])] = &[
        ("simulate", &["--input", "--output", "--params", "--seed", "--count", "--gain", "--exposure"]),
        ("calibrate-fpn", &["--dark-set", "--output", "--theta"]),
        ("calibrate-pg", &["--flat-set", "--fpn", "--output", "--theta", "--merge"]),
        ("estimate-pbn", &["--input", "--theta", "--period", "--output"]),
        ("denoise", &["--input", "--output", "--fpn", "--pg", "--denoise-config", "--stages", "--preview"]),
        ("build-dataset", &["--dark", "--lit", "--output", "--samples", "--low-max", "--medium-max"]),
        ("make-training-pairs", &["--clean", "--pg", "--gain", "--count", "--output", "--seed", "--crop", "--no-interpolate", "--contrast-min", "--contrast-max"]),
        ("evaluate", &["--pairs", "--fpn", "--pg", "--denoise-config", "--output"]),
        ("quantize-check", &["--pairs", "--input", "--fpn", "--pg", "--qplan", "--emit-qplan", "--output", "--profile-frames"]),
    ];
    for (sub, flags) in expectations {
        let out = run_ok(&[sub, "--help"]);
        let help = String::from_utf8_lossy(&out.stdout);
        for flag in *flags {
            assert!(help.contains(flag), "{sub} --help missing {flag}");
        }
        // The global config flag is available on every subcommand.
        assert!(help.contains("--config"), "{sub} --help missing --config");
    }
}

#[test]
fn denoise_with_zero_calibrations_and_identity_smoother_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let clean_dir = dir.path().join("clean");
    write_clean(&clean_dir, "flat.pgm", vec![300; 64 * 32], 64, 32);

    // Quiet noise model: simulate output equals the clean frame.
    let params_path = dir.path().join("quiet.json");
    std::fs::write(
        &params_path,
        serde_json::to_string(&NoiseModelParams {
            shot_gain_a: 0.0,
            read_sigma: 0.0,
            quant_step: 0.0,
            fpn_path: None,
            pbn: None,
            seed: 1,
        })
        .unwrap(),
    )
    .unwrap();
    let noisy_dir = dir.path().join("noisy");
    run_ok(&[
        "simulate",
        "--input",
        clean_dir.to_str().unwrap(),
        "--output",
        noisy_dir.to_str().unwrap(),
        "--params",
        params_path.to_str().unwrap(),
    ]);

    let config_path = dir.path().join("denoise.json");
    let config = DenoiseConfig {
        smoother: Smoother::Gaussian { sigma: 0.0 },
        ..DenoiseConfig::default()
    };
    std::fs::write(&config_path, serde_json::to_string(&config).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    run_ok(&[
        "denoise",
        "--input",
        noisy_dir.to_str().unwrap(),
        "--output",
        out_dir.to_str().unwrap(),
        "--denoise-config",
        config_path.to_str().unwrap(),
        "--stages",
        "--preview",
    ]);

    let result = load_frame(&out_dir.join("flat_n000_denoised.pgm")).unwrap();
    assert!(result.samples.iter().all(|&v| v == 300));
    assert!(out_dir.join("flat_n000_pbn.json").exists());
    assert!(out_dir.join("flat_n000_fpn_removed.pgm").exists());
    assert!(out_dir.join("flat_n000_denoised_preview.ppm").exists());
}

#[test]
fn calibrate_fpn_with_one_set_fails_with_rank_message() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("darks");
    for i in 0..2 {
        write_clean(&set, &format!("d{i}.pgm"), vec![64; 64 * 32], 64, 32);
    }
    let out = bin()
        .args([
            "calibrate-fpn",
            "--dark-set",
            set.to_str().unwrap(),
            "--output",
            dir.path().join("map.fpn").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("error:") && stderr.contains("rank"),
        "stderr was: {stderr}"
    );
}

#[test]
fn estimate_pbn_prints_parseable_json() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let pattern = pbn_pattern(64, &PbnParams::new(8.0, 4, 0).unwrap());
    let samples: Vec<u16> = (0..64 * 32)
        .map(|i| (300.0 + pattern[i % 64]) as u16)
        .collect();
    write_clean(&frames, "banded.pgm", samples, 64, 32);
    let out = run_ok(&[
        "estimate-pbn",
        "--input",
        frames.join("banded.pgm").to_str().unwrap(),
        "--theta",
        "4",
    ]);
    let estimate: PbnEstimate = serde_json::from_slice(&out.stdout).expect("json on stdout");
    assert_eq!(estimate.kappa, 8.0);
    assert_eq!(estimate.phase, 0);
}

/// Full workflow: simulate calibration captures, calibrate both noise
/// sources, build an evaluation dataset, and check the stage ordering in
/// the evaluation report plus fixed-point fidelity.
#[test]
fn calibrate_evaluate_workflow_reports_monotonic_stages() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (64, 64);

    // Ground-truth fixed-pattern map, referenced by the noise model.
    let map_path = dir.path().join("truth.fpn");
    save_fpn_map(&smooth_map(w, h), &map_path).unwrap();
    let noise = NoiseModelParams {
        shot_gain_a: 1.0,
        read_sigma: 9.0,
        quant_step: 1.0,
        fpn_path: Some(map_path.clone()),
        pbn: Some(PbnParams::new(36.0, 4, 1).unwrap()),
        seed: 7,
    };
    let params_path = dir.path().join("noise.json");
    std::fs::write(&params_path, serde_json::to_string(&noise).unwrap()).unwrap();

    let simulate = |clean_dir: &Path, out: &Path, count: usize, exposure: Option<f64>| {
        let count = count.to_string();
        let mut args = vec![
            "simulate",
            "--input",
            clean_dir.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
            "--params",
            params_path.to_str().unwrap(),
            "--count",
            &count,
        ];
        let exp_s;
        if let Some(exp) = exposure {
            exp_s = exp.to_string();
            args.push("--exposure");
            args.push(&exp_s);
        }
        run_ok(&args);
    };

    // Dark pedestal captures at two exposures for the slope/offset fit.
    let dark_clean = dir.path().join("clean_dark");
    write_clean(&dark_clean, "pedestal.pgm", vec![64; w * h], w, h);
    let dark_a = dir.path().join("dark_a");
    let dark_b = dir.path().join("dark_b");
    simulate(&dark_clean, &dark_a, 24, None); // 4 ms
    simulate(&dark_clean, &dark_b, 24, Some(8.0));

    let fpn_path = dir.path().join("calibrated.fpn");
    run_ok(&[
        "calibrate-fpn",
        "--dark-set",
        dark_a.to_str().unwrap(),
        "--dark-set",
        dark_b.to_str().unwrap(),
        "--output",
        fpn_path.to_str().unwrap(),
        "--theta",
        "40",
    ]);

    // Flat fields at two illumination levels for the variance line.
    let flat_lo_clean = dir.path().join("clean_flat_lo");
    write_clean(&flat_lo_clean, "flat.pgm", vec![264; w * h], w, h);
    let flat_hi_clean = dir.path().join("clean_flat_hi");
    write_clean(&flat_hi_clean, "flat.pgm", vec![564; w * h], w, h);
    let flat_lo = dir.path().join("flat_lo");
    let flat_hi = dir.path().join("flat_hi");
    simulate(&flat_lo_clean, &flat_lo, 24, None);
    simulate(&flat_hi_clean, &flat_hi, 24, None);

    let pg_path = dir.path().join("pg.json");
    run_ok(&[
        "calibrate-pg",
        "--flat-set",
        flat_lo.to_str().unwrap(),
        "--flat-set",
        flat_hi.to_str().unwrap(),
        "--fpn",
        fpn_path.to_str().unwrap(),
        "--output",
        pg_path.to_str().unwrap(),
        "--theta",
        "250",
    ]);
    let pg: PgParams = serde_json::from_str(&std::fs::read_to_string(&pg_path).unwrap()).unwrap();
    assert_eq!(pg.entries.len(), 1);
    assert!(pg.entries[0].a > 0.5 && pg.entries[0].a < 1.6, "a = {}", pg.entries[0].a);

    // Lit captures of two scenes, paired with fresh darks.
    let lit_dirs: Vec<PathBuf> = (0..2)
        .map(|i| {
            let clean_dir = dir.path().join(format!("clean_scene{i}"));
            write_clean(
                &clean_dir,
                "scene.pgm",
                scene_samples(w, h, 900 + i as u64),
                w,
                h,
            );
            let lit = dir.path().join(format!("lit{i}"));
            simulate(&clean_dir, &lit, 24, None);
            lit
        })
        .collect();

    let pairs_dir = dir.path().join("pairs");
    run_ok(&[
        "build-dataset",
        "--dark",
        dark_a.to_str().unwrap(),
        "--lit",
        lit_dirs[0].to_str().unwrap(),
        "--dark",
        dark_a.to_str().unwrap(),
        "--lit",
        lit_dirs[1].to_str().unwrap(),
        "--output",
        pairs_dir.to_str().unwrap(),
        "--samples",
        "2",
    ]);

    let report_path = dir.path().join("report.json");
    run_ok(&[
        "evaluate",
        "--pairs",
        pairs_dir.to_str().unwrap(),
        "--fpn",
        fpn_path.to_str().unwrap(),
        "--pg",
        pg_path.to_str().unwrap(),
        "--output",
        report_path.to_str().unwrap(),
    ]);
    let report: AblationReport =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.pairs, 4);
    let psnr_of = |stage: &str| report.stage_psnr("All", stage).unwrap();
    let chain = [
        psnr_of("noisy"),
        psnr_of("pbn_removed"),
        psnr_of("fpn_removed"),
        psnr_of("denoised"),
    ];
    for i in 1..4 {
        assert!(
            chain[i] > chain[i - 1],
            "stage means not increasing: {chain:?}"
        );
    }

    // Fixed-point mode holds 50 dB against the float pipeline here too.
    let qreport_path = dir.path().join("quantize.json");
    run_ok(&[
        "quantize-check",
        "--pairs",
        pairs_dir.to_str().unwrap(),
        "--fpn",
        fpn_path.to_str().unwrap(),
        "--pg",
        pg_path.to_str().unwrap(),
        "--output",
        qreport_path.to_str().unwrap(),
        "--emit-qplan",
        dir.path().join("qplan.json").to_str().unwrap(),
    ]);
    let qreport: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&qreport_path).unwrap()).unwrap();
    let min_psnr = qreport["min_psnr_vs_float"].as_f64().unwrap();
    assert!(min_psnr >= 50.0, "fixed-vs-float min {min_psnr}");
}

#[test]
fn make_training_pairs_emits_dataset_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let clean_dir = dir.path().join("clean");
    write_clean(&clean_dir, "scene.pgm", scene_samples(64, 64, 42), 64, 64);

    let mut pg = PgParams::new("test");
    pg.insert(PgEntry {
        gain: 8.0,
        a: 1.2,
        b: 40.0,
    });
    let pg_path = dir.path().join("pg.json");
    std::fs::write(&pg_path, serde_json::to_string(&pg).unwrap()).unwrap();

    let out = dir.path().join("pairs");
    run_ok(&[
        "make-training-pairs",
        "--clean",
        clean_dir.to_str().unwrap(),
        "--pg",
        pg_path.to_str().unwrap(),
        "--gain",
        "8",
        "--count",
        "3",
        "--seed",
        "5",
        "--output",
        out.to_str().unwrap(),
        "--crop",
        "32",
        "32",
    ]);
    let manifest: TrainingManifest =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.pairs.len(), 3);
    assert_eq!(manifest.seed, 5);
    for pair in &manifest.pairs {
        let noisy = load_frame(&out.join(&pair.noisy_path)).unwrap();
        assert_eq!((noisy.width, noisy.height), (32, 32));
        assert_eq!(noisy.analog_gain, 8.0);
    }
}
