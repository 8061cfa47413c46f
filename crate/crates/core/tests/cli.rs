use std::path::{Path, PathBuf};
use std::process::Command;

use cpmf::cli::{read_score_records, run, EvalReport, EXIT_CORRUPT, EXIT_INPUT, EXIT_OK};
use cpmf::config::PipelineConfig;
use cpmf::detect::load_bank;
use cpmf::eval::{auroc, load_mask_png, p_pro, scores_to_grid, GroundTruth, Mask};
use cpmf::heatmap::colorize;
use cpmf::pcd::ply::read_ply;
use cpmf::pcd::tiff::save_organized_tiff;
use cpmf::pipeline::Extractor;
use cpmf::synthetic::{plate_dataset, plate_scan, write_dataset, PlateSpec};

fn cpmf(args: &[&dyn AsRef<std::ffi::OsStr>]) -> i32 {
    let argv = std::iter::once("cpmf".into()).chain(args.iter().map(|a| a.as_ref().to_os_string()));
    run(argv.collect::<Vec<std::ffi::OsString>>(), quiet())
}

fn quiet() -> Vec<(String, String)> {
    vec![("CPMF_LOG".into(), "off".into())]
}

fn dataset(root: &Path) -> PathBuf {
    write_dataset(&plate_dataset(&PlateSpec::default(), 0), root, "plate").unwrap()
}

#[test]
fn missing_train_dir_exits_2_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cpmf"))
        .args(["fit", "/nonexistent/plate"])
        .arg(dir.path().join("bank.bin"))
        .env("CPMF_LOG", "off")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error[input]: "), "{stderr}");
    assert!(stderr.contains("train_dir not found"), "{stderr}");
}

#[test]
fn bank_rows_are_the_sum_of_scan_points() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train");
    std::fs::create_dir_all(&train).unwrap();
    let spec = PlateSpec::default();
    let scans: Vec<_> = (0..2).map(|s| plate_scan(&spec, None, 40 + s)).collect();
    for (i, s) in scans.iter().enumerate() {
        save_organized_tiff(&s.cloud, train.join(format!("{i}.tiff"))).unwrap();
    }
    let bank = dir.path().join("bank.bin");
    assert_eq!(cpmf(&[&"--views", &"2", &"fit", &train, &bank]), EXIT_OK);

    let cfg = PipelineConfig {
        n_views: 2,
        ..PipelineConfig::default()
    };
    let extractor = Extractor::new(&cfg).unwrap();
    let rows: usize = scans
        .iter()
        .map(|s| extractor.extract(&s.cloud).unwrap().features.rows())
        .sum();
    let loaded = load_bank(&bank, Some(481)).unwrap();
    assert_eq!(loaded.len(), rows);
}

#[test]
fn training_scans_score_zero_against_their_bank() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let bank = dir.path().join("bank.bin");
    let out = dir.path().join("scores");
    assert_eq!(cpmf(&[&"--views", &"3", &"fit", &class, &bank]), EXIT_OK);
    assert_eq!(cpmf(&[&"--views", &"3", &"score", &bank, &class.join("train"), &out]), EXIT_OK);
    let records = read_score_records(&out).unwrap();
    assert_eq!(records.len(), 5);
    for r in &records {
        assert!(r.image_score <= 1e-12, "{}: {}", r.stem, r.image_score);
    }
}

#[test]
fn corrupt_bank_magic_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let bank = dir.path().join("bank.bin");
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"fit", &class, &bank]), EXIT_OK);
    let mut bytes = std::fs::read(&bank).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&bank, bytes).unwrap();
    let code = cpmf(&[&"--feature-mode", &"3d", &"score", &bank, &class, &dir.path().join("s")]);
    assert_eq!(code, EXIT_CORRUPT);
}

#[test]
fn bank_dim_mismatch_names_both_dims() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let bank = dir.path().join("bank.bin");
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"fit", &class, &bank]), EXIT_OK);
    let cfg = PipelineConfig::default();
    let err = cpmf::cli::cmd_score(&cfg, &bank, &class, &dir.path().join("s")).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("33") && msg.contains("481"), "{msg}");
    assert_eq!(cpmf::cli::exit_code(&err), EXIT_INPUT);
}

#[test]
fn fit_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    for bank in [&a, &b] {
        assert_eq!(cpmf(&[&"--views", &"2", &"--jobs", &"2", &"fit", &class, bank]), EXIT_OK);
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn empty_scores_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("scores");
    std::fs::create_dir_all(&scores).unwrap();
    assert_eq!(cpmf(&[&"eval", &scores, &dir.path()]), EXIT_INPUT);
    assert_eq!(cpmf(&[&"eval", &dir.path().join("missing"), &dir.path()]), EXIT_INPUT);
}

#[test]
fn eval_matches_direct_library_calls() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let bank = dir.path().join("bank.bin");
    let out = dir.path().join("scores");
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"fit", &class, &bank]), EXIT_OK);
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"score", &bank, &class, &out]), EXIT_OK);
    assert_eq!(cpmf(&[&"eval", &out, &class]), EXIT_OK);

    let text = std::fs::read_to_string(out.join("metrics.json")).unwrap();
    let report: EvalReport = serde_json::from_str(&text).unwrap();
    assert!(report.skipped.is_empty());
    assert_eq!(report.classes.len(), 1);

    let records = read_score_records(&out).unwrap();
    assert_eq!(records.len(), 5);
    let mut image_scores = Vec::new();
    let mut grids = Vec::new();
    let mut gts = Vec::new();
    for r in &records {
        let mask = if r.defect == "good" {
            Mask::empty(r.height, r.width)
        } else {
            load_mask_png(class.join("test").join(&r.defect).join("gt").join(format!("{}.png", r.stem))).unwrap()
        };
        image_scores.push(r.image_score);
        grids.push(scores_to_grid(&r.result(), r.height, r.width).unwrap().data);
        gts.push(GroundTruth::from_grid_mask(&mask));
    }
    let labels: Vec<bool> = gts.iter().map(GroundTruth::is_anomalous).collect();
    let i_roc = auroc(&image_scores, &labels).unwrap();
    let pro = p_pro(&grids, &gts, 0.3).unwrap();
    let class_metrics = &report.classes[0];
    assert_eq!(class_metrics.i_roc, Some(i_roc));
    assert_eq!(class_metrics.p_pro, Some(pro));
    assert_eq!(report.mean_i_roc, Some(i_roc));
    assert_eq!(i_roc, 1.0);
}

#[test]
fn missing_masks_are_listed_and_all_missing_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let bank = dir.path().join("bank.bin");
    let out = dir.path().join("scores");
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"fit", &class, &bank]), EXIT_OK);
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"score", &bank, &class, &out]), EXIT_OK);
    std::fs::remove_file(class.join("test/bump/gt/000.png")).unwrap();
    let report = cpmf::cli::cmd_eval(&out, &class, 0.3).unwrap();
    assert_eq!(report.skipped, vec!["plate/bump/000".to_string()]);
    assert_eq!(report.classes[0].clouds, 4);

    // Only defect scans left, none with a mask.
    std::fs::remove_dir_all(out.join("good")).unwrap();
    std::fs::remove_dir_all(class.join("test/dent/gt")).unwrap();
    assert_eq!(cpmf(&[&"eval", &out, &class]), EXIT_INPUT);
}

#[test]
fn heatmap_colors_follow_raw_scores_and_dents_run_hot() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let bank = dir.path().join("bank.bin");
    let out = dir.path().join("scores");
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"fit", &class, &bank]), EXIT_OK);
    assert_eq!(cpmf(&[&"--feature-mode", &"3d", &"score", &bank, &class, &out]), EXIT_OK);

    for r in read_score_records(&out).unwrap() {
        let ply = read_ply(out.join(&r.defect).join(format!("{}.ply", r.stem))).unwrap();
        let colors = ply.colors.unwrap();
        assert_eq!(colors, colorize(&r.point_scores, r.score_floor, r.score_ceiling));
        if r.defect == "good" {
            continue;
        }
        let mask = load_mask_png(class.join("test").join(&r.defect).join("gt").join(format!("{}.png", r.stem))).unwrap();
        let in_mask: Vec<bool> = r.origin_pixels.iter().map(|&[row, col]| mask.get(row as usize, col as usize)).collect();
        let mut hot: Vec<usize> = (0..colors.len()).collect();
        hot.sort_by(|&a, &b| r.point_scores[b].total_cmp(&r.point_scores[a]));
        // The hottest vertices of a defect scan all sit on the defect.
        let n_mask = in_mask.iter().filter(|&&m| m).count();
        assert!(n_mask > 0);
        for &v in &hot[..n_mask / 2] {
            assert!(in_mask[v], "{}/{}: vertex {v} is hot but outside the mask", r.defect, r.stem);
        }
        let t_mean = |m: bool| {
            let s: Vec<f64> = (0..colors.len())
                .filter(|&v| in_mask[v] == m)
                .map(|v| (r.point_scores[v] - r.score_floor) / (r.score_ceiling - r.score_floor))
                .collect();
            s.iter().sum::<f64>() / s.len() as f64
        };
        assert!(t_mean(true) > 4.0 * t_mean(false), "{}/{}", r.defect, r.stem);
    }
}

#[test]
fn config_file_env_and_flags_layer_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let class = dataset(dir.path());
    let cfg_path = dir.path().join("cpmf.toml");
    std::fs::write(&cfg_path, "n_views = 4\nfeature_mode = \"3d\"\n").unwrap();
    let views = |env: Vec<(String, String)>, extra: &[&str]| {
        let out = dir.path().join(format!("views{}", extra.len() + env.len()));
        let mut argv: Vec<std::ffi::OsString> = vec!["cpmf".into(), "--config".into(), cfg_path.clone().into()];
        argv.extend(extra.iter().map(Into::into));
        argv.extend(["render-debug".into(), class.join("train/good/xyz/000.tiff").into(), out.clone().into()]);
        assert_eq!(run(argv, env), EXIT_OK);
        std::fs::read_dir(out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")).count()
    };
    let six = || [quiet(), vec![("CPMF_N_VIEWS".into(), "6".into())]].concat();
    assert_eq!(views(quiet(), &[]), 4);
    assert_eq!(views(six(), &[]), 6);
    assert_eq!(views(six(), &["--views", "2"]), 2);

    let bad_env = run(["cpmf", "render-debug", "x.tiff", "out"], [quiet(), vec![("CPMF_NOT_A_KEY".into(), "1".into())]].concat());
    assert_eq!(bad_env, EXIT_INPUT);
    std::fs::write(&cfg_path, "n_views = 4\nunknown = 1\n").unwrap();
    assert_eq!(cpmf(&[&"--config", &cfg_path, &"render-debug", &"x.tiff", &"out"]), EXIT_INPUT);
    assert_eq!(cpmf(&[&"--views", &"0", &"render-debug", &"x.tiff", &"out"]), EXIT_INPUT);
    let out = Command::new(env!("CARGO_BIN_EXE_cpmf")).arg("no-such-command").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
}
