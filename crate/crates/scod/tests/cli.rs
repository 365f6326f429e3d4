use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scod::cli::parse_pgm;

fn scod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn ranges_prints_the_default_boundaries() {
    let o = scod(&["ranges"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text,
        "layer,stride,a_min,a_max,s_l,s_h\n1,8,32,64,0,3072\n2,16,64,128,3072,12288\n3,32,128,256,12288,49152\n"
    );
    let from_file = scod(&["--config", p(&configs().join("default.json")), "ranges"]);
    assert_eq!(stdout(&from_file), text);
}

#[test]
fn single_box_raster_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(
        dir.path(),
        "a.json",
        r#"{"num_classes": 3, "images": [{"id": 5, "width": 32, "height": 32,
            "objects": [{"bbox": [4, 4, 20, 20], "class": 3}]}]}"#,
    );
    let out = dir.path().join("labels");
    let o = scod(&["labels", "--annotations", p(&ann), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let layer1 = std::fs::read_to_string(out.join("image5_layer1.pgm")).unwrap();
    assert_eq!(layer1, "P2\n4 4\n3\n3 3 3 0\n3 3 3 0\n3 3 3 0\n0 0 0 0\n");
    for layer in [2, 3] {
        let text = std::fs::read_to_string(out.join(format!("image5_layer{layer}.pgm"))).unwrap();
        assert!(parse_pgm(&text).unwrap().3.iter().all(|&v| v == 0));
    }
}

#[test]
fn four_scale_objects_land_in_four_layers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("labels");
    let o = scod(&[
        "--config",
        p(&configs().join("four_layers.json")),
        "labels",
        "--annotations",
        p(&configs().join("four_scales_annotations.json")),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rasters: Vec<Vec<u32>> = (1..=4)
        .map(|l| {
            let text = std::fs::read_to_string(out.join(format!("image1_layer{l}.pgm"))).unwrap();
            let (_, _, maxval, values) = parse_pgm(&text).unwrap();
            assert_eq!(maxval, 20);
            values
        })
        .collect();
    // Object classes in increasing size: 15, 12, 7, 3.
    for (layer, values) in rasters.iter().enumerate() {
        let present: Vec<u32> = [15, 12, 7, 3].into_iter().filter(|c| values.contains(c)).collect();
        assert_eq!(present, vec![[15, 12, 7, 3][layer]], "layer {}", layer + 1);
    }
}

#[test]
fn empty_scene_gives_blank_rasters() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(
        dir.path(),
        "a.json",
        r#"{"num_classes": 2, "images": [{"id": 1, "width": 40, "height": 24}]}"#,
    );
    let out = dir.path().join("labels");
    assert_eq!(
        scod(&["labels", "--annotations", p(&ann), "--out", p(&out)])
            .status
            .code(),
        Some(0)
    );
    let names: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 3);
    for name in names {
        let (w, h, _, values) = parse_pgm(&std::fs::read_to_string(out.join(name)).unwrap()).unwrap();
        assert_eq!(values.len(), w * h);
        assert!(values.iter().all(|&v| v == 0));
    }
}

#[test]
fn bad_annotations_exit_2_naming_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let ann = write(
        dir.path(),
        "a.json",
        r#"{"num_classes": 3, "images": [{"id": 9, "width": 32, "height": 32,
            "objects": [{"bbox": [4, 4, 20, 20], "class": 0}]}]}"#,
    );
    let o = scod(&["labels", "--annotations", p(&ann), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("images[0] (id 9) objects[0]"), "{}", stderr(&o));

    let missing = scod(&[
        "labels",
        "--annotations",
        p(&dir.path().join("nope.json")),
        "--out",
        "x",
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "");
    let o = scod(&["fig4", "--pairs", "5", "--out", p(&blocker.join("sub").join("f.csv"))]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(scod(&[]).status.code(), Some(2));
    assert_eq!(
        scod(&["fig4", "--betas", "0.8,zero", "--out", "x.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        scod(&["fig4", "--betas", "1.2", "--out", "x.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(scod(&["fig4", "--pairs", "0", "--out", "x.csv"]).status.code(), Some(2));
    assert_eq!(scod(&["gradcheck", "--samples", "0"]).status.code(), Some(2));
    assert_eq!(
        scod(&["train-toy", "--steps", "0", "--out", "x.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        scod(&["train-toy", "--lr", "-1", "--out", "x.csv"]).status.code(),
        Some(2)
    );
    assert_eq!(
        scod(&["--config", "/nonexistent/cfg.json", "ranges"]).status.code(),
        Some(2)
    );
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"seed": 1, "beta": 0.8, "num_classes": 3,
            "layers": [{"stride": 8, "a_min": 64, "a_max": 32}], "match_threshold": 0.5}"#,
    );
    let o = scod(&["--config", p(&cfg), "ranges"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_and_catches_a_sign_flip() {
    let ok = scod(&["gradcheck", "--samples", "200"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).trim_end().ends_with("PASS"));

    let one = scod(&["gradcheck", "--samples", "1"]);
    assert_eq!(stdout(&one).lines().count(), 1);

    let flipped = scod(&["gradcheck", "--samples", "20", "--flip-sign"]);
    assert_eq!(flipped.status.code(), Some(1));
    let text = stdout(&flipped);
    assert!(text.lines().next().unwrap().ends_with("FAIL"));
    assert!(text.contains("failed sample 0 (aiou_loss)"), "{text}");
}

#[test]
fn fig4_csv_properties() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let o = scod(&["fig4", "--pairs", "300", "--betas", "1.0,0.8", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iou,loss_iou,loss_aiou,delta_rel,beta"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 600);
    let num = |s: &str| s.parse::<f64>().unwrap();
    for r in &rows {
        assert!(
            r.iter()
                .all(|v| v == "nan" || v.split('.').nth(1).is_some_and(|d| d.len() == 6)),
            "{r:?}"
        );
        assert!(num(&r[2]) >= num(&r[1]) - 1e-9);
        if r[4] == "1.000000" && r[3] != "nan" {
            assert_eq!(num(&r[3]), 0.0);
        }
    }
    let keys: Vec<(f64, f64)> = rows.iter().map(|r| (num(&r[4]), num(&r[0]))).collect();
    assert!(keys.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = scod(&["--seed", seed, "fig4", "--pairs", "50", "--out", p(&out)]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    assert_eq!(run("11", "a.csv"), run("11", "b.csv"));
    assert_ne!(run("11", "a.csv"), run("12", "c.csv"));
}

#[test]
fn beta_sweep_identity_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = scod(&[
        "beta-sweep",
        "--betas",
        "1.0",
        "--trials",
        "10",
        "--steps",
        "300",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "beta,trials,mean_final_iou,mean_steps_to_0_9,reached_0_9");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1.000000,10,"), "{}", lines[1]);
}

#[test]
fn train_toy_with_zero_lr_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let cfg = configs().join("toy.json");
    let o = scod(&[
        "--config",
        p(&cfg),
        "train-toy",
        "--lr",
        "0",
        "--steps",
        "4",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).map(|l| l.split_once(',').unwrap().1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn train_toy_reduces_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = scod(&[
        "--config",
        p(&configs().join("toy.json")),
        "train-toy",
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let col = |k: usize| -> Vec<f64> {
        text.lines()
            .skip(1)
            .map(|l| l.split(',').nth(k).unwrap().parse().unwrap())
            .collect()
    };
    let (total, iou) = (col(1), col(5));
    assert!(total.last().unwrap() < &(0.5 * total[0]));
    assert!(iou.last().unwrap() > &iou[0]);
}
