use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cooc::data::idx::{write_idx_images, write_idx_labels};
use cooc::data::maps::MapDataset;
use cooc::data::{read_map_dataset, write_map_dataset, DatasetSource};
use cooc::{IndexDomain, SignificanceMap};

const SPEC: &str = r#"{"domain_size": 64, "group_size": 8, "activation": [{"p_on": 0.9, "p_off": 0.05}], "samples": 200, "seed": 3}"#;

fn cooc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cooc"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn with_spec() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.json"), SPEC).unwrap();
    dir
}

#[test]
fn fit_is_byte_identical_across_runs() {
    let dir = with_spec();
    for out in ["a/m.json", "b/m.json"] {
        let o = cooc(dir.path(), &["fit", "--synthetic", "spec.json", "--size", "8", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let p = dir.path();
    assert_eq!(fs::read(p.join("a/m.json")).unwrap(), fs::read(p.join("b/m.json")).unwrap());
    assert_eq!(fs::read(p.join("a/m.trace.csv")).unwrap(), fs::read(p.join("b/m.trace.csv")).unwrap());
    let model = cooc::data::load_model(p.join("a/m.json")).unwrap();
    assert_eq!(model.num_groups(), 8);
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("a/run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "fit");
    assert_eq!(run["size"], 8);
    assert_eq!(run["bins"], 8);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = with_spec();
    let base = ["fit", "--synthetic", "spec.json", "--size", "8"];
    assert!(cooc(dir.path(), &[&base[..], &["--out", "one/m.json", "--threads", "1"]].concat()).status.success());
    assert!(cooc(dir.path(), &[&base[..], &["--out", "two/m.json", "--threads", "3"]].concat()).status.success());
    let p = dir.path();
    assert_eq!(fs::read(p.join("one/m.json")).unwrap(), fs::read(p.join("two/m.json")).unwrap());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = with_spec();
    let zero = cooc(dir.path(), &["fit", "--synthetic", "spec.json", "--size", "0", "--out", "m.json"]);
    assert_eq!(zero.status.code(), Some(1));
    assert!(!dir.path().join("m.json").exists());
    assert_eq!(cooc(dir.path(), &["fit", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(cooc(dir.path(), &["fit", "--synthetic", "spec.json", "--out", "m.json"]).status.code(), Some(1));
    assert_eq!(cooc(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(cooc(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = with_spec();
    let missing = cooc(dir.path(), &["sweep", "--synthetic", "nope.json", "--sizes", "4,8", "--out", "s.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(dir.path().join("broken.json"), "{\"domain_size\": 64").unwrap();
    let broken = cooc(dir.path(), &["fit", "--synthetic", "broken.json", "--size", "8", "--out", "m.json"]);
    assert_eq!(broken.status.code(), Some(2));
}

#[test]
fn sweep_finds_planted_size() {
    let dir = with_spec();
    let o = cooc(dir.path(), &["sweep", "--synthetic", "spec.json", "--sizes", "2,4,8,16,32", "--out", "out/sweep.csv"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("best group size 8"));
    let csv = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let best = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .min_by(|a, b| a[5].parse::<f64>().unwrap().total_cmp(&b[5].parse().unwrap()))
        .unwrap();
    assert_eq!(best[0], "8");
    assert!(dir.path().join("out/run.json").exists());
}

#[test]
fn full_size_sweep_matches_single_group() {
    let dir = with_spec();
    assert!(cooc(dir.path(), &["sweep", "--synthetic", "spec.json", "--sizes", "64", "--out", "s.csv"]).status.success());
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], row[4]);
    assert_eq!(row[5], row[7]);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = with_spec();
    assert!(cooc(dir.path(), &["fit", "--synthetic", "spec.json", "--size", "8", "--bins", "5", "--out", "m.json"]).status.success());
    fs::copy(dir.path().join("run.json"), dir.path().join("saved.json")).unwrap();
    let o = cooc(dir.path(), &["fit", "--config", "saved.json", "--size", "4", "--out", "r/m.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r/run.json")).unwrap()).unwrap();
    assert_eq!(run["size"], 4);
    assert_eq!(run["bins"], 5);
    assert_eq!(cooc::data::load_model(dir.path().join("r/m.json")).unwrap().num_groups(), 16);
}

#[test]
fn encode_cost_reports_model_rate() {
    let dir = with_spec();
    assert!(cooc(dir.path(), &["fit", "--synthetic", "spec.json", "--size", "8", "--out", "m.json"]).status.success());
    let o = cooc(dir.path(), &["encode-cost", "--model", "m.json", "--synthetic", "spec.json", "--out", "cost.csv"]);
    assert!(o.status.success());
    let model = cooc::data::load_model(dir.path().join("m.json")).unwrap();
    assert!(stdout(&o).starts_with(&format!("{:.2} bits over 200 maps", model.meta.final_bits)));
    assert_eq!(fs::read_to_string(dir.path().join("cost.csv")).unwrap().lines().count(), 201);
}

fn blank_digits(dir: &Path, count: usize) {
    let pixels = vec![vec![0u8; 28 * 28]; count];
    write_idx_images(dir.join("images"), 28, 28, &pixels).unwrap();
    write_idx_labels(dir.join("labels"), &(0..count).map(|i| (i % 10) as u8).collect::<Vec<_>>()).unwrap();
}

#[test]
fn texturized_background_density() {
    let dir = tempfile::tempdir().unwrap();
    blank_digits(dir.path(), 10);
    let o = cooc(dir.path(), &["texturize", "--images", "images", "--labels", "labels", "--seed", "4", "--out", "maps"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_map_dataset(dir.path().join("maps")).unwrap();
    assert_eq!(ds.maps.len(), 10);
    let on: usize = ds.maps.iter().map(|y| y.count()).sum();
    let density = on as f64 / (10.0 * 784.0);
    assert!((0.03..=0.06).contains(&density), "{density}");
    assert!(dir.path().join("maps/run.json").exists());
}

#[test]
fn texturize_repeats_with_seed() {
    let dir = tempfile::tempdir().unwrap();
    blank_digits(dir.path(), 30);
    for out in ["a", "b"] {
        let o = cooc(dir.path(), &["texturize", "--images", "images", "--labels", "labels", "--per-class", "2", "--out", out]);
        assert!(o.status.success());
    }
    for f in ["maps.bin", "manifest.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    assert_eq!(read_map_dataset(dir.path().join("a")).unwrap().maps.len(), 20);
}

#[test]
fn texturize_rejects_label_file_as_images() {
    let dir = tempfile::tempdir().unwrap();
    blank_digits(dir.path(), 3);
    let o = cooc(dir.path(), &["texturize", "--images", "labels", "--out", "maps"]);
    assert_eq!(o.status.code(), Some(2));
}

/// Two classes on an 8x8 grid, each filling its own half; map `i` drops one index.
fn separable_dataset(dir: &Path) {
    let domain = IndexDomain::pixel(8, 8).unwrap();
    let mut maps = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2usize {
        for i in 0..12 {
            let half = (32 * class..32 * class + 32).filter(|&p| p != 32 * class + i);
            maps.push(SignificanceMap::from_indices(domain, half).unwrap());
            labels.push(class as u8);
        }
    }
    let ds = MapDataset::new(DatasetSource::Synthetic, domain, maps, Some(labels)).unwrap();
    write_map_dataset(dir.join("maps"), &ds).unwrap();
}

#[test]
fn memorized_classes_have_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    separable_dataset(dir.path());
    let train = cooc(dir.path(), &["train-digits", "--maps", "maps", "--classes", "2", "--size", "4", "--out", "models.json"]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let o = cooc(dir.path(), &["classify", "--models", "models.json", "--maps", "maps", "--out", "preds.csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "error rate: 0.0000");
    let preds = fs::read_to_string(dir.path().join("preds.csv")).unwrap();
    assert_eq!(preds.lines().next().unwrap(), "id,predicted,true");
    assert_eq!(preds.lines().count(), 25);
}

#[test]
fn feature_mode_writes_one_column_per_class_group() {
    let dir = tempfile::tempdir().unwrap();
    separable_dataset(dir.path());
    let args = ["train-digits", "--maps", "maps", "--classes", "2", "--size", "4", "--out", "models.json"];
    assert!(cooc(dir.path(), &args).status.success());
    let o = cooc(dir.path(), &["classify", "--models", "models.json", "--maps", "maps", "--mode", "features", "--out", "f.csv"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let widths: Vec<usize> = csv.lines().map(|l| l.split(',').count()).collect();
    assert_eq!(widths.len(), 25);
    assert!(widths.iter().all(|&w| w == 1 + 2 * 16));
    assert!(csv.lines().nth(1).unwrap().starts_with("0,"));
}
