use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use cooc::classify::{
    classify_batch, evaluate_error, features_batch, features_csv, predictions_csv, sweep_group_sizes,
    train_class_models, ClassModelSet,
};
use cooc::data::maps::MapDataset;
use cooc::data::{
    gen_synthetic, load_class_models, load_model, read_idx_images, read_idx_labels, read_map_dataset,
    save_class_models, save_model, write_map_dataset, DatasetSource, SyntheticSpec,
};
use cooc::model::total_bits;
use cooc::sparsity::{texturize_batch, TexturizeParams};
use cooc::{Error, IndexDomain, Result, SignificanceMap};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::args::*;

const RUN_FILE: &str = "run.json";
const DIGIT_GROUP_SIZE: usize = 14;
const DIGIT_CLASSES: usize = 10;

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing required option {flag}")))
}

/// Overlay the flags that were given on top of the values in a config file.
fn merge<T: Serialize + DeserializeOwned>(flags: T, file: Option<&Value>) -> Result<T> {
    let Some(file) = file else {
        return Ok(flags);
    };
    let mut merged = file
        .as_object()
        .cloned()
        .ok_or_else(|| Error::Format("run configuration must be a JSON object".into()))?;
    if let Value::Object(given) = serde_json::to_value(&flags)? {
        for (k, v) in given {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(Value::Object(merged))?)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn output_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Echo the effective configuration into every directory that received output.
fn write_run_record<T: Serialize>(command: &str, seed: u64, args: &T, dirs: &[PathBuf]) -> Result<()> {
    let mut record = match serde_json::to_value(args)? {
        Value::Object(m) => m,
        _ => unreachable!("command arguments serialize to an object"),
    };
    record.insert("command".into(), command.into());
    record.insert("seed".into(), seed.into());
    let text = serde_json::to_string_pretty(&Value::Object(record))? + "\n";
    for dir in dirs.iter().collect::<BTreeSet<_>>() {
        write_file(&dir.join(RUN_FILE), &text)?;
    }
    Ok(())
}

fn load_input(input: &InputArgs) -> Result<(IndexDomain, Vec<SignificanceMap>)> {
    match (&input.synthetic, &input.maps) {
        (Some(spec), None) => {
            if input.label.is_some() {
                return Err(usage("--label applies to --maps only"));
            }
            let spec: SyntheticSpec = serde_json::from_str(&fs::read_to_string(spec)?)?;
            let corpus = gen_synthetic(&spec)?;
            Ok((corpus.domain, corpus.maps))
        }
        (None, Some(dir)) => {
            let ds = read_map_dataset(dir)?;
            let domain = ds.manifest.domain;
            let maps = match input.label {
                None => ds.maps,
                Some(l) => {
                    let labels = ds
                        .manifest
                        .labels
                        .ok_or_else(|| Error::Format(format!("{} has no labels", dir.display())))?;
                    ds.maps.into_iter().zip(labels).filter(|(_, x)| *x == l).map(|(y, _)| y).collect()
                }
            };
            Ok((domain, maps))
        }
        (None, None) => Err(usage("one of --synthetic or --maps is required")),
        (Some(_), Some(_)) => Err(usage("--synthetic and --maps are exclusive")),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let file: Option<Value> = match &cli.config {
        Some(path) => Some(serde_json::from_str(&fs::read_to_string(path)?)?),
        None => None,
    };
    let seed = match (cli.seed, file.as_ref().and_then(|f| f.get("seed"))) {
        (Some(s), _) => s,
        (None, Some(v)) => v.as_u64().ok_or_else(|| Error::Format("seed must be an unsigned integer".into()))?,
        (None, None) => 0,
    };
    let file = file.as_ref();
    match cli.command {
        Command::Fit(a) => fit(merge(a, file)?, seed),
        Command::Sweep(a) => sweep(merge(a, file)?, seed),
        Command::Texturize(a) => texturize(merge(a, file)?, seed),
        Command::TrainDigits(a) => train_digits(merge(a, file)?, seed),
        Command::Classify(a) => classify(merge(a, file)?, seed),
        Command::EncodeCost(a) => encode_cost(merge(a, file)?, seed),
    }
}

fn fit(mut a: FitArgs, seed: u64) -> Result<()> {
    a.fit.resolve(None);
    let size = required(a.fit.size, "--size")?;
    let out = required(a.out.clone(), "--out")?;
    let trace_path = a.trace.get_or_insert_with(|| out.with_extension("trace.csv")).clone();
    let config = a.fit.config(size, seed);
    config.validate()?;
    let (domain, maps) = load_input(&a.input)?;
    let (model, trace) = cooc::fit(&maps, &config)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_model(&out, &model)?;
    write_file(&trace_path, trace.to_csv())?;
    write_run_record("fit", seed, &a, &[output_dir(&out), output_dir(&trace_path)])?;
    println!(
        "{} groups, {} iterations{}, {:.2} bits ({:.4} bpp)",
        model.num_groups(),
        trace.iterations(),
        if trace.converged { "" } else { " (not converged)" },
        model.meta.final_bits,
        model.meta.final_bits / (maps.len() * domain.size()) as f64
    );
    Ok(())
}

fn sweep(mut a: SweepArgs, seed: u64) -> Result<()> {
    a.fit.resolve(None);
    let sizes = required(a.sizes.clone(), "--sizes")?;
    let out = required(a.out.clone(), "--out")?;
    let first = *sizes.first().ok_or_else(|| usage("--sizes is empty"))?;
    let template = a.fit.config(first, seed);
    let (_, maps) = load_input(&a.input)?;
    let train = *a.train.get_or_insert(maps.len() / 2);
    if train == 0 || train > maps.len() {
        return Err(usage(format!("--train {train} outside [1, {}]", maps.len())));
    }
    let (train_maps, test_maps) = maps.split_at(train);
    let result = sweep_group_sizes(train_maps, test_maps, &sizes, &template)?;
    write_file(&out, result.to_csv())?;
    write_run_record("sweep", seed, &a, &[output_dir(&out)])?;
    if let Some(best) = result.best() {
        let rates = best.test.unwrap_or(best.train);
        println!("best group size {} at {:.4} bpp", best.group_size, rates.optimized);
    }
    Ok(())
}

fn texturize(mut a: TexturizeArgs, seed: u64) -> Result<()> {
    let defaults = TexturizeParams::default();
    let params = TexturizeParams {
        offset: *a.offset.get_or_insert(defaults.offset),
        threshold: *a.threshold.get_or_insert(defaults.threshold),
        seed,
    };
    params.validate()?;
    let images_path = required(a.images.clone(), "--images")?;
    let out = required(a.out.clone(), "--out")?;
    let images = read_idx_images(&images_path)?;
    let labels = match &a.labels {
        Some(p) => {
            let l = read_idx_labels(p)?;
            if l.len() != images.len() {
                return Err(Error::Format(format!("{} labels for {} images", l.len(), images.len())));
            }
            Some(l)
        }
        None if a.per_class.is_some() => return Err(usage("--per-class needs --labels")),
        None => None,
    };
    let mut taken = [0usize; 256];
    let keep: Vec<usize> = (0..images.len())
        .filter(|&i| match (&labels, a.per_class) {
            (Some(l), Some(cap)) => {
                let t = &mut taken[l[i] as usize];
                *t += 1;
                *t <= cap
            }
            _ => true,
        })
        .take(a.limit.unwrap_or(usize::MAX))
        .collect();
    if keep.is_empty() {
        return Err(usage("no images selected"));
    }
    let selected: Vec<_> = keep.iter().map(|&i| images[i].clone()).collect();
    let maps = texturize_batch(&selected, &params)?;
    let domain = IndexDomain::pixel(selected[0].width, selected[0].height)?;
    let labels = labels.map(|l| keep.iter().map(|&i| l[i]).collect());
    let density = maps.iter().map(|y| y.count()).sum::<usize>() as f64 / (maps.len() * domain.size()) as f64;
    let ds = MapDataset::new(DatasetSource::Idx, domain, maps, labels)?;
    write_map_dataset(&out, &ds)?;
    write_run_record("texturize", seed, &a, &[out])?;
    println!("{} maps, significance density {density:.4}", ds.maps.len());
    Ok(())
}

fn train_digits(mut a: TrainDigitsArgs, seed: u64) -> Result<()> {
    a.fit.resolve(Some(DIGIT_GROUP_SIZE));
    let classes = *a.classes.get_or_insert(DIGIT_CLASSES);
    let maps_dir = required(a.maps.clone(), "--maps")?;
    let out = required(a.out.clone(), "--out")?;
    let config = a.fit.config(a.fit.size.unwrap_or(DIGIT_GROUP_SIZE), seed);
    config.validate()?;
    let by_label = read_map_dataset(&maps_dir)?.by_label(classes)?;
    if let Some(d) = by_label.iter().position(|m| m.is_empty()) {
        return Err(Error::Format(format!("class {d} has no training maps")));
    }
    let set = train_class_models(&by_label, &config)?;
    for (d, m) in set.models().iter().enumerate() {
        println!(
            "class {d}: {} maps, {} iterations, {:.2} bits",
            m.meta.training_maps, m.meta.iterations, m.meta.final_bits
        );
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_class_models(&out, set.models())?;
    write_run_record("train-digits", seed, &a, &[output_dir(&out)])?;
    Ok(())
}

fn classify(mut a: ClassifyArgs, seed: u64) -> Result<()> {
    let mode = *a.mode.get_or_insert(ClassifyMode::Predictions);
    let models = required(a.models.clone(), "--models")?;
    let maps_dir = required(a.maps.clone(), "--maps")?;
    let out = required(a.out.clone(), "--out")?;
    let set = ClassModelSet::new(load_class_models(&models)?)?;
    let ds = read_map_dataset(&maps_dir)?;
    set.domain().ensure_same(&ds.manifest.domain)?;
    let labels: Option<Vec<usize>> = ds.manifest.labels.as_ref().map(|l| l.iter().map(|&x| x as usize).collect());
    match mode {
        ClassifyMode::Predictions => {
            let preds = classify_batch(&ds.maps, &set)?;
            write_file(&out, predictions_csv(&preds, labels.as_deref()))?;
            if let Some(labels) = &labels {
                println!("error rate: {:.4}", evaluate_error(&preds, labels)?);
            }
        }
        ClassifyMode::Features => {
            let features = features_batch(&ds.maps, &set)?;
            write_file(&out, features_csv(&features, labels.as_deref()))?;
            println!("{} feature vectors of dimension {}", features.len(), set.feature_dim());
        }
    }
    write_run_record("classify", seed, &a, &[output_dir(&out)])?;
    Ok(())
}

fn encode_cost(a: EncodeCostArgs, seed: u64) -> Result<()> {
    let model = load_model(required(a.model.clone(), "--model")?)?;
    let (domain, maps) = load_input(&a.input)?;
    model.domain().ensure_same(&domain)?;
    let cost = total_bits(&maps, &model)?;
    if let Some(out) = &a.out {
        write_file(out, cost.to_csv(domain.size()))?;
        write_run_record("encode-cost", seed, &a, &[output_dir(out)])?;
    }
    println!("{:.2} bits over {} maps ({:.4} bpp)", cost.bits, maps.len(), cost.bits_per_index);
    Ok(())
}
