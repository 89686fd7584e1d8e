use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::info;
use serde::Serialize;

use hybridcnn::arch::{full_custom_config, ForwardOptions, GraphFile, GraphSummary, HybridConfig, ModelConfig};
use hybridcnn::data::manifest::with_split;
use hybridcnn::data::{
    augment, class_counts, load_image, load_manifest, scan_class_tree, split, write_manifest, write_synthetic,
    AugmentationPlan, ImageSet, SampleRecord, Split, SplitConfig,
};
use hybridcnn::eval::{evaluate, extract_features, pca2, scatter_csv};
use hybridcnn::labels::{BranchTask, Label};
use hybridcnn::train::{append_jsonl, train_branches, train_hybrid, Checkpoint, EpochStats, TrainConfig};
use hybridcnn::{Error, Result, Tensor};

use crate::{AugmentPreset, Command, EvalArgs, InspectArgs, PcaArgs, PredictArgs, PrepareArgs, TrainArgs};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Resolved-configuration record written next to every command's outputs.
fn snapshot(out: &Path, command: &Command) -> Result<()> {
    #[derive(Serialize)]
    struct RunConfig<'a> {
        tool: &'static str,
        version: &'static str,
        #[serde(flatten)]
        command: &'a Command,
    }
    write_json(
        &out.join("run_config.json"),
        &RunConfig {
            tool: "hybridcnn",
            version: env!("CARGO_PKG_VERSION"),
            command,
        },
    )
}

fn init_workers(n: usize) {
    // the global pool can only be configured once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
}

fn counts_by_name(records: &[SampleRecord]) -> BTreeMap<String, usize> {
    class_counts(records)
        .into_iter()
        .map(|(l, n)| (l.name().to_string(), n))
        .collect()
}

fn print_counts(title: &str, records: &[SampleRecord]) {
    let counts = class_counts(records);
    let cells: Vec<String> = counts.iter().map(|(l, n)| format!("{l} {n}")).collect();
    println!("{title:<22} {}  (total {})", cells.join(", "), records.len());
}

pub fn prepare(a: &PrepareArgs, command: &Command) -> Result<()> {
    init_workers(a.workers);
    create_dir(&a.out)?;
    let records = if a.synthetic {
        write_synthetic(&a.out.join("images"), a.per_class, a.size, a.seed)?
    } else if let Some(dir) = &a.data_dir {
        scan_class_tree(dir)?
    } else if let Some(m) = &a.manifest {
        load_manifest(m)?
    } else {
        return Err(Error::Config("one of --synthetic, --data-dir or --manifest is required".into()));
    };
    if records.is_empty() {
        return Err(Error::Data("no images found".into()));
    }
    let plan = match (&a.augment_plan, a.augment) {
        (Some(p), _) => AugmentationPlan::read(p)?,
        (None, AugmentPreset::None) => AugmentationPlan::empty(),
        (None, AugmentPreset::Balanced) => AugmentationPlan::balanced_preset(),
    };
    let cfg = SplitConfig {
        train_frac: a.train_frac,
        val_frac_of_test: a.val_frac,
    };
    let assigned = split(&records, cfg, a.seed)?;
    let train = with_split(&assigned, Split::Train);
    let test = with_split(&assigned, Split::Test);
    let validation = with_split(&assigned, Split::Validation);
    // only training images are augmented, so no variant of a held-out image leaks into training
    let train_aug = augment(&train, &plan, a.seed, &a.out.join("augmented"), a.workers)?;

    write_manifest(&a.out.join("all.jsonl"), &assigned)?;
    write_manifest(&a.out.join("train.jsonl"), &train_aug)?;
    write_manifest(&a.out.join("test.jsonl"), &test)?;
    write_manifest(&a.out.join("validation.jsonl"), &validation)?;

    #[derive(Serialize)]
    struct Summary {
        before: BTreeMap<String, usize>,
        train_before: BTreeMap<String, usize>,
        train_after: BTreeMap<String, usize>,
        test: BTreeMap<String, usize>,
        validation: BTreeMap<String, usize>,
    }
    write_json(
        &a.out.join("summary.json"),
        &Summary {
            before: counts_by_name(&records),
            train_before: counts_by_name(&train),
            train_after: counts_by_name(&train_aug),
            test: counts_by_name(&test),
            validation: counts_by_name(&validation),
        },
    )?;
    print_counts("before", &records);
    print_counts("train", &train);
    print_counts("train (augmented)", &train_aug);
    print_counts("test", &test);
    print_counts("validation", &validation);
    snapshot(&a.out, command)
}

fn group_digits(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn shape_text(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("(None, {})", dims.join(", "))
}

fn print_summary(s: &GraphSummary) {
    println!("{:<52} {:<22} {:>12}", "Layer (type)", "Output Shape", "Param #");
    println!("{}", "=".repeat(88));
    for r in &s.layers {
        println!(
            "{:<52} {:<22} {:>12}",
            format!("{} ({})", r.name, r.layer_type),
            shape_text(&r.output_shape),
            group_digits(r.params())
        );
    }
    println!("{}", "=".repeat(88));
    println!("Total params: {}", group_digits(s.trainable + s.non_trainable));
    println!("Trainable params: {}", group_digits(s.trainable));
    println!("Non-trainable params: {}", group_digits(s.non_trainable));
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => GraphFile::read(p)?.model,
        None => ModelConfig::Sequential(full_custom_config()),
    };
    let summary = config.summary()?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print_summary(&summary);
    }
    if let Some(expected) = a.expect_trainable {
        if expected != summary.trainable {
            return Err(Error::Config(format!(
                "expected {expected} trainable parameters, graph has {}",
                summary.trainable
            )));
        }
    }
    Ok(())
}

fn image_size(config: &ModelConfig) -> (usize, usize) {
    let s = config.input_shape();
    (s[0], s[1])
}

fn load_set(manifest: &Path, size: (usize, usize), classes: &[String], workers: usize) -> Result<ImageSet> {
    let records = load_manifest(manifest)?;
    let set = ImageSet::load(&records, size, workers, |l: Label| {
        classes.iter().position(|c| c == l.name())
    })?;
    if set.is_empty() {
        return Err(Error::Data(format!("{} has no images of classes {classes:?}", manifest.display())));
    }
    Ok(set)
}

fn print_epoch(phase: &str, s: &EpochStats) {
    let val = s.val_accuracy.map(|v| format!("  val_acc {:.4}", v)).unwrap_or_default();
    println!(
        "{phase:<10} epoch {:>2}  loss {:.4}  acc {:.4}  prec {:.4}  rec {:.4}  f1 {:.4}  std {:.4}  {:.1}s{val}",
        s.epoch, s.loss, s.accuracy, s.precision, s.recall, s.f1, s.accuracy_std, s.seconds
    );
}

pub fn train(a: &TrainArgs, command: &Command) -> Result<()> {
    init_workers(a.workers);
    let mut hybrid = match &a.config {
        Some(p) => GraphFile::read(p)?.model.as_hybrid()?.clone(),
        None => HybridConfig::desk(),
    };
    if let Some(tau) = a.tau {
        hybrid.fusion.tau = tau;
    }
    let model = ModelConfig::Hybrid(hybrid.clone());
    model.summary()?;
    create_dir(&a.out)?;
    snapshot(&a.out, command)?;

    let size = image_size(&model);
    let set = load_set(&a.manifest, size, &Label::names(), a.workers)?;
    let validation = match &a.validation {
        Some(p) => Some(load_set(p, size, &Label::names(), a.workers)?),
        None => None,
    };
    info!("loaded {} training images at {size:?}", set.len());

    let log_path = a.out.join("train_log.jsonl");
    if log_path.exists() {
        fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
    }
    let base = TrainConfig {
        epochs: a.branch_epochs.unwrap_or(a.epochs),
        batch_size: a.batch,
        adam: hybridcnn::train::AdamConfig {
            lr: a.lr,
            ..Default::default()
        },
        seed: a.seed,
        fine_tune_branches: a.fine_tune_branches,
    };

    let mut log_err = None;
    let branches = train_branches(&set, [&hybrid.branch_ns, &hybrid.branch_ct], &base, &mut |task, s| {
        print_epoch(task.slug(), s);
        if let Err(e) = append_jsonl(&log_path, task.slug(), s) {
            log_err.get_or_insert(e);
        }
    })?;
    for (task, b) in BranchTask::ALL.into_iter().zip(&branches) {
        b.checkpoint.save(&a.out.join(format!("{}.ckpt", task.slug())))?;
    }

    let cfg = TrainConfig {
        epochs: a.epochs,
        ..base
    };
    let trained = train_hybrid(
        &set,
        &hybrid.custom,
        &branches[0].checkpoint.graph,
        &branches[1].checkpoint.graph,
        hybrid.fusion.clone(),
        &cfg,
        validation.as_ref(),
        &mut |s| {
            print_epoch("hybrid", s);
            if let Err(e) = append_jsonl(&log_path, "hybrid", s) {
                log_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = log_err {
        return Err(e);
    }
    let path = a.out.join("hybrid.ckpt");
    trained.checkpoint.save(&path)?;
    println!("saved {}", path.display());
    Ok(())
}

fn confusion_csv(cm: &hybridcnn::eval::ConfusionMatrix) -> String {
    let mut out = format!("actual\\predicted,{}\n", cm.classes.join(","));
    for (name, row) in cm.classes.iter().zip(&cm.counts) {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!("{name},{}\n", cells.join(",")));
    }
    out
}

fn infer_options(custom_only: bool) -> ForwardOptions {
    ForwardOptions {
        custom_only,
        ..ForwardOptions::infer()
    }
}

pub fn eval(a: &EvalArgs, command: &Command) -> Result<()> {
    init_workers(a.workers);
    let ck = Checkpoint::load(&a.checkpoint)?;
    let set = load_set(&a.manifest, image_size(ck.graph.config()), &ck.meta.classes, a.workers)?;
    let report = evaluate(&ck.graph, &set, a.batch, &infer_options(a.custom_only))?;
    create_dir(&a.out)?;
    write_json(&a.out.join("eval_report.json"), &report)?;
    write_text(&a.out.join("confusion.csv"), &confusion_csv(&report.confusion))?;
    snapshot(&a.out, command)?;
    let m = &report.metrics;
    println!("samples {}  accuracy {:.4}", report.samples, m.accuracy);
    for c in &m.per_class {
        println!(
            "{:<8} precision {:.4}  recall {:.4}  f1 {:.4}  support {}",
            c.class, c.precision, c.recall, c.f1, c.support
        );
    }
    println!(
        "macro    precision {:.4}  recall {:.4}  f1 {:.4}",
        m.macro_precision, m.macro_recall, m.macro_f1
    );
    println!("eval time {:.3}s", m.eval_seconds.unwrap_or(0.0));
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let (h, w) = image_size(ck.graph.config());
    let img = load_image(&a.image, (h, w))?;
    let x = Tensor::new(vec![1, h, w, 3], img.into_data())?;
    let probs = ck.graph.predict_with(&x, &infer_options(a.custom_only))?;
    let best = probs.argmax_rows()?[0];

    #[derive(Serialize)]
    struct Prediction<'a> {
        image: &'a Path,
        label: &'a str,
        classes: &'a [String],
        probabilities: &'a [f32],
    }
    println!(
        "{}",
        serde_json::to_string(&Prediction {
            image: &a.image,
            label: &ck.meta.classes[best],
            classes: &ck.meta.classes,
            probabilities: probs.data(),
        })?
    );
    Ok(())
}

pub fn pca(a: &PcaArgs, command: &Command) -> Result<()> {
    init_workers(a.workers);
    let ck = Checkpoint::load(&a.checkpoint)?;
    let set = load_set(&a.manifest, image_size(ck.graph.config()), &ck.meta.classes, a.workers)?;
    let (features, labels) = extract_features(&ck.graph, &set, a.tap.into(), a.batch)?;
    let projection = pca2(&features, a.sign.into(), a.seed)?;
    let names: Vec<String> = labels.iter().map(|&l| ck.meta.classes[l].clone()).collect();
    create_dir(&a.out)?;
    write_text(&a.out.join("pca.csv"), &scatter_csv(&projection, &names))?;

    #[derive(Serialize)]
    struct PcaSummary<'a> {
        samples: usize,
        feature_dim: usize,
        explained: [f64; 2],
        eigenvalues: [f64; 2],
        directions: &'a [Vec<f64>; 2],
    }
    write_json(
        &a.out.join("pca.json"),
        &PcaSummary {
            samples: features.rows,
            feature_dim: features.cols,
            explained: projection.explained,
            eigenvalues: projection.eigenvalues,
            directions: &projection.directions,
        },
    )?;
    snapshot(&a.out, command)?;
    println!(
        "{} samples x {} features  explained variance {:.4} / {:.4}",
        features.rows, features.cols, projection.explained[0], projection.explained[1]
    );
    Ok(())
}
