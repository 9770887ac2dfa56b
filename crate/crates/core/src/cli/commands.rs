use std::path::{Path, PathBuf};

use ndarray::Axis;

use super::{
    BenchArgs, CircleArgs, EvalArgs, GenArgs, PredictArgs, SplitPart, Study, SweepArgs, TrainArgs,
};
use crate::dsp::Domain;
use crate::evalkit::{
    circle_eval, data_fraction_sweep, evaluate, grid_comparison, knn_latency, model_latency,
    train_task, write_circle_pairs, write_confusion, write_grid_comparison, write_history,
    write_latency, write_sweep, EvalReport, FeatureTable, LatencyRow, DEFAULT_WARMUP,
    SWEEP_FRACTIONS,
};
use crate::locmodel::{
    KeypadLayout, KnnReference, LocalizationTask, Prediction, TaskContext, TaskRegistry,
};
use crate::neural::{DataSplit, Head, ModelCheckpoint, TrainConfig};
use crate::sigsim::{Finger, RecordSet, Simulator};
use crate::store::{read_checkpoint, read_dataset, write_checkpoint, write_dataset, Config};
use crate::{Error, Result};

/// Offset between the training seed and the circle simulator's master seed,
/// so the trajectory never reuses a training record's noise stream.
const CIRCLE_SEED_OFFSET: u64 = 1 << 32;

fn context(cfg: &Config) -> TaskContext {
    TaskContext {
        plate_width_cm: cfg.plate.width_cm,
        plate_height_cm: cfg.plate.height_cm,
        keypad: cfg.keypad.clone(),
    }
}

fn simulator(cfg: &Config, seed: u64) -> Result<Simulator> {
    Ok(Simulator::new(cfg.plate.clone(), cfg.chirp.clone(), seed)?.with_human(cfg.human.clone()))
}

fn train_config(cfg: &Config, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.train.clone()
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn print_report(label: &str, r: &EvalReport) {
    let mut line = format!("{label}: samples={}", r.samples);
    if r.rmse_cm.is_some() {
        line += &format!(
            " rmse_cm={} mean_error_cm={} stddev_error_cm={}",
            fmt_opt(r.rmse_cm),
            fmt_opt(r.mean_error_cm),
            fmt_opt(r.stddev_error_cm)
        );
    }
    if let Some(a) = r.accuracy {
        line += &format!(" accuracy={a:.4}");
    }
    println!("{line}");
}

/// Task and domain recorded in a checkpoint's tags.
fn checkpoint_task(
    cfg: &Config,
    model: &ModelCheckpoint,
) -> Result<(Box<dyn LocalizationTask>, Domain)> {
    let tags = &model.train_meta.tags;
    let name = tags
        .get("task")
        .ok_or_else(|| Error::Usage("checkpoint carries no task tag".into()))?;
    let domain: Domain = tags
        .get("domain")
        .ok_or_else(|| Error::Usage("checkpoint carries no domain tag".into()))?
        .parse()?;
    let task = TaskRegistry::default().create(name, &context(cfg))?;
    let spec = task.net_spec(domain)?;
    if spec.widths() != model.spec.widths() || spec.head != model.spec.head {
        return Err(Error::Usage(format!(
            "checkpoint shape {} does not match task {name} ({})",
            model.spec.describe(),
            spec.describe()
        )));
    }
    Ok((task, domain))
}

fn split_for(model: &ModelCheckpoint, n: usize) -> Result<DataSplit> {
    if let Some(trained) = model.train_meta.tags.get("records") {
        if trained != &n.to_string() {
            return Err(Error::Usage(format!(
                "checkpoint was trained on {trained} records but the dataset has {n}; its split cannot be rebuilt (use --split all)"
            )));
        }
    }
    Ok(DataSplit::seeded(
        n,
        DataSplit::DEFAULT_FRACTIONS,
        model.train_meta.seed,
    ))
}

pub fn gen(cfg: &Config, a: &GenArgs) -> Result<()> {
    let sim = simulator(cfg, a.seed)?;
    let records = (0..a.count as u64)
        .map(|i| {
            if a.human {
                let mut event = sim.sample_event(i);
                event.finger = Finger::Human;
                sim.human_perturb(&event)
            } else {
                sim.gen_record(i)
            }
        })
        .collect::<std::result::Result<Vec<RecordSet>, _>>()?;
    write_dataset(&a.out, &records)?;
    let bytes = std::fs::metadata(&a.out)
        .map_err(|source| Error::Io {
            path: a.out.display().to_string(),
            source,
        })?
        .len();
    println!(
        "wrote {} records ({bytes} bytes) to {}",
        records.len(),
        a.out.display()
    );
    Ok(())
}

pub fn train(cfg: &Config, a: &TrainArgs) -> Result<()> {
    let records = read_dataset(&a.data)?;
    let task = TaskRegistry::default().create(&a.task, &context(cfg))?;
    task.net_spec(a.domain)?;
    let table = FeatureTable::extract(&records, a.domain, &cfg.chirp)?;
    let tc = train_config(cfg, a.seed);
    let split = DataSplit::seeded(table.len(), DataSplit::DEFAULT_FRACTIONS, a.seed);
    let mut out = train_task(task.as_ref(), &table, &split, &tc)?;
    out.checkpoint
        .train_meta
        .tags
        .insert("records".into(), table.len().to_string());
    write_checkpoint(&a.out, &out.checkpoint)?;
    let history = a
        .history
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.csv", a.out.display())));
    write_history(&history, &out.history)?;
    println!(
        "model {} task={} domain={} epochs={} best_epoch={}",
        out.checkpoint.spec.describe(),
        task.name(),
        a.domain,
        out.history.len(),
        out.best_epoch
    );
    for (label, idx) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        print_report(
            label,
            &evaluate(task.as_ref(), &out.checkpoint, &table, idx)?,
        );
    }
    Ok(())
}

pub fn eval(cfg: &Config, a: &EvalArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let (task, domain) = checkpoint_task(cfg, &model)?;
    let records = read_dataset(&a.data)?;
    let table = FeatureTable::extract(&records, domain, &cfg.chirp)?;
    let idx = match a.split {
        SplitPart::All => (0..table.len()).collect(),
        part => {
            let s = split_for(&model, table.len())?;
            match part {
                SplitPart::Train => s.train,
                SplitPart::Val => s.val,
                _ => s.test,
            }
        }
    };
    let report = evaluate(task.as_ref(), &model, &table, &idx)?;
    print_report(&format!("{} {}", task.name(), domain), &report);
    if let (Some(dir), Some(m)) = (&a.out_dir, &report.confusion) {
        ensure_dir(dir)?;
        let labels: Vec<String> = if task.name() == "keypad" {
            (1..=m.classes())
                .map(|c| KeypadLayout::class_name(c).to_string())
                .collect()
        } else {
            (0..m.classes()).map(|c| c.to_string()).collect()
        };
        write_confusion(&dir.join("confusion.csv"), m, &labels)?;
    }
    Ok(())
}

pub fn predict(cfg: &Config, a: &PredictArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let (task, domain) = checkpoint_task(cfg, &model)?;
    let records = read_dataset(&a.data)?;
    let record = records.get(a.index).ok_or_else(|| {
        Error::Usage(format!(
            "index {} is out of range for a dataset of {} records",
            a.index,
            records.len()
        ))
    })?;
    let features = crate::dsp::extract_features(record, domain, &cfg.chirp)?;
    let output = model.infer_one(features.values())?;
    match task.decode(&output)? {
        Prediction::Key(label) => println!("key {}", KeypadLayout::class_name(label)),
        p => {
            let [x, y] = p.position().expect("position prediction");
            println!("{x:.4} {y:.4}");
        }
    }
    eprintln!(
        "true position: {:.4} {:.4}",
        record.event.x_cm, record.event.y_cm
    );
    Ok(())
}

pub fn bench(cfg: &Config, a: &BenchArgs) -> Result<()> {
    let model = read_checkpoint(&a.model)?;
    let (task, domain) = checkpoint_task(cfg, &model)?;
    let records = read_dataset(&a.data)?;
    let table = FeatureTable::extract(&records, domain, &cfg.chirp)?;
    let split = split_for(&model, table.len())?;
    let mut rows = Vec::new();
    let lat = model_latency(&model, &table, &split.test, DEFAULT_WARMUP, a.reps);
    rows.push(LatencyRow {
        label: format!("dnn {}", task.name()),
        reps: lat.reps,
        median_ms: lat.median_ms,
        p95_ms: lat.p95_ms,
    });
    if a.knn {
        if model.spec.head != Head::SoftmaxClassifier {
            return Err(Error::Usage(
                "--knn needs a classification checkpoint".into(),
            ));
        }
        let labels = split
            .train
            .iter()
            .map(|&i| Ok(task.true_class(table.positions[i])?.expect("classifier")))
            .collect::<Result<Vec<_>>>()?;
        let reference = KnnReference::new(table.features.select(Axis(0), &split.train), labels)?;
        let lat = knn_latency(&reference, &table, &split.test, DEFAULT_WARMUP, a.reps);
        rows.push(LatencyRow {
            label: "knn k=1".into(),
            reps: lat.reps,
            median_ms: lat.median_ms,
            p95_ms: lat.p95_ms,
        });
    }
    for r in &rows {
        println!(
            "{}: median_ms={:.5} p95_ms={:.5} reps={}",
            r.label, r.median_ms, r.p95_ms, r.reps
        );
    }
    if let Some(dir) = &a.out_dir {
        ensure_dir(dir)?;
        write_latency(&dir.join("latency.csv"), &rows)?;
    }
    Ok(())
}

pub fn sweep(cfg: &Config, a: &SweepArgs) -> Result<()> {
    let records = read_dataset(&a.data)?;
    let tc = train_config(cfg, a.seed);
    let ctx = context(cfg);
    let split = DataSplit::seeded(records.len(), DataSplit::DEFAULT_FRACTIONS, a.seed);
    ensure_dir(&a.out_dir)?;
    match a.study {
        Study::Fraction => {
            let task = TaskRegistry::default().create("keypad", &ctx)?;
            let table = FeatureTable::extract(&records, Domain::Frequency, &cfg.chirp)?;
            let rows = data_fraction_sweep(
                task.as_ref(),
                &table,
                &split,
                &tc,
                &SWEEP_FRACTIONS,
                a.reps,
                &mut |r| {
                    println!(
                        "{} D-{:.0}: train_size={} accuracy={:.4} median_ms={:.5}",
                        r.method,
                        r.fraction * 100.0,
                        r.train_size,
                        r.accuracy,
                        r.median_ms
                    )
                },
            )?;
            write_sweep(&a.out_dir.join("sweep.csv"), &rows)?;
        }
        Study::Grid => {
            let tables = [Domain::Time, Domain::Frequency]
                .into_iter()
                .map(|d| FeatureTable::extract(&records, d, &cfg.chirp))
                .collect::<Result<Vec<_>>>()?;
            let rows = grid_comparison(
                &tables,
                &split,
                &tc,
                &ctx,
                &(2..=10).collect::<Vec<_>>(),
                &mut |r| match &r.error {
                    None => println!(
                        "{} {}: rmse_cm={} mean_error_cm={}",
                        r.config,
                        r.domain,
                        fmt_opt(r.rmse_cm),
                        fmt_opt(r.mean_error_cm)
                    ),
                    Some(e) => eprintln!("{} {}: failed: {e}", r.config, r.domain),
                },
            );
            write_grid_comparison(&a.out_dir.join("grid_comparison.csv"), &rows)?;
            if rows.iter().any(|r| r.error.is_some()) {
                return Err(Error::Usage(
                    "some grid-comparison cells failed; see grid_comparison.csv".into(),
                ));
            }
        }
    }
    Ok(())
}

pub fn circle(cfg: &Config, a: &CircleArgs) -> Result<()> {
    let ctx = context(cfg);
    let registry = TaskRegistry::default();
    let mut models: Vec<(String, Box<dyn LocalizationTask>, ModelCheckpoint, Domain)> = Vec::new();
    if a.model.is_empty() {
        let data = a
            .data
            .as_ref()
            .ok_or_else(|| Error::Usage("circle needs --data or at least one --model".into()))?;
        let records = read_dataset(data)?;
        let table = FeatureTable::extract(&records, Domain::Frequency, &cfg.chirp)?;
        let split = DataSplit::seeded(table.len(), DataSplit::DEFAULT_FRACTIONS, a.seed);
        let tc = train_config(cfg, a.seed);
        for (name, spec) in [("C-5", "grid:5"), ("C-10", "grid:10"), ("R", "regression")] {
            let task = registry.create(spec, &ctx)?;
            let out = train_task(task.as_ref(), &table, &split, &tc)?;
            print_report(
                &format!("{name} robot test"),
                &evaluate(task.as_ref(), &out.checkpoint, &table, &split.test)?,
            );
            models.push((name.to_string(), task, out.checkpoint, Domain::Frequency));
        }
    } else {
        for path in &a.model {
            let model = read_checkpoint(path)?;
            let (task, domain) = checkpoint_task(cfg, &model)?;
            if task.name() == "keypad" {
                return Err(Error::Usage(format!(
                    "{}: keypad models do not predict positions",
                    path.display()
                )));
            }
            let name = path
                .file_stem()
                .map_or_else(|| task.name(), |s| s.to_string_lossy().into_owned());
            models.push((name, task, model, domain));
        }
    }
    let sim = simulator(cfg, a.seed.wrapping_add(CIRCLE_SEED_OFFSET))?;
    let trajectory = sim.gen_circle_trajectory(a.center, a.radius, a.count)?;
    let mut results = Vec::new();
    for (name, task, model, domain) in &models {
        let table = FeatureTable::extract(&trajectory, *domain, &cfg.chirp)?;
        let r = circle_eval(&[(name.clone(), task.as_ref(), model)], &table)?;
        print_report(&format!("{name} circle"), &r[0].report);
        results.extend(r);
    }
    ensure_dir(&a.out_dir)?;
    write_circle_pairs(&a.out_dir.join("circle_pairs.csv"), &results)?;
    Ok(())
}
