//! Subcommand implementations. Each one writes its outputs atomically,
//! then a run manifest, and returns a summary for the terminal.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;
use ndarray::Array3;
use serde::Serialize;
use serde_json::json;

use entcap_core::circuit::{generate_gate_strategy, generate_mixed, generate_with, Circuit, Strategy};
use entcap_core::dataset::{
    evaluate, label_records_with_progress, pearson, read_dataset, record_id, rmse, split, write_dataset,
    Header, MetricsReport, Record, SubsampleSpec,
};
use entcap_core::encoding::Encoder;
use entcap_core::model::{
    fit, init_model, load_checkpoint, mean_huber, predict_batch, save_checkpoint, AdamConfig, Checkpoint,
    EpochLog, LstmRegressor, ModelConfig, TrainConfig, TrainingSet,
};
use entcap_core::rng::{derive_seed, stream};
use entcap_core::simulator::convergence_sweep;

use crate::args::{ConvergenceArgs, EvalArgs, GenerateArgs, LabelArgs, PredictArgs, StrategyArg, TrainArgs};
use crate::output::{open, write_atomic, InputDigest, RunManifest, Staged};

/// Seed-stream indices derived from the `train --seed` value.
const SPLIT_STREAM: u64 = 0;
const VAL_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

fn load_records(path: &Path) -> Result<(Option<Header>, Vec<Record>)> {
    read_dataset(open(path)?).with_context(|| format!("cannot read dataset {}", path.display()))
}

fn targets(records: &[Record]) -> Result<Vec<f64>> {
    records.iter().map(|r| Ok(r.ent()?)).collect()
}

fn check_qubits(records: &[Record], expected: usize) -> Result<()> {
    if let Some(r) = records.iter().find(|r| r.circuit.n_qubits() != expected) {
        bail!(
            "record {} has {} qubits but the model expects {expected}-qubit circuits",
            r.id,
            r.circuit.n_qubits()
        );
    }
    Ok(())
}

fn features(encoder: &Encoder, records: &[Record]) -> Result<Array3<f64>> {
    encoder
        .feature_batch(records.iter().map(|r| &r.circuit))
        .context("cannot encode circuits")
}

fn training_set(encoder: &Encoder, records: &[Record]) -> Result<TrainingSet> {
    Ok(TrainingSet::new(features(encoder, records)?, targets(records)?.into())?)
}

fn write_records(path: &Path, header: &Header, records: &[Record]) -> Result<()> {
    write_atomic(path, |w| Ok(write_dataset(w, header, records)?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateSummary {
    pub count: usize,
    pub tally: BTreeMap<String, usize>,
}

pub fn generate(args: &GenerateArgs) -> Result<GenerateSummary> {
    let start = Instant::now();
    let mut rng = stream(args.seed);
    let circuits = match args.strategy {
        StrategyArg::Mixed => generate_mixed(args.qubits, args.gates, args.count, &mut rng)?,
        fixed => {
            let strategy = match fixed {
                StrategyArg::Gate => Strategy::GateStrategy,
                _ => Strategy::LayerStrategy,
            };
            (0..args.count)
                .map(|_| generate_with(strategy, args.qubits, args.gates, &mut rng))
                .collect::<entcap_core::Result<Vec<_>>>()?
        }
    };
    let mut tally = BTreeMap::new();
    for c in &circuits {
        *tally.entry(format!("{:?}", c.strategy())).or_insert(0) += 1;
    }
    let records: Vec<Record> = circuits
        .into_iter()
        .enumerate()
        .map(|(i, c)| Record::unlabeled(record_id(i), c))
        .collect();
    let header = Header::new(json!({
        "generate": {
            "count": args.count,
            "qubits": args.qubits,
            "gates": args.gates,
            "strategy": args.strategy,
            "seed": args.seed,
        }
    }));
    write_records(&args.out, &header, &records)?;

    let mut manifest = RunManifest::new("generate", args)?;
    manifest.seeds = json!({ "generator": args.seed });
    manifest.outputs = vec![args.out.clone()];
    manifest.write(&args.out, start.elapsed())?;
    Ok(GenerateSummary {
        count: records.len(),
        tally,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSummary {
    pub count: usize,
    pub mean_ent: f64,
}

pub fn label(args: &LabelArgs) -> Result<LabelSummary> {
    let start = Instant::now();
    let input = InputDigest::of(&args.input)?;
    let (header, records) = load_records(&args.input)?;
    let total = records.len();
    let step = (total / 20).max(1);
    let records = label_records_with_progress(records, args.samples, args.seed, args.parallel, |done| {
        if done % step == 0 || done == total {
            info!("labeled {done}/{total}");
        }
    })?;

    let mut config = match header.map(|h| h.config) {
        Some(serde_json::Value::Object(map)) => map,
        _ => serde_json::Map::new(),
    };
    config.insert("label".into(), json!({ "samples": args.samples, "seed": args.seed }));
    write_records(&args.out, &Header::new(config.into()), &records)?;

    let mut manifest = RunManifest::new("label", args)?;
    manifest.seeds = json!({ "base": args.seed, "per_record": "splitmix64(base, record index)" });
    manifest.inputs = vec![input];
    manifest.outputs = vec![args.out.clone()];
    manifest.write(&args.out, start.elapsed())?;

    let ents = targets(&records)?;
    let mean_ent = if ents.is_empty() {
        0.0
    } else {
        ents.iter().sum::<f64>() / ents.len() as f64
    };
    Ok(LabelSummary {
        count: records.len(),
        mean_ent,
    })
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_pc: f64,
    pub test_pc: f64,
    /// Present only with a validation split.
    pub val: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub best_epoch: usize,
    pub selection: &'static str,
    pub test_pc: Option<f64>,
    pub test_rmse: f64,
    pub log: Vec<LogRow>,
}

fn write_log(w: &mut dyn Write, rows: &[LogRow], with_val: bool) -> Result<()> {
    write!(w, "epoch\ttrain_loss\ttest_loss\ttrain_pc\ttest_pc")?;
    if with_val {
        write!(w, "\tval_loss\tval_pc")?;
    }
    writeln!(w)?;
    for r in rows {
        write!(w, "{}\t{}\t{}\t{}\t{}", r.epoch, r.train_loss, r.test_loss, r.train_pc, r.test_pc)?;
        if let Some((loss, pc)) = r.val {
            write!(w, "\t{loss}\t{pc}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn set_loss_pc(model: &LstmRegressor, set: &TrainingSet, delta: f64) -> Result<(f64, f64)> {
    let pred = predict_batch(model, set.features.view())?;
    let truth = set.targets.to_vec();
    Ok((
        mean_huber(&pred.raw, &truth, delta),
        pearson(&truth, &pred.raw).unwrap_or(f64::NAN),
    ))
}

pub fn train(args: &TrainArgs) -> Result<TrainSummary> {
    let start = Instant::now();
    let input = InputDigest::of(&args.data)?;
    let (_, records) = load_records(&args.data)?;
    if records.len() < 2 {
        bail!("{} holds {} records; training needs at least 2", args.data.display(), records.len());
    }
    let n_qubits = records[0].circuit.n_qubits();
    check_qubits(&records, n_qubits)?;

    let (train, test) =
        split(&records, args.split, derive_seed(args.seed, SPLIT_STREAM)).context("invalid --split")?;
    let (train, val) = match args.val {
        Some(v) => {
            let (t, v) = split(&train, 1.0 - v, derive_seed(args.seed, VAL_STREAM)).context("invalid --val")?;
            (t, Some(v))
        }
        None => (train, None),
    };
    if args.batch > train.len() {
        bail!("--batch {} exceeds the {} training records", args.batch, train.len());
    }

    let encoder = Encoder {
        n_qubits,
        max_steps: args.max_steps,
        placement: args.placement.into(),
        scale: args.scale,
    };
    let train_set = training_set(&encoder, &train)?;
    let test_set = training_set(&encoder, &test)?;
    let val_set = val.as_deref().map(|v| training_set(&encoder, v)).transpose()?;

    let model_config = ModelConfig {
        pooling: args.pooling.into(),
        ..ModelConfig::new(encoder.input_dim(), args.hidden, args.fc, args.max_steps)
    };
    let model = init_model(model_config, &mut stream(derive_seed(args.seed, INIT_STREAM)))?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        huber_delta: args.delta,
        adam: AdamConfig {
            lr: args.lr,
            ..AdamConfig::default()
        },
        hidden_dim: args.hidden,
        fc_dim: args.fc,
        pooling: args.pooling.into(),
        seed: derive_seed(args.seed, SHUFFLE_STREAM),
    };
    info!(
        "training on {} records ({} parameters), selecting on {} {} records, testing on {}",
        train.len(),
        model.param_count(),
        val.as_ref().map_or(test.len(), Vec::len),
        if val.is_some() { "validation" } else { "test" },
        test.len()
    );

    let selection_set = val_set.as_ref().unwrap_or(&test_set);
    let mut log = Vec::with_capacity(args.epochs);
    let mut test_metrics_err = None;
    let result = fit(model, &train_set, selection_set, &config, |row: &EpochLog, model| {
        let (test_loss, test_pc, val) = if val_set.is_some() {
            match set_loss_pc(model, &test_set, args.delta) {
                Ok((l, p)) => (l, p, Some((row.eval_loss, row.eval_pc))),
                Err(e) => {
                    test_metrics_err.get_or_insert(e);
                    (f64::NAN, f64::NAN, None)
                }
            }
        } else {
            (row.eval_loss, row.eval_pc, None)
        };
        info!(
            "epoch {}/{}: train loss {:.6}, test loss {:.6}, test Pc {:.4}",
            row.epoch, args.epochs, row.train_loss, test_loss, test_pc
        );
        log.push(LogRow {
            epoch: row.epoch,
            train_loss: row.train_loss,
            test_loss,
            train_pc: row.train_pc,
            test_pc,
            val,
        });
    })?;
    if let Some(e) = test_metrics_err {
        return Err(e);
    }

    let selection = if val.is_some() { "validation" } else { "test" };
    let test_truth = test_set.targets.to_vec();
    let test_pred = predict_batch(&result.best, test_set.features.view())?;
    let test_pc = pearson(&test_truth, &test_pred.raw).ok();
    let test_rmse = rmse(&test_truth, &test_pred.raw)?;

    let mut checkpoint = Checkpoint::new(encoder, result.best)?;
    checkpoint.training = json!({
        "train_config": config,
        "split": args.split,
        "val": args.val,
        "seed": args.seed,
        "selection": selection,
        "best_epoch": result.best_epoch,
        "best_selection_loss": result.best_eval_loss,
        "train_count": train.len(),
        "val_count": val.as_ref().map_or(0, Vec::len),
        "test_count": test.len(),
        "data_sha256": &input.sha256,
    });

    let mut outputs = vec![args.out.clone(), args.log.clone()];
    let mut staged = vec![Staged::new(&args.out)?, Staged::new(&args.log)?];
    staged[0].write_with(|w| Ok(save_checkpoint(w, &checkpoint)?))?;
    staged[1].write_with(|w| write_log(w, &log, val.is_some()))?;
    if let Some(path) = &args.test_out {
        let header = Header::new(json!({ "test_split_of_sha256": &input.sha256, "split": args.split, "seed": args.seed }));
        let mut s = Staged::new(path)?;
        s.write_with(|w| Ok(write_dataset(w, &header, &test)?))?;
        staged.push(s);
        outputs.push(path.clone());
    }
    for s in staged {
        s.commit()?;
    }

    let mut manifest = RunManifest::new("train", args)?;
    manifest.seeds = json!({
        "base": args.seed,
        "split": derive_seed(args.seed, SPLIT_STREAM),
        "val": derive_seed(args.seed, VAL_STREAM),
        "init": derive_seed(args.seed, INIT_STREAM),
        "shuffle": config.seed,
    });
    manifest.inputs = vec![input];
    manifest.outputs = outputs;
    manifest.write(&args.out, start.elapsed())?;

    Ok(TrainSummary {
        train_count: train.len(),
        val_count: val.as_ref().map_or(0, Vec::len),
        test_count: test.len(),
        best_epoch: result.best_epoch,
        selection,
        test_pc,
        test_rmse,
        log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SubsampleSummary {
    median: f64,
    fraction_above_0_90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ReportDocument<'a> {
    #[serde(flatten)]
    metrics: &'a MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    subsample_summary: Option<SubsampleSummary>,
}

fn load_model(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(open(path)?).with_context(|| format!("cannot load model {}", path.display()))
}

fn predict_records(checkpoint: &Checkpoint, records: &[Record]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_qubits(records, checkpoint.encoder.n_qubits)?;
    let x = features(&checkpoint.encoder, records)?;
    let p = predict_batch(&checkpoint.model, x.view())?;
    Ok((p.raw, p.clamped))
}

pub fn eval(args: &EvalArgs) -> Result<MetricsReport> {
    let start = Instant::now();
    let inputs = vec![InputDigest::of(&args.model)?, InputDigest::of(&args.data)?];
    let checkpoint = load_model(&args.model)?;
    let (_, records) = load_records(&args.data)?;
    let truth = targets(&records)?;
    let (raw, clamped) = predict_records(&checkpoint, &records)?;
    let subsample = if args.subsample_groups > 0 {
        if args.group_size > records.len() {
            bail!("--group-size {} exceeds the {} records", args.group_size, records.len());
        }
        Some(SubsampleSpec {
            group_size: args.group_size,
            repetitions: args.subsample_groups,
            seed: args.seed,
        })
    } else {
        None
    };
    let report = evaluate(&truth, &raw, subsample, false)?;
    let doc = ReportDocument {
        metrics: &report,
        subsample_summary: report.subsample.as_ref().map(|s| SubsampleSummary {
            median: s.median(),
            fraction_above_0_90: s.fraction_above(0.90),
        }),
    };

    let scatter = args.scatter.clone().unwrap_or_else(|| {
        let mut name = args.report.as_os_str().to_owned();
        name.push(".scatter.tsv");
        PathBuf::from(name)
    });
    let mut report_out = Staged::new(&args.report)?;
    report_out.write_with(|w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        writeln!(w)?;
        Ok(())
    })?;
    let mut scatter_out = Staged::new(&scatter)?;
    scatter_out.write_with(|w| {
        writeln!(w, "id\ttrue\tpredicted\tpredicted_clamped")?;
        for (((r, t), p), c) in records.iter().zip(&truth).zip(&raw).zip(&clamped) {
            writeln!(w, "{}\t{t}\t{p}\t{c}", r.id)?;
        }
        Ok(())
    })?;
    report_out.commit()?;
    scatter_out.commit()?;

    let mut manifest = RunManifest::new("eval", args)?;
    manifest.seeds = json!({ "subsample": args.seed });
    manifest.inputs = inputs;
    manifest.outputs = vec![args.report.clone(), scatter];
    manifest.write(&args.report, start.elapsed())?;
    Ok(report)
}

pub fn predict(args: &PredictArgs) -> Result<usize> {
    let start = Instant::now();
    let inputs = vec![InputDigest::of(&args.model)?, InputDigest::of(&args.input)?];
    let checkpoint = load_model(&args.model)?;
    let (_, records) = load_records(&args.input)?;
    let (raw, clamped) = if records.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        predict_records(&checkpoint, &records)?
    };
    write_atomic(&args.out, |w| {
        writeln!(w, "id\tpredicted\tpredicted_clamped")?;
        for ((r, p), c) in records.iter().zip(&raw).zip(&clamped) {
            writeln!(w, "{}\t{p}\t{c}", r.id)?;
        }
        Ok(())
    })?;

    let mut manifest = RunManifest::new("predict", args)?;
    manifest.inputs = inputs;
    manifest.outputs = vec![args.out.clone()];
    manifest.write(&args.out, start.elapsed())?;
    Ok(records.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTableRow {
    pub n_qubits: usize,
    pub sample_count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Circuit for position `k` of the qubit list, and the sweep seed used with it.
pub fn convergence_circuit(args: &ConvergenceArgs, k: usize) -> Result<(Circuit, u64)> {
    let n = args.qubits[k];
    let circuit = generate_gate_strategy(n, args.gates, &mut stream(derive_seed(args.seed, 2 * k as u64)))?;
    Ok((circuit, derive_seed(args.seed, 2 * k as u64 + 1)))
}

pub fn convergence(args: &ConvergenceArgs) -> Result<Vec<ConvergenceTableRow>> {
    let start = Instant::now();
    if args.qubits.is_empty() || args.sample_counts.is_empty() {
        bail!("--qubits and --sample-counts must not be empty");
    }
    let mut table = Vec::new();
    for (k, &n) in args.qubits.iter().enumerate() {
        let (circuit, seed) = convergence_circuit(args, k)?;
        info!("{n} qubits: {} gates, {} CNOT", circuit.len(), circuit.cnot_count());
        for row in convergence_sweep(&circuit, &args.sample_counts, args.repetitions, seed)? {
            table.push(ConvergenceTableRow {
                n_qubits: n,
                sample_count: row.sample_count,
                mean: row.mean,
                std: row.std,
            });
        }
    }
    write_atomic(&args.out, |w| {
        writeln!(w, "n_qubits\tsample_count\tmean\tstd")?;
        for r in &table {
            writeln!(w, "{}\t{}\t{}\t{}", r.n_qubits, r.sample_count, r.mean, r.std)?;
        }
        Ok(())
    })?;

    let mut manifest = RunManifest::new("convergence", args)?;
    manifest.seeds = json!({
        "base": args.seed,
        "circuit": "splitmix64(base, 2k) for the k-th qubit count",
        "sweep": "splitmix64(base, 2k + 1)",
    });
    manifest.outputs = vec![args.out.clone()];
    manifest.write(&args.out, start.elapsed())?;
    Ok(table)
}
