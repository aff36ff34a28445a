//! One function per pipeline stage. Each reads its inputs, writes its
//! artifacts under the output directory and returns the paths it wrote.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ictogen::data::{
    ingest_csv, lopo_split, read_dataset, read_samples, segment, surrogate_generate, write_dataset,
    write_samples, Dataset, PatientRecord, Purpose, SurrogateConfig,
};
use ictogen::detect::{
    read_table, run_experiment, verify_table, ExperimentConfig, ForestConfig, PublishedClaims,
    Tolerances, PUBLISHED_TABLE_CSV,
};
use ictogen::features::{write_feature_csv, FeatureExtractor, SampleEntropyInput};
use ictogen::gan::{synthesize_set, ArchitectureConfig, GanTrainConfig, Trainer, TrainingData};
use ictogen::tensor::Checkpoint;
use ictogen::{EegSample, GeneratorWeights};
use log::{info, warn};

use crate::config::{key, optional, Key, RunConfig};
use crate::error::{core, CliError};

pub const SURROGATE_KEYS: &[Key] = &[
    key("patients", "4"),
    key("recordings_per_patient", "1"),
    key("recording_seconds", "3600"),
    key("seizures_per_recording", "4"),
    key("burst_amplitude", "4.0"),
    key("dataset_file", "dataset.eegd"),
];

pub const INGEST_KEYS: &[Key] = &[
    optional("signal"),
    optional("intervals"),
    key("patient", "1"),
    key("recording", "0"),
    optional("append_to"),
    key("dataset_file", "dataset.eegd"),
];

pub const TRAIN_KEYS: &[Key] = &[
    optional("dataset"),
    optional("patient"),
    key("width_scale", "1.0"),
    key("length_scale", "1.0"),
    key("kernel", "31"),
    key("lambda", "100"),
    key("lr_generator", "1e-4"),
    key("lr_discriminator", "4e-4"),
    key("beta1", "0"),
    key("beta2", "0.9"),
    key("batch_size", "100"),
    key("steps", "2000"),
    key("checkpoint_every", "0"),
    optional("resume"),
];

pub const GENERATE_KEYS: &[Key] = &[
    optional("checkpoint"),
    optional("dataset"),
    optional("patient"),
    key("count", "2000"),
];

pub const FEATURES_KEYS: &[Key] = &[
    optional("dataset"),
    optional("samples"),
    key("windows", "test"),
    key("sampen_input", "coefficients"),
    key("features_file", "features.csv"),
];

pub const EVALUATE_KEYS: &[Key] = &[
    optional("dataset"),
    optional("synthetic"),
    key("repeats", "15"),
    key("per_class", "2000"),
    key("trees", "100"),
    optional("max_depth"),
    key("exclusion_floor", "0.30"),
];

pub const VERIFY_KEYS: &[Key] = &[
    optional("table"),
    key("tol_totals", "0.15"),
    key("tol_difference", "0.1"),
    key("tol_p", "0.003"),
];

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.path("out")?;
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    Ok(out)
}

/// Writes the resolved configuration next to the outputs.
pub fn write_snapshot(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let path = out_dir(cfg)?.join(format!("{}.resolved.cfg", cfg.command));
    fs::write(&path, cfg.snapshot()).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn purpose(name: &str) -> Result<Purpose, CliError> {
    match name {
        "test" => Ok(Purpose::Test),
        "detector-train" => Ok(Purpose::DetectorTrain),
        "gan-train" => Ok(Purpose::GanTrain),
        other => Err(CliError::Usage(format!(
            "key `windows`: `{other}` is not one of test, detector-train, gan-train"
        ))),
    }
}

pub fn surrogate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let sc = SurrogateConfig {
        seed: cfg.get("seed")?,
        patients: cfg.get("patients")?,
        recordings_per_patient: cfg.get("recordings_per_patient")?,
        recording_seconds: cfg.get("recording_seconds")?,
        seizures_per_recording: cfg.get("seizures_per_recording")?,
        burst_amplitude: cfg.get("burst_amplitude")?,
        ..Default::default()
    };
    sc.validate().map_err(CliError::Usage)?;
    let path = out_dir(cfg)?.join(cfg.path("dataset_file")?);
    write_dataset(&surrogate_generate(&sc), &path).map_err(core)?;
    Ok(vec![path])
}

pub fn ingest(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let signal = cfg.path("signal")?;
    let intervals: Option<PathBuf> = cfg.opt("intervals")?;
    let patient: u32 = cfg.get("patient")?;
    let recording =
        ingest_csv(&signal, intervals.as_deref(), cfg.get("recording")?).map_err(core)?;
    let mut ds = match cfg.opt::<PathBuf>("append_to")? {
        Some(p) => read_dataset(&p).map_err(core)?,
        None => Dataset::default(),
    };
    ds.provenance.insert(
        format!("source/{patient}/{}", recording.id),
        signal.display().to_string(),
    );
    match ds.patients.iter_mut().find(|p| p.id == patient) {
        Some(p) if p.recordings.iter().any(|r| r.id == recording.id) => {
            return Err(CliError::Usage(format!(
                "patient {patient} already has recording {}",
                recording.id
            )))
        }
        Some(p) => p.recordings.push(recording),
        None => {
            ds.patients.push(PatientRecord {
                id: patient,
                recordings: vec![recording],
            });
            ds.patients.sort_by_key(|p| p.id);
        }
    }
    ds.validate().map_err(core)?;
    let path = out_dir(cfg)?.join(cfg.path("dataset_file")?);
    write_dataset(&ds, &path).map_err(core)?;
    Ok(vec![path])
}

pub fn train_gan(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ds = read_dataset(cfg.path("dataset")?).map_err(core)?;
    let patient: u32 = cfg.get("patient")?;
    let seed: u64 = cfg.get("seed")?;
    let steps: u64 = cfg.get("steps")?;
    let mut trainer = match cfg.opt::<PathBuf>("resume")? {
        Some(p) => {
            let mut t =
                Trainer::from_checkpoint(&Checkpoint::load(&p).map_err(core)?).map_err(core)?;
            t.config.steps = steps;
            info!("resuming at step {}", t.step());
            t
        }
        None => {
            let arch = ArchitectureConfig {
                kernel: cfg.get("kernel")?,
                ..ArchitectureConfig::scaled(cfg.get("width_scale")?, cfg.get("length_scale")?)
            };
            let tc = GanTrainConfig {
                lambda: cfg.get("lambda")?,
                beta1: cfg.get("beta1")?,
                beta2: cfg.get("beta2")?,
                lr_generator: cfg.get("lr_generator")?,
                lr_discriminator: cfg.get("lr_discriminator")?,
                batch_size: cfg.get("batch_size")?,
                steps,
                seed,
                checkpoint_every: cfg.get("checkpoint_every")?,
                ..Default::default()
            };
            Trainer::new(&arch, &tc).map_err(core)?
        }
    };
    let split = lopo_split(&ds, patient, seed).map_err(core)?;
    for w in &split.warnings {
        warn!("{w}");
    }
    let data = TrainingData::from_pairs(&split.train, &trainer.arch).map_err(core)?;
    let out = out_dir(cfg)?;
    let ckpt = out.join(format!("gan-p{patient}.ckpt"));
    let log_path = out.join(format!("gan-p{patient}.log.csv"));
    let every = trainer.config.checkpoint_every;
    let result = trainer.train(&data, |t, row| {
        if every > 0 && row.step % every == 0 {
            t.checkpoint().save(&ckpt)?;
        }
        Ok(())
    });
    // The log is kept even when training aborts on a non-finite loss.
    let resumed = trainer.log.first().is_some_and(|r| r.step > 1);
    let file = OpenOptions::new()
        .create(true)
        .append(resumed)
        .write(true)
        .truncate(!resumed)
        .open(&log_path)
        .map_err(|e| CliError::io(&log_path, e))?;
    let header = !resumed || file.metadata().map(|m| m.len() == 0).unwrap_or(true);
    let mut w = BufWriter::new(file);
    trainer
        .write_log(&mut w, header)
        .map_err(|e| CliError::io(&log_path, e))?;
    w.flush().map_err(|e| CliError::io(&log_path, e))?;
    result.map_err(core)?;
    trainer.checkpoint().save(&ckpt).map_err(core)?;
    Ok(vec![ckpt, log_path])
}

pub fn generate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let g = GeneratorWeights::from_checkpoint(
        &Checkpoint::load(cfg.path("checkpoint")?).map_err(core)?,
    )
    .map_err(core)?;
    let ds = read_dataset(cfg.path("dataset")?).map_err(core)?;
    let patient: u32 = cfg.get("patient")?;
    let pool = segment(ds.patient(patient).map_err(core)?, Purpose::GanTrain).interictal;
    let samples = synthesize_set(&g, &pool, cfg.get("count")?, cfg.get("seed")?).map_err(core)?;
    let path = out_dir(cfg)?.join(format!("synthetic-p{patient}.eegs"));
    write_samples(&samples, &path).map_err(core)?;
    Ok(vec![path])
}

pub fn features(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut windows: Vec<EegSample> = Vec::new();
    if let Some(p) = cfg.opt::<PathBuf>("dataset")? {
        let which = purpose(&cfg.get::<String>("windows")?)?;
        for rec in &read_dataset(p).map_err(core)?.patients {
            let seg = segment(rec, which);
            windows.extend(seg.ictal);
            windows.extend(seg.interictal);
        }
    }
    if let Some(p) = cfg.opt::<PathBuf>("samples")? {
        windows.extend(read_samples(p).map_err(core)?);
    }
    if windows.is_empty() {
        return Err(CliError::Usage(
            "`features` needs `dataset` or `samples` with windows".into(),
        ));
    }
    let input = match cfg.get::<String>("sampen_input")?.as_str() {
        "coefficients" => SampleEntropyInput::Coefficients,
        "subband" => SampleEntropyInput::ReconstructedSubband,
        other => {
            return Err(CliError::Usage(format!(
                "key `sampen_input`: `{other}` is not coefficients or subband"
            )))
        }
    };
    let fx = FeatureExtractor::new(input);
    let vectors = windows
        .iter()
        .map(|w| fx.extract(w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core)?;
    let warnings: u32 = vectors.iter().map(|v| v.warnings).sum();
    if warnings > 0 {
        warn!("{warnings} feature computations fell back to a cap or default");
    }
    let path = out_dir(cfg)?.join(cfg.path("features_file")?);
    let rows: Vec<_> = windows.iter().zip(&vectors).collect();
    let mut w = create(&path)?;
    write_feature_csv(&mut w, &rows).map_err(core)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(vec![path])
}

pub fn evaluate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let ds = read_dataset(cfg.path("dataset")?).map_err(core)?;
    let files = cfg.list("synthetic");
    if files.is_empty() {
        return Err(CliError::Usage(
            "`evaluate` needs the key `synthetic`".into(),
        ));
    }
    let mut pools: BTreeMap<u32, Vec<EegSample>> = BTreeMap::new();
    for f in &files {
        for s in read_samples(f).map_err(core)? {
            pools.entry(s.patient_id).or_default().push(s);
        }
    }
    let ec = ExperimentConfig {
        repeats: cfg.get("repeats")?,
        per_class: cfg.get("per_class")?,
        seed: cfg.get("seed")?,
        exclusion_floor: cfg.get("exclusion_floor")?,
        forest: ForestConfig {
            trees: cfg.get("trees")?,
            max_depth: cfg.opt("max_depth")?,
            ..Default::default()
        },
        jobs: cfg.get("jobs")?,
    };
    let report = run_experiment(&ds, &pools, &ec).map_err(core)?;
    report.check_consistency().map_err(core)?;
    for s in &report.skipped {
        warn!("patient {} skipped: {}", s.patient, s.reason);
    }
    let out = out_dir(cfg)?;
    let json = out.join("report.json");
    fs::write(&json, report.to_json().map_err(core)?).map_err(|e| CliError::io(&json, e))?;
    let csv = out.join("report.csv");
    let mut w = create(&csv)?;
    report
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&csv, e))?;
    let hist = out.join("histogram.csv");
    let mut w = create(&hist)?;
    report
        .histogram
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&hist, e))?;
    let svg = out.join("histogram.svg");
    fs::write(&svg, report.histogram.to_svg()).map_err(|e| CliError::io(&svg, e))?;
    if let Some(t) = &report.totals {
        println!(
            "baseline {:.2}%, synthetic {:.2}%, difference {:+.2} pp",
            100.0 * t.baseline,
            100.0 * t.synthetic,
            100.0 * t.difference
        );
    }
    Ok(vec![json, csv, hist, svg])
}

/// Prints one line per check; any failure becomes [`CliError::ChecksFailed`].
pub fn verify(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let rows = match cfg.opt::<PathBuf>("table")? {
        Some(p) => {
            let f = File::open(&p).map_err(|e| CliError::io(&p, e))?;
            read_table(f).map_err(core)?
        }
        None => read_table(PUBLISHED_TABLE_CSV.as_bytes()).map_err(core)?,
    };
    let tol = Tolerances {
        totals: cfg.get("tol_totals")?,
        difference: cfg.get("tol_difference")?,
        p_value: cfg.get("tol_p")?,
    };
    let checks = verify_table(rows, &PublishedClaims::default(), &tol).map_err(core)?;
    let mut failed = Vec::new();
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        if !c.passed {
            failed.push(c.name.to_string());
        }
    }
    if failed.is_empty() {
        Ok(Vec::new())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}
