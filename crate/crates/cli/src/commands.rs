use std::path::{Path, PathBuf};

use uqpen::calibration::{calibrate, predictions, reliability_data, Summary};
use uqpen::dataset::{generate, load_csv, load_split, save_csv, save_split, split, Dataset, Fold, Hand};
use uqpen::model::{decode_checkpoint, save_checkpoint, Architecture, ParamVector, CHECKPOINT_VERSION, MAGIC};
use uqpen::posterior::{build_posterior, decode_posterior, save_posterior, SwagPosterior, POSTERIOR_VERSION};
use uqpen::rng::seeded_stream;
use uqpen::training::{train, train_ensemble, train_swag};
use uqpen::uncertainty::{default_thresholds, entropy_threshold_sweep, evaluate, Predictor};
use uqpen::Error;

use crate::bundle::{self, read_bundle, write_bundle};
use crate::config::{ExperimentConfig, HandSelector, Subset};
use crate::error::{CliError, CliResult};
use crate::svg;

pub const MODEL_FILE: &str = "model.uqw";
pub const HISTORY_FILE: &str = "history.csv";
pub const POSTERIOR_FILE: &str = "posterior.uqp";
pub const SWA_FILE: &str = "swa.uqw";

pub fn member_file(i: usize) -> String {
    format!("member_{i:02}.uqw")
}

pub fn member_history_file(i: usize) -> String {
    format!("history_{i:02}.csv")
}

pub fn load_data(cfg: &ExperimentConfig) -> CliResult<Dataset> {
    match &cfg.data.csv {
        Some(path) => Ok(load_csv(path)?),
        None => {
            cfg.data.generator.validate().map_err(|e| CliError::usage(format!("data.generator: {e}")))?;
            Ok(generate(&cfg.data.generator)?)
        }
    }
}

pub fn held_out_fold(cfg: &ExperimentConfig, ds: &Dataset) -> CliResult<Fold> {
    let s = match &cfg.split.manifest {
        Some(path) => load_split(path)?,
        None => split(ds, cfg.split.mode, cfg.split.folds, cfg.split.seed)?,
    };
    let fold = s
        .folds
        .get(cfg.split.fold)
        .cloned()
        .ok_or_else(|| CliError::usage(format!("split.fold {} out of range for {} folds", cfg.split.fold, s.folds.len())))?;
    if let Some(&bad) = fold.train.iter().chain(&fold.test).find(|&&i| i >= ds.len()) {
        return Err(Error::format(format!("split refers to sample {bad}, dataset has {}", ds.len())).into());
    }
    Ok(fold)
}

fn select(ds: &Dataset, indices: &[usize], hand: HandSelector) -> Vec<usize> {
    indices.iter().copied().filter(|&i| hand.admits(ds.samples()[i].hand)).collect()
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

/// Dataset, resolved architecture, and training indices for the configured
/// fold and `train_hand`.
fn training_inputs(cfg: &ExperimentConfig) -> CliResult<(Dataset, Architecture, Vec<usize>)> {
    let ds = load_data(cfg)?;
    let arch = cfg.arch.resolve(ds.class_count())?;
    let fold = held_out_fold(cfg, &ds)?;
    let idx = select(&ds, &fold.train, cfg.eval.train_hand);
    if idx.is_empty() {
        return Err(Error::invalid(format!("no training samples match train_hand {:?}", cfg.eval.train_hand)).into());
    }
    log::info!("training on {} samples (fold {}, hand {:?})", idx.len(), cfg.split.fold, cfg.eval.train_hand);
    Ok((ds, arch, idx))
}

fn validate_train(cfg: &ExperimentConfig) -> CliResult<()> {
    cfg.train.validate().map_err(|e| CliError::usage(format!("train: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSummary {
    pub samples: usize,
    pub right: usize,
    pub left: usize,
    pub manifest: PathBuf,
}

/// `<stem>.split.json` next to the dataset file.
pub fn manifest_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    csv.with_file_name(format!("{stem}.split.json"))
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> CliResult<GenSummary> {
    cfg.data.generator.validate().map_err(|e| CliError::usage(format!("data.generator: {e}")))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Error::io(
                parent,
                std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            )
            .into());
        }
    }
    let ds = generate(&cfg.data.generator)?;
    save_csv(&ds, out)?;
    let s = split(&ds, cfg.split.mode, cfg.split.folds, cfg.split.seed)?;
    let manifest = manifest_path(out);
    save_split(&s, &manifest)?;
    Ok(GenSummary {
        samples: ds.len(),
        right: ds.count_by_hand(Hand::Right),
        left: ds.count_by_hand(Hand::Left),
        manifest,
    })
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    validate_train(cfg)?;
    let (ds, arch, idx) = training_inputs(cfg)?;
    let (params, history) = train::<f64>(&arch, &ds, &idx, &cfg.train)?;
    ensure_dir(out)?;
    save_checkpoint(&params, &arch, out.join(MODEL_FILE))?;
    history.save_csv(out.join(HISTORY_FILE))?;
    Ok(())
}

pub fn cmd_swag_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    validate_train(cfg)?;
    cfg.swag.validate().map_err(|e| CliError::usage(format!("swag: {e}")))?;
    let scale = cfg.eval.scale.unwrap_or(1.0);
    let (ds, arch, idx) = training_inputs(cfg)?;
    let result = train_swag::<f64>(&arch, &ds, &idx, &cfg.train, &cfg.swag)?;
    let post = build_posterior(&result.stats, scale)?;
    ensure_dir(out)?;
    save_posterior(&post, &arch, out.join(POSTERIOR_FILE))?;
    save_checkpoint(&result.swa_params, &arch, out.join(SWA_FILE))?;
    result.history.save_csv(out.join(HISTORY_FILE))?;
    Ok(())
}

pub fn cmd_ensemble_train(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    validate_train(cfg)?;
    cfg.ensemble.validate().map_err(|e| CliError::usage(format!("ensemble: {e}")))?;
    let (ds, arch, idx) = training_inputs(cfg)?;
    let result = train_ensemble::<f64>(&arch, &ds, &idx, &cfg.train, &cfg.ensemble)?;
    ensure_dir(out)?;
    for (i, (p, h)) in result.members.iter().zip(&result.histories).enumerate() {
        save_checkpoint(p, &arch, out.join(member_file(i)))?;
        h.save_csv(out.join(member_history_file(i)))?;
    }
    Ok(())
}

pub enum Model {
    Swag(Architecture, SwagPosterior<f64>),
    Members(Architecture, Vec<ParamVector<f64>>),
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    Ok(std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Loads a weight checkpoint or posterior file, telling them apart by the
/// container version.
pub fn load_model_file(path: &Path) -> CliResult<Model> {
    let bytes = read(path)?;
    let version = (bytes.len() >= 8 && &bytes[..4] == MAGIC).then(|| u32::from_le_bytes(bytes[4..8].try_into().unwrap()));
    let wrap = |e: Error| -> CliError {
        match e {
            Error::Format(m) => Error::format(format!("{}: {m}", path.display())).into(),
            other => other.into(),
        }
    };
    match version {
        Some(POSTERIOR_VERSION) => {
            let (arch, post) = decode_posterior(&bytes).map_err(wrap)?;
            Ok(Model::Swag(arch, post))
        }
        Some(CHECKPOINT_VERSION) | None => {
            let (arch, p) = decode_checkpoint(&bytes).map_err(wrap)?;
            Ok(Model::Members(arch, vec![p]))
        }
        Some(v) => Err(Error::format(format!("{}: unsupported version {v}", path.display())).into()),
    }
}

/// A file, or a training output directory holding a posterior, ensemble
/// members, or a single model.
pub fn load_model(path: &Path) -> CliResult<Model> {
    if !path.is_dir() {
        return load_model_file(path);
    }
    let post = path.join(POSTERIOR_FILE);
    if post.is_file() {
        return load_model_file(&post);
    }
    let mut members = Vec::new();
    let mut arch: Option<Architecture> = None;
    for i in 0.. {
        let f = path.join(member_file(i));
        if !f.is_file() {
            break;
        }
        let Model::Members(a, mut p) = load_model_file(&f)? else {
            return Err(Error::format(format!("{} is not a weight checkpoint", f.display())).into());
        };
        if arch.as_ref().is_some_and(|prev| prev != &a) {
            return Err(Error::format(format!("{} has a different architecture", f.display())).into());
        }
        arch = Some(a);
        members.append(&mut p);
    }
    if let Some(a) = arch {
        return Ok(Model::Members(a, members));
    }
    let single = path.join(MODEL_FILE);
    if single.is_file() {
        return load_model_file(&single);
    }
    Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no model artifacts found")).into())
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, model: &Path, out: &Path) -> CliResult<Summary> {
    if cfg.eval.draws == 0 {
        return Err(CliError::usage("eval.draws must be at least 1"));
    }
    let ds = load_data(cfg)?;
    let fold = held_out_fold(cfg, &ds)?;
    let pool = match cfg.eval.subset {
        Subset::Test => &fold.test,
        Subset::Train => &fold.train,
    };
    let idx = select(&ds, pool, cfg.eval.eval_hand);
    if idx.is_empty() {
        return Err(Error::invalid(format!(
            "empty test set: no {:?} samples match eval_hand {:?}",
            cfg.eval.subset, cfg.eval.eval_hand
        ))
        .into());
    }
    let model = load_model(model)?;
    let rng = seeded_stream(cfg.eval.seed);
    let report = match &model {
        Model::Swag(arch, post) => {
            let post = match cfg.eval.scale {
                Some(s) => post.clone().with_scale(s)?,
                None => post.clone(),
            };
            evaluate(
                arch,
                Predictor::Swag {
                    posterior: &post,
                    draws: cfg.eval.draws,
                },
                &ds,
                &idx,
                &rng,
            )?
        }
        Model::Members(arch, members) => evaluate(arch, Predictor::Ensemble(members), &ds, &idx, &rng)?,
    };
    let table = calibrate(&predictions(&report), cfg.eval.bins)?;
    let sweep = entropy_threshold_sweep(&report, &default_thresholds(report.class_count()));
    Ok(write_bundle(out, &report, &table, &sweep)?)
}

pub const FIGURES: [&str; 6] = [
    "reliability.svg",
    "heatmap_aleatoric.svg",
    "heatmap_epistemic.svg",
    "heatmap_confusion.svg",
    "class_uncertainty.svg",
    "sweep.svg",
];

pub fn cmd_report(bundle_dir: &Path, out: &Path) -> CliResult<()> {
    let b = read_bundle(bundle_dir)?;
    ensure_dir(out)?;
    let confusion = bundle::LabeledMatrix {
        names: b.confusion.names.clone(),
        rows: b.confusion.rows.iter().map(|r| r.iter().map(|v| v / 100.0).collect()).collect(),
    };
    let scale = svg::HeatScale::shared(&[&b.aleatoric.rows, &b.epistemic.rows, &confusion.rows]);
    let figures = [
        svg::reliability(&b.calibration, b.summary.ece),
        svg::heatmap("Mean aleatoric matrix", &b.aleatoric, scale),
        svg::heatmap("Mean epistemic matrix", &b.epistemic, scale),
        svg::heatmap("Confusion (fraction of true class)", &confusion, scale),
        svg::class_bars(&b.classes),
        svg::sweep(&b.sweep, b.summary.accuracy),
    ];
    for (name, body) in FIGURES.iter().zip(figures) {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    let same_dir = match (bundle_dir.canonicalize(), out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if !same_dir {
        for f in bundle::FILES {
            let (from, to) = (bundle_dir.join(f), out.join(f));
            std::fs::copy(&from, &to).map_err(|e| Error::io(&to, e))?;
        }
    }
    Ok(())
}

/// Reliability geometry straight from a calibration table, for callers that
/// skip the bundle files.
pub fn reliability_svg(table: &uqpen::calibration::CalibrationTable) -> String {
    let data = reliability_data(table);
    let bins: Vec<bundle::BinRow> = table
        .bins
        .iter()
        .map(|b| bundle::BinRow {
            lower: b.lower,
            upper: b.upper,
            count: b.count,
            confidence: b.confidence,
            accuracy: b.accuracy,
        })
        .collect();
    svg::reliability(&bins, data.ece)
}
