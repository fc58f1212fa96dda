use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dpebm::accountant::{allocate_budget, calibrate_binning_sigma, calibrate_training_sigma, dp_to_gdp};
use dpebm::dataset::{clip_labels, load_csv};
use dpebm::harness::{run_experiment, shape_exports, write_report, write_shapes, ExperimentConfig, Registry};
use dpebm::postprocess::{edit, enforce_monotone, parse_bin_range};
use dpebm::{BudgetLedger, EditCommand, Model, PrivacyBudget, Schema, TrainConfig, Trainer, Value};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::config::{overlay, read_json_object};

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}
use crate::{AccountArgs, BenchArgs, Command, EditArgs, ExportShapesArgs, MonotonizeArgs, PredictArgs, TrainArgs};

pub fn dispatch(command: Command, explicit: &[String]) -> Result<()> {
    match command {
        Command::Train(a) => train(resolve(a, |a| a.config.clone(), explicit)?),
        Command::Predict(a) => predict(resolve(a, |a| a.config.clone(), explicit)?),
        Command::Account(a) => account(resolve(a, |a| a.config.clone(), explicit)?),
        Command::Edit(a) => edit_model(resolve(a, |a| a.config.clone(), explicit)?),
        Command::Monotonize(a) => monotonize(resolve(a, |a| a.config.clone(), explicit)?),
        Command::Bench(a) => bench(a, explicit),
        Command::ExportShapes(a) => export_shapes(resolve(a, |a| a.config.clone(), explicit)?),
    }
}

/// Applies the config file, if any, and echoes the result on `--print-config`.
fn resolve<T>(args: T, config: impl Fn(&T) -> Option<PathBuf>, explicit: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned + PrintConfig,
{
    let resolved = match config(&args) {
        Some(path) => overlay(&args, read_json_object(&path)?, explicit)?,
        None => args,
    };
    if resolved.print_config() {
        out!("{}", serde_json::to_string_pretty(&resolved)?);
    }
    Ok(resolved)
}

trait PrintConfig {
    fn print_config(&self) -> bool;
}

macro_rules! print_config {
    ($($t:ty),*) => {$(
        impl PrintConfig for $t {
            fn print_config(&self) -> bool {
                self.print_config
            }
        }
    )*};
}
print_config!(TrainArgs, PredictArgs, AccountArgs, EditArgs, MonotonizeArgs, ExportShapesArgs);

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| anyhow!("missing required flag --{flag} (or `{flag}` in --config)"))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Refuses to write over an input, or over an existing file without `--force`.
fn check_output(out: &Path, force: bool, inputs: &[&Path]) -> Result<()> {
    if inputs.iter().any(|i| same_file(out, i)) {
        bail!("refusing to write {} in place; choose a new output path", out.display());
    }
    if out.exists() && !force {
        bail!("{} already exists; pass --force to overwrite", out.display());
    }
    Ok(())
}

/// Like [`check_output`] for directories: an existing non-empty one needs `--force`.
fn check_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.is_file() {
        bail!("{} is a file, expected a directory", dir.display());
    }
    let non_empty = dir.is_dir()
        && fs::read_dir(dir)
            .with_context(|| format!("cannot read {}", dir.display()))?
            .next()
            .is_some();
    if non_empty && !force {
        bail!("{} is not empty; pass --force to write into it", dir.display());
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data_path = required(&a.data, "data")?;
    let schema_path = required(&a.schema, "schema")?;
    let out = required(&a.out, "out")?;
    check_output(out, a.force, &[data_path, schema_path])?;
    if let Some(dir) = &a.trace {
        check_output_dir(dir, a.force)?;
    }

    let schema: Schema<f64> = Schema::load(schema_path)?;
    let label = a
        .label
        .clone()
        .or_else(|| schema.label.as_ref().map(|l| l.column.clone()))
        .ok_or_else(|| anyhow!("no label column: pass --label or add `label` to the schema"))?;
    let task = a
        .task
        .or(schema.task)
        .ok_or_else(|| anyhow!("no task: pass --task or add `task` to the schema"))?;
    let bounds = match (a.label_min, a.label_max, &schema.label) {
        (Some(lo), Some(hi), _) => Some((lo, hi)),
        (None, None, Some(l)) => Some((l.min, l.max)),
        (None, None, None) => None,
        _ => bail!("--label-min and --label-max must be given together"),
    };
    let mut data = load_csv(data_path, &schema.features, &label)?;
    if let Some((lo, hi)) = bounds {
        data = clip_labels(data, lo, hi)?;
    }

    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        max_leaves: a.max_leaves,
        max_bins: a.max_bins,
        task,
        seed: a.seed,
    };
    let mut trainer = Trainer::new(cfg).trace(a.trace.is_some());
    if let Some(epsilon) = a.epsilon {
        trainer = trainer.private(PrivacyBudget::new(epsilon, a.delta, a.bin_fraction)?, a.accountant);
    }
    if let Some(sigma) = a.force_sigma {
        eprintln!("warning: --force-sigma set; the model carries no privacy guarantee");
        trainer = trainer.force_sigma(sigma);
    }
    let output = trainer.fit(&data)?;
    output.model.save(out)?;

    if let Some(dir) = &a.trace {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join("trace.jsonl");
        let mut w = std::io::BufWriter::new(fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        for step in &output.trace {
            serde_json::to_writer(&mut w, step)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }

    out!("wrote {} ({} rows, {} features, task {task})", out.display(), data.n_rows(), data.n_features());
    match (output.model.privacy(), &output.ledger_check) {
        (Some(p), Some(check)) => out!(
            "privacy: epsilon {} delta {} ({}), sigma_train {}, sigma_bin {}; ledger mu {} -> epsilon {} at delta {}",
            p.epsilon, p.delta, p.accountant, p.sigma_train, p.sigma_bin, check.mu, check.epsilon, a.delta
        ),
        _ => out!("privacy: none"),
    }
    if output.clamped_values > 0 {
        eprintln!(
            "warning: {} feature values lay outside their schema range and were clamped",
            output.clamped_values
        );
    }
    Ok(())
}

/// Reads the model's features from a CSV by header name; other columns are ignored.
fn read_rows(path: &Path, model: &Model) -> Result<Vec<Vec<Value<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let specs = model.feature_specs();
    let columns: Vec<usize> = specs
        .iter()
        .map(|s| {
            headers
                .iter()
                .position(|h| h == s.name)
                .ok_or_else(|| anyhow!("{} has no column `{}`", path.display(), s.name))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = specs
            .iter()
            .zip(&columns)
            .map(|(s, &c)| s.parse_value(record.get(c).unwrap_or("")))
            .collect::<dpebm::Result<Vec<_>>>()
            .with_context(|| format!("row {}", i + 1))?;
        rows.push(row);
    }
    Ok(rows)
}

fn predict(a: PredictArgs) -> Result<()> {
    let model_path = required(&a.model, "model")?;
    let data_path = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    check_output(out, a.force, &[model_path, data_path])?;
    let model = Model::load(model_path)?;
    let rows = read_rows(data_path, &model)?;

    let mut w = csv::Writer::from_path(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut header = vec!["prediction".to_string()];
    if a.explain {
        header.push("raw_score".into());
        header.push("intercept".into());
        header.extend(model.terms().iter().map(|t| format!("contrib:{}", t.name())));
    }
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        let raw = model.raw_score(row).with_context(|| format!("row {}", i + 1))?;
        let mut record = vec![model.link().apply(raw).to_string()];
        if a.explain {
            record.push(raw.to_string());
            record.push(model.intercept().to_string());
            record.extend(model.contributions(row)?.iter().map(|c| c.score.to_string()));
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    out!("wrote {} predictions to {}", rows.len(), out.display());
    Ok(())
}

fn account(a: AccountArgs) -> Result<()> {
    let epsilon = *required(&a.epsilon, "epsilon")?;
    let k = *required(&a.features, "features")?;
    let budget = PrivacyBudget::new(epsilon, a.delta, a.bin_fraction)?;
    let (bin, train) = allocate_budget(&budget);
    let sigma_train = calibrate_training_sigma(train, a.epochs, k, a.accountant)?;
    let sigma_bin = if a.bin_fraction > 0.0 {
        Some(calibrate_binning_sigma(bin, k, a.accountant)?)
    } else {
        None
    };

    let mut ledger = BudgetLedger::new();
    if let Some(s) = sigma_bin {
        for f in 0..k {
            ledger.record_gaussian(format!("bin/{f}"), s);
        }
    }
    for t in 0..a.epochs * k {
        ledger.record_gaussian(format!("train/{t}"), sigma_train);
    }
    let check = ledger.reconvert(epsilon, a.delta)?;
    let report = json!({
        "accountant": a.accountant,
        "epsilon": epsilon,
        "delta": a.delta,
        "epochs": a.epochs,
        "features": k,
        "iterations": a.epochs * k,
        "epsilon_bin": bin.epsilon,
        "delta_bin": bin.delta,
        "epsilon_train": train.epsilon,
        "delta_train": train.delta,
        "mu_train_phase": dp_to_gdp(train.epsilon, train.delta)?.mu(),
        "sigma_train": sigma_train,
        "sigma_bin": sigma_bin,
        "mu_per_iteration": 1.0 / sigma_train,
        "mu_total": check.mu,
        "epsilon_spent": check.epsilon,
        "delta_spent": check.delta,
    });
    if a.json {
        out!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for (key, value) in report.as_object().expect("object") {
            out!("{key:<18} {value}");
        }
    }
    Ok(())
}

fn edit_model(a: EditArgs) -> Result<()> {
    let model_path = required(&a.model, "model")?;
    let feature = required(&a.feature, "feature")?;
    let bins = parse_bin_range(required(&a.bins, "bins")?)?;
    let out = required(&a.out, "out")?;
    let cmd = match (a.set, a.add) {
        (Some(v), None) => EditCommand::set(feature.as_str(), bins, v),
        (None, Some(d)) => EditCommand::add(feature.as_str(), bins, d),
        _ => bail!("give exactly one of --set or --add"),
    };
    check_output(out, a.force, &[model_path])?;
    let model = Model::load(model_path)?;
    edit(&model, &cmd)?.save(out)?;
    out!("wrote {}", out.display());
    Ok(())
}

fn monotonize(a: MonotonizeArgs) -> Result<()> {
    let model_path = required(&a.model, "model")?;
    let feature = required(&a.feature, "feature")?;
    let dir = *required(&a.dir, "dir")?;
    let out = required(&a.out, "out")?;
    check_output(out, a.force, &[model_path])?;
    let model = Model::load(model_path)?;
    enforce_monotone(&model, feature, dir)?.save(out)?;
    out!("wrote {}", out.display());
    Ok(())
}

fn export_shapes(a: ExportShapesArgs) -> Result<()> {
    let model_path = required(&a.model, "model")?;
    let out = required(&a.out, "out")?;
    check_output_dir(out, a.force)?;
    let model = Model::load(model_path)?;
    let written = write_shapes(&shape_exports(&model), out)?;
    out!("wrote {} shape files to {}", written.len(), out.display());
    Ok(())
}

fn bench(a: BenchArgs, explicit: &[String]) -> Result<()> {
    let config_path = a
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("bench needs --config <experiment.json>"))?;
    let text = fs::read_to_string(config_path).with_context(|| format!("cannot read {}", config_path.display()))?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid experiment config {}", config_path.display()))?;
    let base = config_path.parent().unwrap_or(Path::new(""));
    if let Some(r) = &cfg.registry {
        cfg.registry = Some(base.join(r));
    }
    if let Some(o) = &cfg.output {
        cfg.output = Some(base.join(o));
    }
    let given = |flag: &str| explicit.iter().any(|f| f == flag);
    if given("out") {
        cfg.output = a.out.clone();
    }
    if given("dataset") {
        cfg.dataset = a.dataset.clone().expect("flag given");
    }
    if given("registry") {
        cfg.registry = a.registry.clone();
    }
    if given("repeats") {
        cfg.repeats = a.repeats.expect("flag given");
    }
    if given("seed") {
        cfg.seed = a.seed.expect("flag given");
    }
    if given("workers") {
        cfg.workers = a.workers;
    }
    if a.export_shapes {
        cfg.export_shapes = true;
    }
    if a.print_config {
        out!("{}", serde_json::to_string_pretty(&cfg)?);
    }
    cfg.validate()?;
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| anyhow!("missing report directory: pass --out or set `output`"))?;
    check_output_dir(&out, a.force)?;

    let registry_path = cfg
        .registry
        .clone()
        .unwrap_or_else(|| PathBuf::from("datasets/registry.json"));
    let source = Registry::load(&registry_path)?.resolve(&cfg.dataset)?;
    let data = source.load()?;
    let result = run_experiment(&cfg, &data, source.task)?;
    write_report(&result, &out)?;

    let metric = result.report.metric;
    for cell in &result.report.cells {
        let accountant = cell.accountant.map_or_else(|| "-".to_string(), |k| k.to_string());
        out!(
            "{:<12} {:<8} {metric} {:.4} ± {:.4}",
            cell.epsilon.to_string(),
            accountant,
            cell.mean,
            cell.std
        );
    }
    out!("wrote report to {}", out.display());
    Ok(())
}
