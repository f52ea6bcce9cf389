use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};
use sflab_core::analysis::{
    cosine_probe, detect, detection_experiment, frequency_histogram, reconstruction_eval, Detection, DetectorModel,
};
use sflab_core::attacks::{attack, pgd_frequency, transfer_attack, AttackConfig, AttackDomain, TRANSFER_EPSILONS};
use sflab_core::data::{
    load_checkpoint, load_dataset, save_checkpoint, write_cifar10, write_report, Dataset, Report, ReportFormat,
    RunConfig, Splits, TrainingMeta, Value, CIFAR_EXTENT,
};
use sflab_core::models::{build_model, evaluate, train, ModelInstance, ModelSpec, Probe, Variant};

use crate::{Command, Common, DetectAction, Domain, Format, MixKind};

/// Budget of the reconstruction and detector experiments unless overridden.
const DEFAULT_ANALYSIS_EPSILON: f32 = 0.01;
const INTERP_GRID: [f32; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const SUBST_GRID: [f32; 5] = [0.0, 1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0];

struct Run {
    config: RunConfig,
    common: Common,
    splits: Splits,
}

impl Run {
    fn load(common: &Common) -> Result<Self> {
        let mut config =
            RunConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
        if let Some(seed) = common.seed {
            config.seed = seed;
            config.dataset.seed = seed;
        }
        if let Some(e) = common.epsilon {
            config.attack.epsilons = vec![e];
        }
        if let Some(eta) = common.eta {
            config.attack.eta = Some(eta);
        }
        if let Some(steps) = common.steps {
            config.attack.steps = steps;
        }
        if let Some(out) = &common.out {
            config.out = out.clone();
        }
        if let Some(alpha) = common.alpha {
            config.model.variants = vec![Variant::Interp { alpha }.to_string()];
            config.model.checkpoints.clear();
        }
        if let Some(beta) = common.beta {
            config.model.variants = vec![Variant::Subst { beta }.to_string()];
            config.model.checkpoints.clear();
        }
        config.validate()?;
        let splits = load_dataset(&config.dataset)?;
        Ok(Self {
            config,
            common: common.clone(),
            splits,
        })
    }

    fn format(&self) -> ReportFormat {
        match self.common.format {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }

    fn emit(&self, name: &str, report: &Report) -> Result<PathBuf> {
        let ext = match self.format() {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        };
        let path = self.config.out.join(format!("{name}.{ext}"));
        write_report(report, &path, self.format())?;
        Ok(path)
    }

    fn spec(&self, variant: Variant) -> ModelSpec {
        let d = &self.config.dataset;
        ModelSpec::new(variant, d.num_classes, d.height, d.width, self.config.seed)
    }

    fn fresh(&self, variant: Variant) -> Result<(ModelInstance, TrainingMeta)> {
        let mut model = build_model(&self.spec(variant))?;
        let cfg = self.config.train_config();
        let history = train(&mut model, &self.splits.train, &cfg).with_context(|| format!("training {variant}"))?;
        Ok((
            model,
            TrainingMeta {
                config: Some(cfg),
                history,
            },
        ))
    }

    /// Configured variants, loaded from checkpoints when given and trained
    /// otherwise.
    fn models(&self) -> Result<Vec<(Variant, ModelInstance)>> {
        let variants = self.config.model.parsed_variants()?;
        if self.config.model.checkpoints.is_empty() {
            return variants.into_iter().map(|v| Ok((v, self.fresh(v)?.0))).collect();
        }
        variants
            .into_iter()
            .zip(&self.config.model.checkpoints)
            .map(|(v, dir)| {
                let (m, _) = load_checkpoint(dir).with_context(|| format!("loading checkpoint {}", dir.display()))?;
                ensure!(
                    m.spec().variant == v,
                    "checkpoint {} holds {}, expected {v}",
                    dir.display(),
                    m.spec().variant
                );
                Ok((v, m))
            })
            .collect()
    }

    fn eval_set(&self) -> Dataset {
        match self.config.attack.limit {
            Some(n) => self.splits.test.take(n),
            None => self.splits.test.clone(),
        }
    }

    fn attack_configs(&self, domain: Option<Domain>) -> Vec<AttackConfig> {
        let mut configs = self.config.attack.configs();
        if let Some(d) = domain {
            let d = match d {
                Domain::Pixel => AttackDomain::Pixel,
                Domain::Frequency => AttackDomain::Frequency,
            };
            configs.iter_mut().for_each(|c| c.domain = d);
        }
        configs
    }

    /// The single budget of an analysis that defaults to 0.01.
    fn analysis_config(&self, domain: AttackDomain) -> AttackConfig {
        let epsilon = self.common.epsilon.unwrap_or(DEFAULT_ANALYSIS_EPSILON);
        let mut c = AttackConfig::new(domain, epsilon);
        c.steps = self.config.attack.steps;
        if let Some(eta) = self.config.attack.eta {
            c.eta = eta;
        }
        c
    }
}

fn label(v: Variant) -> String {
    v.to_string()
}

pub fn run(command: Command) -> Result<Vec<PathBuf>> {
    match command {
        Command::Train(c) => cmd_train(&Run::load(&c)?),
        Command::Attack { common, domain } => cmd_attack(&Run::load(&common)?, domain),
        Command::Transfer(c) => cmd_transfer(&Run::load(&c)?),
        Command::Mix {
            common,
            kind,
            alphas,
            betas,
        } => cmd_mix(&Run::load(&common)?, kind, alphas, betas),
        Command::Probe(c) => cmd_probe(&Run::load(&c)?),
        Command::Reconstruct(c) => cmd_reconstruct(&Run::load(&c)?),
        Command::Detect {
            action: DetectAction::Train(c),
        } => cmd_detect_train(&Run::load(&c)?),
        Command::Detect {
            action: DetectAction::Apply { common, detector },
        } => cmd_detect_apply(&Run::load(&common)?, &detector),
        Command::GenData(c) => cmd_gen_data(&Run::load(&c)?),
    }
}

fn cmd_train(run: &Run) -> Result<Vec<PathBuf>> {
    let mut report = Report::new(["model", "epochs", "final_loss", "train_acc", "val_acc", "test_acc"]);
    let mut written = Vec::new();
    for v in run.config.model.parsed_variants()? {
        let (model, meta) = run.fresh(v)?;
        let dir = run.config.out.join("checkpoints").join(label(v));
        save_checkpoint(&model, &meta, &dir)?;
        written.push(dir);
        let last = meta.history.last().context("no epochs recorded")?;
        let val = if run.splits.val.is_empty() {
            f32::NAN
        } else {
            evaluate(&model, &run.splits.val)?
        };
        report.push(vec![
            label(v).into(),
            meta.history.len().into(),
            last.loss.into(),
            last.accuracy.into(),
            val.into(),
            evaluate(&model, &run.splits.test)?.into(),
        ])?;
    }
    written.push(run.emit("train", &report)?);
    Ok(written)
}

fn cmd_attack(run: &Run, domain: Option<Domain>) -> Result<Vec<PathBuf>> {
    let data = run.eval_set();
    let mut report = Report::new(["model", "epsilon", "clean_acc", "attacked_acc"]);
    for (v, model) in run.models()? {
        for config in run.attack_configs(domain) {
            let batch = attack(&model, &data.images, &data.labels, &config)?;
            report.push(vec![
                label(v).into(),
                config.epsilon.into(),
                batch.clean_accuracy().into(),
                batch.attacked_accuracy().into(),
            ])?;
        }
    }
    Ok(vec![run.emit("attack", &report)?])
}

fn cmd_transfer(run: &Run) -> Result<Vec<PathBuf>> {
    let surrogate_variant: Variant = run.config.model.surrogate.as_deref().unwrap_or("baseline").parse()?;
    let (surrogate, _) = run.fresh(surrogate_variant)?;
    let targets = run.models()?;
    let target_refs: Vec<&ModelInstance> = targets.iter().map(|(_, m)| m).collect();
    let epsilons = match run.common.epsilon {
        Some(e) => vec![e],
        None => TRANSFER_EPSILONS.to_vec(),
    };
    let data = run.eval_set();
    let mut report = Report::new(["surrogate", "model", "epsilon", "clean_acc", "attacked_acc"]);
    for eps in epsilons {
        let mut config = AttackConfig::pixel(eps);
        config.steps = run.config.attack.steps;
        if let Some(eta) = run.config.attack.eta {
            config.eta = eta;
        }
        let rows = transfer_attack(&surrogate, &target_refs, &data.images, &data.labels, &config)?;
        for ((v, _), row) in targets.iter().zip(rows) {
            report.push(vec![
                label(surrogate_variant).into(),
                label(*v).into(),
                eps.into(),
                row.clean_accuracy.into(),
                row.attacked_accuracy.into(),
            ])?;
        }
    }
    Ok(vec![run.emit("transfer", &report)?])
}

fn cmd_mix(run: &Run, kind: MixKind, alphas: Vec<f32>, betas: Vec<f32>) -> Result<Vec<PathBuf>> {
    let (name, grid) = match kind {
        MixKind::Interp => ("interp", pick_grid(alphas, run.common.alpha, &INTERP_GRID)),
        MixKind::Subst => ("subst", pick_grid(betas, run.common.beta, &SUBST_GRID)),
    };
    let configs = run.attack_configs(None);
    let mut columns = vec!["kind".to_string(), "value".into(), "clean_acc".into()];
    columns.extend(configs.iter().map(|c| format!("attacked_acc@{}", c.epsilon)));
    let mut report = Report::new(columns);
    let data = run.eval_set();
    for value in grid {
        let variant = match kind {
            MixKind::Interp => Variant::Interp { alpha: value },
            MixKind::Subst => Variant::Subst { beta: value },
        };
        let (model, _) = run.fresh(variant)?;
        let mut row: Vec<Value> = vec![name.into(), value.into(), evaluate(&model, &data)?.into()];
        for config in &configs {
            row.push(
                attack(&model, &data.images, &data.labels, config)?
                    .attacked_accuracy()
                    .into(),
            );
        }
        report.push(row)?;
    }
    Ok(vec![run.emit("mix", &report)?])
}

fn pick_grid(list: Vec<f32>, single: Option<f32>, default: &[f32]) -> Vec<f32> {
    match (list.is_empty(), single) {
        (false, _) => list,
        (true, Some(v)) => vec![v],
        (true, None) => default.to_vec(),
    }
}

fn cmd_probe(run: &Run) -> Result<Vec<PathBuf>> {
    let data = run.eval_set();
    let mut columns = vec!["model".to_string(), "epsilon".into()];
    columns.extend(Probe::ALL.iter().map(|p| p.name().to_string()));
    let mut report = Report::new(columns);
    for (v, model) in run.models()? {
        for config in run.attack_configs(None) {
            let batch = attack(&model, &data.images, &data.labels, &config)?;
            let cos = cosine_probe(&model, &data.images, &batch.adversarial)?;
            let mut row: Vec<Value> = vec![label(v).into(), config.epsilon.into()];
            row.extend(Probe::ALL.iter().map(|&p| Value::Float(cos.get(p))));
            report.push(row)?;
        }
    }
    Ok(vec![run.emit("probe", &report)?])
}

fn cmd_reconstruct(run: &Run) -> Result<Vec<PathBuf>> {
    let data = run.eval_set();
    let config = run.analysis_config(AttackDomain::Pixel);
    let mut report = Report::new(["model", "view", "clean_acc", "adversarial_acc"]);
    for (v, model) in run.models()? {
        let batch = attack(&model, &data.images, &data.labels, &config)?;
        let t = reconstruction_eval(&model, &data, &batch.adversarial)?;
        for (view, clean, adv) in [
            ("ALL", t.all_clean, t.all_adversarial),
            ("LFR", t.low_clean, t.low_adversarial),
            ("HFR", t.high_clean, t.high_adversarial),
        ] {
            report.push(vec![label(v).into(), view.into(), clean.into(), adv.into()])?;
        }
    }
    Ok(vec![run.emit("reconstruct", &report)?])
}

fn detector_path(run: &Run, v: Variant) -> PathBuf {
    run.config.out.join(format!("detector-{}.json", label(v)))
}

fn cmd_detect_train(run: &Run) -> Result<Vec<PathBuf>> {
    let data = run.eval_set();
    let config = run.analysis_config(AttackDomain::Frequency);
    let mut report = Report::new(["model", "epsilon", "train_acc", "test_acc", "depth"]);
    let mut written = Vec::new();
    for (v, model) in run.models()? {
        let batch = pgd_frequency(&model, &data.images, &data.labels, &config)?;
        let clean = frequency_histogram(&data.images)?;
        let adv = frequency_histogram(&batch.adversarial)?;
        let result = detection_experiment(&clean, &adv, run.config.seed)?;
        let path = detector_path(run, v);
        std::fs::create_dir_all(&run.config.out)?;
        std::fs::write(&path, serde_json::to_string_pretty(&result.model)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        report.push(vec![
            label(v).into(),
            config.epsilon.into(),
            result.train_accuracy.into(),
            result.test_accuracy.into(),
            result.model.depth().into(),
        ])?;
    }
    written.push(run.emit("detect-train", &report)?);
    Ok(written)
}

fn cmd_detect_apply(run: &Run, detector: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(detector).with_context(|| format!("reading {}", detector.display()))?;
    let tree: DetectorModel = serde_json::from_str(&text).with_context(|| format!("parsing {}", detector.display()))?;
    let data = run.eval_set();
    let config = run.analysis_config(AttackDomain::Frequency);
    let mut report = Report::new(["model", "epsilon", "clean_flagged", "adversarial_flagged", "accuracy"]);
    for (v, model) in run.models()? {
        let batch = pgd_frequency(&model, &data.images, &data.labels, &config)?;
        let flagged = |images| -> Result<Vec<bool>> {
            Ok(frequency_histogram(images)?
                .iter()
                .map(|h| detect(&tree, h) == Detection::Adversarial)
                .collect())
        };
        let (clean, adv) = (flagged(&data.images)?, flagged(&batch.adversarial)?);
        let frac = |f: &[bool]| f.iter().filter(|&&b| b).count() as f64 / f.len().max(1) as f64;
        let hits = clean.iter().filter(|&&b| !b).count() + adv.iter().filter(|&&b| b).count();
        report.push(vec![
            label(v).into(),
            config.epsilon.into(),
            frac(&clean).into(),
            frac(&adv).into(),
            (hits as f64 / (clean.len() + adv.len()).max(1) as f64).into(),
        ])?;
    }
    Ok(vec![run.emit("detect-apply", &report)?])
}

fn cmd_gen_data(run: &Run) -> Result<Vec<PathBuf>> {
    let d = &run.config.dataset;
    if (d.height, d.width) != (CIFAR_EXTENT, CIFAR_EXTENT) {
        bail!(
            "gen-data writes CIFAR-10 binary records, which are {CIFAR_EXTENT}x{CIFAR_EXTENT}; the config asks for {}x{}",
            d.height,
            d.width
        );
    }
    if d.num_classes > 10 {
        bail!(
            "CIFAR-10 records hold labels 0..9; the config asks for {} classes",
            d.num_classes
        );
    }
    let mut report = Report::new(["split", "items", "file"]);
    let mut written = Vec::new();
    for (name, split) in [
        ("train", &run.splits.train),
        ("val", &run.splits.val),
        ("test", &run.splits.test),
    ] {
        let file = format!("{name}.bin");
        let path = run.config.out.join(&file);
        std::fs::create_dir_all(&run.config.out)?;
        write_cifar10(&path, split)?;
        written.push(path);
        report.push(vec![name.into(), split.len().into(), file.into()])?;
    }
    written.push(run.emit("gen-data", &report)?);
    Ok(written)
}
