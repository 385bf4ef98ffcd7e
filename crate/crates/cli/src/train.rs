use std::fs;
use std::path::{Path, PathBuf};

use emoadapt_core::corpus::{load_features, load_manifest, AvMapping, CorpusManifest};
use emoadapt_core::dsp::FeatureSample;
use emoadapt_core::model::{self, ArchitectureSpec, DomainDescriptor, ModelBundle, Regime};
use emoadapt_core::stats::{append_scores, ScoreRecord};
use emoadapt_core::trainer::{
    train_aggregated, train_multidomain, train_single, transfer_from, transfer_head_only, AggregateTarget, DomainData,
    RunRecord, TrainConfig, TrainEvent,
};

use crate::config::RunConfigFile;
use crate::error::CliError;
use crate::{AvArg, CommonTrain, TrainCommand};

struct Setup {
    train: TrainConfig,
    spec: ArchitectureSpec,
    corpora: Vec<(CorpusManifest, Vec<FeatureSample>)>,
    out_dir: PathBuf,
    scores: PathBuf,
    seeds: Vec<u64>,
    model_id: String,
    verbose: bool,
}

impl Setup {
    fn new(cfg: &RunConfigFile, c: CommonTrain, default_id: &str) -> Result<Self, CliError> {
        let mut train = cfg.train.clone();
        if let Some(v) = c.max_epochs {
            train.max_epochs = Some(v);
        }
        if let Some(v) = c.patience {
            train.patience_epochs = v;
        }
        if let Some(v) = c.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = c.steps_per_stage {
            train.round_robin_steps_per_stage = v;
        }
        if let Some(v) = c.eval_every {
            train.multidomain_eval_every = v;
        }
        train.validate()?;
        let spec = if c.tiny { ArchitectureSpec::tiny() } else { cfg.model.clone() };
        spec.validate()?;
        let cache_root = cfg.cache_root(c.cache.as_deref())?;
        let mut corpora = Vec::with_capacity(c.manifests.len());
        for path in &c.manifests {
            let manifest = load_manifest(path)?;
            let features = load_features(&manifest, &cache_root)?;
            corpora.push((manifest, features));
        }
        let model_id = c.model_id.unwrap_or_else(|| default_id.to_string());
        if model_id.is_empty() || model_id.contains(['/', '\\']) {
            return Err(CliError::Usage(format!("invalid model id {model_id:?}")));
        }
        Ok(Self {
            train,
            spec,
            corpora,
            out_dir: c.out_dir.unwrap_or_else(|| cfg.paths.out_dir.clone()).join(&model_id),
            scores: c.scores.unwrap_or_else(|| cfg.paths.scores.clone()),
            seeds: c.seeds.0,
            model_id,
            verbose: c.verbose,
        })
    }

    fn domains(&self) -> Result<Vec<DomainData>, CliError> {
        self.corpora
            .iter()
            .map(|(m, f)| DomainData::from_manifest(m, f.clone()).map_err(CliError::from))
            .collect()
    }

    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    fn observer(&self) -> impl FnMut(&TrainEvent) + use<> {
        let verbose = self.verbose;
        move |e: &TrainEvent| {
            if !verbose {
                return;
            }
            match e {
                TrainEvent::Epoch { domain, epoch, stage, dev_uar } => {
                    eprintln!("{domain} epoch {epoch} stage {stage} dev_uar {dev_uar:.4}")
                }
                TrainEvent::RoundEval { round, domain, dev_uar } => eprintln!("{domain} round {round} dev_uar {dev_uar:.4}"),
                TrainEvent::StageChange { stage, .. } => eprintln!("entering lr stage {stage}"),
                TrainEvent::Update { .. } => {}
            }
        }
    }

    /// Saves the checkpoint and run records and appends score lines.
    fn finish(&self, bundle: &ModelBundle<f32>, ckpt: &Path, mut records: Vec<(PathBuf, String, RunRecord)>) -> Result<(), CliError> {
        if let Some(dir) = ckpt.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        model::save(bundle, ckpt)?;
        let mut lines = Vec::with_capacity(records.len());
        for (path, corpus_id, record) in &mut records {
            record.checkpoint = Some(ckpt.display().to_string());
            if !record.final_test_uar.is_finite() || !record.final_dev_uar.is_finite() {
                return Err(CliError::Numeric(format!("non-finite UAR in run {}", path.display())));
            }
            let json = serde_json::to_string_pretty(record).expect("record serialises");
            fs::write(&*path, json + "\n").map_err(|e| CliError::io(path, e))?;
            lines.push(ScoreRecord {
                model_id: self.model_id.clone(),
                corpus_id: corpus_id.clone(),
                seed: record.seed,
                dev_uar: Some(record.final_dev_uar),
                test_uar: record.final_test_uar,
            });
        }
        if let Some(dir) = self.scores.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        append_scores(&self.scores, &lines)?;
        for l in &lines {
            println!(
                "{} {} seed {} dev {:.4} test {:.4}",
                l.model_id,
                l.corpus_id,
                l.seed,
                l.dev_uar.unwrap_or(f64::NAN),
                l.test_uar
            );
        }
        Ok(())
    }

    fn single_paths(&self, corpus: &str, seed: u64) -> (PathBuf, PathBuf) {
        let dir = self.out_dir.join(corpus);
        (dir.join(format!("seed{seed}.ckpt")), dir.join(format!("seed{seed}.json")))
    }
}

fn load_from(template: &str, seed: u64) -> Result<ModelBundle<f32>, CliError> {
    Ok(model::load(Path::new(&template.replace("{seed}", &seed.to_string())))?)
}

pub fn run(cfg: &RunConfigFile, cmd: TrainCommand) -> Result<(), CliError> {
    match cmd {
        TrainCommand::Scratch(c) => {
            let s = Setup::new(cfg, c, "scratch")?;
            for data in s.domains()? {
                for &seed in &s.seeds {
                    let tc = s.config(seed);
                    let mut bundle =
                        ModelBundle::build(s.spec.clone(), &[DomainDescriptor::new(&data.id, data.n_classes)], seed)?;
                    let record = train_single(&mut bundle, &data, Regime::Scratch, &tc, &mut s.observer())?;
                    let (ckpt, json) = s.single_paths(&data.id, seed);
                    s.finish(&bundle, &ckpt, vec![(json, data.id.clone(), record)])?;
                }
            }
        }
        TrainCommand::Head {
            common,
            from,
            source_domain,
        } => {
            let s = Setup::new(cfg, common, "head")?;
            for data in s.domains()? {
                for &seed in &s.seeds {
                    let tc = s.config(seed);
                    let mut bundle = load_from(&from, seed)?;
                    let record = if bundle.domain(&data.id).is_ok() {
                        train_single(&mut bundle, &data, Regime::HeadOnly, &tc, &mut s.observer())?
                    } else {
                        let source = match &source_domain {
                            Some(d) => d.clone(),
                            None => bundle
                                .descriptors()
                                .first()
                                .map(|d| d.id.clone())
                                .ok_or_else(|| CliError::Data("checkpoint has no domains".into()))?,
                        };
                        transfer_head_only(&mut bundle, &source, &data, &tc, &mut s.observer())?
                    };
                    let (ckpt, json) = s.single_paths(&data.id, seed);
                    s.finish(&bundle, &ckpt, vec![(json, data.id.clone(), record)])?;
                }
            }
        }
        TrainCommand::Adapters { common, from, reinit } => {
            let s = Setup::new(cfg, common, "adapters")?;
            for data in s.domains()? {
                for &seed in &s.seeds {
                    let tc = s.config(seed);
                    let mut bundle = load_from(&from, seed)?;
                    let record = if !reinit && bundle.domain(&data.id).is_ok() {
                        train_single(&mut bundle, &data, Regime::AdaptersAndHead, &tc, &mut s.observer())?
                    } else {
                        transfer_from(&mut bundle, &data, &tc, &mut s.observer())?
                    };
                    let (ckpt, json) = s.single_paths(&data.id, seed);
                    s.finish(&bundle, &ckpt, vec![(json, data.id.clone(), record)])?;
                }
            }
        }
        TrainCommand::Multidomain(c) => {
            let s = Setup::new(cfg, c, "multidomain")?;
            let domains = s.domains()?;
            let descriptors: Vec<DomainDescriptor> =
                domains.iter().map(|d| DomainDescriptor::new(&d.id, d.n_classes)).collect();
            for &seed in &s.seeds {
                let tc = s.config(seed);
                let mut bundle = ModelBundle::build(s.spec.clone(), &descriptors, seed)?;
                let records = train_multidomain(&mut bundle, &domains, &tc, &mut s.observer())?;
                let records = records
                    .into_iter()
                    .zip(&domains)
                    .map(|(r, d)| (s.out_dir.join(format!("seed{seed}.{}.json", d.id)), d.id.clone(), r))
                    .collect();
                s.finish(&bundle, &s.out_dir.join(format!("seed{seed}.ckpt")), records)?;
            }
        }
        TrainCommand::AggregateAv { target, common, aliases } => {
            let (target, default_id) = match target {
                AvArg::A => (AggregateTarget::Arousal, "aggregate-a"),
                AvArg::V => (AggregateTarget::Valence, "aggregate-v"),
                AvArg::Av => (AggregateTarget::Both, "aggregate-av"),
            };
            let s = Setup::new(cfg, common, default_id)?;
            let mut mapping = AvMapping::table_av();
            if let Some(p) = &aliases {
                mapping = mapping.with_alias_file(p)?;
            }
            for &seed in &s.seeds {
                let tc = s.config(seed);
                let (bundle, records) = train_aggregated(&s.corpora, target, &mapping, s.spec.clone(), &tc, &mut s.observer())?;
                let records = records
                    .into_iter()
                    .zip(bundle.descriptors())
                    .map(|(r, d)| (s.out_dir.join(format!("seed{seed}.{}.json", d.id)), d.id, r))
                    .collect();
                s.finish(&bundle, &s.out_dir.join(format!("seed{seed}.ckpt")), records)?;
            }
        }
    }
    Ok(())
}
