use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use emoadapt_core::corpus::{
    extract_features, generate_synthetic_corpus, load_features, load_manifest, CorpusManifest, Partition, SynthConfig,
};
use emoadapt_core::model::{self, ModelBundle};
use emoadapt_core::seed::derive_seed;
use emoadapt_core::stats::{append_scores, aso as aso_test, bonferroni, dominance_matrix, group_scores, read_scores, ScoreRecord};
use emoadapt_core::trainer::evaluate_uar;

use crate::config::RunConfigFile;
use crate::error::CliError;

pub fn features(cfg: &RunConfigFile, manifests: &[std::path::PathBuf], cache: Option<&Path>, seed: u64, force: bool) -> Result<(), CliError> {
    let cache_root = cfg.cache_root(cache)?;
    for path in manifests {
        let manifest = load_manifest(path)?;
        let written = extract_features(&manifest, &cache_root, seed, force)?;
        println!(
            "{}: {written} written, {} already cached",
            manifest.corpus_id,
            manifest.samples.len() - written
        );
    }
    Ok(())
}

/// The manifest restricted to one partition, with the full label space.
pub fn partition_manifest(manifest: &CorpusManifest, partition: Partition) -> Result<CorpusManifest, CliError> {
    let samples = manifest.samples.iter().filter(|s| s.partition == partition).cloned().collect();
    Ok(CorpusManifest::new(
        manifest.corpus_id.clone(),
        &manifest.root,
        samples,
        Some(&manifest.label_space),
    )?)
}

pub struct EvalRequest<'a> {
    pub checkpoint: &'a Path,
    pub manifest: &'a Path,
    pub partition: Partition,
    pub domain: Option<&'a str>,
    pub cache: Option<&'a Path>,
    pub scores: Option<&'a Path>,
    pub model_id: &'a str,
    pub seed: u64,
}

pub fn eval(cfg: &RunConfigFile, req: EvalRequest<'_>) -> Result<(), CliError> {
    if req.scores.is_some() && req.partition != Partition::Test {
        return Err(CliError::Usage("score files record test UAR; use --partition test with --scores".into()));
    }
    let cache_root = cfg.cache_root(req.cache)?;
    let manifest = load_manifest(req.manifest)?;
    let bundle: ModelBundle<f32> = model::load(req.checkpoint)?;
    let domain = req.domain.unwrap_or(&manifest.corpus_id);
    let n_classes = bundle.domain(domain)?.n_classes;
    if n_classes != manifest.n_classes() {
        return Err(CliError::Data(format!(
            "domain {domain:?} has {n_classes} classes but corpus {:?} has {}",
            manifest.corpus_id,
            manifest.n_classes()
        )));
    }
    let part = partition_manifest(&manifest, req.partition)?;
    if part.samples.is_empty() {
        return Err(CliError::Data(format!(
            "corpus {:?} has no {} samples",
            manifest.corpus_id,
            req.partition.as_str()
        )));
    }
    let features = load_features(&part, &cache_root)?;
    let uar = evaluate_uar(&bundle, domain, &features, cfg.train.batch_size)?;
    println!("{} {} uar={uar:.6}", manifest.corpus_id, req.partition.as_str());
    if let Some(path) = req.scores {
        append_scores(
            path,
            &[ScoreRecord {
                model_id: req.model_id.to_string(),
                corpus_id: manifest.corpus_id.clone(),
                seed: req.seed,
                dev_uar: None,
                test_uar: uar,
            }],
        )?;
    }
    Ok(())
}

pub fn aso(
    cfg: &RunConfigFile,
    scores: &Path,
    model_a: &str,
    model_b: &str,
    corpus: Option<&str>,
    alpha: Option<f64>,
    adjust_n: usize,
) -> Result<(), CliError> {
    let sets = group_scores(&read_scores(scores)?);
    let corpora: BTreeSet<&String> = sets.keys().filter(|(m, _)| m == model_a).map(|(_, c)| c).collect();
    let corpora: Vec<&String> = match corpus {
        Some(c) => corpora.into_iter().filter(|x| *x == c).collect(),
        None => corpora.into_iter().filter(|c| sets.contains_key(&(model_b.to_string(), c.to_string()))).collect(),
    };
    if corpora.is_empty() {
        return Err(CliError::Data(format!("no corpus with scores for both {model_a:?} and {model_b:?}")));
    }
    let mut aso_cfg = cfg.stats.aso();
    aso_cfg.alpha = bonferroni(alpha.unwrap_or(cfg.stats.alpha), adjust_n)?;
    println!("corpus,eps_min,eps_w2,alpha_used,dominant");
    for c in corpora {
        let get = |m: &str| {
            sets.get(&(m.to_string(), c.clone()))
                .ok_or_else(|| CliError::Data(format!("no scores for model {m:?} on corpus {c:?}")))
        };
        let (a, b) = (get(model_a)?, get(model_b)?);
        a.validate()?;
        b.validate()?;
        let r = aso_test(&a.scores, &b.scores, &aso_cfg)?;
        println!("{c},{:.6},{:.6},{:.8},{}", r.eps_min, r.eps_w2, r.alpha_used, r.dominant());
    }
    Ok(())
}

pub fn dominance(cfg: &RunConfigFile, scores: &Path, alpha: Option<f64>, adjust_n: usize, out: Option<&Path>) -> Result<(), CliError> {
    let sets = group_scores(&read_scores(scores)?);
    let m = dominance_matrix(&sets, alpha.unwrap_or(cfg.stats.alpha), adjust_n, &cfg.stats.aso())?;
    let csv = m.to_csv();
    match out {
        Some(p) => fs::write(p, csv).map_err(|e| CliError::io(p, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn synth(
    out: &Path,
    corpora: usize,
    classes: usize,
    samples_per_class: usize,
    seed: u64,
    noise: f64,
    speakers: usize,
    prefix: &str,
) -> Result<(), CliError> {
    if corpora == 0 {
        return Err(CliError::Usage("--corpora must be at least 1".into()));
    }
    if !(noise >= 0.0) {
        return Err(CliError::Usage("--noise must be non-negative".into()));
    }
    for i in 0..corpora {
        let id = format!("{prefix}{i:02}");
        let mut sc = SynthConfig::new(&id, classes, samples_per_class, derive_seed(seed, "synth-corpus", i as u64));
        sc.noise_level = noise;
        sc.n_speakers = speakers;
        let dir = out.join(&id);
        generate_synthetic_corpus(&dir, &sc).map_err(|e| match e {
            emoadapt_core::corpus::CorpusError::Invalid(m) => CliError::Usage(m),
            other => other.into(),
        })?;
        println!("{}", dir.join("manifest.csv").display());
    }
    Ok(())
}
