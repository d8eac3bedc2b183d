use std::fs;
use std::path::Path;
use std::time::Duration;

use conceptprobe_core::checkpoint::{load_checkpoint, save_checkpoint};
use conceptprobe_core::extraction::{ConceptSetRecord, DatasetExtraction};
use conceptprobe_core::naming::AssignmentRecord;
use conceptprobe_core::store::{read_dictionary, read_embeddings, read_records, read_reports, read_terms, write_jsonl};
use conceptprobe_core::verification::{ImageScoresRecord, JudgeKind, DEFAULT_PROMPT_TEMPLATE};
use conceptprobe_core::{
    aggregate_scores, assign_names, extract_dataset, verify_dataset, ConceptAssignment, Error, ExtractionConfig,
    JudgeConfig, Result, SaeHyperparams, SynthSpec, WidthPolicy,
};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{sibling, RunManifest};
use crate::{ExtractArgs, JudgeArg, KPreset, NameArgs, ReportArgs, SynthArgs, TrainArgs, VerifyArgs};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        m: a.m,
        n_terms: a.n_terms,
        n_images: a.n_images,
        active_per_image: a.active,
        noise_sigma: a.sigma,
        seed: a.seed,
    };
    let corpus = conceptprobe_core::synth::generate(&spec)?;
    corpus.write_to(&a.out_dir)?;
    let mut manifest = RunManifest::new("synth", &spec, Some(spec.seed));
    for name in [
        "images.embd",
        "terms.jsonl",
        "terms.embd",
        "reports.jsonl",
        "ground_truth.jsonl",
    ] {
        manifest.output(&a.out_dir.join(name))?;
    }
    manifest.write_beside(&a.out_dir.join("synth"))?;
    println!(
        "wrote {} images, {} terms to {}",
        spec.n_images,
        spec.n_terms,
        a.out_dir.display()
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let data = read_embeddings(&a.embeddings)?;
    let mut manifest_inputs = vec![a.embeddings.clone()];
    let (k, k_source) = match (a.k, a.k_preset) {
        (Some(k), _) => (k, "explicit"),
        (None, Some(KPreset::Expansion2)) => (2 * data.dim(), "expansion-2"),
        (None, preset) => {
            let Some(dict) = &a.dict else {
                return Err(Error::Config(
                    "give --k, --k-preset, or --dict to size the latent layer".into(),
                ));
            };
            manifest_inputs.push(dict.clone());
            let n = read_terms(dict)?.len();
            (
                n,
                if preset.is_some() {
                    "dict-size"
                } else {
                    "dict-size (default)"
                },
            )
        }
    };
    let width = if a.allow_undercomplete {
        WidthPolicy::AllowUndercomplete
    } else {
        WidthPolicy::Overcomplete
    };
    width.check(data.dim(), k)?;
    let hp = SaeHyperparams {
        lambda1: a.lambda1,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: a.seed,
    };
    let (model, log) = conceptprobe_core::train(&data, &hp, k, width)?;
    save_checkpoint(&model, Some(&hp), &a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&a.out, "log.jsonl"));
    write_jsonl(&log_path, &log.epochs)?;

    let config = json!({
        "k": k,
        "k_source": k_source,
        "m": data.dim(),
        "rows": data.rows(),
        "hyperparams": hp,
        "allow_undercomplete": a.allow_undercomplete,
        "adam": {
            "beta1": conceptprobe_core::train::ADAM_BETA1,
            "beta2": conceptprobe_core::train::ADAM_BETA2,
            "epsilon": conceptprobe_core::train::ADAM_EPSILON,
        },
    });
    let mut manifest = RunManifest::new("train", config, Some(a.seed));
    for p in &manifest_inputs {
        manifest.input(p)?;
    }
    manifest.output(&a.out)?;
    manifest.output(&log_path)?;
    manifest.write_beside(&a.out)?;
    if let Some(last) = log.last() {
        println!(
            "epoch {}: loss {:.6e} reconstruction {:.6e} active {:.4}",
            last.epoch, last.loss, last.reconstruction, last.active_fraction
        );
    }
    Ok(())
}

pub fn name(a: NameArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.checkpoint)?;
    let dict = read_dictionary(&a.terms, &a.term_embeddings)?;
    let assignment = assign_names(&model, &dict)?;
    write_jsonl(&a.out, assignment.to_records())?;

    let config = json!({
        "k": model.k(),
        "m": model.m(),
        "n_terms": dict.len(),
        "dead_neuron_norm": conceptprobe_core::naming::DEAD_NEURON_NORM,
    });
    let mut manifest = RunManifest::new("name", config, None);
    manifest.input(&a.checkpoint)?;
    manifest.input(&a.terms)?;
    manifest.input(&a.term_embeddings)?;
    manifest.output(&a.out)?;
    manifest.write_beside(&a.out)?;
    println!("dead neurons: {}", assignment.dead_count());
    Ok(())
}

pub fn extract(a: ExtractArgs) -> Result<()> {
    let data = read_embeddings(&a.embeddings)?;
    let (model, _) = load_checkpoint(&a.checkpoint)?;
    let terms = read_terms(&a.terms)?;
    let records: Vec<AssignmentRecord> = read_records(&a.assignment)?;
    let assignment = ConceptAssignment::from_records(&records, &terms)?;
    if assignment.len() != model.k() {
        return Err(Error::Dimension {
            what: "assignment length vs model width",
            expected: model.k(),
            actual: assignment.len(),
        });
    }
    let cfg = ExtractionConfig {
        tau: a.tau,
        top_k: a.top_k,
        dedupe_labels: !a.no_dedupe,
    };
    let out = extract_dataset(&data, &model, &assignment, &cfg)?;
    write_jsonl(&a.out, out.to_records(data.ids()))?;

    let mut manifest = RunManifest::new("extract", &cfg, None);
    manifest.input(&a.embeddings)?;
    manifest.input(&a.checkpoint)?;
    manifest.input(&a.assignment)?;
    manifest.input(&a.terms)?;
    manifest.output(&a.out)?;
    manifest.write_beside(&a.out)?;
    println!("excluded images: {} of {}", out.excluded.len(), data.rows());
    Ok(())
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    let records: Vec<ConceptSetRecord> = read_records(&a.concepts)?;
    let extraction = DatasetExtraction::from_records(records)?;
    let reports = read_reports(&a.reports)?;
    let terms = read_terms(&a.terms)?;
    let template = match &a.template {
        Some(p) => fs::read_to_string(p).map_err(io_err(p))?,
        None => DEFAULT_PROMPT_TEMPLATE.to_string(),
    };
    let cfg = JudgeConfig {
        kind: match a.judge {
            JudgeArg::Mock => JudgeKind::Mock,
            JudgeArg::Http => JudgeKind::Http,
        },
        endpoint: a.endpoint.clone(),
        temperature: a.temperature,
        timeout: Duration::from_secs(a.timeout_secs),
        concurrency: a.concurrency,
        retries: a.retries,
        template,
    };
    let run = verify_dataset(&extraction.sets, &reports, &terms, &cfg)?;
    let dropped_path = a.dropped.clone().unwrap_or_else(|| sibling(&a.out, "dropped.jsonl"));
    write_jsonl(&a.out, run.scores.iter().map(ImageScoresRecord::from))?;
    write_jsonl(&dropped_path, &run.dropped)?;

    let mut manifest = RunManifest::new("verify", &cfg, None);
    manifest.input(&a.concepts)?;
    manifest.input(&a.reports)?;
    manifest.input(&a.terms)?;
    if let Some(p) = &a.template {
        manifest.input(p)?;
    }
    manifest.output(&a.out)?;
    manifest.output(&dropped_path)?;
    manifest.write_beside(&a.out)?;
    println!(
        "scored {} images ({} excluded upstream, {} dropped)",
        run.scores.len(),
        extraction.excluded.len(),
        run.dropped.len()
    );
    if cfg.kind == JudgeKind::Http && !run.dropped.is_empty() {
        return Err(Error::Judge(format!(
            "{} images dropped after judge failures; see {}",
            run.dropped.len(),
            dropped_path.display()
        )));
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<()> {
    let mut blocks = Vec::new();
    let mut manifest_inputs = Vec::new();
    for path in &a.scores {
        let lines: Vec<ImageScoresRecord> = read_records(path)?;
        let scores = lines
            .iter()
            .map(ImageScoresRecord::to_scores)
            .collect::<Result<Vec<_>>>()?;
        if scores.is_empty() {
            return Err(Error::Format(format!("{}: no scored images", path.display())));
        }
        let summary = aggregate_scores(&scores)?;
        blocks.push(json!({ "label": path.display().to_string(), "summary": summary }));
        manifest_inputs.push(path);
    }
    write_json(&a.out, &json!({ "summaries": blocks }))?;

    let mut manifest = RunManifest::new("report", json!({ "quantiles": "linear interpolation at p(n-1)" }), None);
    for p in manifest_inputs {
        manifest.input(p)?;
    }
    manifest.output(&a.out)?;
    manifest.write_beside(&a.out)?;
    println!("summarized {} score files", a.scores.len());
    Ok(())
}
