//! Trains on a planted-dictionary corpus and reports how many planted
//! directions were recovered.
//!
//! `cargo run --release --example planted -- [batch_size] [epochs] [seed] [lambda1] [lr]`

use conceptprobe_core::synth::{generate, SynthSpec};
use conceptprobe_core::{
    assign_names, extract_dataset, train, verify_dataset, ExtractionConfig, JudgeConfig, SaeHyperparams, Verdict,
    WidthPolicy,
};

fn main() -> conceptprobe_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: u64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let spec = SynthSpec {
        m: 64,
        n_terms: 32,
        n_images: 2000,
        active_per_image: 3,
        noise_sigma: 0.01,
        seed: 1,
    };
    let corpus = generate(&spec)?;
    let data = corpus.image_matrix()?;
    let hp = SaeHyperparams {
        batch_size: arg(1, conceptprobe_core::sae::DEFAULT_BATCH_SIZE as u64) as usize,
        epochs: arg(2, 200) as usize,
        seed: arg(3, 1),
        lambda1: args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2e-3),
        learning_rate: args.get(5).and_then(|s| s.parse().ok()).unwrap_or(5e-5),
    };
    let start = std::time::Instant::now();
    let (model, log) = train(&data, &hp, spec.n_terms, WidthPolicy::AllowUndercomplete)?;
    let last = log.last().expect("at least one epoch");
    let energy: f64 = corpus.embeddings.iter().map(|v| v * v).sum::<f64>() / spec.n_images as f64;
    println!(
        "trained in {:.1?}: loss {:.4} recon {:.4} ({:.3} of mean ‖f‖²) active {:.3}",
        start.elapsed(),
        last.loss,
        last.reconstruction,
        last.reconstruction / energy,
        last.active_fraction
    );

    let dict = corpus.dictionary()?;
    let assignment = assign_names(&model, &dict)?;
    let recovered = (0..spec.n_terms)
        .filter(|&t| {
            assignment
                .labels
                .iter()
                .any(|l| l.term.as_ref().is_some_and(|a| a.index == t && a.similarity >= 0.8))
        })
        .count();
    println!("recovered {recovered}/{} planted terms at cosine ≥ 0.8", spec.n_terms);
    let mut best: Vec<f64> = (0..spec.n_terms)
        .map(|t| {
            let d = corpus.directions.row(t);
            model
                .decoder_weight
                .columns()
                .into_iter()
                .map(|c| c.dot(&d) / c.dot(&c).sqrt())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    best.sort_by(f64::total_cmp);
    println!(
        "best-column cosine per planted direction (sorted): {:?}",
        best.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    for top_k in [3, 6] {
        let cfg = ExtractionConfig {
            top_k: Some(top_k),
            ..ExtractionConfig::default()
        };
        let sets = extract_dataset(&data, &model, &assignment, &cfg)?;
        let run = verify_dataset(&sets.sets, &corpus.reports, &corpus.terms, &JudgeConfig::mock())?;
        let mean = run.scores.iter().map(|s| s.score(Verdict::Aligned)).sum::<f64>() / run.scores.len() as f64;
        println!(
            "top-{top_k}: {} scored, {} excluded, mean aligned {mean:.3}",
            run.scores.len(),
            sets.excluded.len()
        );
    }
    Ok(())
}
