use conceptprobe_core::rng::SplitMix64;
use conceptprobe_core::synth::generate;
use conceptprobe_core::{train, EmbeddingMatrix, SaeHyperparams, SynthSpec, WidthPolicy};
use ndarray::Array2;

fn planted() -> EmbeddingMatrix {
    generate(&SynthSpec {
        m: 64,
        n_terms: 32,
        n_images: 2000,
        active_per_image: 3,
        noise_sigma: 0.01,
        seed: 1,
    })
    .unwrap()
    .image_matrix()
    .unwrap()
}

fn mean_energy(data: &EmbeddingMatrix) -> f64 {
    let a = data.to_array();
    a.iter().map(|v| v * v).sum::<f64>() / a.nrows() as f64
}

#[test]
fn same_seed_gives_bit_identical_models_and_logs() {
    let data = planted();
    let hp = SaeHyperparams {
        epochs: 5,
        seed: 9,
        ..SaeHyperparams::default()
    };
    let (a, log_a) = train(&data, &hp, 64, WidthPolicy::Overcomplete).unwrap();
    let (b, log_b) = train(&data, &hp, 64, WidthPolicy::Overcomplete).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    let (c, _) = train(&data, &SaeHyperparams { seed: 10, ..hp }, 64, WidthPolicy::Overcomplete).unwrap();
    assert_ne!(a, c);
}

#[test]
fn defaults_reconstruct_planted_data_within_five_percent_of_energy() {
    let data = planted();
    let hp = SaeHyperparams::default();
    assert_eq!(hp.learning_rate, 5e-5);
    assert_eq!(hp.lambda1, 2e-3);
    let (_, log) = train(&data, &hp, 64, WidthPolicy::Overcomplete).unwrap();
    let last = log.last().unwrap();
    let energy = mean_energy(&data);
    assert!(
        last.reconstruction <= 0.05 * energy,
        "reconstruction {} vs energy {energy}",
        last.reconstruction
    );
}

#[test]
fn loss_without_sparsity_settles_monotonically() {
    // Nonnegative data on a 3-dim subspace of R^8, which a width-8 model can represent.
    let mut rng = SplitMix64::new(4);
    let basis = Array2::from_shape_simple_fn((3, 8), || rng.gaussian());
    let coeffs = Array2::from_shape_simple_fn((400, 3), || rng.uniform(0.0, 1.0));
    let values = coeffs.dot(&basis);
    let ids = (0..400).map(|i| format!("r{i}")).collect();
    let data = EmbeddingMatrix::from_array(ids, &values).unwrap();
    let hp = SaeHyperparams {
        lambda1: 0.0,
        learning_rate: 1e-3,
        batch_size: 32,
        epochs: 80,
        seed: 2,
    };
    let (_, log) = train(&data, &hp, 8, WidthPolicy::Overcomplete).unwrap();
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.loss).collect();
    for w in losses[5..].windows(2) {
        assert!(w[1] <= w[0] * 1.01, "loss rose from {} to {}", w[0], w[1]);
    }
    assert!(losses.last().unwrap() < &losses[5]);
}

#[test]
fn stronger_l1_gives_sparser_codes() {
    let data = planted();
    let run = |lambda1| {
        let hp = SaeHyperparams {
            lambda1,
            ..SaeHyperparams::default()
        };
        train(&data, &hp, 64, WidthPolicy::Overcomplete)
            .unwrap()
            .1
            .last()
            .unwrap()
            .active_fraction
    };
    let sparse = run(2e-2);
    let dense = run(2e-4);
    assert!(sparse <= dense, "active fraction {sparse} at 2e-2 vs {dense} at 2e-4");
}

#[test]
fn undercomplete_width_needs_opt_in() {
    let data = planted();
    let hp = SaeHyperparams {
        epochs: 1,
        ..SaeHyperparams::default()
    };
    let err = train(&data, &hp, 32, WidthPolicy::Overcomplete).unwrap_err();
    assert!(err.to_string().contains("k must be ≥ embedding dim"), "{err}");
    assert!(train(&data, &hp, 32, WidthPolicy::AllowUndercomplete).is_ok());
}

#[test]
fn exploding_learning_rate_is_a_numeric_error() {
    let data = planted();
    let hp = SaeHyperparams {
        learning_rate: 1e300,
        lambda1: 0.0,
        epochs: 20,
        ..SaeHyperparams::default()
    };
    match train(&data, &hp, 64, WidthPolicy::Overcomplete) {
        Err(e) => assert_eq!(e.kind(), conceptprobe_core::ErrorKind::Numeric),
        Ok(_) => panic!("expected a numeric abort"),
    }
}
