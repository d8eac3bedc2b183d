//! Concept discovery and verification over frozen vision-language embeddings.
//!
//! The pipeline has four stages, each communicating through plain files:
//!
//! 1. [`train`]: fit a sparse autoencoder (ReLU encoder, linear decoder,
//!    ℓ1 activation penalty) to image embeddings with Adam.
//! 2. [`naming`]: label every latent unit with the dictionary term whose text
//!    embedding has the highest cosine similarity to the unit's decoder column.
//! 3. [`extraction`]: turn an image's activations into its predicted concept
//!    set (threshold, dedupe, top-K, exclusion of empty sets).
//! 4. [`verification`]: judge every predicted concept against the paired
//!    report as aligned / unaligned / uncertain and score each image.
//!
//! [`synth`] builds planted-dictionary corpora with known ground truth so the
//! whole chain can be validated without pretrained encoders.

pub mod checkpoint;
pub mod error;
pub mod extraction;
pub mod naming;
pub mod rng;
pub mod sae;
pub mod store;
pub mod synth;
pub mod train;
pub mod verification;

pub use error::{Error, ErrorKind, Result};
pub use extraction::{extract, extract_dataset, Extracted, ExtractionConfig, PredictedConcept, PredictedConceptSet};
pub use naming::{
    assign_names, cosine_similarity, similarity_matrix, ConceptAssignment, NeuronLabel, SimilarityMatrix,
};
pub use sae::{SaeGradients, SaeHyperparams, SaeModel, WidthPolicy};
pub use store::{ConceptDictionary, ConceptTerm, EmbeddingMatrix, ReportCollection};
pub use synth::{SynthCorpus, SynthSpec};
pub use train::{adam_step, train, AdamState, EpochRecord, TrainLog};
pub use verification::{
    aggregate_scores, score_image, verdict, verify_dataset, ClassSummary, ImageScores, Judge, JudgeConfig, JudgeKind,
    ScoreSummary, Verdict, VerdictDistribution, VerdictRecord, VerificationRun,
};
