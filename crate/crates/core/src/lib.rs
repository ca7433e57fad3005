//! Maximum-entropy discrimination Markov networks for linear-chain sequence
//! labeling.
//!
//! Three model families share one training interface:
//!
//! - Gaussian MaxEnDNet, whose posterior mean is the M³N weight vector;
//! - Laplace MaxEnDNet, trained by alternating a variance-weighted max-margin
//!   solve with a coordinatewise variance update;
//! - L1-M³N, trained by projected subgradient onto an L1 ball.
//!
//! Around them sit a synthetic linear-chain CRF generator with a Gibbs
//! labeler, shrinkage and KL-norm analysis, a PAC-Bayes bound calculator,
//! and the dataset/model/CSV formats used by the `medn` command-line tool.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod chain;
pub mod curves;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod medn;
pub mod metrics;
pub mod model_file;
pub mod optimize;
pub mod synth;

pub use chain::{hamming_loss, ChainModel, FeatureSpec, Features, LabelSeq, SequenceInstance};
pub use error::{Error, Result};
pub use medn::{
    kl_norm, l1m3n_dual_check, laplace_log_z, laplace_log_z_grad, predict_mean, shrinkage_mean, train_gaussian,
    train_l1m3n, train_laplace, DualWeights, LaplaceConfig, Posterior, Prior,
};
pub use optimize::{
    l1_ball_project, l1_constrained_train, primal_objective, subgradient_train, train_with, Penalty, QuadRegularizer,
    SubgradConfig,
};
pub use synth::{gen_crf, gen_dataset, gen_features, gibbs_label, GeneratorConfig, GibbsSampler, TrueCrf};
