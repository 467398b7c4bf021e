//! Downstream classifier, sampling strategies and evaluation metrics.

pub mod frechet;
pub mod metrics;
pub mod model;
pub mod train;

pub use frechet::{frechet_distance, frechet_distance_with, gaussian_fit};
pub use metrics::{AllAccuracy, ConfusionMatrix, MetricsReport, ShotGroup, ShotThresholds};
pub use model::{
    argmax, balanced_softmax_loss, prior_from_counts, ClassifierModel, ClassifierState,
};
pub use train::{
    confusion_on, evaluate, stack_pixels, train_classifier, ClassifierConfig,
    ClassifierEnvironment, EpochRecord, Strategy, TrainingOutcome, ValidationMetric,
};
