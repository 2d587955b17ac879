//! Training recipe: SGD with momentum under a linear-warmup + cosine
//! schedule, multi-view cross-entropy, top-k evaluation and last-k
//! aggregation.

mod config;
mod fit;
pub mod gradcheck;
mod metrics;
mod optim;
mod schedule;

pub use config::{Normalization, TrainConfig};
pub use fit::{batch_views, evaluate, train, train_with, val_views, views_per_epoch};
pub use gradcheck::{gradient_check, GradCheck};
pub use metrics::{aggregate_last_k, topk_accuracy, topk_hit, EpochRecord, Metrics, SummaryStats, TrainLog};
pub use optim::Sgd;
pub use schedule::lr_at;
