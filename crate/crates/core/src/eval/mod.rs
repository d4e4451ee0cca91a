//! Metrics, dataset splits, cross-validation and the method comparison.

mod harness;
mod metrics;
mod split;

pub use harness::{
    compare_methods, crossval_method, evaluate_estimator, feature_set, kfold_cv, train_estimator,
    CvReport, CvResult, EvalReport, Estimator, History, Learned, Method, MethodConfigs,
    MethodReport, PlotPoint, TrainOutcome, CV_VALIDATION_FRACTION,
};
pub use metrics::{nrms, nrms_with, quantile_sorted, BoxStats, NrmsFormula};
pub use split::{fold_parts, indices_of, kfold_indices, split_dataset, Part, SplitSpec};
