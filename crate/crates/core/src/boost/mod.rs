//! Boosted decision trees and soft-cascade calibration.

pub mod adaboost;
pub mod cascade;
pub mod quantize;
pub mod tree;

pub use adaboost::{boost, predicts_positive, training_error, BoostOutput, BoostParams, TreeStat};
pub use cascade::{calibrate_cascade, disabled_cascade, running_scores, CascadeCalibration};
pub use quantize::{quantize, BinnedMatrix, FeatureBins, FeatureMatrix, NUM_BINS};
pub use tree::{leaf_score, train_tree, DecisionTree, TrainedTree, TreeNode};
