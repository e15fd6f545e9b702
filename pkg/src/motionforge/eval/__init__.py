"""Angle-space error curves, action classification and cross-validation protocols."""

from .angles import (
    DEFAULT_HORIZON,
    AngleSpaceMotion,
    angle_pairs,
    curve_auc,
    mean_angle_curve,
    mean_angle_trajectory,
    to_angle_space,
)
from .classify import (
    CLASSIFIER_FRAMES,
    ClassifierConfig,
    ClassifierReport,
    f1_scores,
    macro_f1,
    predict,
    train_action_classifier,
)
from .protocols import (
    CONDITIONS,
    REFERENCE_GAINS,
    FoldReport,
    augmentation_experiment,
    classifier_view,
    loso_splits,
    run_loso,
    run_stratified_kfold,
    sign_test,
    stratified_kfold_splits,
    stratified_subsample,
    synthesize_windows,
    window_key,
)
from .quality import (
    ValidationSet,
    angle_error_curve,
    critic_gradient_norm,
    relative_bone_deviation,
    rollout_quality,
)
from .reports import line_plot_svg, write_curve_csv, write_fold_csv, write_json, write_line_plot
