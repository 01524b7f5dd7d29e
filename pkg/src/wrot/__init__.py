"""Robust Wasserstein distances with adversarial Mahalanobis ground metrics.

The package computes transport distances whose ground metric is chosen
adversarially from a constrained family (elementwise p-norm ball, KL ball
around a reference, doubly stochastic KL ball), all with closed-form inner
maximizers. On top of the distances sit a label-embedding training loss with
an exact simplex-tangent gradient, a linear softmax classifier trained with
it, and file/CLI plumbing.
"""

from .classifier import (
    EvalMetrics,
    SoftmaxModel,
    TrainConfig,
    TrainingDivergedError,
    TrainResult,
    evaluate,
    load_model,
    save_model,
    sgd_train,
)
from .data_io import (
    Dataset,
    load_dataset,
    load_embedding_file,
    load_embeddings,
    load_grouping,
    make_grouping,
    save_features,
    save_grouping,
    save_labels,
)
from .frank_wolfe import FWConfig, RotResult, gradient_wrt_plan, rot_distance, w22_distance
from .measures import (
    DiscreteMeasure,
    FeatureGrouping,
    TransportPlan,
    displacement_second_moment,
    grouped_second_moment,
    independent_coupling,
    make_measure,
)
from .metric_solvers import (
    AdversarialMetric,
    DSConfig,
    KLConfig,
    MetricSolverConfig,
    PNormConfig,
    adversarial_value,
    ds_metric,
    euclidean_metric,
    feature_selection_objective,
    feature_weights,
    kl_metric,
    pnorm_metric,
)
from .rot_loss import (
    LabelSpace,
    LossValue,
    RotLossConfig,
    rot_loss,
    rot_loss_gradient,
    smooth_target,
)
from .sinkhorn import (
    SinkhornConfig,
    SinkhornConvergenceError,
    entropic_ot,
    exact_ot_small,
    symmetric_scaling,
)

__version__ = "0.1.0"

__all__ = [
    "AdversarialMetric",
    "Dataset",
    "DiscreteMeasure",
    "DSConfig",
    "EvalMetrics",
    "FeatureGrouping",
    "FWConfig",
    "KLConfig",
    "LabelSpace",
    "LossValue",
    "MetricSolverConfig",
    "PNormConfig",
    "RotLossConfig",
    "RotResult",
    "SinkhornConfig",
    "SinkhornConvergenceError",
    "SoftmaxModel",
    "TrainConfig",
    "TrainingDivergedError",
    "TrainResult",
    "TransportPlan",
    "adversarial_value",
    "displacement_second_moment",
    "ds_metric",
    "entropic_ot",
    "euclidean_metric",
    "evaluate",
    "exact_ot_small",
    "feature_selection_objective",
    "feature_weights",
    "gradient_wrt_plan",
    "grouped_second_moment",
    "independent_coupling",
    "kl_metric",
    "load_dataset",
    "load_embedding_file",
    "load_embeddings",
    "load_grouping",
    "load_model",
    "make_grouping",
    "make_measure",
    "pnorm_metric",
    "rot_distance",
    "rot_loss",
    "rot_loss_gradient",
    "save_features",
    "save_grouping",
    "save_labels",
    "save_model",
    "sgd_train",
    "smooth_target",
    "symmetric_scaling",
    "w22_distance",
]
