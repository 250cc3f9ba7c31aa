"""Learning from label proportions: losses, bag training, and theory audits."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    Bag,
    DivergedLoss,
    LabeledDataset,
    LLPError,
    SimplexVector,
    derive_seed,
    make_simplex,
)
from .bagging import BagPlan, bag_proportions, gen_blobs, make_bags  # noqa: F401
from .losses import (  # noqa: F401
    EmbeddingBatch,
    LossParams,
    combined_loss,
    kl_proportion_loss,
    ssc_gradient,
    ssc_loss,
    tv_distance,
    tv_star_gradient,
    tv_star_loss,
)
from .model import (  # noqa: F401
    ModelParams,
    aggregate_predictions,
    backward,
    forward,
    init_params,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .metrics import ConfusionMatrix, confusion, weighted_prf  # noqa: F401
from .trainer import TrainConfig, TrainHistory, sweep, train, validation_score  # noqa: F401
from .theory import (  # noqa: F401
    BoundReport,
    ThresholdHypothesis,
    kl_slope_sequence,
    lipschitz_probe,
    pinsker_audit,
    theorem_mc_audit,
    theorem_rhs,
)
