"""Neural decision engine: binary encoding, scoring model, priority rules."""

from .model import (
    DecisionModel,
    ModelFormatError,
    ShapeError,
    TrainConfig,
    TrainingDivergedError,
    forward,
    init_model,
    load_model,
    loss_and_gradient,
    model_to_bytes,
    predict_access,
    save_model,
    train,
    zero_model,
)
from .policy import (
    EncodingError,
    LabeledDataset,
    SyntheticPolicy,
    binary_repr,
    encode_pair,
    generate_dataset,
)
from .rules import (
    ALLOW,
    DENY,
    AccessDecision,
    PriorityRule,
    RuleError,
    RuleParseError,
    apply_priority_rules,
    check_rule_uniqueness,
    decide_access,
    format_rules,
    parse_rules,
)

__all__ = [
    "ALLOW",
    "AccessDecision",
    "DENY",
    "DecisionModel",
    "EncodingError",
    "LabeledDataset",
    "ModelFormatError",
    "PriorityRule",
    "RuleError",
    "RuleParseError",
    "ShapeError",
    "SyntheticPolicy",
    "TrainConfig",
    "TrainingDivergedError",
    "apply_priority_rules",
    "binary_repr",
    "check_rule_uniqueness",
    "decide_access",
    "encode_pair",
    "format_rules",
    "forward",
    "generate_dataset",
    "init_model",
    "load_model",
    "loss_and_gradient",
    "model_to_bytes",
    "parse_rules",
    "predict_access",
    "save_model",
    "train",
    "zero_model",
]
