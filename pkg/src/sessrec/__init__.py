"""Session-based transformer recommender with optimized negative sampling."""

from . import config, data, evaluate, loss, model, sampler, tensor, train
from .data import Catalog, Event, PreparedDataset, Session, SessionBatch
from .evaluate import EvalResult, evaluate as evaluate_model, export_metrics
from .model import ModelConfig, ModelState
from .sampler import Granularity, NegativeSet, TopKSelection, topk_filter
from .tensor import Tensor
from .train import TrainReport, train as train_model

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "EvalResult",
    "Event",
    "Granularity",
    "ModelConfig",
    "ModelState",
    "NegativeSet",
    "PreparedDataset",
    "Session",
    "SessionBatch",
    "Tensor",
    "TopKSelection",
    "TrainReport",
    "config",
    "data",
    "evaluate",
    "evaluate_model",
    "export_metrics",
    "loss",
    "model",
    "sampler",
    "tensor",
    "topk_filter",
    "train",
    "train_model",
]
