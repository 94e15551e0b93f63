from .checkpoint import Checkpoint, ModelKind, Scope, load_checkpoint, save_checkpoint
from .config import ClassifierConfig, SegmenterConfig
from .training import (
    predict_masks,
    predict_region,
    predict_segmentation,
    train_classifier,
    train_segmenter,
)
