from gtct.toymodel.data import Item, SyntheticDataset, gen_synthetic
from gtct.toymodel.metrics import EditCounts, edit_distance
from gtct.toymodel.model import ModelConfig, ModelScorer, ToyModel, forward_joint
from gtct.toymodel.train import TrainConfig, TrainingDiverged, evaluate, train

__all__ = [
    "Item", "SyntheticDataset", "gen_synthetic", "EditCounts", "edit_distance",
    "ModelConfig", "ModelScorer", "ToyModel", "forward_joint",
    "TrainConfig", "TrainingDiverged", "evaluate", "train",
]
