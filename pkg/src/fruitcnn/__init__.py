"""From-scratch numpy CNN for fruit image classification.

Layers with hand-written backward passes, Adam with bias correction, a
plateau learning-rate rule, image-folder loading and the five hidden-layer
case networks.
"""

from .data import Dataset, SplitSpec, batches, load_image_dir, one_hot, split, synth_dataset
from .gradcheck import gradient_check
from .network import Network, NetworkSpec, build_case, forward_full
from .optim import AdamState, LrSchedule, adam_step, lr_on_epoch_end
from .tensor import Prng
from .trainer import TrainConfig, TrainHistory, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Dataset", "LrSchedule", "Network", "NetworkSpec", "Prng", "SplitSpec",
    "TrainConfig", "TrainHistory", "adam_step", "batches", "build_case", "evaluate",
    "forward_full", "gradient_check", "load_image_dir", "lr_on_epoch_end", "one_hot",
    "split", "synth_dataset", "train",
]
