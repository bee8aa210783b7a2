"""Contrastive I2I GAN trainer for occupancy-grid map cleaning.

Trains on the paired PNG datasets the map simulator emits (treating the
two domains as unpaired) and exports generator weights in the .gsm format
the SLAM-side cleaner consumes.
"""

from .data import UnpairedGridDataset, load_grid_tensor
from .gsmio import export_weights, load_weights
from .losses import adversarial_loss, log_form_d_loss, patchwise_contrastive_loss
from .networks import Generator, PatchDiscriminator, ProjectionHead, init_weights
from .presets import PRESETS, Layer, resnet_generator
from .reference import reference_forward
from .selection import select_patch_indices, select_patches_qs
from .train import TrainConfig, Trainer, train

__version__ = "0.1.0"
