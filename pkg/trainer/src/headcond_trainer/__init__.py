"""Desk-scale conditional GAN trainer for headcond datasets."""

from .config import COND_VECTOR_DIM, STYLE_DIM, TrainerConfig
from .data import TrainData
from .networks import Discriminator, Generator, MappingNetwork, StyleTable
from .sampling import masked_l2, sample_image_at
from .training import Trainer

__version__ = "0.1.0"
