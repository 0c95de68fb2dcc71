"""Dual-layer adversarial synthesis of multivariate time series.

A recurrent autoencoder maps observation windows into a bounded latent
space; a first GAN generates fixed-length temporal feature vectors there,
a second GAN rebuilds latent sequences from those vectors, and the decoder
turns the result back into observation space. Training runs in three
phases (autoencoder pretraining, supervised latent-path pretraining, joint
adversarial training) and ships with a discriminative/predictive/t-SNE
evaluation suite.
"""

__version__ = "0.1.0"

from . import data, evaluation, nn
from .autoencoder import Decoder, Encoder, reconstruction_loss
from .data import (
    NormStats,
    RawSeries,
    TimeSeriesWindow,
    denormalize,
    fit_normalizer,
    load_csv,
    make_windows,
    normalize,
)
from .evaluation import (
    MetricsReport,
    discriminative_score,
    predictive_score,
    tsne_export,
)
from .extractor import TemporalFeatureExtractor, patch
from .latent_gan import (
    Discriminator1,
    Generator1,
    NoiseSequence,
    moving_average,
    sample_noise,
)
from .reconstructor import Discriminator2, Generator2
from .training import (
    Checkpoint,
    DlganModel,
    LossRecord,
    Trainer,
    TrainingConfig,
    gan_loss,
    synthesize,
)

__all__ = [
    "__version__",
    "data",
    "nn",
    "evaluation",
    "RawSeries",
    "NormStats",
    "TimeSeriesWindow",
    "load_csv",
    "fit_normalizer",
    "normalize",
    "denormalize",
    "make_windows",
    "Encoder",
    "Decoder",
    "reconstruction_loss",
    "TemporalFeatureExtractor",
    "patch",
    "NoiseSequence",
    "sample_noise",
    "moving_average",
    "Generator1",
    "Discriminator1",
    "Generator2",
    "Discriminator2",
    "TrainingConfig",
    "Trainer",
    "DlganModel",
    "Checkpoint",
    "LossRecord",
    "gan_loss",
    "synthesize",
    "MetricsReport",
    "discriminative_score",
    "predictive_score",
    "tsne_export",
]
