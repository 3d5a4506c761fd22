"""Probe-based interpretation of a convolutional radio receiver.

Modules: ``numerics`` (conv, losses, special functions), ``linksim`` (toy
OFDM link), ``performer`` (receiver), ``probe`` (SNR regressors),
``interpret`` (global/local interpretations), ``mi`` (k-NN entropy, KSG,
NMI), ``dimred`` (PCA and dimension sweep), ``store``/``config``/``cli``
(persistence and the command line).
"""

from .config import RunConfig, load_config
from .dimred import PcaModel, dim_sweep, import_embedding, pca_fit, pca_transform
from .interpret import (
    GlobalInterpretation,
    LocalInterpretation,
    contribution_analysis,
    evaluate_mse,
    intra_instance_stats,
    kfold_interpret,
    local_interpretations,
    rank_units,
    seed_sweep,
)
from .linksim import LinkConfig, LinkDataset, apply_channel, generate_dataset, hard_decision, modulate
from .mi import KsgConfig, NmiEstimate, kl_entropy, ksg_mi, log_radius, nmi
from .performer import ActivationSet, Performer, PerformerConfig, tap_activations, train_performer
from .probe import ProbeConfig, ProbeModel, predict, train_probe

__version__ = "0.1.0"
