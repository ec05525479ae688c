"""Built-in sources, verification instance families and the bundled classifier."""

from importlib import resources

import numpy as np

from . import io
from .net import Dataset
from .rd_linear import LinearSource

FIG2_DIAG = (3.0, 2.0, 1.0)

RELU8_M = 8
RELU8_KEEP = 4
RELUQ_M = 6
RELUQ_K = 2

GMM_DIM = 10
GMM_COMPONENTS_PER_CLASS = 3
GMM_CENTER_SCALE = 1.0
GMM_LAYOUT_SEED = 20240
BUNDLED_MODEL = "mlp_gmm.json"


def fig2_source():
    """Weight prior and input covariance both diag(3, 2, 1)."""
    return LinearSource(np.array(FIG2_DIAG), np.array(FIG2_DIAG))


def relu_instance(seed, i, m=RELU8_M, lam_range=(0.2, 2.0)):
    """Instance ``i`` of a seeded family: Gaussian w and uniform diagonal covariance.

    Drawn from the substream ``(seed, i)`` so instances can be regenerated one
    at a time.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
    return rng.standard_normal(m), rng.uniform(*lam_range, size=m)


def relu_family(seed, count, m=RELU8_M):
    return [relu_instance(seed, i, m) for i in range(count)]


def gmm_centers():
    rng = np.random.default_rng(GMM_LAYOUT_SEED)
    return GMM_CENTER_SCALE * rng.standard_normal((2 * GMM_COMPONENTS_PER_CLASS, GMM_DIM))


def gmm_dataset(n, seed):
    """Two classes, each an equal mixture of unit-variance Gaussian blobs.

    The blob layout is fixed; ``seed`` (an int or a list of ints) only drives
    the draw of samples.
    """
    centers = gmm_centers()
    entropy = [int(s) for s in seed] if isinstance(seed, (list, tuple)) else [int(seed)]
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    labels = rng.integers(0, 2, size=n)
    comp = labels * GMM_COMPONENTS_PER_CLASS + rng.integers(0, GMM_COMPONENTS_PER_CLASS, size=n)
    X = centers[comp] + rng.standard_normal((n, GMM_DIM))
    return Dataset(X, labels.astype(np.int64))


def bundled_model(include_bias=True):
    """The shipped 10-64-64-2 ReLU classifier fitted to :func:`gmm_dataset`."""
    path = resources.files("rdcompress") / "data" / BUNDLED_MODEL
    with resources.as_file(path) as p:
        return io.load_model(p, include_bias=include_bias)
