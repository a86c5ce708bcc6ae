"""Shared fixtures: the pinned toy stack (dataset + trained models).

Training runs once per machine and is cached under .purelab_cache (or
$PURELAB_CACHE); a fresh checkout retrains in under a minute.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from purelab.harness.presets import toy_stack


@pytest.fixture(scope="session")
def stack():
    return toy_stack()


@pytest.fixture(scope="session")
def wide_stack(stack):
    import numpy as np

    from purelab.purify import ModelContext

    ctx = stack.ctx
    return ModelContext(ctx.schedule, ctx.denoiser.astype(np.float64),
                        ctx.classifier.astype(np.float64))
