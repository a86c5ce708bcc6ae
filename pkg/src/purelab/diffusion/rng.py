"""Counter-based random streams with hierarchical coordinates.

Every stochastic draw in a purification or attack is addressed by
(example, run, purification step, denoise step, draw index) on top of a
seed and a domain.  Same coordinates reproduce the same Gaussian draw;
distinct coordinates give independent streams, which makes evaluation
results independent of batching and scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError

# domain separators: defense noise is never visible to the attacker
DEFENSE = 0
ATTACK = 1
DATA = 2

_COORD_CAP = 1 << 21  # per-field cap for step/denoise/draw packing


@dataclass(frozen=True)
class RngStream:
    """Seeded, domain-separated source of coordinate-addressed Gaussians."""

    seed: int
    domain: int = DEFENSE

    def _generator(self, example, run, step, denoise, draw):
        for name, v, cap in (
            ("example", example, 1 << 32),
            ("run", run, 1 << 32),
            ("step", step, _COORD_CAP),
            ("denoise", denoise, _COORD_CAP),
            ("draw", draw, _COORD_CAP),
        ):
            if not 0 <= v < cap:
                raise ConfigurationError(f"rng coordinate {name}={v} out of range")
        c1 = (np.uint64(step) << np.uint64(42)) | (np.uint64(denoise) << np.uint64(21)) | np.uint64(draw)
        c2 = (np.uint64(example) << np.uint64(32)) | np.uint64(run)
        key = np.array([np.uint64(self.seed & (2**64 - 1)), np.uint64(self.domain)], dtype=np.uint64)
        counter = np.array([0, c1, c2, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def normal(self, shape, *, example=0, run=0, step=0, denoise=0, draw=0, dtype=np.float64):
        """Standard-normal draw addressed by its coordinates.

        Drawn in float64 and cast, so the realized noise is identical in
        both precision modes up to the narrowing cast.
        """
        gen = self._generator(example, run, step, denoise, draw)
        return gen.standard_normal(shape).astype(dtype)

    def normal_batch(self, shape, examples, *, run=0, step=0, denoise=0, draw=0, dtype=np.float64):
        """Stack per-example draws: row b uses coordinate examples[b].

        Equal to looping normal() per example, so results do not depend on
        how examples are batched.
        """
        rows = [
            self.normal(shape, example=int(e), run=run, step=step, denoise=denoise, draw=draw, dtype=dtype)
            for e in examples
        ]
        return np.stack(rows, axis=0)
