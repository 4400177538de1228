"""Curvature and twist profiles used by the scenario catalogue and JSON specs.

Each profile is a vectorized function of arc length.  ``profile_from_dict``
turns a small JSON object into such a function.
"""

from __future__ import annotations

import numpy as np

__all__ = ["bump", "sawtooth", "oscillating", "constant", "profile_from_dict"]


def constant(value: float):
    return lambda s: np.full(np.shape(s), float(value))


def bump(amplitude: float, length: float, start: float = 0.0):
    """amplitude * sin^2(pi (s - start) / length): Lipschitz, vanishing at both ends."""
    return lambda s: amplitude * np.sin(np.pi * (np.asarray(s) - start) / length) ** 2


def sawtooth(amplitude: float = 1.0, period: float = 1.0):
    """+amplitude and -amplitude alternating on consecutive intervals of length ``period``."""
    return lambda s: np.where(np.floor(np.asarray(s) / period) % 2 == 0, amplitude, -amplitude)


def oscillating(amplitude: float = 1.0):
    """Alternating +-amplitude with 2n equal pieces on ((n-1) pi, n pi), n >= 1."""

    def f(s):
        s = np.asarray(s, dtype=float)
        n = np.floor(s / np.pi) + 1
        piece = np.floor((s - (n - 1) * np.pi) / (np.pi / (2 * n)))
        return np.where(piece % 2 == 0, amplitude, -amplitude)

    return f


def sinusoid(amplitude: float, rate: float, phase: float = 0.0):
    return lambda s: amplitude * np.cos(rate * np.asarray(s) + phase)


def profile_from_dict(d) -> callable:
    """Build a profile from ``{"kind": ..., ...}`` or a bare number."""
    if isinstance(d, (int, float)):
        return constant(d)
    kind = d["kind"]
    if kind == "constant":
        return constant(d.get("value", 0.0))
    if kind == "bump":
        return bump(d["amplitude"], d["length"], d.get("start", 0.0))
    if kind == "sawtooth":
        return sawtooth(d.get("amplitude", 1.0), d.get("period", 1.0))
    if kind == "oscillating":
        return oscillating(d.get("amplitude", 1.0))
    if kind == "cos":
        return sinusoid(d["amplitude"], d["rate"], d.get("phase", 0.0))
    if kind == "sin":
        return sinusoid(d["amplitude"], d["rate"], d.get("phase", 0.0) - np.pi / 2)
    raise ValueError(f"unknown profile kind {kind!r}")
