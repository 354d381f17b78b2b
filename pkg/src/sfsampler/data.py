"""Dataset CSV I/O and synthetic two-dimensional / three-dimensional datasets."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .core import ConfigError
from .targets import EmpiricalDataset

__all__ = ["DatasetFormatError", "load_csv", "save_csv", "format_rows", "synth_moons", "synth_scurve"]


class DatasetFormatError(ConfigError):
    pass


def _parse_float(token):
    value = float(token)
    if not math.isfinite(value):
        raise ValueError(token)
    return value


def load_csv(path) -> EmpiricalDataset:
    """Read one sample per row. A first row with any non-numeric field is a header."""
    path = Path(path)
    lines = path.read_text().splitlines()
    rows = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not rows:
        raise DatasetFormatError(f"{path}: file is empty")
    first = [tok.strip() for tok in rows[0][1].split(",")]
    try:
        [_parse_float(tok) for tok in first]
    except ValueError:
        rows = rows[1:]
        if not rows:
            raise DatasetFormatError(f"{path}: header but no data rows") from None
    d = None
    data = []
    for lineno, ln in rows:
        tokens = ln.split(",")
        if d is None:
            d = len(tokens)
        elif len(tokens) != d:
            raise DatasetFormatError(f"{path}: row {lineno} has {len(tokens)} fields, expected {d}")
        try:
            values = []
            for col, tok in enumerate(tokens, start=1):
                values.append(_parse_float(tok.strip()))
        except ValueError:
            raise DatasetFormatError(f"{path}: row {lineno}, column {col}: not a finite number: {tok.strip()!r}") from None
        data.append(values)
    return EmpiricalDataset(np.array(data, dtype=np.float64))


def format_rows(samples) -> str:
    """Comma-separated shortest round-trip decimals, one row per line."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in samples)


def save_csv(dataset, path) -> None:
    samples = dataset.samples if isinstance(dataset, EmpiricalDataset) else dataset
    Path(path).write_text(format_rows(samples), newline="\n")


def synth_moons(n=1000, noise_sd=0.05, rng=None) -> EmpiricalDataset:
    """Two interleaving unit half-circles (upper arc at the origin, lower arc at (1, 0.5))."""
    if n < 2:
        raise ConfigError("moons needs at least 2 points")
    n_out = n // 2
    n_in = n - n_out
    a_out = np.linspace(0.0, np.pi, n_out)
    a_in = np.linspace(0.0, np.pi, n_in)
    outer = np.stack([np.cos(a_out), np.sin(a_out)], axis=1)
    inner = np.stack([1.0 - np.cos(a_in), 0.5 - np.sin(a_in)], axis=1)
    x = np.concatenate([outer, inner])
    if noise_sd > 0:
        if rng is None:
            raise ConfigError("a random stream is required for noisy datasets")
        x = x + noise_sd * rng.standard_normal(x.shape)
    return EmpiricalDataset(x)


def synth_scurve(n=1000, noise_sd=0.05, rng=None) -> EmpiricalDataset:
    """Three-dimensional S-shaped surface with height in [0, 2]."""
    if n < 1:
        raise ConfigError("S-curve needs at least 1 point")
    if rng is None:
        raise ConfigError("a random stream is required for the S-curve")
    u = rng.uniform(-1.5 * np.pi, 1.5 * np.pi, size=n)
    v = rng.uniform(0.0, 1.0, size=n)
    x = np.stack([np.sin(u), 2.0 * v, np.sign(u) * (np.cos(u) - 1.0)], axis=1)
    if noise_sd > 0:
        x = x + noise_sd * rng.standard_normal(x.shape)
    return EmpiricalDataset(x)
