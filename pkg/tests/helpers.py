"""Random tiny verification instances shared by the baseline and acceptance tests."""
from dataclasses import dataclass

import numpy as np

from vnncomp import fixtures
from vnncomp.onnx_rt import load_network
from vnncomp.specfmt import parse_vnnlib

import oracles


@dataclass
class TinyInstance:
    weights: list
    biases: list
    lower: np.ndarray
    upper: np.ndarray
    threshold: float
    net: object
    spec: object
    grid: str | None


def tiny_instance(rng: np.random.Generator) -> TinyInstance:
    """At most 3 inputs and 2 layers; property: can Y_0 reach a threshold over a box?"""
    n_in = int(rng.integers(1, 4))
    n_out = int(rng.integers(1, 3))
    hidden = [int(rng.integers(2, 7)) for _ in range(int(rng.integers(0, 2)))]
    w, b = fixtures.random_mlp(rng, [n_in] + hidden + [n_out])
    center = np.round(rng.uniform(-1, 1, n_in), 2)
    half = np.round(rng.uniform(0.05, 0.25, n_in), 2)
    lo, hi = center - half, center + half
    pts = oracles.grid_points(lo, hi)
    h = pts
    for k, (wk, bk) in enumerate(zip(w, b)):
        h = h @ wk.astype(np.float64) + bk
        if k < len(w) - 1:
            h = np.maximum(h, 0)
    ymin, ymax = h[:, 0].min(), h[:, 0].max()
    thr = float(np.round(ymax + rng.uniform(-0.5, 0.5) * max(ymax - ymin, 0.05), 4))
    net = load_network(fixtures.make_mlp(w, b))
    spec = parse_vnnlib(fixtures.box_property(lo, hi, n_out, [[f"(>= Y_0 {thr!r})"]]))
    return TinyInstance(w, b, lo, hi, thr, net, spec, oracles.grid_decision(w, b, lo, hi, thr))


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[number])
