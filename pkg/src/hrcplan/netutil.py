"""Shared training machinery: Adam updates and JSON weight files.

Weight files hold row-major float lists at full repr precision, so a save/
load round trip is bit-exact.
"""

import json

import numpy as np

from .errors import ShapeMismatch


class Adam:
    """Adam on a flat list of parameter arrays, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ShapeMismatch("gradient list does not match parameter list")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def arrays_to_json(arrays: dict) -> dict:
    """{name: ndarray} -> JSON-ready {name: {shape, data}} (row-major)."""
    out = {}
    for name, a in arrays.items():
        a = np.asarray(a, dtype=np.float64)
        out[name] = {"shape": list(a.shape), "data": a.ravel().tolist()}
    return out


def arrays_from_json(blob: dict) -> dict:
    out = {}
    for name, spec in blob.items():
        out[name] = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
    return out


def save_weight_file(path, version: str, layer_sizes, arrays: dict,
                     extra: dict | None = None) -> None:
    doc = {"version": version, "layer_sizes": list(layer_sizes),
           "arrays": arrays_to_json(arrays)}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_weight_file(path, expect_version: str) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != expect_version:
        raise ShapeMismatch(
            f"weight file {path} has version {doc.get('version')!r}, "
            f"expected {expect_version!r}")
    doc["arrays"] = arrays_from_json(doc["arrays"])
    return doc


def flat_seed(seed, *extra) -> list:
    """Flatten a seed (int or sequence of ints) plus extra salts into the
    flat integer list numpy generators accept."""
    parts = []
    if isinstance(seed, (list, tuple, np.ndarray)):
        parts.extend(int(x) for x in seed)
    else:
        parts.append(int(seed))
    parts.extend(int(x) for x in extra)
    return parts


def pearson(x, y) -> float:
    """Pearson correlation of two equal-length 1-D arrays."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return 0.0
    return float((xc * yc).sum() / denom)
