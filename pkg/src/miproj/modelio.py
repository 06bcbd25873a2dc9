"""Versioned on-disk formats for signal models and projections.

Both formats are JSON with an explicit ``format``/``version`` header so
stale or foreign files fail loudly.  Floats round-trip exactly (repr
serialization).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mixture import ClassGmm, GaussianComponent, SignalModel

__all__ = ["save_model", "load_model", "save_projection", "load_projection"]

_MODEL_FORMAT = "signal-model"
_PROJ_FORMAT = "projection"
_VERSION = 1


def _check_header(doc, expected, path):
    if not isinstance(doc, dict) or doc.get("format") != expected:
        raise ValueError(f"{path}: not a {expected} file")
    if doc.get("version") != _VERSION:
        raise ValueError(f"{path}: unsupported version {doc.get('version')!r}")


def save_model(model, path):
    """Write a signal model as versioned JSON; returns the path."""
    doc = {
        "format": _MODEL_FORMAT,
        "version": _VERSION,
        "dim": model.dim,
        "class_priors": [float(w) for w in model.class_priors],
        "classes": [
            {
                "weights": [float(w) for w in gmm.weights],
                "components": [
                    {"mean": comp.mean.tolist(), "covariance": comp.covariance.tolist()}
                    for comp in gmm.components
                ],
            }
            for gmm in model.classes
        ],
    }
    path = Path(path)
    path.write_text(json.dumps(doc))
    return path


def load_model(path):
    """Read a signal model written by save_model."""
    path = Path(path)
    doc = json.loads(path.read_text())
    _check_header(doc, _MODEL_FORMAT, path)
    classes = []
    for entry in doc["classes"]:
        comps = tuple(
            GaussianComponent(np.array(c["mean"], dtype=float), np.array(c["covariance"], dtype=float))
            for c in entry["components"]
        )
        classes.append(ClassGmm(weights=np.array(entry["weights"], dtype=float), components=comps))
    model = SignalModel(class_priors=np.array(doc["class_priors"], dtype=float), classes=tuple(classes))
    if model.dim != doc["dim"]:
        raise ValueError(f"{path}: dim header {doc['dim']} disagrees with components")
    return model


def save_projection(phi, path):
    """Write a d x p projection matrix as versioned JSON; returns the path."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2:
        raise ValueError("projection must be a 2-D matrix")
    doc = {
        "format": _PROJ_FORMAT,
        "version": _VERSION,
        "rows": phi.shape[0],
        "cols": phi.shape[1],
        "data": phi.tolist(),
    }
    path = Path(path)
    path.write_text(json.dumps(doc))
    return path


def load_projection(path):
    """Read a projection matrix written by save_projection."""
    path = Path(path)
    doc = json.loads(path.read_text())
    _check_header(doc, _PROJ_FORMAT, path)
    phi = np.array(doc["data"], dtype=float)
    if phi.shape != (doc["rows"], doc["cols"]):
        raise ValueError(f"{path}: data shape {phi.shape} disagrees with header")
    return phi
