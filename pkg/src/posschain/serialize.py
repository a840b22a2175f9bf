"""JSON document formats for models and chain specs.

Every document carries ``"schema": "possession-chain/v1"``. Model
documents hold the family name, its parameters, and fit metadata; chain
specs hold explicit state names and a row-major transition matrix.
"""

from __future__ import annotations

import json
from pathlib import Path

from .classical import NBDModel, ParetoModel, PoissonModel
from .errors import DomainError
from .markov import AdjustedModel, AutomatonSpec, SimpleModel
from .segmenter import LengthHistogram
from .stats import log_likelihood

SCHEMA = "possession-chain/v1"

MODEL_CLASSES = {
    cls.model_type: cls
    for cls in (SimpleModel, AdjustedModel, PoissonModel, NBDModel, ParetoModel)
}


def model_document(model, hist: LengthHistogram | None = None, converged: bool = True) -> dict:
    """Serializable document for a fitted or constructed model.

    When the source histogram is given, fit metadata records its size and
    the model's log-likelihood on it; otherwise those fields are null.
    """
    meta = {
        "n": hist.n if hist is not None else None,
        "log_likelihood": log_likelihood(model, hist) if hist is not None else None,
        "converged": converged,
    }
    return {
        "schema": SCHEMA,
        "model_type": model.model_type,
        "parameters": model.to_dict(),
        "fit_metadata": meta,
    }


def model_from_document(doc: dict):
    if doc.get("schema") != SCHEMA:
        raise DomainError(f"unsupported schema {doc.get('schema')!r}; expected {SCHEMA!r}")
    model_type = doc.get("model_type")
    cls = MODEL_CLASSES.get(model_type)
    if cls is None:
        raise DomainError(f"unknown model_type {model_type!r}")
    return cls.from_dict(doc["parameters"])


def automaton_document(spec: AutomatonSpec) -> dict:
    return {"schema": SCHEMA, "model_type": "automaton", **spec.to_dict()}


def automaton_from_document(doc: dict) -> AutomatonSpec:
    if doc.get("schema") != SCHEMA:
        raise DomainError(f"unsupported schema {doc.get('schema')!r}; expected {SCHEMA!r}")
    if doc.get("model_type") != "automaton":
        raise DomainError(f"expected model_type 'automaton', got {doc.get('model_type')!r}")
    return AutomatonSpec.from_dict(doc)


def dump_json(doc: dict, path: str | Path) -> None:
    Path(path).write_bytes(
        (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")
    )


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_bytes().decode("utf-8"))
