"""Mean-teacher self-ensembling: EMA weight averaging and the
teacher-student consistency loss."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .gallery import EmbeddingSet, load_embeddings, save_embeddings


@dataclass(frozen=True)
class EmaState:
    """Teacher parameters as a named tensor collection plus decay.

    Single-writer contract: exactly one updater at a time; readers may
    snapshot between updates.
    """

    tensors: dict
    alpha: float = 0.999
    step: int = 0
    warmup: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise DataError("alpha must be in [0, 1)")
        object.__setattr__(
            self,
            "tensors",
            {k: np.asarray(v, dtype=np.float64) for k, v in self.tensors.items()},
        )


def ema_update(state: EmaState, student: dict) -> EmaState:
    """teacher <- a*teacher + (1-a)*student elementwise, step incremented.

    With warm-up enabled the effective decay is min(alpha, 1 - 1/(step+1)),
    so early teachers track the student closely.
    """
    if set(student) != set(state.tensors):
        missing = set(state.tensors) ^ set(student)
        raise DataError(f"tensor name mismatch: {sorted(missing)}")
    if state.warmup:
        a = min(state.alpha, 1.0 - 1.0 / (state.step + 1))
    else:
        a = state.alpha
    new = {}
    for name, teacher in state.tensors.items():
        s = np.asarray(student[name], dtype=np.float64)
        if s.shape != teacher.shape:
            raise DataError(
                f"shape mismatch for tensor {name!r}: {teacher.shape} vs {s.shape}"
            )
        new[name] = a * teacher + (1.0 - a) * s
    return EmaState(new, alpha=state.alpha, step=state.step + 1, warmup=state.warmup)


def consistency_loss_grad(teacher_emb: np.ndarray, student_emb: np.ndarray):
    """MSE between teacher and student embeddings; gradient flows only to
    the student (teacher treated as constant)."""
    t = np.asarray(teacher_emb, dtype=np.float64)
    s = np.asarray(student_emb, dtype=np.float64)
    if t.shape != s.shape:
        raise DataError(f"shape mismatch: {t.shape} vs {s.shape}")
    diff = s - t
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


def save_ema_state(state: EmaState, directory) -> None:
    """Persist as one binary tensor file per name plus a JSON manifest."""
    os.makedirs(directory, exist_ok=True)
    manifest = {"alpha": state.alpha, "step": state.step, "warmup": state.warmup, "tensors": {}}
    for name, tensor in sorted(state.tensors.items()):
        fname = f"{name}.remb"
        flat = tensor.astype(np.float32).reshape(1, -1)
        save_embeddings(EmbeddingSet(flat), os.path.join(directory, fname))
        manifest["tensors"][name] = {"file": fname, "shape": list(tensor.shape)}
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_ema_state(directory) -> EmaState:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    tensors = {}
    for name, info in manifest["tensors"].items():
        emb = load_embeddings(os.path.join(directory, info["file"]))
        tensors[name] = emb.global_.astype(np.float64).reshape(info["shape"])
    return EmaState(
        tensors,
        alpha=manifest["alpha"],
        step=manifest["step"],
        warmup=manifest.get("warmup", False),
    )


def load_named_tensors(directory) -> dict:
    """Read a student tensor collection saved in the same layout."""
    return dict(load_ema_state(directory).tensors)
