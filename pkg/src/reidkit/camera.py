"""Camera-context analysis: per-camera offset estimation, the
identity-agnosticism consistency score, camera normalization, and the
per-camera residual forward transform.

The working hypothesis is that the displacement of embeddings between
camera orientations is the same for every identity. The consistency score
measures how far the data is from that: 0 means per-(camera, person)
displacements match the global per-camera offsets exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

CONSISTENCY_EPS = 1e-8


@dataclass(frozen=True)
class CameraOffsets:
    offsets: dict          # camera id -> D-vector (mean displacement)
    counts: dict           # camera id -> sample count
    consistency_score: float

    def to_dict(self) -> dict:
        return {
            "offsets": {str(c): [float(x) for x in v] for c, v in sorted(self.offsets.items())},
            "counts": {str(c): int(n) for c, n in sorted(self.counts.items())},
            "consistency_score": float(self.consistency_score),
        }


@dataclass(frozen=True)
class CameraResidualParams:
    """Per-camera affine residual: row -> row + A_c @ row + b_c.

    The same parameter set is shared by every person; zero parameters
    give the identity transform.
    """

    matrices: dict  # camera id -> D x D
    biases: dict    # camera id -> D

    def __post_init__(self):
        if set(self.matrices) != set(self.biases):
            raise DataError("matrix and bias camera ids differ")
        for c, a in self.matrices.items():
            a = np.asarray(a, dtype=np.float64)
            b = np.asarray(self.biases[c], dtype=np.float64)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise DataError(f"camera {c}: matrix must be square")
            if b.shape != (a.shape[0],):
                raise DataError(f"camera {c}: bias dimension mismatch")


def camera_offsets(emb: np.ndarray, camids, pids=None) -> CameraOffsets:
    """Per-camera mean displacement from the global mean.

    The consistency score averages, over every (camera, person) cell with
    at least one sample, the relative deviation of that cell's displacement
    from the camera's global offset. It needs person ids; without them the
    score is reported as 0.0 for degenerate single-group data.
    """
    e = np.asarray(emb, dtype=np.float64)
    camids = np.asarray(camids)
    if e.ndim != 2 or e.shape[0] == 0:
        raise DataError("need a non-empty N x D embedding matrix")
    if len(camids) != e.shape[0]:
        raise DataError("camera id count != row count")
    global_mean = e.mean(axis=0)
    offsets, counts = {}, {}
    for c in np.unique(camids):
        rows = e[camids == c]
        offsets[int(c)] = rows.mean(axis=0) - global_mean
        counts[int(c)] = rows.shape[0]

    score = 0.0
    if pids is not None:
        pids = np.asarray(pids)
        if len(pids) != e.shape[0]:
            raise DataError("person id count != row count")
        person_means = {p: e[pids == p].mean(axis=0) for p in np.unique(pids)}
        cell_scores = []
        for c in offsets:
            off = offsets[c]
            denom = np.linalg.norm(off) + CONSISTENCY_EPS
            for p, pmean in person_means.items():
                cell = (camids == c) & (pids == p)
                if not cell.any():
                    continue
                disp = e[cell].mean(axis=0) - pmean
                cell_scores.append(np.linalg.norm(disp - off) / denom)
        score = float(np.mean(cell_scores))
    return CameraOffsets(offsets, counts, score)


def camera_normalize(emb: np.ndarray, offsets: CameraOffsets, camids) -> np.ndarray:
    """Subtract each row's camera offset; afterwards every per-camera mean
    equals the global mean."""
    e = np.asarray(emb, dtype=np.float64)
    camids = np.asarray(camids)
    out = e.copy()
    for i, c in enumerate(camids):
        c = int(c)
        if c not in offsets.offsets:
            raise DataError(f"unknown camera id {c}")
        out[i] -= offsets.offsets[c]
    return out


def apply_camera_residual(emb: np.ndarray, params: CameraResidualParams, camids) -> np.ndarray:
    """row -> row + A_c @ row + b_c per row's camera."""
    e = np.asarray(emb, dtype=np.float64)
    camids = np.asarray(camids)
    out = np.empty_like(e)
    for i, c in enumerate(camids):
        c = int(c)
        if c not in params.matrices:
            raise DataError(f"no residual parameters for camera {c}")
        a = np.asarray(params.matrices[c], dtype=np.float64)
        b = np.asarray(params.biases[c], dtype=np.float64)
        if a.shape[0] != e.shape[1]:
            raise DataError(
                f"camera {c}: parameter dimension {a.shape[0]} != embedding dim {e.shape[1]}"
            )
        out[i] = e[i] + a @ e[i] + b
    return out


def save_residual_params(params: CameraResidualParams, path) -> None:
    doc = {
        str(c): {
            "matrix": np.asarray(params.matrices[c], dtype=np.float64).tolist(),
            "bias": np.asarray(params.biases[c], dtype=np.float64).tolist(),
        }
        for c in sorted(params.matrices)
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_residual_params(path) -> CameraResidualParams:
    with open(path) as fh:
        doc = json.load(fh)
    matrices = {int(c): np.array(v["matrix"], dtype=np.float64) for c, v in doc.items()}
    biases = {int(c): np.array(v["bias"], dtype=np.float64) for c, v in doc.items()}
    return CameraResidualParams(matrices, biases)
