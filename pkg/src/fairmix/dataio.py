"""Dataset ingestion, preprocessing, synthetic data generation, and
serialization of chains and summary tables.

Chain files are line-delimited JSON: a header line, one trace line with
the whole-chain K and negative log-likelihood series, then one line per
recorded sample. By default a sample stores a short digest of its matching
latents; ``full_matching=True`` stores them verbatim.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import GroupedDataset, MatchingState
from .sampler import ChainSample, FbcRun

__all__ = [
    "DatasetSpec",
    "load_csv",
    "load_dataset",
    "generate_toy",
    "standardize",
    "binarize_median",
    "save_chain",
    "load_chain",
    "matching_digest",
    "write_csv",
    "ChainFormatError",
]

CHAIN_FORMAT = "fairmix-chain"
CHAIN_VERSION = 1

_MISSING_TOKENS = {"", "na", "n/a", "nan", "none", "null"}


class ChainFormatError(ValueError):
    """Chain file cannot be parsed; carries the offending line number."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset comes from and how it is prepared.

    source            CSV path, or "toy" for the built-in generator
    feature_columns   names of the numeric feature columns (CSV only)
    sensitive_column  name of the sensitive-attribute column (CSV only)
    preprocessing     "standardize" | "binarize-median" | "none"
    subsample         keep this many rows, drawn without replacement
    seed              seed for subsampling and the toy generator
    """

    source: str = "toy"
    feature_columns: tuple[str, ...] | None = None
    sensitive_column: str | None = None
    preprocessing: str = "standardize"
    subsample: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.preprocessing not in ("standardize", "binarize-median",
                                      "none"):
            raise ValueError(
                f"unknown preprocessing: {self.preprocessing!r}")
        if self.source != "toy":
            if not self.feature_columns or self.sensitive_column is None:
                raise ValueError("CSV sources need feature_columns and "
                                 "sensitive_column")


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per column (population variance)."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    if (std == 0).any():
        bad = int(np.flatnonzero(std == 0)[0])
        raise ValueError(f"column {bad} is constant and cannot be "
                         "standardized")
    return (x - mean) / std


def binarize_median(x: np.ndarray) -> np.ndarray:
    """1.0 where the value is strictly above the column median, else 0."""
    x = np.asarray(x, dtype=float)
    return (x > np.median(x, axis=0)).astype(float)


def _preprocess(x: np.ndarray, mode: str) -> tuple[np.ndarray, str]:
    if mode == "standardize":
        return standardize(x), "continuous"
    if mode == "binarize-median":
        return binarize_median(x), "binary"
    kind = "binary" if np.isin(x, (0.0, 1.0)).all() else "continuous"
    return x, kind


def load_csv(path, spec: DatasetSpec) -> GroupedDataset:
    """Read a CSV into a grouped dataset.

    Rows with a missing sensitive value are dropped; missing feature
    values are an error. The sensitive column may hold arbitrary strings;
    distinct values become groups in sorted order (before the internal
    smallest-first relabeling).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        col_index = {name: i for i, name in enumerate(header)}
        missing = [c for c in (*spec.feature_columns, spec.sensitive_column)
                   if c not in col_index]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        feat_idx = [col_index[c] for c in spec.feature_columns]
        sens_idx = col_index[spec.sensitive_column]
        rows, sens = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            s = rec[sens_idx].strip()
            if s.lower() in _MISSING_TOKENS:
                continue
            try:
                rows.append([float(rec[i]) for i in feat_idx])
            except (ValueError, IndexError) as exc:
                raise ValueError(
                    f"{path}:{line_no}: cannot parse features "
                    f"({exc})") from None
            sens.append(s)
    if not rows:
        raise ValueError(f"{path}: no usable rows")
    x = np.asarray(rows, dtype=float)
    sens = np.asarray(sens)
    if spec.subsample is not None and spec.subsample < len(x):
        rng = np.random.default_rng(spec.seed)
        keep = np.sort(rng.choice(len(x), size=spec.subsample,
                                  replace=False))
        x, sens = x[keep], sens[keep]
    values = sorted(set(sens))
    if len(values) < 2:
        raise ValueError(f"{path}: sensitive column "
                         f"{spec.sensitive_column!r} has fewer than two "
                         "distinct values")
    x, kind = _preprocess(x, spec.preprocessing)
    groups = [x[sens == v] for v in values]
    for v, g in zip(values, groups):
        if g.shape[0] == 0:
            raise ValueError(f"{path}: group {v!r} is empty")
    return GroupedDataset(groups, feature_kind=kind)


_TOY_MEANS_0 = np.array([[-5.0, -30.0], [-5.0, 0.0], [-5.0, 30.0]])
_TOY_MEANS_1 = np.array([[-5.0, -29.5], [-5.0, 0.5], [-5.0, 30.5]])
_TOY_PER_GROUP = 600


def _toy_arrays(rng) -> list[np.ndarray]:
    out = []
    for means in (_TOY_MEANS_0, _TOY_MEANS_1):
        comp = rng.integers(0, 3, size=_TOY_PER_GROUP)
        noise = rng.standard_normal((_TOY_PER_GROUP, 2))
        out.append(means[comp] + noise)
    return out


def generate_toy(rng) -> GroupedDataset:
    """Two sensitive groups of 600 bivariate points each, drawn from
    equal mixtures of three unit-covariance Gaussians; the second group's
    component means are offset by +0.5 in the second coordinate."""
    return GroupedDataset(_toy_arrays(rng), feature_kind="continuous")


def load_dataset(spec: DatasetSpec) -> GroupedDataset:
    """Materialize a dataset spec: toy generator or CSV, then
    preprocessing."""
    if spec.source == "toy":
        raw = _toy_arrays(np.random.default_rng(spec.seed))
        pooled = np.concatenate(raw, axis=0)
        pooled, kind = _preprocess(pooled, spec.preprocessing)
        sizes = np.cumsum([0] + [len(g) for g in raw])
        groups = [pooled[a:b] for a, b in zip(sizes[:-1], sizes[1:])]
        return GroupedDataset(groups, feature_kind=kind)
    return load_csv(spec.source, spec)


# ---------------------------------------------------------------------------
# chain serialization


def matching_digest(matching: MatchingState | None) -> str:
    """Short stable digest of the matching latents."""
    if matching is None:
        return ""
    h = hashlib.sha256()
    for g in range(matching.n_matched_groups):
        h.update(np.ascontiguousarray(matching.T[g], dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(np.ascontiguousarray(matching.T0[g], dtype=np.int64).tobytes())
        h.update(b"|")
        h.update(json.dumps(sorted(matching.E[g])).encode())
        h.update(json.dumps(sorted(matching.R[g])).encode())
        h.update(b";")
    return h.hexdigest()[:16]


def _matching_to_json(matching: MatchingState) -> dict:
    return {
        "n0": matching.n0,
        "T": [np.asarray(t).tolist() for t in matching.T],
        "T0": [np.asarray(t).tolist() for t in matching.T0],
        "E": [sorted(e) for e in matching.E],
        "R": [sorted(r) for r in matching.R],
    }


def _matching_from_json(obj: dict) -> MatchingState:
    return MatchingState(
        n0=int(obj["n0"]),
        T=tuple(np.asarray(t, dtype=np.intp) for t in obj["T"]),
        T0=tuple(np.asarray(t, dtype=np.intp) for t in obj["T0"]),
        E=tuple(frozenset(e) for e in obj["E"]),
        R=tuple(frozenset(r) for r in obj["R"]),
    )


def save_chain(run: FbcRun, path, meta: dict | None = None,
               full_matching: bool = False) -> None:
    """Write a chain to a line-delimited JSON file."""
    path = Path(path)
    header = {
        "format": CHAIN_FORMAT,
        "version": CHAIN_VERSION,
        "burn_in": run.burn_in,
        "n_samples": len(run.samples),
        "full_matching": full_matching,
        "accept_rate": run.accept_rate,
    }
    if meta:
        header.update(meta)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        fh.write(json.dumps({
            "type": "trace",
            "k": run.k_trace.tolist(),
            "nll": run.nll_trace.tolist(),
        }) + "\n")
        for s in run.samples:
            rec = {
                "type": "sample",
                "iteration": s.iteration,
                "k": s.k,
                "labels": [list(lab) for lab in s.labels],
                "delta": s.delta,
                "bal": s.bal,
                "cost": s.cost,
                "nll": s.nll,
                "matching_digest": matching_digest(s.matching),
            }
            if full_matching and s.matching is not None:
                rec["matching"] = _matching_to_json(s.matching)
            fh.write(json.dumps(rec) + "\n")


def load_chain(path) -> tuple[list[ChainSample], dict]:
    """Read a chain file back; returns (samples, header-with-traces).

    The per-sample matching digest is preserved in the header under
    "digests"; full matchings are reconstructed when present.
    """
    path = Path(path)
    samples: list[ChainSample] = []
    digests: list[str] = []
    header: dict = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ChainFormatError(path, line_no, f"bad JSON: {exc}")
            if line_no == 1:
                if obj.get("format") != CHAIN_FORMAT:
                    raise ChainFormatError(path, line_no,
                                           "not a chain file")
                if obj.get("version") != CHAIN_VERSION:
                    raise ChainFormatError(
                        path, line_no,
                        f"unsupported version {obj.get('version')!r}")
                header = obj
                continue
            kind = obj.get("type")
            if kind == "trace":
                header["k_trace"] = np.asarray(obj["k"], dtype=int)
                header["nll_trace"] = np.asarray(obj["nll"], dtype=float)
            elif kind == "sample":
                try:
                    matching = (_matching_from_json(obj["matching"])
                                if "matching" in obj else None)
                    samples.append(ChainSample(
                        iteration=int(obj["iteration"]),
                        k=int(obj["k"]),
                        labels=tuple(tuple(int(v) for v in lab)
                                     for lab in obj["labels"]),
                        delta=float(obj["delta"]),
                        bal=float(obj["bal"]),
                        cost=float(obj["cost"]),
                        nll=float(obj["nll"]),
                        matching=matching,
                    ))
                    digests.append(obj.get("matching_digest", ""))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ChainFormatError(path, line_no,
                                           f"bad sample record: {exc}")
            else:
                raise ChainFormatError(path, line_no,
                                       f"unknown record type {kind!r}")
    if not header:
        raise ChainFormatError(path, 1, "missing header")
    header["digests"] = digests
    return samples, header


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
