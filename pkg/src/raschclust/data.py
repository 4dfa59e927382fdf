"""Binary response matrices: validation, I/O, summaries, synthetic stand-in.

The canonical exchange format is CSV: a header row of item ids, then one row
per subject whose first column is the subject id and whose remaining columns
are 0/1 responses. A JSON mirror {"subjects": [...], "items": [...],
"responses": [[...]]} exists for programmatic use.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ResponseMatrix:
    """A validated N x J matrix of binary responses.

    Missing responses are rejected: the likelihood is defined over every
    (subject, item) cell, so v1 requires complete data.
    """

    responses: np.ndarray
    subject_ids: list = field(default=None)
    item_ids: list = field(default=None)

    def __post_init__(self):
        y = np.asarray(self.responses)
        if y.ndim != 2:
            raise DataError(f"responses must be 2-D, got ndim={y.ndim}")
        n, j = y.shape
        if n < 2 or j < 2:
            raise DataError(f"need at least 2 subjects and 2 items, got {n}x{j}")
        if not np.isin(y, (0, 1)).all():
            bad = y[~np.isin(y, (0, 1))].ravel()[0]
            raise DataError(f"non-binary response value: {bad!r}")
        object.__setattr__(self, "responses", y.astype(np.int8))
        subject_ids = self.subject_ids or [f"s{i + 1}" for i in range(n)]
        item_ids = self.item_ids or [f"i{j_ + 1}" for j_ in range(j)]
        for name, ids, expected in (("subject", subject_ids, n), ("item", item_ids, j)):
            if len(ids) != expected:
                raise DataError(f"{name}_ids has length {len(ids)}, expected {expected}")
            if len(set(ids)) != len(ids):
                raise DataError(f"duplicate {name} ids")
        object.__setattr__(self, "subject_ids", list(subject_ids))
        object.__setattr__(self, "item_ids", list(item_ids))

    @property
    def n_subjects(self) -> int:
        return self.responses.shape[0]

    @property
    def n_items(self) -> int:
        return self.responses.shape[1]


def _parse_cell(raw, where):
    cell = raw.strip()
    if cell not in ("0", "1"):
        raise DataError(f"non-binary value {raw!r} at {where}")
    return int(cell)


def load_responses(path, format=None) -> ResponseMatrix:
    """Load a ResponseMatrix from a CSV or JSON file.

    ``format`` is "csv" or "json"; when None it is inferred from the suffix.
    Row and column order are preserved exactly.
    """
    path = str(path)
    if format is None:
        format = "json" if path.endswith(".json") else "csv"
    if format == "csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise DataError(f"{path}: need a header row plus at least one subject row")
        item_ids = [c.strip() for c in rows[0][1:]]
        subject_ids, cells = [], []
        for r, row in enumerate(rows[1:], start=2):
            if len(row) != len(item_ids) + 1:
                raise DataError(
                    f"{path}: row {r} has {len(row)} columns, expected {len(item_ids) + 1}"
                )
            subject_ids.append(row[0].strip())
            cells.append([_parse_cell(c, f"row {r}") for c in row[1:]])
        return ResponseMatrix(np.array(cells), subject_ids, item_ids)
    if format == "json":
        with open(path) as fh:
            doc = json.load(fh)
        try:
            subjects, items, responses = doc["subjects"], doc["items"], doc["responses"]
        except (KeyError, TypeError) as exc:
            raise DataError(f"{path}: expected keys subjects/items/responses") from exc
        lengths = {len(row) for row in responses}
        if len(lengths) > 1:
            raise DataError(f"{path}: ragged response rows, lengths {sorted(lengths)}")
        return ResponseMatrix(np.array(responses), list(subjects), list(items))
    raise DataError(f"unknown format {format!r}")


def save_responses(data: ResponseMatrix, path, format=None) -> None:
    """Write a ResponseMatrix; inverse of load_responses (bit-exact round trip)."""
    path = str(path)
    if format is None:
        format = "json" if path.endswith(".json") else "csv"
    if format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subject_id"] + data.item_ids)
            for sid, row in zip(data.subject_ids, data.responses):
                writer.writerow([sid] + [int(v) for v in row])
    elif format == "json":
        doc = {
            "subjects": data.subject_ids,
            "items": data.item_ids,
            "responses": [[int(v) for v in row] for row in data.responses],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    else:
        raise DataError(f"unknown format {format!r}")


def summarize(data: ResponseMatrix) -> dict:
    """Row/column/grand means of the response matrix.

    The two vectors are exactly the data needed for side-by-side boxplots of
    per-subject and per-item correct proportions.
    """
    y = data.responses.astype(float)
    return {
        "per_subject_correct": y.mean(axis=1),
        "per_item_correct": y.mean(axis=0),
        "overall_proportion": float(y.mean()),
    }


# Cluster layout of the synthetic stand-in for the unpublished 78x50 exam
# dataset: sizes and cluster-level values chosen to match its published
# summary tables (2 ability groups, 3 difficulty groups, overall ~0.46).
STANDIN_THETA = ((0.612, 22), (-0.519, 56))
STANDIN_B = ((0.643, 18), (0.005, 16), (-0.728, 16))


def make_standin(seed=0, theta_clusters=STANDIN_THETA, b_clusters=STANDIN_B):
    """Generate the synthetic stand-in dataset for the real-data workflow.

    Returns (ResponseMatrix, truth) where truth records the cluster values
    and 1-based labels used for generation. Cluster memberships are shuffled
    so the clusters are not contiguous index blocks.
    """
    rng = np.random.default_rng(seed)
    theta, z = _expand_clusters(theta_clusters, rng)
    b, g = _expand_clusters(b_clusters, rng)
    p = 1.0 / (1.0 + np.exp(-(theta[:, None] - b[None, :])))
    responses = (rng.random(p.shape) < p).astype(int)
    truth = {
        "theta": theta.tolist(),
        "b": b.tolist(),
        "z_true": z.tolist(),
        "g_true": g.tolist(),
        "theta_cluster_values": [v for v, _ in theta_clusters],
        "b_cluster_values": [v for v, _ in b_clusters],
    }
    return ResponseMatrix(responses), truth


def _expand_clusters(clusters, rng):
    values = np.concatenate([np.full(count, value) for value, count in clusters])
    labels = np.concatenate(
        [np.full(count, lab + 1, dtype=int) for lab, (_, count) in enumerate(clusters)]
    )
    order = rng.permutation(len(values))
    return values[order], labels[order]
