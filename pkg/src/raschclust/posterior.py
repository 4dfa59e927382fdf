"""Posterior summaries: modal cluster counts, a representative partition,
cluster-level estimates with HPD intervals, and ICC curve data.

Mixture draws are label-switching-prone, so every summary here is built from
permutation-invariant objects: the modal occupied-cluster count, the pairwise
co-clustering matrix, and a least-squares representative partition chosen
among the stored draws (Dahl's criterion). Cluster-level pooling aligns each
draw to the representative partition by greedy maximal label agreement.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DegenerateChainError
from .model import rasch_prob


@dataclass
class FitSummary:
    """Point estimates extracted from one chain.

    Partitions are canonical 1-based labels. ``cluster_estimates`` maps block
    name ("theta" / "b") to a list of per-cluster dicts with count, pooled
    posterior mean and HPD bounds. For the unclustered variant the partition
    fields are None and per-unit HPD intervals are reported instead.
    """

    variant: str
    modal_k_theta: int = None
    modal_k_b: int = None
    partition_theta: list = None
    partition_b: list = None
    cluster_estimates: dict = field(default_factory=dict)
    theta_hat: list = None
    b_hat: list = None
    theta_hpd: list = None
    b_hpd: list = None
    hpd_level: float = 0.68

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, sort_keys=True, indent=2)
            fh.write("\n")


def modal_k(k_draws) -> int:
    """Most frequent value, ties broken toward the smaller count."""
    k_draws = np.asarray(k_draws)
    if k_draws.size == 0:
        raise ValueError("empty draw vector")
    return int(np.bincount(k_draws).argmax())


def _coclustering(label_draws) -> np.ndarray:
    draws = np.asarray(label_draws)
    n = draws.shape[1]
    co = np.zeros((n, n))
    for row in draws:
        co += row[:, None] == row[None, :]
    return co / draws.shape[0]


def canonical_labels(labels) -> np.ndarray:
    """Relabel 1..k in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inverse] + 1


def point_partition(label_draws, k_draws) -> np.ndarray:
    """Representative partition: the modal-K draw closest (in squared
    distance) to the pairwise co-clustering matrix of the modal-K draws."""
    label_draws = np.asarray(label_draws)
    k_draws = np.asarray(k_draws)
    if label_draws.size == 0:
        raise ValueError("empty draw matrix")
    mk = modal_k(k_draws)
    restricted = label_draws[k_draws == mk]
    if restricted.shape[0] == 0:
        raise DegenerateChainError(f"no stored draw has {mk} occupied clusters")
    co = _coclustering(restricted)
    best, best_dist = None, np.inf
    for row in restricted:
        same = row[:, None] == row[None, :]
        dist = float(((same - co) ** 2).sum())
        if dist < best_dist - 1e-12:
            best, best_dist = row, dist
    return canonical_labels(best)


def hpd_interval(draws, level) -> tuple:
    """Shortest contiguous interval over the sorted draws at the given level.

    Candidate windows span ceil(level * M) inter-draw gaps; ties pick the
    leftmost window. level -> 1 returns (min, max).
    """
    draws = np.sort(np.asarray(draws, dtype=float))
    m = draws.size
    if m < 10:
        raise ValueError(f"need at least 10 draws for an HPD interval, got {m}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0,1), got {level}")
    gap = int(np.ceil(level * m))
    if gap >= m:
        return float(draws[0]), float(draws[-1])
    widths = draws[gap:] - draws[: m - gap]
    left = int(np.argmin(widths))
    return float(draws[left]), float(draws[left + gap])


def _match_labels(draw_labels, reference, k) -> np.ndarray:
    """Greedy maximal-agreement map from draw cluster ids to reference ids.

    Returns an array mapping each draw cluster index 0..k-1 to a reference
    cluster index 0..k-1.
    """
    overlap = np.bincount(draw_labels * k + reference, minlength=k * k).reshape(k, k)
    mapping = np.full(k, -1)
    taken = np.zeros(k, dtype=bool)
    flat = np.argsort(overlap, axis=None)[::-1]
    for idx in flat:
        d, r = divmod(idx, k)
        if mapping[d] == -1 and not taken[r]:
            mapping[d] = r
            taken[r] = True
    return mapping


def cluster_estimates(label_draws, value_draws, k_draws, partition, level=0.68) -> list:
    """Per-cluster count, pooled posterior mean and HPD interval.

    Pools the cluster-level value series across modal-K draws after aligning
    each draw's clusters to the representative partition.
    """
    label_draws = np.asarray(label_draws)
    value_draws = np.asarray(value_draws)
    k_draws = np.asarray(k_draws)
    partition = np.asarray(partition)
    k = int(partition.max())
    keep = k_draws == k
    ref = partition - 1
    pools = [[] for _ in range(k)]
    for labels, values in zip(label_draws[keep], value_draws[keep]):
        # normalize draw labels to 0..k-1 by first appearance
        draw_canon = canonical_labels(labels) - 1
        _, first = np.unique(draw_canon, return_index=True)
        cluster_value = values[first]
        mapping = _match_labels(draw_canon, ref, k)
        for c in range(k):
            pools[mapping[c]].append(cluster_value[c])
    out = []
    for r in range(k):
        pooled = np.asarray(pools[r])
        count = int(np.sum(partition == r + 1))
        if count == 0:
            raise DegenerateChainError(f"cluster {r + 1} has no members")
        if pooled.size >= 10 and pooled.std() > 0:
            lo, hi = hpd_interval(pooled, level)
        else:
            lo = hi = float(pooled.mean())
        out.append({
            "cluster": r + 1,
            "count": count,
            "mean": float(pooled.mean()),
            "hpd_lower": lo,
            "hpd_upper": hi,
        })
    return out


def cluster_proportions(data, partition) -> list:
    """Mean correct proportion of the response cells in each cluster.

    ``partition`` labels either subjects (length N) or items (length J);
    the orientation is inferred from its length.
    """
    y = np.asarray(getattr(data, "responses", data), dtype=float)
    partition = np.asarray(partition)
    if partition.shape[0] == y.shape[0]:
        unit_means = y.mean(axis=1)
    elif partition.shape[0] == y.shape[1]:
        unit_means = y.mean(axis=0)
    else:
        raise ValueError("partition length matches neither subjects nor items")
    out = []
    for c in sorted(set(partition.tolist())):
        members = partition == c
        out.append({
            "cluster": int(c),
            "count": int(members.sum()),
            "proportion_correct": float(unit_means[members].mean()),
        })
    out.append({
        "cluster": "all",
        "count": int(partition.size),
        "proportion_correct": float(unit_means.mean()),
    })
    return out


def icc_curve(b_cluster_values, theta_grid) -> np.ndarray:
    """P(correct) on the ability grid for each difficulty value, shape (k, G)."""
    theta_grid = np.asarray(theta_grid, dtype=float)
    if np.any(np.diff(theta_grid) < 0):
        raise ValueError("theta_grid must be sorted ascending")
    b = np.asarray(b_cluster_values, dtype=float)
    return rasch_prob(theta_grid[None, :], b[:, None])


def summarize_chain(output, level=0.68) -> FitSummary:
    """Build a FitSummary from a ChainOutput (any variant)."""
    theta_hat = output.theta_draws.mean(axis=0)
    b_hat = output.b_draws.mean(axis=0)
    if output.variant == "plain":
        return FitSummary(
            variant="plain",
            theta_hat=theta_hat.tolist(),
            b_hat=b_hat.tolist(),
            theta_hpd=[list(hpd_interval(col, level)) for col in output.theta_draws.T],
            b_hpd=[list(hpd_interval(col, level)) for col in output.b_draws.T],
            hpd_level=level,
        )
    part_theta = point_partition(output.z_draws, output.k_theta_draws)
    part_b = point_partition(output.g_draws, output.k_b_draws)
    return FitSummary(
        variant=output.variant,
        modal_k_theta=modal_k(output.k_theta_draws),
        modal_k_b=modal_k(output.k_b_draws),
        partition_theta=part_theta.tolist(),
        partition_b=part_b.tolist(),
        cluster_estimates={
            "theta": cluster_estimates(output.z_draws, output.theta_draws,
                                       output.k_theta_draws, part_theta, level),
            "b": cluster_estimates(output.g_draws, output.b_draws,
                                   output.k_b_draws, part_b, level),
        },
        theta_hat=theta_hat.tolist(),
        b_hat=b_hat.tolist(),
        hpd_level=level,
    )
