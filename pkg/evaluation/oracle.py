"""
Reference implementations of the contrastive losses by literal summation.

Everything here is plain numpy with explicit loops over anchors, candidates
and positions. Nothing here may import from the tensor engine or the loss
modules.

Head weights are passed as (W, b) pairs with W of shape (in, out).
"""

import math
from typing import Dict, Sequence, Tuple

import numpy as np

Affine = Tuple[np.ndarray, np.ndarray]


def unit(v: np.ndarray) -> np.ndarray:
    norm = math.sqrt(float(np.sum(v * v)))
    return v / (norm if norm >= 1e-12 else 1e-12)


def dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(sum(float(x) * float(y) for x, y in zip(a, b)))


def affine(x: np.ndarray, head: Affine) -> np.ndarray:
    weight, bias = head
    return np.array([dot(x, weight[:, o]) + float(bias[o]) for o in range(weight.shape[1])])


def log_sum_exp(values: Sequence[float]) -> float:
    peak = max(values)
    return peak + math.log(sum(math.exp(v - peak) for v in values))


def positions(feature_map: np.ndarray):
    """C x H x W -> list of HW channel vectors, row-major."""
    c, h, w = feature_map.shape
    return [feature_map[:, i, j] for i in range(h) for j in range(w)]


def nt_xent(sim: np.ndarray, positives: Dict[int, Sequence[int]], tau: float) -> float:
    total = 0.0
    n = sim.shape[0]
    for i in range(n):
        denominator = log_sum_exp([sim[i][j] / tau for j in range(n) if j != i])
        pos = positives[i]
        total += sum(denominator - sim[i][p] / tau for p in pos) / len(pos)
    return total


# ============================================================
# Global losses
# ============================================================

def global_ss(z: np.ndarray, pair_index: Sequence[int], tau: float) -> float:
    zn = [unit(row) for row in z]
    n = len(zn)
    sim = np.array([[dot(zn[i], zn[j]) for j in range(n)] for i in range(n)])
    return nt_xent(sim, {i: [int(pair_index[i])] for i in range(n)}, tau)


def global_sup(z: np.ndarray, labels: Sequence[int], tau: float) -> float:
    zn = [unit(row) for row in z]
    n = len(zn)
    sim = np.array([[dot(zn[i], zn[j]) for j in range(n)] for i in range(n)])
    positives = {i: [p for p in range(n) if p != i and labels[p] == labels[i]] for i in range(n)}
    return nt_xent(sim, positives, tau)


# ============================================================
# Local similarities
# ============================================================

def aligned_values(target: np.ndarray, source: np.ndarray, heads: Dict[str, Affine]) -> list:
    """v'_{source|target}: each target position attends over the source positions."""
    q = [affine(x, heads["f_q"]) for x in positions(target)]
    k = [affine(x, heads["f_k"]) for x in positions(source)]
    v = [affine(x, heads["f_v"]) for x in positions(source)]
    scale = math.sqrt(len(q[0]))
    out = []
    for qi in q:
        logits = [dot(qi, kj) / scale for kj in k]
        peak = max(logits)
        weights = [math.exp(l - peak) for l in logits]
        norm = sum(weights)
        weights = [w / norm for w in weights]
        out.append(sum(w * vj for w, vj in zip(weights, v)))
    return out


def sim1(map_a: np.ndarray, map_b: np.ndarray, heads: Dict[str, Affine]) -> float:
    a_given_b = aligned_values(map_b, map_a, heads)
    b_given_a = aligned_values(map_a, map_b, heads)
    terms = [dot(unit(x), unit(y)) for x, y in zip(a_given_b, b_given_a)]
    return sum(terms) / len(terms)


def sim2(z_a: np.ndarray, map_b: np.ndarray, vec_head: Affine) -> float:
    za = unit(z_a)
    terms = []
    for x in positions(map_b):
        u = np.maximum(affine(x, vec_head), 0.0)
        terms.append(dot(unit(u), za))
    return sum(terms) / len(terms)


def map_map(maps: np.ndarray, pair_index: Sequence[int], heads: Dict[str, Affine], tau: float) -> float:
    n = len(maps)
    sim = np.array([[sim1(maps[i], maps[j], heads) for j in range(n)] for i in range(n)])
    return nt_xent(sim, {i: [int(pair_index[i])] for i in range(n)}, tau)


def vec_map(z: np.ndarray, maps: np.ndarray, pair_index: Sequence[int], vec_head: Affine, tau: float) -> float:
    n = len(maps)
    sim = np.array([[sim2(z[i], maps[j], vec_head) for j in range(n)] for i in range(n)])
    return nt_xent(sim, {i: [int(pair_index[i])] for i in range(n)}, tau)


# ============================================================
# Distance-scaled episodic loss
# ============================================================

def distance_scaled(
    query_z: Tuple[np.ndarray, np.ndarray],
    support_z: Tuple[np.ndarray, np.ndarray],
    support_labels: Sequence[int],
    query_labels: Sequence[int],
    ways: int,
    tau: float,
) -> float:
    protos = []
    for view in range(2):
        for k in range(ways):
            members = [support_z[view][s] for s in range(len(support_labels)) if support_labels[s] == k]
            protos.append(sum(members) / len(members))

    total = 0.0
    for view in range(2):
        other = 1 - view
        for q in range(len(query_labels)):
            anchor = unit(query_z[view][q])
            partner = query_z[other][q]
            label = query_labels[q]
            positives = [partner]
            candidates = [partner]
            for r in range(2):
                for s in range(len(support_labels)):
                    candidates.append(support_z[r][s])
                    if support_labels[s] == label:
                        positives.append(support_z[r][s])
            candidates.extend(protos)

            def weighted(vec):
                cos = dot(anchor, unit(vec))
                return math.log(2.0 - cos) + cos / tau

            denominator = log_sum_exp([weighted(c) for c in candidates])
            anchor_loss = sum(denominator - weighted(p) for p in positives)
            total += anchor_loss / len(positives)
    return total
