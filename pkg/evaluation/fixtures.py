"""
Oracle fixture sets and the library-vs-oracle comparison.

A fixture directory holds one random small instance:

    fixtures.json        {"seed", "taus", "ways", "files": [{"name", "file", "sha256"}]}
    <name>.epct          z, maps, labels, pair_index, head weights, episode vectors
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from autograd import Tensor, no_grad
from autograd.serialization import file_sha256, load_tensor, save_tensor
from errors import ChecksumError, FixtureError
from evaluation import oracle
from losses.contrastive import AugmentedBatch, global_ss_loss, global_sup_loss, map_map_loss, vec_map_loss
from losses.episodic import EpisodeView, ViewedEpisode, distance_scaled_loss
from models.encoder import SpatialHeads, VecMapHead
from schemas import FixtureFile, FixtureIndex, read_record, write_record

logger = logging.getLogger(__name__)

INDEX_NAME = "fixtures.json"
TOLERANCE = 1e-9
HEAD_NAMES = ("f_q", "f_k", "f_v")


@dataclass
class OracleRow:
    loss: str
    library: float
    oracle: float

    @property
    def delta(self) -> float:
        return abs(self.library - self.oracle)

    @property
    def passed(self) -> bool:
        return self.delta < TOLERANCE


def random_instance(
    rng: np.random.Generator,
    n: int = 2,
    d: int = 4,
    c: int = 3,
    ways: int = 2,
    shots: int = 1,
    queries: int = 2,
    n_labels: int = 2,
) -> Dict[str, np.ndarray]:
    """2N views of N samples (H = W = 2) plus a two-view M-way episode in z-space."""
    base_labels = rng.integers(0, n_labels, size=n)
    arrays = {
        "z": rng.normal(size=(2 * n, d)),
        "maps": rng.normal(size=(2 * n, c, 2, 2)),
        "labels": np.concatenate([base_labels, base_labels]).astype(np.float64),
        "pair_index": np.concatenate([np.arange(n, 2 * n), np.arange(n)]).astype(np.float64),
        "vec.weight": rng.normal(size=(c, d)),
        "vec.bias": rng.normal(scale=0.1, size=d),
        "support_labels": np.repeat(np.arange(ways), shots).astype(np.float64),
        "query_labels": np.repeat(np.arange(ways), queries).astype(np.float64),
    }
    for head in HEAD_NAMES:
        arrays[f"{head}.weight"] = rng.normal(size=(c, d))
        arrays[f"{head}.bias"] = rng.normal(scale=0.1, size=d)
    for view in (1, 2):
        arrays[f"support_z{view}"] = rng.normal(size=(ways * shots, d))
        arrays[f"query_z{view}"] = rng.normal(size=(ways * queries, d))
    return arrays


def make_fixtures(directory: str, seed: int = 0, taus: Dict[str, float] = None, **shape) -> str:
    taus = taus or {"tau1": 0.1, "tau2": 0.1, "tau3": 0.1, "tau4": 0.1, "tau5": 0.1}
    os.makedirs(directory, exist_ok=True)
    arrays = random_instance(np.random.default_rng(seed), **shape)
    files = []
    for name, value in arrays.items():
        file_name = f"{name}.epct"
        digest = save_tensor(os.path.join(directory, file_name), value)
        files.append(FixtureFile(name=name, file=file_name, sha256=digest))
    ways = int(arrays["support_labels"].max()) + 1
    path = os.path.join(directory, INDEX_NAME)
    write_record(path, FixtureIndex(seed=seed, taus=taus, ways=ways, files=files))
    logger.info(f"Wrote oracle fixture set ({len(files)} tensors) to {directory}")
    return path


def load_fixtures(directory: str):
    """(index as a plain dict, name -> array)."""
    path = os.path.join(directory, INDEX_NAME)
    if not os.path.isdir(directory) or not os.path.exists(path):
        raise FixtureError(f"no fixture index in {directory}")
    index = read_record(path, FixtureIndex, FixtureError)
    if not index.files:
        raise FixtureError(f"fixture index {path} lists no tensors")
    arrays = {}
    for entry in index.files:
        file_path = os.path.join(directory, entry.file)
        if not os.path.exists(file_path):
            raise FixtureError(f"fixture tensor missing: {file_path}")
        if file_sha256(file_path) != entry.sha256:
            raise ChecksumError(f"fixture {entry.file} does not match its recorded checksum")
        arrays[entry.name] = load_tensor(file_path)
    return index.model_dump(), arrays


# ============================================================
# Library side
# ============================================================

def _heads(arrays: Dict[str, np.ndarray]):
    c, d = arrays["f_q.weight"].shape
    rng = np.random.default_rng(0)
    spatial = SpatialHeads(c, d, rng)
    spatial.load_state_dict({f"{h}.{part}": arrays[f"{h}.{part}"] for h in HEAD_NAMES for part in ("weight", "bias")})
    vmhead = VecMapHead(c, d, rng)
    vmhead.load_state_dict({"fc.weight": arrays["vec.weight"], "fc.bias": arrays["vec.bias"]})
    return spatial, vmhead


def library_terms(index: Dict, arrays: Dict[str, np.ndarray]) -> Dict[str, float]:
    taus = index["taus"]
    spatial, vmhead = _heads(arrays)
    with no_grad():
        batch = AugmentedBatch(
            z=Tensor(arrays["z"]),
            maps=Tensor(arrays["maps"]),
            labels=arrays["labels"].astype(np.int64),
            pair_index=arrays["pair_index"].astype(np.int64),
        )
        views = tuple(
            EpisodeView(
                support_h=Tensor(arrays[f"support_z{v}"]),
                support_labels=arrays["support_labels"].astype(np.int64),
                query_h=Tensor(arrays[f"query_z{v}"]),
                query_labels=arrays["query_labels"].astype(np.int64),
                support_z=Tensor(arrays[f"support_z{v}"]),
                query_z=Tensor(arrays[f"query_z{v}"]),
            )
            for v in (1, 2)
        )
        return {
            "global_ss": global_ss_loss(batch, taus["tau1"]).item(),
            "map_map": map_map_loss(batch, spatial, taus["tau2"]).item(),
            "vec_map": vec_map_loss(batch, vmhead, taus["tau3"]).item(),
            "global_sup": global_sup_loss(batch, taus["tau4"]).item(),
            "distance_scaled": distance_scaled_loss(ViewedEpisode(views=views, ways=index["ways"]), taus["tau5"]).item(),
        }


def oracle_terms(index: Dict, arrays: Dict[str, np.ndarray]) -> Dict[str, float]:
    taus = index["taus"]
    heads = {h: (arrays[f"{h}.weight"], arrays[f"{h}.bias"]) for h in HEAD_NAMES}
    pair = [int(p) for p in arrays["pair_index"]]
    labels = [int(l) for l in arrays["labels"]]
    return {
        "global_ss": oracle.global_ss(arrays["z"], pair, taus["tau1"]),
        "map_map": oracle.map_map(arrays["maps"], pair, heads, taus["tau2"]),
        "vec_map": oracle.vec_map(arrays["z"], arrays["maps"], pair, (arrays["vec.weight"], arrays["vec.bias"]), taus["tau3"]),
        "global_sup": oracle.global_sup(arrays["z"], labels, taus["tau4"]),
        "distance_scaled": oracle.distance_scaled(
            (arrays["query_z1"], arrays["query_z2"]),
            (arrays["support_z1"], arrays["support_z2"]),
            [int(l) for l in arrays["support_labels"]],
            [int(l) for l in arrays["query_labels"]],
            index["ways"],
            taus["tau5"],
        ),
    }


def oracle_compare(directory: str) -> List[OracleRow]:
    index, arrays = load_fixtures(directory)
    library = library_terms(index, arrays)
    reference = oracle_terms(index, arrays)
    rows = [OracleRow(loss=name, library=library[name], oracle=reference[name]) for name in library]
    for row in rows:
        log = logger.info if row.passed else logger.error
        log(f"oracle {row.loss}: library={row.library:.12g} oracle={row.oracle:.12g} delta={row.delta:.3e}")
    return rows
