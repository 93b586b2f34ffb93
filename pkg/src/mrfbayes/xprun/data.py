"""Bundled datasets."""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..models import Dataset, ErgmModel, ModelError, edge_index

FLORENTINE = "florentine_business.txt"


def _parse_edge_list(text: str):
    names, edges, section = {}, [], None
    for raw in text.splitlines():
        line = raw.strip()
        if line in ("# nodes", "# edges"):
            section = line[2:]
            continue
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if section == "nodes" and len(parts) == 2:
            names[int(parts[0])] = parts[1]
        elif section == "edges" and len(parts) == 2:
            i, j = sorted(map(int, parts))
            edges.append((i, j))
        else:
            raise ModelError(f"malformed line in edge list: {raw!r}")
    return names, edges


def load_florentine(latent: bool = False, two_star: str = "standard") -> Dataset:
    """Padgett's 16-family business network as an edge-indicator vector."""
    try:
        text = resources.files("mrfbayes.data").joinpath(FLORENTINE).read_text()
    except (FileNotFoundError, OSError) as exc:
        raise ModelError(f"bundled Florentine data missing: {exc}") from exc
    names, edges = _parse_edge_list(text)
    n = len(names)
    if sorted(names) != list(range(n)) or n < 2:
        raise ModelError("Florentine node table is corrupt")
    pos = {tuple(e): k for k, e in enumerate(edge_index(n).tolist())}
    y = np.zeros(len(pos), dtype=np.int8)
    for e in edges:
        if e not in pos:
            raise ModelError(f"edge {e} out of range")
        y[pos[e]] = 1
    if int(y.sum()) != len(set(edges)):
        raise ModelError("duplicate edges in Florentine data")
    model = ErgmModel(n, latent=latent, two_star=two_star)
    return Dataset(model, y, meta={"name": "florentine_business", "families": [names[k] for k in range(n)]})
