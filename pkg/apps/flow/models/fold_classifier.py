"""
Rotation-invariant relational graph network over Cα graphs.

Nodes carry an index encoding and a signed Cα dihedral (which breaks mirror
symmetry). Edges come in six relations: sequence offsets -2..2 and spatial
neighbours within the cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch
from scipy.spatial.distance import pdist, squareform
from torch import nn
from torch_geometric.data import Batch, Data
from torch_geometric.nn import MessagePassing, global_add_pool

from apps.flow.schemas.model import ClassifierConfig
from libs.structures.backbone import Backbone, as_coords
from libs.structures.geometry import dihedral_angles

SEQUENTIAL_OFFSETS = (-2, -1, 0, 1, 2)
SPATIAL_RELATION = len(SEQUENTIAL_OFFSETS)
N_RELATIONS = SPATIAL_RELATION + 1


def _sinusoid(positions: np.ndarray, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    args = positions[:, None] * freqs[None, :]
    enc = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        enc = np.pad(enc, ((0, 0), (0, 1)))
    return enc


def rbf_expand(distances: np.ndarray, n_rbf: int, d_max: float) -> np.ndarray:
    centers = np.linspace(0.0, d_max, n_rbf)
    width = d_max / (n_rbf - 1)
    return np.exp(-(((distances[:, None] - centers[None, :]) / width) ** 2))


@dataclass
class ProteinGraph:
    node_features: np.ndarray  # (L, idx_enc_dim + 3)
    edge_index: np.ndarray  # (2, E) source, target
    edge_type: np.ndarray  # (E,) relation id
    edge_features: np.ndarray  # (E, n_rbf + 2 * max_relative_position + 1)
    distances: np.ndarray  # (E,) Å

    def __post_init__(self):
        n = self.node_features.shape[0]
        if self.edge_index.shape[0] != 2 or self.edge_index.shape[1] != self.edge_type.shape[0]:
            raise ValueError("edge_index and edge_type disagree on the number of edges")
        if self.edge_index.size and (self.edge_index.min() < 0 or self.edge_index.max() >= n):
            raise ValueError("Edge references a node outside the graph")
        if self.edge_type.size and (self.edge_type.min() < 0 or self.edge_type.max() >= N_RELATIONS):
            raise ValueError("Unknown relation type")

    @property
    def n_nodes(self) -> int:
        return int(self.node_features.shape[0])

    def edges_of(self, relation: int) -> set[Tuple[int, int]]:
        sel = self.edge_type == relation
        return set(zip(self.edge_index[0, sel].tolist(), self.edge_index[1, sel].tolist()))

    def to_data(self) -> Data:
        return Data(
            x=torch.as_tensor(self.node_features, dtype=torch.float64),
            edge_index=torch.as_tensor(self.edge_index, dtype=torch.long),
            edge_type=torch.as_tensor(self.edge_type, dtype=torch.long),
            edge_attr=torch.as_tensor(self.edge_features, dtype=torch.float64),
            num_nodes=self.n_nodes,
        )


def build_graph(backbone: Backbone | np.ndarray, config: ClassifierConfig) -> ProteinGraph:
    coords = as_coords(backbone)
    n = coords.shape[0]
    if n < 5:
        raise ValueError(f"Graph construction needs at least 5 residues, got {n}")
    dist = squareform(pdist(coords))

    sources: List[np.ndarray] = []
    targets: List[np.ndarray] = []
    types: List[np.ndarray] = []
    for relation, offset in enumerate(SEQUENTIAL_OFFSETS):
        src = np.arange(max(0, -offset), min(n, n - offset))
        sources.append(src)
        targets.append(src + offset)
        types.append(np.full(src.shape, relation))
    src, dst = np.nonzero((dist < config.spatial_cutoff) & ~np.eye(n, dtype=bool))
    sources.append(src)
    targets.append(dst)
    types.append(np.full(src.shape, SPATIAL_RELATION))

    edge_index = np.stack([np.concatenate(sources), np.concatenate(targets)]).astype(np.int64)
    edge_type = np.concatenate(types).astype(np.int64)
    edge_dist = dist[edge_index[0], edge_index[1]]
    k = config.max_relative_position
    rel = np.clip(edge_index[1] - edge_index[0], -k, k) + k
    edge_features = np.concatenate(
        [rbf_expand(edge_dist, config.n_rbf, config.rbf_max), np.eye(2 * k + 1)[rel]], axis=1
    )

    # dihedral over (i-1, i, i+1, i+2) assigned to residue i
    dihedral = np.zeros(n)
    valid = np.zeros(n)
    dihedral[1 : n - 2] = np.radians(dihedral_angles(coords))
    valid[1 : n - 2] = 1.0
    node_features = np.concatenate(
        [
            _sinusoid(np.arange(n, dtype=np.float64), config.idx_enc_dim),
            (np.sin(dihedral) * valid)[:, None],
            (np.cos(dihedral) * valid)[:, None],
            valid[:, None],
        ],
        axis=1,
    )
    return ProteinGraph(node_features, edge_index, edge_type, edge_features, edge_dist)


class RelationalConv(MessagePassing):
    """Sum of per-relation linear messages (node state ++ edge features) plus a self term."""

    def __init__(self, hidden_dim: int, edge_dim: int, dropout: float):
        super().__init__(aggr="add")
        self.relations = nn.ModuleList(
            nn.Linear(hidden_dim + edge_dim, hidden_dim) for _ in range(N_RELATIONS)
        )
        self.self_loop = nn.Linear(hidden_dim, hidden_dim)
        self.norm = nn.LayerNorm(hidden_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x, edge_index, edge_type, edge_attr):
        agg = self.propagate(edge_index, x=x, edge_type=edge_type, edge_attr=edge_attr)
        update = self.dropout(torch.relu(self.norm(self.self_loop(x) + agg)))
        return x + update

    def message(self, x_j, edge_type, edge_attr):
        inputs = torch.cat([x_j, edge_attr], dim=-1)
        out = inputs.new_zeros(inputs.shape[0], self.self_loop.out_features)
        for relation, linear in enumerate(self.relations):
            sel = edge_type == relation
            if sel.any():
                out[sel] = linear(inputs[sel])
        return out


class FoldClassifier(nn.Module):
    """C/A/T heads over a sum-pooled graph embedding (the feature vector φ)."""

    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.config = config
        edge_dim = config.n_rbf + 2 * config.max_relative_position + 1
        self.atom_embedding = nn.Embedding(1, config.hidden_dim)  # Cα only
        self.node_in = nn.Linear(config.idx_enc_dim + 3, config.hidden_dim)
        self.layers = nn.ModuleList(
            RelationalConv(config.hidden_dim, edge_dim, config.dropout) for _ in range(config.n_layers)
        )
        self.heads = nn.ModuleList(nn.Linear(config.hidden_dim, size) for size in config.vocab_sizes)
        self.double()

    @property
    def feature_dim(self) -> int:
        return self.config.hidden_dim

    def forward(self, graphs: Sequence[ProteinGraph]) -> Tuple[List[torch.Tensor], torch.Tensor]:
        """Per-level logits (B, K_level) and pooled features (B, hidden_dim)."""
        batch = Batch.from_data_list([graph.to_data() for graph in graphs])
        atom = self.atom_embedding(torch.zeros(batch.num_nodes, dtype=torch.long))
        h = self.node_in(batch.x) + atom
        for layer in self.layers:
            h = layer(h, batch.edge_index, batch.edge_type, batch.edge_attr)
        features = global_add_pool(h, batch.batch)
        return [head(features) for head in self.heads], features
