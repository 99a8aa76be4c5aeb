"""Label-aware graph convolution over the character relation graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from . import numkit as nk
from .numkit import Tensor


@dataclass
class FusionOutput:
    hD: Tensor          # n × d_h
    B: Tensor           # n × n × d_beta, final-layer relation encodings
    alphas: List[np.ndarray]


def lagcn_param_shapes(d_h, d_r, d_p, d_beta, layers, n_rel, n_pos) -> Dict[str, tuple]:
    if d_h % 4:
        raise ValueError("d_h must be divisible by 4")
    if layers < 1:
        raise ValueError("LAGCN needs at least one layer")
    shapes = {"lagcn.rel_emb": (n_rel, d_r), "lagcn.pos_emb": (n_pos, d_p)}
    for l in range(layers):
        shapes[f"lagcn.{l}.W1"] = (d_h, d_h // 2)
        shapes[f"lagcn.{l}.W2"] = (d_r, d_h // 4)
        shapes[f"lagcn.{l}.W3"] = (d_p, d_h // 4)
        shapes[f"lagcn.{l}.W4"] = (d_h + d_p + d_r, d_beta)
    return shapes


def lagcn_layer(h_prev: Tensor, r: Tensor, p: Tensor, d: np.ndarray,
                W1: Tensor, W2: Tensor, W3: Tensor, W4: Tensor):
    """One layer.  ``r`` is the n×n×d_r relation embedding grid, ``p`` the n×d_p
    per-character POS embeddings, ``d`` the 0/1 adjacency.

    Returns ``(h_next, beta, alpha)``.
    """
    n = h_prev.shape[0]
    # beta[i, j] = W4 [h_j || p_j || r_ij]
    hp = nk.concat([h_prev, p])
    beta = nk.matmul(nk.concat([_along_rows(hp, n), r]), W4)
    score = nk.sum_all(beta, axis=-1)
    alpha = nk.masked_softmax(score, d)
    # message[i, j] = W1 h_j || W2 r_ij || W3 p_j
    msg = nk.concat([_along_rows(nk.matmul(h_prev, W1), n), nk.matmul(r, W2),
                     _along_rows(nk.matmul(p, W3), n)])
    weighted = nk.mul(msg, nk.reshape(alpha, (n, n, 1)))
    h_next = nk.relu(nk.sum_all(weighted, axis=1))
    return h_next, beta, alpha


def _along_rows(x: Tensor, n: int) -> Tensor:
    """Broadcast a per-character matrix so that ``out[i, j] = x[j]``."""
    return nk.expand(nk.reshape(x, (1,) + x.shape), (n,) + x.shape)


def fuse(h: Tensor, rel_ids: np.ndarray, pos_ids: np.ndarray, d: np.ndarray,
         params: Dict[str, Tensor], layers: int) -> FusionOutput:
    """Run ``layers`` LAGCN layers; B is the last layer's beta grid."""
    n = h.shape[0]
    if n == 0:
        d_beta = params["lagcn.0.W4"].shape[1]
        return FusionOutput(h, nk.Tensor(np.zeros((0, 0, d_beta), dtype=h.dtype)), [])
    r = nk.take(params["lagcn.rel_emb"], rel_ids)
    p = nk.take(params["lagcn.pos_emb"], pos_ids)
    alphas = []
    beta = None
    for l in range(layers):
        h, beta, alpha = lagcn_layer(h, r, p, d, params[f"lagcn.{l}.W1"], params[f"lagcn.{l}.W2"],
                                     params[f"lagcn.{l}.W3"], params[f"lagcn.{l}.W4"])
        alphas.append(alpha.data)
    return FusionOutput(h, beta, alphas)
