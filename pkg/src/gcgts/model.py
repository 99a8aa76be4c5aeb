"""The grid network: encoder, fusion, unit/image convolution, inference, loss."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import numkit as nk
from .corpus import (FIRST_CHAR, MODES, LabelGrid, Sentence, Vocabs, char_relation_matrix,
                     grid_mask)
from .fusion import FusionOutput, fuse, lagcn_param_shapes
from .numkit import Tensor

N_LABELS = 4

PRESETS: Dict[str, Dict[str, bool]] = {
    "gts": dict(use_lagcn=False, use_b_tensor=False, use_uc=False, use_ic=False),
    "gts-uc": dict(use_lagcn=False, use_b_tensor=False, use_uc=True, use_ic=False),
    "gts-ic": dict(use_lagcn=False, use_b_tensor=False, use_uc=False, use_ic=True),
    "dgts": dict(use_lagcn=True, use_b_tensor=False, use_uc=False, use_ic=False),
    "dbgts": dict(use_lagcn=True, use_b_tensor=True, use_uc=False, use_ic=False),
    "gcgts": dict(use_lagcn=True, use_b_tensor=True, use_uc=True, use_ic=True),
}

ENCODERS = ("embedding", "file")


class ConfigError(ValueError):
    pass


class IngestionError(ValueError):
    """Sidecar vectors missing or malformed."""


@dataclass
class ModelConfig:
    d_h: int = 128
    d_r: int = 32
    d_p: int = 32
    d_beta: int = 32
    d_g: int = 128
    d_z: int = 128
    layers: int = 2
    rounds: int = 2
    kernels: Tuple[int, ...] = (2, 3)
    mode: str = FIRST_CHAR
    use_lagcn: bool = True
    use_b_tensor: bool = True
    use_uc: bool = True
    use_ic: bool = True
    encoder: str = "embedding"
    lr: float = 5e-5
    batch_size: int = 12
    label_count: int = N_LABELS
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        self.kernels = tuple(int(k) for k in self.kernels)
        self.validate()

    def validate(self):
        if self.use_b_tensor and not self.use_lagcn:
            raise ConfigError("use_b_tensor requires use_lagcn")
        if self.label_count != N_LABELS:
            raise ConfigError("label_count must be 4")
        if self.d_h % 4:
            raise ConfigError("d_h must be divisible by 4")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.layers < 1 or self.rounds < 0:
            raise ConfigError("layers >= 1 and rounds >= 0 required")

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "ModelConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["kernels"] = list(self.kernels)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**obj)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class GridTensors:
    h_row: Tensor
    h_col: Tensor
    G_UC: Tensor
    G_conv: Dict[str, Tensor] = field(default_factory=dict)
    G_IC: Optional[Tensor] = None


@dataclass
class PredictionGrid:
    p: List[Tensor]
    z: List[Tensor]
    grid: GridTensors
    fusion: Optional[FusionOutput]
    mask: np.ndarray

    @property
    def final(self) -> Tensor:
        return self.p[-1]


# ----------------------------------------------------------- sidecar vectors

SIDECAR_MAGIC = b"GCVEC1\n"


def write_vectors(path, vectors: Dict[str, np.ndarray]) -> None:
    """Sidecar layout: magic, then per sentence ``id\\n n\\n d_h\\n`` and n·d_h LE f32."""
    with open(path, "wb") as fh:
        fh.write(SIDECAR_MAGIC)
        for sid, block in vectors.items():
            block = np.asarray(block, dtype="<f4")
            if block.ndim != 2:
                raise IngestionError(f"vectors for {sid!r} must be a matrix")
            if "\n" in sid:
                raise IngestionError("sentence ids may not contain newlines")
            fh.write(f"{sid}\n{block.shape[0]}\n{block.shape[1]}\n".encode("utf-8"))
            fh.write(block.tobytes())


def read_vectors(path) -> Dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if not buf.startswith(SIDECAR_MAGIC):
        raise IngestionError("not a GCVEC1 sidecar file")
    pos = len(SIDECAR_MAGIC)
    out: Dict[str, np.ndarray] = {}

    def line():
        nonlocal pos
        end = buf.find(b"\n", pos)
        if end < 0:
            raise IngestionError("truncated sidecar header")
        text = buf[pos:end].decode("utf-8")
        pos = end + 1
        return text

    while pos < len(buf):
        sid = line()
        try:
            n, d = int(line()), int(line())
        except ValueError:
            raise IngestionError(f"bad dimensions for {sid!r}") from None
        size = 4 * n * d
        if pos + size > len(buf):
            raise IngestionError(f"truncated vector block for {sid!r}")
        out[sid] = np.frombuffer(buf, dtype="<f4", count=n * d, offset=pos).reshape(n, d).copy()
        pos += size
    return out


# -------------------------------------------------------------------- model

def param_shapes(config: ModelConfig, vocabs: Vocabs) -> Dict[str, tuple]:
    c = config
    shapes: Dict[str, tuple] = {}
    if c.encoder == "embedding":
        shapes["embed.char"] = (len(vocabs.chars), c.d_h)
    if c.use_lagcn:
        shapes.update(lagcn_param_shapes(c.d_h, c.d_r, c.d_p, c.d_beta, c.layers,
                                         len(vocabs.rels), len(vocabs.pos)))
    if c.use_uc:
        shapes["uc.U_row"] = (c.d_h, c.d_h)
        shapes["uc.U_col"] = (c.d_h, c.d_h)
        shapes["uc.W_G"] = (2 * c.d_h, c.d_g)
        shapes["uc.b_G"] = (c.d_g,)
    else:
        shapes["pair.W"] = (2 * c.d_h, c.d_g)
        shapes["pair.b"] = (c.d_g,)
    if c.use_ic:
        for axis in ("row", "col"):
            for k in c.kernels:
                shapes[f"ic.{axis}{k}.W"] = (k * c.d_g, c.d_g)
                shapes[f"ic.{axis}{k}.b"] = (c.d_g,)
        shapes["ic.W"] = ((2 * len(c.kernels) + 1) * c.d_g, c.d_g)
        shapes["ic.b"] = (c.d_g,)
    shapes["pred.W0"] = (c.d_g, N_LABELS)
    shapes["pred.b0"] = (N_LABELS,)
    if c.rounds > 0:
        shapes["infer.W1"] = (2 * c.d_h, c.d_z)
        if c.use_b_tensor:
            shapes["infer.W1_beta"] = (c.d_beta, c.d_z)
        shapes["infer.W2"] = (c.d_z + 3 * N_LABELS, c.d_z)
        shapes["infer.W3"] = (c.d_z, N_LABELS)
        shapes["infer.b2"] = (N_LABELS,)
    return shapes


def init_params(config: ModelConfig, vocabs: Vocabs, seed: Optional[int] = None) -> Dict[str, Tensor]:
    seed = config.seed if seed is None else seed
    dt = config.np_dtype
    params = {}
    for name, shape in param_shapes(config, vocabs).items():
        if len(shape) == 1:
            data = np.zeros(shape, dtype=dt)
        else:
            data = nk.glorot_uniform(shape, seed, name, dt)
            if name.endswith("emb") or name == "embed.char":
                data[0] = 0  # padding row
        params[name] = nk.parameter(data, name=name)
    return params


@dataclass
class SentenceInputs:
    """Everything the forward pass needs from one sentence, precomputed."""
    n: int
    char_ids: np.ndarray
    pos_ids: np.ndarray
    rel_ids: np.ndarray
    d: np.ndarray
    mask: np.ndarray
    vectors: Optional[np.ndarray] = None


def prepare(sentence: Sentence, vocabs: Vocabs, config: ModelConfig,
            vectors: Optional[Dict[str, np.ndarray]] = None) -> SentenceInputs:
    graph = char_relation_matrix(sentence)
    owner = sentence.word_of_char()
    block = None
    if config.encoder == "file":
        if vectors is None or sentence.id not in vectors:
            raise IngestionError(f"no sidecar vectors for sentence {sentence.id!r}")
        block = vectors[sentence.id]
        if block.shape != (len(sentence), config.d_h):
            raise IngestionError(
                f"sidecar block for {sentence.id!r} has shape {block.shape}, "
                f"expected {(len(sentence), config.d_h)}")
    return SentenceInputs(
        n=len(sentence),
        char_ids=np.array([vocabs.chars[c] for c in sentence.chars], dtype=np.int64),
        pos_ids=np.array([vocabs.pos[sentence.pos[owner[i]]] for i in range(len(sentence))],
                         dtype=np.int64),
        rel_ids=graph.rel_ids(vocabs.rels),
        d=graph.d,
        mask=grid_mask(sentence, config.mode),
        vectors=block,
    )


def encode_chars(inputs: SentenceInputs, params: Dict[str, Tensor], config: ModelConfig) -> Tensor:
    if config.encoder == "embedding":
        return nk.take(params["embed.char"], inputs.char_ids)
    return nk.Tensor(inputs.vectors.astype(config.np_dtype))


def unit_convolution(hD: Tensor, params: Dict[str, Tensor]):
    """Row/column role projections and the pair grid ``W_G(h'_i || h''_j) + b``."""
    h_row = nk.matmul(hD, params["uc.U_row"])
    h_col = nk.matmul(hD, params["uc.U_col"])
    g = nk.add(nk.matmul(nk.pair_concat(h_row, h_col), params["uc.W_G"]), params["uc.b_G"])
    return h_row, h_col, g


def pair_grid(h: Tensor, params: Dict[str, Tensor]) -> Tensor:
    return nk.add(nk.matmul(nk.pair_concat(h, h), params["pair.W"]), params["pair.b"])


def image_convolution(G: Tensor, params: Dict[str, Tensor], kernels=(2, 3)):
    """1×k kernels along rows and k×1 along columns, top/left aligned, zero padded.

    Returns ``(G_IC, conv_maps)``.
    """
    maps = {}
    for axis_name, axis in (("row", 1), ("col", 0)):
        for k in kernels:
            window = nk.concat([G] + [nk.shift(G, axis, s) for s in range(1, k)])
            maps[f"{axis_name}{k}"] = nk.add(nk.matmul(window, params[f"ic.{axis_name}{k}.W"]),
                                             params[f"ic.{axis_name}{k}.b"])
    stacked = nk.concat([maps[f"row{k}"] for k in kernels] + [maps[f"col{k}"] for k in kernels] + [G])
    return nk.add(nk.matmul(stacked, params["ic.W"]), params["ic.b"]), maps


def initial_prediction(g: Tensor, params: Dict[str, Tensor]) -> Tensor:
    return nk.softmax(nk.add(nk.matmul(g, params["pred.W0"]), params["pred.b0"]))


def symmetric_view(p: Tensor) -> Tensor:
    """Full grid whose lower triangle mirrors the upper one."""
    n = p.shape[0]
    upper = np.triu(np.ones((n, n), dtype=p.dtype))[..., None]
    strict = np.triu(np.ones((n, n), dtype=p.dtype), 1)[..., None]
    return nk.add(nk.mul(p, upper), nk.transpose(nk.mul(p, strict), (1, 0, 2)))


def pooled_evidence(p: Tensor, mask: np.ndarray) -> Tensor:
    """Per-character elementwise max of label probabilities over its row/column.

    Only supervised cells take part; a character with none gets zeros.
    """
    full = (mask | mask.T).astype(bool)
    return nk.max_over(symmetric_view(p), axis=1, where=full[:, :, None])


def inference_round(z_prev: Tensor, p_prev: Tensor, mask: np.ndarray, params: Dict[str, Tensor]):
    pooled = pooled_evidence(p_prev, mask)
    # the grid view is symmetric, so the column pool of j equals the row pool of j
    pools = nk.pair_concat(pooled, pooled)
    z = nk.matmul(nk.concat([z_prev, pools, p_prev]), params["infer.W2"])
    p = nk.softmax(nk.add(nk.matmul(z, params["infer.W3"]), params["infer.b2"]))
    return z, p


def initial_features(h_row: Tensor, h_col: Tensor, B: Optional[Tensor], params) -> Tensor:
    z = nk.matmul(nk.pair_concat(h_row, h_col), params["infer.W1"])
    if B is not None:
        z = nk.add(z, nk.matmul(B, params["infer.W1_beta"]))
    return z


class GCGTS:
    """Parameters plus configuration; ``forward`` runs one sentence."""

    def __init__(self, config: ModelConfig, vocabs: Vocabs, params: Optional[Dict[str, Tensor]] = None,
                 vectors: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        self.vocabs = vocabs
        self.params = init_params(config, vocabs) if params is None else params
        self.vectors = vectors
        expected = param_shapes(config, vocabs)
        if set(expected) != set(self.params):
            raise ConfigError("parameter names do not match the configuration")
        for k, shape in expected.items():
            if tuple(self.params[k].shape) != tuple(shape):
                raise ConfigError(f"parameter {k} has shape {self.params[k].shape}, expected {shape}")

    def prepare(self, sentence: Sentence) -> SentenceInputs:
        return prepare(sentence, self.vocabs, self.config, self.vectors)

    def forward(self, sentence, inputs: Optional[SentenceInputs] = None) -> PredictionGrid:
        c = self.config
        params = self.params
        x = self.prepare(sentence) if inputs is None else inputs
        h = encode_chars(x, params, c)
        fusion = None
        B = None
        if c.use_lagcn:
            fusion = fuse(h, x.rel_ids, x.pos_ids, x.d, params, c.layers)
            h = fusion.hD
            if c.use_b_tensor:
                B = fusion.B
        if c.use_uc:
            h_row, h_col, g = unit_convolution(h, params)
        else:
            h_row, h_col, g = h, h, pair_grid(h, params)
        grid = GridTensors(h_row, h_col, g)
        if c.use_ic:
            grid.G_IC, grid.G_conv = image_convolution(g, params, c.kernels)
            g = grid.G_IC
        p = [initial_prediction(g, params)]
        zs = []
        if c.rounds > 0:
            z = initial_features(h_row, h_col, B, params)
            zs.append(z)
            for _ in range(c.rounds):
                z, pt = inference_round(z, p[-1], x.mask, params)
                zs.append(z)
                p.append(pt)
        return PredictionGrid(p, zs, grid, fusion, x.mask)

    def loss(self, sentence: Sentence, gold: LabelGrid, inputs=None) -> Tensor:
        return compute_loss(self.forward(sentence, inputs).final, gold)

    def param_names(self) -> List[str]:
        return sorted(self.params)


def compute_loss(p_final: Tensor, gold: LabelGrid, eps: float = 1e-12) -> Tensor:
    """Summed negative log-likelihood over supervised upper-triangle cells."""
    n = gold.n
    if p_final.shape != (n, n, N_LABELS):
        raise nk.ContractError(f"prediction shape {p_final.shape} does not match gold grid n={n}")
    if np.any(np.tril(gold.mask, -1)):
        raise nk.ContractError("gold mask covers cells below the diagonal")
    return nk.cross_entropy(p_final, gold.labels, weight=gold.mask, eps=eps)
