"""The dual-tower forecaster.

History pathway: the look-back window is transposed so each variable's series
is one attention token; multi-head attention mixes variables, a merge matrix
returns to series length, a variable-to-latent map compresses, the target
variable's row is selected and projected into the shared alignment space.

Event pathway: summary token + position embeddings are sum-pooled per future
date and added to the history vector.

Each pathway feeds its own residual feed-forward tower
(``z <- LeakyReLU(BN(z + Dropout(W z)))``) with a per-horizon linear head;
the final forecast blends the two head outputs with a fixed weight on the
trend side.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DimensionMismatch, MissingSummary, PositionOverflow, ShapeMismatch
from .parsing import SummaryFields
from .semantic import SemanticEmbeddingParams, Vocab, init_semantic_params, summary_token_ids

TREND = "trend"
EVENT = "event"
MODE_TRAIN = "train"
MODE_EVAL = "eval"


@dataclass
class ModelConfig:
    n_features: int = 4
    look_back: int = 14
    target_index: int = 1  # 1-based variable index of the forecast target
    n_heads: int = 4
    head_dim: int = 16
    latent_dim: int = 64
    align_dim: int = 1024
    tower_layers: int = 3
    dropout: float = 0.1
    leaky_slope: float = 0.01
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    horizons: int = 4
    max_positions: int = 64

    def validate(self) -> None:
        if not (1 <= self.target_index <= self.n_features):
            raise ValueError(
                f"target_index {self.target_index} outside 1..{self.n_features}"
            )
        for name in ("look_back", "n_heads", "head_dim", "latent_dim", "align_dim",
                     "tower_layers", "horizons", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class EncoderParams:
    wq: list[np.ndarray]  # per head, [look_back, head_dim]
    wk: list[np.ndarray]
    wv: list[np.ndarray]
    merge: np.ndarray  # [n_heads * head_dim, look_back]
    latent: np.ndarray  # [look_back, latent_dim]
    align: np.ndarray  # [latent_dim, align_dim]


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class TowerLayer:
    weight: np.ndarray  # [align_dim, align_dim]
    bn: BatchNormParams


@dataclass
class TowerParams:
    layers: list[TowerLayer]


@dataclass
class HeadParams:
    trend_w: np.ndarray  # [align_dim, horizons]
    trend_b: np.ndarray
    event_w: np.ndarray
    event_b: np.ndarray


@dataclass
class ModelParams:
    semantic: SemanticEmbeddingParams
    encoder: EncoderParams
    trend_tower: TowerParams
    event_tower: TowerParams
    heads: HeadParams


@dataclass(frozen=True)
class HistoryWindow:
    """A normalized look-back window, one column per variable."""

    values: np.ndarray  # [look_back, n_features]
    target_index: int  # 1-based

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ShapeMismatch(f"window must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("window contains non-finite values")
        if not (1 <= self.target_index <= v.shape[1]):
            raise ValueError(
                f"target_index {self.target_index} outside 1..{v.shape[1]}"
            )


def _uniform(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    scale = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def init_model_params(
    cfg: ModelConfig, vocab_size: int, rng: np.random.Generator, dtype=np.float32
) -> ModelParams:
    """Seeded initialization; parameter traversal order is fixed by
    :func:`named_arrays` and defines the checkpoint layout."""
    cfg.validate()
    T, dk, dm, A, H = cfg.look_back, cfg.head_dim, cfg.latent_dim, cfg.align_dim, cfg.horizons
    semantic = init_semantic_params(vocab_size, A, cfg.max_positions, rng, dtype)
    encoder = EncoderParams(
        wq=[_uniform(rng, T, (T, dk), dtype) for _ in range(cfg.n_heads)],
        wk=[_uniform(rng, T, (T, dk), dtype) for _ in range(cfg.n_heads)],
        wv=[_uniform(rng, T, (T, dk), dtype) for _ in range(cfg.n_heads)],
        merge=_uniform(rng, cfg.n_heads * dk, (cfg.n_heads * dk, T), dtype),
        latent=_uniform(rng, T, (T, dm), dtype),
        align=_uniform(rng, dm, (dm, A), dtype),
    )

    def tower() -> TowerParams:
        layers = []
        for _ in range(cfg.tower_layers):
            layers.append(
                TowerLayer(
                    weight=_uniform(rng, A, (A, A), dtype),
                    bn=BatchNormParams(
                        gamma=np.ones(A, dtype=dtype),
                        beta=np.zeros(A, dtype=dtype),
                        running_mean=np.zeros(A, dtype=dtype),
                        running_var=np.ones(A, dtype=dtype),
                    ),
                )
            )
        return TowerParams(layers)

    trend_tower = tower()
    event_tower = tower()
    heads = HeadParams(
        trend_w=_uniform(rng, A, (A, H), dtype),
        trend_b=np.zeros(H, dtype=dtype),
        event_w=_uniform(rng, A, (A, H), dtype),
        event_b=np.zeros(H, dtype=dtype),
    )
    return ModelParams(semantic, encoder, trend_tower, event_tower, heads)


def named_arrays(params: ModelParams):
    """Yield ``(name, array, trainable)`` in the canonical checkpoint order."""
    yield "sem.token", params.semantic.token_table, True
    yield "sem.pos", params.semantic.pos_table, True
    enc = params.encoder
    for i in range(len(enc.wq)):
        yield f"enc.head{i}.wq", enc.wq[i], True
        yield f"enc.head{i}.wk", enc.wk[i], True
        yield f"enc.head{i}.wv", enc.wv[i], True
    yield "enc.merge", enc.merge, True
    yield "enc.latent", enc.latent, True
    yield "enc.align", enc.align, True
    for tower_name, tower in ((TREND, params.trend_tower), (EVENT, params.event_tower)):
        for l, layer in enumerate(tower.layers):
            yield f"{tower_name}.l{l}.w", layer.weight, True
            yield f"{tower_name}.l{l}.gamma", layer.bn.gamma, True
            yield f"{tower_name}.l{l}.beta", layer.bn.beta, True
            yield f"{tower_name}.l{l}.rmean", layer.bn.running_mean, False
            yield f"{tower_name}.l{l}.rvar", layer.bn.running_var, False
    yield "head.trend.w", params.heads.trend_w, True
    yield "head.trend.b", params.heads.trend_b, True
    yield "head.event.w", params.heads.event_w, True
    yield "head.event.b", params.heads.event_b, True


def tensor_pack(params: ModelParams) -> dict[str, Tensor]:
    """Wrap every trainable array in a grad-enabled Tensor sharing storage."""
    pack = {}
    for name, arr, trainable in named_arrays(params):
        if trainable:
            pack[name] = Tensor(arr, requires_grad=True, name=name)
    return pack


# ---------------------------------------------------------------------------
# Graph builders (Tensor domain).  ``P`` maps parameter names to Tensors;
# ``params`` provides the BN running-stat arrays (mutated during training).


def _attention_head(x_inv: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, head_dim: int) -> Tensor:
    q = x_inv @ wq
    k = x_inv @ wk
    v = x_inv @ wv
    scores = (q @ k.transpose_last2()) * (1.0 / np.sqrt(head_dim))
    return ad.softmax(scores, axis=-1) @ v


def encoder_graph(x: Tensor, P: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """[batch, look_back, n_features] -> [batch, align_dim]."""
    x_inv = x.transpose_last2()  # each variable's series becomes a token
    heads = [
        _attention_head(
            x_inv, P[f"enc.head{i}.wq"], P[f"enc.head{i}.wk"], P[f"enc.head{i}.wv"], cfg.head_dim
        )
        for i in range(cfg.n_heads)
    ]
    merged = ad.concat(heads, axis=-1) @ P["enc.merge"]  # [B, d, look_back]
    latent = merged @ P["enc.latent"]  # [B, d, latent_dim]
    target_row = ad.select_index(latent, cfg.target_index - 1, axis=1)  # [B, latent_dim]
    return target_row @ P["enc.align"]  # [B, align_dim]


def _batchnorm_graph(
    z: Tensor,
    P: dict[str, Tensor],
    bn: BatchNormParams,
    prefix: str,
    cfg: ModelConfig,
    mode: str,
) -> Tensor:
    gamma, beta = P[f"{prefix}.gamma"], P[f"{prefix}.beta"]
    if mode == MODE_TRAIN:
        mu = z.mean(axis=0)
        centered = z - mu
        var = (centered * centered).mean(axis=0)
        inv = ad.power(var + cfg.bn_eps, -0.5)
        out = centered * inv * gamma + beta
        m = cfg.bn_momentum
        bn.running_mean[...] = m * bn.running_mean + (1.0 - m) * mu.data
        bn.running_var[...] = m * bn.running_var + (1.0 - m) * var.data
        return out
    inv = 1.0 / np.sqrt(bn.running_var + cfg.bn_eps)
    scale = Tensor((inv).astype(z.data.dtype))
    mean = Tensor(bn.running_mean)
    return (z - mean) * scale * gamma + beta


def tower_graph(
    z: Tensor,
    P: dict[str, Tensor],
    tower: TowerParams,
    name: str,
    cfg: ModelConfig,
    mode: str,
    rng: np.random.Generator | None,
) -> Tensor:
    """Residual FFN stack: z <- LeakyReLU(BN(z + Dropout(W z)))."""
    for l, layer in enumerate(tower.layers):
        pre = z @ P[f"{name}.l{l}.w"]
        if mode == MODE_TRAIN and cfg.dropout > 0.0:
            keep = (rng.random(pre.shape) >= cfg.dropout).astype(pre.data.dtype)
            pre = pre * Tensor(keep * (1.0 / (1.0 - cfg.dropout)))
        z = _batchnorm_graph(z + pre, P, layer.bn, f"{name}.l{l}", cfg, mode)
        z = ad.leaky_relu(z, cfg.leaky_slope)
    return z


def semantic_graph(
    ids: np.ndarray, mask: np.ndarray, P: dict[str, Tensor], cfg: ModelConfig
) -> Tensor:
    """[batch, horizons, seq] padded token ids -> [batch, horizons, align_dim]."""
    seq_len = ids.shape[-1]
    if seq_len > cfg.max_positions:
        raise PositionOverflow(seq_len, cfg.max_positions)
    tok = ad.gather_rows(P["sem.token"], ids)  # [B, H, L, A]
    pos = ad.gather_rows(P["sem.pos"], np.arange(seq_len))  # [L, A]
    contrib = (tok + pos) * Tensor(mask[..., None])
    return contrib.sum(axis=2)


def forward_graph(
    P: dict[str, Tensor],
    params: ModelParams,
    cfg: ModelConfig,
    x: Tensor,
    ids: np.ndarray,
    mask: np.ndarray,
    mode: str,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """Run both pathways; returns per-horizon head outputs
    ``(trend [B, H], event [B, H])`` before blending."""
    B = x.shape[0]
    H = cfg.horizons
    hist = encoder_graph(x, P, cfg)  # [B, A]

    z_trend = tower_graph(hist, P, params.trend_tower, TREND, cfg, mode, rng)
    y_trend = z_trend @ P["head.trend.w"] + P["head.trend.b"]  # [B, H]

    sem = semantic_graph(ids, mask, P, cfg)  # [B, H, A]
    fused = hist.reshape(B, 1, cfg.align_dim) + sem  # [B, H, A]
    flat = fused.reshape(B * H, cfg.align_dim)
    z_event = tower_graph(flat, P, params.event_tower, EVENT, cfg, mode, rng)
    all_heads = (z_event @ P["head.event.w"] + P["head.event.b"]).reshape(B, H, H)
    eye = Tensor(np.eye(H, dtype=x.data.dtype))
    y_event = (all_heads * eye).sum(axis=-1)  # horizon h keeps head unit h

    return y_trend, y_event


def blend(y_trend, y_event, trend_weight: float):
    """Final forecast: affine mix with ``trend_weight`` on the trend head."""
    if not (0.0 <= trend_weight <= 1.0):
        raise ValueError(f"trend_weight {trend_weight} outside [0, 1]")
    return y_trend * trend_weight + y_event * (1.0 - trend_weight)


# ---------------------------------------------------------------------------
# Plain-array wrappers (inference/test surface over the same graph code)


def attention_head(
    x_inv: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray
) -> np.ndarray:
    """Single attention head over [n_variables, look_back] input."""
    x_inv = np.asarray(x_inv)
    if x_inv.ndim != 2 or wq.shape[0] != x_inv.shape[1]:
        raise ShapeMismatch(
            f"x_inv {x_inv.shape} incompatible with wq {np.asarray(wq).shape}"
        )
    out = _attention_head(Tensor(x_inv), Tensor(wq), Tensor(wk), Tensor(wv), wq.shape[1])
    return out.data


def encode_history(window: HistoryWindow, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """History pathway for one window -> alignment-space vector."""
    v = np.asarray(window.values)
    if v.shape != (cfg.look_back, cfg.n_features):
        raise ShapeMismatch(
            f"window shape {v.shape} != ({cfg.look_back}, {cfg.n_features})"
        )
    run_cfg = replace(cfg, target_index=window.target_index)
    P = tensor_pack(params)
    out = encoder_graph(Tensor(v[None]), P, run_cfg)
    return out.data[0]


def fuse(hist_vec: np.ndarray, sem_vec: np.ndarray) -> np.ndarray:
    hist_vec = np.asarray(hist_vec)
    sem_vec = np.asarray(sem_vec)
    if hist_vec.shape != sem_vec.shape:
        raise DimensionMismatch(
            f"history {hist_vec.shape} vs semantic {sem_vec.shape}"
        )
    return hist_vec + sem_vec


def tower_forward(
    x: np.ndarray,
    params: ModelParams,
    cfg: ModelConfig,
    which: str = TREND,
    mode: str = MODE_EVAL,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One tower applied to a single alignment-space vector."""
    tower = params.trend_tower if which == TREND else params.event_tower
    P = tensor_pack(params)
    out = tower_graph(Tensor(np.asarray(x)[None]), P, tower, which, cfg, mode, rng)
    return out.data[0]


def summaries_to_id_matrix(
    per_horizon: Sequence[SummaryFields | None],
    vocab: Vocab,
    cfg: ModelConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Pack one summary per horizon into padded id/mask matrices [H, L]."""
    if len(per_horizon) < cfg.horizons:
        raise MissingSummary(len(per_horizon) + 1)
    seqs = []
    for h in range(cfg.horizons):
        fields = per_horizon[h]
        if fields is None:
            raise MissingSummary(h + 1)
        ids = summary_token_ids(fields, vocab)
        if len(ids) > cfg.max_positions:
            raise PositionOverflow(len(ids), cfg.max_positions)
        seqs.append(ids)
    width = max((len(s) for s in seqs), default=0) or 1
    ids_mat = np.zeros((cfg.horizons, width), dtype=np.int64)
    mask = np.zeros((cfg.horizons, width), dtype=np.float64)
    for h, seq in enumerate(seqs):
        ids_mat[h, : len(seq)] = seq
        mask[h, : len(seq)] = 1.0
    return ids_mat, mask


def forecast_components(
    window: HistoryWindow,
    per_horizon: Sequence[SummaryFields | None],
    params: ModelParams,
    cfg: ModelConfig,
    vocab: Vocab,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-horizon (trend, event) head outputs for one window, eval mode."""
    v = np.asarray(window.values)
    if v.shape != (cfg.look_back, cfg.n_features):
        raise ShapeMismatch(
            f"window shape {v.shape} != ({cfg.look_back}, {cfg.n_features})"
        )
    ids, mask = summaries_to_id_matrix(per_horizon, vocab, cfg)
    run_cfg = replace(cfg, target_index=window.target_index)
    P = tensor_pack(params)
    mask = mask.astype(v.dtype) if v.dtype.kind == "f" else mask
    y_t, y_e = forward_graph(
        P, params, run_cfg, Tensor(v[None]), ids[None], mask[None], MODE_EVAL
    )
    return y_t.data[0], y_e.data[0]


def forecast(
    window: HistoryWindow,
    per_horizon: Sequence[SummaryFields | None],
    params: ModelParams,
    cfg: ModelConfig,
    vocab: Vocab,
    trend_weight: float,
) -> np.ndarray:
    """Blended per-horizon forecast for one window (normalized space)."""
    y_t, y_e = forecast_components(window, per_horizon, params, cfg, vocab)
    return blend(Tensor(y_t), Tensor(y_e), trend_weight).data
