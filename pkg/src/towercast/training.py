"""Training loop, optimizer, and checkpoint round-trip.

Determinism contract: one seed drives three independent streams (parameter
init, batch shuffling, dropout), so identical configs and data give
bit-identical loss trajectories and parameters.  A checkpoint is a structured
JSON manifest plus a flat little-endian float32 blob holding every tensor in
the canonical :func:`towercast.model.named_arrays` order.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import date as Date
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .data import (
    Dataset,
    NormStats,
    compute_norm_stats,
    normalize,
    train_length,
)
from .errors import EmptyInput, InsufficientData, LengthMismatch, NonFiniteLoss
from .events import EventDatabase, events_for
from .model import (
    MODE_TRAIN,
    ModelConfig,
    ModelParams,
    blend,
    forward_graph,
    init_model_params,
    named_arrays,
    tensor_pack,
)
from .parsing import DEFAULT_FIELD_COUNT, SummaryFields, extract_summary
from .prompting import PromptTemplate, default_template
from .reasoner import AuditLog, reason_oracle
from .semantic import PAD_ID, Vocab, build_vocab, load_vocab, save_vocab, summary_token_ids

CHECKPOINT_MANIFEST = "model.manifest"
CHECKPOINT_BLOB = "model.tensors"
CHECKPOINT_VOCAB = "vocab.txt"
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    trend_weight: float = 0.4
    test_frac: float = 0.2
    use_event_features: bool = True
    dtype: str = "float32"

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.trend_weight <= 1.0):
            raise ValueError("trend_weight must be in [0, 1]")
        if not (0.0 < self.test_frac < 1.0):
            raise ValueError("test_frac must be in (0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


def l2_loss(pred, target) -> float:
    """Mean squared difference over paired values."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise LengthMismatch(f"{pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise EmptyInput("l2_loss of zero observations")
    return float(np.mean((pred - target) ** 2))


# ---------------------------------------------------------------------------
# Event features


def summaries_for_dataset(
    db: EventDatabase,
    ds: Dataset,
    template: PromptTemplate | None = None,
    expected_k: int = DEFAULT_FIELD_COUNT,
    audit: AuditLog | None = None,
) -> dict[tuple[str, Date], SummaryFields]:
    """Oracle-reason every (country, date) in the dataset and parse the
    summaries.  Deterministic iteration order: country, then date."""
    template = template or default_template()
    out: dict[tuple[str, Date], SummaryFields] = {}
    per_country_dates: dict[str, set[Date]] = {}
    for r in ds.regions:
        per_country_dates.setdefault(r.country, set()).update(r.dates)
    for country in sorted(per_country_dates):
        for day in sorted(per_country_dates[country]):
            ctx = events_for(db, country, day)
            raw = reason_oracle(ctx, template, audit=audit)
            out[(country, day)] = extract_summary(raw, expected_k)
    return out


# ---------------------------------------------------------------------------
# Window assembly


@dataclass
class WindowSet:
    x: np.ndarray  # [n, look_back, n_features] normalized
    y: np.ndarray  # [n, horizons] normalized targets
    ids: np.ndarray  # [n, horizons, seq]
    mask: np.ndarray  # [n, horizons, seq]
    region_idx: np.ndarray  # [n] index into dataset/stats order
    origin_idx: np.ndarray  # [n] origin day index within the region series

    @property
    def n_windows(self) -> int:
        return self.x.shape[0]


def _token_table(
    vocab: Vocab,
    summaries: dict[tuple[str, Date], SummaryFields],
    use_events: bool,
) -> dict[tuple[str, Date], list[int]]:
    table: dict[tuple[str, Date], list[int]] = {}
    for key, fields in summaries.items():
        table[key] = summary_token_ids(fields, vocab) if use_events else [PAD_ID]
    return table


def build_windows(
    ds: Dataset,
    stats: NormStats,
    summaries: dict[tuple[str, Date], SummaryFields],
    vocab: Vocab,
    cfg: ModelConfig,
    origin_lo: int,
    origin_hi_excl: int | None,
    dtype,
    use_events: bool = True,
) -> WindowSet:
    """Assemble supervised windows with origins in a half-open day range.

    An origin at day index ``i`` uses the window ending at ``i`` and targets
    ``i+1 .. i+horizons``; the caller bounds the origin range so targets stay
    inside the intended split.
    """
    T, H = cfg.look_back, cfg.horizons
    tokens = _token_table(vocab, summaries, use_events)
    xs, ys, id_rows, reg_rows, org_rows = [], [], [], [], []
    for r in ds.regions:
        ri = stats.index_of(r.key)
        hi = (origin_hi_excl if origin_hi_excl is not None else r.n_days) - H
        lo = max(origin_lo, T - 1)
        if hi <= lo:
            raise InsufficientData(r.key, f"no usable origins in [{lo}, {hi})")
        norm_values = normalize(r.values, stats, ri).astype(dtype)
        norm_target = norm_values[:, cfg.target_index - 1]
        for i in range(lo, hi):
            xs.append(norm_values[i - T + 1 : i + 1])
            ys.append(norm_target[i + 1 : i + 1 + H])
            id_rows.append([tokens[(r.country, r.dates[i + h])] for h in range(1, H + 1)])
            reg_rows.append(ri)
            org_rows.append(i)

    width = max((len(seq) for row in id_rows for seq in row), default=1) or 1
    n = len(xs)
    ids = np.zeros((n, H, width), dtype=np.int64)
    mask = np.zeros((n, H, width), dtype=dtype)
    for w, row in enumerate(id_rows):
        for h, seq in enumerate(row):
            ids[w, h, : len(seq)] = seq
            mask[w, h, : len(seq)] = 1.0
    return WindowSet(
        x=np.stack(xs).astype(dtype),
        y=np.stack(ys).astype(dtype),
        ids=ids,
        mask=mask,
        region_idx=np.asarray(reg_rows, dtype=np.int64),
        origin_idx=np.asarray(org_rows, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    def __init__(self, pack: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in pack.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in pack.items()}

    def step(self, pack: dict) -> None:
        cfg = self.cfg
        total = 0.0
        for tensor in pack.values():
            total += float(np.sum(np.asarray(tensor.grad, dtype=np.float64) ** 2))
        norm = float(np.sqrt(total))
        scale = 1.0 if norm <= cfg.grad_clip else cfg.grad_clip / norm

        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, tensor in pack.items():
            g = tensor.grad * scale
            m, v = self.m[name], self.v[name]
            m[...] = cfg.beta1 * m + (1.0 - cfg.beta1) * g
            v[...] = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
            update = cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
            np.subtract(tensor.data, update.astype(tensor.data.dtype), out=tensor.data)


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainedModel:
    params: ModelParams
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    vocab: Vocab
    norm: NormStats
    loss_history: list[float] = field(default_factory=list)

    def predict_heads(self, x: np.ndarray, ids: np.ndarray, mask: np.ndarray):
        """Eval-mode head outputs (trend, event), normalized space."""
        P = tensor_pack(self.params)
        y_t, y_e = forward_graph(
            P, self.params, self.model_cfg, Tensor(x), ids, mask, mode="eval"
        )
        return y_t.data, y_e.data

    def predict(self, x, ids, mask, trend_weight: float | None = None) -> np.ndarray:
        w = self.train_cfg.trend_weight if trend_weight is None else trend_weight
        y_t, y_e = self.predict_heads(x, ids, mask)
        if not (0.0 <= w <= 1.0):
            raise ValueError(f"trend_weight {w} outside [0, 1]")
        return w * y_t + (1.0 - w) * y_e


def train(
    ds: Dataset,
    db: EventDatabase,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    summaries: dict[tuple[str, Date], SummaryFields] | None = None,
    log_fn=None,
) -> TrainedModel:
    """Fit the forecaster on the leading (1 - test_frac) of each region.

    Raises :class:`NonFiniteLoss` and aborts without a checkpoint if the loss
    leaves the finite range.  ``epochs=0`` returns the (seeded) initialization
    untouched, which makes initialization itself checkpointable.
    """
    model_cfg.validate()
    train_cfg.validate()
    if model_cfg.n_features != ds.n_features:
        raise ValueError(
            f"model expects {model_cfg.n_features} features, dataset has {ds.n_features}"
        )
    dtype = train_cfg.np_dtype

    if summaries is None:
        summaries = summaries_for_dataset(db, ds)

    n_days = ds.regions[0].n_days
    n_train = train_length(n_days, train_cfg.test_frac)

    # vocabulary from training-split dates only, in (country, date) order
    train_dates = {
        (r.country, d) for r in ds.regions for d in r.dates[:n_train]
    }
    corpus = [summaries[key] for key in sorted(train_dates)]
    vocab = build_vocab(corpus)

    stats = compute_norm_stats(ds, n_train)
    windows = build_windows(
        ds, stats, summaries, vocab, model_cfg,
        origin_lo=model_cfg.look_back - 1,
        origin_hi_excl=n_train,
        dtype=dtype,
        use_events=train_cfg.use_event_features,
    )

    root = np.random.SeedSequence(train_cfg.seed)
    init_ss, shuffle_ss, dropout_ss = root.spawn(3)
    params = init_model_params(model_cfg, len(vocab), np.random.default_rng(init_ss), dtype)
    pack = tensor_pack(params)
    opt = Adam(pack, train_cfg)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)

    losses: list[float] = []
    n = windows.n_windows
    for epoch in range(train_cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for b, lo in enumerate(range(0, n, train_cfg.batch_size)):
            sel = order[lo : lo + train_cfg.batch_size]
            for tensor in pack.values():
                tensor.zero_grad()
            y_t, y_e = forward_graph(
                pack, params, model_cfg,
                Tensor(windows.x[sel]), windows.ids[sel], windows.mask[sel],
                MODE_TRAIN, dropout_rng,
            )
            pred = blend(y_t, y_e, train_cfg.trend_weight)
            err = pred - Tensor(windows.y[sel])
            loss = (err * err).sum(axis=1).mean()
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteLoss(epoch + 1, b + 1, value)
            loss.backward()
            for name, tensor in pack.items():
                if tensor.grad is None:
                    raise RuntimeError(f"parameter {name} received no gradient")
            opt.step(pack)
            epoch_loss += value * len(sel)
        epoch_mean = epoch_loss / n
        losses.append(epoch_mean)
        if log_fn is not None:
            log_fn(epoch + 1, epoch_mean)

    return TrainedModel(params, model_cfg, train_cfg, vocab, stats, losses)


def write_training_log(path: str | Path, losses: list[float]) -> None:
    lines = ["epoch,loss"] + [f"{i + 1},{repr(float(v))}" for i, v in enumerate(losses)]
    _atomic_write_text(Path(path), "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Checkpointing


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_write_bytes(path: Path, blob: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def save_checkpoint(tm: TrainedModel, out_dir: str | Path) -> None:
    """Manifest (JSON) + flat little-endian float32 blob + vocab file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    table = []
    chunks = []
    offset = 0
    for name, arr, trainable in named_arrays(tm.params):
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        table.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "offset": offset,
                "numel": int(flat.size),
                "trainable": trainable,
            }
        )
        chunks.append(flat.tobytes())
        offset += int(flat.size)
    blob = b"".join(chunks)

    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "float32",
        "byte_order": "little",
        "blob_file": CHECKPOINT_BLOB,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "vocab_file": CHECKPOINT_VOCAB,
        "model_config": asdict(tm.model_cfg),
        "train_config": asdict(tm.train_cfg),
        "normalization": {
            "region_keys": tm.norm.region_keys,
            "mean": tm.norm.mean.tolist(),
            "std": tm.norm.std.tolist(),
        },
        "loss_history": [float(v) for v in tm.loss_history],
        "tensors": table,
    }
    _atomic_write_bytes(out_dir / CHECKPOINT_BLOB, blob)
    save_vocab(tm.vocab, out_dir / CHECKPOINT_VOCAB)
    _atomic_write_text(out_dir / CHECKPOINT_MANIFEST, json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(out_dir: str | Path) -> TrainedModel:
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / CHECKPOINT_MANIFEST).read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
    blob = (out_dir / manifest["blob_file"]).read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest["blob_sha256"]:
        raise ValueError("checkpoint blob digest mismatch")

    model_cfg = ModelConfig(**manifest["model_config"])
    train_cfg = TrainConfig(**manifest["train_config"])
    vocab = load_vocab(out_dir / manifest["vocab_file"])
    norm = NormStats(
        region_keys=list(manifest["normalization"]["region_keys"]),
        mean=np.asarray(manifest["normalization"]["mean"], dtype=np.float64),
        std=np.asarray(manifest["normalization"]["std"], dtype=np.float64),
    )

    params = init_model_params(
        model_cfg, len(vocab), np.random.default_rng(0), np.float32
    )
    flat = np.frombuffer(blob, dtype="<f4")
    by_name = {t["name"]: t for t in manifest["tensors"]}
    for name, arr, _ in named_arrays(params):
        entry = by_name[name]
        if list(arr.shape) != entry["shape"]:
            raise ValueError(f"tensor {name}: shape {arr.shape} != {entry['shape']}")
        chunk = flat[entry["offset"] : entry["offset"] + entry["numel"]]
        arr[...] = chunk.reshape(arr.shape).astype(arr.dtype)

    return TrainedModel(
        params=params,
        model_cfg=model_cfg,
        train_cfg=train_cfg,
        vocab=vocab,
        norm=norm,
        loss_history=[float(v) for v in manifest["loss_history"]],
    )
