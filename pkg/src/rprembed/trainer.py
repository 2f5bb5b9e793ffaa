"""End-to-end training, inductive inference and model/embedding files.

Checkpoint layout (all integers and floats little-endian)::

    8 bytes   magic  b"RPREMBED"
    u32       format version (1)
    u32       header length H
    H bytes   UTF-8 JSON header, sorted keys: f, d, k, activation,
              activation_id, has_bias, n_aux, rpr {beta, k, m, l, seed},
              fingerprint
    f*d f64   W_M, row-major
    d   f64   bias            (only if has_bias)
    n*d f64   auxiliary rows  (only if n_aux > 0; resume checkpoints)
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .config import TrainConfig
from .errors import NonFiniteError, ValidationError
from .graph import Graph
from .io import atomic_write_bytes, atomic_write_text
from .model import (ACTIVATION_IDS, AdamState, GeneratorParams, adam_step, aggregate_content,
                    batch_objective, generate_embeddings, init_aux_embeddings)
from .sampling import NegativeTable, PositiveSampler, build_cooccurrence
from .structfeat import FeatureTable, RprConfig, all_structural_features

log = logging.getLogger(__name__)

MAGIC = b"RPREMBED"
FORMAT_VERSION = 1


@dataclass
class TrainedModel:
    """Everything needed to embed nodes of any graph with matching content width."""

    generator: GeneratorParams
    rpr: RprConfig
    fingerprint: str = ""

    @property
    def content_dim(self) -> int:
        return self.generator.f

    @property
    def dim(self) -> int:
        return self.generator.d

    def checksum(self) -> str:
        h = hashlib.sha256(self.generator.W.tobytes())
        if self.generator.bias is not None:
            h.update(self.generator.bias.tobytes())
        return h.hexdigest()


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    elapsed_ms: float
    pairs: int = 0
    structural_draws: int = 0


@dataclass
class TrainResult:
    model: TrainedModel
    log: list[EpochRecord]
    features: FeatureTable
    embeddings: np.ndarray
    aux: np.ndarray
    stats: dict = field(default_factory=dict)


def training_fingerprint(g: Graph, cfg: TrainConfig) -> str:
    h = hashlib.sha256(g.fingerprint().encode())
    h.update(json.dumps(asdict(cfg), sort_keys=True, default=str).encode())
    return h.hexdigest()


def train(g: Graph, cfg: TrainConfig, *, threads: int = 1, checkpoint_path=None,
          resume=None, features: FeatureTable | None = None) -> TrainResult:
    """Fit the generator and auxiliary embeddings on ``g``.

    Each epoch visits every sampleable node once in shuffled order, draws
    one positive per visit and takes one Adam step per ``batch_size`` pairs.
    Negatives are drawn independently for each of the four objective terms.

    ``features`` may supply precomputed descriptors (e.g. seed-matched ones);
    by default they are computed with ``cfg.seed``.
    """
    n = g.num_nodes
    if n == 0:
        raise ValidationError("cannot train on an empty graph")
    if g.content_dim == 0:
        raise ValidationError("training needs node content (feature dimension is 0)")
    rpr = replace(cfg.rpr, seed=cfg.seed)
    t0 = time.perf_counter()
    if features is None:
        features = all_structural_features(g, rpr, cfg.seed, threads=threads)
    elif len(features) != n:
        raise ValidationError("supplied features do not cover every node")
    agg = aggregate_content(features, g.content)
    cooc = build_cooccurrence(g, cfg.sampling, cfg.seed)
    sampler = PositiveSampler(g, features, cooc, cfg.sampling)
    if cfg.sampling.alpha > 0:
        sampler.precompute()
    table = NegativeTable.from_graph(g, cfg.sampling.neg_power)
    log.info("preprocessing done in %.0f ms", 1000 * (time.perf_counter() - t0))

    init_rng = np.random.default_rng([cfg.seed, 1])
    generator = GeneratorParams.init(g.content_dim, cfg.d, init_rng, cfg.activation, cfg.use_bias)
    W_S = init_aux_embeddings(n, cfg.d, init_rng)
    if resume is not None:
        prev, prev_aux = load_model(resume)
        if prev.generator.W.shape != generator.W.shape:
            raise ValidationError("resume checkpoint has a different generator shape")
        generator = prev.generator
        if prev_aux is not None:
            if prev_aux.shape != W_S.shape:
                raise ValidationError("resume checkpoint has auxiliary rows for another graph")
            W_S = prev_aux
    params = {"W_M": generator.W, "W_S": W_S}
    if generator.bias is not None:
        params["bias"] = generator.bias
    state = AdamState(lr=cfg.lr)
    fingerprint = training_fingerprint(g, cfg)
    model = TrainedModel(generator, rpr, fingerprint)

    rng = np.random.default_rng([cfg.seed, 2])
    active = np.array([v for v in range(n) if sampler.can_sample(v)], dtype=np.int64)
    K = cfg.sampling.neg_K
    records: list[EpochRecord] = []
    total_structural = 0
    ws_grad_mass = 0.0
    for epoch in range(1, cfg.epochs + 1):
        t_epoch = time.perf_counter()
        order = rng.permutation(active)
        loss_sum = 0.0
        n_struct = 0
        for start in range(0, len(order), cfg.batch_size):
            anchors = order[start:start + cfg.batch_size]
            positives = np.empty_like(anchors)
            for b, v in enumerate(anchors):
                positives[b], used = sampler.draw(int(v), rng)
                n_struct += used
            excl = np.stack([anchors, positives], axis=1)
            negs_e = table.sample_excluding((len(anchors), 2, K), excl, rng)
            negs_s = table.sample_excluding((len(anchors), 2, K), excl, rng)
            try:
                res = batch_objective(generator, W_S, agg, anchors, positives, negs_e, negs_s, cfg.loss)
                adam_step(params, res.grads.as_dict(), state)
            except NonFiniteError as exc:
                raise NonFiniteError(
                    f"{exc} at epoch {epoch}, step {state.step}; |W_M|max="
                    f"{np.abs(generator.W).max():.3g}, |W_S|max={np.abs(W_S).max():.3g}") from exc
            ws_grad_mass += float(np.abs(res.grads.W_S).sum())
            loss_sum += float(res.losses.sum())
            if checkpoint_path is not None and cfg.checkpoint_every > 0 \
                    and state.step % cfg.checkpoint_every == 0:
                save_model(checkpoint_path, model, aux=W_S)
        mean_loss = loss_sum / max(len(order), 1)
        if not np.isfinite(mean_loss):
            raise NonFiniteError(f"mean loss is not finite at epoch {epoch}")
        total_structural += n_struct
        rec = EpochRecord(epoch, mean_loss, 1000 * (time.perf_counter() - t_epoch),
                          len(order), n_struct)
        records.append(rec)
        log.info("epoch %d  loss %.5f  (%.0f ms)", epoch, mean_loss, rec.elapsed_ms)

    embeddings = generate_embeddings(features, g.content, generator)
    stats = {"steps": state.step, "structural_draws": total_structural,
             "aux_grad_abs_sum": ws_grad_mass, "active_nodes": len(active)}
    return TrainResult(model, records, features, embeddings, W_S, stats)


def infer(model: TrainedModel, g_new: Graph, nodes=None, seed: int | None = None,
          threads: int = 1, seed_keys=None) -> np.ndarray:
    """Embed ``nodes`` of ``g_new`` by featurizing them there and applying the generator."""
    if g_new.content_dim != model.content_dim:
        raise ValidationError(
            f"graph content dimension {g_new.content_dim} does not match model ({model.content_dim})")
    nodes = np.arange(g_new.num_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    if len(nodes) and (nodes.min() < 0 or nodes.max() >= g_new.num_nodes):
        raise ValidationError("node index outside the graph")
    seed = model.rpr.seed if seed is None else seed
    feats = all_structural_features(g_new, model.rpr, seed, nodes=nodes, seed_keys=seed_keys,
                                    threads=threads)
    return generate_embeddings(feats, g_new.content, model.generator)


# -- files --------------------------------------------------------------------

def model_to_bytes(model: TrainedModel, aux: np.ndarray | None = None) -> bytes:
    gen = model.generator
    header = {
        "f": gen.f,
        "d": gen.d,
        "k": model.rpr.k,
        "activation": gen.activation,
        "activation_id": ACTIVATION_IDS[gen.activation],
        "has_bias": gen.bias is not None,
        "n_aux": 0 if aux is None else int(aux.shape[0]),
        "rpr": asdict(model.rpr),
        "fingerprint": model.fingerprint,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(hb)), hb,
             np.ascontiguousarray(gen.W, dtype="<f8").tobytes()]
    if gen.bias is not None:
        parts.append(np.ascontiguousarray(gen.bias, dtype="<f8").tobytes())
    if aux is not None:
        if aux.shape[1] != gen.d:
            raise ValidationError("auxiliary rows must have d columns")
        parts.append(np.ascontiguousarray(aux, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes) -> tuple[TrainedModel, np.ndarray | None]:
    if data[:8] != MAGIC:
        raise ValidationError("not a model file (bad magic)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {version}")
    off = 16
    header = json.loads(data[off:off + hlen].decode("utf-8"))
    off += hlen
    f, d = header["f"], header["d"]

    def take(count):
        nonlocal off
        end = off + 8 * count
        if end > len(data):
            raise ValidationError("model file is truncated")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(np.float64)
        off = end
        return arr

    W = take(f * d).reshape(f, d)
    bias = take(d) if header["has_bias"] else None
    aux = take(header["n_aux"] * d).reshape(header["n_aux"], d) if header["n_aux"] else None
    if off != len(data):
        raise ValidationError("trailing bytes in model file")
    model = TrainedModel(GeneratorParams(W, header["activation"], bias),
                         RprConfig(**header["rpr"]), header["fingerprint"])
    return model, aux


def save_model(path, model: TrainedModel, aux: np.ndarray | None = None) -> None:
    """Write a model file; pass ``aux`` only for resumable training checkpoints."""
    atomic_write_bytes(path, model_to_bytes(model, aux))


def load_model(path) -> tuple[TrainedModel, np.ndarray | None]:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def export_embeddings(rows: np.ndarray, path, node_ids=None) -> None:
    """``node_id<TAB>v1,...,vd`` per row, floats written losslessly."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] == 0:
        raise ValidationError("embeddings must be a 2-D array with d >= 1")
    if node_ids is None:
        node_ids = [str(i) for i in range(rows.shape[0])]
    if len(node_ids) != rows.shape[0]:
        raise ValidationError("need one node id per embedding row")
    lines = [f"{v}\t" + ",".join(repr(float(x)) for x in row) for v, row in zip(node_ids, rows)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_embeddings(path) -> tuple[list[str], np.ndarray]:
    ids, rows = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected node_id<TAB>values")
            try:
                rows.append([float(x) for x in parts[1].split(",")])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad embedding values") from None
            ids.append(parts[0])
    if rows and len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: embedding rows differ in length")
    return ids, np.array(rows, dtype=np.float64)


def write_training_log(path, records: list[EpochRecord]) -> None:
    lines = ["epoch,mean_loss,elapsed_ms"]
    lines += [f"{r.epoch},{r.mean_loss!r},{r.elapsed_ms:.3f}" for r in records]
    atomic_write_text(path, "\n".join(lines) + "\n")
