"""Embedding generator, pairwise SGNS objective, analytic gradients and Adam.

The generated embedding of node ``i`` is ``act(a_i @ W_M [+ b])`` where
``a_i = sum_j T_ij * content[src_ij]`` is the descriptor-weighted content of
its top-k rooted-walk nodes.  Because descriptors are frozen before training,
``a_i`` is computed once (:func:`aggregate_content`) and reused.

Each training pair ``(i, j)`` contributes::

    l1 * J(e_i|e_j) + l2 * J(s_i|s_j) + (1 - l1 - l2) * [J(e_i|s_j) + J(s_i|e_j)]

with ``J(x|c) = -log sig(x.c) - sum_n log sig(-x.n)``.  Negatives of terms
whose context is generated (``e_j``) are generated embeddings; negatives of
terms whose context is an auxiliary row (``s_j``) are auxiliary rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import NonFiniteError, ValidationError
from .structfeat import SENTINEL, FeatureTable, StructuralFeature

ACTIVATIONS = ("tanh", "elu", "identity")
ACTIVATION_IDS = {name: k for k, name in enumerate(ACTIVATIONS)}


def activate(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    if name == "elu":
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))
    if name == "identity":
        return x
    raise ValidationError(f"unknown activation {name!r}")


def activation_grad(name: str, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
    """Derivative of the activation at ``pre`` (``out`` is its value there)."""
    if name == "tanh":
        return 1.0 - out * out
    if name == "elu":
        return np.where(pre > 0, 1.0, out + 1.0)
    if name == "identity":
        return np.ones_like(pre)
    raise ValidationError(f"unknown activation {name!r}")


@dataclass
class GeneratorParams:
    """Content-to-embedding map ``W`` (f x d), activation and optional bias."""

    W: np.ndarray
    activation: str = "tanh"
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise ValidationError("W must be a 2-D array")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {ACTIVATIONS}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.W.shape[1],):
                raise ValidationError("bias must have shape (d,)")

    @classmethod
    def init(cls, f: int, d: int, rng: np.random.Generator, activation: str = "tanh",
             use_bias: bool = False) -> "GeneratorParams":
        bound = np.sqrt(6.0 / (f + d))
        W = rng.uniform(-bound, bound, size=(f, d))
        return cls(W, activation, np.zeros(d) if use_bias else None)

    @property
    def f(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def use_bias(self) -> bool:
        return self.bias is not None

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(self.W.copy(), self.activation,
                               None if self.bias is None else self.bias.copy())

    def forward(self, agg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pre-activation and embedding for aggregated content rows."""
        pre = agg @ self.W
        if self.bias is not None:
            pre = pre + self.bias
        return pre, activate(self.activation, pre)


def aggregate_content(feats: FeatureTable | StructuralFeature, content: np.ndarray) -> np.ndarray:
    """``sum_j T_ij * content[src_ij]``; padded (sentinel) entries contribute zero."""
    content = np.asarray(content, dtype=np.float64)
    padded = np.vstack([content, np.zeros((1, content.shape[1]))])
    src = np.asarray(feats.source_ids)
    if np.any((src != SENTINEL) & ((src < 0) | (src >= content.shape[0]))):
        raise ValidationError("descriptor refers to a node outside the content matrix")
    src = np.where(src == SENTINEL, content.shape[0], src)
    vals = np.asarray(feats.values, dtype=np.float64)
    if vals.ndim == 1:
        return vals @ padded[src]
    return np.einsum("nk,nkf->nf", vals, padded[src])


def generate_embedding(feat: StructuralFeature, g, params: GeneratorParams) -> np.ndarray:
    content = g.content if hasattr(g, "content") else g
    if content.shape[1] != params.f:
        raise ValidationError(f"content dim {content.shape[1]} does not match generator f={params.f}")
    return params.forward(aggregate_content(feat, content))[1]


def generate_embeddings(feats: FeatureTable, content: np.ndarray,
                        params: GeneratorParams) -> np.ndarray:
    if content.shape[1] != params.f:
        raise ValidationError(f"content dim {content.shape[1]} does not match generator f={params.f}")
    return params.forward(aggregate_content(feats, content))[1]


# -- loss ---------------------------------------------------------------------

def _softplus(x):
    return np.logaddexp(0.0, x)


def sgns_loss(e_i, e_p, e_negs) -> float:
    """``-log sig(e_i.e_p) - sum_n log sig(-e_i.e_n)`` in overflow-safe form."""
    e_i = np.asarray(e_i, dtype=np.float64)
    pos = float(np.dot(e_i, e_p))
    negs = np.atleast_2d(np.asarray(e_negs, dtype=np.float64)) @ e_i
    return float(_softplus(-pos) + _softplus(negs).sum())


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 0.4
    lambda2: float = 0.2
    neg_K: int = 5

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or self.lambda1 + self.lambda2 > 1 + 1e-12:
            raise ValidationError("need lambda1, lambda2 >= 0 and lambda1 + lambda2 <= 1")
        if self.neg_K < 1:
            raise ValidationError("neg_K must be >= 1")

    @property
    def interaction(self) -> float:
        return max(0.0, 1.0 - self.lambda1 - self.lambda2)

    @property
    def term_weights(self) -> tuple[float, float, float, float]:
        """Weights of J(e|e), J(s|s), J(e|s), J(s|e)."""
        w = self.interaction
        return (self.lambda1, self.lambda2, w, w)


@dataclass
class Gradients:
    W_M: np.ndarray
    bias: np.ndarray | None
    W_S: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        out = {"W_M": self.W_M, "W_S": self.W_S}
        if self.bias is not None:
            out["bias"] = self.bias
        return out


@dataclass
class BatchResult:
    losses: np.ndarray          # (B,) pair objective values
    terms: np.ndarray           # (B, 4) unweighted J(e|e), J(s|s), J(e|s), J(s|e)
    grads: Gradients | None     # gradient of the batch mean

    @property
    def mean_loss(self) -> float:
        return float(self.losses.mean())


def _sgns_terms(x, c, N):
    # overflow shows up as a non-finite loss, which the caller reports
    with np.errstate(over="ignore", invalid="ignore"):
        pos = np.einsum("bd,bd->b", x, c)
        neg = np.einsum("bd,bkd->bk", x, N)
        J = _softplus(-pos) + _softplus(neg).sum(axis=1)
        gp = -expit(-pos)
        gn = expit(neg)
        dx = gp[:, None] * c + np.einsum("bk,bkd->bd", gn, N)
        dc = gp[:, None] * x
        dN = gn[:, :, None] * x[:, None, :]
    return J, dx, dc, dN


def batch_objective(generator: GeneratorParams, W_S: np.ndarray, agg: np.ndarray,
                    i, j, negs_e, negs_s, cfg: LossConfig, need_grad: bool = True) -> BatchResult:
    """Pair objectives for a batch and the gradient of their mean.

    Parameters
    ----------
    agg : array (n, f)
        Aggregated content of every node (see :func:`aggregate_content`).
    i, j : int arrays (B,)
        Anchor nodes and their positives.
    negs_e : int array (B, 2, K)
        Negatives with generated embeddings for J(e_i|e_j) and J(s_i|e_j).
    negs_s : int array (B, 2, K)
        Negatives with auxiliary rows for J(s_i|s_j) and J(e_i|s_j).
    """
    i = np.asarray(i, dtype=np.int64).ravel()
    j = np.asarray(j, dtype=np.int64).ravel()
    B = len(i)
    negs_e = np.asarray(negs_e, dtype=np.int64).reshape(B, 2, -1)
    negs_s = np.asarray(negs_s, dtype=np.int64).reshape(B, 2, -1)
    if agg.shape[1] != generator.f:
        raise ValidationError("aggregated content width does not match generator")
    if W_S.shape[1] != generator.d:
        raise ValidationError("auxiliary embedding width does not match generator")

    e_ids, inv = np.unique(np.concatenate([i, j, negs_e.ravel()]), return_inverse=True)
    li, lj, lne = inv[:B], inv[B:2 * B], inv[2 * B:].reshape(negs_e.shape)
    a = agg[e_ids]
    pre, E = generator.forward(a)
    ei, ej = E[li], E[lj]
    si, sj = W_S[i], W_S[j]

    w_ee, w_ss, w_es, w_se = cfg.term_weights
    J_ee, dx1, dc1, dN1 = _sgns_terms(ei, ej, E[lne[:, 0]])
    J_ss, dx2, dc2, dN2 = _sgns_terms(si, sj, W_S[negs_s[:, 0]])
    J_es, dx3, dc3, dN3 = _sgns_terms(ei, sj, W_S[negs_s[:, 1]])
    J_se, dx4, dc4, dN4 = _sgns_terms(si, ej, E[lne[:, 1]])
    terms = np.stack([J_ee, J_ss, J_es, J_se], axis=1)
    losses = w_ee * J_ee + w_ss * J_ss + w_es * J_es + w_se * J_se
    if not np.all(np.isfinite(losses)):
        raise NonFiniteError("pair objective is not finite")
    if not need_grad:
        return BatchResult(losses, terms, None)

    d = generator.d
    dE = np.zeros((len(e_ids), d))
    dS = np.zeros_like(W_S)
    K = negs_e.shape[2]
    s = 1.0 / B
    np.add.at(dE, li, s * (w_ee * dx1 + w_es * dx3))
    np.add.at(dE, lj, s * (w_ee * dc1 + w_se * dc4))
    np.add.at(dE, lne[:, 0].ravel(), (s * w_ee * dN1).reshape(-1, d))
    np.add.at(dE, lne[:, 1].ravel(), (s * w_se * dN4).reshape(-1, d))
    np.add.at(dS, i, s * (w_ss * dx2 + w_se * dx4))
    np.add.at(dS, j, s * (w_ss * dc2 + w_es * dc3))
    np.add.at(dS, negs_s[:, 0].ravel(), (s * w_ss * dN2).reshape(B * K, d))
    np.add.at(dS, negs_s[:, 1].ravel(), (s * w_es * dN3).reshape(B * K, d))

    dpre = dE * activation_grad(generator.activation, pre, E)
    grads = Gradients(a.T @ dpre, dpre.sum(axis=0) if generator.use_bias else None, dS)
    return BatchResult(losses, terms, grads)


def _pair_negs(negs):
    negs = np.asarray(negs, dtype=np.int64)
    if negs.ndim == 1:
        negs = np.broadcast_to(negs, (2, len(negs)))
    return negs.reshape(1, 2, -1)


def pair_loss(generator: GeneratorParams, W_S: np.ndarray, agg: np.ndarray, i: int, j: int,
              negs_e, negs_s, cfg: LossConfig) -> float:
    """Objective of one pair; ``negs_*`` are ``(K,)`` (shared by both terms) or ``(2, K)``."""
    res = batch_objective(generator, W_S, agg, [i], [j], _pair_negs(negs_e), _pair_negs(negs_s),
                          cfg, need_grad=False)
    return float(res.losses[0])


def pair_gradients(generator: GeneratorParams, W_S: np.ndarray, agg: np.ndarray, i: int, j: int,
                   negs_e, negs_s, cfg: LossConfig) -> Gradients:
    res = batch_objective(generator, W_S, agg, [i], [j], _pair_negs(negs_e), _pair_negs(negs_s), cfg)
    return res.grads


# -- optimizer ----------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update applied in place to ``params``."""
    for name, g in grads.items():
        if name not in params:
            raise ValidationError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValidationError(f"gradient shape {g.shape} != parameter shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name!r}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def init_aux_embeddings(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.5 / d, 0.5 / d, size=(n, d))
