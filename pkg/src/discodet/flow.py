"""Masked autoregressive flow density estimator, self-contained in numpy.

The flow stacks affine autoregressive blocks whose per-dimension shift and
log-scale are produced by degree-masked dense networks; every second block
sees its input in reversed order.  Log-densities are exact via the
triangular change-of-variables, gradients are hand-written reverse-mode,
and training uses Adam on the average negative log-likelihood.

For one-dimensional data the masked conditioner has no inputs, so a pure
affine stack would only span Gaussian shapes.  Each block therefore
composes the affine map with a learnable monotone element-wise map
g(u) = u + a*tanh(b*u), parameterized so a*b is in (-1, 1) which keeps
g' > 0.  With a = 0 the block reduces to the plain affine transform.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TrainConfig",
    "MadeNetwork",
    "FlowBlock",
    "FlowModel",
    "AdamState",
    "standardizer_fit",
    "build_flow",
    "nll",
    "grad_nll",
    "adam_step",
    "train",
    "save_flow",
    "load_flow",
]

LOG_SCALE_CLAMP = 7.0  # keeps exp(±s) finite on outliers


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and architecture knobs for flow training."""

    learning_rate: float = 2e-4
    epochs: int = 200
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    n_blocks: int = 5
    hidden: tuple[int, ...] = (64,)
    enrichment: bool | None = None   # None: on for d=1, off otherwise
    holdout_fraction: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def standardizer_fit(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension empirical mean and (population) standard deviation."""
    arr = _as_2d(data)
    if arr.shape[0] < 2:
        raise ValueError("standardizer needs at least two samples")
    mu = arr.mean(axis=0)
    sigma = arr.std(axis=0)
    if np.any(sigma <= 0):
        raise ValueError("degenerate data: zero standard deviation in some dimension")
    return mu, sigma


def _as_2d(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"expected (n,) or (n, d) data, got shape {arr.shape}")
    return arr


def _make_degrees(dim: int, hidden: tuple[int, ...]) -> list[np.ndarray]:
    degrees = [np.arange(1, dim + 1)]
    for width in hidden:
        degrees.append(np.arange(width) % max(1, dim - 1) + min(1, dim - 1))
    return degrees


class MadeNetwork:
    """Degree-masked dense network emitting per-dimension (shift, log-scale).

    Output t depends only on inputs with index < t; with dim = 1 the
    outputs are input-independent learned constants.
    """

    def __init__(self, dim: int, hidden: tuple[int, ...], init_gen: np.random.Generator):
        self.dim = dim
        self.hidden = tuple(hidden)
        degrees = _make_degrees(dim, self.hidden)
        self.masks = [
            (degrees[i][:, None] <= degrees[i + 1][None, :]).astype(float)
            for i in range(len(degrees) - 1)
        ]
        self.out_mask = (degrees[-1][:, None] < degrees[0][None, :]).astype(float)
        self.weights, self.biases = [], []
        for i, mask in enumerate(self.masks):
            fan_in, fan_out = mask.shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(init_gen.uniform(-bound, bound, size=mask.shape) * mask)
            self.biases.append(np.zeros(fan_out))
        last = self.hidden[-1] if self.hidden else dim
        # zero-initialized heads: the flow starts as the identity map
        self.w_mu = np.zeros((last, dim))
        self.b_mu = np.zeros(dim)
        self.w_s = np.zeros((last, dim))
        self.b_s = np.zeros(dim)
        self._zero_grads()

    def _zero_grads(self):
        self.g_weights = [np.zeros_like(w) for w in self.weights]
        self.g_biases = [np.zeros_like(b) for b in self.biases]
        self.g_w_mu = np.zeros_like(self.w_mu)
        self.g_b_mu = np.zeros_like(self.b_mu)
        self.g_w_s = np.zeros_like(self.w_s)
        self.g_b_s = np.zeros_like(self.b_s)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        out += [self.w_mu, self.b_mu, self.w_s, self.b_s]
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for gw, gb in zip(self.g_weights, self.g_biases):
            out += [gw, gb]
        out += [self.g_w_mu, self.g_b_mu, self.g_w_s, self.g_b_s]
        return out

    def forward(self, y: np.ndarray, need_cache: bool = False):
        h = y
        acts = [h]
        for w, b, mask in zip(self.weights, self.biases, self.masks):
            h = np.tanh(h @ (w * mask) + b)
            acts.append(h)
        mu = h @ (self.w_mu * self.out_mask) + self.b_mu
        s = h @ (self.w_s * self.out_mask) + self.b_s
        if need_cache:
            return mu, s, acts
        return mu, s

    def backward(self, acts: list[np.ndarray], dmu: np.ndarray, ds: np.ndarray) -> np.ndarray:
        h_last = acts[-1]
        self.g_w_mu += (h_last.T @ dmu) * self.out_mask
        self.g_b_mu += dmu.sum(axis=0)
        self.g_w_s += (h_last.T @ ds) * self.out_mask
        self.g_b_s += ds.sum(axis=0)
        dh = dmu @ (self.w_mu * self.out_mask).T + ds @ (self.w_s * self.out_mask).T
        for i in range(len(self.weights) - 1, -1, -1):
            dpre = dh * (1.0 - acts[i + 1] ** 2)
            self.g_weights[i] += (acts[i].T @ dpre) * self.masks[i]
            self.g_biases[i] += dpre.sum(axis=0)
            dh = dpre @ (self.weights[i] * self.masks[i]).T
        return dh


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class FlowBlock:
    """One autoregressive stage: optional input reversal, affine map with
    log-scale head, optional monotone element-wise enrichment."""

    def __init__(self, dim: int, hidden: tuple[int, ...], reverse: bool, enrich: bool,
                 init_gen: np.random.Generator):
        self.dim = dim
        self.reverse = reverse
        self.enrich = enrich
        self.made = MadeNetwork(dim, hidden, init_gen)
        if enrich:
            self.ea_raw = np.zeros(dim)   # a = tanh(ea)/b starts at 0: identity enrichment
            self.eb_raw = np.zeros(dim)   # b = softplus(eb)
        self._zero_grads()

    def _zero_grads(self):
        self.made._zero_grads()
        if self.enrich:
            self.g_ea_raw = np.zeros(self.dim)
            self.g_eb_raw = np.zeros(self.dim)

    def parameters(self) -> list[np.ndarray]:
        out = self.made.parameters()
        if self.enrich:
            out += [self.ea_raw, self.eb_raw]
        return out

    def gradients(self) -> list[np.ndarray]:
        out = self.made.gradients()
        if self.enrich:
            out += [self.g_ea_raw, self.g_eb_raw]
        return out

    def _enrich_ab(self):
        b = _softplus(self.eb_raw)
        a = np.tanh(self.ea_raw) / b
        return a, b

    def forward(self, x: np.ndarray, need_cache: bool = False):
        """Density-direction transform; returns (z, per-sample logdet[, cache])."""
        x_in = x[:, ::-1] if self.reverse else x
        mu, s_raw, acts = self.made.forward(x_in, need_cache=True)
        s = np.clip(s_raw, -LOG_SCALE_CLAMP, LOG_SCALE_CLAMP)
        u = (x_in - mu) * np.exp(-s)
        logdet = -s.sum(axis=1)
        if self.enrich:
            a, b = self._enrich_ab()
            t = np.tanh(b * u)
            z = u + a * t
            gp = 1.0 + (a * b) * (1.0 - t * t)
            logdet = logdet + np.log(gp).sum(axis=1)
        else:
            t = gp = None
            z = u
        if need_cache:
            cache = (x_in, mu, s_raw, s, u, t, gp, acts)
            return z, logdet, cache
        return z, logdet

    def backward(self, cache, dz: np.ndarray, c_logdet: float) -> np.ndarray:
        """Reverse-mode through the block.

        ``dz`` is dLoss/dz; ``c_logdet`` is the (scalar) coefficient of each
        sample's logdet in the loss.  Accumulates parameter gradients and
        returns dLoss/dx.
        """
        x_in, mu, s_raw, s, u, t, gp, acts = cache
        if self.enrich:
            a, b = self._enrich_ab()
            one_mt2 = 1.0 - t * t
            dgp = c_logdet / gp
            du = dz * gp + dgp * (-2.0 * a * b * b) * t * one_mt2
            da = (dz * t).sum(axis=0) + (dgp * b * one_mt2).sum(axis=0)
            db = (dz * a * u * one_mt2).sum(axis=0) \
                + (dgp * a * one_mt2 * (1.0 - 2.0 * b * t * u)).sum(axis=0)
            ta = np.tanh(self.ea_raw)
            sig = _sigmoid(self.eb_raw)
            self.g_ea_raw += da * (1.0 - ta * ta) / b
            self.g_eb_raw += db * sig + da * (-ta / (b * b)) * sig
        else:
            du = dz
        exp_ms = np.exp(-s)
        ds = -du * u - c_logdet
        ds_raw = ds * (np.abs(s_raw) < LOG_SCALE_CLAMP)
        dmu = -du * exp_ms
        dx_in = du * exp_ms + self.made.backward(acts, dmu, ds_raw)
        return dx_in[:, ::-1] if self.reverse else dx_in

    def inverse(self, z: np.ndarray) -> np.ndarray:
        if self.enrich:
            u = self._enrich_inverse(z)
        else:
            u = z
        x_in = np.zeros_like(u)
        for tdim in range(self.dim):
            mu, s_raw = self.made.forward(x_in)
            s = np.clip(s_raw, -LOG_SCALE_CLAMP, LOG_SCALE_CLAMP)
            x_in[:, tdim] = mu[:, tdim] + u[:, tdim] * np.exp(s[:, tdim])
        return x_in[:, ::-1] if self.reverse else x_in

    def _enrich_inverse(self, z: np.ndarray) -> np.ndarray:
        # g(u) = u + a*tanh(b*u) is strictly increasing; |g(u) - u| <= |a|
        # gives a guaranteed bracket, then bisection to ~1e-15 relative.
        a, b = self._enrich_ab()
        lo = z - np.abs(a) - 1e-12
        hi = z + np.abs(a) + 1e-12
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            val = mid + a * np.tanh(b * mid)
            too_low = val < z
            lo = np.where(too_low, mid, lo)
            hi = np.where(too_low, hi, mid)
        return 0.5 * (lo + hi)


class FlowModel:
    """Standardizer plus a stack of autoregressive blocks over a standard
    normal base; supports exact log-density, inversion, and gradients."""

    def __init__(self, dim: int, blocks: list[FlowBlock],
                 mu_std: np.ndarray, sigma_std: np.ndarray):
        self.dim = dim
        self.blocks = blocks
        self.mu_std = np.asarray(mu_std, dtype=float).reshape(dim)
        self.sigma_std = np.asarray(sigma_std, dtype=float).reshape(dim)

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        out = []
        for blk in self.blocks:
            out += blk.parameters()
        return out

    def gradients(self) -> list[np.ndarray]:
        out = []
        for blk in self.blocks:
            out += blk.gradients()
        return out

    def zero_grad(self):
        for blk in self.blocks:
            blk._zero_grads()

    def get_param_values(self) -> list[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def set_param_values(self, values: list[np.ndarray]):
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError("parameter list length mismatch")
        for p, v in zip(params, values):
            if p.shape != v.shape:
                raise ValueError("parameter shape mismatch")
            p[...] = v

    # -- evaluation ---------------------------------------------------------

    def forward(self, y, need_caches: bool = False):
        """Map data to latent; returns (z, per-sample logdet[, caches]).

        The logdet includes the constant -sum(log sigma_std) of the
        standardizer.
        """
        arr = _as_2d(y)
        x = (arr - self.mu_std) / self.sigma_std
        logdet = np.full(arr.shape[0], -np.log(self.sigma_std).sum())
        caches = []
        for blk in self.blocks:
            if need_caches:
                x, ld, cache = blk.forward(x, need_cache=True)
                caches.append(cache)
            else:
                x, ld = blk.forward(x)
            logdet = logdet + ld
        if need_caches:
            return x, logdet, caches
        return x, logdet

    def log_prob(self, y) -> np.ndarray:
        z, logdet = self.forward(y)
        base = -0.5 * (z * z).sum(axis=1) - 0.5 * self.dim * math.log(2 * math.pi)
        return base + logdet

    def inverse(self, z) -> np.ndarray:
        x = _as_2d(z)
        for blk in reversed(self.blocks):
            x = blk.inverse(x)
        return x * self.sigma_std + self.mu_std


def build_flow(dim: int, config: TrainConfig, mu_std=None, sigma_std=None) -> FlowModel:
    """Construct a flow with the configured architecture and a seeded init."""
    enrich = config.enrichment if config.enrichment is not None else dim == 1
    init_gen = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(0x11AD, 0))))
    blocks = [
        FlowBlock(dim, config.hidden, reverse=(i % 2 == 1), enrich=enrich, init_gen=init_gen)
        for i in range(config.n_blocks)
    ]
    if mu_std is None:
        mu_std = np.zeros(dim)
    if sigma_std is None:
        sigma_std = np.ones(dim)
    return FlowModel(dim, blocks, mu_std, sigma_std)


def nll(model: FlowModel, batch) -> float:
    """Average negative log-likelihood over the batch."""
    arr = _as_2d(batch)
    if arr.shape[0] == 0:
        raise ValueError("nll requires a non-empty batch")
    return float(-model.log_prob(arr).mean())


def grad_nll(model: FlowModel, batch) -> tuple[float, list[np.ndarray]]:
    """Exact reverse-mode gradient of the batch NLL for every parameter."""
    arr = _as_2d(batch)
    n = arr.shape[0]
    if n == 0:
        raise ValueError("grad_nll requires a non-empty batch")
    model.zero_grad()
    z, logdet, caches = model.forward(arr, need_caches=True)
    base = -0.5 * (z * z).sum(axis=1) - 0.5 * model.dim * math.log(2 * math.pi)
    loss = float(-(base + logdet).mean())
    dz = z / n                 # d(-mean(base))/dz
    c_logdet = -1.0 / n        # coefficient of each sample's logdet
    for blk, cache in zip(reversed(model.blocks), reversed(caches)):
        dz = blk.backward(cache, dz, c_logdet)
    return loss, [g.copy() for g in model.gradients()]


class AdamState:
    """First/second moment accumulators plus the step counter."""

    def __init__(self, params: list[np.ndarray]):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              config: TrainConfig) -> None:
    """In-place Adam update with bias correction and global-norm clipping."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise RuntimeError("parameter/gradient/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise RuntimeError("parameter/gradient shape mismatch")
    if config.clip_norm > 0:
        total = math.sqrt(sum(float((g * g).sum()) for g in grads))
        if total > config.clip_norm:
            scale = config.clip_norm / total
            grads = [g * scale for g in grads]
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.eps)


def train(data, config: TrainConfig) -> FlowModel:
    """Fit a flow by Adam on the average NLL; returns the model that scored
    the best NLL on a held-out split (deterministic for a fixed seed)."""
    arr = _as_2d(data)
    n, dim = arr.shape
    if n < max(2, config.batch_size // 8):
        raise ValueError(f"not enough training samples ({n})")
    mu_std, sigma_std = standardizer_fit(arr)
    model = build_flow(dim, config, mu_std, sigma_std)

    shuffle_gen = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(0x5417, 0))))
    perm = shuffle_gen.permutation(n)
    n_hold = max(1, int(round(config.holdout_fraction * n)))
    hold = arr[perm[:n_hold]]
    tr = arr[perm[n_hold:]]
    if tr.shape[0] == 0:
        raise ValueError("holdout split left no training data")

    params = model.parameters()
    state = AdamState(params)
    best_nll = nll(model, hold)
    best_params = model.get_param_values()
    bs = min(config.batch_size, tr.shape[0])
    for _ in range(config.epochs):
        order = shuffle_gen.permutation(tr.shape[0])
        for start in range(0, tr.shape[0], bs):
            batch = tr[order[start : start + bs]]
            _, grads = grad_nll(model, batch)
            adam_step(params, grads, state, config)
        hold_nll = nll(model, hold)
        if hold_nll < best_nll:
            best_nll = hold_nll
            best_params = model.get_param_values()
    model.set_param_values(best_params)
    return model


# -- serialization ----------------------------------------------------------

_MAGIC = b"DSCFLOW1"


def save_flow(model: FlowModel, path) -> None:
    """Versioned flat binary layout; parameters in declaration order as
    little-endian float64.  Loading reproduces log-densities bit-identically."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        hidden = model.blocks[0].made.hidden if model.blocks else ()
        enrich = bool(model.blocks and model.blocks[0].enrich)
        fh.write(struct.pack("<IIIB", model.dim, len(model.blocks), len(hidden), enrich))
        for width in hidden:
            fh.write(struct.pack("<I", width))
        fh.write(model.mu_std.astype("<f8").tobytes())
        fh.write(model.sigma_std.astype("<f8").tobytes())
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_flow(path) -> FlowModel:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path}: not a serialized flow model")
        dim, n_blocks, n_hidden, enrich = struct.unpack("<IIIB", fh.read(13))
        hidden = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(n_hidden))
        mu_std = np.frombuffer(fh.read(8 * dim), dtype="<f8").copy()
        sigma_std = np.frombuffer(fh.read(8 * dim), dtype="<f8").copy()
        config = TrainConfig(n_blocks=n_blocks, hidden=hidden, enrichment=bool(enrich))
        model = build_flow(dim, config, mu_std, sigma_std)
        values = []
        for p in model.parameters():
            raw = fh.read(8 * p.size)
            if len(raw) != 8 * p.size:
                raise ValueError(f"{path}: truncated parameter data")
            values.append(np.frombuffer(raw, dtype="<f8").reshape(p.shape).copy())
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after parameters")
        model.set_param_values(values)
    return model
