"""Dense networks with reverse-mode gradients, the mixture-density action
distribution, Adam, and checkpoint I/O.

Everything is float64.  Gradients are exact (tape-based) and are validated
against central finite differences in the test suite; that agreement is the
master correctness property for this module.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

N_COMPONENTS = 3
ACTION_DIM = 2
LOG_2PI = float(np.log(2.0 * np.pi))


# -- activations ---------------------------------------------------------------


def _sigmoid(z):
    # branch-wise form: overflow-free and positive until exp underflows
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_vjp(g, z, y):
    return g * (z > 0.0)


def _linear(z):
    return z


def _linear_vjp(g, z, y):
    return g


def softsign(z):
    """x / (1 + |x|), bounding actor means to (-1, 1)."""
    return z / (1.0 + np.abs(z))


def _softsign_vjp(g, z, y):
    return g / (1.0 + np.abs(z)) ** 2


def variance_act(z):
    """(1/16) * Sigmoid(3x): positive variances capped at 1/16."""
    return 0.0625 * _sigmoid(3.0 * z)


def _variance_act_vjp(g, z, y):
    s = 16.0 * y
    return g * 0.1875 * s * (1.0 - s)


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_vjp(g, z, y):
    return y * (g - (g * y).sum(axis=-1, keepdims=True))


def _mdn_head(z):
    out = np.empty_like(z)
    out[..., :6] = softsign(z[..., :6])
    out[..., 6:] = variance_act(z[..., 6:])
    return out


def _mdn_head_vjp(g, z, y):
    out = np.empty_like(g)
    out[..., :6] = _softsign_vjp(g[..., :6], z[..., :6], y[..., :6])
    out[..., 6:] = _variance_act_vjp(g[..., 6:], z[..., 6:], y[..., 6:])
    return out


ACTIVATIONS = {
    "relu": (_relu, _relu_vjp),
    "linear": (_linear, _linear_vjp),
    "softsign": (softsign, _softsign_vjp),
    "variance": (variance_act, _variance_act_vjp),
    "softmax": (softmax, _softmax_vjp),
    "mdn_head": (_mdn_head, _mdn_head_vjp),
}


# -- dense network ---------------------------------------------------------------


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray   # (out,)
    activation: str


class DenseNet:
    """Fully connected net; forward records a tape for exact backward."""

    def __init__(self, layers: list[Layer]):
        for a, b in zip(layers, layers[1:]):
            if a.weights.shape[0] != b.weights.shape[1]:
                raise ValueError("layer dimensions do not chain")
        self.layers = layers

    @classmethod
    def create(cls, dims: list[int], activations: list[str],
               rng: np.random.Generator) -> "DenseNet":
        """He-initialized weights, zero biases."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for d_in, d_out, act in zip(dims, dims[1:], activations):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
            w = rng.standard_normal((d_out, d_in)) * np.sqrt(2.0 / d_in)
            layers.append(Layer(w, np.zeros(d_out), act))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    def forward(self, x: np.ndarray):
        """x: (B, in) or (in,). Returns (output, tape)."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.input_dim:
            raise ValueError(f"input dim {x.shape[1]} != {self.input_dim}")
        tape = []
        h = x
        for layer in self.layers:
            pre = h @ layer.weights.T + layer.biases
            post = ACTIVATIONS[layer.activation][0](pre)
            tape.append((h, pre, post))
            h = post
        return (h[0] if squeeze else h), tape

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, tape, g_out: np.ndarray):
        """Backpropagate dL/d(output) through the tape.

        Returns ([(dW, db) per layer], dL/d(input)).
        """
        g = np.asarray(g_out, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            h_in, pre, post = tape[i]
            layer = self.layers[i]
            g_pre = ACTIVATIONS[layer.activation][1](g, pre, post)
            grads[i] = (g_pre.T @ h_in, g_pre.sum(axis=0))
            g = g_pre @ layer.weights
        return grads, g

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out


@dataclass
class PolicyNets:
    actor: DenseNet
    critic: DenseNet
    mixing: DenseNet

    def parameters(self) -> list[np.ndarray]:
        return self.actor.parameters() + self.critic.parameters() + self.mixing.parameters()

    def as_dict(self) -> dict[str, DenseNet]:
        return {"actor": self.actor, "critic": self.critic, "mixing": self.mixing}


def build_paper_networks(input_dim: int, hidden: int = 600,
                         rng: np.random.Generator | None = None) -> PolicyNets:
    """Actor (12 outputs: 6 softsign means, 6 capped variances), critic
    (1 linear value) and mixing net (3-way softmax), drawn from one rng in
    actor/critic/mixing order."""
    rng = rng or np.random.default_rng(0)
    actor = DenseNet.create([input_dim, hidden, hidden, 12],
                            ["relu", "relu", "mdn_head"], rng)
    critic = DenseNet.create([input_dim, hidden, hidden, 1],
                             ["relu", "relu", "linear"], rng)
    mixing = DenseNet.create([input_dim, hidden, hidden, N_COMPONENTS],
                             ["relu", "relu", "softmax"], rng)
    return PolicyNets(actor, critic, mixing)


# -- mixture density distribution -------------------------------------------------


@dataclass
class MdnDistribution:
    """Batch of 3-component diagonal Gaussian mixtures over 2-d actions.

    alphas (B, K) on the simplex; means (B, K, 2) in (-1, 1);
    variances (B, K, 2) in (0, 1/16].
    """

    alphas: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def from_outputs(cls, actor_out: np.ndarray, mixing_out: np.ndarray) -> "MdnDistribution":
        actor_out = np.atleast_2d(actor_out)
        mixing_out = np.atleast_2d(mixing_out)
        b = actor_out.shape[0]
        # Actor layout: 3 (mu_psi, mu_tau) pairs, then 3 (var_psi, var_tau) pairs.
        means = actor_out[:, :6].reshape(b, N_COMPONENTS, ACTION_DIM)
        variances = actor_out[:, 6:].reshape(b, N_COMPONENTS, ACTION_DIM)
        return cls(mixing_out, means, variances)

    @property
    def batch_size(self) -> int:
        return self.alphas.shape[0]

    def single(self, i: int = 0) -> "MdnDistribution":
        return MdnDistribution(self.alphas[i:i + 1], self.means[i:i + 1],
                               self.variances[i:i + 1])


def _mixture_core(dist: MdnDistribution, x: np.ndarray):
    """log q(x) plus responsibilities for x of shape (B, M, 2).

    Returns (logq (B, M), ratio (B, M, K) = N_k / q, diff, inv_var).
    """
    diff = x[:, :, None, :] - dist.means[:, None, :, :]          # (B,M,K,2)
    inv_var = 1.0 / dist.variances[:, None, :, :]                # (B,1,K,2)
    quad = ((diff * diff) * inv_var).sum(axis=-1)                # (B,M,K)
    logdet = np.log(dist.variances).sum(axis=-1)                 # (B,K)
    log_gauss = -0.5 * (quad + logdet[:, None, :] + ACTION_DIM * LOG_2PI)
    with np.errstate(divide="ignore"):  # alpha exactly 0 is a valid simplex corner
        log_comp = np.log(dist.alphas)[:, None, :] + log_gauss
    m = log_comp.max(axis=-1, keepdims=True)
    logq = (m + np.log(np.exp(log_comp - m).sum(axis=-1, keepdims=True)))[..., 0]
    ratio = np.exp(log_gauss - logq[:, :, None])                 # N_k / q
    return logq, ratio, diff, inv_var


def mdn_log_prob(dist: MdnDistribution, actions: np.ndarray) -> np.ndarray:
    """log-density of actions (B, 2) under the mixture, via log-sum-exp."""
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    logq, _, _, _ = _mixture_core(dist, actions[:, None, :])
    return logq[:, 0]


def mdn_log_prob_grads(dist: MdnDistribution, actions: np.ndarray):
    """(logp, dlogp/dmeans, dlogp/dvariances, dlogp/dalphas)."""
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    logq, ratio, diff, inv_var = _mixture_core(dist, actions[:, None, :])
    r = dist.alphas[:, None, :] * ratio                          # responsibilities
    d_mean = (r[..., None] * diff * inv_var)[:, 0]               # (B,K,2)
    d_var = (r[..., None] * 0.5 * (diff * diff * inv_var - 1.0) * inv_var)[:, 0]
    d_alpha = ratio[:, 0]                                        # dlogq/dalpha = N_k/q
    return logq[:, 0], d_mean, d_var, d_alpha


def mdn_sample(dist: MdnDistribution, rng: np.random.Generator):
    """One action from a single-distribution batch entry.

    Returns (clamped, raw): the environment consumes the [-1,1]-clamped
    action; log-probs are scored on the raw draw.
    """
    alphas = dist.alphas[0]
    k = int(np.searchsorted(np.cumsum(alphas), rng.random()))
    k = min(k, N_COMPONENTS - 1)
    raw = dist.means[0, k] + np.sqrt(dist.variances[0, k]) * rng.standard_normal(ACTION_DIM)
    return np.clip(raw, -1.0, 1.0), raw


def draw_entropy_noise(dist: MdnDistribution, n_draws: int, rng: np.random.Generator):
    """Frozen Monte-Carlo noise for the entropy estimator.

    Component indices are drawn from the current mixing weights and then
    treated as constants inside the loss, keeping the loss differentiable;
    values are reparameterized as mean + sqrt(var) * eps.
    """
    b = dist.batch_size
    u = rng.random((b, n_draws))
    cdf = np.cumsum(dist.alphas, axis=-1)                        # (B,K)
    k_sel = (u[:, :, None] > cdf[:, None, :]).sum(axis=-1)
    k_sel = np.minimum(k_sel, N_COMPONENTS - 1)
    eps = rng.standard_normal((b, n_draws, ACTION_DIM))
    return k_sel, eps


def _entropy_points(dist: MdnDistribution, k_sel: np.ndarray, eps: np.ndarray):
    rows = np.arange(dist.batch_size)[:, None]
    mu = dist.means[rows, k_sel]          # (B,M,2)
    var = dist.variances[rows, k_sel]     # (B,M,2)
    return mu + np.sqrt(var) * eps, var


def mdn_entropy(dist: MdnDistribution, k_sel: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Monte-Carlo entropy estimate per batch entry, -mean_m log q(x_m)."""
    x, _ = _entropy_points(dist, k_sel, eps)
    logq, _, _, _ = _mixture_core(dist, x)
    return -logq.mean(axis=1)


def mdn_entropy_grads(dist: MdnDistribution, k_sel: np.ndarray, eps: np.ndarray):
    """(entropy (B,), dH/dmeans, dH/dvariances, dH/dalphas).

    Includes both the direct dependence of log q on the parameters and the
    pathwise dependence through the reparameterized sample points.
    """
    b, m = k_sel.shape
    x, var_sel = _entropy_points(dist, k_sel, eps)
    logq, ratio, diff, inv_var = _mixture_core(dist, x)
    r = dist.alphas[:, None, :] * ratio                          # (B,M,K)
    # direct terms, summed over draws
    g_mean_dir = np.einsum("bmk,bmkd->bkd", r, diff * inv_var)
    g_var_dir = np.einsum("bmk,bmkd->bkd", r, 0.5 * (diff * diff * inv_var - 1.0) * inv_var)
    g_alpha_dir = ratio.sum(axis=1)                              # (B,K)
    # pathwise terms: dlogq/dx = -sum_k r_k * diff/var
    g_x = -np.einsum("bmk,bmkd->bmd", r, diff * inv_var)          # (B,M,2)
    one_hot = (k_sel[:, :, None] == np.arange(N_COMPONENTS)[None, None, :]).astype(float)
    g_mean_path = np.einsum("bmk,bmd->bkd", one_hot, g_x)
    g_var_path = np.einsum("bmk,bmd->bkd", one_hot, g_x * eps * 0.5 / np.sqrt(var_sel))
    scale = -1.0 / m
    return (-logq.mean(axis=1),
            scale * (g_mean_dir + g_mean_path),
            scale * (g_var_dir + g_var_path),
            scale * g_alpha_dir)


# -- optimizer ----------------------------------------------------------------------


class Adam:
    """Adam over a fixed list of parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameters")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter of shape {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


# -- checkpoints ----------------------------------------------------------------------
#
# Binary layout (little-endian):
#   magic b"DMCK" | u32 version | u8 n_nets
#   per net: u8 n_layers, per layer: u32 in, u32 out, 16-byte activation tag
#   payload: per net, per layer: weights row-major f64, then biases f64
#   u32 CRC32 over everything after the magic

_MAGIC = b"DMCK"
_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(nets: PolicyNets, path) -> None:
    body = bytearray()
    body += struct.pack("<I", _VERSION)
    net_list = [nets.actor, nets.critic, nets.mixing]
    body += struct.pack("<B", len(net_list))
    for net in net_list:
        body += struct.pack("<B", len(net.layers))
        for layer in net.layers:
            tag = layer.activation.encode().ljust(16, b"\0")
            body += struct.pack("<II", layer.weights.shape[1], layer.weights.shape[0]) + tag
    for net in net_list:
        for layer in net.layers:
            body += layer.weights.astype("<f8").tobytes()
            body += layer.biases.astype("<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    from pathlib import Path
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(_MAGIC + bytes(body))
    tmp.replace(path)


def load_checkpoint(path) -> PolicyNets:
    from pathlib import Path
    blob = Path(path).read_bytes()
    if blob[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    body, crc_stored = blob[4:-4], struct.unpack("<I", blob[-4:])[0]
    if zlib.crc32(body) != crc_stored:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupt)")
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, body, off)
        off += size
        return vals

    (version,) = take("<I")
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (n_nets,) = take("<B")
    if n_nets != 3:
        raise CheckpointError(f"{path}: expected 3 networks, found {n_nets}")
    headers = []
    for _ in range(n_nets):
        (n_layers,) = take("<B")
        layers = []
        for _ in range(n_layers):
            d_in, d_out = take("<II")
            (tag,) = take("<16s")
            act = tag.rstrip(b"\0").decode()
            if act not in ACTIVATIONS:
                raise CheckpointError(f"{path}: unknown activation {act!r}")
            layers.append((d_in, d_out, act))
        headers.append(layers)
    nets = []
    for layers in headers:
        built = []
        for d_in, d_out, act in layers:
            n_w = d_in * d_out
            w = np.frombuffer(body, dtype="<f8", count=n_w, offset=off).reshape(d_out, d_in)
            off += n_w * 8
            bvec = np.frombuffer(body, dtype="<f8", count=d_out, offset=off)
            off += d_out * 8
            built.append(Layer(w.astype(float), bvec.astype(float), act))
        nets.append(DenseNet(built))
    return PolicyNets(*nets)
