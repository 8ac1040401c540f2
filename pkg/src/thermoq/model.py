"""Learnable, structure-preserving surrogate of the nonlinear Bloch field.

The surrogate keeps the algebraic skeleton of the exact equation and makes
three ingredients trainable:

* the drift Bloch vector h_theta,
* the coupling coefficients through a lower-triangular factor X_hat with
  Gamma_theta = X_hat X_hat^T (positive semidefinite by construction),
* the nonlinearity through M_theta(v) = L(v)^T R(v)^T R(v) L(v), where
  R(v) = r~^2 I + (1 - r~^2) R~(v), r~^2 = N |v|^2 / (2(N-1)) clamped to
  [0, 1], and R~(v) is the row-major upper-triangular reshape of a small
  multilayer perceptron's output.

This factorization preserves the structural facts that make the exact field
thermodynamically consistent: M_theta is symmetric positive semidefinite,
annihilates the null space of L(v), and collapses to L(v)^T L(v) on pure
states, where r~^2 = 1 switches the convex combination off.

Forward evaluations are written in JAX (float64) against a parameter pytree,
so the training module can differentiate through them; the LearnableModel
wrapper holds the pytree plus the fixed context (temperature, frame shift,
drive encoding) and handles JSON (de)serialization.
"""

import json
from dataclasses import dataclass, field

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp
import numpy as np

from .basis import bloch_dim, structure_constants
from .errors import ConfigError, DataError

__all__ = [
    "ControlEncoding",
    "LearnableModel",
    "init_mlp_params",
    "mlp_forward",
    "init_model",
    "lower_triangular_factor",
    "pack_tril",
    "unpack_tril",
    "gamma_of",
    "r_tilde_sq",
    "R_of",
    "M_theta",
    "F_theta",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1
MLP_INIT_SCALE = 1e-6
NO_DRIVE = jnp.zeros(4)


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlEncoding:
    """Fixed drive context: Bloch vectors of the two quadrature operators and
    the envelope frequency.  Per-trajectory amplitudes are data, not model."""

    u_p: np.ndarray
    u_q: np.ndarray
    xi: float

    def pulse(self, t, amps):
        c, s = jnp.cos(self.xi * t), jnp.sin(self.xi * t)
        return amps[0] + amps[1] * (c + s), amps[2] + amps[3] * (c - s)


@dataclass
class LearnableModel:
    """Trainable surrogate: parameter pytree plus fixed physical context."""

    n_levels: int
    params: dict
    kT: float
    diss_shift: np.ndarray = None
    control: ControlEncoding = None
    learn_temperature: bool = False
    hbar: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        d = bloch_dim(self.n_levels)
        if self.diss_shift is None:
            self.diss_shift = np.zeros(d)
        self.diss_shift = np.asarray(self.diss_shift, dtype=float)
        if not self.kT > 0.0:
            raise ConfigError("bath temperature kT must be positive")

    @property
    def dim(self) -> int:
        return bloch_dim(self.n_levels)

    @property
    def sc(self):
        return structure_constants(self.n_levels)

    # NumPy-facing conveniences (tests, metrics, reporting).
    def h_theta(self) -> np.ndarray:
        return np.asarray(self.params["h"])

    def x_hat(self) -> np.ndarray:
        return np.asarray(unpack_tril(self.params["x_hat"], self.dim))

    def gamma(self) -> np.ndarray:
        x = self.x_hat()
        return x @ x.T

    def temperature(self) -> float:
        if self.learn_temperature:
            return float(np.exp(self.params["log_kT"]))
        return self.kT

    def field_at(self, v, t=0.0, amps=None) -> np.ndarray:
        amps = NO_DRIVE if amps is None else jnp.asarray(amps, dtype=float)
        return np.asarray(F_theta(self.params, jnp.asarray(v, dtype=float), t, amps, self))

    def m_theta_at(self, v) -> np.ndarray:
        return np.asarray(M_theta(self.params, jnp.asarray(v, dtype=float), self))


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def init_mlp_params(layer_sizes, rng, scale=MLP_INIT_SCALE):
    """Glorot-uniform weights shrunk by `scale`, zero biases."""
    params = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = scale * rng.uniform(-limit, limit, size=(fan_out, fan_in))
        params.append({"W": jnp.asarray(w), "b": jnp.zeros(fan_out)})
    return params


def mlp_forward(mlp_params, x):
    """tanh hidden layers, linear output."""
    for layer in mlp_params[:-1]:
        x = jnp.tanh(layer["W"] @ x + layer["b"])
    last = mlp_params[-1]
    return last["W"] @ x + last["b"]


def pack_tril(mat: np.ndarray) -> np.ndarray:
    """Row-major lower-triangle entries of a square matrix."""
    mat = np.asarray(mat)
    return mat[np.tril_indices(mat.shape[0])]


def unpack_tril(vec, d: int):
    """Inverse of pack_tril (works on NumPy and JAX arrays)."""
    rows, cols = np.tril_indices(d)
    return jnp.zeros((d, d), dtype=jnp.asarray(vec).dtype).at[rows, cols].set(vec)


def _unpack_triu(vec, d: int):
    rows, cols = np.triu_indices(d)
    return jnp.zeros((d, d), dtype=vec.dtype).at[rows, cols].set(vec)


def lower_triangular_factor(gamma: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = gamma, valid for singular PSD matrices."""
    gamma = np.asarray(gamma, dtype=float)
    lam, u = np.linalg.eigh(0.5 * (gamma + gamma.T))
    if lam.min() < -1e-10 * max(1.0, lam.max()):
        raise ConfigError(f"matrix is not positive semidefinite (min eig {lam.min():.3e})")
    a = u * np.sqrt(np.clip(lam, 0.0, None))
    r = np.linalg.qr(a.T, mode="r")
    low = r.T
    signs = np.sign(np.diag(low))
    signs[signs == 0.0] = 1.0
    return low * signs


def gamma_of(params, d: int):
    x = unpack_tril(params["x_hat"], d)
    return x @ x.T


def r_tilde_sq(v, n_levels: int):
    """Purity coordinate N |v|^2 / (2(N-1)), clamped to [0, 1]."""
    r2 = n_levels * jnp.sum(v * v) / (2.0 * (n_levels - 1))
    return jnp.clip(r2, 0.0, 1.0)


def R_of(params, v, model: LearnableModel):
    """Convex interpolation between the identity and the learned triangle."""
    d = model.dim
    rt2 = r_tilde_sq(v, model.n_levels)
    r_tilde = _unpack_triu(mlp_forward(params["mlp"], v), d)
    return rt2 * jnp.eye(d) + (1.0 - rt2) * r_tilde


def _kT_of(params, model: LearnableModel):
    if model.learn_temperature:
        return jnp.exp(params["log_kT"])
    return model.kT


def M_theta(params, v, model: LearnableModel):
    """Learned nonlinearity L(v)^T R(v)^T R(v) L(v) (symmetric PSD)."""
    lv = jnp.einsum("k,ijk->ij", v, jnp.asarray(model.sc.f))
    rl = R_of(params, v, model) @ lv
    return rl.T @ rl


def F_theta(params, v, t, amps, model: LearnableModel):
    """Learned Bloch vector field at state v and time t.

    amps are the four drive amplitudes of the trajectory (ignored when the
    model carries no control encoding).
    """
    sc = model.sc
    f = jnp.asarray(sc.f)
    ls = jnp.asarray(sc.l_stack)
    h = params["h"]
    if model.control is not None:
        p, q = model.control.pulse(t, amps)
        h_u = h + p * jnp.asarray(model.control.u_p) + q * jnp.asarray(model.control.u_q)
    else:
        h_u = h
    h_d = h + jnp.asarray(model.diss_shift)
    gamma = gamma_of(params, model.dim)
    lv = jnp.einsum("k,ijk->ij", v, f)
    unitary = lv @ h_u / model.hbar
    linear = jnp.einsum("ij,iab,jbc,c->a", gamma, ls, ls, v)
    bracket = (2.0 / model.n_levels) * jnp.eye(model.dim) + jnp.einsum("k,ijk->ij", v, jnp.asarray(sc.g)) - M_theta(params, v, model)
    thermal = jnp.einsum("ij,iab,bc,jcd,d->a", gamma, ls, bracket, ls, h_d)
    beta = 1.0 / _kT_of(params, model)
    return unitary + linear + 0.5 * beta * thermal


# ---------------------------------------------------------------------------
# Construction and serialization
# ---------------------------------------------------------------------------


def init_model(
    n_levels: int,
    kT: float,
    seed: int = 0,
    hidden=None,
    h_init=None,
    x_hat_init=None,
    x_scale: float = 0.05,
    diss_shift=None,
    control: ControlEncoding = None,
    learn_temperature: bool = False,
    metadata: dict = None,
) -> LearnableModel:
    """Fresh model with the default initialization.

    h defaults to zero, the packed coupling triangle to N(0, x_scale) entries,
    and the perceptron (hidden widths (2d, 3d) unless overridden) to tiny
    Glorot weights so that R(v) starts out at r~^2 I.
    """
    d = bloch_dim(n_levels)
    rng = np.random.default_rng(seed)
    if hidden is None:
        hidden = (2 * d, 3 * d)
    if h_init is None:
        h_init = np.zeros(d)
    if x_hat_init is None:
        x_hat_init = rng.normal(0.0, x_scale, size=d * (d + 1) // 2)
    else:
        x_hat_init = np.asarray(x_hat_init, dtype=float)
        if x_hat_init.ndim == 2:
            x_hat_init = pack_tril(x_hat_init)
    params = {
        "h": jnp.asarray(np.asarray(h_init, dtype=float)),
        "x_hat": jnp.asarray(x_hat_init),
        "mlp": init_mlp_params([d, *hidden, d * (d + 1) // 2], rng),
    }
    if learn_temperature:
        params["log_kT"] = jnp.asarray(np.log(kT))
    return LearnableModel(
        n_levels=n_levels,
        params=params,
        kT=kT,
        diss_shift=diss_shift,
        control=control,
        learn_temperature=learn_temperature,
        metadata=dict(metadata or {}),
    )


def _tolist(a):
    return np.asarray(a, dtype=float).tolist()


def save_model(model: LearnableModel, path):
    """Write the model as versioned JSON; floats survive a round trip bit for bit."""
    doc = {
        "format_version": FORMAT_VERSION,
        "n_levels": model.n_levels,
        "kT": model.kT,
        "learn_temperature": model.learn_temperature,
        "hbar": model.hbar,
        "h_theta": _tolist(model.params["h"]),
        "x_hat_tril": _tolist(model.params["x_hat"]),
        "mlp": {
            "widths": [int(layer["W"].shape[0]) for layer in model.params["mlp"]],
            "weights": [_tolist(layer["W"]) for layer in model.params["mlp"]],
            "biases": [_tolist(layer["b"]) for layer in model.params["mlp"]],
        },
        "diss_shift": _tolist(model.diss_shift),
        "control": None
        if model.control is None
        else {"u_p": _tolist(model.control.u_p), "u_q": _tolist(model.control.u_q), "xi": model.control.xi},
        "metadata": model.metadata,
    }
    if model.learn_temperature:
        doc["log_kT"] = float(model.params["log_kT"])
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> LearnableModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {doc.get('format_version')!r}")
    mlp = [
        {"W": jnp.asarray(w, dtype=jnp.float64), "b": jnp.asarray(b, dtype=jnp.float64)}
        for w, b in zip(doc["mlp"]["weights"], doc["mlp"]["biases"])
    ]
    params = {
        "h": jnp.asarray(doc["h_theta"], dtype=jnp.float64),
        "x_hat": jnp.asarray(doc["x_hat_tril"], dtype=jnp.float64),
        "mlp": mlp,
    }
    if doc["learn_temperature"]:
        params["log_kT"] = jnp.asarray(doc["log_kT"], dtype=jnp.float64)
    ctrl = doc["control"]
    control = None
    if ctrl is not None:
        control = ControlEncoding(u_p=np.asarray(ctrl["u_p"]), u_q=np.asarray(ctrl["u_q"]), xi=ctrl["xi"])
    return LearnableModel(
        n_levels=int(doc["n_levels"]),
        params=params,
        kT=float(doc["kT"]),
        diss_shift=np.asarray(doc["diss_shift"]),
        control=control,
        learn_temperature=bool(doc["learn_temperature"]),
        hbar=float(doc["hbar"]),
        metadata=doc.get("metadata", {}),
    )
