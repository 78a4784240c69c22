"""
Bayesian neural network surrogate.

A tanh MLP ``phi(x; theta_mu)`` with a Gaussian observation model whose
variance ``exp(rho)`` is a learned scalar. The posterior over
``theta = [theta_mu, rho]`` is represented by a finite set of samples
(:class:`PosteriorEnsemble`); predictive moments of the value and of the
input-gradient are sample averages plus the mean noise variance.

Flat parameter layout (also the serialization order): for each layer in
order, the weight matrix of shape ``(fan_in, fan_out)`` in row-major order,
then its bias ``(fan_out,)``; the final entry is ``rho``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad

LOG_2PI = math.log(2.0 * math.pi)

DEFAULT_PRIOR_PRECISION = 0.1
DEFAULT_LOG_NOISE = math.log(1e-2)


@dataclass(frozen=True)
class Architecture:
    """MLP shape. ``output_dim > 1`` is only used for the multi-head ablation."""

    input_dim: int
    hidden_layers: int = 5
    nodes_per_layer: int = 80
    activation: str = "tanh"
    output_dim: int = 1

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_layers < 0 or self.nodes_per_layer < 1:
            raise ValueError(f"invalid architecture {self}")
        if self.activation != "tanh":
            raise ValueError("only tanh activation is supported")
        if self.output_dim < 1:
            raise ValueError("output_dim must be >= 1")

    @property
    def layer_shapes(self):
        widths = [self.input_dim] + [self.nodes_per_layer] * self.hidden_layers + [self.output_dim]
        return [(widths[k], widths[k + 1]) for k in range(len(widths) - 1)]

    @property
    def n_weights(self):
        return sum(i * o + o for i, o in self.layer_shapes)

    @property
    def n_params(self):
        return self.n_weights + 1

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_layers": self.hidden_layers,
            "nodes_per_layer": self.nodes_per_layer,
            "activation": self.activation,
            "output_dim": self.output_dim,
        }


def split_params(arch, theta):
    """Views of ``theta`` as ``[(W, b), ...]`` and the scalar ``rho``."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (arch.n_params,):
        raise ValueError(f"expected {arch.n_params} parameters, got shape {theta.shape}")
    layers = []
    k = 0
    for fan_in, fan_out in arch.layer_shapes:
        W = theta[k : k + fan_in * fan_out].reshape(fan_in, fan_out)
        k += fan_in * fan_out
        b = theta[k : k + fan_out]
        k += fan_out
        layers.append((W, b))
    return layers, theta[k]


def join_params(layers, rho):
    parts = []
    for W, b in layers:
        parts.append(np.ravel(W))
        parts.append(np.ravel(b))
    parts.append(np.atleast_1d(float(rho)))
    return np.concatenate(parts)


def init_params(arch, rng, log_noise=DEFAULT_LOG_NOISE):
    """Glorot-uniform weights, zero biases, ``rho = log_noise``."""
    layers = []
    for fan_in, fan_out in arch.layer_shapes:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return join_params(layers, log_noise)


@dataclass(frozen=True)
class NetworkParams:
    """One parameter sample ``theta = [theta_mu, rho]``."""

    architecture: Architecture
    vector: np.ndarray

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64)
        if v.shape != (self.architecture.n_params,):
            raise ValueError(f"expected {self.architecture.n_params} parameters, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @classmethod
    def from_layers(cls, arch, layers, rho):
        return cls(arch, join_params(layers, rho))

    @property
    def weights_and_biases(self):
        return self.vector[:-1]

    @property
    def log_noise_var(self):
        return float(self.vector[-1])

    @property
    def noise_var(self):
        return math.exp(self.log_noise_var)

    def layers(self):
        return split_params(self.architecture, self.vector)[0]


# --------------------------------------------------------------------------
# normalization


@dataclass(frozen=True)
class Normalization:
    """Affine maps between problem units and network units.

    Inputs map to ``[-1, 1]^D``; outputs are standardized; gradients follow
    by the chain rule.
    """

    lower: np.ndarray
    upper: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0

    @classmethod
    def identity(cls, dim):
        return cls(-np.ones(dim), np.ones(dim), 0.0, 1.0)

    @classmethod
    def fit(cls, lower, upper, y):
        y = np.asarray(y, dtype=np.float64)
        std = float(y.std()) if y.size > 1 else 0.0
        if not std > 1e-12:
            std = 1.0
        return cls(np.asarray(lower, float), np.asarray(upper, float), float(y.mean()), std)

    @property
    def half_range(self):
        return 0.5 * (self.upper - self.lower)

    @property
    def grad_factor(self):
        """Multiply a problem-unit gradient by this to get a network-unit one."""
        return self.half_range / self.y_std

    def x_to_unit(self, x):
        return (np.asarray(x, float) - 0.5 * (self.upper + self.lower)) / self.half_range

    def x_from_unit(self, u):
        return np.asarray(u, float) * self.half_range + 0.5 * (self.upper + self.lower)

    def y_to_unit(self, y):
        return (np.asarray(y, float) - self.y_mean) / self.y_std

    def y_from_unit(self, y):
        return np.asarray(y, float) * self.y_std + self.y_mean

    def grad_to_unit(self, g):
        return np.asarray(g, float) * self.grad_factor

    def grad_from_unit(self, g):
        return np.asarray(g, float) / self.grad_factor

    def to_dict(self):
        return {
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["lower"], float), np.asarray(d["upper"], float),
                   float(d["y_mean"]), float(d["y_std"]))


# --------------------------------------------------------------------------
# recorded forward pass and losses


@dataclass
class Batch:
    """Training data in network units. ``grads`` may be None."""

    x: np.ndarray
    y: np.ndarray
    grads: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.grads is not None:
            self.grads = np.asarray(self.grads, dtype=np.float64).reshape(self.x.shape)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y row counts differ")

    def __len__(self):
        return self.y.shape[0]

    def subset(self, idx):
        return Batch(self.x[idx], self.y[idx], None if self.grads is None else self.grads[idx])


class RecordedNet:
    """Parameter leaves of one network on a tape."""

    def __init__(self, tape, arch, theta):
        layers, rho = split_params(arch, theta)
        self.tape = tape
        self.arch = arch
        self.layers = [(tape.variable(W), tape.variable(b)) for W, b in layers]
        self.rho = tape.variable(rho)

    def leaves(self):
        out = []
        for W, b in self.layers:
            out += [W, b]
        out.append(self.rho)
        return out

    def flat_grad(self, loss):
        grads = ad.grad_wrt_params(loss, self.leaves())
        return np.concatenate([np.ravel(g) for g in grads])

    def outputs(self, x_node):
        """Raw network outputs, shape (n, output_dim)."""
        h = x_node
        last = len(self.layers) - 1
        for k, (W, b) in enumerate(self.layers):
            h = ad.add_bias(ad.matmul(h, W), b)
            if k < last:
                h = ad.tanh(h)
        return h

    def value(self, x_node):
        """Scalar-output network, shape (n,)."""
        return ad.column(self.outputs(x_node), 0)


def forward(params, x):
    """``phi(x; theta_mu)`` for one input vector, recorded on a fresh tape.

    Returns ``(value, node, x_leaf)`` so callers can differentiate further.
    """
    arch = params.architecture
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({arch.input_dim},)")
    tape = ad.Tape()
    net = RecordedNet(tape, arch, params.vector)
    xl = tape.variable(x[None, :])
    out = ad.sum_(net.value(xl))
    return float(out.value), out, xl


def _gaussian_nll(sq_residual_sum, n, rho):
    # mean over n points of r^2 / (2 s2) + 0.5 log(2 pi s2), with s2 = exp(rho)
    data = ad.scale(ad.mul(sq_residual_sum, ad.exp(ad.neg(rho))), 0.5 / n)
    return ad.add_const(ad.add(data, ad.scale(rho, 0.5)), 0.5 * LOG_2PI)


def _value_term(net, xl, batch):
    out = net.outputs(xl)
    phi = ad.column(out, 0)
    r = ad.sub(net.tape.constant(batch.y), phi)
    return out, _gaussian_nll(ad.sum_(ad.square(r)), len(batch), net.rho)


def _grad_term(net, xl, out, batch):
    if batch.grads is None:
        raise ValueError("batch has no gradient observations; use lambda_grad = 0")
    arch = net.arch
    if arch.output_dim == 1:
        (dphi,) = ad.grad_wrt_inputs(ad.sum_(ad.column(out, 0)), [xl])
        r = ad.sub(net.tape.constant(batch.grads), dphi)
        sq = ad.sum_(ad.square(r))
    else:
        # independent heads: column j+1 predicts the j-th partial derivative
        sq = None
        for j in range(arch.input_dim):
            rj = ad.sub(net.tape.constant(batch.grads[:, j]), ad.column(out, j + 1))
            s = ad.sum_(ad.square(rj))
            sq = s if sq is None else ad.add(sq, s)
    return _gaussian_nll(sq, len(batch), net.rho)


def prior_precisions(arch, prior_precision, fan_in_scaled):
    """Ridge precision per layer, applied to weights and biases alike."""
    if not fan_in_scaled:
        return [prior_precision] * len(arch.layer_shapes)
    return [prior_precision * fan_in for fan_in, _ in arch.layer_shapes]


def _prior_term(net, config):
    acc = None
    alphas = prior_precisions(net.arch, config.prior_precision, config.fan_in_scaled)
    for (W, b), alpha in zip(net.layers, alphas):
        s = ad.scale(ad.add(ad.sum_(ad.square(W)), ad.sum_(ad.square(b))), 0.5 * alpha)
        acc = s if acc is None else ad.add(acc, s)
    dev = ad.add_const(net.rho, -config.prior_log_noise)
    return ad.add(acc, ad.scale(ad.square(dev), 0.5 / config.prior_log_noise_var))


@dataclass(frozen=True)
class LossConfig:
    """Weights of the training objective."""

    lambda_grad: float = 1.0
    prior_precision: float = DEFAULT_PRIOR_PRECISION
    prior_log_noise: float = DEFAULT_LOG_NOISE
    fan_in_scaled: bool = True
    prior_log_noise_var: float = 1.0

    def __post_init__(self):
        if not self.lambda_grad >= 0:
            raise ValueError(f"lambda_grad must be nonnegative, got {self.lambda_grad}")
        if not self.prior_precision >= 0:
            raise ValueError("prior_precision must be nonnegative")
        if not self.prior_log_noise_var > 0:
            raise ValueError("prior_log_noise_var must be positive")


@dataclass
class LossParts:
    value: float
    grad: float
    prior: float
    total: float
    gradient: np.ndarray | None = field(default=None, repr=False)


def _record_losses(tape, arch, theta, batch, need_grad_term):
    net = RecordedNet(tape, arch, theta)
    xl = tape.variable(batch.x)
    out, lf = _value_term(net, xl, batch)
    lg = _grad_term(net, xl, out, batch) if need_grad_term else None
    return net, lf, lg


def loss_function(params, batch):
    """Mean Gaussian NLL of the function values."""
    tape = ad.Tape()
    _, lf, _ = _record_losses(tape, params.architecture, params.vector, batch, False)
    return float(lf.value)


def loss_gradient_term(params, batch):
    """Mean Gaussian NLL of the observed gradients against input-gradients."""
    tape = ad.Tape()
    _, _, lg = _record_losses(tape, params.architecture, params.vector, batch, True)
    return float(lg.value)


def prior_loss(params, config=LossConfig()):
    tape = ad.Tape()
    net = RecordedNet(tape, params.architecture, params.vector)
    return float(_prior_term(net, config).value)


def total_loss(params, batch, lambda_grad, config=None):
    """``L_f + lambda_grad * L_grad + L_prior``."""
    config = replace(config or LossConfig(), lambda_grad=lambda_grad)
    return objective(params.architecture, params.vector, batch, config, data_scale=1.0,
                     with_gradient=False).total


def objective(arch, theta, batch, config, data_scale=1.0, with_gradient=True):
    """``data_scale * (L_f + lambda * L_grad) + L_prior`` and its parameter gradient.

    ``data_scale`` is the dataset size when this is used as the SGHMC
    potential energy; the batch losses are means, so this restores the
    likelihood weight of the full dataset.
    """
    tape = ad.Tape()
    use_grad = config.lambda_grad > 0
    net, lf, lg = _record_losses(tape, arch, theta, batch, use_grad)
    prior = _prior_term(net, config)
    data = lf if lg is None else ad.add(lf, ad.scale(lg, config.lambda_grad))
    total = ad.add(ad.scale(data, data_scale), prior)
    gradient = net.flat_grad(total) if with_gradient else None
    return LossParts(
        value=float(lf.value),
        grad=float(lg.value) if lg is not None else 0.0,
        prior=float(prior.value),
        total=float(total.value),
        gradient=gradient,
    )


# --------------------------------------------------------------------------
# posterior ensemble


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float
    grad_mean: np.ndarray
    grad_variance: np.ndarray


class PosteriorEnsemble:
    """M parameter samples sharing one architecture and one normalization."""

    def __init__(self, architecture, samples, normalization=None):
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        if samples.shape[0] < 1 or samples.size == 0:
            raise ValueError("ensemble needs at least one sample")
        if samples.shape[1] != architecture.n_params:
            raise ValueError(
                f"samples have {samples.shape[1]} parameters, architecture needs {architecture.n_params}"
            )
        samples.setflags(write=False)
        self.architecture = architecture
        self.samples = samples
        self.normalization = normalization or Normalization.identity(architecture.input_dim)
        self._stacked = None

    def __len__(self):
        return self.samples.shape[0]

    @property
    def size(self):
        return self.samples.shape[0]

    def params(self, i):
        return NetworkParams(self.architecture, self.samples[i])

    @property
    def noise_var(self):
        """Ensemble-average observation-noise variance, network units."""
        return float(np.mean(np.exp(self.samples[:, -1])))

    def _stack(self):
        if self._stacked is None:
            per = [split_params(self.architecture, s)[0] for s in self.samples]
            self._stacked = [
                (np.stack([p[k][0] for p in per]), np.stack([p[k][1] for p in per])[:, None, :])
                for k in range(len(per[0]))
            ]
        return self._stacked

    def member_outputs(self, u):
        """Values and input-gradients of every member at unit-scaled inputs.

        ``u`` has shape (n, D). Returns ``phi`` (M, n) and ``dphi`` (M, n, D),
        both in network units. Backpropagation is done on stacked weight
        arrays for all members at once.
        """
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        layers = self._stack()
        acts = []
        h = np.broadcast_to(u, (self.size,) + u.shape)
        for W, b in layers[:-1]:
            h = np.tanh(h @ W + b)
            acts.append(h)
        W, b = layers[-1]
        phi = (h @ W[:, :, :1] + b[:, :, :1])[..., 0]
        g = np.broadcast_to(W[:, None, :, 0], (self.size, u.shape[0], W.shape[1]))
        for (W, _), a in zip(reversed(layers[:-1]), reversed(acts)):
            g = (g * (1.0 - a * a)) @ np.swapaxes(W, 1, 2)
        return phi, g

    def predict_unit(self, u):
        """Predictive moments in network units at inputs ``u`` (n, D)."""
        phi, dphi = self.member_outputs(u)
        s2 = self.noise_var
        mean = phi.mean(axis=0)
        var = phi.var(axis=0) + s2
        gmean = dphi.mean(axis=0)
        gvar = dphi.var(axis=0) + s2
        return mean, var, gmean, gvar

    def predict_many(self, x):
        """Predictive moments in problem units at inputs ``x`` (n, D)."""
        nz = self.normalization
        mean, var, gmean, gvar = self.predict_unit(nz.x_to_unit(np.atleast_2d(x)))
        gf = nz.grad_factor
        return (
            nz.y_from_unit(mean),
            var * nz.y_std**2,
            gmean / gf,
            gvar / gf**2,
        )

    def predict(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.architecture.input_dim,):
            raise ValueError(f"input has shape {x.shape}, expected ({self.architecture.input_dim},)")
        m, v, gm, gv = self.predict_many(x[None, :])
        return Prediction(float(m[0]), float(v[0]), gm[0].copy(), gv[0].copy())

    def moments_with_input_gradient(self, x):
        """``mu, sigma`` and their gradients with respect to ``x`` (problem units).

        Exact derivatives of the sample-based moments, used by acquisition
        optimizers. ``x`` has shape (n, D).
        """
        nz = self.normalization
        u = nz.x_to_unit(np.atleast_2d(x))
        phi, dphi = self.member_outputs(u)
        M = self.size
        mean = phi.mean(axis=0)
        dev = phi - mean
        var = (dev * dev).mean(axis=0) + self.noise_var
        dmean = dphi.mean(axis=0)
        # d var / du = (2/M) sum_i dev_i * (dphi_i - dmean); the dmean part sums to 0
        dvar = 2.0 / M * np.einsum("mn,mnd->nd", dev, dphi)
        sigma = np.sqrt(var)
        dsigma = dvar / (2.0 * sigma[:, None])
        inv_half = 1.0 / nz.half_range
        return (
            nz.y_from_unit(mean),
            sigma * nz.y_std,
            dmean * nz.y_std * inv_half,
            dsigma * nz.y_std * inv_half,
        )

    def head_outputs(self, u):
        """Raw outputs of all members for multi-head networks, (M, n, output_dim)."""
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        layers = self._stack()
        h = np.broadcast_to(u, (self.size,) + u.shape)
        for W, b in layers[:-1]:
            h = np.tanh(h @ W + b)
        W, b = layers[-1]
        return h @ W + b

    # ----------------------------------------------------------------- io

    def to_dict(self):
        return {
            "architecture": self.architecture.to_dict(),
            "normalization": self.normalization.to_dict(),
            "layout": "layer-major; weights (fan_in x fan_out, row-major) then biases; then rho",
            "samples": self.samples.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        arch = Architecture(**d["architecture"])
        return cls(arch, np.asarray(d["samples"], float), Normalization.from_dict(d["normalization"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def predict(ensemble, x):
    """Predictive mean/variance of the value and input-gradient at ``x``."""
    return ensemble.predict(x)
