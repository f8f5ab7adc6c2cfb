"""Kernel operators: uniformized transitions, Feynman-Kac exponentials and
the closed-form harmonic-oscillator (Mehler) kernel.

All kernel densities are stored with respect to the reference measure mu, so
that U_t f(x) = sum_y u_t(x, y) f(y) mu(y).  The transition form is
P_t(x, y) = u_t(x, y) mu(y).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import ModelError
from .statespace import StateSpace

__all__ = [
    "MarkovModel",
    "KernelOperator",
    "dual_model",
    "uniformized_transition",
    "feynman_kac_operator",
    "adjoint",
    "compose",
    "identity_operator",
    "mehler_kernel",
    "log_mehler_kernel",
    "ho_survival",
    "log_ho_survival",
    "operator_to_text",
    "operator_from_text",
]

_STOCH_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MarkovModel:
    """Generator data (Q, Q_dual, V) of a Feynman-Kac semigroup on a space.

    Q is the one-step jump matrix of a rate-1 continuous-time chain; the dual
    kernel satisfies mu(x) Q(x,y) = mu(y) Q_dual(y,x).  Both must be
    row-stochastic, which forces mu to be invariant for Q.  The generator
    acting on functions is G = Q - I - diag(V).
    """

    space: StateSpace
    Q: np.ndarray
    V: np.ndarray
    Q_dual: np.ndarray = field(default=None)  # type: ignore[assignment]
    time_scale: float = 1.0
    label: str = "model"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.space.n
        Q = np.asarray(self.Q, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if Q.shape != (n, n):
            raise ModelError("Q must be square over the state space")
        if np.any(Q < -_STOCH_TOL):
            raise ModelError("Q has negative entries")
        if np.max(np.abs(Q.sum(axis=1) - 1.0)) > _STOCH_TOL:
            raise ModelError("rows of Q must sum to 1 within 1e-12")
        if V.shape != (n,) or not np.all(np.isfinite(V)):
            raise ModelError("V must be one finite value per point")
        mu = self.space.mu
        Qd = self.Q_dual
        if Qd is None:
            Qd = (Q * mu[:, None]).T / mu[:, None]
        else:
            Qd = np.asarray(Qd, dtype=float)
        if np.max(np.abs(mu[:, None] * Q - (mu[:, None] * Qd).T)) > _STOCH_TOL:
            raise ModelError("duality identity mu(x)Q(x,y) = mu(y)Q_dual(y,x) violated")
        if np.max(np.abs(Qd.sum(axis=1) - 1.0)) > _STOCH_TOL:
            raise ModelError(
                "dual kernel is not stochastic: mu is not an invariant measure of Q"
            )
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "Q_dual", Qd)
        for arr in (Q, V, Qd):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.space.n

    def generator(self) -> np.ndarray:
        """G = Q - I - diag(V), acting on functions."""
        return self.Q - np.eye(self.n) - np.diag(self.V)

    def is_irreducible(self) -> bool:
        from scipy.sparse.csgraph import connected_components

        ncomp, _ = connected_components(self.Q > 0, directed=True, connection="strong")
        return ncomp == 1


def dual_model(model: MarkovModel) -> MarkovModel:
    """The model of the adjoint semigroup: jump kernel Q_dual, same V."""
    return MarkovModel(
        model.space,
        model.Q_dual,
        model.V,
        Q_dual=model.Q,
        time_scale=model.time_scale,
        label=model.label + "*",
        meta=dict(model.meta),
    )


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Kernel density u_t(x, y) of U_t with respect to mu, at a fixed time t."""

    t: float
    density: np.ndarray
    space: StateSpace
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        u = np.asarray(self.density, dtype=float)
        n = self.space.n
        if u.shape != (n, n):
            raise ValueError("density must be square over the state space")
        if np.any(u < -1e-14):
            raise ValueError("kernel density must be nonnegative")
        object.__setattr__(self, "density", u)
        u.setflags(write=False)

    def apply(self, f) -> np.ndarray:
        """U_t f(x) = sum_y u(x,y) f(y) mu(y)."""
        return self.density @ (np.asarray(f, float) * self.space.mu)

    def apply_adjoint(self, g) -> np.ndarray:
        """U*_t g(y) = sum_x u(x,y) g(x) mu(x)."""
        return self.density.T @ (np.asarray(g, float) * self.space.mu)

    def survival(self) -> np.ndarray:
        """U_t 1 per point."""
        return self.density @ self.space.mu

    def dual_survival(self) -> np.ndarray:
        """U*_t 1 per point."""
        return self.density.T @ self.space.mu

    def transition(self) -> np.ndarray:
        """Transition form P_t(x,y) = u(x,y) mu(y)."""
        return self.density * self.space.mu[None, :]

    def positivity_improving(self) -> bool:
        return bool(np.all(self.density > 0))


def identity_operator(space: StateSpace) -> KernelOperator:
    """The t -> 0 limit: density I/mu, the unit for composition."""
    return KernelOperator(0.0, np.diag(1.0 / space.mu), space, {"method": "identity"})


def _poisson_terms(t: float, eps: float) -> int:
    """Smallest N with Poisson(t) tail mass above N below eps.

    Uses the survival-function quantile, which stays accurate where the naive
    running-sum of e^{-t} t^k/k! underflows for large t.
    """
    from scipy.stats import poisson

    N = int(poisson.isf(eps, t))
    while poisson.sf(N, t) >= eps:  # guard against quantile edge rounding
        N += 1
    return N


def uniformized_transition(model: MarkovModel, t: float, eps: float = 1e-14) -> KernelOperator:
    """Free transition operator P_t = e^{-t} sum_n t^n/n! Q^n, V ignored.

    The series is truncated once the neglected Poisson(t) tail mass drops
    below eps; the chosen order is recorded in the operator metadata.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    N = _poisson_terms(t, eps)
    n = model.n
    # log-space Poisson weights keep t^k/k! finite for large t
    P = np.zeros((n, n))
    M = np.eye(n)
    for k in range(N + 1):
        logw = -t + k * np.log(t) - gammaln(k + 1) if k > 0 else -t
        P += np.exp(logw) * M
        if k < N:
            M = M @ model.Q
    density = P / model.space.mu[None, :]
    return KernelOperator(
        t, density, model.space, {"method": "uniformized", "poisson_terms": N, "eps": eps}
    )


def feynman_kac_operator(
    model: MarkovModel, t: float, method: str = "exact", steps: int = 0
) -> KernelOperator:
    """U_t = exp(t (Q - I - diag(V))), as a kernel operator.

    method="exact" uses the dense scaling-and-squaring exponential;
    method="trotter" uses the Lie splitting (e^{(t/k)(Q-I)} e^{-(t/k)V})^k
    with k = steps, which converges to the exact operator as k grows.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    G = model.generator()
    if method == "exact":
        U = expm(t * G)
        meta = {"method": "exact-exponential"}
    elif method == "trotter":
        if steps <= 0:
            raise ValueError("trotter requires a positive number of steps")
        dt = t / steps
        kin = expm(dt * (model.Q - np.eye(model.n)))
        step = kin * np.exp(-dt * model.V)[None, :]
        U = np.linalg.matrix_power(step, steps)
        meta = {"method": "trotter", "steps": steps}
    else:
        raise ValueError(f"unknown method {method!r}")
    U = np.maximum(U, 0.0)  # scrub exponential round-off of order 1e-17
    density = U / model.space.mu[None, :]
    return KernelOperator(t, density, model.space, meta)


def adjoint(op: KernelOperator) -> KernelOperator:
    """The L^2(mu)-adjoint: u*(x,y) = u(y,x)."""
    return KernelOperator(op.t, op.density.T.copy(), op.space, dict(op.meta))


def compose(op_s: KernelOperator, op_t: KernelOperator) -> KernelOperator:
    """Chapman-Kolmogorov product: u_{s+t}(x,y) = sum_z u_s(x,z) u_t(z,y) mu(z)."""
    a, b = op_s.space, op_t.space
    if a is not b and not (a.points == b.points and np.array_equal(a.mu, b.mu)):
        raise ValueError("operators live on different state spaces")
    u = (op_s.density * op_s.space.mu[None, :]) @ op_t.density
    return KernelOperator(op_s.t + op_t.t, u, op_s.space, {"method": "compose"})


def _pair_norms(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sq_plus = np.sum(np.atleast_1d(x + y) ** 2, axis=-1)
    sq_minus = np.sum(np.atleast_1d(x - y) ** 2, axis=-1)
    d = np.atleast_1d(x).shape[-1] if np.ndim(x) else 1
    return sq_plus, sq_minus, d


def log_mehler_kernel(t: float, x, y) -> np.ndarray | float:
    """log of the Mehler kernel; stable far from the origin."""
    if t <= 0:
        raise ValueError("t must be positive")
    sq_plus, sq_minus, d = _pair_norms(x, y)
    out = -0.5 * d * np.log(2.0 * np.pi * np.sinh(2.0 * t)) - 0.25 * (
        np.tanh(t) * sq_plus + sq_minus / np.tanh(t)
    )
    return out if out.shape else float(out)


def mehler_kernel(t: float, x, y) -> np.ndarray | float:
    """Heat kernel of the d-dimensional quantum harmonic oscillator,

    u_t(x,y) = (2 pi sinh 2t)^{-d/2} exp(-(tanh t |x+y|^2 + coth t |x-y|^2)/4).
    """
    return np.exp(log_mehler_kernel(t, x, y))


def log_ho_survival(t: float, x) -> np.ndarray | float:
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    sq = np.sum(np.atleast_1d(x) ** 2, axis=-1)
    d = np.atleast_1d(x).shape[-1] if np.ndim(x) else 1
    out = -0.5 * d * np.log(np.cosh(2.0 * t)) - 0.5 * sq * np.tanh(2.0 * t)
    return out if out.shape else float(out)


def ho_survival(t: float, x) -> np.ndarray | float:
    """U_t 1(x) = (cosh 2t)^{-d/2} exp(-|x|^2 / (2 coth 2t)) for the oscillator."""
    return np.exp(log_ho_survival(t, x))


def operator_to_text(op: KernelOperator) -> str:
    """Serialize to the plain-text matrix exchange format: 't n' then n rows."""
    lines = [f"{format(op.t, '.17g')} {op.space.n}"]
    for row in op.density:
        lines.append(" ".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def operator_from_text(text: str, space: StateSpace) -> KernelOperator:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    t_str, n_str = lines[0].split()
    t, n = float(t_str), int(n_str)
    if n != space.n or len(lines) != n + 1:
        raise ValueError("serialized operator does not match the space")
    u = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    return KernelOperator(t, u, space, {"method": "from-text"})
