"""Model zoo: jump-chain models with duality, a discretized one-dimensional
fractional Schrodinger model, and the closed-form oscillator operator.

All zoo models share the unit-total-jump-rate convention: the generator of a
model is Q - I - diag(V) in model time, and a fractional model records the
rescale ``time_scale`` relating model time to physical time.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma as _gamma_fn

import numpy as np

from .errors import ClassifierError, ModelError
from .operators import KernelOperator, MarkovModel, feynman_kac_operator, mehler_kernel
from .statespace import StateSpace

__all__ = [
    "PotentialSpec",
    "LevyProfile",
    "build_ctmc_model",
    "build_fractional_model",
    "check_djp",
    "build_ho_discretization",
    "regime_classifier",
    "lattice_space",
    "zoo_build",
    "zoo_catalog",
]


@dataclass(frozen=True)
class PotentialSpec:
    """Killing potential profile evaluated on point coordinates.

    log-power: scale * (1 v log|x|)^beta, power: scale * (1 v |x|)^beta;
    confining kinds need beta > 0.  ``table`` supplies explicit per-point
    values for kind == "custom-table".
    """

    kind: str
    beta: float = 1.0
    scale: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("log-power", "power", "constant", "custom-table"):
            raise ModelError(f"unknown potential kind {self.kind!r}")
        if self.kind in ("log-power", "power") and self.beta <= 0:
            raise ModelError("confining potentials need beta > 0")
        if self.scale <= 0:
            raise ModelError("scale must be positive")

    def evaluate(self, x) -> np.ndarray:
        ax = np.abs(np.asarray(x, dtype=float))
        if self.kind == "log-power":
            return self.scale * np.maximum(1.0, np.log(np.maximum(ax, 1e-300))) ** self.beta
        if self.kind == "power":
            return self.scale * np.maximum(1.0, ax) ** self.beta
        if self.kind == "constant":
            return np.full_like(ax, self.scale)
        vals = np.asarray(self.table, dtype=float)
        if vals.shape != ax.shape:
            raise ModelError("custom-table length must match the point count")
        return vals


def stable_constant(alpha: float, d: int = 1) -> float:
    """Normalizing constant of the isotropic alpha-stable jump density,
    nu(x) = c |x|^{-d-alpha}, matched to characteristic exponent |xi|^alpha."""
    return (
        alpha
        * 2.0 ** (alpha - 1.0)
        * _gamma_fn((d + alpha) / 2.0)
        / (np.pi ** (d / 2.0) * _gamma_fn(1.0 - alpha / 2.0))
    )


@dataclass(frozen=True)
class LevyProfile:
    """Radial jump-density profile.

    polynomial: c(d, alpha) r^{-d-alpha} (e v r)^{-delta}, which for delta = 0
    is exactly the isotropic alpha-stable density; exponential:
    e^{-m r} (1 ^ r)^{-d-alpha} (1 v r)^{-delta} with delta > (d+1)/2.
    Only d = 1 is realized on lattices here.
    """

    kind: str
    alpha: float
    delta: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential"):
            raise ModelError(f"unknown Levy profile kind {self.kind!r}")
        if not 0.0 < self.alpha < 2.0:
            raise ModelError("alpha must lie in (0, 2)")
        if self.delta < 0:
            raise ModelError("delta must be nonnegative")
        if self.kind == "exponential":
            if self.m <= 0:
                raise ModelError("exponential profiles need m > 0")
            if self.delta <= 1.0:
                raise ModelError("exponential profiles need delta > (d+1)/2 = 1")

    def profile(self, r) -> np.ndarray:
        """f(r) for r > 0; nu(x) = f(|x|)."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("profile is defined for r > 0")
        if self.kind == "polynomial":
            return (
                stable_constant(self.alpha)
                * r ** (-1.0 - self.alpha)
                * np.maximum(np.e, r) ** (-self.delta)
            )
        return (
            np.exp(-self.m * r)
            * np.minimum(1.0, r) ** (-1.0 - self.alpha)
            * np.maximum(1.0, r) ** (-self.delta)
        )


# ---------------------------------------------------------------------------
# CTMC zoo


def _metropolis_birth_death(mu: np.ndarray) -> np.ndarray:
    """Reversible nearest-neighbour chain on a path: propose +-1 with
    probability 1/2 each, accept with min(1, mu(to)/mu(from)); rejected or
    out-of-range proposals stay put."""
    n = len(mu)
    Q = np.zeros((n, n))
    for i in range(n):
        for j in (i - 1, i + 1):
            if 0 <= j < n:
                Q[i, j] = 0.5 * min(1.0, mu[j] / mu[i])
        Q[i, i] = 1.0 - Q[i].sum()
    return Q


def _box_walk(d: int, side: int) -> tuple[np.ndarray, np.ndarray]:
    """Lazy nearest-neighbour walk on {0..side-1}^d; missing neighbours at the
    boundary turn into holding mass."""
    coords = np.stack(
        np.meshgrid(*([np.arange(side)] * d), indexing="ij"), axis=-1
    ).reshape(-1, d)
    n = len(coords)
    Q = np.zeros((n, n))
    index = {tuple(c): i for i, c in enumerate(coords)}
    for i, c in enumerate(coords):
        for axis in range(d):
            for step in (-1, 1):
                cc = list(c)
                cc[axis] += step
                j = index.get(tuple(cc))
                if j is not None:
                    Q[i, j] = 1.0 / (2 * d)
        Q[i, i] = 1.0 - Q[i].sum()
    return Q, coords.astype(float)


def build_ctmc_model(n: int, q_spec, mu=None, V=None, label: str | None = None) -> MarkovModel:
    """Assemble a MarkovModel from a kernel recipe.

    Recipes: "swap2" (the canonical 2-state swap), "birth-death" (Metropolis
    path chain, reversible for the given mu), "box:d" (lazy walk on a box in
    Z^d with side^d = n), "complete", "cycle" (non-reversible rotation), or an
    explicit row-stochastic matrix.  The dual kernel is derived from the
    duality relation; a recipe/measure pair for which mu is not invariant is
    rejected as a ModelError.
    """
    coords = None
    if isinstance(q_spec, str):
        recipe = q_spec
        if recipe == "swap2":
            if n != 2:
                raise ModelError("swap2 is a 2-state recipe")
            Q = np.array([[0.0, 1.0], [1.0, 0.0]])
            coords = np.array([[0.0], [1.0]])
        elif recipe == "birth-death":
            w = np.ones(n) if mu is None else np.asarray(mu, dtype=float)
            Q = _metropolis_birth_death(w)
            coords = (np.arange(n) - (n - 1) / 2.0)[:, None]
        elif recipe.startswith("box"):
            d = int(recipe.split(":", 1)[1]) if ":" in recipe else 1
            side = round(n ** (1.0 / d))
            if side**d != n:
                raise ModelError(f"n={n} is not a {d}-dimensional box size")
            Q, coords = _box_walk(d, side)
            coords = coords - coords.mean(axis=0)
        elif recipe == "complete":
            Q = (np.ones((n, n)) - np.eye(n)) / (n - 1)
            space = StateSpace(
                tuple(range(n)),
                np.ones(n) if mu is None else np.asarray(mu, dtype=float),
                None,
                1.0 - np.eye(n),  # discrete metric
            )
            V_arr = np.zeros(n) if V is None else (
                V.evaluate(np.zeros(n)) if isinstance(V, PotentialSpec) else np.asarray(V, float)
            )
            return MarkovModel(space, Q, V_arr, label=label or "complete")
        elif recipe == "cycle":
            Q = np.roll(np.eye(n), 1, axis=1)
            coords = np.arange(n, dtype=float)[:, None]
        else:
            raise ModelError(f"unknown kernel recipe {q_spec!r}")
    else:
        Q = np.asarray(q_spec, dtype=float)
        if Q.shape != (n, n):
            raise ModelError("user matrix has the wrong shape")
    mu_arr = np.ones(n) if mu is None else np.asarray(mu, dtype=float)
    if coords is None:
        coords = np.arange(n, dtype=float)[:, None]
    space = StateSpace(tuple(range(n)), mu_arr, coords)
    if V is None:
        V_arr = np.zeros(n)
    elif isinstance(V, PotentialSpec):
        V_arr = V.evaluate(np.linalg.norm(space.coords, axis=1))
    else:
        V_arr = np.asarray(V, dtype=float)
    name = label or (q_spec if isinstance(q_spec, str) else "user")
    model = MarkovModel(space, Q, V_arr, label=name)
    if isinstance(q_spec, str) and not model.is_irreducible():
        raise ModelError(f"recipe {q_spec!r} produced a reducible chain")
    return model


# ---------------------------------------------------------------------------
# fractional lattice model


def lattice_space(half_width: float, h: float) -> StateSpace:
    """Symmetric 1D lattice {-K h, ..., K h} with mu = h per point."""
    K = int(round(half_width / h))
    xs = (np.arange(-K, K + 1)) * h
    return StateSpace(tuple(range(len(xs))), np.full(len(xs), h), xs[:, None])


def build_fractional_model(
    grid: StateSpace | tuple, levy: LevyProfile, V: PotentialSpec
) -> MarkovModel:
    """Discretized 1D non-local Schrodinger model on a truncated lattice.

    Jump weights are w(x,y) = nu(y-x) h for y != x (profile at lattice
    differences; jumps below one lattice cell are absent by construction).
    The weights are uniformized at the maximal total rate: Q(x,y) = w/rate_max
    off the diagonal with holding mass on it, so that a single recorded
    ``time_scale`` = rate_max maps model time to physical time exactly, and
    the stored potential is V/rate_max.
    """
    space = grid if isinstance(grid, StateSpace) else lattice_space(*grid)
    xs = space.coords[:, 0]
    n = space.n
    if n > 2001:
        raise ModelError("lattice exceeds the 2000-state desk-scale budget")
    diff = xs[None, :] - xs[:, None]
    off = ~np.eye(n, dtype=bool)
    w = np.zeros((n, n))
    w[off] = levy.profile(np.abs(diff[off])) * (xs[1] - xs[0])
    rates = w.sum(axis=1)
    rate_max = float(rates.max())
    Q = w / rate_max
    np.fill_diagonal(Q, 1.0 - rates / rate_max)
    V_arr = V.evaluate(xs) / rate_max
    return MarkovModel(
        space,
        Q,
        V_arr,
        time_scale=rate_max,
        label="frac",
        meta={"levy": levy, "potential": V, "h": float(xs[1] - xs[0])},
    )


def physical_time_operator(model: MarkovModel, t_phys: float) -> KernelOperator:
    """Operator of the physical-time semigroup e^{t(rate (Q - I) - V_phys)}."""
    return feynman_kac_operator(model, model.time_scale * t_phys)


def check_djp(levy: LevyProfile, grid: StateSpace | tuple) -> float | None:
    """Direct-jump constant sup_x (f1 * f1)(x) h / f1(x) with f1 = f ^ 1.

    The convolution is scanned on the given lattice and again on a lattice of
    twice the range; None is returned when the constant keeps growing under
    the range extension (no stable DJP constant).
    """
    space = grid if isinstance(grid, StateSpace) else lattice_space(*grid)
    xs = space.coords[:, 0]
    h = xs[1] - xs[0]
    R = float(xs.max())

    def const(R_range: float) -> float:
        K = int(round(R_range / h))
        zs = np.arange(-K, K + 1) * h
        f1 = np.minimum(levy.profile(np.abs(np.where(zs == 0, h, zs))), 1.0)
        conv = np.convolve(f1, f1)[K : 3 * K + 1] * h
        # underflowed profile tails with surviving convolution mass are an
        # immediate divergence signal
        ratio = np.full_like(f1, 0.0)
        pos = f1 > 0
        ratio[pos] = conv[pos] / f1[pos]
        if np.any(~pos & (conv > 0)):
            return np.inf
        return float(ratio.max())

    c1, c2 = const(R), const(2.0 * R)
    if not np.isfinite(c2) or c2 > 1.10 * c1:
        return None
    return c2


def build_ho_discretization(grid: StateSpace | tuple, t: float) -> KernelOperator:
    """Closed-form oscillator operator: density u[x][y] = mehler_kernel(t,x,y)
    on a symmetric lattice with mu = spacing weights.  No exponentials are
    computed; this is the continuum oracle."""
    if t <= 0:
        raise ValueError("t must be positive")
    space = grid if isinstance(grid, StateSpace) else lattice_space(*grid)
    xs = space.coords[:, 0]
    u = mehler_kernel(t, xs[:, None, None], xs[None, :, None])
    return KernelOperator(t, u, space, {"method": "mehler-closed-form"})


# ---------------------------------------------------------------------------
# regime classification


def regime_classifier(levy: LevyProfile, V: PotentialSpec) -> str:
    """Predicted large-|x| regime from the growth comparison of V against
    |log nu| (ground-state domination) and log|x| (heat content).

    Returns "aGSD", "non-aGSD-finite-Z" or "non-aGSD-infinite-Z"; the
    prediction is confirmed by profile diagnostics on the discretized model.
    """
    if V.kind not in ("log-power", "power"):
        raise ClassifierError("classification needs a confining potential profile")
    beta = V.beta
    if levy.kind == "polynomial":
        # |log nu| grows like log r
        agsd = beta >= 1.0 if V.kind == "log-power" else True
        if agsd:
            return "aGSD"
        # here V is log-power with beta < 1, so V/log r -> 0
        return "non-aGSD-infinite-Z"
    # exponential profile: |log nu| grows like r
    agsd = beta >= 1.0 if V.kind == "power" else False
    if agsd:
        return "aGSD"
    if V.kind == "power":
        return "non-aGSD-finite-Z"  # r^beta / log r diverges for beta > 0
    return "non-aGSD-finite-Z" if beta >= 1.0 else "non-aGSD-infinite-Z"


# ---------------------------------------------------------------------------
# zoo registry


def zoo_catalog() -> list[tuple[str, str]]:
    """Stable-ordered (id, parameter schema) listing of the model zoo."""
    return [
        ("birthdeath", "birthdeath(n) [mu=..., potential kind/beta/scale]"),
        ("box", "box(d, n) lazy walk on a box in Z^d"),
        ("complete", "complete(n) uniform jumps"),
        ("cycle", "cycle(n) non-reversible rotation"),
        ("frac", "frac(alpha, delta, beta, kind) 1D fractional Schrodinger lattice"),
        ("ho", "ho(half_width, h) closed-form oscillator kernel lattice"),
        ("swap2", "swap2 canonical 2-state swap"),
        ("user", "user [q = rows separated by ';', mu = ..., v = ...]"),
    ]


def _pop_required(p: dict, key: str, model_id: str):
    try:
        return p.pop(key)
    except KeyError:
        raise ModelError(f"model {model_id!r} needs a {key!r} parameter") from None


def zoo_build(model_id: str, params: dict):
    """Build a zoo entry by id; returns a MarkovModel, except for "ho" which
    returns a factory t -> KernelOperator plus its lattice."""
    p = dict(params)
    pot = None
    if "potential" in p or "beta" in p:
        pot = PotentialSpec(
            kind=p.pop("potential", "power"),
            beta=float(p.pop("beta", 1.0)),
            scale=float(p.pop("scale", 1.0)),
        )
    if model_id == "swap2":
        return build_ctmc_model(2, "swap2", V=p.pop("V", pot), label="swap2")
    if model_id == "birthdeath":
        n = int(_pop_required(p, "n", model_id))
        mu = p.pop("mu", None)
        return build_ctmc_model(n, "birth-death", mu=mu, V=pot, label=f"birthdeath({n})")
    if model_id == "box":
        d = int(p.pop("d", 1))
        n = int(_pop_required(p, "n", model_id))
        return build_ctmc_model(n, f"box:{d}", V=pot, label=f"box({d},{n})")
    if model_id == "complete":
        n = int(_pop_required(p, "n", model_id))
        return build_ctmc_model(n, "complete", V=pot, label=f"complete({n})")
    if model_id == "cycle":
        n = int(_pop_required(p, "n", model_id))
        return build_ctmc_model(n, "cycle", V=pot, label=f"cycle({n})")
    if model_id == "frac":
        levy = LevyProfile(
            kind=p.pop("kind", "polynomial"),
            alpha=float(_pop_required(p, "alpha", model_id)),
            delta=float(p.pop("delta", 0.0)),
            m=float(p.pop("m", 1.0)),
        )
        grid = (float(p.pop("half_width", 50.0)), float(p.pop("h", 0.25)))
        if pot is None:
            raise ModelError("frac models need a potential spec")
        model = build_fractional_model(grid, levy, pot)
        label = (
            f"frac({levy.kind},a={levy.alpha:g},d={levy.delta:g},"
            f"{pot.kind},b={pot.beta:g})"
        )
        return MarkovModel(
            model.space, model.Q, model.V, Q_dual=model.Q_dual,
            time_scale=model.time_scale, label=label, meta=model.meta,
        )
    if model_id == "ho":
        grid = lattice_space(float(p.pop("half_width", 8.0)), float(p.pop("h", 0.05)))
        return (lambda t: build_ho_discretization(grid, t)), grid
    if model_id == "user":
        q = _pop_required(p, "q", model_id)
        if isinstance(q, str):
            q = [[float(v) for v in row.split()] for row in q.split(";")]
        Q = np.asarray(q, dtype=float)
        mu = p.pop("mu", None)
        if isinstance(mu, str):
            mu = [float(v) for v in mu.split()]
        v = p.pop("v", None)
        if isinstance(v, str):
            v = [float(x) for x in v.split()]
        return build_ctmc_model(Q.shape[0], Q, mu=mu, V=v, label="user")
    raise ModelError(f"unknown zoo id {model_id!r}")
