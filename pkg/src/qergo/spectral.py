"""Principal eigentriple (lambda0, phi0, psi0) and spectral gap of -G.

The left eigenfunction psi0 is taken with respect to the mu-weighted pairing,
so that U*_t psi0 = e^{-lambda0 t} psi0 holds as a kernel identity; it differs
from the plain-transpose left eigenvector by a factor 1/mu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig

from .errors import ModelError, NondegeneracyError, PositivityError
from .operators import KernelOperator, MarkovModel

__all__ = [
    "SpectralData",
    "principal_triple",
    "principal_triple_from_operator",
    "eigen_residuals",
    "spectral_to_text",
]

_DEGEN_TOL = 1e-10
_RESID_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Jentzsch eigentriple plus the pairing constant and the spectral gap.

    lambda0 is the smallest real part of Spec(-G); phi0 and psi0 are the
    strictly positive right/left eigenfunctions, L2(mu)-normalized; Lambda is
    sum phi0 psi0 mu and gap is the distance from lambda0 to the real part of
    the rest of the spectrum.
    """

    lambda0: float
    phi0: np.ndarray
    psi0: np.ndarray
    Lambda: float
    gap: float
    eigenvalues: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        for arr in (self.phi0, self.psi0, self.eigenvalues):
            if arr is not None:
                np.asarray(arr).setflags(write=False)

    def qsd_weights(self, mu: np.ndarray) -> np.ndarray:
        """m = psi0 mu / ||psi0||_{L1(mu)}."""
        w = self.psi0 * mu
        return w / w.sum()


def _positive_direction(v: np.ndarray, what: str) -> np.ndarray:
    """Fix the sign of a principal eigenvector and insist on positivity.

    Entries are allowed to be negative only at the level of eigensolver
    round-off (relative 1e-8); genuinely mixed signs raise PositivityError.
    """
    v = np.real(v)
    v = v * np.sign(v[np.argmax(np.abs(v))])
    vmax = np.abs(v).max()
    if np.any(v < -1e-8 * vmax):
        raise PositivityError(
            f"{what} has mixed signs; the chain is reducible or positivity fails"
        )
    return np.abs(v)


def principal_triple(model: MarkovModel) -> SpectralData:
    """Dense eigendecomposition of -G = I - Q + diag(V).

    Requires an irreducible Q (checked by a reachability scan).  Raises
    NondegeneracyError when the dominant eigenvalue is not simple within
    1e-10 and PositivityError when an eigenvector has mixed signs.
    """
    if not model.is_irreducible():
        raise ModelError("principal_triple requires an irreducible jump matrix")
    mu = model.space.mu
    A = -model.generator()
    w, vl, vr = eig(A, left=True, right=True)
    order = np.argsort(w.real)
    lam0 = w[order[0]].real
    if abs(w[order[1]] - w[order[0]]) < _DEGEN_TOL:
        raise NondegeneracyError("dominant eigenvalue of -G is not simple")
    gap = float(w[order[1]].real - lam0)
    phi = _positive_direction(vr[:, order[0]], "right eigenfunction")
    phi = phi / np.sqrt(np.sum(phi**2 * mu))
    # plain left eigenvector of A, reweighted to the mu-pairing convention
    psi = _positive_direction(vl[:, order[0]], "left eigenfunction") / mu
    psi = psi / np.sqrt(np.sum(psi**2 * mu))
    G = model.generator()
    # psi0 solves the dual-generator eigenproblem (Q_dual - I - V) psi = -lam0 psi,
    # which is the mu-pairing form of the left eigenequation
    G_dual = model.Q_dual - np.eye(model.n) - np.diag(model.V)
    res_r = np.max(np.abs(G @ phi + lam0 * phi))
    res_l = np.max(np.abs(G_dual @ psi + lam0 * psi))
    scale = max(1.0, np.abs(A).max())
    if max(res_r, res_l) > _RESID_TOL * scale:
        raise NondegeneracyError(
            f"eigen residuals {res_r:.2e}, {res_l:.2e} exceed tolerance"
        )
    Lam = float(np.sum(phi * psi * mu))
    return SpectralData(float(lam0), phi, psi, Lam, gap, w[order])


def principal_triple_from_operator(op: KernelOperator) -> SpectralData:
    """Eigentriple extracted from a single kernel operator at time t > 0.

    Used for closed-form operators that carry no generator (the oscillator
    oracle): the transition form has dominant eigenvalue e^{-lambda0 t}, and
    the gap comes from the modulus of the subdominant eigenvalue.
    """
    if op.t <= 0:
        raise ValueError("need a positive-time operator")
    mu = op.space.mu
    T = op.transition()
    w, vl, vr = eig(T, left=True, right=True)
    order = np.argsort(-np.abs(w))
    rho0 = w[order[0]].real
    if rho0 <= 0:
        raise NondegeneracyError("dominant transition eigenvalue is not positive")
    if abs(abs(w[order[1]]) - abs(w[order[0]])) < _DEGEN_TOL * abs(rho0):
        raise NondegeneracyError("dominant eigenvalue of U_t is not simple")
    lam0 = -np.log(rho0) / op.t
    rho1 = abs(w[order[1]])
    gap = (-np.log(rho1) / op.t - lam0) if rho1 > 0 else np.inf
    phi = _positive_direction(vr[:, order[0]], "right eigenfunction")
    phi = phi / np.sqrt(np.sum(phi**2 * mu))
    psi = _positive_direction(vl[:, order[0]], "left eigenfunction") / mu
    psi = psi / np.sqrt(np.sum(psi**2 * mu))
    Lam = float(np.sum(phi * psi * mu))
    return SpectralData(float(lam0), phi, psi, Lam, float(gap), w[order])


def eigen_residuals(spec: SpectralData, op: KernelOperator) -> tuple[float, float]:
    """Sup-norm defects of the two eigen-identities under a concrete operator:

    (||U_t phi0 - e^{-lambda0 t} phi0||_inf, ||U*_t psi0 - e^{-lambda0 t} psi0||_inf).
    """
    decay = np.exp(-spec.lambda0 * op.t)
    r1 = np.max(np.abs(op.apply(spec.phi0) - decay * spec.phi0))
    r2 = np.max(np.abs(op.apply_adjoint(spec.psi0) - decay * spec.psi0))
    return float(r1), float(r2)


def spectral_to_text(spec: SpectralData) -> str:
    """Text record: lambda0, gap, Lambda header then per-point phi0, psi0."""
    lines = [
        f"lambda0 {format(spec.lambda0, '.17g')}",
        f"gap {format(spec.gap, '.17g')}",
        f"Lambda {format(spec.Lambda, '.17g')}",
        "phi0 psi0",
    ]
    for a, b in zip(spec.phi0, spec.psi0):
        lines.append(f"{format(a, '.17g')} {format(b, '.17g')}")
    return "\n".join(lines) + "\n"
