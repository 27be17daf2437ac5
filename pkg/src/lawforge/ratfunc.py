"""Multivariate polynomials on graded-lexicographic monomial bases, and
rational functions whose denominators are strictly positive on all of R^n.

Denominators are restricted to the practical positivity cone: only
monomials with all-even exponents, nonnegative coefficients, and a
positive constant term.  Polynomials in this cone are positive
everywhere, so the quotient never sees a pole.  On top of the cone we
normalize the coefficient vector to the Euclidean unit sphere, which
removes the scaling redundancy of rational representations and keeps
the parameter set closed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

DEFAULT_FLOOR_EPSILON = 1e-4

# Refuse bases whose coefficient vectors would not fit in memory anyway.
MAX_BASIS_SIZE = 2_000_000

# Norms within this band of 1 are treated as already normalized, which
# makes project_denominator exactly idempotent in floating point.
_UNIT_NORM_BAND = 64 * np.finfo(float).eps


def monomial_count(n_vars: int, degree: int) -> int:
    """Number of monomials of total degree <= degree in n_vars variables."""
    if n_vars < 1:
        raise ValueError(f"n_vars must be positive, got {n_vars}")
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    count = math.comb(n_vars + degree, degree)
    if count > MAX_BASIS_SIZE:
        raise ValueError(
            f"basis with {count} monomials (n_vars={n_vars}, degree={degree}) "
            f"exceeds the supported maximum of {MAX_BASIS_SIZE}"
        )
    return count


@lru_cache(maxsize=None)
def _graded_lex_exponents(n_vars: int, max_degree: int) -> tuple:
    """All exponent tuples with total degree <= max_degree.

    Ordered by total degree ascending, then lexicographically ascending
    within each degree, so the constant monomial always comes first and
    the layout of coefficient vectors is deterministic.
    """
    exps = []
    for total in range(max_degree + 1):
        level = [
            e
            for e in itertools.product(range(total + 1), repeat=n_vars)
            if sum(e) == total
        ]
        exps.extend(sorted(level))
    return tuple(exps)


@dataclass(frozen=True)
class MonomialBasis:
    """Dense monomial basis over n_vars variables up to a total degree."""

    n_vars: int
    max_degree: int

    def __post_init__(self):
        monomial_count(self.n_vars, self.max_degree)  # validates and caps

    def __len__(self):
        return monomial_count(self.n_vars, self.max_degree)

    @cached_property
    def exponents(self) -> tuple:
        return _graded_lex_exponents(self.n_vars, self.max_degree)

    @cached_property
    def exponent_matrix(self) -> np.ndarray:
        """(n_basis, n_vars) integer matrix of exponents."""
        return np.array(self.exponents, dtype=np.int64).reshape(
            len(self), self.n_vars
        )

    @cached_property
    def even_mask(self) -> np.ndarray:
        """True where every exponent of the monomial is even."""
        return np.all(self.exponent_matrix % 2 == 0, axis=1)

    @cached_property
    def derivative_matrices(self) -> tuple:
        """Per-variable matrices G_l with grad_l(phi @ a) = phi @ (G_l @ a).

        G_l maps a coefficient vector to the coefficient vector of its
        partial derivative in variable l, expressed in the same basis.
        """
        nb = len(self)
        index = {e: i for i, e in enumerate(self.exponents)}
        mats = []
        for l in range(self.n_vars):
            G = np.zeros((nb, nb))
            for j, e in enumerate(self.exponents):
                k = e[l]
                if k > 0:
                    down = list(e)
                    down[l] = k - 1
                    G[index[tuple(down)], j] = k
            mats.append(G)
        return tuple(mats)

    @cached_property
    def derivative_stack(self) -> np.ndarray:
        """derivative_matrices stacked into one (n_vars, nb, nb) array."""
        return np.stack(self.derivative_matrices)

    def design_matrix(self, X: np.ndarray) -> np.ndarray:
        """Monomial values for a batch of points.

        X has shape (N, n_vars); the result has shape (N, n_basis) with
        columns in basis order.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_vars:
            raise ValueError(
                f"points have dimension {X.shape[1]}, basis expects {self.n_vars}"
            )
        E = self.exponent_matrix
        out = np.ones((X.shape[0], len(self)))
        for l in range(self.n_vars):
            # power table up to the maximum exponent of variable l
            dmax = int(E[:, l].max())
            if dmax == 0:
                continue
            powers = np.empty((X.shape[0], dmax + 1))
            powers[:, 0] = 1.0
            for d in range(1, dmax + 1):
                np.multiply(powers[:, d - 1], X[:, l], out=powers[:, d])
            np.multiply(out, powers[:, E[:, l]], out=out)
        return out

    def row(self, x) -> np.ndarray:
        """Monomial values at a single point, shape (n_basis,)."""
        return self.design_matrix(np.asarray(x, dtype=float).reshape(1, -1))[0]


@dataclass(eq=False)
class MultiPolynomial:
    """Coefficient vector over a MonomialBasis."""

    basis: MonomialBasis
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (len(self.basis),):
            raise ValueError(
                f"coefficient vector of length {self.coeffs.shape} does not "
                f"match basis of length {len(self.basis)}"
            )


def poly_eval(p: MultiPolynomial, x) -> float:
    """Evaluate p at a point, summing in basis order."""
    return float(p.basis.row(x) @ p.coeffs)


def poly_grad(p: MultiPolynomial, x) -> np.ndarray:
    """Analytic gradient of p at a point via exponent shift-down."""
    phi = p.basis.row(x)
    return np.array([phi @ (G @ p.coeffs) for G in p.basis.derivative_matrices])


def _restrict_to_cone(raw: np.ndarray, basis: MonomialBasis, floor_epsilon: float):
    """Mask odd monomials, clamp negatives, floor the constant term."""
    v = np.asarray(raw, dtype=float)
    if v.shape != (len(basis),):
        raise ValueError(
            f"raw vector of shape {v.shape} does not match basis length {len(basis)}"
        )
    w = np.where(basis.even_mask, np.maximum(v, 0.0), 0.0)
    w[0] = max(v[0], floor_epsilon)
    return w


@dataclass(eq=False)
class DenominatorCoeffs:
    """Unit-norm coefficients of an everywhere-positive polynomial.

    Invariants: zero on every monomial with an odd exponent, nonnegative
    elsewhere, constant coefficient at least floor_epsilon, and unit
    Euclidean norm.  Construct through project_denominator.
    """

    basis: MonomialBasis
    coeffs: np.ndarray
    floor_epsilon: float = DEFAULT_FLOOR_EPSILON

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.floor_epsilon <= 0:
            raise ValueError("floor_epsilon must be positive")
        if self.coeffs.shape != (len(self.basis),):
            raise ValueError("coefficient vector does not match basis")
        b = self.coeffs
        if np.any(b[~self.basis.even_mask] != 0.0):
            raise ValueError("denominator has weight on odd-exponent monomials")
        if np.any(b < 0.0):
            raise ValueError("denominator has negative coefficients")
        if b[0] < self.floor_epsilon * (1 - 1e-12):
            raise ValueError("denominator constant term below the positivity floor")
        if abs(np.linalg.norm(b) - 1.0) > 1e-9:
            raise ValueError("denominator coefficients are not unit-norm")


def project_denominator(
    raw, basis: MonomialBasis, floor_epsilon: float = DEFAULT_FLOOR_EPSILON
) -> DenominatorCoeffs:
    """Project raw coefficients onto the valid denominator set.

    Odd-exponent monomials are zeroed, negative coefficients clamped to
    zero, the constant raised to at least floor_epsilon, and the result
    normalized to unit Euclidean norm (with the constant re-floored on
    the sphere in the degenerate case).  Exactly idempotent.
    """
    if floor_epsilon <= 0:
        raise ValueError("floor_epsilon must be positive")
    w = _restrict_to_cone(raw, basis, floor_epsilon)
    n = float(np.linalg.norm(w))
    if abs(n - 1.0) <= _UNIT_NORM_BAND:
        b = w
    else:
        b = w / n
    if b[0] < floor_epsilon:
        rest = b.copy()
        rest[0] = 0.0
        rest_norm = float(np.linalg.norm(rest))
        b = rest * (math.sqrt(1.0 - floor_epsilon**2) / rest_norm)
        b[0] = floor_epsilon
    return DenominatorCoeffs(basis, b, floor_epsilon)


def projection_jacobian(
    raw, basis: MonomialBasis, floor_epsilon: float = DEFAULT_FLOOR_EPSILON
) -> np.ndarray:
    """Jacobian of project_denominator at raw, with the zero-subgradient
    convention on clamped coordinates.

    Valid away from clamp boundaries and away from the rare constant
    re-flooring branch; both have measure zero under random perturbation.
    """
    v = np.asarray(raw, dtype=float)
    w = _restrict_to_cone(v, basis, floor_epsilon)
    n = float(np.linalg.norm(w))
    b = w / n
    active = basis.even_mask & (v > 0.0)
    active[0] = v[0] > floor_epsilon
    J = (np.eye(len(basis)) - np.outer(b, b)) / n
    J[:, ~active] = 0.0
    return J


@dataclass(eq=False)
class RationalFunction:
    """Quotient of a free-numerator polynomial and a valid denominator."""

    numerator: MultiPolynomial
    denominator: DenominatorCoeffs

    def __post_init__(self):
        if self.numerator.basis.n_vars != self.denominator.basis.n_vars:
            raise ValueError("numerator and denominator act on different spaces")

    @classmethod
    def from_raw(
        cls,
        num_coeffs,
        den_coeffs,
        num_basis: MonomialBasis,
        den_basis: MonomialBasis,
        floor_epsilon: float = DEFAULT_FLOOR_EPSILON,
    ) -> "RationalFunction":
        """Build the canonical representative from raw coefficient pairs.

        The raw denominator is restricted to the positivity cone and
        normalized; the numerator is divided by the same norm, so jointly
        scaling both raw vectors by any c > 0 leaves the function
        unchanged.
        """
        w = _restrict_to_cone(np.asarray(den_coeffs, dtype=float), den_basis, floor_epsilon)
        scale = float(np.linalg.norm(w))
        num = MultiPolynomial(num_basis, np.asarray(num_coeffs, dtype=float) / scale)
        den = project_denominator(den_coeffs, den_basis, floor_epsilon)
        return cls(num, den)


def denominator_eval(d: DenominatorCoeffs, x) -> float:
    return float(d.basis.row(x) @ d.coeffs)


def rational_eval(r: RationalFunction, x) -> float:
    """p(x)/q(x); q is positive by construction, so division is safe."""
    return poly_eval(r.numerator, x) / denominator_eval(r.denominator, x)


def rational_grad(r: RationalFunction, x) -> np.ndarray:
    """Quotient-rule gradient (q grad p - p grad q) / q^2."""
    phi_num = r.numerator.basis.row(x)
    phi_den = r.denominator.basis.row(x)
    p = float(phi_num @ r.numerator.coeffs)
    q = float(phi_den @ r.denominator.coeffs)
    grad_p = np.array(
        [phi_num @ (G @ r.numerator.coeffs) for G in r.numerator.basis.derivative_matrices]
    )
    grad_q = np.array(
        [phi_den @ (G @ r.denominator.coeffs) for G in r.denominator.basis.derivative_matrices]
    )
    return (q * grad_p - p * grad_q) / q**2
