"""Turn trained network parameters into pruned, canonical, readable
symbolic expressions, and compare recovered laws against references."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import symnet
from .ratfunc import project_denominator

VARIABLE_NAMES = ("t", "u", "u_x")

_DEFAULT_NAMES = {1: ("u",), 2: ("u", "u_x"), 3: ("t", "u", "u_x")}


# ---------------------------------------------------------------------------
# expression nodes

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if self.name not in VARIABLE_NAMES:
            raise ValueError(f"unknown variable {self.name!r}; allowed: {VARIABLE_NAMES}")


@dataclass(frozen=True)
class Sum:
    terms: tuple


@dataclass(frozen=True)
class Product:
    factors: tuple


@dataclass(frozen=True)
class Power:
    base: object
    exponent: int

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("powers must have nonnegative integer exponents")


@dataclass(frozen=True)
class Quotient:
    numerator: object
    denominator: object


@dataclass(frozen=True)
class Sine:
    arg: object


@dataclass(frozen=True)
class Exponential:
    arg: object


def evaluate(expr, env: dict):
    """Evaluate an expression over numpy-broadcastable variable values.

    Exponential arguments are clamped exactly like the network
    activation, so extracted expressions reproduce network outputs.
    """
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        return env[expr.name]
    if isinstance(expr, Sum):
        if not expr.terms:
            return 0.0
        total = evaluate(expr.terms[0], env)
        for term in expr.terms[1:]:
            total = total + evaluate(term, env)
        return total
    if isinstance(expr, Product):
        out = evaluate(expr.factors[0], env)
        for factor in expr.factors[1:]:
            out = out * evaluate(factor, env)
        return out
    if isinstance(expr, Power):
        return evaluate(expr.base, env) ** expr.exponent
    if isinstance(expr, Quotient):
        return evaluate(expr.numerator, env) / evaluate(expr.denominator, env)
    if isinstance(expr, Sine):
        return np.sin(evaluate(expr.arg, env))
    if isinstance(expr, Exponential):
        return np.exp(np.clip(evaluate(expr.arg, env), -symnet.EXP_CLAMP, symnet.EXP_CLAMP))
    raise TypeError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# construction from coefficients

def _make_term(coeff: float, powers):
    """coeff * prod(base^k); powers is a list of (base_expr, exponent)."""
    factors = []
    for base, k in powers:
        if k == 0:
            continue
        factors.append(base if k == 1 else Power(base, k))
    if not factors:
        return Const(coeff)
    if coeff == 1.0:
        return factors[0] if len(factors) == 1 else Product(tuple(factors))
    return Product((Const(coeff),) + tuple(factors))


def _polynomial(basis, coeffs, atoms):
    """Canonical sum over surviving basis monomials (basis order is
    already total degree ascending, lexicographic within degree)."""
    terms = []
    for j, e in enumerate(basis.exponents):
        c = float(coeffs[j])
        if c == 0.0:
            continue
        terms.append(_make_term(c, list(zip(atoms, e))))
    if not terms:
        return Const(0.0)
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def pruned_theta(spec: symnet.NetworkSpec, theta: np.ndarray, prune_threshold: float) -> np.ndarray:
    """theta with small numerator coefficients zeroed and denominators
    re-projected after dropping small non-constant coefficients.

    The result is a fixed point of the denominator projection, so
    forward(spec, pruned) evaluates exactly the extracted expression.
    """
    if prune_threshold < 0:
        raise ValueError("prune_threshold must be nonnegative")
    out = np.asarray(theta, dtype=float).copy()
    for comp in symnet.layout(spec):
        a = out[comp.num_slice]
        a[np.abs(a) < prune_threshold] = 0.0
        b = project_denominator(out[comp.den_slice], comp.den_basis, spec.floor_epsilon).coeffs.copy()
        small = np.abs(b) < prune_threshold
        small[0] = False
        b[small] = 0.0
        out[comp.den_slice] = project_denominator(b, comp.den_basis, spec.floor_epsilon).coeffs
    return out


def _rational_expression(comp, a, b, atoms):
    """Expression for one rational component from pruned coefficients."""
    if np.all(b[1:] == 0.0):
        # constant denominator folds into the numerator coefficients
        return _polynomial(comp.num_basis, a / b[0], atoms)
    num = _polynomial(comp.num_basis, a, atoms)
    den = _polynomial(comp.den_basis, b, atoms)
    return Quotient(num, den)


def to_expression(
    spec: symnet.NetworkSpec,
    theta: np.ndarray,
    prune_threshold: float = 1e-3,
    var_names=None,
):
    """Convert (spec, theta) to a pruned canonical expression.

    Hidden units appear in the output only where a surviving output
    coefficient references their channel, so fully pruned units are
    elided.  Denominators that prune to a constant are folded into the
    coefficients.
    """
    if var_names is None:
        try:
            var_names = _DEFAULT_NAMES[spec.input_dim]
        except KeyError:
            raise ValueError(
                f"no default variable names for input_dim={spec.input_dim}; "
                "pass var_names"
            )
    if len(var_names) != spec.input_dim:
        raise ValueError("var_names length does not match the network input")
    theta_p = pruned_theta(spec, theta, prune_threshold)
    params = symnet.decode_params(theta_p, spec)
    comps = symnet.layout(spec)
    input_atoms = tuple(Var(n) for n in var_names)

    atoms = input_atoms
    idx = 0
    for layer in spec.hidden_layers:
        outs = []
        for _ in layer:
            comp = comps[idx]
            a, b = params[idx]
            inner = _rational_expression(comp, a, np.asarray(b), atoms)
            outs.append(Sine(inner) if comp.activation == "sine" else Exponential(inner))
            idx += 1
        atoms = tuple(outs)
    out_atoms = atoms + input_atoms
    a_out, b_out = params[-1]
    return _rational_expression(comps[-1], a_out, np.asarray(b_out), out_atoms)


# ---------------------------------------------------------------------------
# printing

def _format_number(value: float, decimals) -> str:
    if decimals is None:
        return repr(value)
    text = f"{value:.{decimals}f}"
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def _split_sign(term):
    """Return (sign, term-without-sign) for sum printing."""
    if isinstance(term, Const) and term.value < 0:
        return -1, Const(-term.value)
    if isinstance(term, Product) and isinstance(term.factors[0], Const):
        c = term.factors[0].value
        if c < 0:
            rest = (Const(-c),) + term.factors[1:]
            if rest[0].value == 1.0 and len(rest) > 1:
                rest = rest[1:]
            return -1, rest[0] if len(rest) == 1 else Product(rest)
    return 1, term


def to_text(expr, decimals=3) -> str:
    """Render an expression as UTF-8 text.

    decimals gives fixed-point coefficient formatting (trailing zeros
    trimmed); None prints exact round-trip representations.
    """
    if isinstance(expr, Const):
        return _format_number(expr.value, decimals)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Sum):
        if not expr.terms:
            return "0"
        pieces = []
        for i, term in enumerate(expr.terms):
            sign, bare = _split_sign(term)
            text = to_text(bare, decimals)
            if i == 0:
                pieces.append(f"-{text}" if sign < 0 else text)
            else:
                pieces.append(f"{'-' if sign < 0 else '+'} {text}")
        return " ".join(pieces)
    if isinstance(expr, Product):
        return "·".join(_maybe_paren(f, decimals) for f in expr.factors)
    if isinstance(expr, Power):
        return f"{_maybe_paren(expr.base, decimals)}^{expr.exponent}"
    if isinstance(expr, Quotient):
        return (
            f"({to_text(expr.numerator, decimals)}) / "
            f"({to_text(expr.denominator, decimals)})"
        )
    if isinstance(expr, Sine):
        return f"sin({to_text(expr.arg, decimals)})"
    if isinstance(expr, Exponential):
        return f"exp({to_text(expr.arg, decimals)})"
    raise TypeError(f"not an expression node: {expr!r}")


def _maybe_paren(expr, decimals) -> str:
    text = to_text(expr, decimals)
    if isinstance(expr, (Sum, Quotient)) or (isinstance(expr, Const) and expr.value < 0):
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# structured tree file

TREE_FORMAT = "lawforge-expression"
TREE_VERSION = 1


def _to_dict(expr) -> dict:
    if isinstance(expr, Const):
        return {"type": "const", "value": expr.value}
    if isinstance(expr, Var):
        return {"type": "var", "name": expr.name}
    if isinstance(expr, Sum):
        return {"type": "sum", "terms": [_to_dict(t) for t in expr.terms]}
    if isinstance(expr, Product):
        return {"type": "product", "factors": [_to_dict(f) for f in expr.factors]}
    if isinstance(expr, Power):
        return {"type": "power", "base": _to_dict(expr.base), "exponent": expr.exponent}
    if isinstance(expr, Quotient):
        return {
            "type": "quotient",
            "numerator": _to_dict(expr.numerator),
            "denominator": _to_dict(expr.denominator),
        }
    if isinstance(expr, Sine):
        return {"type": "sine", "arg": _to_dict(expr.arg)}
    if isinstance(expr, Exponential):
        return {"type": "exponential", "arg": _to_dict(expr.arg)}
    raise TypeError(f"not an expression node: {expr!r}")


def _from_dict(d: dict):
    kind = d["type"]
    if kind == "const":
        return Const(float(d["value"]))
    if kind == "var":
        return Var(d["name"])
    if kind == "sum":
        return Sum(tuple(_from_dict(t) for t in d["terms"]))
    if kind == "product":
        return Product(tuple(_from_dict(f) for f in d["factors"]))
    if kind == "power":
        return Power(_from_dict(d["base"]), int(d["exponent"]))
    if kind == "quotient":
        return Quotient(_from_dict(d["numerator"]), _from_dict(d["denominator"]))
    if kind == "sine":
        return Sine(_from_dict(d["arg"]))
    if kind == "exponential":
        return Exponential(_from_dict(d["arg"]))
    raise ValueError(f"unknown expression node type {kind!r}")


def write_tree(expr, path) -> None:
    payload = {"format": TREE_FORMAT, "version": TREE_VERSION, "root": _to_dict(expr)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_tree(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != TREE_FORMAT:
        raise ValueError(f"{path}: not a {TREE_FORMAT} file")
    if payload.get("version") != TREE_VERSION:
        raise ValueError(f"{path}: unsupported expression version")
    return _from_dict(payload["root"])


# ---------------------------------------------------------------------------
# law comparison

@dataclass(frozen=True)
class LinearLawFit:
    """Least-squares projection of an expression onto span{1, u, u_x}."""

    c0: float
    c_u: float
    c_ux: float
    residual_rms: float

    def __post_init__(self):
        if self.residual_rms < 0:
            raise ValueError("residual must be nonnegative")


def box_samples(box, n_samples: int) -> np.ndarray:
    """Deterministic quasi-random (Halton) samples in a rectangle."""
    (u_lo, u_hi), (w_lo, w_hi) = box
    if not (u_hi > u_lo and w_hi > w_lo):
        raise ValueError("box must be nondegenerate")
    sampler = qmc.Halton(d=2, scramble=False)
    pts = sampler.random(n_samples)
    return qmc.scale(pts, [u_lo, w_lo], [u_hi, w_hi])


def fit_linear_law(expr, box, n_samples: int = 4096) -> LinearLawFit:
    """Project an expression in (u, u_x) onto span{1, u, u_x} over a box."""
    if n_samples < 3:
        raise ValueError("need at least 3 samples to fit three coefficients")
    pts = box_samples(box, n_samples)
    values = np.broadcast_to(
        np.asarray(evaluate(expr, {"u": pts[:, 0], "u_x": pts[:, 1]}), dtype=float),
        (n_samples,),
    )
    design = np.column_stack([np.ones(n_samples), pts[:, 0], pts[:, 1]])
    coef, _, _, _ = np.linalg.lstsq(design, values, rcond=None)
    residual = values - design @ coef
    rms = float(np.sqrt(np.mean(residual**2)))
    return LinearLawFit(float(coef[0]), float(coef[1]), float(coef[2]), rms)


@dataclass(frozen=True)
class BoxError:
    rms: float
    max_abs: float


def model_error_on_box(
    spec: symnet.NetworkSpec,
    theta: np.ndarray,
    reference,
    box,
    n_grid: int = 64,
    var_names=("u", "u_x"),
) -> BoxError:
    """RMS (and max) deviation between the network and a reference
    expression over an n_grid x n_grid lattice on the box."""
    (u_lo, u_hi), (w_lo, w_hi) = box
    if not (u_hi > u_lo and w_hi > w_lo):
        raise ValueError("box must be nondegenerate")
    uu, ww = np.meshgrid(
        np.linspace(u_lo, u_hi, n_grid), np.linspace(w_lo, w_hi, n_grid), indexing="ij"
    )
    pts = np.column_stack([uu.ravel(), ww.ravel()])
    net = symnet.batch_forward(spec, theta, pts)
    ref = np.broadcast_to(
        np.asarray(
            evaluate(reference, dict(zip(var_names, (pts[:, 0], pts[:, 1])))), dtype=float
        ),
        net.shape,
    )
    diff = net - ref
    return BoxError(float(np.sqrt(np.mean(diff**2))), float(np.max(np.abs(diff))))
