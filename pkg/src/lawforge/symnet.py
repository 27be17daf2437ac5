"""Symbolic network: composed rational layers with fixed non-rational
activations and a rational output layer that also sees the raw inputs
through a skip connection.

The trainable parameters are the numerator coefficients (free reals) and
the raw denominator coefficients of every rational component.  Raw
denominators are pushed through the positivity projection of
:mod:`lawforge.ratfunc` at every evaluation, so the network is valid for
any flat parameter vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .ratfunc import (
    DEFAULT_FLOOR_EPSILON,
    MonomialBasis,
    project_denominator,
    projection_jacobian,
)

# Inputs of the exponential activation are clamped to this band before
# exponentiation (zero gradient outside).  Wide enough not to bind for
# the data ranges of the built-in experiments, but keeps basin-hopping
# iterates finite.
EXP_CLAMP = 40.0

_ACTIVATIONS = ("sine", "exponential")


def _apply_activation(kind: str, r: np.ndarray):
    """Return (value, derivative) of the activation applied elementwise."""
    if kind == "sine":
        return np.sin(r), np.cos(r)
    if kind == "exponential":
        v = np.clip(r, -EXP_CLAMP, EXP_CLAMP)
        h = np.exp(v)
        return h, h * ((r > -EXP_CLAMP) & (r < EXP_CLAMP))
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class ActivationKind:
    """Componentwise base activation; only non-rational functions allowed."""

    tag: str

    def __post_init__(self):
        if self.tag not in _ACTIVATIONS:
            raise ValueError(
                f"activation {self.tag!r} is not a base function; "
                f"supported: {_ACTIVATIONS}"
            )


@dataclass(frozen=True)
class HiddenUnit:
    """One rational-into-activation channel of a hidden layer."""

    activation: str
    num_degree: int = 3
    den_degree: int = 2

    def __post_init__(self):
        ActivationKind(self.activation)  # validates


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: widths, degrees and activations.

    hidden_layers is a tuple of layers, each a tuple of HiddenUnit; the
    output rational consumes the last hidden layer plus the skip-connected
    network inputs and maps to a scalar.
    """

    input_dim: int
    hidden_layers: tuple
    output_num_degree: int = 3
    output_den_degree: int = 2
    floor_epsilon: float = DEFAULT_FLOOR_EPSILON

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if len(self.hidden_layers) < 1 or any(len(l) < 1 for l in self.hidden_layers):
            raise ValueError("network needs at least one nonempty hidden layer")

    @property
    def depth(self) -> int:
        return len(self.hidden_layers)

    @property
    def layer_widths(self) -> tuple:
        """Widths (n_0, ..., n_L) of the activation outputs."""
        return (self.input_dim,) + tuple(len(l) for l in self.hidden_layers)

    @property
    def output_input_dim(self) -> int:
        """Input width of the output rational: last width plus skip."""
        return self.layer_widths[-1] + self.input_dim


@dataclass(frozen=True)
class _Component:
    """Layout entry for one rational component of the network."""

    name: str
    activation: str | None  # None for the output rational
    num_basis: MonomialBasis
    den_basis: MonomialBasis
    num_slice: slice
    den_slice: slice


def layout(spec: NetworkSpec) -> tuple:
    """Flat parameter layout, one entry per rational component.

    Order: hidden layers in order, units within a layer in order, then
    the output rational; within a component the numerator coefficients
    precede the raw denominator coefficients.
    """
    comps = []
    offset = 0
    widths = spec.layer_widths
    for i, layer in enumerate(spec.hidden_layers):
        in_dim = widths[i]
        for k, unit in enumerate(layer):
            nb = MonomialBasis(in_dim, unit.num_degree)
            db = MonomialBasis(in_dim, unit.den_degree)
            ns = slice(offset, offset + len(nb))
            ds = slice(ns.stop, ns.stop + len(db))
            offset = ds.stop
            comps.append(
                _Component(f"layer{i + 1}/unit{k}", unit.activation, nb, db, ns, ds)
            )
    nb = MonomialBasis(spec.output_input_dim, spec.output_num_degree)
    db = MonomialBasis(spec.output_input_dim, spec.output_den_degree)
    ns = slice(offset, offset + len(nb))
    ds = slice(ns.stop, ns.stop + len(db))
    comps.append(_Component("output", None, nb, db, ns, ds))
    return tuple(comps)


def n_params(spec: NetworkSpec) -> int:
    return layout(spec)[-1].den_slice.stop


def numerator_mask(spec: NetworkSpec) -> np.ndarray:
    """Boolean mask selecting all numerator coefficients of theta."""
    mask = np.zeros(n_params(spec), dtype=bool)
    for comp in layout(spec):
        mask[comp.num_slice] = True
    return mask


def encode_params(parts, spec: NetworkSpec) -> np.ndarray:
    """Flatten [(numerator, raw denominator), ...] in layout order."""
    comps = layout(spec)
    if len(parts) != len(comps):
        raise ValueError(f"expected {len(comps)} component pairs, got {len(parts)}")
    theta = np.empty(n_params(spec))
    for comp, (a, b) in zip(comps, parts):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != (len(comp.num_basis),) or b.shape != (len(comp.den_basis),):
            raise ValueError(f"component {comp.name}: coefficient shapes do not match")
        theta[comp.num_slice] = a
        theta[comp.den_slice] = b
    return theta


def decode_params(theta: np.ndarray, spec: NetworkSpec):
    """Inverse of encode_params; returns [(numerator, raw denominator), ...]."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (n_params(spec),):
        raise ValueError(
            f"theta has shape {theta.shape}, spec expects ({n_params(spec)},)"
        )
    return [(theta[c.num_slice].copy(), theta[c.den_slice].copy()) for c in layout(spec)]


def default_parfam_spec(input_dim: int) -> NetworkSpec:
    """Single hidden layer with one sine and one exponential unit,
    numerator degree 3 and denominator degree 2 throughout."""
    return NetworkSpec(
        input_dim=input_dim,
        hidden_layers=(
            (HiddenUnit("sine", 3, 2), HiddenUnit("exponential", 3, 2)),
        ),
        output_num_degree=3,
        output_den_degree=2,
    )


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> np.ndarray:
    """Neutral start: numerators i.i.d. uniform on [-1, 1], raw
    denominators at the constant-one polynomial."""
    theta = np.zeros(n_params(spec))
    for comp in layout(spec):
        theta[comp.num_slice] = rng.uniform(-1.0, 1.0, len(comp.num_basis))
        den = np.zeros(len(comp.den_basis))
        den[0] = 1.0
        theta[comp.den_slice] = den
    return theta


class _Evaluation:
    """One fused forward/backward pass over a batch of inputs."""

    __slots__ = ("values", "grad_theta", "grad_input")

    def __init__(self, values, grad_theta, grad_input):
        self.values = values
        self.grad_theta = grad_theta
        self.grad_input = grad_input


def _rowwise_matvec(phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-by-row dot products with a batch-size-independent summation
    order, so batched evaluation is bitwise identical to a scalar loop."""
    return (phi * v).sum(axis=1)


def _component_designs(comp, X):
    """Design matrices of one component; the denominator design is a
    prefix view of the numerator design when its degree is not larger
    (graded-lexicographic bases nest by degree)."""
    phi_n = comp.num_basis.design_matrix(X)
    if comp.den_basis.max_degree <= comp.num_basis.max_degree:
        phi_d = phi_n[:, : len(comp.den_basis)]
    else:
        phi_d = comp.den_basis.design_matrix(X)
    return phi_n, phi_d


def _rational_batch(comp, X, a, b, designs=None):
    """Evaluate one rational component on a batch; returns a tape dict."""
    phi_n, phi_d = designs if designs is not None else _component_designs(comp, X)
    p = _rowwise_matvec(phi_n, a)
    q = _rowwise_matvec(phi_d, b)
    return {"phi_n": phi_n, "phi_d": phi_d, "p": p, "q": q, "r": p / q}


def _rational_input_grad(comp, tape, a, b):
    """(N, in_dim) gradient of p/q w.r.t. the component inputs."""
    q = tape["q"]
    r = tape["r"]
    Gn = comp.num_basis.derivative_stack
    Gd = comp.den_basis.derivative_stack
    dp = tape["phi_n"] @ (Gn @ a).T
    dq = tape["phi_d"] @ (Gd @ b).T
    return (dp - r[:, None] * dq) / q[:, None]


def hidden_designs(spec: NetworkSpec, X: np.ndarray) -> list:
    """Precompute the hidden-layer design matrices for a fixed batch.

    Only valid for single-hidden-layer networks, where every hidden
    component sees the raw inputs; used to amortize repeated theta
    evaluations at fixed X."""
    if spec.depth != 1:
        raise ValueError("design caching is only supported for depth-1 networks")
    comps = layout(spec)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return [_component_designs(comp, X) for comp in comps[:-1]]


def evaluate_batch(
    spec: NetworkSpec,
    theta: np.ndarray,
    X: np.ndarray,
    need_grad_theta: bool = False,
    need_grad_input: bool = False,
) -> _Evaluation:
    """Forward pass and, on request, analytic gradients with respect to
    the flat parameter vector and/or the network inputs.

    Raw denominators pass through the positivity projection; clamped
    coordinates receive zero subgradient via the projection Jacobian.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != spec.input_dim:
        raise ValueError(
            f"input dimension {X.shape[1]} does not match spec ({spec.input_dim})"
        )
    comps = layout(spec)
    params = decode_params(theta, spec)
    projected = []
    for comp, (a, b_raw) in zip(comps, params):
        b = project_denominator(b_raw, comp.den_basis, spec.floor_epsilon).coeffs
        J = (
            projection_jacobian(b_raw, comp.den_basis, spec.floor_epsilon)
            if need_grad_theta
            else None
        )
        projected.append((a, b, J))

    # forward through hidden layers
    cur = X
    tapes = []
    idx = 0
    for layer in spec.hidden_layers:
        outs = []
        layer_tapes = []
        for _ in layer:
            comp = comps[idx]
            a, b, _ = projected[idx]
            tape = _rational_batch(comp, cur, a, b)
            h, dh = _apply_activation(comp.activation, tape["r"])
            tape["X"] = cur
            tape["dh"] = dh
            outs.append(h)
            layer_tapes.append(tape)
            idx += 1
        tapes.append(layer_tapes)
        cur = np.stack(outs, axis=1)

    z = np.concatenate([cur, X], axis=1)
    out_comp = comps[-1]
    a_out, b_out, _ = projected[-1]
    out_tape = _rational_batch(out_comp, z, a_out, b_out)
    values = out_tape["r"]

    if not (need_grad_theta or need_grad_input):
        return _Evaluation(values, None, None)

    grad_theta = np.zeros((X.shape[0], n_params(spec))) if need_grad_theta else None

    def accumulate_component(comp, tape, weight, proj):
        """Add weight * d(p/q)/d(theta_comp) into grad_theta."""
        a, b, J = proj
        q = tape["q"]
        r = tape["r"]
        grad_theta[:, comp.num_slice] = tape["phi_n"] * (weight / q)[:, None]
        db = tape["phi_d"] @ J
        grad_theta[:, comp.den_slice] = db * (-weight * r / q)[:, None]

    if need_grad_theta:
        accumulate_component(out_comp, out_tape, np.ones(X.shape[0]), projected[-1])

    dz = _rational_input_grad(out_comp, out_tape, a_out, b_out)
    width_last = spec.layer_widths[-1]
    g_h = dz[:, :width_last]
    g_x = dz[:, width_last:].copy()

    # reverse sweep through hidden layers
    comp_idx = len(comps) - 1
    for li in range(spec.depth - 1, -1, -1):
        layer = spec.hidden_layers[li]
        comp_idx -= len(layer)
        layer_tapes = tapes[li]
        g_prev = np.zeros_like(layer_tapes[0]["X"])
        for k in range(len(layer)):
            comp = comps[comp_idx + k]
            tape = layer_tapes[k]
            gr = g_h[:, k] * tape["dh"]
            if need_grad_theta:
                accumulate_component(comp, tape, gr, projected[comp_idx + k])
            a, b, _ = projected[comp_idx + k]
            g_prev += gr[:, None] * _rational_input_grad(comp, tape, a, b)
        g_h = g_prev
    g_x += g_h  # g_h now holds the gradient w.r.t. the layer-0 inputs

    return _Evaluation(
        values, grad_theta, g_x if need_grad_input else None
    )


def forward(spec: NetworkSpec, theta: np.ndarray, x) -> float:
    """Scalar network output at a single input point."""
    return float(evaluate_batch(spec, theta, np.asarray(x, float).reshape(1, -1)).values[0])


def batch_forward(spec: NetworkSpec, theta: np.ndarray, X) -> np.ndarray:
    """Elementwise forward over a batch; identical to a scalar loop."""
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return np.zeros(0)
    return evaluate_batch(spec, theta, X).values


def grad_params(spec: NetworkSpec, theta: np.ndarray, x) -> np.ndarray:
    """Gradient of forward w.r.t. every flat parameter, at one point."""
    ev = evaluate_batch(
        spec, theta, np.asarray(x, float).reshape(1, -1), need_grad_theta=True
    )
    return ev.grad_theta[0]


def grad_input(spec: NetworkSpec, theta: np.ndarray, x) -> np.ndarray:
    """Gradient of forward w.r.t. the input coordinates, at one point."""
    ev = evaluate_batch(
        spec, theta, np.asarray(x, float).reshape(1, -1), need_grad_input=True
    )
    return ev.grad_input[0]


# ---------------------------------------------------------------------------
# serialization

CHECKPOINT_FORMAT = "lawforge-checkpoint"
CHECKPOINT_VERSION = 1


def spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_dim": spec.input_dim,
        "hidden_layers": [
            [
                {
                    "activation": u.activation,
                    "num_degree": u.num_degree,
                    "den_degree": u.den_degree,
                }
                for u in layer
            ]
            for layer in spec.hidden_layers
        ],
        "output_num_degree": spec.output_num_degree,
        "output_den_degree": spec.output_den_degree,
        "floor_epsilon": spec.floor_epsilon,
    }


def spec_from_dict(d: dict) -> NetworkSpec:
    return NetworkSpec(
        input_dim=d["input_dim"],
        hidden_layers=tuple(
            tuple(
                HiddenUnit(u["activation"], u["num_degree"], u["den_degree"])
                for u in layer
            )
            for layer in d["hidden_layers"]
        ),
        output_num_degree=d["output_num_degree"],
        output_den_degree=d["output_den_degree"],
        floor_epsilon=d["floor_epsilon"],
    )


def save_checkpoint(path, spec: NetworkSpec, theta: np.ndarray) -> None:
    """Write (spec, theta) as versioned JSON text.

    Coefficients are emitted with shortest round-trip decimal repr, so
    loading restores them bit-exactly.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "network": spec_to_dict(spec),
        "theta": [float(v) for v in np.asarray(theta, dtype=float)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version")
    spec = spec_from_dict(payload["network"])
    theta = np.array(payload["theta"], dtype=float)
    if theta.shape != (n_params(spec),):
        raise ValueError(f"{path}: theta length does not match the stored spec")
    return spec, theta
