"""All-at-once objective and the alternating optimizer.

The objective couples a scheduled PDE residual, a scheduled data misfit
against reduced measurements, an H2 state regularizer and an L1 penalty
on the network's numerator coefficients.  The parameter step runs
basin-hopping around BFGS local searches; the state step runs ADAM on
the grid values.  Everything is deterministic given the seeds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.optimize

from . import symnet
from .field import Grid, StateField, diff_matrix, diff2_matrix
from .measure import (
    MeasurementRecord,
    _basis_matrix,
    cell_index,
    synthesize,
    time_average_matrix,
)

# Smoothing of |c| inside BFGS; the reported regularizer stays exact L1.
L1_SMOOTHING = 1e-12


@dataclass(frozen=True)
class Schedules:
    """Scheduled weights lambda = m^3/M, mu = m/M and noise level
    delta = 0.1 M/m^3; mu * delta = 0.1/m^2 decays in m."""

    m: int
    M: int
    lambda_m: float
    mu_m: float
    delta_m: float


def schedules_for(m: int, M: int) -> Schedules:
    if not (1 <= m <= M):
        raise ValueError(f"need 1 <= m <= M, got m={m}, M={M}")
    if M % 2 != 0:
        raise ValueError(f"M must be even, got {M}")
    return Schedules(m, M, m**3 / M, m / M, 0.1 * M / m**3)


@dataclass
class ObjectiveConfig:
    """Everything the objective needs besides (u, theta).

    The misfit and residual exponents are fixed at two.
    """

    spec: symnet.NetworkSpec
    grid: Grid
    y_m: MeasurementRecord
    schedules: Schedules
    reg_u_weight: float = 1.0
    reg_theta_weight: float = 1.0


@dataclass(frozen=True)
class ObjectiveParts:
    total: float
    pde_residual: float
    data_misfit: float
    reg_u: float
    reg_theta: float


class ObjectiveEvaluator:
    """Precomputed discrete operators for one ObjectiveConfig."""

    def __init__(self, cfg: ObjectiveConfig):
        self.cfg = cfg
        g = cfg.grid
        self.W = g.quad_weights
        self.Dt = diff_matrix(g.n_t, g.dt)
        self.Dx = diff_matrix(g.n_x, g.dx)
        self.Dx2 = diff2_matrix(g.n_x, g.dx)
        rec = cfg.y_m
        self.A = time_average_matrix(g, rec.m)
        self.assignment = cell_index(g, rec.m, g.t_nodes)
        self.E = _basis_matrix(g, rec.n_modes)
        self.Bx = g.wx[:, None] * self.E
        self.y_field = synthesize(rec).values
        self.num_mask = symnet.numerator_mask(cfg.spec)

    # -- shared pieces -----------------------------------------------------

    def _network_inputs(self, values: np.ndarray):
        ux = values @ self.Dx.T
        X = np.stack([values.ravel(), ux.ravel()], axis=1)
        return X, ux

    def _misfit_field(self, values: np.ndarray) -> np.ndarray:
        reduced = self.A @ (values @ self.Bx)
        return reduced[self.assignment] @ self.E.T - self.y_field

    def _reg_u_fields(self, values: np.ndarray):
        vx = values @ self.Dx.T
        vxx = values @ self.Dx2.T
        vt = self.Dt @ values
        return vx, vxx, vt

    def _l1_exact(self, theta: np.ndarray) -> float:
        return float(np.sum(np.abs(theta[self.num_mask])))

    def _l1_smooth(self, theta: np.ndarray):
        c = theta[self.num_mask]
        s = np.sqrt(c**2 + L1_SMOOTHING)
        grad = np.zeros_like(theta)
        grad[self.num_mask] = c / s
        return float(np.sum(s)), grad

    # -- objective and gradients --------------------------------------------

    def parts(self, u: StateField, theta: np.ndarray) -> ObjectiveParts:
        cfg = self.cfg
        sch = cfg.schedules
        X, _ = self._network_inputs(u.values)
        f_vals = symnet.batch_forward(cfg.spec, theta, X).reshape(u.values.shape)
        residual = self.Dt @ u.values - f_vals
        pde = sch.lambda_m * float(np.sum(self.W * residual**2))
        if not math.isfinite(pde):
            raise FloatingPointError("objective part pde_residual is not finite")
        M = self._misfit_field(u.values)
        data = sch.mu_m * float(np.sum(self.W * M**2))
        if not math.isfinite(data):
            raise FloatingPointError("objective part data_misfit is not finite")
        vx, vxx, vt = self._reg_u_fields(u.values)
        reg_u = cfg.reg_u_weight * float(
            np.sum(self.W * (u.values**2 + vx**2 + vxx**2 + vt**2))
        )
        if not math.isfinite(reg_u):
            raise FloatingPointError("objective part reg_u is not finite")
        reg_theta = cfg.reg_theta_weight * self._l1_exact(theta)
        if not math.isfinite(reg_theta):
            raise FloatingPointError("objective part reg_theta is not finite")
        return ObjectiveParts(pde + data + reg_u + reg_theta, pde, data, reg_u, reg_theta)

    def grad_u(self, u: StateField, theta: np.ndarray) -> np.ndarray:
        """Analytic gradient of the total objective w.r.t. grid values."""
        cfg = self.cfg
        sch = cfg.schedules
        values = u.values
        X, _ = self._network_inputs(values)
        ev = symnet.evaluate_batch(cfg.spec, theta, X, need_grad_input=True)
        shape = values.shape
        f_vals = ev.values.reshape(shape)
        f_u = ev.grad_input[:, 0].reshape(shape)
        f_w = ev.grad_input[:, 1].reshape(shape)
        residual = self.Dt @ values - f_vals
        wr = self.W * residual
        grad = 2 * sch.lambda_m * (
            self.Dt.T @ wr - wr * f_u - (wr * f_w) @ self.Dx
        )
        M = self._misfit_field(values)
        wm = self.W * M
        grad += 2 * sch.mu_m * (
            self.A.T @ _scatter_rows(wm, self.assignment, self.cfg.y_m.m) @ self.E @ self.Bx.T
        )
        vx, vxx, vt = self._reg_u_fields(values)
        grad += 2 * cfg.reg_u_weight * (
            self.W * values
            + (self.W * vx) @ self.Dx
            + (self.W * vxx) @ self.Dx2
            + self.Dt.T @ (self.W * vt)
        )
        return grad

    def grad_theta(self, u: StateField, theta: np.ndarray) -> np.ndarray:
        """Analytic gradient w.r.t. theta (smooth-L1 surrogate for the
        regularizer, zero subgradient at projection clamps)."""
        return self.theta_fun_grad(u)(theta)[1]

    # -- closures for the optimizers ----------------------------------------

    def theta_fun_grad(self, u: StateField):
        """(fun, grad) of the objective as a function of theta at fixed u,
        with the L1 term smoothed for BFGS."""
        cfg = self.cfg
        sch = cfg.schedules
        X, _ = self._network_inputs(u.values)
        target = (self.Dt @ u.values).ravel()
        w_flat = self.W.ravel()
        M = self._misfit_field(u.values)
        data_const = sch.mu_m * float(np.sum(self.W * M**2))
        vx, vxx, vt = self._reg_u_fields(u.values)
        reg_u_const = cfg.reg_u_weight * float(
            np.sum(self.W * (u.values**2 + vx**2 + vxx**2 + vt**2))
        )

        def fun_grad(theta):
            ev = symnet.evaluate_batch(cfg.spec, theta, X, need_grad_theta=True)
            r = target - ev.values
            pde = sch.lambda_m * float(np.sum(w_flat * r**2))
            l1, l1_grad = self._l1_smooth(theta)
            fun = pde + data_const + reg_u_const + cfg.reg_theta_weight * l1
            grad = -2 * sch.lambda_m * ((w_flat * r) @ ev.grad_theta)
            grad += cfg.reg_theta_weight * l1_grad
            return fun, grad

        return fun_grad

    def u_fun_grad(self, theta: np.ndarray):
        """(fun, grad) of the objective as a function of the flattened
        grid values at fixed theta."""
        shape = (self.cfg.grid.n_t, self.cfg.grid.n_x)

        def fun_grad(u_flat):
            if not np.all(np.isfinite(u_flat)):
                raise FloatingPointError("state iterate became non-finite")
            u = StateField(self.cfg.grid, u_flat.reshape(shape))
            parts = self.parts(u, theta)
            grad = self.grad_u(u, theta)
            return parts.total, grad.ravel()

        return fun_grad


def _scatter_rows(wm: np.ndarray, assignment: np.ndarray, m: int) -> np.ndarray:
    """Adjoint of the cell-selection map: sum node rows into their cells."""
    out = np.zeros((m, wm.shape[1]))
    np.add.at(out, assignment, wm)
    return out


def objective(u: StateField, theta: np.ndarray, cfg: ObjectiveConfig) -> ObjectiveParts:
    """Total objective and its named parts."""
    return ObjectiveEvaluator(cfg).parts(u, theta)


def objective_grad_u(u: StateField, theta: np.ndarray, cfg: ObjectiveConfig) -> np.ndarray:
    return ObjectiveEvaluator(cfg).grad_u(u, theta)


def objective_grad_theta(u: StateField, theta: np.ndarray, cfg: ObjectiveConfig) -> np.ndarray:
    return ObjectiveEvaluator(cfg).grad_theta(u, theta)


# ---------------------------------------------------------------------------
# state step: ADAM

def adam_fit_state(
    u0: StateField,
    theta: np.ndarray,
    cfg: ObjectiveConfig,
    max_epochs: int = 300,
    lr: float = 0.0004,
    early_stop_patience: int = 20,
    early_stop_rtol: float = 1e-6,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> StateField:
    """Full-batch ADAM on the grid values; returns the best iterate seen.

    Stops early when the best objective has not improved relatively by
    early_stop_rtol for early_stop_patience consecutive epochs.
    """
    evaluator = ObjectiveEvaluator(cfg)
    fun_grad = evaluator.u_fun_grad(theta)
    x = u0.values.ravel().copy()
    f, g = fun_grad(x)
    best_f, best_x = f, x.copy()
    m1 = np.zeros_like(x)
    m2 = np.zeros_like(x)
    stall = 0
    for epoch in range(1, max_epochs + 1):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite state gradient at epoch {epoch}")
        m1 = beta1 * m1 + (1 - beta1) * g
        m2 = beta2 * m2 + (1 - beta2) * g**2
        mhat = m1 / (1 - beta1**epoch)
        vhat = m2 / (1 - beta2**epoch)
        x = x - lr * mhat / (np.sqrt(vhat) + eps)
        f, g = fun_grad(x)
        if f < best_f * (1 - early_stop_rtol) or (best_f <= 0 and f < best_f):
            stall = 0
        else:
            stall += 1
        if f < best_f:
            best_f, best_x = f, x.copy()
        if stall >= early_stop_patience:
            break
    return StateField(cfg.grid, best_x.reshape(u0.values.shape))


# ---------------------------------------------------------------------------
# parameter step: BFGS inside basin hopping

def minimize_bfgs(fun_grad, x0: np.ndarray, max_iters: int = 100, gtol: float = 1e-8):
    """BFGS local minimization of a smooth function.

    fun_grad maps x to (value, gradient).  Returns (x_best, f_best,
    diagnostics); the best evaluated iterate is returned even when the
    line search fails, with the failure flagged.
    """
    best = {"f": np.inf, "x": np.asarray(x0, dtype=float).copy()}

    def wrapped(x):
        f, g = fun_grad(x)
        if np.isfinite(f) and f < best["f"]:
            best["f"] = f
            best["x"] = x.copy()
        return f, g

    res = scipy.optimize.minimize(
        wrapped,
        np.asarray(x0, dtype=float),
        jac=True,
        method="BFGS",
        options={"maxiter": max_iters, "gtol": gtol},
    )
    diagnostics = {
        "converged": bool(res.success),
        "n_iter": int(res.nit),
        "line_search_failed": res.status == 2,
        "message": res.message,
    }
    return best["x"], float(best["f"]), diagnostics


def bfgs_minimize(
    theta0: np.ndarray,
    u: StateField,
    cfg: ObjectiveConfig,
    max_iters: int = 100,
) -> np.ndarray:
    """BFGS over theta at fixed state."""
    evaluator = ObjectiveEvaluator(cfg)
    theta, _, _ = minimize_bfgs(evaluator.theta_fun_grad(u), theta0, max_iters)
    return theta


@dataclass
class BasinHoppingResult:
    theta: np.ndarray
    fun: float
    n_accepted: int
    acceptance_log: list


def basin_hopping(
    theta0: np.ndarray,
    u: StateField,
    cfg: ObjectiveConfig,
    n_hops: int = 100,
    step_scale: float = 0.5,
    temperature: float = 1.0,
    seed: int = 0,
    bfgs_max_iters: int = 100,
) -> BasinHoppingResult:
    """Seeded Gaussian perturbations around BFGS local minima with
    Metropolis acceptance; returns the best local minimum found.

    n_hops = 0 reduces to a single BFGS run from theta0.  Bitwise
    deterministic for a fixed seed.
    """
    evaluator = ObjectiveEvaluator(cfg)
    return basin_hop_loop(
        evaluator.theta_fun_grad(u), theta0, n_hops, step_scale, temperature,
        seed, bfgs_max_iters,
    )


def basin_hop_loop(
    fun_grad,
    theta0: np.ndarray,
    n_hops: int,
    step_scale: float,
    temperature: float,
    seed: int,
    bfgs_max_iters: int = 100,
) -> BasinHoppingResult:
    """Basin hopping over an arbitrary smooth objective."""
    rng = np.random.Generator(np.random.PCG64(seed))
    theta_cur, f_cur, _ = minimize_bfgs(fun_grad, theta0, bfgs_max_iters)
    theta_best, f_best = theta_cur, f_cur
    log = []
    n_accepted = 0
    for hop in range(n_hops):
        trial = theta_cur + step_scale * rng.standard_normal(theta_cur.shape)
        theta_loc, f_loc, _ = minimize_bfgs(fun_grad, trial, bfgs_max_iters)
        delta = f_loc - f_cur
        if delta <= 0:
            prob = 1.0
        else:
            prob = math.exp(-delta / temperature) if temperature > 0 else 0.0
        accepted = delta <= 0 or rng.random() < prob
        log.append({"hop": hop, "fun": f_loc, "accepted": accepted, "probability": prob})
        if accepted:
            theta_cur, f_cur = theta_loc, f_loc
            n_accepted += 1
        if f_loc < f_best:
            theta_best, f_best = theta_loc, f_loc
    return BasinHoppingResult(theta_best, f_best, n_accepted, log)


# ---------------------------------------------------------------------------
# alternating driver

CYCLE_LOG_HEADER = (
    "cycle", "total", "pde_residual", "data_misfit", "reg_u", "reg_theta",
    "accepted_hops",
)


@dataclass
class OptimState:
    u: StateField
    theta: np.ndarray
    cycles_run: int
    history: list = dataclass_field(default_factory=list)
    best_total: float = np.inf


def _cycle_seed(seed: int, cycle: int) -> int:
    """Deterministic per-cycle RNG seed derived from the master seed."""
    return int(np.random.SeedSequence((seed, cycle)).generate_state(1)[0])


def alternate(
    u0: StateField,
    theta0: np.ndarray,
    cfg: ObjectiveConfig,
    cycles: int = 100,
    n_hops: int = 100,
    adam_epochs: int = 300,
    adam_lr: float = 0.0004,
    step_scale: float = 0.5,
    temperature: float = 1.0,
    seed: int = 0,
    bfgs_max_iters: int = 100,
    log_path=None,
) -> OptimState:
    """Alternate basin-hopping over theta and ADAM over the state.

    Records per-cycle objective parts and returns the best snapshot by
    total objective.  A CSV log row is appended per cycle when log_path
    is given.
    """
    evaluator = ObjectiveEvaluator(cfg)
    u, theta = u0, np.asarray(theta0, dtype=float)
    parts = evaluator.parts(u, theta)
    state = OptimState(u, theta.copy(), 0, [], parts.total)
    best_u, best_theta, best_total = u, theta.copy(), parts.total

    writer = None
    log_fh = None
    if log_path is not None:
        log_fh = open(log_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(log_fh)
        writer.writerow(CYCLE_LOG_HEADER)

    try:
        for cycle in range(cycles):
            try:
                hop = basin_hopping(
                    theta, u, cfg,
                    n_hops=n_hops,
                    step_scale=step_scale,
                    temperature=temperature,
                    seed=_cycle_seed(seed, cycle),
                    bfgs_max_iters=bfgs_max_iters,
                )
                theta = hop.theta
                u = adam_fit_state(u, theta, cfg, max_epochs=adam_epochs, lr=adam_lr)
            except FloatingPointError as exc:
                raise RuntimeError(f"optimization aborted in cycle {cycle}: {exc}") from exc
            parts = evaluator.parts(u, theta)
            record = {
                "cycle": cycle,
                "parts": parts,
                "accepted_hops": hop.n_accepted,
            }
            state.history.append(record)
            if writer is not None:
                writer.writerow(
                    [cycle, repr(parts.total), repr(parts.pde_residual),
                     repr(parts.data_misfit), repr(parts.reg_u),
                     repr(parts.reg_theta), hop.n_accepted]
                )
            if parts.total < best_total:
                best_u, best_theta, best_total = u, theta.copy(), parts.total
            state.cycles_run = cycle + 1
    finally:
        if log_fh is not None:
            log_fh.close()

    state.u = best_u
    state.theta = best_theta
    state.best_total = best_total
    return state
