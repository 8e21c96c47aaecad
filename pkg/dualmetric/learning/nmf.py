"""
Dual nonnegative matrix factorization with multiplicative updates.

Two rating matrices are factorized jointly under
min ||V_A - (1-a) W_A H_A - a X W_B H_B||^2 + ||V_B - (1-a) W_B H_B - a X^T W_A H_A||^2.
Eliminating the cross term turns the problem into two standard NMFs on
effective targets, which the classical multiplicative updates solve without
ever increasing their objective.
"""

import logging
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from dualmetric.core.errors import (
    ConditionViolationError,
    DataValidationError,
    MonotonicityError,
    ShapeError,
    SingularMixingError,
)
from dualmetric.core.log_format import log_metrics
from dualmetric.core.tensor import as_matrix
from dualmetric.models.mapping import OrthogonalMap

logger = logging.getLogger(__name__)

# Multiplicative update denominator guard
EPS = 1e-12

# Relative slack allowed by the monotonicity check (floating point rounding near convergence)
MONOTONE_RTOL = 1e-9

DEFAULT_TOL = 1e-5

MapLike = Union[OrthogonalMap, np.ndarray]


class ConditionReport(BaseModel):
    """Sufficient conditions for convergence of the dual factorization"""

    model_config = ConfigDict(frozen=True)

    a: bool = Field(..., description="2*alpha - 1 < 0")
    b: bool = Field(..., description="(1-alpha) V_B - alpha X^T V_A >= 0 entrywise")
    c: bool = Field(..., description="(1-alpha) V_A - alpha X V_B >= 0 entrywise")

    @property
    def holds(self) -> bool:
        return self.a and self.b and self.c

    def first_violated(self) -> Optional[str]:
        for name in ("a", "b", "c"):
            if not getattr(self, name):
                return name
        return None


class NmfState(BaseModel):
    """Inputs, factors and objective histories of a dual NMF run"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    V_A: np.ndarray = Field(..., description="Domain-A ratings as given")
    V_B: np.ndarray = Field(..., description="Domain-B ratings as given")
    W_A: np.ndarray
    H_A: np.ndarray
    W_B: np.ndarray
    H_B: np.ndarray
    alpha: float = Field(..., ge=0.0, le=1.0)
    X: np.ndarray
    m: int = Field(..., ge=0, description="Rank of X")
    k_scale: float = Field(..., ge=0.0, description="Rating-scale bound")
    shift: float = Field(0.0, ge=0.0, description="Positive perturbation added to both V, 0 if none")
    raw_conditions: ConditionReport
    conditions: ConditionReport = Field(..., description="Conditions of the matrices actually factorized")
    loss_history: list[float] = Field(default_factory=list, description="Eliminated objective per iteration")
    coupled_history: list[float] = Field(default_factory=list, description="Coupled objective per iteration")
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.loss_history)

    def reconstruction(self) -> tuple[np.ndarray, np.ndarray]:
        """Approximations of the original V_A, V_B with the perturbation subtracted back"""
        p_a, p_b = self.W_A @ self.H_A, self.W_B @ self.H_B
        a = self.alpha
        return (1 - a) * p_a + a * self.X @ p_b - self.shift, (1 - a) * p_b + a * self.X.T @ p_a - self.shift


def _map_matrix(x: MapLike) -> np.ndarray:
    return x.matrix if isinstance(x, OrthogonalMap) else as_matrix(x, "X")


def _check_shapes(v_a: np.ndarray, v_b: np.ndarray, x: np.ndarray) -> None:
    if v_a.shape != v_b.shape:
        raise ShapeError(f"V_A {v_a.shape} and V_B {v_b.shape} differ")
    if x.shape != (v_a.shape[0], v_a.shape[0]):
        raise ShapeError(f"X must be {v_a.shape[0]}x{v_a.shape[0]}, got {x.shape}")


def _require_nonnegative(**arrays: np.ndarray) -> None:
    for name, array in arrays.items():
        if np.any(array < 0):
            raise DataValidationError(f"{name} has negative entries")


def check_conditions(v_a, v_b, x: MapLike, alpha: float) -> ConditionReport:
    """
    Evaluate the three sufficient conditions on (V_A, V_B, X, alpha).

    Raises:
        ShapeError: On incompatible shapes
    """
    v_a, v_b, xm = as_matrix(v_a, "V_A"), as_matrix(v_b, "V_B"), _map_matrix(x)
    _check_shapes(v_a, v_b, xm)
    return ConditionReport(
        a=2 * alpha - 1 < 0,
        b=bool(np.all((1 - alpha) * v_b - alpha * xm.T @ v_a >= 0)),
        c=bool(np.all((1 - alpha) * v_a - alpha * xm @ v_b >= 0)),
    )


def positive_perturbation(v, m: int, k_scale: float) -> np.ndarray:
    """V + m * k_scale on every entry"""
    return as_matrix(v, "V") + m * k_scale


def effective_targets(v_a, v_b, x: MapLike, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Targets each factor pair reconstructs once the cross term is eliminated.

    T_A = ((1-a) V_A - a X V_B) / (1-2a), T_B = ((1-a) V_B - a X^T V_A) / (1-2a)

    Raises:
        SingularMixingError: If alpha = 0.5
        ShapeError: On incompatible shapes
    """
    v_a, v_b, xm = as_matrix(v_a, "V_A"), as_matrix(v_b, "V_B"), _map_matrix(x)
    _check_shapes(v_a, v_b, xm)
    scale = 1.0 - 2.0 * alpha
    if scale == 0.0:
        raise SingularMixingError("alpha = 0.5 makes the mixing singular")
    return ((1 - alpha) * v_a - alpha * xm @ v_b) / scale, ((1 - alpha) * v_b - alpha * xm.T @ v_a) / scale


def mu_step(t, w, h) -> tuple[np.ndarray, np.ndarray]:
    """
    One round of multiplicative updates for ||T - W H||^2 (H first, then W).

    Raises:
        DataValidationError: If any input has a negative entry
    """
    t, w, h = as_matrix(t, "T"), as_matrix(w, "W"), as_matrix(h, "H")
    _require_nonnegative(T=t, W=w, H=h)
    h = h * (w.T @ t) / (w.T @ w @ h + EPS)
    w = w * (t @ h.T) / (w @ h @ h.T + EPS)
    return w, h


def frobenius_objective(t: np.ndarray, w: np.ndarray, h: np.ndarray) -> float:
    return float(np.sum((t - w @ h) ** 2))


def coupled_objective(v_a, v_b, w_a, h_a, w_b, h_b, x: np.ndarray, alpha: float) -> float:
    """Joint objective over both domains with the cross terms kept"""
    p_a, p_b = w_a @ h_a, w_b @ h_b
    r_a = v_a - (1 - alpha) * p_a - alpha * x @ p_b
    r_b = v_b - (1 - alpha) * p_b - alpha * x.T @ p_a
    return float(np.sum(r_a**2) + np.sum(r_b**2))


def check_monotone(history, rtol: float = MONOTONE_RTOL) -> None:
    """
    Raises:
        MonotonicityError: If some step increased the objective beyond rounding slack
    """
    for step, (previous, current) in enumerate(zip(history[:-1], history[1:]), start=2):
        if current > previous + rtol * max(abs(previous), 1.0):
            raise MonotonicityError(f"objective rose at iteration {step}: {previous:.12g} -> {current:.12g}")


def coupled_drift_bound(alpha: float) -> float:
    """
    Factor 1 / (1-2a)^2 by which the coupled objective may exceed any earlier value.

    The mixing matrix has singular values 1 and 1-2a, so the coupled objective
    lies between the eliminated objective and that objective divided by
    (1-2a)^2; the eliminated objective never increases.
    """
    return 1.0 / (1.0 - 2.0 * alpha) ** 2


def max_relative_rise(history) -> float:
    """Largest single-step increase relative to the previous value (0 for a non-increasing sequence)"""
    rises = [(current - previous) / max(abs(previous), 1e-300) for previous, current in zip(history[:-1], history[1:])]
    return max([0.0, *rises])


def check_coupled_drift(coupled, alpha: float, rtol: float = MONOTONE_RTOL) -> None:
    """
    Raises:
        MonotonicityError: If the coupled objective exceeds its running minimum by more than ``coupled_drift_bound``
    """
    bound = coupled_drift_bound(alpha) * (1.0 + rtol)
    lowest = float("inf")
    for step, value in enumerate(coupled, start=1):
        if value > bound * lowest:
            raise MonotonicityError(f"coupled objective drifted at iteration {step}: {lowest:.12g} -> {value:.12g}")
        lowest = min(lowest, value)


def _init_factors(rng: np.random.Generator, rows: int, cols: int, rank: int) -> tuple[np.ndarray, np.ndarray]:
    # uniform in (0, 1]
    return 1.0 - rng.random((rows, rank)), 1.0 - rng.random((rank, cols))


def run_dual_nmf(
    v_a,
    v_b,
    x: MapLike,
    alpha: float,
    rank: int,
    iters: int,
    seed: int = 0,
    k_scale: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> NmfState:
    """
    Solve the dual factorization through its effective targets.

    When conditions (b) or (c) fail on the raw matrices, both are shifted by
    rank(X) * k_scale first; the shift is subtracted back by
    ``NmfState.reconstruction``. Iteration stops after ``iters`` rounds or
    when the relative change of the eliminated objective drops below ``tol``.

    Args:
        v_a, v_b: Nonnegative rating matrices of equal shape
        x: Orthogonal (or permutation) matrix acting on the row space
        alpha: Mixing weight, must be below 0.5
        rank: Factorization rank
        iters: Maximum number of update rounds
        seed: Factor initialisation seed
        k_scale: Rating-scale bound; defaults to the largest entry of V_A, V_B
        tol: Relative-change stopping threshold (0 disables early stopping)

    Raises:
        ConditionViolationError: If condition (a) fails, or (b)/(c) still fail after the shift
        DataValidationError: On negative ratings or a nonpositive rank
    """
    v_a, v_b, xm = as_matrix(v_a, "V_A"), as_matrix(v_b, "V_B"), _map_matrix(x)
    _check_shapes(v_a, v_b, xm)
    _require_nonnegative(V_A=v_a, V_B=v_b)
    if rank < 1 or iters < 1:
        raise DataValidationError(f"rank and iters must be positive, got rank={rank} iters={iters}")

    raw = check_conditions(v_a, v_b, xm, alpha)
    if not raw.a:
        raise ConditionViolationError(f"2*alpha - 1 = {2 * alpha - 1:.6g} is not negative", report=raw, condition="a")

    m = int(np.linalg.matrix_rank(xm))
    scale = float(max(v_a.max(), v_b.max())) if k_scale is None else float(k_scale)
    shift = 0.0
    conditions = raw
    if not raw.holds:
        shift = m * scale
        conditions = check_conditions(v_a + shift, v_b + shift, xm, alpha)
        logger.info("Conditions b=%s c=%s on raw input; applying positive perturbation %.6g", raw.b, raw.c, shift)
        if not conditions.holds:
            violated = conditions.first_violated()
            raise ConditionViolationError(
                f"condition ({violated}) fails even after perturbation", report=conditions, condition=violated
            )

    shifted_a, shifted_b = v_a + shift, v_b + shift
    t_a, t_b = effective_targets(shifted_a, shifted_b, xm, alpha)
    # rounding can leave -1e-16 where the conditions hold with equality
    t_a, t_b = np.maximum(t_a, 0.0), np.maximum(t_b, 0.0)

    rng = np.random.default_rng(seed)
    w_a, h_a = _init_factors(rng, *t_a.shape, rank)
    w_b, h_b = _init_factors(rng, *t_b.shape, rank)
    weight = (1.0 - 2.0 * alpha) ** 2

    history: list[float] = []
    coupled: list[float] = []
    converged = False
    for step in range(1, iters + 1):
        w_a, h_a = mu_step(t_a, w_a, h_a)
        w_b, h_b = mu_step(t_b, w_b, h_b)
        objective = weight * (frobenius_objective(t_a, w_a, h_a) + frobenius_objective(t_b, w_b, h_b))
        history.append(objective)
        coupled.append(coupled_objective(shifted_a, shifted_b, w_a, h_a, w_b, h_b, xm, alpha))
        logger.debug("NMF iteration %d objective %.6g", step, objective)
        if relative_change(history) < tol:
            converged = True
            break

    state = NmfState(
        V_A=v_a,
        V_B=v_b,
        W_A=w_a,
        H_A=h_a,
        W_B=w_b,
        H_B=h_b,
        alpha=alpha,
        X=xm,
        m=m,
        k_scale=scale,
        shift=shift,
        raw_conditions=raw,
        conditions=conditions,
        loss_history=history,
        coupled_history=coupled,
        converged=converged,
    )
    log_metrics(
        logger,
        logging.INFO,
        "Dual NMF finished",
        iterations=state.iterations,
        objective=history[-1],
        coupled=coupled[-1],
        converged=converged,
    )
    return state


def relative_change(history) -> float:
    """Relative change between the last two objective values (inf with fewer than two)"""
    if len(history) < 2:
        return float("inf")
    previous, last = history[-2], history[-1]
    return abs(previous - last) / previous if previous > 0 else 0.0
