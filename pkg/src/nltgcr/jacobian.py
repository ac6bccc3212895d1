"""Matrix-free Jacobian-vector products and the cheap descent check."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .core import JvProbe, NonFiniteError, NonlinearProblem


def _frechet_eps(x: np.ndarray, p_norm: float, eps_scale: float) -> float:
    return eps_scale * (1.0 + float(np.abs(x).max())) / p_norm


def frechet_jv(
    prob: NonlinearProblem,
    x: np.ndarray,
    p: np.ndarray,
    f_x: np.ndarray,
    probe: JvProbe,
) -> Tuple[np.ndarray, int]:
    """Approximate J(x) @ p, reusing the already computed f_x.

    Frechet mode takes one forward difference with
    eps = eps_scale * (1 + ||x||_inf) / ||p||_2 and costs 1 feval; exact
    mode delegates to the problem's exact_jv and costs 0.

    Returns (J(x) @ p, fevals_spent).
    """
    if probe.mode == "exact":
        if prob.exact_jv is None:
            raise ValueError("problem has no exact_jv but probe mode is 'exact'")
        return prob.exact_jv(x, p), 0
    p_norm = float(np.linalg.norm(p))
    if p_norm == 0.0:
        raise ValueError("cannot probe along a zero direction")
    eps = _frechet_eps(x, p_norm, probe.eps_scale)
    f_shift = prob.eval_f(x + eps * p)
    if not np.all(np.isfinite(f_shift)):
        raise NonFiniteError("f(x + eps*p) is not finite", x=x + eps * p)
    return (f_shift - f_x) / eps, 1


def descent_check(
    prob: NonlinearProblem,
    x: np.ndarray,
    r: np.ndarray,
    d: np.ndarray,
    probe: JvProbe,
) -> Tuple[float, int]:
    """Estimate <J(x)^T r, d> = <r, J(x) d> with one Frechet probe.

    With r = -f(x), a positive value means d is a descent direction for
    phi = 0.5 ||f||^2.
    """
    f_x = -r
    jd, fev = frechet_jv(prob, x, d, f_x, probe)
    return float(r @ jd), fev
