"""Shared data model: problems, solver options, direction windows, traces."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Callable, List, Optional

import numpy as np

VARIANTS = ("nonlinear", "linearized", "adaptive")
MODES = ("NL", "LIN")


class BreakdownError(RuntimeError):
    """New search direction collapsed (||v|| below the breakdown tolerance).

    Carries the residual at the point of breakdown so the caller can tell a
    lucky breakdown (residual already tiny) from an unlucky one.
    """

    def __init__(self, message, residual=None, resnorm=None, x=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.resnorm = resnorm
        self.x = x
        self.history = history


class DivergenceError(RuntimeError):
    """Iteration diverged (residual norm grew past the divergence bound)."""

    def __init__(self, message, x=None, trace=None):
        super().__init__(message)
        self.x = x
        self.trace = trace


class NotDescentError(RuntimeError):
    """Line search was handed a non-descent direction (slope <= 0)."""


class NonFiniteError(RuntimeError):
    """A function evaluation produced NaN or Inf. Carries last good state."""

    def __init__(self, message, x=None, trace=None):
        super().__init__(message)
        self.x = x
        self.trace = trace


def check_finite(v, what="vector"):
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{what} contains non-finite entries")
    return v


@dataclass
class NonlinearProblem:
    """Function oracle for f(x) = 0.

    eval_f must be deterministic within a process. exact_jv, when given,
    returns J(x) @ p and must agree with the finite-difference probe.
    eval_phi is the scalar objective for problems where f is its gradient.
    """

    dim: int
    eval_f: Callable[[np.ndarray], np.ndarray]
    exact_jv: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    eval_phi: Optional[Callable[[np.ndarray], float]] = None
    name: str = ""


@dataclass(frozen=True)
class LineSearchOptions:
    """Backtracking parameters: sufficient decrease c1, shrink factor tau."""

    c1: float = 1e-4
    tau: float = 0.8
    max_backtracks: int = 30
    alpha0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise ValueError("c1 must be in (0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must be in (0, 1)")
        if not 0.0 < self.alpha0 <= 1.0:
            raise ValueError("alpha0 must be in (0, 1]")


@dataclass(frozen=True)
class SolverOptions:
    """Configuration for the windowed conjugate-residual solver.

    window_m is the number of retained (p, v) direction pairs. The variant
    selects how the residual is updated each iteration: "nonlinear"
    re-evaluates f, "linearized" uses the algebraic recursion with the
    Jacobian frozen at the sweep origin, and "adaptive" switches between
    the two based on the angular distance of the two residuals.
    """

    window_m: int = 1
    tol_rel: float = 1e-10
    max_iters: int = 300
    restart_every: Optional[int] = 50
    variant: str = "nonlinear"
    adaptive_threshold: float = 0.01
    adaptive_check_period: int = 10
    linesearch: Optional[LineSearchOptions] = None
    frechet_eps_scale: float = 1e-7
    breakdown_tol: float = 1e-14
    # Slope estimate handed to the line search: "window" uses ||y||^2 (free,
    # exact for frozen Jacobians), "frechet" spends one probe per iteration.
    slope_mode: str = "window"
    truncated_update: bool = False
    max_breakdown_restarts: int = 3

    def __post_init__(self):
        if self.window_m < 1:
            raise ValueError("window_m must be >= 1")
        if self.tol_rel <= 0.0:
            raise ValueError("tol_rel must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0.0 < self.adaptive_threshold < 2.0:
            raise ValueError("adaptive_threshold must be in (0, 2)")
        if self.adaptive_check_period < 1:
            raise ValueError("adaptive_check_period must be >= 1")
        if self.restart_every is not None and self.restart_every < 1:
            raise ValueError("restart_every must be >= 1 or None")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.slope_mode not in ("window", "frechet"):
            raise ValueError("slope_mode must be 'window' or 'frechet'")

    def with_(self, **kw) -> "SolverOptions":
        return replace(self, **kw)


class WindowPair:
    """Sliding window of paired direction columns (p_i, v_i), v_i = J(x_i) p_i.

    Columns are stored oldest to newest; pushing at capacity evicts the
    oldest pair. The v columns are expected orthonormal (the caller
    orthogonalizes and normalizes before pushing).
    """

    NORMALIZATION_TOL = 1e-10

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.p_cols: List[np.ndarray] = []
        self.v_cols: List[np.ndarray] = []
        self.oldest_index = 0
        self._next_index = 0

    def __len__(self):
        return len(self.p_cols)

    def push(self, p: np.ndarray, v: np.ndarray) -> None:
        if p.shape != v.shape:
            raise ValueError("p and v must have the same length")
        if self.p_cols and p.shape != self.p_cols[0].shape:
            raise ValueError("dimension mismatch with existing window columns")
        nv = float(np.linalg.norm(v))
        if abs(nv - 1.0) > self.NORMALIZATION_TOL:
            raise ValueError(f"v is not normalized: ||v|| = {nv!r}")
        self.p_cols.append(p)
        self.v_cols.append(v)
        self._next_index += 1
        if len(self.p_cols) > self.capacity:
            self.p_cols.pop(0)
            self.v_cols.pop(0)
        self.oldest_index = self._next_index - len(self.p_cols)

    def clear(self) -> None:
        self.p_cols = []
        self.v_cols = []
        self.oldest_index = self._next_index

    def p_matrix(self) -> np.ndarray:
        return np.stack(self.p_cols, axis=1)

    def v_matrix(self) -> np.ndarray:
        return np.stack(self.v_cols, axis=1)

    def orthonormality_defect(self) -> float:
        """Max-norm deviation of V^T V from the identity."""
        if not self.v_cols:
            return 0.0
        V = self.v_matrix()
        G = V.T @ V - np.eye(V.shape[1])
        return float(np.abs(G).max())


def window_push(window: WindowPair, p: np.ndarray, v: np.ndarray) -> WindowPair:
    """Append a normalized pair, evicting the oldest pair at capacity."""
    window.push(p, v)
    return window


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    fevals: int
    resnorm: float
    step_size: float
    mode: str
    wallclock_s: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


CSV_HEADER = "iter,fevals,resnorm,step_size,mode,wallclock_s"


class ConvergenceTrace:
    """Per-iteration convergence log; immutable once the solve finalizes it."""

    def __init__(self):
        self.records: List[TraceRecord] = []
        self._frozen = False

    def __len__(self):
        return len(self.records)

    def append(self, rec: TraceRecord) -> "ConvergenceTrace":
        if self._frozen:
            raise RuntimeError("trace is frozen after the solve completed")
        if self.records and rec.fevals < self.records[-1].fevals:
            raise ValueError(
                f"fevals must be nondecreasing: {rec.fevals} < {self.records[-1].fevals}"
            )
        self.records.append(rec)
        return self

    def freeze(self) -> "ConvergenceTrace":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def resnorms(self) -> np.ndarray:
        return np.array([r.resnorm for r in self.records])

    def fevals(self) -> np.ndarray:
        return np.array([r.fevals for r in self.records], dtype=int)

    def final(self) -> TraceRecord:
        return self.records[-1]

    def fevals_to_relative(self, threshold: float) -> Optional[int]:
        """Cumulative fevals when resnorm/resnorm0 first drops to threshold."""
        if not self.records:
            return None
        r0 = self.records[0].resnorm
        if r0 == 0.0:
            return self.records[0].fevals
        for rec in self.records:
            if rec.resnorm <= threshold * r0:
                return rec.fevals
        return None

    def to_csv(self, path=None) -> str:
        """Serialize as CSV; resnorm carries 17 significant digits."""
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for r in self.records:
            buf.write(
                f"{r.iter},{r.fevals},{r.resnorm:.16e},{r.step_size:.16e},"
                f"{r.mode},{r.wallclock_s:.6f}\n"
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ConvergenceTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            expected = CSV_HEADER.split(",")
            if reader.fieldnames != expected:
                raise ValueError(f"bad trace header: {reader.fieldnames}")
            for row in reader:
                trace.append(
                    TraceRecord(
                        iter=int(row["iter"]),
                        fevals=int(row["fevals"]),
                        resnorm=float(row["resnorm"]),
                        step_size=float(row["step_size"]),
                        mode=row["mode"],
                        wallclock_s=float(row["wallclock_s"]),
                    )
                )
        return trace


def trace_append(trace: ConvergenceTrace, rec: TraceRecord) -> ConvergenceTrace:
    return trace.append(rec)


@dataclass
class JvProbe:
    """Jacobian-vector product configuration.

    Frechet mode approximates J(x) p with one forward difference; exact mode
    calls the problem's exact_jv and costs no function evaluations.
    """

    mode: str = "frechet"
    eps_scale: float = 1e-7

    def __post_init__(self):
        if self.mode not in ("frechet", "exact"):
            raise ValueError("mode must be 'frechet' or 'exact'")
        if self.eps_scale <= 0.0:
            raise ValueError("eps_scale must be positive")


class EvalCounter:
    """Counts function evaluations against a problem oracle.

    All solvers charge costs through this wrapper so their traces share one
    accounting convention: each eval_f call is one feval, exact Jacobian
    products are free.
    """

    def __init__(self, prob: NonlinearProblem, probe: Optional[JvProbe] = None):
        self.prob = prob
        self.probe = probe or JvProbe()
        self.count = 0

    def f(self, x: np.ndarray) -> np.ndarray:
        self.count += 1
        fx = self.prob.eval_f(x)
        if not np.all(np.isfinite(fx)):
            raise NonFiniteError("f(x) is not finite", x=x)
        return fx

    def jv(self, x: np.ndarray, p: np.ndarray, f_x: np.ndarray) -> np.ndarray:
        from .jacobian import frechet_jv

        out, cost = frechet_jv(self.prob, x, p, f_x, self.probe)
        self.count += cost
        return out

    def slope(self, x: np.ndarray, r: np.ndarray, d: np.ndarray) -> float:
        from .jacobian import descent_check

        val, cost = descent_check(self.prob, x, r, d, self.probe)
        self.count += cost
        return val

    def phi(self, x: np.ndarray) -> float:
        """Objective evaluation, charged like a function evaluation."""
        if self.prob.eval_phi is None:
            raise ValueError("problem has no eval_phi")
        self.count += 1
        val = float(self.prob.eval_phi(x))
        if not np.isfinite(val):
            raise NonFiniteError("phi(x) is not finite", x=x)
        return val
