"""One arc-length step: predictor, Riks/Crisfield corrector, step cutting,
and singular-point tooling for the serial phase.

All routines are pure functions of their inputs and may run concurrently
on disjoint data.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .problems import ProblemDef, SolutionPoint

RIKS = "riks"
CRISFIELD = "crisfield"


class StepError(RuntimeError):
    """An arc-length step failed after exhausting all step cuts."""


class PredictorError(RuntimeError):
    """Cold-start predictor failed (singular tangent stiffness)."""


class ComplexRootsError(RuntimeError):
    """The Crisfield quadratic has no real roots; caller must cut the step."""


class BranchSwitchError(RuntimeError):
    """Branch switching refused (null space of K is not one-dimensional)."""


class BifurcationNotFoundError(RuntimeError):
    """Bisection could not maintain a stability sign change."""


@dataclass(frozen=True)
class AlmConfig:
    constraint: str = CRISFIELD
    psi: float = 1.0
    newton_tol: float = 1e-10
    max_newton_iters: int = 25
    max_step_cuts: int = 5
    bif_tol: float = 1e-4
    branch_perturbation: float = 1e-4
    step_delay: float = 0.0  # synthetic per-step work, for scaling studies

    def __post_init__(self):
        if self.constraint not in (RIKS, CRISFIELD):
            raise ValueError(f"unknown constraint {self.constraint!r}")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if self.max_step_cuts < 0:
            raise ValueError("max_step_cuts must be >= 0")
        if self.psi < 0:
            raise ValueError("psi must be >= 0")
        if self.branch_perturbation <= 0:
            raise ValueError("branch_perturbation must be positive")


@dataclass(frozen=True)
class Increment:
    """An increment Delta w = (Delta u, Delta lambda)."""

    du: np.ndarray
    dlam: float

    def __post_init__(self):
        object.__setattr__(self, "du", np.atleast_1d(np.asarray(self.du, dtype=float)))
        object.__setattr__(self, "dlam", float(self.dlam))


@dataclass(frozen=True)
class StepResult:
    w_new: SolutionPoint
    iterations: int
    cuts_used: int
    achieved_length: float


@dataclass(frozen=True)
class StabilityInfo:
    det_sign: int  # sign of det K; 0 if (numerically) singular
    n_nonpositive: int  # non-positive pivots / eigenvalues of K


def distance(delta_u: np.ndarray, delta_lambda: float, psi: float,
             load_norm_sq: float) -> float:
    """Metric length sqrt(du.du + psi^2 dlam^2 P.P) of an increment.

    The square root makes this a weighted Euclidean norm; the Newton
    constraints internally use the squared form.
    """
    if load_norm_sq < 0:
        raise ValueError("load_norm_sq must be non-negative")
    du = np.asarray(delta_u, dtype=float)
    return float(np.sqrt(du @ du + psi**2 * delta_lambda**2 * load_norm_sq))


def point_distance(w_a: SolutionPoint, w_b: SolutionPoint, psi: float,
                   load_norm_sq: float) -> float:
    return distance(w_a.u - w_b.u, w_a.lam - w_b.lam, psi, load_norm_sq)


def increment_between(w_to: SolutionPoint, w_from: SolutionPoint) -> Increment:
    return Increment(w_to.u - w_from.u, w_to.lam - w_from.lam)


def predictor(problem: ProblemDef, config: AlmConfig, w: SolutionPoint,
              delta_w_prev: Increment | None, delta_L: float) -> Increment:
    """Initial increment of metric length delta_L.

    Warm start rescales the previous increment; cold start uses the tangent
    direction K^{-1} P with the sign giving Delta lambda > 0.
    """
    if delta_L <= 0:
        raise ValueError("delta_L must be positive")
    psi, ptp = config.psi, problem.load_norm_sq
    if delta_w_prev is not None:
        length = distance(delta_w_prev.du, delta_w_prev.dlam, psi, ptp)
        if length > 0:
            scale = delta_L / length
            return Increment(scale * delta_w_prev.du, scale * delta_w_prev.dlam)
    K = problem.jacobian_u(w)
    P = -problem.jacobian_lambda(w)
    try:
        du_t = np.linalg.solve(K, P)
    except np.linalg.LinAlgError as exc:
        raise PredictorError(f"singular tangent stiffness at cold start: {exc}")
    length = distance(du_t, 1.0, psi, ptp)
    if length == 0.0 or not np.isfinite(length):
        raise PredictorError("degenerate tangent direction at cold start")
    scale = delta_L / length  # positive, so dlam = scale > 0
    return Increment(scale * du_t, scale)


def select_root(roots: tuple[float, float], delta_u_old: np.ndarray,
                delta_u_candidates: tuple[np.ndarray, np.ndarray]) -> int:
    """Pick the Crisfield root that keeps moving forward.

    Maximizes delta_u_old . delta_u_candidate; on a tie (e.g. first
    iteration from a cold start) the root with larger delta lambda wins.
    """
    old = np.asarray(delta_u_old, dtype=float)
    dots = [float(old @ np.asarray(c, dtype=float)) for c in delta_u_candidates]
    scale = max(1.0, abs(dots[0]), abs(dots[1]))
    if abs(dots[0] - dots[1]) <= 1e-12 * scale:
        return 0 if roots[0] >= roots[1] else 1
    return 0 if dots[0] > dots[1] else 1


class _NoConvergence(RuntimeError):
    pass


def _corrector(problem: ProblemDef, config: AlmConfig, w_i: SolutionPoint,
               delta_w_prev: Increment | None, delta_L: float
               ) -> tuple[SolutionPoint, int]:
    psi, ptp = config.psi, problem.load_norm_sq
    c = psi**2 * ptp
    n = problem.n_dof
    dw = predictor(problem, config, w_i, delta_w_prev, delta_L)
    du, dlam = dw.du.copy(), dw.dlam
    du0, dlam0 = du.copy(), dlam  # first-iteration increment (Riks plane)

    for it in range(config.max_newton_iters + 1):
        w = SolutionPoint(w_i.u + du, w_i.lam + dlam)
        G = problem.residual(w)
        if float(np.linalg.norm(G)) <= config.newton_tol:
            return w, it
        if it == config.max_newton_iters:
            break
        K = problem.jacobian_u(w)
        Gl = problem.jacobian_lambda(w)
        if config.constraint == RIKS:
            # Bordered system with the (verbatim) plane constraint
            # du0.Du + psi^2 dlam0^2 P.P - dL^2 = 0; constant in dlam.
            f = float(du0 @ du) + c * dlam0 * dlam0 - delta_L**2
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = K
            M[:n, n] = Gl
            M[n, :n] = du0
            rhs = np.concatenate([-G, [-f]])
            try:
                sol = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                raise _NoConvergence("singular bordered system")
            du = du + sol[:n]
            dlam = dlam + float(sol[n])
        else:
            # Crisfield: solve the bordered system twice (linearized-sphere
            # bottom row keeps it regular at limit points), giving the
            # one-parameter family of Newton updates of G; intersect with
            # the sphere to get the per-iteration quadratic.
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = K
            M[:n, n] = Gl
            M[n, :n] = 2.0 * du
            M[n, n] = 2.0 * c * dlam
            try:
                sol = np.linalg.solve(M, np.concatenate([-G, [0.0]]))
                tan = np.linalg.solve(M, np.concatenate([np.zeros(n), [1.0]]))
            except np.linalg.LinAlgError:
                raise _NoConvergence("singular bordered system")
            x, y = sol[:n], float(sol[n])
            xt, yt = tan[:n], float(tan[n])
            # (du + x + t xt, dlam + y + t yt) on the sphere of radius dL.
            au, al = du + x, dlam + y
            A = float(xt @ xt) + c * yt * yt
            B = 2.0 * (float(au @ xt) + c * al * yt)
            C = float(au @ au) + c * al * al - delta_L**2
            if A == 0.0:
                if B == 0.0:
                    raise _NoConvergence("degenerate constraint quadratic")
                ts = (-C / B, -C / B)
            else:
                disc = B * B - 4.0 * A * C
                if disc < 0.0:
                    raise ComplexRootsError("complex Crisfield roots")
                sq = float(np.sqrt(disc))
                ts = ((-B + sq) / (2.0 * A), (-B - sq) / (2.0 * A))
            cands_du = (au + ts[0] * xt, au + ts[1] * xt)
            cands_dlam = (al + ts[0] * yt, al + ts[1] * yt)
            roots = (cands_dlam[0] - dlam, cands_dlam[1] - dlam)
            idx = select_root(roots, du, cands_du)
            du = cands_du[idx]
            dlam = cands_dlam[idx]
    raise _NoConvergence("no convergence within max_newton_iters")


def step(problem: ProblemDef, config: AlmConfig, w_i: SolutionPoint,
         delta_w_prev: Increment | None, delta_L: float) -> StepResult:
    """One arc-length step of nominal length delta_L with step cutting.

    On non-convergence (or complex Crisfield roots) the length is halved and
    the step retried, up to max_step_cuts; the result reports the achieved
    (possibly shorter) length.
    """
    if delta_L <= 0:
        raise ValueError("delta_L must be positive")
    if config.step_delay > 0:
        time.sleep(config.step_delay)
    last_err: Exception | None = None
    for cut in range(config.max_step_cuts + 1):
        dl = delta_L / 2.0**cut
        try:
            w_new, iters = _corrector(problem, config, w_i, delta_w_prev, dl)
        except (_NoConvergence, ComplexRootsError, PredictorError) as exc:
            last_err = exc
            continue
        achieved = point_distance(w_new, w_i, config.psi, problem.load_norm_sq)
        return StepResult(w_new, iters, cut, achieved)
    raise StepError(f"step failed after {config.max_step_cuts} cuts: {last_err}")


def detect_singular(problem: ProblemDef, w: SolutionPoint,
                    zero_tol: float = 0.0) -> StabilityInfo:
    """Sign of det K and count of non-positive pivots at w.

    Symmetric K uses the eigenvalue inertia (equal to the LDL^T pivot signs
    by Sylvester's law); factorization breakdown reports singular.
    """
    K = problem.jacobian_u(w)
    try:
        if np.allclose(K, K.T, rtol=1e-10, atol=1e-12):
            eigs = np.linalg.eigvalsh(K)
        else:
            eigs = np.real(np.linalg.eigvals(K))
        det_sign, logdet = np.linalg.slogdet(K)
    except np.linalg.LinAlgError:
        return StabilityInfo(det_sign=0, n_nonpositive=problem.n_dof)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    tol = zero_tol if zero_tol > 0 else 1e-14 * scale
    if np.any(np.abs(eigs) <= tol):
        det_sign = 0
    n_nonpos = int(np.sum(eigs <= tol))
    return StabilityInfo(det_sign=int(det_sign), n_nonpositive=n_nonpos)


def locate_bifurcation(problem: ProblemDef, config: AlmConfig,
                       w_a: SolutionPoint, w_b: SolutionPoint) -> SolutionPoint:
    """Bisect on arc-length between two points with opposite stability signs.

    Re-steps from the stable-side endpoint with shrinking length until the
    bracketing interval's metric length is below bif_tol.
    """
    psi, ptp = config.psi, problem.load_norm_sq
    sign_a = detect_singular(problem, w_a).det_sign
    if sign_a == 0:
        return w_a  # degenerate bracket: already singular
    total = point_distance(w_b, w_a, psi, ptp)
    if total <= config.bif_tol:
        return w_b
    direction = increment_between(w_b, w_a)
    lo, hi = 0.0, total
    w_lo = w_a
    w_mid = w_b
    while hi - lo > config.bif_tol:
        target = (lo + hi) / 2.0 - lo
        try:
            res = step(problem, config, w_lo, direction, target)
        except StepError as exc:
            raise BifurcationNotFoundError(f"bisection step failed: {exc}")
        w_mid = res.w_new
        mid = lo + res.achieved_length
        if mid <= lo or mid >= hi:
            raise BifurcationNotFoundError("bisection bracket collapsed")
        s = detect_singular(problem, w_mid).det_sign
        if s == 0:
            return w_mid
        if s == sign_a:
            lo, w_lo = mid, w_mid
        elif s == -sign_a:
            hi = mid
        else:
            raise BifurcationNotFoundError("stability sign lost in bracket")
    return w_mid


def null_vector(problem: ProblemDef, w: SolutionPoint,
                null_tol: float = 1e-3) -> np.ndarray:
    """Unit null eigenvector of K(w); raises unless the null space is 1D."""
    K = problem.jacobian_u(w)
    K_sym = 0.5 * (K + K.T)
    eigs, vecs = np.linalg.eigh(K_sym)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    small = np.abs(eigs) <= null_tol * scale
    if int(np.sum(small)) != 1:
        raise BranchSwitchError(
            f"null space dimension {int(np.sum(small))} != 1"
        )
    phi = vecs[:, int(np.argmax(small))]
    return phi / np.linalg.norm(phi)


def classify_singular(problem: ProblemDef, w: SolutionPoint,
                      null_tol: float = 1e-3) -> str:
    """Classify a located singular point as 'bifurcation' or 'limit'.

    At a limit point the load direction has a component along the null
    eigenvector (the path tangent's lambda-component changes sign there);
    at a bifurcation it is orthogonal to it.
    """
    phi = null_vector(problem, w, null_tol)
    Gl = problem.jacobian_lambda(w)
    if abs(float(phi @ Gl)) <= 1e-6 * (float(np.linalg.norm(Gl)) + 1.0):
        return "bifurcation"
    return "limit"


def branch_switch(problem: ProblemDef, w_star: SolutionPoint,
                  tau: float) -> Increment:
    """Branch predictor (tau * phi, 0) along the unit null eigenvector."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    phi = null_vector(problem, w_star)
    return Increment(tau * phi, 0.0)
