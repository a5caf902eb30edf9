"""Convex QCQP for the precoder update, solved by a second-order cone IPM.

The precoder subproblem minimizes the epigraph variable ``xi`` subject to

* private-type constraints ``x'Qx + b'x + d - xi + c * xi_c <= 0``,
* common-type constraints  ``x'Qx + b'x + d - xi_c <= 0``,
* the power ball ``||x||^2 <= P_t``,

where ``x`` stacks real and imaginary parts of the precoders.  Each quadratic
constraint becomes a rotated second-order cone through a square-root factor of
``Q``; the resulting SOCP is solved by a primal-dual path-following method
(Nesterov-Todd scaling, Mehrotra predictor-corrector) started from a point
that is strictly feasible for both the primal and the dual.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .awmse import AwmseComponents
from .mmse import Precoder

__all__ = [
    "QuadConstraint",
    "ConvexQcqp",
    "SolverStatus",
    "SolverReport",
    "SolverOptions",
    "assemble",
    "solve",
    "real_embed",
    "precoder_to_real",
    "real_to_precoder",
    "dump",
    "load",
]

# eigenvalues below this fraction of the largest are treated as exact zeros
RANK_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class QuadConstraint:
    """``x'Qx + b'x + d + coupling . (xi, xi_c) <= 0``.

    ``coupling`` is ``(-1, c)`` with ``c >= 0`` for a private-type constraint
    and ``(0, -1)`` for a common-type one.
    """

    q: np.ndarray
    b: np.ndarray
    d: float
    coupling: tuple[float, float]

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if q.shape != (b.size, b.size):
            raise ValueError(f"Q shape {q.shape} incompatible with b of length {b.size}")
        a0, a1 = (float(v) for v in self.coupling)
        if not ((a0 == -1.0 and a1 >= 0.0) or (a0 == 0.0 and a1 == -1.0)):
            raise ValueError(f"unsupported epigraph coupling {self.coupling}")
        object.__setattr__(self, "q", 0.5 * (q + q.T))
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "coupling", (a0, a1))

    @property
    def is_common(self) -> bool:
        return self.coupling[0] == 0.0

    def quad(self, x: np.ndarray) -> float:
        return float(x @ self.q @ x + self.b @ x + self.d)


@dataclass(frozen=True, eq=False)
class ConvexQcqp:
    n_x: int
    constraints: tuple[QuadConstraint, ...]
    power_cap: float
    # layout of x: blocks of 2*n_tx reals (Re then Im), common block first if present
    n_tx: int | None = None
    n_users: int | None = None
    has_common: bool = True

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.power_cap > 0:
            raise ValueError(f"power cap must be > 0, got {self.power_cap}")
        for con in self.constraints:
            if con.b.size != self.n_x:
                raise ValueError("constraint dimension does not match n_x")
        if not any(not c.is_common for c in self.constraints):
            raise ValueError("need at least one private-type constraint")
        if self.uses_common_epigraph and not any(c.is_common for c in self.constraints):
            raise ValueError("coupled common epigraph without common-type constraints is unbounded")

    @property
    def dimension(self) -> int:
        return self.n_x + 2

    @property
    def uses_common_epigraph(self) -> bool:
        return any(c.coupling[1] != 0.0 for c in self.constraints)

    @property
    def private(self) -> list[QuadConstraint]:
        return [c for c in self.constraints if not c.is_common]

    @property
    def common(self) -> list[QuadConstraint]:
        return [c for c in self.constraints if c.is_common]

    def objective_at(self, x: np.ndarray) -> tuple[float, float]:
        """Smallest feasible ``(xi, xi_c)`` for a fixed ``x``."""
        common = self.common
        xi_c = max(c.quad(x) for c in common) if common else 0.0
        xi = max(c.quad(x) + c.coupling[1] * xi_c for c in self.private)
        return xi, xi_c

    def check(self, tol: float = 1e-10) -> None:
        for con in self.constraints:
            ev = np.linalg.eigvalsh(con.q)
            if ev.size and ev.min() < -tol * max(np.trace(con.q), 1e-300):
                raise ValueError("constraint quadratic form is not PSD")


class SolverStatus(enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    NUMERICAL_TROUBLE = "NumericalTrouble"


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 100
    step_fraction: float = 0.99


@dataclass(frozen=True, eq=False)
class SolverReport:
    x: np.ndarray
    xi: float
    xi_common: float
    iterations: int
    kkt_residual: float
    status: SolverStatus
    precoder: Precoder | None = None
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    gap: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def real_embed(psi: np.ndarray) -> np.ndarray:
    """Real symmetric form ``[[A, -B], [B, A]]`` of Hermitian ``A + iB``."""
    a, b = psi.real, psi.imag
    return np.block([[a, -b], [b, a]])


def precoder_to_real(pre: Precoder, include_common: bool = True) -> np.ndarray:
    cols = ([pre.common] if include_common else []) + [pre.private[:, k] for k in range(pre.n_users)]
    return np.concatenate([np.concatenate([c.real, c.imag]) for c in cols])


def real_to_precoder(x: np.ndarray, n_tx: int, n_users: int, include_common: bool = True) -> Precoder:
    blocks = x.reshape(-1, 2 * n_tx)
    vecs = blocks[:, :n_tx] + 1j * blocks[:, n_tx:]
    if include_common:
        return Precoder(vecs[0], vecs[1:].T)
    return Precoder(np.zeros(n_tx, dtype=complex), vecs.T)


def assemble(comp: AwmseComponents, coeffs, noise_var: float, power_cap: float,
             include_common: bool = True) -> ConvexQcqp:
    """Build the precoder-update QCQP from AWMSE components.

    With ``include_common=False`` the common precoder and the common-rate
    constraints are dropped (conventional broadcast transmission).
    """
    k_count, n_tx = comp.n_users, comp.n_tx
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if include_common and coeffs.size != k_count:
        raise ValueError(f"expected {k_count} partition coefficients, got {coeffs.size}")
    if include_common and (np.any(coeffs < 0) or abs(coeffs.sum() - 1.0) > 1e-9):
        raise ValueError("partition coefficients must be >= 0 and sum to 1")
    for name in ("psi_common", "psi_private"):
        if getattr(comp, name).shape != (k_count, n_tx, n_tx):
            raise ValueError(f"{name} has wrong shape")
    comp.check()
    blk = 2 * n_tx
    n_blocks = k_count + 1 if include_common else k_count
    off = 1 if include_common else 0
    n_x = blk * n_blocks
    cons = []
    for k in range(k_count):
        q = np.zeros((n_x, n_x))
        emb = real_embed(comp.psi_private[k])
        for i in range(k_count):
            s = (i + off) * blk
            q[s:s + blk, s:s + blk] = emb
        b = np.zeros(n_x)
        f = comp.f_private[k]
        s = (k + off) * blk
        b[s:s + blk] = -2.0 * np.concatenate([f.real, f.imag])
        const = noise_var * comp.t_private[k] + comp.u_private[k] - comp.v_private[k]
        c_k = float(coeffs[k]) if include_common else 0.0
        cons.append(QuadConstraint(q, b, const - c_k, (-1.0, c_k)))
    if include_common:
        for k in range(k_count):
            emb = real_embed(comp.psi_common[k])
            q = np.kron(np.eye(n_blocks), emb)
            b = np.zeros(n_x)
            f = comp.f_common[k]
            b[:blk] = -2.0 * np.concatenate([f.real, f.imag])
            const = noise_var * comp.t_common[k] + comp.u_common[k] - comp.v_common[k]
            cons.append(QuadConstraint(q, b, const, (0.0, -1.0)))
    return ConvexQcqp(n_x=n_x, constraints=tuple(cons), power_cap=float(power_cap),
                      n_tx=n_tx, n_users=k_count, has_common=include_common)


# --- second-order cone algebra ------------------------------------------------
# A cone element u = (u0, u1) lies in the cone when u0 >= ||u1||.

def _jdet(u):
    nrm = math.sqrt(u[1:] @ u[1:])
    return (u[0] - nrm) * (u[0] + nrm)


def _circ(u, v):
    out = np.empty_like(u)
    out[0] = u @ v
    out[1:] = u[0] * v[1:] + v[0] * u[1:]
    return out


def _arrow(u):
    # matrix of v -> u o v
    m = u[0] * np.eye(u.size)
    m[0, 1:] = u[1:]
    m[1:, 0] = u[1:]
    return m


def _arrow_inv(u):
    det = _jdet(u)
    m = np.eye(u.size) / u[0]
    m[1:, 1:] += np.outer(u[1:], u[1:]) / (det * u[0])
    m[0, 0] = u[0] / det
    m[0, 1:] = -u[1:] / det
    m[1:, 0] = -u[1:] / det
    return m


def _max_step(u, du):
    """Largest ``a`` with ``u + a du`` in the cone (``u`` interior)."""
    a = _jdet(du)
    b = 2.0 * (u[0] * du[0] - u[1:] @ du[1:])
    c = _jdet(u)
    disc = b * b - 4.0 * a * c
    if a < 0 or (b < 0 and disc >= 0):
        return 2.0 * c / (-b + math.sqrt(max(disc, 0.0)))
    return math.inf


def _nt_scaling(s, z):
    """NT scaling matrices ``W``, ``W^-1`` with ``W z = W^-1 s``."""
    js, jz = _jdet(s), _jdet(z)
    if not (js > 0 and jz > 0 and s[0] > 0 and z[0] > 0):
        raise ValueError("iterate left the cone interior")
    sb = s / math.sqrt(js)
    zb = z / math.sqrt(jz)
    gamma = math.sqrt(0.5 * (1.0 + sb @ zb))
    jzb = zb.copy()
    jzb[1:] *= -1.0
    # u solves P(u) zb = sb with det(u) = 1; the scaling is P(sqrt(u))
    u = (sb + jzb) / (2.0 * gamma)
    wb = u.copy()
    wb[0] += 1.0
    wb /= math.sqrt(2.0 * (u[0] + 1.0))
    eta = (js / jz) ** 0.25
    jmat = -np.eye(s.size)
    jmat[0, 0] = 1.0
    w = eta * (2.0 * np.outer(wb, wb) - jmat)
    jwb = wb.copy()
    jwb[1:] *= -1.0
    winv = (2.0 * np.outer(jwb, jwb) - jmat) / eta
    return w, winv


@dataclass
class _Socp:
    g: np.ndarray
    h: np.ndarray
    c: np.ndarray
    slices: list = field(default_factory=list)
    active_common: bool = True


def _to_socp(qp: ConvexQcqp) -> tuple[_Socp, int]:
    n_x = qp.n_x
    # without coupling the common epigraph can grow freely, so the common
    # constraints never bind and are left out
    use_c = qp.uses_common_epigraph
    n_y = n_x + (2 if use_c else 1)
    rows_g, rows_h, slices = [], [], []
    start = 0
    for con in qp.constraints:
        if con.is_common and not use_c:
            continue
        ev, vec = np.linalg.eigh(con.q)
        top = max(ev.max(initial=0.0), 0.0)
        keep = ev > RANK_TOL * top if top > 0 else np.zeros_like(ev, dtype=bool)
        fac = np.sqrt(ev[keep])[:, None] * vec[:, keep].T
        r = fac.shape[0]
        lin = np.zeros(n_y)
        lin[:n_x] = con.b
        lin[n_x] = con.coupling[0]
        if use_c:
            lin[n_x + 1] = con.coupling[1]
        g = np.zeros((r + 2, n_y))
        h = np.zeros(r + 2)
        g[0] = lin / 2.0
        h[0] = (1.0 - con.d) / 2.0
        g[1:r + 1, :n_x] = -fac
        g[r + 1] = -lin / 2.0
        h[r + 1] = (1.0 + con.d) / 2.0
        rows_g.append(g)
        rows_h.append(h)
        slices.append(slice(start, start + r + 2))
        start += r + 2
    g = np.zeros((n_x + 1, n_y))
    g[1:, :n_x] = -np.eye(n_x)
    h = np.zeros(n_x + 1)
    h[0] = math.sqrt(qp.power_cap)
    rows_g.append(g)
    rows_h.append(h)
    slices.append(slice(start, start + n_x + 1))
    c = np.zeros(n_y)
    c[n_x] = 1.0
    return _Socp(np.vstack(rows_g), np.concatenate(rows_h), c, slices, use_c), n_y


def _feasible_start(qp: ConvexQcqp, n_y: int) -> np.ndarray:
    # P = 0 with epigraph variables comfortably above the constraint constants
    y = np.zeros(n_y)
    x0 = np.zeros(qp.n_x)
    xi, xi_c = qp.objective_at(x0)
    if n_y > qp.n_x + 1:
        xi_c += 1.0 + 0.1 * abs(xi_c)
        y[qp.n_x + 1] = xi_c
        xi = max(c.quad(x0) + c.coupling[1] * xi_c for c in qp.private)
    y[qp.n_x] = xi + 1.0 + 0.1 * abs(xi)
    return y


def _dual_start(qp: ConvexQcqp, socp: _Socp) -> np.ndarray:
    """Strictly dual-feasible ``z`` (``G'z + c = 0`` inside the cone).

    For a rotated cone ``z = (t + 2 lam, 0, t)`` contributes multiplier ``lam``
    to its quadratic constraint; the power cone absorbs the gradient terms.
    """
    cons = [c for c in qp.constraints if socp.active_common or not c.is_common]
    private = [c for c in cons if not c.is_common]
    common = [c for c in cons if c.is_common]
    lam_p = 1.0 / len(private)
    need = sum(c.coupling[1] for c in private) * lam_p
    lam_c = need / len(common) if common else 0.0
    z = np.zeros(socp.h.size)
    grad = np.zeros(qp.n_x)
    for con, sl in zip(cons, socp.slices):
        lam = lam_c if con.is_common else lam_p
        z[sl.start] = 3.0 * lam
        z[sl.stop - 1] = lam
        grad += lam * con.b
    sl = socp.slices[-1]
    z[sl.start + 1:sl.stop] = grad
    z[sl.start] = 2.0 * float(np.linalg.norm(grad)) + 1.0
    return z


def solve(qp: ConvexQcqp, tol: float = 1e-8, max_iter: int = 100,
          options: SolverOptions | None = None) -> SolverReport:
    """Minimize ``xi`` over the QCQP.

    The start is strictly feasible for both the primal and the dual, and the
    Newton steps keep the linear residuals at rounding level, so the returned
    point satisfies the constraints (up to rounding) whatever the status.
    """
    opts = options or SolverOptions(tol=tol, max_iter=max_iter)
    socp, n_y = _to_socp(qp)
    g, h, c, slices = socp.g, socp.h, socp.c, socp.slices
    n_cones = len(slices)
    y = _feasible_start(qp, n_y)
    s = h - g @ y
    z = _dual_start(qp, socp)
    hnorm = max(1.0, float(np.linalg.norm(h)))
    cnorm = max(1.0, float(np.linalg.norm(c)))

    status = SolverStatus.MAX_ITERATIONS
    it = 0
    pres = dres = gap = kkt = math.inf
    best = (math.inf, y.copy(), s.copy(), z.copy())
    for it in range(opts.max_iter + 1):
        r_x = g.T @ z + c
        r_z = g @ y + s - h
        gap = float(s @ z)
        pcost = float(c @ y)
        pres = float(np.linalg.norm(r_z)) / hnorm
        dres = float(np.linalg.norm(r_x)) / cnorm
        kkt = max(pres, dres, gap / (1.0 + abs(pcost)))
        if kkt < best[0]:
            best = (kkt, y.copy(), s.copy(), z.copy())
        if kkt <= opts.tol:
            status = SolverStatus.OPTIMAL
            break
        if it == opts.max_iter:
            break
        mu = gap / n_cones

        n_s = s.size
        w_full = np.zeros((n_s, n_s))
        winv_full = np.zeros((n_s, n_s))
        arw = np.zeros((n_s, n_s))      # lam o (.)
        arw_inv = np.zeros((n_s, n_s))  # its inverse
        try:
            for sl in slices:
                w, winv = _nt_scaling(s[sl], z[sl])
                w_full[sl, sl] = w
                winv_full[sl, sl] = winv
                lam_b = w @ z[sl]
                arw[sl, sl] = _arrow(lam_b)
                arw_inv[sl, sl] = _arrow_inv(lam_b)
            lam = w_full @ z
            gs = winv_full @ g  # W^-1 G
            chol = scipy.linalg.cho_factor(gs.T @ gs)
        except (ValueError, np.linalg.LinAlgError, ZeroDivisionError):
            status = SolverStatus.NUMERICAL_TROUBLE
            break

        def kkt_solve(rx, rz, rs):
            # G'dz = rx, G dy + ds = rz, lam o (W dz + W^-1 ds) = rs
            t = arw_inv @ rs
            # t = W dz + W^-1 ds;  W^-1 (rz - G dy) = t - W dz
            u = winv_full @ rz - t
            dy = scipy.linalg.cho_solve(chol, rx + gs.T @ u, check_finite=False)
            dz = winv_full @ (gs @ dy - u)
            ds = rz - g @ dy
            return dy, ds, dz

        def newton(rx, rz, rs):
            dy, ds, dz = kkt_solve(rx, rz, rs)
            for _ in range(2):
                e_x = rx - g.T @ dz
                e_z = rz - g @ dy - ds
                e_s = rs - arw @ (w_full @ dz + winv_full @ ds)
                cy, cs, cz = kkt_solve(e_x, e_z, e_s)
                dy, ds, dz = dy + cy, ds + cs, dz + cz
            return dy, ds, dz

        def step_len(ds, dz):
            a = math.inf
            for sl in slices:
                a = min(a, _max_step(s[sl], ds[sl]), _max_step(z[sl], dz[sl]))
            return a

        lamsq = arw @ lam
        dy_a, ds_a, dz_a = newton(-r_x, -r_z, -lamsq)
        alpha_a = min(1.0, step_len(ds_a, dz_a))
        sigma = (1.0 - alpha_a) ** 3
        corr = np.empty_like(s)
        wids_a, wdz_a = winv_full @ ds_a, w_full @ dz_a
        for sl in slices:
            corr[sl] = -lamsq[sl] - _circ(wids_a[sl], wdz_a[sl])
            corr[sl.start] += sigma * mu
        dy, ds, dz = newton(-r_x, -r_z, corr)
        if not (np.all(np.isfinite(dy)) and np.all(np.isfinite(dz))):
            status = SolverStatus.NUMERICAL_TROUBLE
            break
        alpha = min(1.0, opts.step_fraction * step_len(ds, dz))
        y = y + alpha * dy
        s = s + alpha * ds
        z = z + alpha * dz

    if status is not SolverStatus.OPTIMAL:
        kkt, y, s, z = best
    x = y[:qp.n_x]
    xi, xi_c = qp.objective_at(x)
    pre = None
    if qp.n_tx is not None and qp.n_users is not None:
        pre = real_to_precoder(x, qp.n_tx, qp.n_users, qp.has_common)
    return SolverReport(x=x, xi=xi, xi_common=xi_c if qp.common else math.nan, iterations=it,
                        kkt_residual=kkt, status=status, precoder=pre,
                        primal_residual=pres, dual_residual=dres, gap=gap)


def dump(qp: ConvexQcqp, fp: io.TextIOBase | None = None) -> str:
    """Self-describing text form of ``qp`` for cross-checking with other solvers.

    Layout: a ``dimension`` line, a ``power_cap`` line, then per constraint a
    ``constraint <i> <kind>`` header followed by ``Q`` (row-major), ``b``,
    ``d`` and ``coupling`` lines.  Variables are ``x`` then ``xi``, ``xi_c``.
    """
    out = io.StringIO()
    fmt = lambda arr: " ".join(repr(float(v)) for v in np.ravel(arr))  # noqa: E731
    out.write(f"dimension {qp.dimension}\n")
    out.write(f"n_x {qp.n_x}\n")
    out.write(f"power_cap {qp.power_cap!r}\n")
    out.write(f"constraints {len(qp.constraints)}\n")
    for i, con in enumerate(qp.constraints):
        out.write(f"constraint {i} {'common' if con.is_common else 'private'}\n")
        out.write(f"Q {fmt(con.q)}\n")
        out.write(f"b {fmt(con.b)}\n")
        out.write(f"d {con.d!r}\n")
        out.write(f"coupling {fmt(con.coupling)}\n")
    text = out.getvalue()
    if fp is not None:
        fp.write(text)
    return text


def load(text: str) -> ConvexQcqp:
    lines = iter(text.strip().splitlines())

    def field_(name):
        key, _, rest = next(lines).partition(" ")
        if key != name:
            raise ValueError(f"expected '{name}', got '{key}'")
        return rest

    field_("dimension")
    n_x = int(field_("n_x"))
    cap = float(field_("power_cap"))
    count = int(field_("constraints"))
    cons = []
    for _ in range(count):
        field_("constraint")
        q = np.array(field_("Q").split(), dtype=float).reshape(n_x, n_x)
        b = np.array(field_("b").split(), dtype=float)
        d = float(field_("d"))
        a = tuple(float(v) for v in field_("coupling").split())
        cons.append(QuadConstraint(q, b, d, a))
    return ConvexQcqp(n_x=n_x, constraints=tuple(cons), power_cap=cap)
