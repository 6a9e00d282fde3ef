"""Primal-dual interior-point solver for linear objectives under linear
equalities, variable boxes and rotated second-order cones.

Internally the problem is put in the standard form

    minimize  c'x   s.t.  A x = b,  G x + s = h,  s in K

with K a product of the nonnegative orthant (finite box bounds) and
second-order cones.  A rotated cone ||u||^2 <= a b, a, b >= 0 is the
second-order cone  (a + b, a - b, 2u).  Boxes with equal bounds become
equality rows.  Iterations follow Mehrotra's predictor-corrector scheme with
Nesterov-Todd scaling and a dense factorization of the reduced KKT system.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"


@dataclass(frozen=True)
class RotatedCone:
    """||x[u]||^2 <= x[a] * x[b], x[a] >= 0, x[b] >= 0."""

    u: tuple
    a: int
    b: int

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(int(i) for i in self.u))
        idx = self.u + (self.a, self.b)
        if len(set(idx)) != len(idx):
            raise ValueError(f"cone indices must be distinct: {idx}")

    def standard_rows(self, x) -> np.ndarray:
        """(a + b, a - b, 2u): membership in the standard second-order cone."""
        x = np.asarray(x)
        return np.concatenate([[x[self.a] + x[self.b], x[self.a] - x[self.b]], 2 * x[list(self.u)]])

    def violation(self, x) -> float:
        r = self.standard_rows(x)
        return max(0.0, float(np.linalg.norm(r[1:]) - r[0]))


@dataclass(frozen=True, eq=False)
class ConeProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: tuple = ()
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        n = c.size
        A = np.array(self.A, dtype=float).reshape(-1, n)
        b = np.array(self.b, dtype=float).reshape(-1)
        lo = np.full(n, -math.inf) if self.lower is None else np.array(self.lower, dtype=float)
        up = np.full(n, math.inf) if self.upper is None else np.array(self.upper, dtype=float)
        if A.shape[0] != b.size or lo.shape != (n,) or up.shape != (n,):
            raise ValueError("inconsistent problem dimensions")
        if np.any(np.isnan(lo)) or np.any(np.isnan(up)) or not np.all(np.isfinite(c)):
            raise ValueError("objective and bounds must not contain NaN")
        cones = tuple(self.cones)
        for k in cones:
            if max(k.u + (k.a, k.b)) >= n or min(k.u + (k.a, k.b)) < 0:
                raise ValueError(f"cone {k} indexes outside 0..{n - 1}")
        for name, arr in (("c", c), ("A", A), ("b", b), ("lower", lo), ("upper", up)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "cones", cones)

    @property
    def n(self) -> int:
        return self.c.size

    def to_dict(self) -> dict:
        rows, cols = np.nonzero(self.A)

        def enc(v):
            return [None if math.isinf(t) else float(t) for t in v]

        return {
            "n": self.n,
            "c": self.c.tolist(),
            "A": {"shape": list(self.A.shape), "rows": rows.tolist(), "cols": cols.tolist(),
                  "vals": self.A[rows, cols].tolist()},
            "b": self.b.tolist(),
            "cones": [{"u": list(k.u), "a": k.a, "b": k.b} for k in self.cones],
            "lower": enc(self.lower),
            "upper": enc(self.upper),
        }

    def dumps(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "ConeProblem":
        A = np.zeros(d["A"]["shape"])
        A[d["A"]["rows"], d["A"]["cols"]] = d["A"]["vals"]
        lo = [-math.inf if t is None else t for t in d["lower"]]
        up = [math.inf if t is None else t for t in d["upper"]]
        cones = [RotatedCone(k["u"], k["a"], k["b"]) for k in d["cones"]]
        return cls(d["c"], A, d["b"], cones, lo, up)


@dataclass(frozen=True)
class KktResiduals:
    primal: float
    dual: float
    gap: float
    primal_objective: float
    dual_objective: float

    @property
    def max(self) -> float:
        return max(self.primal, self.dual, self.gap)


@dataclass(frozen=True, eq=False)
class ConeSolution:
    x: np.ndarray
    y: np.ndarray  # equality multipliers
    z_cone: tuple  # per cone, standard-form multipliers (z0, z1, z_u)
    z_lower: np.ndarray
    z_upper: np.ndarray
    objective: float
    status: str
    residuals: KktResiduals
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def dual_objective(self) -> float:
        return self.residuals.dual_objective


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 100
    step: float = 0.99
    refine: int = 3
    reg: float = 1e-13


def kkt_residuals(p: ConeProblem, sol: ConeSolution) -> KktResiduals:
    """Primal/dual feasibility and duality gap recomputed from the problem data."""
    x, y = sol.x, sol.y
    lo, up = p.lower, p.upper
    fin_lo, fin_up = np.isfinite(lo), np.isfinite(up)
    prim = [np.abs(p.A @ x - p.b).max(initial=0.0)]
    prim.append(np.max(np.where(fin_lo, lo - x, 0.0), initial=0.0))
    prim.append(np.max(np.where(fin_up, x - up, 0.0), initial=0.0))
    prim.extend(k.violation(x) for k in p.cones)

    grad = p.c + p.A.T @ y - sol.z_lower + sol.z_upper
    dual_obj = -p.b @ y + np.sum(np.where(fin_lo, lo, 0.0) * sol.z_lower) - np.sum(np.where(fin_up, up, 0.0) * sol.z_upper)
    dviol = [0.0, -sol.z_lower.min(initial=0.0), -sol.z_upper.min(initial=0.0)]
    # multipliers attached to infinite bounds must vanish
    dviol.append(np.abs(sol.z_lower[~fin_lo]).max(initial=0.0))
    dviol.append(np.abs(sol.z_upper[~fin_up]).max(initial=0.0))
    for k, zk in zip(p.cones, sol.z_cone):
        grad[k.a] -= zk[0] + zk[1]
        grad[k.b] -= zk[0] - zk[1]
        grad[list(k.u)] -= 2 * zk[2:]
        dviol.append(max(0.0, float(np.linalg.norm(zk[1:]) - zk[0])))
    pobj = float(p.c @ x)
    return KktResiduals(
        primal=float(max(prim)),
        dual=float(max(np.abs(grad).max(initial=0.0), max(dviol))),
        gap=abs(pobj - float(dual_obj)),
        primal_objective=pobj,
        dual_objective=float(dual_obj),
    )


# ---------------------------------------------------------------------------
# cone algebra on K = R^l_+ x Q^{q_1} x ... x Q^{q_k}


class _Cone:
    def __init__(self, l: int, q: list):
        self.l = l
        self.q = list(q)
        self.slices = []
        off = l
        for d in self.q:
            self.slices.append(slice(off, off + d))
            off += d
        self.dim = off
        self.degree = l + len(self.q)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.l] = 1.0
        for sl in self.slices:
            e[sl.start] = 1.0
        return e

    def interior_margin(self, s) -> float:
        """Largest t with s - t e on the cone boundary (negative if s is outside)."""
        vals = [s[: self.l].min(initial=math.inf)]
        vals += [s[sl][0] - np.linalg.norm(s[sl][1:]) for sl in self.slices]
        return float(min(vals)) if vals else math.inf

    def violation(self, s) -> float:
        return max(0.0, -self.interior_margin(s)) if self.dim else 0.0

    def product(self, u, v) -> np.ndarray:
        out = np.empty(self.dim)
        out[: self.l] = u[: self.l] * v[: self.l]
        for sl in self.slices:
            a, b = u[sl], v[sl]
            out[sl.start] = a @ b
            out[sl.start + 1: sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        return out

    def divide(self, lam, r) -> np.ndarray:
        """x with lam o x = r."""
        out = np.empty(self.dim)
        out[: self.l] = r[: self.l] / lam[: self.l]
        for sl in self.slices:
            a, b = lam[sl], r[sl]
            x0 = (a[0] * b[0] - a[1:] @ b[1:]) / (a[0] ** 2 - a[1:] @ a[1:])
            out[sl.start] = x0
            out[sl.start + 1: sl.stop] = (b[1:] - x0 * a[1:]) / a[0]
        return out

    def max_step(self, x, d) -> float:
        """Largest alpha with x + alpha d in the cone (inf if unbounded)."""
        alpha = math.inf
        xl, dl = x[: self.l], d[: self.l]
        neg = dl < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-xl[neg] / dl[neg])))
        for sl in self.slices:
            xs, ds = x[sl], d[sl]
            a = ds[0] ** 2 - ds[1:] @ ds[1:]
            b = xs[0] * ds[0] - xs[1:] @ ds[1:]
            c = max(xs[0] ** 2 - xs[1:] @ xs[1:], 0.0)
            disc = b * b - a * c
            if a < 0 or (b < 0 and disc >= 0):
                alpha = min(alpha, c / (-b + math.sqrt(max(disc, 0.0))))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling W (symmetric) with lambda = W z = W^{-1} s."""

    def __init__(self, cone: _Cone, s, z):
        self.cone = cone
        self.d = np.sqrt(s[: cone.l] / z[: cone.l])
        self.blocks = []
        self.inv_blocks = []
        for sl in cone.slices:
            ss, zz = s[sl], z[sl]
            sn = math.sqrt(ss[0] ** 2 - ss[1:] @ ss[1:])
            zn = math.sqrt(zz[0] ** 2 - zz[1:] @ zz[1:])
            sb, zb = ss / sn, zz / zn
            gamma = math.sqrt((1.0 + sb @ zb) / 2.0)
            w = sb.copy()
            w[0] += zb[0]
            w[1:] -= zb[1:]
            w /= 2.0 * gamma
            beta = math.sqrt(sn / zn)
            k = ss.size
            M = np.empty((k, k))
            M[0, 0] = w[0]
            M[0, 1:] = w[1:]
            M[1:, 0] = w[1:]
            M[1:, 1:] = np.eye(k - 1) + np.outer(w[1:], w[1:]) / (1.0 + w[0])
            Minv = M.copy()
            Minv[0, 1:] *= -1
            Minv[1:, 0] *= -1
            self.blocks.append(beta * M)
            self.inv_blocks.append(Minv / beta)

    def _apply(self, v, diag, blocks):
        out = np.empty_like(v)
        l = self.cone.l
        if v.ndim == 1:
            out[:l] = diag * v[:l]
        else:
            out[:l] = diag[:, None] * v[:l]
        for sl, B in zip(self.cone.slices, blocks):
            out[sl] = B @ v[sl]
        return out

    def mul(self, v):
        return self._apply(v, self.d, self.blocks)

    def inv(self, v):
        return self._apply(v, 1.0 / self.d, self.inv_blocks)


# ---------------------------------------------------------------------------
# solver


class _Standard:
    """Standard-form data plus maps back to the user's problem."""

    def __init__(self, p: ConeProblem):
        n = p.n
        lo, up = p.lower, p.upper
        if np.any(lo > up):
            self.bad_box = int(np.flatnonzero(lo > up)[0])
        else:
            self.bad_box = None
        fixed = np.flatnonzero(np.isfinite(lo) & (lo == up))
        free_lo = np.flatnonzero(np.isfinite(lo) & (lo != up))
        free_up = np.flatnonzero(np.isfinite(up) & (lo != up))
        E = np.zeros((fixed.size, n))
        E[np.arange(fixed.size), fixed] = 1.0
        self.A = np.vstack([p.A, E])
        self.b = np.concatenate([p.b, lo[fixed]])
        self.n_user_eq = p.A.shape[0]
        self.fixed, self.free_lo, self.free_up = fixed, free_lo, free_up
        l = free_lo.size + free_up.size
        dims = [2 + len(k.u) for k in p.cones]
        G = np.zeros((l + sum(dims), n))
        h = np.zeros(l + sum(dims))
        G[np.arange(free_lo.size), free_lo] = -1.0
        h[: free_lo.size] = -lo[free_lo]
        r = free_lo.size
        G[r + np.arange(free_up.size), free_up] = 1.0
        h[r: l] = up[free_up]
        self.cone = _Cone(l, dims)
        for k, sl in zip(p.cones, self.cone.slices):
            i = sl.start
            G[i, k.a] -= 1.0
            G[i, k.b] -= 1.0
            G[i + 1, k.a] -= 1.0
            G[i + 1, k.b] += 1.0
            G[i + 2 + np.arange(len(k.u)), list(k.u)] = -2.0
        self.G, self.h, self.c = G, h, p.c

    def unpack(self, p: ConeProblem, x, y, z):
        n = p.n
        w = y[self.n_user_eq:]
        zl = np.zeros(n)
        zu = np.zeros(n)
        zl[self.free_lo] = z[: self.free_lo.size]
        zu[self.free_up] = z[self.free_lo.size: self.cone.l]
        zu[self.fixed] += np.maximum(w, 0.0)
        zl[self.fixed] += np.maximum(-w, 0.0)
        zc = tuple(z[sl].copy() for sl in self.cone.slices)
        return zl, zu, zc

    def residuals(self, x, y, z):
        pobj = float(self.c @ x)
        dobj = float(-self.b @ y - self.h @ z)
        pres = max(np.abs(self.A @ x - self.b).max(initial=0.0), self.cone.violation(self.h - self.G @ x))
        dres = max(np.abs(self.c + self.A.T @ y + self.G.T @ z).max(initial=0.0), self.cone.violation(z))
        return pres, dres, abs(pobj - dobj), pobj, dobj


def _kkt_solver(A, Gs, reg, refine):
    """Factor [[Gs'Gs, A'], [A, 0]] (with a tiny regularization) and return a
    solver for the augmented system [[0, A', Gs'], [A, 0, 0], [Gs, 0, -I]]."""
    n, p = Gs.shape[1], A.shape[0]
    H = Gs.T @ Gs
    K = np.zeros((n + p, n + p))
    K[:n, :n] = H + reg * np.eye(n)
    K[:n, n:] = A.T
    K[n:, :n] = A
    K[n:, n:] = -reg * np.eye(p)
    lu = sla.lu_factor(K, check_finite=True)

    def solve(rx, ry, rz):
        def reduced(bx, by, bz):
            sol = sla.lu_solve(lu, np.concatenate([bx + Gs.T @ bz, by]))
            dx, dy = sol[:n], sol[n:]
            return dx, dy, Gs @ dx - bz

        dx, dy, dz = reduced(rx, ry, rz)
        for _ in range(refine):
            ex = rx - (A.T @ dy + Gs.T @ dz)
            ey = ry - A @ dx
            ez = rz - (Gs @ dx - dz)
            if max(np.abs(ex).max(initial=0), np.abs(ey).max(initial=0), np.abs(ez).max(initial=0)) == 0:
                break
            cx, cy, cz = reduced(ex, ey, ez)
            dx, dy, dz = dx + cx, dy + cy, dz + cz
        return dx, dy, dz

    return solve


def solve(p: ConeProblem, opts: SolverOptions = None) -> ConeSolution:
    opts = opts or SolverOptions()
    st = _Standard(p)
    cone = st.cone
    A, b, G, h, c = st.A, st.b, st.G, st.h, st.c
    n, m = p.n, cone.dim

    def finish(x, y, z, status, it, **info):
        zl, zu, zc = st.unpack(p, x, y, z)
        pres, dres, gap, pobj, dobj = st.residuals(x, y, z)
        res = KktResiduals(pres, dres, gap, pobj, dobj)
        return ConeSolution(x=x, y=y[: st.n_user_eq].copy(), z_cone=zc, z_lower=zl, z_upper=zu,
                            objective=pobj, status=status, residuals=res, iterations=it, info=info)

    if st.bad_box is not None:
        x0 = np.zeros(n)
        return finish(x0, np.zeros(A.shape[0]), np.zeros(m), INFEASIBLE, 0,
                      reason=f"lower bound exceeds upper bound on variable {st.bad_box}")

    # initial point: least-squares primal and dual, pushed into the cone interior
    try:
        kkt = _kkt_solver(A, G, opts.reg, opts.refine)
    except (np.linalg.LinAlgError, ValueError) as exc:
        return finish(np.zeros(n), np.zeros(A.shape[0]), np.zeros(m), MAX_ITER, 0, failure=str(exc))
    x, _, sx = kkt(np.zeros(n), b, h)
    s = -sx
    u, y, z = kkt(-c, np.zeros(A.shape[0]), np.zeros(m))
    e = cone.identity()
    if m:
        ts = cone.interior_margin(s)
        if ts <= 0:
            s = s + (1.0 - ts) * e
        tz = cone.interior_margin(z)
        if tz <= 0:
            z = z + (1.0 - tz) * e

    status = MAX_ITER
    info = {}
    it = 0
    for it in range(opts.max_iter + 1):
        pres, dres, gap, pobj, dobj = st.residuals(x, y, z)
        if pres <= opts.feas_tol and dres <= opts.feas_tol and gap <= opts.gap_tol * max(1.0, min(abs(pobj), abs(dobj))):
            status = OPTIMAL
            break
        # certificate of primal infeasibility: A'y + G'z ~ 0, z in K, -b'y - h'z > 0
        if dobj > 0:
            cert = max(np.abs(A.T @ y + G.T @ z).max(initial=0.0), cone.violation(z))
            if cert <= opts.feas_tol * dobj:
                status = INFEASIBLE
                info["certificate"] = {"dual_ray_norm": cert / dobj}
                break
        if it == opts.max_iter or m == 0:
            break
        try:
            W = _Scaling(cone, s, z)
            lam = W.mul(z)
            kkt = _kkt_solver(A, W.inv(G), opts.reg, opts.refine)
        except (np.linalg.LinAlgError, ValueError, ZeroDivisionError) as exc:
            info["failure"] = f"KKT factorization failed: {exc}"
            break
        rx = c + A.T @ y + G.T @ z
        ry = A @ x - b
        rz = G @ x + s - h
        mu = (s @ z) / cone.degree

        def step(bs):
            dx, dy, dzh = kkt(-rx, -ry, -W.inv(rz) - bs)
            return dx, dy, W.inv(dzh), W.mul(bs - dzh)

        dx, dy, dz, ds = step(-lam)
        a_aff = min(1.0, cone.max_step(s, ds), cone.max_step(z, dz))
        sigma = (1.0 - a_aff) ** 3
        corr = cone.product(W.inv(ds), W.mul(dz))
        target = -cone.product(lam, lam) - corr + sigma * mu * e
        dx, dy, dz, ds = step(cone.divide(lam, target))
        alpha = min(1.0, opts.step * cone.max_step(s, ds), opts.step * cone.max_step(z, dz))
        if not np.all(np.isfinite(dx)) or not np.all(np.isfinite(dz)):
            info["failure"] = "non-finite search direction"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
    return finish(x, y, z, status, it, **info)
