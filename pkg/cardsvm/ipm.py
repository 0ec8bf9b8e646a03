"""
Homogeneous self-dual interior-point engine for conic linear programs

    minimize    c'x
    subject to  G x + s = h,  A x = b,  s in K

where K is the product of a nonnegative orthant and second-order cones
{(t, u): t >= ||u||}. Directions use Nesterov-Todd scaling with a Mehrotra
predictor-corrector; infeasibility is read from the (tau, kappa) pair of the
embedding.
"""

import time, logging
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from .core import NumericalBreakdown

logger = logging.getLogger(__name__)

TINY = 1e-300

class ConeDims(object):

    def __init__(self, l, q=()):
        self.L = int(l)
        self.Q = [int(d) for d in q]
        if any(d < 2 for d in self.Q):
            raise ValueError("second-order cone blocks need dimension >= 2")
        self.Size = self.L + sum(self.Q)
        self.Degree = self.L + len(self.Q)
        groups = {}
        offset = self.L
        self.Offsets = []
        for d in self.Q:
            self.Offsets.append(offset)
            groups.setdefault(d, []).append(np.arange(offset, offset + d))
            offset += d
        # blocks of equal size are processed together: one (nblocks x d) index matrix per size
        self.Groups = [np.array(rows, dtype=int) for _, rows in sorted(groups.items())]

    def __str__(self):
        return f"ConeDims(l={self.L}, q={len(self.Q)} blocks, size={self.Size})"

#
# Jordan algebra of the cone
#

def identity(dims):
    e = np.zeros(dims.Size)
    e[:dims.L] = 1.0
    for idx in dims.Groups:
        e[idx[:, 0]] = 1.0
    return e

def violation(u, dims):
    """
    Largest amount by which u sits outside the cone (negative when u is interior).
    """
    v = -np.inf
    if dims.L:
        v = max(v, float(-np.min(u[:dims.L])))
    for idx in dims.Groups:
        U = u[idx]
        v = max(v, float(np.max(np.linalg.norm(U[:, 1:], axis=1) - U[:, 0])))
    return v

def jprod(u, v, dims):
    out = np.empty(dims.Size)
    l = dims.L
    out[:l] = u[:l] * v[:l]
    for idx in dims.Groups:
        U, V = u[idx], v[idx]
        o = np.empty_like(U)
        o[:, 0] = np.sum(U * V, axis=1)
        o[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        out[idx] = o
    return out

def jdiv(lam, v, dims):
    """
    Solves lam o u = v for u.
    """
    out = np.empty(dims.Size)
    l = dims.L
    out[:l] = v[:l] / lam[:l]
    for idx in dims.Groups:
        L, V = lam[idx], v[idx]
        l0 = L[:, 0]
        det = l0 * l0 - np.sum(L[:, 1:] ** 2, axis=1)
        u0 = (l0 * V[:, 0] - np.sum(L[:, 1:] * V[:, 1:], axis=1)) / det
        o = np.empty_like(V)
        o[:, 0] = u0
        o[:, 1:] = (V[:, 1:] - L[:, 1:] * u0[:, None]) / l0[:, None]
        out[idx] = o
    return out

def max_step(u, du, dims):
    """
    Largest alpha >= 0 with u + alpha*du in the cone (inf when unbounded).
    """
    alpha = np.inf
    l = dims.L
    if l:
        d = du[:l]
        neg = d < 0
        if np.any(neg):
            alpha = min(alpha, float(np.min(-u[:l][neg] / d[neg])))
    for idx in dims.Groups:
        U, D = u[idx], du[idx]
        a = D[:, 0] ** 2 - np.sum(D[:, 1:] ** 2, axis=1)
        b = U[:, 0] * D[:, 0] - np.sum(U[:, 1:] * D[:, 1:], axis=1)
        nu1 = np.linalg.norm(U[:, 1:], axis=1)
        c = np.maximum((U[:, 0] - nu1) * (U[:, 0] + nu1), 0.0)
        raw = b * b - a * c
        sq = np.sqrt(np.maximum(raw, 0.0))
        step = np.full(len(a), np.inf)
        # f(alpha) = a alpha^2 + 2 b alpha + c, first positive root
        first = (b <= 0) & ((a <= 0) | (raw >= 0))
        den = sq - b
        ok = first & (den > 0)
        step[ok] = c[ok] / den[ok]
        second = (b > 0) & (a < 0)
        step[second] = (b[second] + sq[second]) / (-a[second])
        if len(step):
            alpha = min(alpha, float(np.min(step)))
    return alpha

class Scaling(object):

    def __init__(self, s, z, dims):
        """
        Nesterov-Todd scaling W (symmetric) with W z = W^-1 s = Lambda.
        """
        self.Dims = dims
        l = dims.L
        self.D = np.sqrt(s[:l] / z[:l])
        self.Blocks = []
        for idx in dims.Groups:
            S, Z = s[idx], z[idx]
            ns1 = np.linalg.norm(S[:, 1:], axis=1)
            nz1 = np.linalg.norm(Z[:, 1:], axis=1)
            sn = np.sqrt(np.maximum((S[:, 0] - ns1) * (S[:, 0] + ns1), TINY))
            zn = np.sqrt(np.maximum((Z[:, 0] - nz1) * (Z[:, 0] + nz1), TINY))
            Sb = S / sn[:, None]
            Zb = Z / zn[:, None]
            gamma = np.sqrt(np.maximum((1.0 + np.sum(Sb * Zb, axis=1)) / 2.0, TINY))
            w = np.empty_like(Sb)
            w[:, 0] = Sb[:, 0] + Zb[:, 0]
            w[:, 1:] = Sb[:, 1:] - Zb[:, 1:]
            w /= (2.0 * gamma)[:, None]
            eta = np.sqrt(sn / zn)
            self.Blocks.append((idx, eta, w))
        self.Lambda = self.apply(z)

    def apply(self, v, inverse=False):
        out = np.empty(self.Dims.Size)
        l = self.Dims.L
        out[:l] = v[:l] / self.D if inverse else v[:l] * self.D
        sgn = -1.0 if inverse else 1.0
        for idx, eta, w in self.Blocks:
            V = v[idx]
            t = np.sum(w[:, 1:] * V[:, 1:], axis=1)
            o = np.empty_like(V)
            o[:, 0] = w[:, 0] * V[:, 0] + sgn * t
            o[:, 1:] = sgn * V[:, :1] * w[:, 1:] + V[:, 1:] + (t / (1.0 + w[:, 0]))[:, None] * w[:, 1:]
            o *= (1.0 / eta if inverse else eta)[:, None]
            out[idx] = o
        return out

    def apply_inv(self, v):
        return self.apply(v, inverse=True)

    @staticmethod
    def _blocks(w, inverse):
        nb, d = w.shape
        sgn = -1.0 if inverse else 1.0
        M = np.zeros((nb, d, d))
        M[:, 0, 0] = w[:, 0]
        M[:, 0, 1:] = sgn * w[:, 1:]
        M[:, 1:, 0] = sgn * w[:, 1:]
        M[:, 1:, 1:] = np.eye(d - 1)[None, :, :] + w[:, 1:, None] * w[:, None, 1:] / (1.0 + w[:, 0])[:, None, None]
        return M

    def inverse_matrix(self):
        """
        W^-1 as a sparse block-diagonal matrix.
        """
        n = self.Dims.Size
        l = self.Dims.L
        rows = [np.arange(l)]
        cols = [np.arange(l)]
        vals = [1.0 / self.D]
        for idx, eta, w in self.Blocks:
            M = self._blocks(w, True) / eta[:, None, None]
            d = idx.shape[1]
            rows.append(np.repeat(idx[:, :, None], d, axis=2).ravel())
            cols.append(np.repeat(idx[:, None, :], d, axis=1).ravel())
            vals.append(M.ravel())
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


class KKTSolver(object):

    Retries = 4

    def __init__(self, G, A, reg=1e-10, refine=5):
        """
        Solves [[0, A', G'], [A, 0, 0], [G, 0, -W^2]] [x; y; z] = [r1; r2; r3] through the scaled
        quasi-definite system

            [[d I, A',   Gs'],    [x ]   [r1         ]
             [A,   -d I, 0  ],  * [y ] = [r2         ]
             [Gs,  0,    -I ]]    [zs]   [W^-1 r3    ]

        with Gs = W^-1 G and zs = W z, factored by sparse LU. The static regularization d is
        removed by iterative refinement against the unregularized system.
        """
        self.G = sp.csr_matrix(G)
        self.A = sp.csr_matrix(A)
        self.AT = self.A.T.tocsr()
        self.N = self.G.shape[1]
        self.P = self.A.shape[0]
        self.M = self.G.shape[0]
        self.Reg = reg
        self.Refine = refine
        self.Winv = self.Gs = self.GsT = self.LU = None

    def _matrix(self, reg):
        N, P, M = self.N, self.P, self.M
        top = [reg * sp.identity(N, format="csc")]
        if P:
            top.append(self.AT)
        if M:
            top.append(self.GsT)
        grid = [top]
        if P:
            row = [self.A, -reg * sp.identity(P, format="csc")]
            if M:
                row.append(None)
            grid.append(row)
        if M:
            row = [self.Gs]
            if P:
                row.append(None)
            row.append(-sp.identity(M, format="csc"))
            grid.append(row)
        return sp.bmat(grid, format="csc")

    def factor(self, W=None):
        """
        :param Scaling W: current scaling, None for the identity
        """
        self.Winv = sp.identity(self.M, format="csr") if W is None else W.inverse_matrix()
        self.Gs = (self.Winv @ self.G).tocsr()
        self.GsT = self.Gs.T.tocsr()
        reg = self.Reg
        for attempt in range(self.Retries):
            try:
                K = self._matrix(reg)
                lu = splu(K)
                if not np.all(np.isfinite(lu.U.data)):
                    raise RuntimeError("non-finite factor")
                self.LU = lu
                self.RegUsed = reg
                return
            except (RuntimeError, ValueError) as e:
                logger.debug("KKT factorization failed with regularization %g: %s", reg, e)
                reg *= 100.0
        raise NumericalBreakdown("KKT system factorization failed after regularization retries", reg=reg)

    def _split(self, u):
        N, P = self.N, self.P
        return u[:N], u[N:N + P], u[N + P:]

    def solve(self, r1, r2, r3, r3_scaled=None):
        """
        :param r3_scaled: optional term added to W^-1 r3 (already in scaled coordinates)
        :return: x, y, z and the scaled zs = W z
        """
        t = self.Winv @ r3
        if r3_scaled is not None:
            t = t + r3_scaled
        rhs = np.concatenate([r1, r2, t])
        u = self.LU.solve(rhs)
        size = 1.0 + float(np.max(np.abs(rhs))) if len(rhs) else 1.0
        for _ in range(self.Refine):
            x, y, zs = self._split(u)
            e = np.concatenate([
                r1 - (self.AT @ y + self.GsT @ zs),
                r2 - self.A @ x,
                t - (self.Gs @ x - zs)])
            err = float(np.max(np.abs(e))) if len(e) else 0.0
            if not np.isfinite(err):
                raise NumericalBreakdown("non-finite KKT residual")
            if err <= 1e-14 * size:
                break
            u = u + self.LU.solve(e)
        x, y, zs = self._split(u)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(zs))):
            raise NumericalBreakdown("non-finite KKT solution")
        return x, y, self.Winv @ zs, zs


class IPMResult(object):

    def __init__(self, status, x, s, y, z, tau, kappa, iterations, pcost, dcost, pres, dres, gap,
                    certificate=None, elapsed=0.0):
        self.Status = status
        self.X, self.S, self.Y, self.Z = x, s, y, z
        self.Tau, self.Kappa = tau, kappa
        self.Iterations = iterations
        self.PCost, self.DCost = pcost, dcost
        self.PRes, self.DRes, self.Gap = pres, dres, gap
        self.Certificate = certificate
        self.Elapsed = elapsed

    def __str__(self):
        return f"IPMResult({self.Status}, it={self.Iterations}, pcost={self.PCost:.10g}, dcost={self.DCost:.10g}, " \
            f"pres={self.PRes:.2e}, dres={self.DRes:.2e}, gap={self.Gap:.2e})"

def _shift(u, dims, e):
    a = violation(u, dims)
    if a >= 0:
        u = u + (1.0 + a) * e
    return u

def conelp(c, G, h, A, b, dims, tol=1e-8, max_iter=200, time_limit=None, start=None, reg=1e-10):
    """
    Solves the conic program with the homogeneous self-dual embedding.

    :param c: cost vector (N)
    :param G: sparse cone constraint matrix (dims.Size x N)
    :param h: cone right-hand side
    :param A: sparse equality matrix (p x N)
    :param b: equality right-hand side
    :param ConeDims dims: cone structure of the rows of G
    :param float tol: feasibility, gap and certificate tolerance
    :param int max_iter: iteration limit
    :param time_limit: seconds, or None
    :param start: optional primal point x used instead of the default initialization
    :return: IPMResult with status one of "optimal", "primal_infeasible", "dual_infeasible",
        "iter_limit", "time_limit", "stalled"
    """
    t0 = time.monotonic()
    c = np.asarray(c, dtype=float)
    h = np.asarray(h, dtype=float)
    b = np.asarray(b, dtype=float)
    N = len(c)
    kkt = KKTSolver(G, A, reg)
    G, A = kkt.G, kkt.A
    e = identity(dims)
    m = dims.Size

    kkt.factor()
    if start is None:
        x, _, r, _ = kkt.solve(np.zeros(N), b, h)
        s = _shift(-r, dims, e)
        _, y, z, _ = kkt.solve(-c, np.zeros(len(b)), np.zeros(m))
        z = _shift(z, dims, e)
    else:
        x = np.array(start, dtype=float)
        s = _shift(h - G @ x, dims, e)
        _, y, z, _ = kkt.solve(-c, np.zeros(len(b)), np.zeros(m))
        z = _shift(z, dims, e)
    tau = kappa = 1.0

    nb = max(1.0, np.linalg.norm(b))
    nh = max(1.0, np.linalg.norm(h))
    nc = max(1.0, np.linalg.norm(c))
    status = "iter_limit"
    certificate = None
    pcost = dcost = pres = dres = gap = np.inf
    it = 0
    for it in range(max_iter + 1):
        ATy, GTz = A.T @ y, G.T @ z
        rx = -(ATy + GTz + c * tau)
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        cx, by, hz = float(c @ x), float(b @ y), float(h @ z)
        rt = kappa + cx + by + hz
        sz = float(s @ z)
        mu = (sz + tau * kappa) / (dims.Degree + 1)

        pcost = cx / tau
        dcost = -(by + hz) / tau
        pres = max(np.linalg.norm(ry) / nb, np.linalg.norm(rz) / nh) / tau
        dres = np.linalg.norm(rx) / nc / tau
        gap = sz / tau ** 2
        logger.debug("ipm %3d pcost=% .10e dcost=% .10e gap=%.2e pres=%.2e dres=%.2e tau=%.2e kappa=%.2e",
            it, pcost, dcost, gap, pres, dres, tau, kappa)

        if pres <= tol and dres <= tol and gap <= tol * (1.0 + abs(pcost)) \
                and abs(pcost - dcost) <= tol * (1.0 + abs(pcost)):
            status = "optimal"
            break
        if hz + by < 0:
            ray = np.linalg.norm(ATy + GTz) / (-(hz + by))
            if ray <= tol:
                status = "primal_infeasible"
                certificate = ray
                break
        if cx < 0:
            ray = max(np.linalg.norm(A @ x) / nb, np.linalg.norm(G @ x + s) / nh) / (-cx)
            if ray <= tol:
                status = "dual_infeasible"
                certificate = ray
                break
        if it == max_iter:
            break
        if time_limit is not None and time.monotonic() - t0 > time_limit:
            status = "time_limit"
            break

        W = Scaling(s, z, dims)
        lam = W.Lambda
        kkt.factor(W)
        x1, y1, z1, zs1 = kkt.solve(-c, b, h)
        den = float(c @ x1 + b @ y1 + h @ z1) - kappa / tau

        def direction(sigma, ds_rhs, dtk):
            # ds_rhs is the right-hand side of lam o (W^-1 ds + W dz); scaled steps are returned too
            f = 1.0 - sigma
            lam_ds = jdiv(lam, ds_rhs, dims)
            x2, y2, z2, zs2 = kkt.solve(f * rx, -f * ry, -f * rz, -lam_ds)
            num = -f * rt - dtk / tau - float(c @ x2 + b @ y2 + h @ z2)
            dtau = num / den
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            dzs = zs2 + dtau * zs1
            dss = lam_ds - dzs
            ds = W.apply(dss)
            dkappa = (dtk - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa, dss, dzs

        def step(ds, dz, dtau, dkappa):
            a = min(max_step(s, ds, dims), max_step(z, dz, dims))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        lam2 = jprod(lam, lam, dims)
        dx, dy, dz, ds, dtau, dkappa, dss, dzs = direction(0.0, -lam2, -tau * kappa)
        alpha_aff = min(1.0, step(ds, dz, dtau, dkappa))
        sigma = min(1.0, max(0.0, (1.0 - alpha_aff) ** 3))

        # corrector
        corr = jprod(dss, dzs, dims)
        ds_rhs = -lam2 - corr + sigma * mu * e
        dtk = -tau * kappa - dtau * dkappa + sigma * mu
        dx, dy, dz, ds, dtau, dkappa, _, _ = direction(sigma, ds_rhs, dtk)
        alpha = min(1.0, 0.99 * step(ds, dz, dtau, dkappa))
        if not alpha > 1e-12:
            logger.debug("ipm stalled at iteration %d (step %.2e)", it, alpha)
            status = "stalled"
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    elapsed = time.monotonic() - t0
    if status == "primal_infeasible":
        scale = -(hz + by)
        return IPMResult(status, x, s, y / scale, z / scale, tau, kappa, it, pcost, dcost, pres, dres, gap,
            certificate, elapsed)
    if status == "dual_infeasible":
        scale = -cx
        return IPMResult(status, x / scale, s / scale, y, z, tau, kappa, it, pcost, dcost, pres, dres, gap,
            certificate, elapsed)
    return IPMResult(status, x / tau, s / tau, y / tau, z / tau, tau, kappa, it, pcost, dcost, pres, dres, gap,
        certificate, elapsed)
