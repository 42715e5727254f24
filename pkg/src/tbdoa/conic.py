"""Block-structured second-order cone programs.

Problems of the form

    minimize t
    subject to  local cones:   each touches one block of variables
                               (x_b plus auxiliaries owned by block b) and
                               optionally the shared variable t,
                coupling rows:  sum of auxiliaries across blocks − c·t ≤ h.

This is the shape of the minimax interpolation designs: one block per
virtual output, l1 norms across outputs give the coupling rows. The
interior-point method is a primal-dual path-following scheme with
Nesterov-Todd scaling and a Mehrotra corrector. Its Newton systems are
solved by per-block Cholesky, a Woodbury correction for the coupling rows
and a scalar bordering step for t, so the cost grows linearly with the
number of cones instead of going through a generic sparse factorization.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve

RADIUS_CONST, RADIUS_T, RADIUS_AUX = 0, 1, 2
_TINY = np.finfo(float).tiny
log = logging.getLogger(__name__)


@dataclass
class _Group:
    """Cones of one dimension d local to blocks.

    Row j of cone k is ``coef[k, j] · x_block + rcoef[k, j] · r_k`` and the
    cone constraint is ``h[k] − row ∈ K``.
    """
    dim: int
    block: list = field(default_factory=list)
    coef: list = field(default_factory=list)
    rcoef: list = field(default_factory=list)
    rkind: list = field(default_factory=list)
    ridx: list = field(default_factory=list)
    h: list = field(default_factory=list)

    def cat(self):
        if not self.block:
            return None
        return (np.concatenate(self.block), np.concatenate(self.coef), np.concatenate(self.rcoef),
                np.concatenate(self.rkind), np.concatenate(self.ridx), np.concatenate(self.h))


class BlockSocp:
    """Builder and solver for block-structured problems (see module doc)."""

    def __init__(self, nblocks: int, block_dim: int):
        self.nb, self.bd = nblocks, block_dim
        self.nx = nblocks * block_dim
        self.t = self.nx
        self.nvar = self.nx + 1
        self.aux_block: list = []
        self.soc = _Group(3)
        self.lin = _Group(1)
        self.coupling: list = []  # (aux index array, t coefficient, h)

    def add_aux(self, blocks) -> np.ndarray:
        blocks = np.asarray(blocks, int)
        idx = np.arange(self.nvar, self.nvar + blocks.size)
        self.nvar += blocks.size
        self.aux_block.append(blocks)
        return idx

    def _add(self, grp, block, coef, rcoef, rkind, ridx, h):
        n = len(block)
        grp.block.append(np.asarray(block, int))
        grp.coef.append(np.asarray(coef, float).reshape(n, grp.dim, self.bd))
        grp.rcoef.append(np.asarray(rcoef, float).reshape(n, grp.dim))
        grp.rkind.append(np.broadcast_to(np.asarray(rkind, int), (n,)).copy())
        grp.ridx.append(np.broadcast_to(np.asarray(ridx, int), (n,)).copy())
        grp.h.append(np.asarray(h, float).reshape(n, grp.dim))

    def add_modulus(self, block, coef_re, coef_im, target, radius_kind, radius):
        """|coef·x_block − target| ≤ radius as 3-dim cones.

        ``coef_re``/``coef_im`` are (n, block_dim) real rows giving the real
        and imaginary part of the modulus argument. ``radius`` is a constant
        value (RADIUS_CONST) or a variable index (RADIUS_T / RADIUS_AUX).
        """
        n = len(block)
        coef = np.zeros((n, 3, self.bd))
        coef[:, 1], coef[:, 2] = coef_re, coef_im
        h = np.zeros((n, 3))
        h[:, 1], h[:, 2] = target.real, target.imag
        rcoef = np.zeros((n, 3))
        radius = np.broadcast_to(np.asarray(radius, float), (n,))
        if radius_kind == RADIUS_CONST:
            h[:, 0] = radius
            ridx = np.zeros(n, int)
        else:
            rcoef[:, 0] = -1.0
            ridx = radius.astype(int)
        # s = h − G x = (r, target − coef·x)
        self._add(self.soc, block, coef, rcoef, radius_kind, ridx, h)

    def add_linear(self, block, coef, rcoef, radius_kind, ridx, h):
        """coef·x_block + rcoef·r ≤ h for rows local to one block."""
        self._add(self.lin, block, coef, rcoef, radius_kind, ridx, h)

    def add_coupling(self, aux_rows, t_coef, h):
        """Σ_j aux_rows[i, j] − t_coef[i]·t ≤ h[i]."""
        aux_rows = np.atleast_2d(np.asarray(aux_rows, int))
        n = aux_rows.shape[0]
        self.coupling.append((aux_rows, np.broadcast_to(np.asarray(t_coef, float), (n,)).copy(),
                              np.broadcast_to(np.asarray(h, float), (n,)).copy()))

    # ----------------------------------------------------------- assembly

    def _finalize(self):
        self.aux_of_block = (np.concatenate(self.aux_block) if self.aux_block
                             else np.zeros(0, int))
        self.G_soc = self.soc.cat()
        self.G_lin = self.lin.cat()
        if self.coupling:
            rows = [c[0] for c in self.coupling]
            width = max(r.shape[1] for r in rows)
            if any(r.shape[1] != width for r in rows):
                raise ValueError("coupling rows must have equal width")
            self.cp_aux = np.concatenate(rows)
            self.cp_t = np.concatenate([c[1] for c in self.coupling])
            self.cp_h = np.concatenate([c[2] for c in self.coupling])
        else:
            self.cp_aux = np.zeros((0, 0), int)
            self.cp_t = self.cp_h = np.zeros(0)
        self.nlin = 0 if self.G_lin is None else self.G_lin[0].size
        self.ncp = self.cp_h.size
        self.nsoc = 0 if self.G_soc is None else self.G_soc[0].size
        # local variable sets: block b owns x_b and its auxiliaries
        self.local = []
        for b in range(self.nb):
            aux = self.nx + 1 + np.nonzero(self.aux_of_block == b)[0]
            self.local.append(np.r_[np.arange(b * self.bd, (b + 1) * self.bd), aux])
        self.pos_in_block = np.full(self.nvar, -1)
        for b, loc in enumerate(self.local):
            self.pos_in_block[loc] = np.arange(loc.size)
        self.G = self._sparse_G()

    def _group_triplets(self, grp, row0):
        block, coef, rcoef, rkind, ridx, h = grp
        n, d, bd = coef.shape
        rows = row0 + np.arange(n * d).reshape(n, d)
        cols = block[:, None] * bd + np.arange(bd)[None, :]
        r = [np.repeat(rows.ravel(), bd)]
        c = [np.broadcast_to(cols[:, None, :], (n, d, bd)).ravel()]
        v = [coef.ravel()]
        var = np.where(rkind == RADIUS_T, self.t, ridx)
        has = rkind != RADIUS_CONST
        rr = np.broadcast_to(rows, (n, d))[has]
        r.append(rr.ravel())
        c.append(np.repeat(var[has], d))
        v.append(rcoef[has].ravel())
        return r, c, v, h.ravel()

    def _sparse_G(self):
        r, c, v, hs = [], [], [], []
        row = 0
        if self.G_lin is not None:
            rr, cc, vv, h = self._group_triplets(self.G_lin, row)
            r += rr; c += cc; v += vv; hs.append(h)
            row += self.nlin
        if self.ncp:
            k = self.cp_aux.shape[1]
            r.append(np.repeat(row + np.arange(self.ncp), k))
            c.append(self.cp_aux.ravel())
            v.append(np.ones(self.cp_aux.size))
            nz = self.cp_t != 0
            r.append(row + np.nonzero(nz)[0])
            c.append(np.full(nz.sum(), self.t))
            v.append(-self.cp_t[nz])
            hs.append(self.cp_h)
            row += self.ncp
        if self.G_soc is not None:
            rr, cc, vv, h = self._group_triplets(self.G_soc, row)
            r += rr; c += cc; v += vv; hs.append(h)
            row += 3 * self.nsoc
        self.h = np.concatenate(hs)
        self.nrows = row
        G = sparse.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                              shape=(row, self.nvar))
        G.sum_duplicates()
        G.eliminate_zeros()
        return G

    # ------------------------------------------------------------- Newton

    def _block_selections(self):
        self._sel = {}
        for name, grp in (("lin", self.G_lin), ("soc", self.G_soc)):
            if grp is None:
                continue
            block, _, _, rkind, ridx, _ = grp
            per = []
            for b in range(self.nb):
                sel = np.nonzero(block == b)[0]
                kinds = rkind[sel]
                aux = kinds == RADIUS_AUX
                per.append((sel, aux, self.pos_in_block[ridx[sel][aux]], kinds == RADIUS_T))
            self._sel[name] = per
        if self.ncp:
            self._U = sparse.csr_matrix(
                (np.ones(self.cp_aux.size),
                 (self.cp_aux.ravel(), np.repeat(np.arange(self.ncp), self.cp_aux.shape[1]))),
                shape=(self.nvar, self.ncp)).toarray()

    def _kkt(self, d_lin, winv, wmat):
        """Factor GᵀW⁻²G for a scaling; return a solver.

        ``d_lin`` is the diagonal scaling of the linear rows, ``winv`` and
        ``wmat`` the 3×3 blocks of W⁻¹ and W for the cones.

        The solver maps (bx, bz) to (ux, uz) with Gᵀuz = bx and
        G ux − W²uz = bz.
        """
        nl = self.nlin + self.ncp
        di = 1.0 / d_lin
        nb, bd, nvar = self.nb, self.bd, self.nvar
        Kb = [np.zeros((loc.size, loc.size)) for loc in self.local]
        cT = np.zeros(nvar)  # coupling of every variable with t
        htt = 0.0

        def accumulate(grp, scale, per):
            nonlocal htt
            _, coef, rcoef, _, _, _ = grp
            # scaled rows: B = S·coef (n, d, bd), w = S·rcoef (n, d)
            if scale.ndim == 3:
                B = np.einsum("kij,kjl->kil", scale, coef)
                w = np.einsum("kij,kj->ki", scale, rcoef)
            else:
                B = scale[:, :, None] * coef
                w = scale * rcoef
            for b, (sel, aux, p, tt) in enumerate(per):
                if sel.size == 0:
                    continue
                Bs = B[sel]
                Bb = Bs.reshape(-1, bd)
                K = Kb[b]
                K[:bd, :bd] += Bb.T @ Bb
                wb = w[sel]
                if p.size:
                    cross = np.einsum("kil,ki->kl", Bs[aux], wb[aux])
                    np.add.at(K, (slice(0, bd), p), cross.T)
                    np.add.at(K, (p, slice(0, bd)), cross)
                    np.add.at(K, (p, p), np.sum(wb[aux] ** 2, axis=1))
                if tt.any():
                    cT[b * bd:(b + 1) * bd] += np.einsum("kil,ki->l", Bs[tt], wb[tt])
                    htt += float(np.sum(wb[tt] ** 2))

        if self.G_lin is not None:
            accumulate(self.G_lin, di[:self.nlin, None], self._sel["lin"])
        if self.nsoc:
            accumulate(self.G_soc, winv, self._sel["soc"])

        # coupling rows: weight di² on (1 on aux, −c on t)
        dcp = di[self.nlin:] ** 2
        if self.ncp:
            np.add.at(cT, self.cp_aux.ravel(), np.repeat(-self.cp_t * dcp, self.cp_aux.shape[1]))
            htt += float(np.sum(self.cp_t ** 2 * dcp))
        chol = []
        for K in Kb:
            K[np.diag_indices_from(K)] += 1e-14 * max(1.0, np.abs(K).max())
            chol.append(cho_factor(K, lower=True, check_finite=False))

        def kinv(vec):
            out = np.zeros_like(vec)
            for b, loc in enumerate(self.local):
                out[loc] = cho_solve(chol[b], vec[loc], check_finite=False)
            return out

        # Woodbury for the coupling rows: K + U D Uᵀ
        if self.ncp:
            U = self._U
            KU = kinv(U)
            capf = cho_factor(np.diag(1.0 / dcp) + U.T @ KU, lower=True, check_finite=False)

        def alinv(vec):
            y = kinv(vec)
            if self.ncp:
                y = y - KU @ cho_solve(capf, U.T @ y, check_finite=False)
            return y

        cL = cT.copy()
        cL[self.t] = 0.0
        ac = alinv(cL)
        schur = htt - cL @ ac
        schur = schur if schur > 0 else max(abs(htt), 1.0) * 1e-16

        def solve_h(rhs):
            r_l = rhs.copy()
            r_l[self.t] = 0.0
            y = alinv(r_l)
            ut = (rhs[self.t] - cL @ y) / schur
            ux = y - ac * ut
            ux[self.t] = ut
            return ux

        Gm = self.G

        def winv_apply(z):
            out = np.empty_like(z)
            out[:nl] = di * z[:nl]
            if self.nsoc:
                out[nl:] = np.einsum("kij,kj->ki", winv, z[nl:].reshape(-1, 3)).ravel()
            return out

        def wmul2(u):
            out = np.empty_like(u)
            out[:nl] = d_lin ** 2 * u[:nl]
            if self.nsoc:
                uq = u[nl:].reshape(-1, 3)
                out[nl:] = np.einsum("kij,kj->ki", wmat, np.einsum("kij,kj->ki", wmat, uq)).ravel()
            return out

        def hmul(u):
            # GᵀW⁻²G u from the assembled blocks
            ul = u.copy()
            ul[self.t] = 0.0
            out = np.zeros_like(u)
            for b, loc in enumerate(self.local):
                out[loc] = Kb[b] @ u[loc]
            if self.ncp:
                out += U @ (dcp * (U.T @ ul))
            out += cL * u[self.t]
            out[self.t] = cL @ ul + htt * u[self.t]
            return out

        def reduced(bx, bz):
            rhs = bx + Gm.T @ winv_apply(winv_apply(bz))
            ux = solve_h(rhs)
            # the bordering step for t cancels badly near the optimum
            scale = np.abs(rhs).max()
            for _ in range(self.refine):
                r = rhs - hmul(ux)
                if np.abs(r).max() <= 1e-13 * scale:
                    break
                ux += solve_h(r)
            return ux, winv_apply(winv_apply(Gm @ ux - bz))

        def solve(bx, bz):
            ux, uz = reduced(bx, bz)
            scale = max(np.abs(bx).max(), np.abs(bz).max())
            for _ in range(2):
                rx = bx - Gm.T @ uz
                rz = bz - (Gm @ ux - wmul2(uz))
                if max(np.abs(rx).max(), np.abs(rz).max()) <= 1e-13 * scale:
                    break
                cx, cz = reduced(rx, rz)
                ux += cx
                uz += cz
            return ux, uz

        return solve

    # ------------------------------------------------------- cone algebra

    def _split(self, u):
        nl = self.nlin + self.ncp
        return u[:nl], u[nl:].reshape(-1, 3)

    def _min_eig(self, u):
        ul, uq = self._split(u)
        vals = [ul] if ul.size else []
        if uq.size:
            vals.append(uq[:, 0] - np.linalg.norm(uq[:, 1:], axis=1))
        return min(float(v.min()) for v in vals)

    def _identity(self):
        e = np.zeros(self.nrows)
        nl = self.nlin + self.ncp
        e[:nl] = 1.0
        e[nl::3] = 1.0
        return e

    def _max_step(self, u, d):
        """Largest α with u + αd in the cone (u interior), capped at 1e10."""
        ul, uq = self._split(u)
        dl, dq = self._split(d)
        inv = 0.0
        if ul.size:
            inv = max(inv, float(np.max(-dl / np.maximum(ul, _TINY))))
        if uq.size:
            r = np.linalg.norm(uq[:, 1:], axis=1)
            nrm = np.sqrt(np.maximum((uq[:, 0] - r) * (uq[:, 0] + r), _TINY))
            ub = uq / nrm[:, None]
            rho0 = (ub[:, 0] * dq[:, 0] - np.sum(ub[:, 1:] * dq[:, 1:], axis=1)) / nrm
            fac = (rho0 + dq[:, 0] / nrm) / (ub[:, 0] + 1.0)
            rho1 = dq[:, 1:] / nrm[:, None] - fac[:, None] * ub[:, 1:]
            inv = max(inv, float(np.max(np.linalg.norm(rho1, axis=1) - rho0)))
        return 1.0 / inv if inv > 1e-10 else 1e10

    def _scaling(self, s, z):
        """Nesterov-Todd scaling: returns (d_lin, W, W⁻¹, λ) with λ = Wz = W⁻¹s."""
        sl, sq = self._split(s)
        zl, zq = self._split(z)
        sl, zl = np.maximum(sl, _TINY), np.maximum(zl, _TINY)
        d_lin = np.sqrt(sl / zl)
        lam_l = np.sqrt(sl * zl)
        if not sq.size:
            return d_lin, np.zeros((0, 3, 3)), np.zeros((0, 3, 3)), lam_l

        def jnorm(u):
            r = np.linalg.norm(u[:, 1:], axis=1)
            return np.sqrt(np.maximum((u[:, 0] - r) * (u[:, 0] + r), _TINY))

        sn, zn = jnorm(sq), jnorm(zq)
        sb, zb = sq / sn[:, None], zq / zn[:, None]
        gam = np.sqrt((1.0 + np.sum(sb * zb, axis=1)) / 2.0)
        jz = zb * np.array([1.0, -1.0, -1.0])
        wb = (sb + jz) / (2 * gam[:, None])
        beta = np.sqrt(sn / zn)
        v = wb.copy()
        v[:, 0] += 1.0
        v /= np.sqrt(2 * (wb[:, 0] + 1.0))[:, None]
        J = np.array([1.0, -1.0, -1.0])
        outer = 2 * v[:, :, None] * v[:, None, :]
        W = beta[:, None, None] * (outer - np.diag(J)[None])
        jv = v * J
        Winv = (2 * jv[:, :, None] * jv[:, None, :] - np.diag(J)[None]) / beta[:, None, None]
        lam_q = np.einsum("kij,kj->ki", W, zq)
        return d_lin, W, Winv, np.r_[lam_l, lam_q.ravel()]

    def _jprod(self, u, v):
        ul, uq = self._split(u)
        vl, vq = self._split(v)
        out_q = np.empty_like(uq)
        out_q[:, 0] = np.sum(uq * vq, axis=1)
        out_q[:, 1:] = uq[:, :1] * vq[:, 1:] + vq[:, :1] * uq[:, 1:]
        return np.r_[ul * vl, out_q.ravel()]

    def _jdiv(self, u, d):
        """w with u∘w = d."""
        ul, uq = self._split(u)
        dl, dq = self._split(d)
        out_q = np.empty_like(uq)
        det = uq[:, 0] ** 2 - np.sum(uq[:, 1:] ** 2, axis=1)
        w0 = (uq[:, 0] * dq[:, 0] - np.sum(uq[:, 1:] * dq[:, 1:], axis=1)) / det
        out_q[:, 0] = w0
        out_q[:, 1:] = (dq[:, 1:] - w0[:, None] * uq[:, 1:]) / uq[:, :1]
        return np.r_[dl / ul, out_q.ravel()]

    def _wmul(self, d_lin, W, u):
        ul, uq = self._split(u)
        return np.r_[d_lin * ul, np.einsum("kij,kj->ki", W, uq).ravel()]

    # -------------------------------------------------------------- solve

    def solve(self, abstol=1e-8, reltol=1e-7, feastol=1e-8, max_iters=80, refine=6,
              inaccurate_tol=1e-5):
        """Primal-dual interior-point method for min t s.t. Gx + s = h, s ⪰ 0.

        Returns ``(x, t, status, info)`` with status "optimal",
        "infeasible" (a primal infeasibility certificate was found),
        "inaccurate" (the best iterate meets ``inaccurate_tol`` only) or
        "unknown".
        """
        self.refine = refine
        self._finalize()
        self._block_selections()
        G, h = self.G, self.h
        n, m = self.nvar, self.nrows
        degree = self.nlin + self.ncp + self.nsoc
        c = np.zeros(n)
        c[self.t] = 1.0
        e = self._identity()
        ones_l = np.ones(self.nlin + self.ncp)
        eye_q = np.broadcast_to(np.eye(3), (self.nsoc, 3, 3))

        # start: least-squares x, minimum-norm dual z, both shifted into the cone
        kkt = self._kkt(ones_l, eye_q, eye_q)
        x, _ = kkt(G.T @ h, np.zeros(m))
        s = h - G @ x
        _, z = kkt(-c, np.zeros(m))
        for u in (s, z):
            lo = self._min_eig(u)
            if lo <= 1e-8 * max(1.0, np.abs(u).max()):
                u += (1.0 + max(0.0, -lo)) * e

        hn, cn = max(1.0, np.linalg.norm(h)), 1.0
        status, info = "unknown", {}
        best = (np.inf, x, {})
        for it in range(max_iters + 1):
            rx = c + G.T @ z
            rz = s + G @ x - h
            gap = float(s @ z)
            pcost, dcost = float(c @ x), float(-h @ z)
            pres = np.linalg.norm(rz) / hn
            dres = np.linalg.norm(rx) / cn
            relgap = gap / abs(pcost) if abs(pcost) > 0 else np.inf
            info = dict(iterations=it, pcost=pcost, dcost=dcost, gap=gap, pres=pres, dres=dres)
            log.debug("it %2d pcost %.9g dcost %.9g gap %.2e pres %.2e dres %.2e", it, pcost, dcost, gap, pres, dres)
            if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
                status = "optimal"
                break
            merit = max(pres, dres, min(gap, relgap))
            if np.isfinite(merit) and merit < best[0]:
                best = (merit, x.copy(), dict(info))
            elif not np.isfinite(merit) or (best[0] < 1e-4 and merit > 1e3 * best[0]):
                break  # numerical breakdown near the solution
            hz = float(h @ z)
            if hz < 0 and np.linalg.norm(G.T @ z) / -hz <= feastol:
                status = "infeasible"
                break
            if it == max_iters:
                break

            try:
                # overflow here is caught by the finiteness check below
                with np.errstate(over="ignore", invalid="ignore"):
                    d_lin, W, Winv, lam = self._scaling(s, z)
                    kkt = self._kkt(d_lin, Winv, W)
                    mu = gap / degree

                    def direction(ds):
                        # λ∘(W dz + W⁻¹ ds) = ds_target, G dx + ds = −rz, Gᵀdz = −rx
                        lds = self._jdiv(lam, ds)
                        dx, dz = kkt(-rx, -rz - self._wmul(d_lin, W, lds))
                        wdz = self._wmul(d_lin, W, dz)
                        dsv = self._wmul(d_lin, W, lds - wdz)
                        return dx, dsv, dz, lds - wdz, wdz

                    dx, dsv, dz, sa, za = direction(-self._jprod(lam, lam))
                    alpha = min(1.0, self._max_step(s, dsv), self._max_step(z, dz))
                    sigma = (1.0 - alpha) ** 3
                    dx, dsv, dz, _, _ = direction(-self._jprod(lam, lam) - self._jprod(sa, za)
                                                  + sigma * mu * e)
                    alpha = min(1.0, 0.99 * min(self._max_step(s, dsv), self._max_step(z, dz)))
            except np.linalg.LinAlgError:
                break  # KKT system lost definiteness; fall back to the best iterate
            if not (np.isfinite(alpha) and np.all(np.isfinite(dx)) and np.all(np.isfinite(dz))):
                break
            x = x + alpha * dx
            s = s + alpha * dsv
            z = z + alpha * dz
        if status == "unknown" and best[0] <= inaccurate_tol:
            status, x, info = "inaccurate", best[1], best[2]
        info["status"] = status
        return x, float(x[self.t]), status, info
