"""Self-contained LP / branch-and-bound engine.

The LP core is a bounded-variable revised simplex with an explicit dense
basis inverse.  Cold solves run a two-phase primal simplex (artificial
variables only on rows whose slack cannot start feasible); branch-and-bound
re-solves child nodes with a dual simplex warm-started from the parent basis,
since children differ from their parent only in variable bounds.  Anti-cycling
falls back to Bland's rule after a run of degenerate pivots.

Branch and bound is best-first on the LP bound, branches the most fractional
binary, and when that binary belongs to a detected SOS1 row (sum of binaries
equal to one) it branches the whole group at once.  A rounding dive provides
early incumbents.  `brute_force_milp` enumerates binary assignments as an
independent test oracle.
"""

from __future__ import annotations

import heapq
import itertools
import re
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .timeseries import fmt_float

_NAME_RE = re.compile(r"^[^\s*:;]+$")


class Status(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass
class SolverSettings:
    """Numerical tolerances and caps, centralized."""

    feas_tol: float = 1e-7
    opt_tol: float = 1e-7
    int_tol: float = 1e-6
    pivot_tol: float = 1e-9
    max_iter: int = 50_000
    max_nodes: int = 100_000
    rel_gap: float = 1e-6
    prune_abs: float = 1e-9
    refactor_every: int = 120
    degen_limit: int = 40
    dive_every: int = 10
    dual_max_iter: int = 3000


DEFAULT_SETTINGS = SolverSettings()


class _NumericalTrouble(RuntimeError):
    pass


@dataclass
class Solution:
    status: Status
    objective: float = np.nan
    x: np.ndarray | None = None
    mip_gap: float = 0.0
    node_count: int = 0
    iterations: int = 0
    wall_time: float = 0.0

    def value(self, lp: "LinearProgram", name: str) -> float:
        if self.x is None:
            raise ValueError("solution carries no assignment")
        return float(self.x[lp.var_index(name)])


class LinearProgram:
    """Minimization LP/MILP: bounded variables (some binary), sparse rows."""

    def __init__(self, name: str = "lp"):
        self.name = name
        self.var_names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.obj: dict[int, float] = {}
        self.rows: list[list[tuple[int, float]]] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self._index: dict[str, int] = {}

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def var_index(self, name: str) -> int:
        return self._index[name]

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf,
                binary: bool = False) -> int:
        if not _NAME_RE.match(name):
            raise ValueError(f"bad variable name {name!r}")
        if name in self._index:
            raise ValueError(f"duplicate variable name {name!r}")
        if lb > ub:
            raise ValueError(f"variable {name}: lower bound {lb} exceeds upper {ub}")
        if binary and (lb < 0.0 or ub > 1.0):
            raise ValueError(f"binary variable {name} must have bounds within [0, 1]")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        self._index[name] = idx
        return idx

    def add_con(self, coeffs, sense: str, rhs: float, name: str = None) -> int:
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad constraint sense {sense!r}")
        merged: dict[int, float] = {}
        for idx, coef in coeffs:
            if not (0 <= idx < self.n_vars):
                raise ValueError(f"constraint references unknown variable index {idx}")
            merged[idx] = merged.get(idx, 0.0) + float(coef)
        if not merged:
            raise ValueError("constraint must reference at least one variable")
        row_id = len(self.rows)
        if name is None:
            name = f"c{row_id}"
        if not _NAME_RE.match(name):
            raise ValueError(f"bad constraint name {name!r}")
        self.rows.append(sorted(merged.items()))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name)
        return row_id

    def set_objective(self, coeffs) -> None:
        merged: dict[int, float] = {}
        for idx, coef in coeffs:
            if not (0 <= idx < self.n_vars):
                raise ValueError(f"objective references unknown variable index {idx}")
            merged[idx] = merged.get(idx, 0.0) + float(coef)
        self.obj = merged

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for idx, coef in self.obj.items():
            c[idx] = coef
        return c

    def matrix(self) -> sp.csc_matrix:
        data, ri, ci = [], [], []
        for i, row in enumerate(self.rows):
            for j, coef in row:
                ri.append(i)
                ci.append(j)
                data.append(coef)
        return sp.csc_matrix((data, (ri, ci)), shape=(self.n_rows, self.n_vars))

    def check_solution(self, x: np.ndarray) -> float:
        """Largest absolute constraint/bound violation of an assignment."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        worst = max(worst, float(np.max(np.asarray(self.lb) - x, initial=0.0)))
        worst = max(worst, float(np.max(x - np.asarray(self.ub), initial=0.0)))
        ax = self.matrix() @ x
        for i, sense in enumerate(self.senses):
            r = float(ax[i] - self.rhs[i])
            if sense == "<=":
                worst = max(worst, r)
            elif sense == ">=":
                worst = max(worst, -r)
            else:
                worst = max(worst, abs(r))
        return worst

    # -- textual dump ------------------------------------------------------

    def to_lp_text(self) -> str:
        """Human-readable dump.  Grammar, one item per line:

            lp <name>
            minimize
            <coef>*<var> + <coef>*<var> + ...      (or the literal 0)
            subject to
            <row name>: <terms> <sense> <rhs>      (sense is <=, >= or ==)
            bounds
            <var>: <lb> <ub>
            binaries
            <var> <var> ...                        (section may be empty)
            end

        Floats are written with repr so the dump round-trips exactly.
        """
        out = [f"lp {self.name}", "minimize"]
        if self.obj:
            out.append(" + ".join(
                f"{fmt_float(c)}*{self.var_names[j]}"
                for j, c in sorted(self.obj.items())))
        else:
            out.append("0")
        out.append("subject to")
        for i, row in enumerate(self.rows):
            terms = " + ".join(f"{fmt_float(c)}*{self.var_names[j]}" for j, c in row)
            out.append(f"{self.row_names[i]}: {terms} {self.senses[i]} {fmt_float(self.rhs[i])}")
        out.append("bounds")
        for j, name in enumerate(self.var_names):
            out.append(f"{name}: {fmt_float(self.lb[j])} {fmt_float(self.ub[j])}")
        out.append("binaries")
        out.append(" ".join(self.var_names[j] for j in range(self.n_vars)
                            if self.binary[j]))
        out.append("end")
        return "\n".join(out) + "\n"

    @classmethod
    def from_lp_text(cls, text: str) -> "LinearProgram":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines or not lines[0].startswith("lp"):
            raise ValueError("dump must start with an 'lp <name>' line")
        lp = cls(name=lines[0][2:].strip() or "lp")
        sections: dict[str, list[str]] = {}
        current = None
        for ln in lines[1:]:
            if ln in ("minimize", "subject to", "bounds", "binaries", "end"):
                current = ln
                sections.setdefault(current, [])
                continue
            if current is None:
                raise ValueError(f"unexpected line before any section: {ln!r}")
            sections[current].append(ln)
        for required in ("minimize", "subject to", "bounds", "end"):
            if required not in sections:
                raise ValueError(f"dump is missing the '{required}' section")

        def parse_terms(part: str) -> list[tuple[str, float]]:
            if part.strip() == "0":
                return []
            out = []
            for term in part.split(" + "):
                coef, _, name = term.partition("*")
                out.append((name.strip(), float(coef)))
            return out

        bin_names: set[str] = set()
        for ln in sections.get("binaries", []):
            bin_names.update(ln.split())
        for ln in sections["bounds"]:
            name, _, rest = ln.partition(":")
            lo, hi = rest.split()
            lp.add_var(name.strip(), float(lo), float(hi),
                       binary=name.strip() in bin_names)
        obj_terms = parse_terms(" + ".join(sections["minimize"]))
        lp.set_objective([(lp.var_index(n), c) for n, c in obj_terms])
        for ln in sections["subject to"]:
            name, _, rest = ln.partition(":")
            m = re.search(r"\s(<=|>=|==)\s", rest)
            if not m:
                raise ValueError(f"constraint line without sense: {ln!r}")
            terms = parse_terms(rest[: m.start()])
            rhs = float(rest[m.end():])
            lp.add_con([(lp.var_index(n), c) for n, c in terms],
                       m.group(1), rhs, name=name.strip())
        return lp


def detect_sos1_groups(lp: LinearProgram) -> list[list[int]]:
    """Rows of the form sum(z_i) == 1 over binaries: each is an SOS1 group.

    A binary participating in several such rows is assigned to the first;
    grouping only guides branching, so skipping a row is always safe.
    """
    groups: list[list[int]] = []
    taken: set[int] = set()
    for i, row in enumerate(lp.rows):
        if lp.senses[i] != "==" or lp.rhs[i] != 1.0 or len(row) < 2:
            continue
        if all(coef == 1.0 and lp.binary[j] for j, coef in row):
            members = [j for j, _ in row]
            if any(j in taken for j in members):
                continue
            groups.append(members)
            taken.update(members)
    return groups


# ---------------------------------------------------------------------------
# simplex workspace
# ---------------------------------------------------------------------------

_AT_LB = 0
_AT_UB = 1
_BASIC = 2
_FREE = 3
_FIXED = 4


class _Workspace:
    """Equality-form data shared by all solves of one LinearProgram.

    Columns are the structural variables followed by one slack per row
    (coefficient +1).  Artificial variables are virtual: a basis entry of
    -(i+1) stands for the artificial of row i whose column is
    art_sign[i] * e_i.  Artificials never re-enter once they leave.
    """

    def __init__(self, lp: LinearProgram, settings: SolverSettings):
        self.lp = lp
        self.st = settings
        self.n = lp.n_vars
        self.m = lp.n_rows
        n, m = self.n, self.m

        a = lp.matrix()
        self.A = sp.hstack([a, sp.identity(m, format="csc")], format="csc")
        self.At = self.A.T.tocsr()
        self.b = np.asarray(lp.rhs, dtype=float)

        self.base_lb = np.empty(n + m)
        self.base_ub = np.empty(n + m)
        self.base_lb[:n] = lp.lb
        self.base_ub[:n] = lp.ub
        for i, sense in enumerate(lp.senses):
            if sense == "<=":
                self.base_lb[n + i], self.base_ub[n + i] = 0.0, np.inf
            elif sense == ">=":
                self.base_lb[n + i], self.base_ub[n + i] = -np.inf, 0.0
            else:
                self.base_lb[n + i], self.base_ub[n + i] = 0.0, 0.0

        self.cost = np.zeros(n + m)
        for j, coef in lp.obj.items():
            self.cost[j] = coef

        # mutable per-solve state
        self.lb = self.base_lb.copy()
        self.ub = self.base_ub.copy()
        self.status = np.zeros(n + m, dtype=np.int8)
        self.x_val = np.zeros(n + m)
        self.basis = np.zeros(m, dtype=np.int64)
        self.art_sign = np.ones(m)
        self.art_fixed = np.zeros(m, dtype=bool)
        self.binv = np.eye(m)
        self.x_b = np.zeros(m)
        # per-row caches of the bounds/costs of the basic variables
        self.b_lo = np.zeros(m)
        self.b_hi = np.zeros(m)
        self.cb = np.zeros(m)
        self._phase1 = False
        self.iterations = 0

    # -- bounds / values ---------------------------------------------------

    def set_bounds(self, fixes=None) -> None:
        self.lb[:] = self.base_lb
        self.ub[:] = self.base_ub
        if fixes:
            for j, lo, hi in fixes:
                self.lb[j] = lo
                self.ub[j] = hi

    def _refresh_nonbasic_values(self) -> None:
        s = self.status
        at_lo = (s == _AT_LB) | (s == _FIXED)
        at_hi = s == _AT_UB
        vals = np.where(at_lo, self.lb, np.where(at_hi, self.ub, 0.0))
        nb = s != _BASIC
        self.x_val[nb] = vals[nb]

    def _sync_row(self, r: int) -> None:
        e = self.basis[r]
        if e >= 0:
            self.b_lo[r], self.b_hi[r] = self.lb[e], self.ub[e]
            self.cb[r] = 0.0 if self._phase1 else self.cost[e]
        else:
            i = -e - 1
            self.b_lo[r] = 0.0
            self.b_hi[r] = 0.0 if self.art_fixed[i] else np.inf
            self.cb[r] = 1.0 if self._phase1 else 0.0

    def _sync_all_rows(self) -> None:
        for r in range(self.m):
            self._sync_row(r)

    def _column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        a = self.A
        s, e = a.indptr[j], a.indptr[j + 1]
        return a.indices[s:e], a.data[s:e]

    def _binv_col(self, j: int) -> np.ndarray:
        idx, vals = self._column(j)
        return self.binv[:, idx] @ vals

    def refactor(self) -> None:
        m = self.m
        bmat = np.zeros((m, m))
        for r, e in enumerate(self.basis):
            if e >= 0:
                idx, vals = self._column(e)
                bmat[idx, r] = vals
            else:
                i = -e - 1
                bmat[i, r] = self.art_sign[i]
        try:
            self.binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError as exc:
            raise _NumericalTrouble("singular basis") from exc
        self.recompute_x_b()

    def recompute_x_b(self) -> None:
        xnb = np.where(self.status == _BASIC, 0.0, self.x_val)
        r = self.b - self.A @ xnb
        self.x_b = self.binv @ r

    def _pivot_update(self, r: int, w: np.ndarray) -> None:
        br = self.binv[r] / w[r]
        self.binv -= np.outer(w, br)
        self.binv[r] = br

    def _price(self) -> np.ndarray:
        y = self.cb @ self.binv
        if self._phase1:
            return -(self.At @ y)
        return self.cost - self.At @ y

    # -- primal simplex ----------------------------------------------------

    def crash_basis(self) -> None:
        """Slack basis where the slack starts feasible, artificials elsewhere."""
        n, m = self.n, self.m
        lo, hi = self.lb, self.ub
        fixed = lo == hi
        has_lo = np.isfinite(lo)
        has_hi = np.isfinite(hi)
        self.status[:] = np.where(
            fixed, _FIXED,
            np.where(has_lo, _AT_LB, np.where(has_hi, _AT_UB, _FREE)))
        self._refresh_nonbasic_values()

        resid = self.b - self.A[:, :n] @ self.x_val[:n]
        self.art_fixed[:] = False
        tol = self.st.feas_tol
        for i in range(m):
            sj = n + i
            if lo[sj] - tol <= resid[i] <= hi[sj] + tol:
                self.basis[i] = sj
                self.status[sj] = _BASIC
            else:
                self.basis[i] = -(i + 1)
                self.art_sign[i] = 1.0 if resid[i] >= 0 else -1.0
        self.refactor()

    def _phase1_infeasibility(self) -> float:
        total = 0.0
        for r, e in enumerate(self.basis):
            if e < 0:
                total += abs(self.x_b[r])
        return total

    def primal(self) -> Status:
        st = self.st
        self._sync_all_rows()
        degen = 0
        bland = False
        while True:
            if self.iterations >= st.max_iter:
                return Status.ITERATION_LIMIT
            rc = self._price()
            can_up = ((self.status == _AT_LB) | (self.status == _FREE)) & (rc < -st.opt_tol)
            can_dn = ((self.status == _AT_UB) | (self.status == _FREE)) & (rc > st.opt_tol)
            viol = np.where(can_up, -rc, 0.0) + np.where(can_dn, rc, 0.0)
            if not np.any(viol > 0.0):
                return Status.OPTIMAL
            if bland:
                j = int(np.nonzero(viol > 0.0)[0][0])
            else:
                j = int(np.argmax(viol))
            d = 1.0 if can_up[j] else -1.0
            w = self._binv_col(j)

            g = d * w
            with np.errstate(divide="ignore", invalid="ignore"):
                t_dn = np.where(g > st.pivot_tol,
                                (self.x_b - self.b_lo) / g, np.inf)
                t_up = np.where(g < -st.pivot_tol,
                                (self.b_hi - self.x_b) / (-g), np.inf)
            t_rows = np.minimum(np.maximum(t_dn, 0.0), np.maximum(t_up, 0.0))
            t_rows = np.where(np.isnan(t_rows), np.inf, t_rows)
            r_best = int(np.argmin(t_rows))
            t_basic = t_rows[r_best]
            span = self.ub[j] - self.lb[j]
            t_flip = span if np.isfinite(span) else np.inf
            t = min(t_basic, t_flip)

            if not np.isfinite(t):
                if self._phase1:
                    raise _NumericalTrouble("unbounded phase-1 direction")
                return Status.UNBOUNDED

            self.iterations += 1
            if t_flip < t_basic - 1e-12:
                self.x_b -= g * t
                self.status[j] = _AT_UB if d > 0 else _AT_LB
                self.x_val[j] = self.ub[j] if d > 0 else self.lb[j]
                continue

            ties = np.nonzero(t_rows <= t_basic + 1e-10)[0]
            if bland:
                order = [self.basis[i] if self.basis[i] >= 0
                         else self.n + self.m - self.basis[i] for i in ties]
                r = int(ties[int(np.argmin(order))])
            else:
                r = int(ties[int(np.argmax(np.abs(w[ties])))])
            if abs(w[r]) <= st.pivot_tol:
                raise _NumericalTrouble("tiny pivot")

            if t <= 1e-11:
                degen += 1
                if degen > st.degen_limit:
                    bland = True
            else:
                degen = 0
                bland = False

            self.x_b -= g * t
            leaving = self.basis[r]
            fell = g[r] > 0
            if leaving >= 0:
                self.status[leaving] = _AT_LB if fell else _AT_UB
                self.x_val[leaving] = self.lb[leaving] if fell else self.ub[leaving]
            else:
                self.art_fixed[-leaving - 1] = True
            entering_val = self.x_val[j] + d * t
            self.basis[r] = j
            self.status[j] = _BASIC
            self._pivot_update(r, w)
            self.x_b[r] = entering_val
            self._sync_row(r)
            if self.iterations % st.refactor_every == 0:
                self.refactor()

    def solve_primal(self, fixes=None) -> Status:
        self.set_bounds(fixes)
        self.iterations = 0
        self.crash_basis()
        if any(e < 0 for e in self.basis):
            self._phase1 = True
            out = self.primal()
            self._phase1 = False
            if out == Status.ITERATION_LIMIT:
                return out
            scale = 1.0 + float(np.abs(self.b).max(initial=0.0))
            if self._phase1_infeasibility() > self.st.feas_tol * scale:
                return Status.INFEASIBLE
            self.art_fixed[:] = True
        out = self.primal()
        if out == Status.OPTIMAL:
            self.refactor()
        return out

    # -- dual simplex ------------------------------------------------------

    def warm_start_dual(self, fixes, basis, status, art_sign, art_fixed,
                        entry_binv: np.ndarray = None) -> Status:
        """Re-solve after bound changes, from a previously optimal basis.

        entry_binv, when given, must be the inverse of exactly this basis
        (it depends only on the basis, not on bounds), letting sibling nodes
        share one factorization.
        """
        self.set_bounds(fixes)
        self.iterations = 0
        self._phase1 = False
        self.basis = basis.copy()
        self.status = status.copy()
        self.art_sign = art_sign.copy()
        self.art_fixed = art_fixed.copy()
        lo, hi = self.lb, self.ub
        s = self.status
        nb = s != _BASIC
        has_lo, has_hi = np.isfinite(lo), np.isfinite(hi)
        fixed = nb & (lo == hi)
        s[fixed] = _FIXED
        s[nb & ~fixed & (s == _FIXED)] = _AT_LB
        bad_lo = nb & (s == _AT_LB) & ~has_lo
        s[bad_lo & has_hi] = _AT_UB
        s[bad_lo & ~has_hi] = _FREE
        bad_hi = nb & (s == _AT_UB) & ~has_hi
        s[bad_hi & has_lo] = _AT_LB
        s[bad_hi & ~has_lo] = _FREE
        self._refresh_nonbasic_values()
        if entry_binv is not None:
            self.binv = entry_binv.copy()
            self.recompute_x_b()
        else:
            self.refactor()
        self.entry_binv = self.binv.copy()
        self._sync_all_rows()
        rc = self._price()
        bad = (((self.status == _AT_LB) & (rc < -1e-6))
               | ((self.status == _AT_UB) & (rc > 1e-6))
               | ((self.status == _FREE) & (np.abs(rc) > 1e-6)))
        if np.any(bad):
            raise _NumericalTrouble("warm start is not dual feasible")

        st = self.st
        degen = 0
        while True:
            if self.iterations >= st.dual_max_iter:
                raise _NumericalTrouble("dual iteration cap")
            below = self.b_lo - self.x_b
            above = self.x_b - self.b_hi
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= st.feas_tol:
                self.recompute_x_b()
                return Status.OPTIMAL
            going_up = below[r] >= above[r]
            target = self.b_lo[r] if going_up else self.b_hi[r]
            sigma = 1.0 if going_up else -1.0

            a_r = self.At @ self.binv[r]
            move_up = (self.status == _AT_LB) & (sigma * a_r < -st.pivot_tol)
            move_dn = (self.status == _AT_UB) & (sigma * a_r > st.pivot_tol)
            move_fr = (self.status == _FREE) & (np.abs(a_r) > st.pivot_tol)
            cand = move_up | move_dn | move_fr
            if not np.any(cand):
                return Status.INFEASIBLE
            idx = np.nonzero(cand)[0]
            num = np.where(move_up[idx], rc[idx],
                           np.where(move_dn[idx], -rc[idx], np.abs(rc[idx])))
            ratios = np.maximum(num, 0.0) / np.abs(a_r[idx])
            best = float(np.min(ratios))
            ties = idx[ratios <= best + 1e-10]
            if degen > st.degen_limit:
                j = int(ties[0])
            else:
                j = int(ties[int(np.argmax(np.abs(a_r[ties])))])

            delta = (self.x_b[r] - target) / a_r[j]
            if abs(delta) <= 1e-11:
                degen += 1
            else:
                degen = 0
            w = self._binv_col(j)
            self.x_b -= delta * w
            leaving = self.basis[r]
            if leaving >= 0:
                if self.lb[leaving] == self.ub[leaving]:
                    self.status[leaving] = _FIXED
                else:
                    self.status[leaving] = _AT_LB if going_up else _AT_UB
                self.x_val[leaving] = target
            else:
                self.art_fixed[-leaving - 1] = True
            entering_val = self.x_val[j] + delta
            self.basis[r] = j
            self.status[j] = _BASIC
            self._pivot_update(r, w)
            self.x_b[r] = entering_val
            self._sync_row(r)
            rc = rc - (rc[j] / a_r[j]) * a_r
            rc[j] = 0.0
            self.iterations += 1
            if self.iterations % st.refactor_every == 0:
                self.refactor()
                rc = self._price()

    # -- extraction --------------------------------------------------------

    def extract(self) -> tuple[np.ndarray, float]:
        x = np.where(self.status[: self.n] == _BASIC, 0.0, self.x_val[: self.n])
        for r, e in enumerate(self.basis):
            if 0 <= e < self.n:
                x[e] = self.x_b[r]
        obj = float(self.cost[: self.n] @ x)
        return x, obj

    def snapshot(self):
        return (self.basis.copy(), self.status.copy(),
                self.art_sign.copy(), self.art_fixed.copy())


# ---------------------------------------------------------------------------
# public solvers
# ---------------------------------------------------------------------------

def _cold_lp(ws: _Workspace, fixes=None):
    """Primal solve with one clean retry on numerical trouble."""
    try:
        out = ws.solve_primal(fixes)
    except _NumericalTrouble:
        try:
            out = ws.solve_primal(fixes)
        except _NumericalTrouble:
            return Status.ITERATION_LIMIT, None, np.nan, ws.iterations
    if out in (Status.OPTIMAL, Status.ITERATION_LIMIT):
        x, obj = ws.extract()
        return out, x, obj, ws.iterations
    return out, None, np.nan, ws.iterations


def solve_lp(lp: LinearProgram, settings: SolverSettings = None,
             fixes=None) -> Solution:
    """Solve the LP relaxation (binary flags ignored) by primal simplex."""
    st = settings or DEFAULT_SETTINGS
    t0 = time.perf_counter()
    ws = _Workspace(lp, st)
    status, x, obj, iters = _cold_lp(ws, fixes)
    return Solution(status=status, objective=obj, x=x,
                    iterations=iters, node_count=0,
                    wall_time=time.perf_counter() - t0)


def _warm_or_cold(ws: _Workspace, fixes, snap, entry_binv=None):
    iters = 0
    if snap is not None:
        try:
            out = ws.warm_start_dual(fixes, *snap, entry_binv=entry_binv)
            if out == Status.OPTIMAL:
                x, obj = ws.extract()
                return out, x, obj, ws.iterations
            if out == Status.INFEASIBLE:
                return out, None, np.nan, ws.iterations
        except _NumericalTrouble:
            iters = ws.iterations
    status, x, obj, more = _cold_lp(ws, fixes)
    return status, x, obj, iters + more


def _fixes_of(node_fixes: dict[int, tuple[float, float]]):
    return [(j, lo, hi) for j, (lo, hi) in node_fixes.items()]


def solve_milp(lp: LinearProgram, settings: SolverSettings = None,
               dive_hint=None, branch_score=None) -> Solution:
    """Branch and bound over the binary variables.

    Best-first on the LP bound; branches the most fractional binary, a whole
    SOS1 group at a time when the binary belongs to one.  Child LPs are
    re-solved by dual simplex warm-started from the parent basis.  Terminates
    at relative gap <= settings.rel_gap; the node cap returns the incumbent
    with ITERATION_LIMIT status.

    dive_hint, when given, maps a relaxation point x to proposed binary
    fixes [(var, lo, hi), ...] used by the rounding dive; problem builders
    that know which binary pattern matches a relaxed point (e.g. the segment
    containing a piecewise input) supply it to get exact incumbents early.
    Node fixes always override the hint, so it never affects correctness.

    branch_score, when given, maps a relaxation point to a per-variable
    score; the solver then branches the still-fractional binary of highest
    score instead of the most fractional one.  Only the exploration order
    changes, never the result.
    """
    st = settings or DEFAULT_SETTINGS
    t0 = time.perf_counter()
    ws = _Workspace(lp, st)
    total_iters = 0

    status, x, obj, iters = _cold_lp(ws)
    total_iters += iters
    if status != Status.OPTIMAL:
        return Solution(status=status, objective=obj, x=x,
                        iterations=total_iters, node_count=1,
                        wall_time=time.perf_counter() - t0)

    bin_idx = np.array([j for j in range(lp.n_vars) if lp.binary[j]], dtype=int)
    if len(bin_idx) == 0:
        return Solution(status=Status.OPTIMAL, objective=obj, x=x,
                        iterations=total_iters, node_count=1,
                        wall_time=time.perf_counter() - t0)

    groups = detect_sos1_groups(lp)
    group_of: dict[int, list[int]] = {}
    for g in groups:
        for j in g:
            group_of[j] = g

    def fractional(xv: np.ndarray) -> np.ndarray:
        return np.minimum(np.abs(xv[bin_idx]), np.abs(1.0 - xv[bin_idx]))

    def is_integral(xv: np.ndarray) -> bool:
        return bool(np.all(fractional(xv) <= st.int_tol))

    incumbent_obj = np.inf
    incumbent_x = None
    root_snap = ws.snapshot()

    def dive_fixes(xv, base_fixes):
        fixes = dict(base_fixes)
        if dive_hint is not None:
            for j, lo, hi in dive_hint(xv):
                fixes.setdefault(int(j), (lo, hi))
        for g in groups:
            unfixed = [j for j in g if j not in fixes]
            if not unfixed:
                continue
            chosen = [j for j in g if fixes.get(j, (0.0, 0.0))[0] >= 0.5]
            if chosen:
                pick = chosen[0]
            else:
                pick = unfixed[int(np.argmax([xv[j] for j in unfixed]))]
            for j in unfixed:
                fixes[j] = (1.0, 1.0) if j == pick else (0.0, 0.0)
        for j in bin_idx:
            j = int(j)
            if j not in fixes and j not in group_of:
                v = 1.0 if xv[j] >= 0.5 else 0.0
                fixes[j] = (v, v)
        return fixes

    def try_dive(xv, base_fixes, snap):
        # iterate rounding and re-solving until the binary pattern settles;
        # each pass is one warm LP, so this is a cheap local polish
        nonlocal incumbent_obj, incumbent_x, total_iters
        point = xv
        use_snap = snap
        seen = set()
        for _ in range(6):
            fixes = dive_fixes(point, base_fixes)
            key = tuple(sorted((j, lo) for j, (lo, hi) in fixes.items()))
            if key in seen:
                break
            seen.add(key)
            stat, dx, dobj, iters = _warm_or_cold(ws, _fixes_of(fixes), use_snap)
            total_iters += iters
            if stat != Status.OPTIMAL:
                break
            if dobj < incumbent_obj - 1e-12:
                incumbent_obj, incumbent_x = dobj, dx
            point = dx
            use_snap = ws.snapshot()

    try_dive(x, {}, root_snap)

    def cutoff() -> float:
        # a node whose bound cannot improve the incumbent by more than the
        # accepted relative gap is not worth exploring
        if incumbent_x is None:
            return np.inf
        slack = max(st.prune_abs, st.rel_gap * max(1.0, abs(incumbent_obj)))
        return incumbent_obj - slack

    heap: list = []
    seq = 0
    heapq.heappush(heap, (obj, seq, {}, x, root_snap))
    nodes = 1
    limit_hit = False
    final_bound = None

    while heap:
        bound, _, fixes, xv, snap = heapq.heappop(heap)
        if bound >= cutoff():
            final_bound = bound
            break
        if is_integral(xv):
            if bound < incumbent_obj - 1e-12:
                incumbent_obj, incumbent_x = bound, xv
            continue
        if nodes >= st.max_nodes:
            limit_hit = True
            final_bound = bound
            break

        frac = fractional(xv)
        if branch_score is not None:
            score = np.asarray(branch_score(xv), dtype=float)[bin_idx]
        else:
            score = frac
        score = np.where(frac > st.int_tol, score, -np.inf)
        branch_var = int(bin_idx[int(np.argmax(score))])
        if branch_var in group_of:
            children = []
            for pick in group_of[branch_var]:
                child = dict(fixes)
                for j in group_of[branch_var]:
                    child[j] = (1.0, 1.0) if j == pick else (0.0, 0.0)
                children.append(child)
        else:
            c0, c1 = dict(fixes), dict(fixes)
            c0[branch_var] = (0.0, 0.0)
            c1[branch_var] = (1.0, 1.0)
            children = [c0, c1]

        parent_binv = None
        for child in children:
            stat, cx, cobj, iters = _warm_or_cold(ws, _fixes_of(child), snap,
                                                  entry_binv=parent_binv)
            total_iters += iters
            if parent_binv is None:
                parent_binv = getattr(ws, "entry_binv", None)
            nodes += 1
            if stat != Status.OPTIMAL:
                continue
            if is_integral(cx):
                if cobj < incumbent_obj - 1e-12:
                    incumbent_obj, incumbent_x = cobj, cx
                continue
            if cobj >= cutoff():
                continue
            seq += 1
            heapq.heappush(heap, (cobj, seq, child, cx, ws.snapshot()))

        if heap and nodes % st.dive_every == 0:
            _, _, f0, x0, snap0 = heap[0]
            try_dive(x0, f0, snap0)

    wall = time.perf_counter() - t0
    if incumbent_x is None:
        miss = Status.ITERATION_LIMIT if limit_hit else Status.INFEASIBLE
        return Solution(status=miss, objective=np.nan, x=None,
                        node_count=nodes, iterations=total_iters, wall_time=wall)

    best_bound = incumbent_obj if final_bound is None else final_bound
    best_bound = min([bound for bound, *_ in heap] + [best_bound])
    gap = max(0.0, (incumbent_obj - best_bound) / max(1.0, abs(incumbent_obj)))
    xi = incumbent_x.copy()
    xi[bin_idx] = np.round(xi[bin_idx])
    out = Status.ITERATION_LIMIT if limit_hit else Status.OPTIMAL
    return Solution(status=out, objective=incumbent_obj, x=xi,
                    mip_gap=gap, node_count=nodes,
                    iterations=total_iters, wall_time=wall)


def brute_force_milp(lp: LinearProgram, cap: int = 2 ** 16,
                     settings: SolverSettings = None) -> Solution:
    """Enumerate every binary assignment (SOS1 groups jointly) and solve the
    continuous LP of each; the best result defines ground truth for tests."""
    st = settings or DEFAULT_SETTINGS
    t0 = time.perf_counter()
    groups = detect_sos1_groups(lp)
    grouped = {j for g in groups for j in g}
    free = [j for j in range(lp.n_vars) if lp.binary[j] and j not in grouped]

    count = 2 ** len(free)
    for g in groups:
        count *= len(g)
    if count > cap:
        raise ValueError(f"enumeration of {count} assignments exceeds cap {cap}")

    if not groups and not free:
        return solve_lp(lp, st)

    ws = _Workspace(lp, st)
    best_obj = np.inf
    best_x = None
    n_solved = 0
    snap = None  # consecutive assignments differ only in bounds, so the
    # previous optimal basis warm-starts the next solve

    group_choices = [range(len(g)) for g in groups]
    free_choices = [(0.0, 1.0)] * len(free)
    for picks in itertools.product(*group_choices):
        for vals in itertools.product(*free_choices):
            fixes = {}
            for g, pick in zip(groups, picks):
                for pos, j in enumerate(g):
                    fixes[j] = (1.0, 1.0) if pos == pick else (0.0, 0.0)
            for j, v in zip(free, vals):
                fixes[j] = (v, v)
            stat, x, obj, _ = _warm_or_cold(ws, _fixes_of(fixes), snap)
            snap = ws.snapshot() if stat == Status.OPTIMAL else None
            n_solved += 1
            if stat == Status.OPTIMAL and obj < best_obj - 1e-12:
                best_obj, best_x = obj, x

    wall = time.perf_counter() - t0
    if best_x is None:
        return Solution(status=Status.INFEASIBLE, objective=np.nan, x=None,
                        node_count=n_solved, wall_time=wall)
    return Solution(status=Status.OPTIMAL, objective=best_obj, x=best_x,
                    node_count=n_solved, wall_time=wall)
