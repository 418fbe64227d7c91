"""Linear thermal prediction model of the building (ARX form).

The indoor temperature one step ahead is a linear combination of lagged
indoor temperatures, lagged heat-pump inputs (normalized fraction of maximum
power), lagged ambient temperatures and lagged solar irradiation:

    y[t] = sum_k a_k*y[t-k] + sum_k b_k*u[t-k] + sum_k c_k*T[t-k] + sum_k d_k*S[t-k]

All history arguments throughout this module are ordered newest-first:
``y_hist[0]`` is the most recent sample.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime

import numpy as np
import scipy.linalg

from .timeseries import (
    as_float_array,
    fmt_float,
    parse_timestamp,
    read_csv,
    time_axis,
    validate_spacing,
    write_csv,
)


class SingularRegressorError(ValueError):
    """Least-squares regressor matrix is rank deficient."""


@dataclass(frozen=True)
class ArxModel:
    """Identified linear predictor.  Coefficient vector lengths define the
    model orders (n_a, n_b, n_c, n_d)."""

    coeff_a: np.ndarray
    coeff_b: np.ndarray
    coeff_c: np.ndarray
    coeff_d: np.ndarray
    sample_period: float = 900.0

    def __post_init__(self):
        for name in ("coeff_a", "coeff_b", "coeff_c", "coeff_d"):
            arr = as_float_array(getattr(self, name), name)
            if len(arr) < 1:
                raise ValueError(f"{name} must have at least one coefficient")
            object.__setattr__(self, name, arr)
        if self.sample_period <= 0:
            raise ValueError("sample_period must be positive")

    @property
    def orders(self) -> tuple[int, int, int, int]:
        return (len(self.coeff_a), len(self.coeff_b),
                len(self.coeff_c), len(self.coeff_d))

    @property
    def max_order(self) -> int:
        return max(self.orders)

    def save(self, path) -> None:
        """Write the model as structured text (JSON): orders + coefficients."""
        na, nb, nc, nd = self.orders
        doc = {
            "orders": {"n_a": na, "n_b": nb, "n_c": nc, "n_d": nd},
            "coeff_a": [float(v) for v in self.coeff_a],
            "coeff_b": [float(v) for v in self.coeff_b],
            "coeff_c": [float(v) for v in self.coeff_c],
            "coeff_d": [float(v) for v in self.coeff_d],
            "sample_period_s": self.sample_period,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ArxModel":
        with open(path) as fh:
            doc = json.load(fh)
        model = cls(
            coeff_a=doc["coeff_a"], coeff_b=doc["coeff_b"],
            coeff_c=doc["coeff_c"], coeff_d=doc["coeff_d"],
            sample_period=doc["sample_period_s"],
        )
        na, nb, nc, nd = model.orders
        stated = doc["orders"]
        if (stated["n_a"], stated["n_b"], stated["n_c"], stated["n_d"]) != (na, nb, nc, nd):
            raise ValueError(f"orders in {path} do not match coefficient lengths")
        return model


@dataclass
class IoDataset:
    """Identification dataset: aligned indoor temperature, HP input fraction,
    ambient temperature and solar irradiation on the 900 s grid."""

    start: datetime
    y: np.ndarray
    u: np.ndarray
    t_amb: np.ndarray
    s_sol: np.ndarray

    def __post_init__(self):
        self.y = as_float_array(self.y, "y")
        self.u = as_float_array(self.u, "u")
        self.t_amb = as_float_array(self.t_amb, "t_amb")
        self.s_sol = as_float_array(self.s_sol, "s_sol")
        n = len(self.y)
        if not (len(self.u) == len(self.t_amb) == len(self.s_sol) == n):
            raise ValueError("dataset series must have equal lengths")
        if n < 2:
            raise ValueError("dataset too short")
        if np.any((self.u < 0.0) | (self.u > 1.0)):
            raise ValueError("u must lie in [0, 1] elementwise")

    def __len__(self) -> int:
        return len(self.y)

    def to_csv(self, path) -> None:
        stamps = time_axis(self.start, len(self))
        rows = (
            [ts.isoformat(), fmt_float(y), fmt_float(u), fmt_float(t), fmt_float(s)]
            for ts, y, u, t, s in zip(stamps, self.y, self.u, self.t_amb, self.s_sol)
        )
        write_csv(path, ["timestamp", "y_C", "u_frac", "T_amb_C", "S_Wm2"], rows)

    @classmethod
    def from_csv(cls, path) -> "IoDataset":
        rows = read_csv(path, ["timestamp", "y_C", "u_frac", "T_amb_C", "S_Wm2"])
        if not rows:
            raise ValueError(f"empty dataset: {path}")
        stamps = [parse_timestamp(r[0]) for r in rows]
        validate_spacing(stamps)
        cols = np.array([[float(v) for v in r[1:]] for r in rows])
        return cls(start=stamps[0], y=cols[:, 0], u=cols[:, 1],
                   t_amb=cols[:, 2], s_sol=cols[:, 3])


def _check_history(name: str, hist: np.ndarray, need: int) -> np.ndarray:
    hist = np.asarray(hist, dtype=float)
    if len(hist) < need:
        raise ValueError(
            f"insufficient {name}: need at least {need} samples, got {len(hist)}"
        )
    return hist


def predict_one_step(model: ArxModel, y_hist, u_hist, t_hist, s_hist) -> float:
    """One-step-ahead prediction from newest-first histories.

    Each history must supply at least the model's order in most-recent
    samples of that signal (lags 1..n relative to the predicted instant).
    """
    na, nb, nc, nd = model.orders
    y_hist = _check_history("y history", y_hist, na)
    u_hist = _check_history("u history", u_hist, nb)
    t_hist = _check_history("ambient-temperature history", t_hist, nc)
    s_hist = _check_history("solar history", s_hist, nd)
    return float(
        model.coeff_a @ y_hist[:na]
        + model.coeff_b @ u_hist[:nb]
        + model.coeff_c @ t_hist[:nc]
        + model.coeff_d @ s_hist[:nd]
    )


def predict_open_loop(model: ArxModel, y_hist, u_hist, t_hist, s_hist,
                      u_seq, t_seq, s_seq) -> np.ndarray:
    """Multi-step open-loop prediction, feeding predictions back as y-history.

    ``u_seq[j]``, ``t_seq[j]`` and ``s_seq[j]`` are the input/weather at the
    j-th future step; the returned ``y_seq[j]`` is the temperature one step
    after that.  Initial histories hold strictly older samples, newest-first:
    ``y_hist[0]`` is the current temperature, ``u_hist[0]`` the input applied
    one step ago.
    """
    na, nb, nc, nd = model.orders
    u_seq = np.asarray(u_seq, dtype=float)
    t_seq = np.asarray(t_seq, dtype=float)
    s_seq = np.asarray(s_seq, dtype=float)
    n = len(u_seq)
    if len(t_seq) != n or len(s_seq) != n:
        raise ValueError("u_seq, t_seq and s_seq must have equal lengths")
    y_hist = list(_check_history("y history", y_hist, na)[:na])
    u_hist = list(_check_history("u history", u_hist, max(nb - 1, 0))[: max(nb - 1, 0)])
    t_hist = list(_check_history("ambient-temperature history", t_hist, max(nc - 1, 0))[: max(nc - 1, 0)])
    s_hist = list(_check_history("solar history", s_hist, max(nd - 1, 0))[: max(nd - 1, 0)])
    out = np.empty(n)
    for j in range(n):
        u_full = [u_seq[j]] + u_hist
        t_full = [t_seq[j]] + t_hist
        s_full = [s_seq[j]] + s_hist
        y_next = predict_one_step(model, y_hist, u_full, t_full, s_full)
        out[j] = y_next
        y_hist = [y_next] + y_hist[: na - 1]
        u_hist = u_full[: max(nb - 1, 0)]
        t_hist = t_full[: max(nc - 1, 0)]
        s_hist = s_full[: max(nd - 1, 0)]
    return out


def regressor_labels(orders: tuple[int, int, int, int]) -> list[str]:
    na, nb, nc, nd = orders
    return (
        [f"y_lag{k}" for k in range(1, na + 1)]
        + [f"u_lag{k}" for k in range(1, nb + 1)]
        + [f"T_amb_lag{k}" for k in range(1, nc + 1)]
        + [f"S_lag{k}" for k in range(1, nd + 1)]
    )


def identify(data: IoDataset, orders: tuple[int, int, int, int],
             sample_period: float = 900.0) -> ArxModel:
    """Least-squares fit of the one-step-ahead predictor.

    Solved through an orthogonal (QR-style) factorization rather than the
    normal equations, for better conditioning on correlated regressors.  No
    regularization.  Raises SingularRegressorError, naming a deficient
    column, when the regressor matrix is rank deficient.
    """
    na, nb, nc, nd = orders
    if min(orders) < 1:
        raise ValueError("all orders must be at least 1")
    t0 = max(orders)
    n_coeff = na + nb + nc + nd
    if len(data) < t0 + n_coeff + 1:
        raise ValueError(
            f"dataset too short for orders {orders}: need at least "
            f"{t0 + n_coeff + 1} samples, got {len(data)}"
        )
    rows = len(data) - t0
    x = np.empty((rows, n_coeff))
    for i, t in enumerate(range(t0, len(data))):
        x[i, :na] = data.y[t - na:t][::-1]
        x[i, na:na + nb] = data.u[t - nb:t][::-1]
        x[i, na + nb:na + nb + nc] = data.t_amb[t - nc:t][::-1]
        x[i, na + nb + nc:] = data.s_sol[t - nd:t][::-1]
    target = data.y[t0:]

    theta, _, rank, _ = scipy.linalg.lstsq(x, target, lapack_driver="gelsy")
    if rank < n_coeff:
        # QR with column pivoting points at the dependent column.
        _, _, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
        bad = regressor_labels(orders)[piv[rank]]
        raise SingularRegressorError(
            f"regressor matrix is rank deficient (rank {rank} of {n_coeff}); "
            f"column '{bad}' is linearly dependent on the others"
        )
    return ArxModel(
        coeff_a=theta[:na],
        coeff_b=theta[na:na + nb],
        coeff_c=theta[na + nb:na + nb + nc],
        coeff_d=theta[na + nb + nc:],
        sample_period=sample_period,
    )


def mae(pred_seq, true_seq) -> float:
    """Mean absolute difference between two equally long sequences."""
    pred = np.asarray(pred_seq, dtype=float)
    true = np.asarray(true_seq, dtype=float)
    if pred.shape != true.shape:
        raise ValueError("sequences must have equal lengths")
    if pred.size == 0:
        raise ValueError("mae of empty sequences is undefined")
    return float(np.mean(np.abs(pred - true)))


def lift_for_horizon(model: ArxModel, n_steps: int, y_hist, u_hist, t_hist,
                     s_hist, t_seq, s_seq) -> tuple[np.ndarray, np.ndarray]:
    """Affine map of the input sequence to the predicted temperature sequence.

    Unrolls the recursion so that ``y_seq = phi @ u_seq + gamma`` for the same
    histories/forecast alignment as :func:`predict_open_loop`.  phi is lower
    triangular of shape (n_steps, n_steps).
    """
    if n_steps < 1:
        raise ValueError("horizon must be at least one step")
    na, nb, nc, nd = model.orders
    t_seq = np.asarray(t_seq, dtype=float)
    s_seq = np.asarray(s_seq, dtype=float)
    if len(t_seq) < n_steps or len(s_seq) < n_steps:
        raise ValueError("forecast sequences shorter than the horizon")
    y_hist = _check_history("y history", y_hist, na)
    u_hist = _check_history("u history", u_hist, max(nb - 1, 0))
    t_hist = _check_history("ambient-temperature history", t_hist, max(nc - 1, 0))
    s_hist = _check_history("solar history", s_hist, max(nd - 1, 0))

    phi = np.zeros((n_steps, n_steps))
    gamma = np.zeros(n_steps)
    for j in range(n_steps):
        row = phi[j]
        offs = 0.0
        for k in range(1, na + 1):
            coeff = model.coeff_a[k - 1]
            if j - k >= 0:
                row += coeff * phi[j - k]
                offs += coeff * gamma[j - k]
            else:
                offs += coeff * y_hist[k - j - 1]
        for k in range(1, nb + 1):
            coeff = model.coeff_b[k - 1]
            i = j + 1 - k
            if i >= 0:
                row[i] += coeff
            else:
                offs += coeff * u_hist[k - j - 2]
        for k in range(1, nc + 1):
            coeff = model.coeff_c[k - 1]
            i = j + 1 - k
            offs += coeff * (t_seq[i] if i >= 0 else t_hist[k - j - 2])
        for k in range(1, nd + 1):
            coeff = model.coeff_d[k - 1]
            i = j + 1 - k
            offs += coeff * (s_seq[i] if i >= 0 else s_hist[k - j - 2])
        gamma[j] = offs
    return phi, gamma
