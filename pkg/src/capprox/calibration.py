"""Calibration sweeps and the capacitance-to-distance fit.

A sweep lowers the electrode from 15 cm above each of several arm locations
at 1 cm/s and records ``(delta_c, distance)`` pairs.  ``fit_model`` fits
``d = alpha / (delta_c + beta)`` in distance space with a bounded
Levenberg-Marquardt iteration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .environment import ArmModel
from .errors import ConfigError, FitError, PreconditionError
from .sensor import MaterialProfile, SensorConfig, forward_delta_c_array

ALPHA_BOUNDS = (1e-9, 1e6)
BETA_BOUNDS = (0.0, 1e4)
SWEEP_HEADER = ["t_s", "location_x_cm", "delta_c", "distance_cm", "subject_id"]


@dataclass(frozen=True)
class CalibrationModel:
    alpha: float
    beta: float
    r_squared: float = float("nan")
    n_samples: int = 0
    range_max: float = 10.0

    def predict(self, delta_c):
        return self.alpha / (np.asarray(delta_c, dtype=float) + self.beta)

    def save(self, path):
        with open(path, "w") as f:
            json.dump({"alpha": self.alpha, "beta": self.beta, "r_squared": self.r_squared,
                       "n_samples": self.n_samples, "range_max": self.range_max}, f, indent=2)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            raw = json.load(f)
        try:
            return cls(float(raw["alpha"]), float(raw["beta"]), float(raw["r_squared"]),
                       int(raw["n_samples"]), float(raw.get("range_max", 10.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed model file {path}: {exc}") from exc


REFERENCE_MODEL = CalibrationModel(84.38, 4.681, 0.969, 0)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SweepDataset:
    t: np.ndarray
    location_x: np.ndarray
    delta_c: np.ndarray
    distance: np.ndarray
    subject_id: str = "s0"
    locations: tuple = field(default=())

    def __post_init__(self):
        for name in ("t", "location_x", "delta_c", "distance"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.t)
        if not all(len(getattr(self, k)) == n for k in ("location_x", "delta_c", "distance")):
            raise PreconditionError("sweep columns differ in length")
        if not self.locations:
            object.__setattr__(self, "locations", tuple(dict.fromkeys(self.location_x.tolist())))

    def __len__(self):
        return len(self.t)

    @property
    def pairs(self):
        return list(zip(self.delta_c.tolist(), self.distance.tolist()))

    def in_range(self, range_max=10.0):
        return self.distance <= range_max

    def scaled(self, factor):
        return SweepDataset(self.t, self.location_x, self.delta_c * factor, self.distance,
                            self.subject_id, self.locations)

    @classmethod
    def concat(cls, datasets, subject_id="pooled"):
        return cls(np.concatenate([d.t for d in datasets]),
                   np.concatenate([d.location_x for d in datasets]),
                   np.concatenate([d.delta_c for d in datasets]),
                   np.concatenate([d.distance for d in datasets]), subject_id)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(SWEEP_HEADER)
            for row in zip(self.t, self.location_x, self.delta_c, self.distance):
                w.writerow([f"{v:.6f}" for v in row] + [self.subject_id])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != SWEEP_HEADER:
                raise ConfigError(f"{path}: expected header {','.join(SWEEP_HEADER)}")
            rows = list(reader)
        cols = {k: [float(r[k]) for r in rows] for k in SWEEP_HEADER[:4]}
        subject = rows[0]["subject_id"] if rows else "s0"
        return cls(cols["t_s"], cols["location_x_cm"], cols["delta_c"], cols["distance_cm"], subject)


def run_calibration_sweep(arm: ArmModel, profile: MaterialProfile, config: SensorConfig,
                          n_locations: int = 6, rng=None, *, surface_jitter: float = 0.0,
                          start_height: float = 15.0, speed: float = 1.0,
                          subject_id: str = "s0") -> SweepDataset:
    """Descend from ``start_height`` above each location until contact.

    Distances are recorded relative to the arm model's surface.  With
    ``surface_jitter > 0`` the true surface at each location is offset by a
    normal draw, so readings come from ``recorded - jitter`` while the
    recorded distance is unchanged; this stands in for per-subject height
    error the robot cannot observe.
    """
    if n_locations < 1:
        raise PreconditionError("n_locations must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    locations = np.linspace(0.0, arm.length, n_locations) if n_locations > 1 else np.zeros(1)
    n_steps = int(round(start_height * config.sample_rate / speed))
    recorded = (n_steps - np.arange(n_steps)) * speed / config.sample_rate
    t_all, x_all, dc_all, d_all = [], [], [], []
    for x in locations:
        jitter = rng.normal(0.0, surface_jitter) if surface_jitter > 0 else 0.0
        gap = recorded - jitter
        keep = gap > 1e-9
        t = np.arange(n_steps)[keep] / config.sample_rate
        dc, _ = forward_delta_c_array(gap[keep], t, profile, config, rng)
        t_all.append(t)
        x_all.append(np.full(keep.sum(), x))
        dc_all.append(dc)
        d_all.append(recorded[keep])
    return SweepDataset(np.concatenate(t_all), np.concatenate(x_all), np.concatenate(dc_all),
                        np.concatenate(d_all), subject_id, tuple(locations.tolist()))


def r_squared(observed, predicted) -> float:
    observed = np.asarray(observed, dtype=float)
    ss_res = np.sum((observed - predicted) ** 2)
    ss_tot = np.sum((observed - observed.mean()) ** 2)
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else float("-inf")
    return float(1.0 - ss_res / ss_tot)


def _residuals(p, x, d):
    return d - p[0] / (x + p[1])


def _jacobian(p, x):
    denom = x + p[1]
    return np.column_stack([-1.0 / denom, p[0] / denom ** 2])


def _project(p):
    return np.array([np.clip(p[0], *ALPHA_BOUNDS), np.clip(p[1], *BETA_BOUNDS)])


def levenberg_marquardt(x, d, p0, max_iter=200, xtol=1e-12, gtol=1e-12):
    """Bounded LM for ``d ~ alpha / (x + beta)``; returns ``(params, cost, converged)``.

    Steps are projected onto the parameter box.  Damping follows Nielsen's
    gain-ratio update with Marquardt diagonal scaling.
    """
    p = _project(np.asarray(p0, dtype=float))
    if np.any(x + p[1] <= 0):
        # start a unit away from the pole, not on it
        p[1] = min(1.0 - x.min(), BETA_BOUNDS[1])
    r = _residuals(p, x, d)
    cost = 0.5 * r @ r
    J = _jacobian(p, x)
    A, g = J.T @ J, J.T @ r
    mu = 1e-3 * np.max(np.diag(A))
    nu = 2.0
    for _ in range(max_iter):
        if np.max(np.abs(g)) < gtol * max(1.0, cost):
            return p, cost, True
        D = np.diag(np.maximum(np.diag(A), 1e-300))
        try:
            step = np.linalg.solve(A + mu * D, -g)
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2
            continue
        p_new = _project(p + step)
        if np.any(x + p_new[1] <= 0):
            mu *= nu
            nu *= 2
            continue
        actual = p_new - p
        if np.linalg.norm(actual) <= xtol * (np.linalg.norm(p) + xtol):
            return p, cost, True
        r_new = _residuals(p_new, x, d)
        cost_new = 0.5 * r_new @ r_new
        predicted = -(g @ actual) - 0.5 * actual @ A @ actual
        rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
        if rho > 0:
            p, r, cost = p_new, r_new, cost_new
            J = _jacobian(p, x)
            A, g = J.T @ J, J.T @ r
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2
    return p, cost, False


def fit_model(data: SweepDataset, range_max: float = 10.0, max_iter: int = 200) -> CalibrationModel:
    mask = data.in_range(range_max) & (data.distance > 0)
    x, d = data.delta_c[mask], data.distance[mask]
    if x.size < 3:
        raise FitError(f"need at least 3 in-range samples, got {x.size}")
    if np.ptp(x) == 0:
        raise FitError("delta_c has zero variance")
    p0 = (float(np.median(d * x)), 1.0)
    if p0[0] <= 0:
        p0 = (float(np.median(d)), 1.0)
    p, cost, ok = levenberg_marquardt(x, d, p0, max_iter=max_iter)
    if not ok:
        raise FitError(f"no convergence after {max_iter} iterations", residual=float(np.sqrt(2 * cost)))
    pred = p[0] / (x + p[1])
    return CalibrationModel(float(p[0]), float(p[1]), r_squared(d, pred), int(x.size), range_max)


@dataclass(frozen=True)
class FitEvaluation:
    r_squared: float
    residuals: np.ndarray
    n_samples: int

    @property
    def rmse(self):
        return float(np.sqrt(np.mean(self.residuals ** 2)))

    @property
    def mean_residual(self):
        return float(np.mean(self.residuals))

    @property
    def std_error(self):
        return float(np.std(self.residuals, ddof=1) / np.sqrt(self.n_samples))


def evaluate_fit(model: CalibrationModel, data: SweepDataset) -> FitEvaluation:
    if model.alpha is None or not model.alpha > 0:
        raise ConfigError("calibration model is not fitted")
    mask = data.in_range(model.range_max)
    if not mask.any():
        raise PreconditionError("no in-range samples to evaluate")
    d = data.distance[mask]
    pred = model.predict(data.delta_c[mask])
    return FitEvaluation(r_squared(d, pred), d - pred, int(mask.sum()))


def inter_subject_spread(datasets, n_bins: int = 20, range_max: float = 10.0) -> float:
    """Mean over delta_c bins of the across-subject std of per-subject mean distance.

    Bins are quantiles of the pooled in-range readings; only bins every
    subject populates contribute.
    """
    if len(datasets) < 2:
        raise PreconditionError("need at least two subjects")
    pooled = np.concatenate([s.delta_c[s.in_range(range_max)] for s in datasets])
    edges = np.unique(np.quantile(pooled, np.linspace(0, 1, n_bins + 1)))
    spreads = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        means = []
        for s in datasets:
            m = s.in_range(range_max) & (s.delta_c >= lo) & (s.delta_c <= hi)
            if m.any():
                means.append(s.distance[m].mean())
        if len(means) == len(datasets):
            spreads.append(np.std(means, ddof=1))
    if not spreads:
        raise PreconditionError("subjects share no delta_c bins")
    return float(np.mean(spreads))


@dataclass(frozen=True)
class MaterialSeparation:
    bin_centers: np.ndarray
    gaps_sigma: np.ndarray
    distinguishable: bool
    threshold: float = 3.0

    @property
    def fraction_separated(self):
        return float(np.mean(self.gaps_sigma > self.threshold))


def _detrended_std(d, dc):
    if len(d) < 3 or np.ptp(d) == 0:
        return float(np.std(dc))
    coef = np.polyfit(d, dc, 1)
    return float(np.std(dc - np.polyval(coef, d), ddof=2))


def discriminate_material(sweep_a: SweepDataset, sweep_b: SweepDataset, bin_width: float = 0.5,
                          range_max: float = 10.0, threshold: float = 3.0,
                          min_count: int = 5) -> MaterialSeparation:
    """Compare mean delta_c curves per distance bin, in units of summed noise sigma.

    Noise sigma in a bin is the residual std after removing a linear trend in
    distance, so the curve's own slope is not counted as noise.
    """
    if len(sweep_a) == 0 or len(sweep_b) == 0:
        raise PreconditionError("both sweeps must be non-empty")
    edges = np.arange(0.0, range_max + bin_width / 2, bin_width)
    centers, gaps = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        ma = (sweep_a.distance > lo) & (sweep_a.distance <= hi)
        mb = (sweep_b.distance > lo) & (sweep_b.distance <= hi)
        if ma.sum() < min_count or mb.sum() < min_count:
            continue
        gap = abs(sweep_a.delta_c[ma].mean() - sweep_b.delta_c[mb].mean())
        sigma = (_detrended_std(sweep_a.distance[ma], sweep_a.delta_c[ma])
                 + _detrended_std(sweep_b.distance[mb], sweep_b.delta_c[mb]))
        centers.append((lo + hi) / 2)
        gaps.append(gap / sigma if sigma > 0 else (np.inf if gap > 1e-12 else 0.0))
    if not centers:
        raise PreconditionError("sweeps share no distance bins below range_max")
    gaps = np.array(gaps)
    return MaterialSeparation(np.array(centers), gaps,
                              bool(np.mean(gaps > threshold) > 0.5), threshold)
