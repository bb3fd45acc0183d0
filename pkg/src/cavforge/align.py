"""Closed-loop alignment routines.

Two regimes, two tools. Transverse placement errors act through affine beam
geometry, so a probe move plus one corrected move cancels them exactly; the
loop repeats only because every grip lands with fresh actuation noise. Mirror
pointing is different: the mount bias is invisible to the controller and the
only signal is a camera spot, so those stages run a small Gaussian-process
optimizer over knob readings with expected improvement as the acquisition
rule. Both report their history through :class:`OptTrace`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.special import ndtr, ndtri

from .errors import BeamLostError, DegenerateResponseError, NoLasingError, WorkspaceError
from .physics import camera_view
from .simcore import Workspace, move_component, rotate_crystal, set_knob_readings, turn_knob
from .vision import (
    DEFAULT_NOISE_FLOOR,
    beam_stats,
    centroid,
    log_transform,
    sensor_center_px,
    subtract_reference,
)

_MIN_RESPONSE = 1e-6


# ---------------------------------------------------------------------------
# Trace bookkeeping


@dataclass(frozen=True)
class OptIteration:
    index: int
    params: tuple
    objective: float
    best_objective: float


@dataclass
class OptTrace:
    """Evaluation history of one optimization run.

    ``objective`` follows the minimization convention everywhere; routines
    that maximize record the negated value and say so in ``meta``.
    """

    method: str
    iterations: list = field(default_factory=list)
    converged: bool = False
    best_params: tuple = ()
    best_objective: float = math.inf
    wall_actions: int = 0
    meta: dict = field(default_factory=dict)

    def record(self, params, objective) -> None:
        objective = float(objective)
        if objective < self.best_objective:
            self.best_objective = objective
            self.best_params = tuple(params)
        self.iterations.append(OptIteration(
            index=len(self.iterations),
            params=tuple(params),
            objective=objective,
            best_objective=self.best_objective,
        ))

    def __len__(self):
        return len(self.iterations)

    @property
    def iters_used(self) -> int:
        return len(self.iterations)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "evaluations": len(self.iterations),
            "converged": self.converged,
            "best_params": list(self.best_params),
            "best_objective": self.best_objective,
            "wall_actions": self.wall_actions,
            **self.meta,
        }

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for it in self.iterations:
                fh.write(json.dumps({
                    "index": it.index,
                    "params": list(it.params),
                    "objective": it.objective,
                    "best_objective": it.best_objective,
                }) + "\n")

    def to_csv(self, path) -> None:
        n_params = max((len(it.params) for it in self.iterations), default=0)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index"] + [f"p{i}" for i in range(n_params)]
                            + ["objective", "best_objective"])
            for it in self.iterations:
                writer.writerow([it.index, *(f"{p:.10g}" for p in it.params),
                                 f"{it.objective:.10g}", f"{it.best_objective:.10g}"])


# ---------------------------------------------------------------------------
# Newton placement correction


def newton_correction(reading, probe, response, response_min=_MIN_RESPONSE):
    """Move that zeroes an affine signal after a probe of size ``probe``.

    ``reading`` is the signal before the probe, ``response`` the change the
    probe caused. The returned move applies from the probed position, so for
    a truly affine signal one probe plus this correction lands on zero.
    """
    if abs(response) < response_min:
        raise DegenerateResponseError(
            f"probe of {probe} changed the signal by only {response}")
    return -probe * (reading + response) / response


@dataclass(frozen=True)
class NewtonResult:
    converged: bool
    iterations: int
    final_error: float
    history: tuple


def newton_solve(measure, move, probe, tolerance, max_iters=10) -> NewtonResult:
    """Drive ``measure()`` to zero with probe-and-correct cycles.

    ``move(delta)`` must return the displacement actually achieved (actuators
    land with noise; the readback keeps the slope estimate honest). Raises
    :class:`DegenerateResponseError` when a probe produces no response.
    """
    history = []
    err = float(measure())
    history.append(err)
    if abs(err) <= tolerance:
        return NewtonResult(True, 0, err, tuple(history))
    for i in range(1, max_iters + 1):
        achieved = float(move(probe))
        probed = float(measure())
        move(newton_correction(err, achieved, probed - err))
        err = float(measure())
        history.append(err)
        if abs(err) <= tolerance:
            return NewtonResult(True, i, err, tuple(history))
    return NewtonResult(False, max_iters, err, tuple(history))


@dataclass(frozen=True)
class SpatialOptConfig:
    """Settings for camera-guided transverse placement."""

    probe_mm: float = 0.3
    tolerance_mm: float | None = None
    max_iters: int = 10
    axes: tuple = ("y",)


def spatial_optimize(ws: Workspace, component_id: str, camera_id: str,
                     target_px=None, cfg: SpatialOptConfig | None = None,
                     pump_power=None):
    """Shift a component until the camera spot sits on ``target_px``.

    Table axis y maps to the sensor x axis and table z to sensor y, one
    Newton loop per requested axis. The default tolerance is the spot's
    1/e^2 radius as first measured. Returns the adjusted workspace and a
    trace of every measurement.
    """
    cfg = cfg or SpatialOptConfig()
    sensor_axis = {"y": 0, "z": 1}
    for axis in cfg.axes:
        if axis not in sensor_axis:
            raise WorkspaceError(f"spatial axis must be 'y' or 'z', got {axis!r}")
    if cfg.probe_mm <= ws.placement_noise_sigma:
        raise WorkspaceError(
            f"probe of {cfg.probe_mm} mm would drown in placement noise "
            f"(sigma {ws.placement_noise_sigma} mm)")
    actions0 = ws.action_count
    state = {"ws": ws}
    trace = OptTrace(method="newton")

    def snap():
        frame = camera_view(state["ws"], camera_id, pump_power=pump_power)
        stats = beam_stats(frame)
        if not stats.detected:
            raise BeamLostError(
                f"no spot on {camera_id} while adjusting {component_id}")
        return frame, stats

    frame, stats = snap()
    target = tuple(target_px) if target_px is not None else sensor_center_px(frame)
    pitch = frame.pixel_pitch_mm
    tolerance = cfg.tolerance_mm
    if tolerance is None:
        tolerance = 2.0 * max(stats.sigma_px) * pitch

    def errors(stats):
        return tuple((stats.centroid_px[sensor_axis[a]] - target[sensor_axis[a]]) * pitch
                     for a in cfg.axes)

    def make_measure(axis):
        idx = sensor_axis[axis]

        def measure():
            _, stats = snap()
            err = (stats.centroid_px[idx] - target[idx]) * pitch
            pose = state["ws"].component(component_id).pose
            trace.record((getattr(pose, axis),), abs(err))
            return err

        return measure

    def make_move(axis):
        def move(delta):
            comp = state["ws"].component(component_id).pose
            before = getattr(comp, axis)
            state["ws"] = move_component(
                state["ws"], component_id,
                comp.shifted(**{f"d{axis}": float(delta)}))
            return getattr(state["ws"].component(component_id).pose, axis) - before

        return move

    converged = True
    for axis in cfg.axes:
        result = newton_solve(make_measure(axis), make_move(axis),
                              cfg.probe_mm, tolerance, cfg.max_iters)
        converged = converged and result.converged

    _, stats = snap()
    final = math.hypot(*errors(stats)) if len(cfg.axes) > 1 else abs(errors(stats)[0])
    trace.converged = converged and final <= tolerance
    trace.wall_actions = state["ws"].action_count - actions0
    trace.meta.update(component=component_id, camera=camera_id,
                      tolerance_mm=tolerance, final_error_mm=final,
                      objective_units="mm")
    return state["ws"], trace


# ---------------------------------------------------------------------------
# Beam-path survey


@dataclass(frozen=True)
class BeamPathFit:
    """Least-squares line through surveyed beam positions, y(x) = a + b x."""

    slope: float
    intercept: float
    rms_residual: float
    points: tuple

    def y_at(self, x) -> float:
        return self.intercept + self.slope * float(x)


def fit_beam_path(xs, ys) -> BeamPathFit:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.unique(xs).size < 2:
        raise WorkspaceError("beam-path fit needs at least two distinct stations")
    slope, intercept = np.polyfit(xs, ys, 1)
    residuals = ys - (intercept + slope * xs)
    return BeamPathFit(
        slope=float(slope),
        intercept=float(intercept),
        rms_residual=float(np.sqrt(np.mean(residuals ** 2))),
        points=tuple(zip(xs.tolist(), ys.tolist())),
    )


def measure_beam_path(ws: Workspace, camera_id: str, x_positions=None,
                      pump_power=None):
    """Survey the beam line by rolling a camera along the table.

    At every station the camera is first recentered on the beam (its own
    spatial loop, which is a no-op when the spot is already near center),
    then the beam's absolute transverse position is read as the camera pose
    plus the residual centroid offset; pose readback is exact, so grip noise
    on the camera drops out of the fit. The camera returns to its home
    station afterwards. Returns the (moved) workspace and the fitted line.
    """
    cam = ws.component(camera_id)
    home = cam.pose
    if x_positions is None:
        x_positions = tuple(home.x - d for d in (240.0, 160.0, 80.0, 0.0))
    xs, ys = [], []
    for x in x_positions:
        ws = move_component(ws, camera_id, home.shifted(dx=float(x) - home.x))
        ws, _ = spatial_optimize(ws, camera_id, camera_id, pump_power=pump_power)
        frame = camera_view(ws, camera_id, pump_power=pump_power)
        spot = centroid(frame)
        if not spot.detected:
            raise BeamLostError(f"no spot on {camera_id} at x={x:.1f}")
        pose = ws.component(camera_id).pose
        center_x, _ = sensor_center_px(frame)
        xs.append(pose.x)
        ys.append(pose.y + (spot.x_px - center_x) * frame.pixel_pitch_mm)
    ws = move_component(ws, camera_id, home)
    return ws, fit_beam_path(xs, ys)


# ---------------------------------------------------------------------------
# Gaussian-process optimizer


def latin_hypercube(rng: np.random.Generator, bounds, n: int) -> np.ndarray:
    """n stratified samples inside ``bounds``, one stratum per row per dim."""
    b = np.asarray(bounds, dtype=float)
    d = b.shape[0]
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    u = (strata + rng.uniform(0.0, 1.0, size=(n, d))) / n
    return b[:, 0] + u * (b[:, 1] - b[:, 0])


class GaussianProcess:
    """Squared-exponential GP regression with a fixed length scale.

    The signal variance tracks the observed values and the noise floor is a
    small fraction of their range, so the interpolant stays numerically tame
    whatever the objective's units are.
    """

    def __init__(self, length_scale: float, noise_scale: float = 1e-4):
        if length_scale <= 0:
            raise WorkspaceError("length_scale must be positive")
        self.length_scale = float(length_scale)
        self.noise_scale = float(noise_scale)
        self._X = None

    def _kernel(self, a, b):
        d2 = cdist(a, b, metric="sqeuclidean")
        return np.exp(-0.5 * d2 / (self.length_scale ** 2))

    def fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        self._X = X
        self._mean = float(y.mean())
        centered = y - self._mean
        self._sf2 = float(centered.var())
        if self._sf2 <= 0.0:
            self._sf2 = 1.0
        noise = (self.noise_scale * float(np.ptp(y))) ** 2 + 1e-10 * self._sf2
        K = self._sf2 * self._kernel(X, X) + noise * np.eye(len(X))
        self._factor = cho_factor(K, lower=True)
        self._alpha = cho_solve(self._factor, centered)
        return self

    def predict(self, Xs):
        if self._X is None:
            raise WorkspaceError("predict before fit")
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = self._sf2 * self._kernel(Xs, self._X)
        mu = self._mean + Ks @ self._alpha
        v = cho_solve(self._factor, Ks.T)
        var = self._sf2 - np.einsum("ij,ji->i", Ks, v)
        return mu, np.sqrt(np.clip(var, 1e-18, None))


def expected_improvement(mu, sigma, best, xi=0.0):
    """EI of sampling a point under a minimization objective."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    improve = best - xi - mu
    z = np.divide(improve, sigma, out=np.zeros_like(mu), where=sigma > 0)
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei = improve * ndtr(z) + sigma * pdf
    return np.where(sigma > 0, ei, np.maximum(improve, 0.0))


def _space_filling(rng, bounds, observed, n_candidates=1024):
    candidates = latin_hypercube(rng, bounds, n_candidates)
    gaps = cdist(candidates, observed).min(axis=1)
    return candidates[int(np.argmax(gaps))]


def _propose(rng, bounds, X, y, length_scale, noise_scale, explore_weight,
             mesh_per_axis, lhs_candidates, refine, exploit=False,
             warp="none"):
    b = np.asarray(bounds, dtype=float)
    d = b.shape[0]
    observed = np.vstack(X)
    values = np.asarray(y, dtype=float)
    if np.ptp(values) <= 0.0:
        # No gradient information at all yet: keep covering the box.
        return _space_filling(rng, b, observed)
    if warp == "rank":
        # Normal-scores transform: spots clipped at the sensor edge produce
        # a wide plateau of similar costs that swamps the surrogate's signal
        # variance; ranking flattens the plateau while keeping the low tail
        # steep. Monotone, so the argmin and success ordering are untouched.
        order = np.argsort(np.argsort(values, kind="stable"), kind="stable")
        values = ndtri((order + 0.5) / len(values))
    gp = GaussianProcess(length_scale, noise_scale).fit(observed, values)
    if d <= 2:
        axes = [np.linspace(lo, hi, mesh_per_axis) for lo, hi in b]
        cands = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    else:
        cands = latin_hypercube(rng, b, lhs_candidates)
    xi = explore_weight * float(values.std())
    best = float(values.min())

    if exploit:
        def score(x):
            return gp.predict(x)[0]
    else:
        def score(x):
            return -expected_improvement(*gp.predict(x), best, xi)

    scored = score(cands)
    pick = cands[int(np.argmin(scored))]
    if refine:
        def penalized(x):
            clipped = np.clip(x, b[:, 0], b[:, 1])
            return float(score(clipped[None, :])[0])

        res = minimize(penalized, pick, method="Nelder-Mead",
                       options={"xatol": 1e-3, "fatol": 1e-12, "maxfev": 80 * d})
        if np.all(np.isfinite(res.x)) and res.fun <= float(np.min(scored)):
            pick = np.clip(res.x, b[:, 0], b[:, 1])
    span = float(np.mean(b[:, 1] - b[:, 0]))
    if cdist(pick[None, :], observed).min() < 1e-8 * span:
        pick = _space_filling(rng, b, observed)
    return pick


def bayesian_optimize(objective, bounds, rng: np.random.Generator, *,
                      max_iters: int = 30, init_samples: int = 5,
                      length_scale: float = 15.0, explore_weight: float = 0.0,
                      noise_scale: float = 1e-4, success_cost=None,
                      no_signal_cost=None, mesh_per_axis: int = 64,
                      lhs_candidates: int = 4096, refine: bool = True,
                      exploit_every: int = 0, warp: str = "none"):
    """Minimize a black-box objective inside a box with a GP surrogate.

    Starts from a Latin-hypercube batch (always evaluated in full), then
    repeatedly samples the expected-improvement maximizer (dense mesh up to
    two dims, seeded candidates plus simplex refinement above). While the
    observations are all identical there is nothing to model, so it falls
    back to filling the largest gap. Stops once ``success_cost`` is reached.

    ``exploit_every=k`` makes every k-th proposal minimize the posterior
    mean instead of maximizing expected improvement. Funnel-shaped costs
    need this hedge: their far field stays high, so the surrogate's
    reversion to the prior mean keeps unexplored corners looking better
    than the true basin.

    ``warp="rank"`` fits the surrogate to normal scores of the observed
    values instead of the raw values, which suits objectives with wide
    near-constant plateaus; ``"none"`` fits the raw values.

    ``no_signal_cost`` marks the sentinel the objective returns when it sees
    nothing at all. If the whole initial batch comes back at or above it,
    the box is doubled about its center and re-sampled once; a second blank
    batch raises :class:`BeamLostError` carrying the trace. All draws come
    from ``rng``; equal seeds give equal runs.
    """
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] >= b[:, 1]):
        raise WorkspaceError("bounds must be a list of increasing (lo, hi) pairs")
    if max_iters < 1:
        raise WorkspaceError("max_iters must be at least 1")
    if warp not in ("none", "rank"):
        raise WorkspaceError(f"unknown warp {warp!r}")
    trace = OptTrace(method="bayes")
    X, y = [], []

    def evaluate(x):
        x = np.clip(np.asarray(x, dtype=float), b[:, 0], b[:, 1])
        value = float(objective(tuple(x)))
        X.append(x)
        y.append(value)
        trace.record(tuple(x), value)
        return value

    def succeeded():
        return success_cost is not None and trace.best_objective <= success_cost

    def blank():
        return no_signal_cost is not None and all(v >= no_signal_cost for v in y)

    for x0 in latin_hypercube(rng, b, min(init_samples, max_iters)):
        evaluate(x0)
    if blank():
        center = b.mean(axis=1)
        half = b[:, 1] - b[:, 0]
        b = np.column_stack([center - half, center + half])
        for x0 in latin_hypercube(rng, b, init_samples):
            evaluate(x0)
        if blank():
            trace.meta["success_cost"] = success_cost
            raise BeamLostError(
                "no signal in the initial batch even after widening the "
                "search box", trace=trace)
    proposals = 0
    while len(y) < max_iters and not succeeded():
        proposals += 1
        exploit = exploit_every > 0 and proposals % exploit_every == 0
        evaluate(_propose(rng, b, X, y, length_scale, noise_scale,
                          explore_weight, mesh_per_axis, lhs_candidates,
                          refine, exploit=exploit, warp=warp))
    trace.converged = succeeded() if success_cost is not None else True
    trace.meta["success_cost"] = success_cost
    return trace.best_params, trace.best_objective, trace


# ---------------------------------------------------------------------------
# Instrument-level search stages


@dataclass(frozen=True)
class AngularOptConfig:
    """Settings for knob-space mirror alignment."""

    span_deg: float = 90.0
    max_iters: int = 30
    init_samples: int = 5
    length_scale_deg: float = 30.0
    explore_weight: float = 0.0
    noise_scale: float = 1e-4
    success_radius_px: float | None = None
    exploit_every: int = 2
    warp: str = "none"


def align_resonator(ws: Workspace, mirror_id: str, camera_id: str, reference,
                    rng: np.random.Generator, cfg: AngularOptConfig | None = None,
                    reference_scale=None, pump_power=None,
                    noise_floor=DEFAULT_NOISE_FLOOR):
    """Point a cavity mirror so its reflection lands back on the main spot.

    ``reference`` is a frame captured with the reflection absent; the live
    frame minus that reference (both contrast-stretched, the reference
    optionally rescaled when the new mirror also attenuates the main beam)
    isolates the reflected spot. The cost is the spot's pixel distance from
    the reference centroid, with an off-sensor penalty of two sensor
    diagonals, minimized over the two knob readings. The default success
    radius is the reference spot's rendered 1/e^2 radius in pixels.
    """
    cfg = cfg or AngularOptConfig()
    knobs = ws.component(mirror_id).knobs
    if knobs is None:
        raise WorkspaceError(f"component {mirror_id!r} has no knobs to align")
    anchor = centroid(reference, noise_floor)
    if not anchor.detected:
        raise BeamLostError(f"reference frame for {mirror_id} shows no spot")
    scaled = reference.scaled(reference_scale) if reference_scale is not None else reference
    reference_log = log_transform(scaled)
    penalty = 2.0 * math.hypot(reference.width, reference.height)
    radius = cfg.success_radius_px
    if radius is None:
        stats = beam_stats(reference, noise_floor)
        radius = 2.0 * max(stats.sigma_px)

    actions0 = ws.action_count
    state = {"ws": ws}

    def objective(readings):
        h, v = readings
        state["ws"] = set_knob_readings(state["ws"], mirror_id, h, v)
        frame = camera_view(state["ws"], camera_id, pump_power=pump_power)
        diff = subtract_reference(log_transform(frame), reference_log)
        spot = centroid(diff, noise_floor)
        if not spot.detected:
            return penalty
        return math.hypot(spot.x_px - anchor.x_px, spot.y_px - anchor.y_px)

    bounds = [(knobs.h_deg - cfg.span_deg, knobs.h_deg + cfg.span_deg),
              (knobs.v_deg - cfg.span_deg, knobs.v_deg + cfg.span_deg)]
    best, _, trace = bayesian_optimize(
        objective, bounds, rng,
        max_iters=cfg.max_iters, init_samples=cfg.init_samples,
        length_scale=cfg.length_scale_deg, explore_weight=cfg.explore_weight,
        noise_scale=cfg.noise_scale, success_cost=radius,
        no_signal_cost=penalty, exploit_every=cfg.exploit_every,
        warp=cfg.warp)
    state["ws"] = set_knob_readings(state["ws"], mirror_id, *best)
    trace.wall_actions = state["ws"].action_count - actions0
    trace.meta.update(mirror=mirror_id, camera=camera_id,
                      success_radius_px=radius, objective_units="px")
    return state["ws"], trace


def crystal_sweep(ws: Workspace, crystal_id: str, camera_id: str,
                  theta_range=(0.0, 3.0), step_deg: float = 0.2,
                  pump_power=None, noise_floor=DEFAULT_NOISE_FLOOR):
    """Grid-scan the crystal angle and park it where emission peaks.

    Raises :class:`NoLasingError` when the whole range stays dark. The trace
    records the negated camera total per angle.
    """
    lo, hi = float(theta_range[0]), float(theta_range[1])
    if step_deg <= 0 or hi <= lo:
        raise WorkspaceError("need an increasing range and positive step")
    actions0 = ws.action_count
    trace = OptTrace(method="sweep")
    best_theta = None
    best_total = 0.0
    steps = int(round((hi - lo) / step_deg))
    for i in range(steps + 1):
        theta = lo + i * step_deg
        ws = rotate_crystal(ws, crystal_id, theta)
        frame = camera_view(ws, camera_id, pump_power=pump_power)
        spot = centroid(frame, noise_floor)
        total = spot.total_intensity if spot.detected else 0.0
        trace.record((theta,), -total)
        if spot.detected and total > best_total:
            best_theta, best_total = theta, total
    if best_theta is None:
        raise NoLasingError(
            f"no emission on {camera_id} for crystal angles {lo} to {hi}")
    ws = rotate_crystal(ws, crystal_id, best_theta)
    trace.converged = True
    trace.wall_actions = ws.action_count - actions0
    trace.meta.update(crystal=crystal_id, camera=camera_id,
                      theta_deg=best_theta, objective="neg_total_intensity")
    return ws, best_theta, trace


def optimize_mode(ws: Workspace, knob_axes, camera_id: str,
                  rng: np.random.Generator, *, span_deg: float = 15.0,
                  max_iters: int = 30, init_samples: int = 5,
                  length_scale_deg: float = 15.0, explore_weight: float = 0.0,
                  noise_scale: float = 1e-4, sigma_ref_px=None,
                  objective_kind: str = "sqrtI_over_M2", success_value=None,
                  pump_power=None, noise_floor=DEFAULT_NOISE_FLOOR):
    """Joint knob search that maximizes emission quality on a camera.

    ``knob_axes`` lists up to four ``(component_id, axis)`` pairs. The score
    is total spot intensity (square-rooted under ``sqrtI_over_M2`` to soften
    the peak, linear under ``I_over_M2``) divided by the beam-quality proxy
    when a fundamental-mode reference width is supplied; a dark frame scores
    zero. Stops early once the score reaches ``success_value``.
    """
    if objective_kind not in ("sqrtI_over_M2", "I_over_M2"):
        raise WorkspaceError(f"unknown objective kind {objective_kind!r}")
    use_sqrt = objective_kind == "sqrtI_over_M2"
    axes = [(str(cid), str(axis)) for cid, axis in knob_axes]
    if not 1 <= len(axes) <= 4:
        raise WorkspaceError("optimize_mode takes one to four knob axes")
    for cid, axis in axes:
        if axis not in ("h", "v"):
            raise WorkspaceError(f"knob axis must be 'h' or 'v', got {axis!r}")
        if ws.component(cid).knobs is None:
            raise WorkspaceError(f"component {cid!r} has no knobs")

    def reading(w, cid, axis):
        knobs = w.component(cid).knobs
        return knobs.h_deg if axis == "h" else knobs.v_deg

    actions0 = ws.action_count
    state = {"ws": ws}

    def apply(readings):
        w = state["ws"]
        for (cid, axis), value in zip(axes, readings):
            w = turn_knob(w, cid, axis, float(value) - reading(w, cid, axis))
        state["ws"] = w

    def objective(readings):
        apply(readings)
        frame = camera_view(state["ws"], camera_id, pump_power=pump_power)
        stats = beam_stats(frame, noise_floor, sigma_ref_px=sigma_ref_px)
        if not stats.detected:
            return 0.0
        strength = math.sqrt(stats.total_intensity) if use_sqrt else stats.total_intensity
        quality = stats.m_squared if stats.m_squared is not None else 1.0
        return -strength / quality

    bounds = [(reading(ws, cid, axis) - span_deg, reading(ws, cid, axis) + span_deg)
              for cid, axis in axes]
    success_cost = -float(success_value) if success_value is not None else None
    best, _, trace = bayesian_optimize(
        objective, bounds, rng,
        max_iters=max_iters, init_samples=init_samples,
        length_scale=length_scale_deg, explore_weight=explore_weight,
        noise_scale=noise_scale, success_cost=success_cost)
    apply(best)
    trace.wall_actions = state["ws"].action_count - actions0
    trace.meta.update(camera=camera_id, knob_axes=[list(a) for a in axes],
                      objective=f"neg_{objective_kind}")
    return state["ws"], trace
