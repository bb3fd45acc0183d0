"""Paraxial 2-D beam propagation, camera frames, and the cavity response.

Geometry: x runs along the table, y is the in-plane transverse axis, z the
out-of-plane axis. Rays carry slopes ``sy = dy/dx`` and ``sz = dz/dx`` plus a
propagation sign, so the same update rules serve forward and retro beams.
Components sit nominally perpendicular to the axis:

* a thin lens of focal length f adds ``-sign * offset / f`` to each slope,
* a mirror with in-plane tilt error d flips the sign and maps the slope to
  ``2 d - s`` (the retro beam of an untilted mirror retraces the incoming
  line mirrored about the mirror normal),
* a beam splitter forwards a pick-off into its side arm, folded onto a
  virtual plane one arm length beyond the splitter.

Gaussian beam size propagates through the complex q parameter. The lasing
behaviour itself is phenomenological: a misalignment metric built from
mirror tilts, lens offset, and crystal angle sets the threshold, the output
power above it, and the transverse mode order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import MissingComponentError, TraceError, WorkspaceError
from .simcore import Component, ComponentKind, Workspace

_EPS_X = 1e-9


@dataclass(frozen=True)
class PhysicsConfig:
    """Simulation constants. Layouts may override any field."""

    pump_wavelength_mm: float = 8.08e-4
    laser_wavelength_mm: float = 1.064e-3
    pump_waist_mm: float = 0.3
    laser_waist_mm: float = 0.25
    p_threshold: float = 1.0
    slope_efficiency: float = 0.3
    threshold_curvature: float = 0.05
    m_cutoff: float = 4.0
    mode_band_edges: tuple = (1.3, 2.3, 3.2, 4.0)
    ref_tilt_deg: float = 0.02
    ref_lens_offset_mm: float = 0.3
    ref_crystal_deg: float = 0.2
    fluorescence_scale: float = 0.08
    aperture_mm: float = 10.0
    max_bounces: int = 6
    min_power_fraction: float = 1e-5

    def to_dict(self):
        d = {
            "pump_wavelength_mm": self.pump_wavelength_mm,
            "laser_wavelength_mm": self.laser_wavelength_mm,
            "pump_waist_mm": self.pump_waist_mm,
            "laser_waist_mm": self.laser_waist_mm,
            "p_threshold": self.p_threshold,
            "slope_efficiency": self.slope_efficiency,
            "threshold_curvature": self.threshold_curvature,
            "m_cutoff": self.m_cutoff,
            "mode_band_edges": list(self.mode_band_edges),
            "ref_tilt_deg": self.ref_tilt_deg,
            "ref_lens_offset_mm": self.ref_lens_offset_mm,
            "ref_crystal_deg": self.ref_crystal_deg,
            "fluorescence_scale": self.fluorescence_scale,
            "aperture_mm": self.aperture_mm,
            "max_bounces": self.max_bounces,
            "min_power_fraction": self.min_power_fraction,
        }
        return d

    @classmethod
    def from_dict(cls, d):
        kwargs = dict(d)
        if "mode_band_edges" in kwargs:
            kwargs["mode_band_edges"] = tuple(kwargs["mode_band_edges"])
        return cls(**kwargs)


@dataclass(frozen=True)
class BeamSegment:
    """One straight leg of a traced beam."""

    x0: float
    y0: float
    z0: float
    x1: float
    y1: float
    z1: float
    sy: float
    sz: float
    sign: int
    power: float
    wavelength: str
    w_mm: float
    n_bounces: int
    path: tuple = ()

    @property
    def origin(self):
        return (self.x0, self.y0)

    @property
    def direction(self):
        """Unit propagation vector in the table plane."""
        v = np.array([self.sign, self.sign * self.sy], dtype=float)
        return v / np.linalg.norm(v)


@dataclass(frozen=True)
class CameraHit:
    """A beam arriving at a camera sensor plane."""

    camera_id: str
    u_mm: float
    v_mm: float
    w_mm: float
    power: float
    wavelength: str
    n_bounces: int
    path: tuple = ()
    mode_order: int = 0


@dataclass
class TraceResult:
    segments: list = field(default_factory=list)
    hits: dict = field(default_factory=dict)
    primary_at: dict = field(default_factory=dict)

    def camera_hits(self, camera_id):
        return self.hits.get(camera_id, [])


@dataclass(frozen=True)
class CavityState:
    """Phenomenological lasing state of the assembled resonator."""

    lasing: bool
    output_power: float
    mode_order: int
    misalignment: float
    threshold: float
    pump_power: float

    def __post_init__(self):
        if self.lasing and self.output_power <= 0:
            raise WorkspaceError("lasing requires positive output power")


class CameraFrame:
    """Normalized intensity image; values clipped to [0, 1]."""

    def __init__(self, intensities, pixel_pitch_mm, camera_id=""):
        arr = np.asarray(intensities, dtype=np.float64)
        if arr.ndim != 2:
            raise WorkspaceError("frame must be 2-D")
        if not np.all(np.isfinite(arr)):
            raise WorkspaceError("frame contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0 + 1e-12:
            raise WorkspaceError("frame intensities must lie in [0, 1]")
        self.intensities = arr
        self.pixel_pitch_mm = float(pixel_pitch_mm)
        self.camera_id = camera_id

    @property
    def height(self):
        return self.intensities.shape[0]

    @property
    def width(self):
        return self.intensities.shape[1]

    def scaled(self, factor):
        """Frame with intensities scaled by ``factor`` (clipped to [0,1])."""
        return CameraFrame(np.clip(self.intensities * factor, 0.0, 1.0),
                           self.pixel_pitch_mm, self.camera_id)


# ---------------------------------------------------------------------------
# Gaussian beam bookkeeping


def q_at_waist(waist_mm, wavelength_mm):
    z_r = math.pi * waist_mm * waist_mm / wavelength_mm
    return complex(0.0, z_r)


def beam_radius(q, wavelength_mm):
    inv_q = 1.0 / q
    return math.sqrt(-wavelength_mm / (math.pi * inv_q.imag))


def q_through_lens(q, focal_mm):
    return q / (1.0 - q / focal_mm)


# ---------------------------------------------------------------------------
# Trace machinery


@dataclass
class _Ray:
    x: float
    y: float
    z: float
    sy: float
    sz: float
    sign: int
    power: float
    wavelength: str
    q: complex
    n_bounces: int
    path: tuple


def _mirror_tilts_rad(comp: Component):
    if comp.knobs is None:
        h = v = 0.0
    else:
        h = comp.knobs.tilt_h_deg
        v = comp.knobs.tilt_v_deg
    h += comp.pose.yaw
    return math.radians(h), math.radians(v)


def _camera_geometry(comp: Component):
    width = int(comp.param("width_px", 640))
    height = int(comp.param("height_px", 480))
    pitch = float(comp.param("pixel_pitch_mm", 0.01))
    return width, height, pitch


def _aperture(comp: Component, cfg: PhysicsConfig):
    return float(comp.param("aperture_mm", cfg.aperture_mm))


def trace_beam(ws: Workspace) -> TraceResult:
    """Propagate the pump through every on-path component.

    Mirrors split into transmitted and retro branches, the beam splitter
    feeds its side-arm camera, and branches die on blocks, filters, camera
    sensors, bounce limits, or the power floor. Results are deterministic:
    branches are processed in creation order.
    """
    cfg: PhysicsConfig = ws.physics or PhysicsConfig()
    pumps = ws.find_kind(ComponentKind.PUMP_SOURCE)
    if not pumps:
        raise TraceError("no pump source on the table")
    pump = pumps[0]
    power0 = float(pump.param("power", 1.0))
    waist = float(pump.param("waist_mm", cfg.pump_waist_mm))
    ray0 = _Ray(
        x=pump.pose.x,
        y=pump.pose.y,
        z=pump.pose.z,
        sy=math.tan(math.radians(pump.pose.yaw)),
        sz=0.0,
        sign=1,
        power=power0,
        wavelength="pump",
        q=q_at_waist(waist, cfg.pump_wavelength_mm),
        n_bounces=0,
        path=(pump.id,),
    )
    result = TraceResult(hits={})
    _run_rays(ws, [ray0], result, power_floor=power0 * cfg.min_power_fraction)
    return result


def _run_rays(ws: Workspace, queue, result: TraceResult, power_floor):
    cfg: PhysicsConfig = ws.physics or PhysicsConfig()
    wavelength_mm = {
        "pump": cfg.pump_wavelength_mm,
        "laser": cfg.laser_wavelength_mm,
    }
    comps = ws.components
    while queue:
        ray = queue.pop(0)
        if ray.power < power_floor or ray.n_bounces > cfg.max_bounces:
            continue
        lam = wavelength_mm[ray.wavelength]
        nxt = _next_component(comps, ray, cfg)
        if nxt is None:
            _record_segment(result, ray, _table_exit_x(ws, ray), lam)
            continue
        comp, y_at, z_at = nxt
        dx = comp.pose.x - ray.x
        _record_segment(result, ray, comp.pose.x, lam)
        ray = replace(ray, x=comp.pose.x, y=y_at, z=z_at, q=ray.q + abs(dx),
                      path=ray.path + (comp.id,))
        if ray.wavelength == "pump" and ray.n_bounces == 0 and ray.sign == 1:
            result.primary_at[comp.id] = (y_at, z_at, ray.sy, ray.sz, ray.power)

        kind = comp.kind
        if kind == ComponentKind.CAMERA:
            _record_camera_hit(result, comp, ray, y_at, z_at, lam)
            continue
        if kind == ComponentKind.BEAM_BLOCK:
            continue
        if kind == ComponentKind.PUMP_SOURCE:
            continue
        if kind == ComponentKind.NDF:
            tau = float(comp.param("transmittance", 1.0))
            queue.append(replace(ray, power=ray.power * tau))
            continue
        if kind == ComponentKind.BPF:
            if ray.wavelength == comp.param("passband", "laser"):
                queue.append(ray)
            continue
        if kind == ComponentKind.CRYSTAL:
            queue.append(ray)
            continue
        if kind == ComponentKind.LENS:
            queue.append(_through_lens(ray, comp, float(comp.param("focal_length_mm"))))
            continue
        if kind == ComponentKind.BEAM_SPLITTER:
            _record_side_hit(ws, result, comp, ray, y_at, z_at, lam)
            ratio = float(comp.param("split_ratio", 0.5))
            queue.append(replace(ray, power=ray.power * (1.0 - ratio)))
            continue
        if kind in (ComponentKind.MIRROR_IC, ComponentKind.MIRROR_OC):
            t = float(comp.param("pump_transmission", 0.5))
            r = float(comp.param("pump_reflectivity", 1.0 - t))
            if ray.wavelength == "laser":
                t, r = 1.0, 0.0
            transmitted = replace(ray, power=ray.power * t)
            f_sub = comp.param("substrate_focal_mm")
            if f_sub:
                transmitted = _through_lens(transmitted, comp, float(f_sub))
            queue.append(transmitted)
            if r > 0.0:
                th, tv = _mirror_tilts_rad(comp)
                queue.append(replace(
                    ray,
                    sy=2.0 * th - ray.sy,
                    sz=2.0 * tv - ray.sz,
                    sign=-ray.sign,
                    power=ray.power * r,
                    n_bounces=ray.n_bounces + 1,
                ))
            continue
        raise TraceError(f"unhandled component kind {kind}")


def _next_component(comps, ray: _Ray, cfg: PhysicsConfig):
    best = None
    for c in comps:
        dx = (c.pose.x - ray.x) * ray.sign
        if dx <= _EPS_X:
            continue
        y_at = ray.y + ray.sy * (c.pose.x - ray.x)
        z_at = ray.z + ray.sz * (c.pose.x - ray.x)
        if c.kind == ComponentKind.CAMERA:
            half = float(c.param("body_halfwidth_mm", 15.0))
        else:
            half = _aperture(c, cfg)
        if abs(y_at - c.pose.y) > half or abs(z_at - c.pose.z) > half:
            continue
        if best is None or dx < best[0]:
            best = (dx, c, y_at, z_at)
    if best is None:
        return None
    return best[1], best[2], best[3]


def _table_exit_x(ws: Workspace, ray: _Ray):
    (xmin, xmax), _ = ws.table_bounds
    return xmax if ray.sign > 0 else xmin


def _record_segment(result: TraceResult, ray: _Ray, x1, lam):
    y1 = ray.y + ray.sy * (x1 - ray.x)
    z1 = ray.z + ray.sz * (x1 - ray.x)
    result.segments.append(BeamSegment(
        x0=ray.x, y0=ray.y, z0=ray.z, x1=x1, y1=y1, z1=z1,
        sy=ray.sy, sz=ray.sz, sign=ray.sign, power=ray.power,
        wavelength=ray.wavelength, w_mm=beam_radius(ray.q, lam),
        n_bounces=ray.n_bounces, path=ray.path,
    ))


def _through_lens(ray: _Ray, comp: Component, focal_mm: float) -> _Ray:
    y_rel = ray.y - comp.pose.y
    z_rel = ray.z - comp.pose.z
    return replace(
        ray,
        sy=ray.sy - ray.sign * y_rel / focal_mm,
        sz=ray.sz - ray.sign * z_rel / focal_mm,
        q=q_through_lens(ray.q, focal_mm),
    )


def _record_camera_hit(result: TraceResult, cam: Component, ray: _Ray,
                       y_at, z_at, lam, mode_order=0):
    hit = CameraHit(
        camera_id=cam.id,
        u_mm=y_at - cam.pose.y,
        v_mm=z_at - cam.pose.z,
        w_mm=beam_radius(ray.q, lam),
        power=ray.power,
        wavelength=ray.wavelength,
        n_bounces=ray.n_bounces,
        path=ray.path,
        mode_order=mode_order,
    )
    result.hits.setdefault(cam.id, []).append(hit)


def _record_side_hit(ws: Workspace, result: TraceResult, bs: Component,
                     ray: _Ray, y_at, z_at, lam):
    cam_id = bs.param("arm_camera")
    if cam_id is None or not ws.has(cam_id):
        return
    cam = ws.component(cam_id)
    arm = abs(cam.pose.y - bs.pose.y)
    ratio = float(bs.param("split_ratio", 0.5))
    u = (y_at - bs.pose.y) + ray.sign * ray.sy * arm - (cam.pose.x - bs.pose.x)
    v = (z_at - bs.pose.z) + ray.sign * ray.sz * arm - cam.pose.z
    hit = CameraHit(
        camera_id=cam_id,
        u_mm=u,
        v_mm=v,
        w_mm=beam_radius(ray.q + arm, lam),
        power=ray.power * ratio,
        wavelength=ray.wavelength,
        n_bounces=ray.n_bounces,
        path=ray.path + (cam_id,),
    )
    result.hits.setdefault(cam_id, []).append(hit)


# ---------------------------------------------------------------------------
# Derived views


def primary_hit(trace: TraceResult, camera_id: str):
    """The direct pump hit (no reflections) at a camera, if any."""
    for h in trace.camera_hits(camera_id):
        if h.wavelength == "pump" and h.n_bounces == 0:
            return h
    return None


def secondary_beam(ws: Workspace, camera_id: str):
    """Camera hit of the lowest-order mirror-reflected beam.

    At the output camera this is the single in-cavity round trip leaving
    through the out-coupler (both mirror tilt errors, each doubled on
    reflection); at the splitter side camera it is the out-coupler retro
    pick-off. Returns None when blocked or off the sensor.
    """
    if not ws.find_kind(ComponentKind.MIRROR_IC) or not ws.find_kind(ComponentKind.MIRROR_OC):
        raise MissingComponentError("secondary beam needs both cavity mirrors placed")
    cam = ws.component(camera_id)
    width, height, pitch = _camera_geometry(cam)
    half_u = width * pitch / 2.0
    half_v = height * pitch / 2.0
    tr = trace_beam(ws)
    reflected = [h for h in tr.camera_hits(camera_id)
                 if h.wavelength == "pump" and h.n_bounces >= 1]
    if not reflected:
        return None
    reflected.sort(key=lambda h: (h.n_bounces, -h.power))
    hit = reflected[0]
    if abs(hit.u_mm) > half_u or abs(hit.v_mm) > half_v:
        return None
    return hit


def render_frame(hits, camera: Component) -> CameraFrame:
    """Rasterize camera hits into a normalized frame.

    Spot amplitude is the hit power scaled by the camera's per-wavelength
    gain; the profile is a Hermite-Gaussian of the hit's mode order along
    the sensor x axis. Overlapping spots add, then the frame clips at 1.
    """
    if isinstance(hits, CameraHit):
        hits = [hits]
    width, height, pitch = _camera_geometry(camera)
    img = np.zeros((height, width), dtype=np.float64)
    for hit in hits:
        gain = float(camera.param(f"gain_{hit.wavelength}", 1.0))
        amp = gain * hit.power
        if amp <= 0.0:
            continue
        cx = (width - 1) / 2.0 + hit.u_mm / pitch
        cy = (height - 1) / 2.0 + hit.v_mm / pitch
        _kernels.render_spot(img, cx, cy, hit.w_mm / pitch, amp, hit.mode_order)
    np.clip(img, 0.0, 1.0, out=img)
    return CameraFrame(img, pitch, camera.id)


def cavity_response(ws: Workspace, pump_power=None, trace=None) -> CavityState:
    """Lasing state from the phenomenological misalignment model.

    The misalignment metric is the root of summed squared normalized errors
    (each mirror's total tilt, transverse lens offset at the lens, crystal
    angle error). Threshold grows quadratically with the metric; output is
    linear above threshold; the transverse mode order is the band the metric
    falls into.
    """
    cfg: PhysicsConfig = ws.physics or PhysicsConfig()
    missing = [k.value for k in (ComponentKind.MIRROR_IC, ComponentKind.MIRROR_OC,
                                 ComponentKind.LENS, ComponentKind.CRYSTAL)
               if not ws.find_kind(k)]
    if missing:
        raise MissingComponentError(f"cavity incomplete, missing: {', '.join(missing)}")
    ic = ws.find_kind(ComponentKind.MIRROR_IC)[0]
    oc = ws.find_kind(ComponentKind.MIRROR_OC)[0]
    lens = ws.find_kind(ComponentKind.LENS)[0]
    crystal = ws.find_kind(ComponentKind.CRYSTAL)[0]

    if pump_power is None:
        pump = ws.find_kind(ComponentKind.PUMP_SOURCE)
        if not pump:
            raise TraceError("no pump source on the table")
        pump_power = float(pump[0].param("power", 1.0))
    pump_power = float(pump_power)

    if trace is None:
        trace = trace_beam(ws)

    th_ic, tv_ic = _mirror_tilts_rad(ic)
    th_oc, tv_oc = _mirror_tilts_rad(oc)
    tilt_ic = math.degrees(math.hypot(th_ic, tv_ic))
    tilt_oc = math.degrees(math.hypot(th_oc, tv_oc))
    arrival = trace.primary_at.get(lens.id)
    if arrival is None:
        lens_off = float("inf")
    else:
        lens_off = math.hypot(arrival[0] - lens.pose.y, arrival[1] - lens.pose.z)
    theta = float(crystal.param("theta_deg", 0.0))
    theta_opt = float(crystal.param("theta_opt_deg", 0.0))

    pumped = crystal.id in trace.primary_at
    if not pumped or not math.isfinite(lens_off):
        m = float("inf")
    else:
        m = math.sqrt(
            (tilt_ic / cfg.ref_tilt_deg) ** 2
            + (tilt_oc / cfg.ref_tilt_deg) ** 2
            + (lens_off / cfg.ref_lens_offset_mm) ** 2
            + ((theta - theta_opt) / cfg.ref_crystal_deg) ** 2
        )

    if math.isfinite(m):
        threshold = cfg.p_threshold * (1.0 + cfg.threshold_curvature * m * m)
    else:
        threshold = float("inf")
    lasing = bool(pumped and m < cfg.m_cutoff and pump_power > threshold)
    output = cfg.slope_efficiency * (pump_power - threshold) if lasing else 0.0

    mode_order = len(cfg.mode_band_edges)
    for n, edge in enumerate(cfg.mode_band_edges):
        if m < edge:
            mode_order = n
            break
    return CavityState(
        lasing=lasing,
        output_power=output,
        mode_order=mode_order,
        misalignment=m,
        threshold=threshold,
        pump_power=pump_power,
    )


def fluorescence_power(cav: CavityState, cfg: PhysicsConfig) -> float:
    """Sub-threshold glow of the pumped crystal at the laser wavelength.

    The excited population grows with pump power but clamps once the cavity
    lases, and emission that actually reaches the output drops as the
    resonator walks away from alignment. This is what a camera behind the
    line filter sees while the cavity is dark, and it grades smoothly in the
    misalignment metric, which is what lets knob-space searches climb back
    toward lasing instead of wandering a flat floor.
    """
    m = cav.misalignment
    if not (math.isfinite(m) and math.isfinite(cav.threshold)):
        return 0.0
    clamped = min(cav.pump_power, cav.threshold)
    return cfg.fluorescence_scale * clamped / (1.0 + cfg.threshold_curvature * m * m)


def _laser_hits(ws: Workspace, cav: CavityState, trace: TraceResult):
    """Trace laser-wavelength emission (lasing plus glow) from the crystal."""
    cfg: PhysicsConfig = ws.physics or PhysicsConfig()
    crystal = ws.find_kind(ComponentKind.CRYSTAL)[0]
    arrival = trace.primary_at.get(crystal.id)
    power = cav.output_power + fluorescence_power(cav, cfg)
    if arrival is None or power <= 0.0:
        return []
    y, z, sy, sz, _ = arrival
    ray = _Ray(
        x=crystal.pose.x, y=y, z=z, sy=sy, sz=sz, sign=1,
        power=power, wavelength="laser",
        q=q_at_waist(cfg.laser_waist_mm, cfg.laser_wavelength_mm),
        n_bounces=0, path=(crystal.id,),
    )
    sub = TraceResult(hits={})
    _run_rays(ws, [ray], sub, power_floor=power * cfg.min_power_fraction)
    out = []
    for hits in sub.hits.values():
        for h in hits:
            out.append(replace(h, mode_order=cav.mode_order))
    return out


def camera_view(ws: Workspace, camera_id: str, pump_power=None) -> CameraFrame:
    """Render what a camera currently sees: traced pump beams plus the
    laser-wavelength emission of the assembled cavity."""
    cam = ws.component(camera_id)
    if cam.kind != ComponentKind.CAMERA:
        raise WorkspaceError(f"{camera_id!r} is not a camera")
    tr = trace_beam(ws)
    hits = list(tr.camera_hits(camera_id))
    kinds_needed = (ComponentKind.MIRROR_IC, ComponentKind.MIRROR_OC,
                    ComponentKind.LENS, ComponentKind.CRYSTAL)
    if all(ws.find_kind(k) for k in kinds_needed):
        cav = cavity_response(ws, pump_power=pump_power, trace=tr)
        hits.extend(h for h in _laser_hits(ws, cav, tr)
                    if h.camera_id == camera_id)
    return render_frame(hits, cam)
