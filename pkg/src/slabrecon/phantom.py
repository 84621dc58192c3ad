"""Analytic layered phantom: a curved, spiral-laminated structure.

The phantom mimics the geometry that matters for multi-slab validation: a
bright core wrapped by alternating bright/dark laminae (rolled bilaminar
ribbon), a dark outer rim, a surrounding homogeneous matrix and empty
background. The main axis runs along y (the slice axis), bows gently in z,
widens at the anterior end, and the lamina pattern swirls and rolls slowly
along the axis. A deterministic smooth modulation of the bright lamina
decorrelates neighbouring slices so that slice-redundancy statistics have
something to measure. Everything is a pure function of the voxel-centre
coordinates: two calls produce bit-identical volumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .geometry import AffineGeometry
from .qc import EllipsoidROI
from .volume import Volume

DEFAULT_INPLANE_FOV_MM = (26.4, 19.2)


@dataclass(frozen=True)
class PhantomSpec:
    """Shape and intensity parameters of the synthetic structure."""

    length_mm: float = 42.0
    height_mm: float = 7.0
    body_width_mm: float = 10.0
    head_width_mm: float = 17.0

    srlm_thickness_mm: float = 0.7      # dark lamina, plausible range 0.5-1.0
    sp_thickness_mm: float = 1.0        # bright lamina, plausible range 0.5-1.5
    alveus_thickness_mm: float = 0.3    # dark outer rim

    intensity_bright: float = 150.0     # bright laminae and core
    intensity_dark: float = 80.0        # dark laminae and rim
    intensity_matrix: float = 100.0     # surrounding homogeneous tissue
    intensity_background: float = 0.0

    # curvature of the rolled cross-section and of the main axis
    axis_bow_mm: float = 1.2            # z-deflection of the main axis
    swirl_rad_per_mm: float = 0.02      # in-plane rotation of the roll along y
    # radial breathing of the laminae along the axis; the period is three
    # slice thicknesses so 1.2 mm and 2.4 mm slice lags decorrelate equally
    roll_amplitude_mm: float = 0.2
    roll_period_mm: float = 3.6
    head_falloff: float = 0.18          # axial extent of the head widening
    core_fraction: float = 0.34         # core radius as fraction of half-width
    matrix_margin_mm: tuple[float, float, float] = (3.2, 3.0, 2.6)  # x, y, z

    # along-axis modulation of the bright lamina (slice decorrelation)
    texture_amplitude: float = 0.25
    # half-width of the smooth transition at tissue boundaries; keeps the
    # phantom band-limited like a real acquisition instead of piecewise
    # constant, so resampling error reflects the method rather than voxel
    # quantization of hard edges
    edge_softness_mm: float = 0.25

    def __post_init__(self):
        if self.head_width_mm <= self.body_width_mm:
            raise InvalidInput("head width must exceed body width")
        for th in (self.srlm_thickness_mm, self.sp_thickness_mm, self.alveus_thickness_mm):
            if not 0 < th < self.height_mm:
                raise InvalidInput("layer thicknesses must be positive and below height")
        for i in (self.intensity_bright, self.intensity_dark,
                  self.intensity_matrix, self.intensity_background):
            if i < 0:
                raise InvalidInput("intensities must be >= 0")
        if not 0 <= self.texture_amplitude < 0.34:
            # bright lamina must stay brighter than the matrix
            raise InvalidInput("texture amplitude must be in [0, 0.34)")


@dataclass(frozen=True)
class GeneratedPhantom:
    volume: Volume
    rois: dict = field(default_factory=dict)


# fixed plane-wave table for the lamina modulation: columns kx, ky, kz
# (rad/mm), phase (rad), amplitude. ky stays below the slice Nyquist rate
# (2.6 rad/mm at 1.2 mm slices) so rigid resampling stays faithful. The
# dominant along-axis wavenumber is 2*pi/3.6, which decorrelates 1.2 mm
# and 2.4 mm slice lags by the same amount (cos 120 deg = cos 240 deg):
# slice-redundancy baselines stay flat while identical slices stand out.
_KY3 = 2.0 * np.pi / 3.6
_TEXTURE_WAVES = np.array([
    [0.52, _KY3, 1.71, 0.93, 1.00],
    [1.33, _KY3, 0.47, 5.61, 0.90],
    [1.92, _KY3, 1.18, 2.44, 0.95],
    [0.77, _KY3, 1.95, 4.07, 0.85],
    [1.58, _KY3, 0.66, 1.18, 0.90],
    [0.44, _KY3, 1.42, 3.32, 0.80],
    [1.12, _KY3, 0.86, 5.02, 0.95],
    [1.76, _KY3, 1.60, 0.31, 0.85],
    [0.63, 0.42, 0.94, 2.85, 0.35],
    [1.41, 0.28, 1.33, 4.66, 0.35],
])


def _texture(x, y, z):
    acc = np.zeros(np.broadcast(x, y, z).shape)
    for kx, ky, kz, phase, amp in _TEXTURE_WAVES:
        acc += amp * np.cos(kx * x + ky * y + kz * z + phase)
    return acc / _TEXTURE_WAVES[:, 4].sum()


def phantom_geometry(final_slices: int,
                     spacing=(0.3, 1.2, 0.3),
                     inplane_fov_mm=DEFAULT_INPLANE_FOV_MM) -> AffineGeometry:
    """Default axis-aligned grid: the stack covers the full structure length."""
    sx, sy, sz = spacing
    nx = int(round(inplane_fov_mm[0] / sx))
    nz = int(round(inplane_fov_mm[1] / sz))
    return AffineGeometry((nx, int(final_slices), nz), (sx, sy, sz))


def canonical_rois(spec: PhantomSpec, geometry: AffineGeometry) -> dict:
    """GM / WM / BG ellipsoids placed where the phantom guarantees pure tissue."""
    cx, cy, cz = geometry.world_center()
    y0 = cy - spec.length_mm / 2.0
    t_gm = 0.10
    y_gm = y0 + t_gm * spec.length_mm
    az_gm = cz + spec.axis_bow_mm * np.cos(np.pi * t_gm)
    wm_off = spec.height_mm / 2.0 + spec.matrix_margin_mm[2] / 2.0
    return {
        "GM": EllipsoidROI((cx, y_gm, az_gm), (0.9, 1.6, 0.7), label="GM"),
        "WM": EllipsoidROI((cx, cy, cz - wm_off), (2.5, 3.0, 0.8), label="WM"),
        "BG": EllipsoidROI((2.0, cy, 2.0), (1.5, 6.0, 1.7), label="BG"),
    }


def generate_phantom(spec: PhantomSpec, geometry: AffineGeometry) -> GeneratedPhantom:
    """Evaluate the analytic phantom at every voxel centre of ``geometry``."""
    min_lamina = min(spec.srlm_thickness_mm, spec.sp_thickness_mm)
    if max(geometry.spacing[0], geometry.spacing[2]) > min_lamina / 1.5 + 1e-12:
        raise InvalidInput(
            f"in-plane spacing {geometry.spacing[0]}x{geometry.spacing[2]} mm cannot "
            f"resolve {min_lamina} mm laminae (need <= thickness/1.5)"
        )

    nx, ny, nz = geometry.dims
    sx, sy, sz = geometry.spacing
    # voxel-centre world coordinates on the grid's own axes
    x = (np.arange(nx) * sx)[:, None, None]
    y = (np.arange(ny) * sy)[None, :, None]
    z = (np.arange(nz) * sz)[None, None, :]
    cx = (nx - 1) * sx / 2.0
    cy = (ny - 1) * sy / 2.0
    cz = (nz - 1) * sz / 2.0

    y0 = cy - spec.length_mm / 2.0
    t = (y - y0) / spec.length_mm
    t_c = np.clip(t, 0.0, 1.0)

    # main-axis position, head widening and blunt end caps
    axis_z = cz + spec.axis_bow_mm * np.cos(np.pi * t_c)
    width_env = spec.body_width_mm + (spec.head_width_mm - spec.body_width_mm) * np.exp(
        -((t_c / spec.head_falloff) ** 2)
    )
    s = np.clip(2.0 * t - 1.0, -1.0, 1.0)
    end_cap = np.sqrt(np.maximum(0.0, 1.0 - s ** 16))
    width = width_env * end_cap
    height = spec.height_mm * end_cap

    dx = x - cx
    dz = z - axis_z
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(width > 0, dx / (width / 2.0), np.inf)
        v = np.where(height > 0, dz / (height / 2.0), np.inf)
    rho2 = u * u + v * v
    inside = (rho2 <= 1.0) & (t >= 0.0) & (t <= 1.0)

    m = np.hypot(dx, dz)                       # radial mm distance from the axis
    rho = np.sqrt(rho2)
    with np.errstate(divide="ignore", invalid="ignore"):
        m_bound = np.where(rho > 1e-9, m / np.where(rho > 1e-9, rho, 1.0), np.inf)

    phi = np.arctan2(v, np.where(np.isfinite(u), u, 1.0))
    phi_eff = phi - spec.swirl_rad_per_mm * (y - cy)
    cycle = spec.sp_thickness_mm + spec.srlm_thickness_mm
    q = (
        m
        + cycle * ((phi_eff + np.pi) / (2.0 * np.pi))
        + spec.roll_amplitude_mm
        * np.cos(2.0 * np.pi * (y - cy) / spec.roll_period_mm + 0.7)
    )

    def soften(distance_mm):
        # C1 transition: 0 at -width, 0.5 at the boundary, 1 at +width
        t_s = np.clip(distance_mm / (2.0 * spec.edge_softness_mm) + 0.5, 0.0, 1.0)
        return t_s * t_s * (3.0 - 2.0 * t_s)

    # signed mm distance into the bright lamina (negative inside the dark one)
    q_mod = np.mod(q, cycle)
    d_bright = np.minimum(q_mod, spec.sp_thickness_mm - q_mod)
    d_dark = np.minimum(q_mod - spec.sp_thickness_mm, cycle - q_mod)
    lamina_w = soften(np.where(q_mod < spec.sp_thickness_mm, d_bright, -d_dark))

    core_r = spec.core_fraction * width / 2.0
    core_w = soften(core_r - m)
    rim_w = soften(m - (m_bound - spec.alveus_thickness_mm))
    inside_w = np.where((t >= 0.0) & (t <= 1.0), soften(m_bound - m), 0.0)

    # homogeneous matrix envelope around the structure (no end-cap pinching)
    mx, my, mz = spec.matrix_margin_mm
    r2 = np.hypot(dx, dz)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho_env = np.sqrt(
            (dx / (width_env / 2.0 + mx)) ** 2 + (dz / (spec.height_mm / 2.0 + mz)) ** 2
        )
        env_bound = np.where(rho_env > 1e-9, r2 / np.where(rho_env > 1e-9, rho_env, 1.0),
                             np.inf)
    env_w = soften(env_bound - r2)
    env_w = env_w * soften(y - (y0 - my)) * soften((y0 + spec.length_mm + my) - y)

    bright = spec.intensity_bright * (1.0 + spec.texture_amplitude * _texture(x, y, z))
    lamina = spec.intensity_dark + (bright - spec.intensity_dark) * lamina_w
    # the core is homogeneous: canonical GM measurements need pure tissue
    interior = lamina + (spec.intensity_bright - lamina) * core_w
    interior = interior + (spec.intensity_dark - interior) * rim_w

    data = np.full((nx, ny, nz), float(spec.intensity_background))
    data = data + (spec.intensity_matrix - data) * env_w
    data = data + (interior - data) * inside_w

    return GeneratedPhantom(Volume(geometry, data), canonical_rois(spec, geometry))
