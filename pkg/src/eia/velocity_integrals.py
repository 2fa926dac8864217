"""Thermal averaging over the Maxwell-Boltzmann velocity distribution.

The integrands are products of the per-velocity complex frequencies divided by
the probe-sector determinant, averaged against one or two standard-normal
velocity components.  Gauss-Hermite quadrature (probabilists' weight) handles
the Gaussian factor; a node-doubling self-check guards against under-resolved
poles, which matters once the Doppler scale exceeds the pressure-broadened
linewidth.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import roots_hermitenorm, wofz

from .core_model import FieldConfig, ModelParams, toc_determinant, xi_set

__all__ = [
    "QuadratureGrid",
    "GKernelSpec",
    "NonConvergenceError",
    "make_grid",
    "velocity_mesh",
    "g_integral",
    "faddeeva_oracle",
    "pole_average",
    "one_photon_response",
    "G1_SPEC",
    "G2_SPEC",
    "G3_SPEC",
    "G4_SPEC",
    "G5_SPEC",
    "G_1P",
    "G_3P",
    "G_PUMP",
]

MAX_NODES = 10_000


class NonConvergenceError(RuntimeError):
    """Doubling the quadrature changed the result by more than the tolerance."""


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Hermite nodes/weights for the two velocity projections.

    Weights are normalized so each axis integrates the unit Gaussian to 1;
    nodes are symmetric about zero.  Grids are immutable; evaluators are pure.
    """

    nodes_par: np.ndarray
    weights_par: np.ndarray
    nodes_res: np.ndarray
    weights_res: np.ndarray
    n_par: int
    n_res: int


@lru_cache(maxsize=64)
def _gh_axis(n: int):
    # node computation is expensive and shows up hot when kernels are
    # re-averaged per detuning point, so memoize on the count; the cached
    # arrays are shared between callers and therefore frozen
    x, w = roots_hermitenorm(n)
    w = w / np.sqrt(2.0 * np.pi)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def make_grid(n_par: int = 80, n_res: int = 40) -> QuadratureGrid:
    """Build the velocity quadrature; counts above 10^4 per axis are rejected."""
    for name, n in (("n_par", n_par), ("n_res", n_res)):
        if n < 1:
            raise ValueError(f"{name} must be >= 1, got {n}")
        if n > MAX_NODES:
            raise ValueError(f"{name} must be <= {MAX_NODES}, got {n}")
    xp, wp = _gh_axis(n_par)
    xr, wr = _gh_axis(n_res)
    return QuadratureGrid(
        nodes_par=xp, weights_par=wp, nodes_res=xr, weights_res=wr,
        n_par=n_par, n_res=n_res,
    )


def _doubled(grid: QuadratureGrid, need_res: bool) -> QuadratureGrid:
    # internal comparison grid for the convergence check; exempt from the
    # caller-facing node cap
    xp, wp = _gh_axis(2 * grid.n_par)
    if need_res:
        xr, wr = _gh_axis(2 * grid.n_res)
        nr = 2 * grid.n_res
    else:
        xr, wr, nr = grid.nodes_res, grid.weights_res, grid.n_res
    return QuadratureGrid(xp, wp, xr, wr, 2 * grid.n_par, nr)


def velocity_mesh(fields: FieldConfig, grid: QuadratureGrid):
    """Flatten the grid into (v_par, v_res, weight) arrays for the geometry.

    dq_vth = 0 collapses the residual axis to a single zero (any n_res gives
    the same answer); collinear geometry reuses the parallel variable for the
    residual projection; transverse geometry takes the full product grid.
    """
    if fields.dq_vth == 0.0:
        z = np.zeros_like(grid.nodes_par)
        return grid.nodes_par, z, grid.weights_par
    if fields.dq_direction == "collinear":
        return grid.nodes_par, grid.nodes_par, grid.weights_par
    v_par = np.repeat(grid.nodes_par, grid.n_res)
    v_res = np.tile(grid.nodes_res, grid.n_par)
    w = np.outer(grid.weights_par, grid.weights_res).ravel()
    return v_par, v_res, w


_XI_INDEX = {1: "xi1", 2: "xi2", 3: "xi3", 4: "xi4", 5: "xi5"}
_FactorKey = Union[int, str]


@dataclass(frozen=True)
class GKernelSpec:
    """Which xi factors sit over which: indices 1..5, plus 'd' for the determinant."""

    numerator: tuple
    denominator: tuple

    def __post_init__(self):
        if len(self.denominator) == 0:
            raise ValueError("denominator must be nonempty")
        for part, keys in (("numerator", self.numerator), ("denominator", self.denominator)):
            for k in keys:
                if k != "d" and k not in _XI_INDEX:
                    raise ValueError(f"{part} entry {k!r} not in 1..5 or 'd'")


# the named kernels of the approximate probe response
G1_SPEC = GKernelSpec((2, 3, 4), ("d",))
G2_SPEC = GKernelSpec((3, 4), ("d",))
G3_SPEC = GKernelSpec((2, 4), (5, "d"))
G4_SPEC = GKernelSpec((1, 3, 4), ("d",))
G5_SPEC = GKernelSpec((3,), ("d",))
# bare one-photon kernels (probe, three-photon, pump dipole)
G_1P = GKernelSpec((), (2,))
G_3P = GKernelSpec((), (4,))
G_PUMP = GKernelSpec((), (5,))


def _factor(key: _FactorKey, xi, params, fields):
    if key == "d":
        return toc_determinant(xi, params, fields)
    return getattr(xi, _XI_INDEX[key])


def _eval_on_grid(spec, params, fields, grid):
    v_par, v_res, w = velocity_mesh(fields, grid)
    xi = xi_set(params, fields, v_par, v_res)
    val = w.astype(complex)
    for k in spec.numerator:
        val = val * _factor(k, xi, params, fields)
    for k in spec.denominator:
        val = val / _factor(k, xi, params, fields)
    return val.sum()


def g_integral(spec: GKernelSpec, params: ModelParams, fields: FieldConfig,
               grid: QuadratureGrid, rtol: float | None = 1e-7) -> complex:
    """Velocity average of prod(xi_num)/prod(xi_den) against the thermal Gaussian.

    With ``rtol`` set (default 1e-7) the integral is re-evaluated on a grid
    with doubled node counts; a relative change above rtol raises
    NonConvergenceError, otherwise the finer value is returned.  ``rtol=None``
    skips the check and uses the grid as given.
    """
    coarse = _eval_on_grid(spec, params, fields, grid)
    if rtol is None:
        return coarse
    need_res = fields.dq_vth != 0.0 and fields.dq_direction == "transverse"
    fine = _eval_on_grid(spec, params, fields, _doubled(grid, need_res))
    denom = max(abs(fine), np.finfo(float).tiny)
    rel = abs(fine - coarse) / denom
    if rel > rtol:
        raise NonConvergenceError(
            f"quadrature not converged: doubling {grid.n_par}x{grid.n_res} nodes "
            f"moved the result by {rel:.3e} (> rtol {rtol:.1e})"
        )
    return fine


def faddeeva_oracle(z: complex) -> complex:
    """Scaled complex complementary error function w(z) on the upper half plane.

    Backed by the published rational/continued-fraction implementation that
    scipy wraps; accuracy is comfortably beyond 1e-10 there.  The Gaussian
    average of a simple pole is expressed through this function (see
    pole_average), which makes it the independent cross-check for the
    quadrature path.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValueError(f"faddeeva_oracle requires Im(z) > 0, got z = {z}")
    return complex(wofz(z))


def pole_average(x: float, q: float, gamma_pos: float) -> complex:
    """Closed form of int F(v)/(x - q v + i gamma_pos) dv for a unit Gaussian F.

    gamma_pos must be > 0.  The result depends on q only through |q| (F is
    even); q = 0 degenerates to the motionless pole 1/(x + i gamma_pos).
    For a multi-axis velocity combination sum_j c_j v_j over independent unit
    Gaussians, pass q = ||c||_2.
    """
    if not gamma_pos > 0:
        raise ValueError("gamma_pos must be > 0")
    q = abs(q)
    if q == 0.0:
        return 1.0 / (x + 1j * gamma_pos)
    z = (x + 1j * gamma_pos) / (np.sqrt(2.0) * q)
    return -1j * np.sqrt(np.pi / 2.0) / q * faddeeva_oracle(z)


_DENOM_NAMES = {2: "probe", 4: "three_photon", 5: "pump"}


def one_photon_response(params: ModelParams, fields: FieldConfig, grid: QuadratureGrid,
                        denominator: int = 2, rtol: float | None = 1e-7) -> complex:
    """Strong-collision one-photon kernel K = iG/(1 - i gamma_vcc G).

    G is the bare thermal average of 1/xi_denominator; denominator 2 gives the
    probe kernel, 4 the three-photon variant, 5 the pump-dipole absorption
    kernel.  In the motionless limit the gamma_vcc contributions cancel
    algebraically and K -> i/(deltap + i*gamma_tilde) for the probe case.
    """
    if denominator not in _DENOM_NAMES:
        raise ValueError(f"denominator must be one of {sorted(_DENOM_NAMES)}, got {denominator}")
    g = g_integral(GKernelSpec((), (denominator,)), params, fields, grid, rtol=rtol)
    return 1j * g / (1.0 - 1j * params.gamma_vcc * g)
