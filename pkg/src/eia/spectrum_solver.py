"""Probe absorption spectra for the driven four-level system.

Three routes to R_{e1g2}/(n0 Vp):

* ``solve_exact`` inverts the per-velocity 4x4 coherence system and closes the
  strong-collision velocity-changing terms self-consistently on the four
  velocity-integrated densities.
* ``solve_approximate`` evaluates the factored response built from the five
  named thermal averages G1..G5, including its three-way split into one-photon
  background, pump-broadened pedestal, and the sharp collision-induced peak.
* ``at_rest_spectrum`` is the motionless, collisionless closed form of the
  response.

All detunings are in units of the spontaneous rate; response values are
R_{e1g2}/(n0 Vp) and absorption is its imaginary part.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .core_model import FieldConfig, ModelParams, toc_determinant, xi_set
from .velocity_integrals import (
    NonConvergenceError,
    QuadratureGrid,
    _doubled,
    velocity_mesh,
)

__all__ = [
    "Components",
    "Spectrum",
    "SolveReport",
    "IllConditionedError",
    "default_detuning_grid",
    "solve_exact",
    "solve_approximate",
    "at_rest_spectrum",
]


class IllConditionedError(RuntimeError):
    """The density self-consistency system is numerically unreliable."""


class Components(NamedTuple):
    background: np.ndarray
    pedestal: np.ndarray
    sharp_peak: np.ndarray


@dataclass(frozen=True)
class Spectrum:
    """Probe response sampled on a detuning grid.

    response is R_{e1g2}/(n0 Vp); absorption = Im(response).  When the
    three-way decomposition is available its parts must sum back to the
    response (checked to 1e-10 relative).
    """

    detunings: np.ndarray
    response: np.ndarray
    absorption: np.ndarray
    components: Optional[Components] = None

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float)
        r = np.asarray(self.response)
        if d.ndim != 1 or r.shape != d.shape:
            raise ValueError("detunings must be 1-D and response the same shape")
        if d.size >= 2 and not np.all(np.diff(d) > 0):
            raise ValueError("detunings must be strictly increasing")
        if not np.allclose(self.absorption, np.imag(r), rtol=0, atol=1e-12 * max(1.0, np.abs(r).max(initial=0.0))):
            raise ValueError("absorption must equal Im(response)")
        if self.components is not None:
            total = self.components.background + self.components.pedestal + self.components.sharp_peak
            scale = np.abs(r).max(initial=0.0)
            if scale > 0 and np.abs(total - r).max() > 1e-10 * scale:
                raise ValueError("component decomposition does not sum to the response")

    @classmethod
    def from_response(cls, detunings, response, components=None) -> "Spectrum":
        response = np.asarray(response)
        return cls(np.asarray(detunings, dtype=float), response,
                   np.imag(response), components)


@dataclass(frozen=True)
class SolveReport:
    method: str
    n_par: int
    n_res: int
    n_detunings: int
    max_condition: float
    converged: Optional[bool] = None
    notes: str = ""

    def __post_init__(self):
        if not np.isfinite(self.max_condition):
            raise ValueError("condition estimate must be finite")


def default_detuning_grid(params: ModelParams, span: float = 2.0, n: int = 2001,
                          refine: bool = True) -> np.ndarray:
    """Symmetric detuning grid: uniform base plus log-dense center refinement.

    The refinement covers |deltap| < 10*(gamma_g + gamma_vcc) so the
    subnatural peak is resolved even when the base spacing is coarser than
    its width.
    """
    if span <= 0 or n < 2:
        raise ValueError("span must be > 0 and n >= 2")
    pos = np.linspace(0.0, span, (n + 1) // 2)
    if refine:
        w = 10.0 * (params.gamma_g + params.gamma_vcc)
        if w > 0:
            inner = np.geomspace(max(w * 1e-6, 1e-12), min(w, span), 121)
            pos = np.concatenate([pos, inner])
    pos = np.unique(pos)
    return np.concatenate([-pos[:0:-1], pos])


def _xi_batch(params, fields, dp_chunk, v_par, v_res):
    # broadcast detunings (m,1) against velocity nodes (n,) -> (m, n) factors
    return xi_set(params, fields, v_par[None, :], v_res[None, :],
                  deltap=np.asarray(dp_chunk)[:, None])


def _chunks(total: int, size: int):
    for start in range(0, total, size):
        yield start, min(start + size, total)


def _exact_response_on_mesh(params, fields, detunings, v_par, v_res, w):
    n = v_par.size
    m = detunings.size
    gvcc = params.gamma_vcc
    v1, v2, vp = fields.v1, fields.v2, fields.vp
    toc = 1j * params.b * params.branching_A * params.gamma_sp

    # xi5 carries no probe-detuning dependence; close the pump dipole once
    xi0 = xi_set(params, fields, v_par, v_res)
    gp = np.sum(w / xi0.xi5)
    r5 = np.conj(v2) * params.n0 * gp / (1.0 - 1j * gvcc * gp)
    src3_row = -vp * (1j * gvcc * r5 + np.conj(v2) * params.n0) / xi0.xi5

    response = np.empty(m, dtype=complex)
    conds = np.empty(m, dtype=float)
    eye = np.eye(4, dtype=complex)
    chunk = max(1, int(3.0e5 / max(n, 1)))
    for a, bnd in _chunks(m, chunk):
        dp = detunings[a:bnd]
        mc = dp.size
        xi = _xi_batch(params, fields, dp, v_par, v_res)
        M = np.zeros((mc, n, 4, 4), dtype=complex)
        M[..., 0, 0] = xi.xi1
        M[..., 0, 1] = np.conj(v1)
        M[..., 0, 2] = -toc
        M[..., 0, 3] = -v2
        M[..., 1, 0] = v1
        M[..., 1, 1] = xi.xi2
        M[..., 2, 1] = -np.conj(v2)
        M[..., 2, 2] = xi.xi3
        M[..., 2, 3] = v1
        M[..., 3, 0] = -np.conj(v2)
        M[..., 3, 3] = xi.xi4

        B = np.zeros((mc, n, 4, 5), dtype=complex)
        B[..., 0, 0] = 1.0
        B[..., 1, 1] = 1.0
        B[..., 2, 2] = 1.0
        B[..., 3, 3] = 1.0
        B[..., 1, 4] = -vp * params.n0
        B[..., 2, 4] = src3_row[None, :]

        X = np.linalg.solve(M, B)
        Aw = np.einsum("k,mkij->mij", w, X[..., :4])
        bw = np.einsum("k,mki->mi", w, X[..., 4])
        dens = eye[None, :, :] - 1j * gvcc * Aw
        R = np.linalg.solve(dens, bw[..., None])[..., 0]
        conds[a:bnd] = np.linalg.cond(dens)
        response[a:bnd] = R[:, 1] / (params.n0 * vp)
    return response, conds


def solve_exact(params: ModelParams, fields: FieldConfig, grid: QuadratureGrid,
                detuning_grid, check_convergence: bool = True,
                conv_rtol: float = 1e-6, cond_warn: float = 1e8,
                cond_error: float = 1e12):
    """Velocity-resolved solve of the four probe-sector coherence equations.

    Per detuning: the pump dipole is closed first (it decouples), each
    velocity node's 4x4 system is inverted against the identity plus the
    probe source, and the node-weighted accumulation yields a final 4x4
    system for the velocity-integrated densities.  Returns (Spectrum,
    SolveReport).  With check_convergence the whole spectrum is recomputed on
    a node-doubled grid and the finer result is kept; disagreement beyond
    conv_rtol raises NonConvergenceError.
    """
    detunings = np.asarray(detuning_grid, dtype=float)
    v_par, v_res, w = velocity_mesh(fields, grid)
    response, conds = _exact_response_on_mesh(params, fields, detunings, v_par, v_res, w)

    notes = []
    converged = None
    if check_convergence:
        need_res = fields.dq_vth != 0.0 and fields.dq_direction == "transverse"
        g2 = _doubled(grid, need_res)
        vp2, vr2, w2 = velocity_mesh(fields, g2)
        response2, conds2 = _exact_response_on_mesh(params, fields, detunings, vp2, vr2, w2)
        scale = max(np.abs(response2).max(initial=0.0), np.finfo(float).tiny)
        rel = np.abs(response2 - response).max(initial=0.0) / scale
        if rel > conv_rtol:
            raise NonConvergenceError(
                f"exact solve not converged: doubling {grid.n_par}x{grid.n_res} nodes "
                f"moved the spectrum by {rel:.3e} (> rtol {conv_rtol:.1e})"
            )
        response, conds = response2, np.maximum(conds, conds2)
        converged = True
        notes.append(f"doubling check rel change {rel:.2e}")

    max_cond = float(conds.max(initial=1.0))
    if max_cond > cond_error:
        raise IllConditionedError(
            f"density system condition estimate {max_cond:.3e} exceeds {cond_error:.1e}")
    if max_cond > cond_warn:
        import warnings
        warnings.warn(f"density system condition estimate {max_cond:.3e} exceeds "
                      f"{cond_warn:.1e}; results may lose accuracy", stacklevel=2)

    report = SolveReport(method="exact", n_par=grid.n_par, n_res=grid.n_res,
                         n_detunings=detunings.size, max_condition=max_cond,
                         converged=converged, notes="; ".join(notes))
    return Spectrum.from_response(detunings, response), report


def _approx_terms_on_mesh(params, fields, detunings, v_par, v_res, w):
    gvcc = params.gamma_vcc
    v1, v2 = fields.v1, fields.v2
    v2sq = abs(v2) ** 2
    toc = 1j * params.b * params.branching_A * params.gamma_sp * v1 * np.conj(v2)

    n = v_par.size
    m = detunings.size
    bg = np.empty(m, dtype=complex)
    ped = np.empty(m, dtype=complex)
    sharp = np.empty(m, dtype=complex)
    chunk = max(1, int(2.0e6 / max(n, 1)))
    for a, bnd in _chunks(m, chunk):
        xi = _xi_batch(params, fields, detunings[a:bnd], v_par, v_res)
        xd = toc_determinant(xi, params, fields)
        x34 = xi.xi3 * xi.xi4
        g1 = (w * xi.xi2 * x34 / xd).sum(axis=1)
        g2 = (w * x34 / xd).sum(axis=1)
        g3 = (w * xi.xi2 * xi.xi4 / (xi.xi5 * xd)).sum(axis=1)
        g4 = (w * xi.xi1 * x34 / xd).sum(axis=1)
        g5 = (w * xi.xi3 / xd).sum(axis=1)
        bg[a:bnd] = -g4
        ped[a:bnd] = v2sq * g5
        sharp[a:bnd] = toc * 1j * g2 * g3 * gvcc / (1.0 - 1j * g1 * gvcc)
    return bg, ped, sharp


def solve_approximate(params: ModelParams, fields: FieldConfig, grid: QuadratureGrid,
                      detuning_grid, check_convergence: bool = True,
                      conv_rtol: float = 1e-6):
    """Factored response from the five named thermal averages, with components.

    Valid for gamma_vcc below the homogeneous width Gamma_pcc + Gamma/2; a
    warning (not an error) is emitted outside that regime.  Returns
    (Spectrum with components, SolveReport).
    """
    if params.gamma_vcc >= params.gamma_pcc + 0.5 * params.gamma_sp:
        import warnings
        warnings.warn(
            "gamma_vcc is not small against gamma_pcc + gamma_sp/2; the factored "
            "response is outside its validity regime", stacklevel=2)

    detunings = np.asarray(detuning_grid, dtype=float)
    v_par, v_res, w = velocity_mesh(fields, grid)
    bg, ped, sharp = _approx_terms_on_mesh(params, fields, detunings, v_par, v_res, w)

    notes = []
    converged = None
    if check_convergence:
        need_res = fields.dq_vth != 0.0 and fields.dq_direction == "transverse"
        g2 = _doubled(grid, need_res)
        vp2, vr2, w2 = velocity_mesh(fields, g2)
        bg2, ped2, sharp2 = _approx_terms_on_mesh(params, fields, detunings, vp2, vr2, w2)
        r1 = bg + ped + sharp
        r2 = bg2 + ped2 + sharp2
        scale = max(np.abs(r2).max(initial=0.0), np.finfo(float).tiny)
        rel = np.abs(r2 - r1).max(initial=0.0) / scale
        if rel > conv_rtol:
            raise NonConvergenceError(
                f"factored solve not converged: doubling {grid.n_par}x{grid.n_res} "
                f"nodes moved the spectrum by {rel:.3e} (> rtol {conv_rtol:.1e})"
            )
        bg, ped, sharp = bg2, ped2, sharp2
        converged = True
        notes.append(f"doubling check rel change {rel:.2e}")

    response = bg + ped + sharp
    spectrum = Spectrum.from_response(detunings, response,
                                      Components(bg, ped, sharp))
    report = SolveReport(method="approximate", n_par=grid.n_par, n_res=grid.n_res,
                         n_detunings=detunings.size, max_condition=0.0,
                         converged=converged, notes="; ".join(notes))
    return spectrum, report


def at_rest_spectrum(params: ModelParams, fields: FieldConfig, detuning_grid) -> Spectrum:
    """Motionless, collisionless closed form of the probe response.

    Velocity-changing collisions are switched off (their rate is meaningless
    without motion) and every velocity-dependent shift vanishes, leaving a
    rational function of the detuning.  The collision-fed sharp term carries
    an explicit gamma_vcc factor and drops out; what survives is the
    pedestal plus a background that also holds the b-switched two-pump
    interference term (zero at line center for delta1 = 0, broad off it).
    """
    params0 = replace(params, gamma_vcc=0.0)
    detunings = np.asarray(detuning_grid, dtype=float)
    xi = xi_set(params0, fields, 0.0, 0.0, deltap=detunings)
    xd = toc_determinant(xi, params0, fields)
    toc = 1j * params0.b * params0.branching_A * params0.gamma_sp \
        * fields.v1 * np.conj(fields.v2)
    bg = (-xi.xi1 * xi.xi3 * xi.xi4 + toc * (xi.xi4 - xi.xi5) / xi.xi5) / xd
    ped = abs(fields.v2) ** 2 * xi.xi3 / xd
    zero = np.zeros_like(bg)
    return Spectrum.from_response(detunings, bg + ped, Components(bg, ped, zero))
