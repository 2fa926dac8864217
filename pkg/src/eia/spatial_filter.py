"""Spatial-frequency response of the driven medium and thin-slice filtering.

Near zero probe detuning the medium acts on the probe's transverse spatial
spectrum as an absorbing filter: L(k) enhances absorption at low transverse
frequency and rolls off as a Lorentzian in k^2 with the diffusion scale D.
A thin slice applies exp[i(chi(k) - k^2/(2 q_p)) dz] in k-space; chi is
i*K*(1+L) up to one user-set magnitude constant.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .core_model import FieldConfig, ModelParams
from .velocity_integrals import (
    G_1P,
    QuadratureGrid,
    g_integral,
    one_photon_response,
)

__all__ = [
    "FilterParams",
    "TransverseProfile",
    "KKernels",
    "ParaxialError",
    "k_kernels",
    "filter_params_from_model",
    "filter_response",
    "apply_filter",
    "save_profile",
    "load_profile",
]

DEFAULT_QP_PHYSICAL = 2.0 * np.pi / 780e-9  # 1/m, D2-line probe


class ParaxialError(RuntimeError):
    """Populated spatial frequencies violate the paraxial bound."""


class KKernels(NamedTuple):
    k_1p: complex
    k_3p: complex
    k_pump: complex
    k_common: complex


@dataclass(frozen=True)
class FilterParams:
    """Reduced parameter set of the k-space filter.

    eta is the pump amplitude ratio (0 < eta <= 1); power_broadening is
    K*|V2|^2 (complex; its real part acts as the rate); diffusion_D is the
    dimensionless combination D*q_p^2/Gamma so that filter arguments are k in
    units of q_p.  probe_kernel caches the K used to assemble the full
    susceptibility (recoverable from power_broadening when V2 != 0).
    """

    eta: float
    power_broadening: complex
    diffusion_D: float
    k_grid: Optional[np.ndarray] = None
    probe_kernel: Optional[complex] = None

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if not self.diffusion_D > 0:
            raise ValueError("diffusion_D must be > 0")


def k_kernels(params: ModelParams, fields: FieldConfig, grid: QuadratureGrid,
              rtol: float | None = 1e-7) -> KKernels:
    """One-photon kernels on the three optical transitions plus the common K.

    The first three carry the velocity-changing self-consistency denominator;
    the common K is the bare thermal average i*<1/xi2>, the single-kernel
    stand-in valid near zero probe detuning (a warning flags configs outside
    that regime).
    """
    k1 = one_photon_response(params, fields, grid, denominator=2, rtol=rtol)
    k3 = one_photon_response(params, fields, grid, denominator=4, rtol=rtol)
    kp = one_photon_response(params, fields, grid, denominator=5, rtol=rtol)
    kc = 1j * g_integral(G_1P, params, fields, grid, rtol=rtol)
    gamma_hom = params.gamma_g + np.real(kc * abs(fields.v2) ** 2)
    if abs(fields.deltap) > gamma_hom > 0:
        warnings.warn(
            f"|deltap| = {abs(fields.deltap):.3g} exceeds the homogeneous width "
            f"{gamma_hom:.3g}; the single-kernel approximation degrades", stacklevel=2)
    return KKernels(k_1p=k1, k_3p=k3, k_pump=kp, k_common=kc)


def filter_params_from_model(params: ModelParams, fields: FieldConfig,
                             grid: QuadratureGrid, deltap: float = 0.0,
                             rtol: float | None = 1e-7) -> FilterParams:
    """Assemble FilterParams from the microscopic model at one detuning."""
    if not params.gamma_vcc > 0:
        raise ValueError("the diffusion coefficient requires gamma_vcc > 0")
    kern = k_kernels(params, replace(fields, deltap=deltap), grid, rtol=rtol)
    if fields.v2 != 0:
        eta = abs(fields.v1 / fields.v2)
    elif fields.v1 == 0:
        eta = 1.0  # no pumps at all: power_broadening = 0 makes eta inert
    else:
        raise ValueError("eta undefined for V2 = 0 with V1 != 0")
    gamma_p = kern.k_common * abs(fields.v2) ** 2
    d_hat = fields.qp_vth ** 2 / params.gamma_vcc
    return FilterParams(eta=eta, power_broadening=complex(gamma_p),
                        diffusion_D=d_hat, probe_kernel=complex(kern.k_common))


def filter_response(fp: FilterParams, params: ModelParams, fields: FieldConfig,
                    deltap: float, k):
    """L(k; deltap) = eta(2bA-eta)Gamma_p / (-i deltap + gamma + (eta^2+1-2bA eta)Gamma_p + D k^2).

    k is in units of q_p (matching the dimensionless diffusion_D).  Scalar k
    in, scalar out; array in, array out.  A warning fires when |deltap|
    exceeds the homogeneous width gamma + Re(Gamma_p), outside the response's
    validity.
    """
    gamma_hom = params.gamma_g + np.real(fp.power_broadening)
    if abs(deltap) > gamma_hom > 0:
        warnings.warn(
            f"|deltap| = {abs(deltap):.3g} exceeds the homogeneous width "
            f"{gamma_hom:.3g}; filter response outside validity", stacklevel=2)
    ba = params.b * params.branching_A
    eta = fp.eta
    num = eta * (2.0 * ba - eta) * fp.power_broadening
    k = np.asarray(k, dtype=float)
    den = (-1j * deltap + params.gamma_g
           + (eta**2 + 1.0 - 2.0 * ba * eta) * fp.power_broadening
           + fp.diffusion_D * k**2)
    out = np.asarray(num / den, dtype=complex)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TransverseProfile:
    """Complex transverse amplitude on a uniform rectangular grid.

    samples[iy, ix] spans extent = (Lx, Ly) with spacings dx = Lx/nx,
    dy = Ly/ny.  Power-of-two sizes transform fastest but are not required.
    """

    samples: np.ndarray
    extent: Tuple[float, float]
    k_samples: Optional[np.ndarray] = None

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if not np.all(np.isfinite(s.real)) or not np.all(np.isfinite(s.imag)):
            raise ValueError("profile power must be finite")
        if not (self.extent[0] > 0 and self.extent[1] > 0):
            raise ValueError("extent must be positive per axis")

    @property
    def nx(self) -> int:
        return self.samples.shape[1]

    @property
    def ny(self) -> int:
        return self.samples.shape[0]

    @property
    def dx(self) -> float:
        return self.extent[0] / self.nx

    @property
    def dy(self) -> float:
        return self.extent[1] / self.ny

    def power(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dx * self.dy)


def apply_filter(profile: TransverseProfile, fp: FilterParams, params: ModelParams,
                 fields: FieldConfig, deltap: float, slice_length: float,
                 optical_depth_scale: float = 1.0,
                 qp_physical: float = DEFAULT_QP_PHYSICAL,
                 force_unitary: bool = False) -> TransverseProfile:
    """Propagate the profile through one thin slice of the driven medium.

    In k-space each component is multiplied by
    exp[i (chi(k) - k^2/(2 q_p)) slice_length] with
    chi(k) = optical_depth_scale * i * K * (1 + L(k)); optical_depth_scale
    carries the susceptibility magnitude in 1/length (the medium model fixes
    only the k shape).  force_unitary drops Im(chi) (pure phase medium), which
    conserves power exactly.  Populated spectral samples beyond 0.1*q_p raise
    ParaxialError.
    """
    a_hat = np.fft.fft2(profile.samples)
    kx = 2.0 * np.pi * np.fft.fftfreq(profile.nx, d=profile.dx)
    ky = 2.0 * np.pi * np.fft.fftfreq(profile.ny, d=profile.dy)
    kmag = np.sqrt(ky[:, None] ** 2 + kx[None, :] ** 2)

    populated = np.abs(a_hat) > 1e-12 * np.abs(a_hat).max(initial=0.0)
    if np.any(kmag[populated] > 0.1 * qp_physical):
        worst = kmag[populated].max()
        raise ParaxialError(
            f"populated spatial frequency {worst:.3e} 1/m exceeds 0.1*q_p = "
            f"{0.1 * qp_physical:.3e} 1/m")

    if fp.probe_kernel is not None:
        kern = fp.probe_kernel
    elif fields.v2 != 0:
        kern = fp.power_broadening / abs(fields.v2) ** 2
    else:
        raise ValueError("probe kernel unavailable: set FilterParams.probe_kernel for V2 = 0")

    ell = filter_response(fp, params, fields, deltap, kmag / qp_physical)
    chi = optical_depth_scale * 1j * kern * (1.0 + ell)
    if force_unitary:
        chi = chi.real
    transfer = np.exp(1j * (chi - kmag**2 / (2.0 * qp_physical)) * slice_length)
    out_hat = a_hat * transfer
    out = np.fft.ifft2(out_hat)
    return TransverseProfile(samples=out, extent=profile.extent, k_samples=out_hat)


# profile files: header (nx, ny, dx, dy) then row-major (y rows, x fastest)
# complex pairs; binary form is little-endian int64/float64/complex128
_BIN_HEADER = struct.Struct("<qqdd")


def save_profile(profile: TransverseProfile, path, fmt: str = "text") -> None:
    data = np.ascontiguousarray(profile.samples, dtype=complex)
    if fmt == "text":
        with open(path, "w", newline="\n") as fh:
            fh.write(f"{profile.nx} {profile.ny} {float(profile.dx)!r} {float(profile.dy)!r}\n")
            for val in data.ravel(order="C"):
                # plain-float repr: shortest exact roundtrip, parseable by loadtxt
                fh.write(f"{float(val.real)!r} {float(val.imag)!r}\n")
    elif fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_BIN_HEADER.pack(profile.nx, profile.ny, profile.dx, profile.dy))
            fh.write(data.astype("<c16").tobytes(order="C"))
    else:
        raise ValueError(f"fmt must be 'text' or 'binary', got {fmt!r}")


def load_profile(path, fmt: str = "text") -> TransverseProfile:
    if fmt == "text":
        with open(path, "r") as fh:
            nx, ny, dx, dy = fh.readline().split()
            nx, ny, dx, dy = int(nx), int(ny), float(dx), float(dy)
            flat = np.loadtxt(fh, dtype=float, ndmin=2)
        if flat.shape != (nx * ny, 2):
            raise ValueError(f"profile body has shape {flat.shape}, expected ({nx * ny}, 2)")
        samples = (flat[:, 0] + 1j * flat[:, 1]).reshape(ny, nx)
    elif fmt == "binary":
        with open(path, "rb") as fh:
            raw = fh.read()
        nx, ny, dx, dy = _BIN_HEADER.unpack_from(raw, 0)
        samples = np.frombuffer(raw, dtype="<c16", offset=_BIN_HEADER.size).reshape(ny, nx).copy()
    else:
        raise ValueError(f"fmt must be 'text' or 'binary', got {fmt!r}")
    return TransverseProfile(samples=samples, extent=(nx * dx, ny * dy))
