"""Flat-key configuration, figure presets, and CSV/JSON emission.

Every scenario is one flat parameter set (rates in units of the spontaneous
rate, lengths in meters).  A run writes its data file(s) plus a JSON manifest
holding the fully resolved parameters, grid sizes, convergence flags, and
wall time; apart from the wall-time field, identical configs produce
bit-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .core_model import FieldConfig, ModelParams
from .lineshape_analysis import PEDESTAL_CONVENTION, scan_delta_q
from .ramsey_diffusion import MASS_RB85, RamseyConfig, ramsey_spectrum
from .spatial_filter import (
    DEFAULT_QP_PHYSICAL,
    TransverseProfile,
    apply_filter,
    filter_params_from_model,
    filter_response,
    load_profile,
    save_profile,
)
from .spectrum_solver import (
    at_rest_spectrum,
    default_detuning_grid,
    solve_approximate,
    solve_exact,
)
from .velocity_integrals import make_grid

__all__ = ["ScenarioConfig", "parse_config", "serialize_config", "run_scenario",
           "expand_target", "PRESETS", "SCENARIOS", "main"]


@dataclass(frozen=True)
class _Key:
    typ: type
    default: object
    check: Optional[Callable[[object], bool]] = None
    allowed: str = ""
    nullable: bool = False

    def coerce(self, name: str, value):
        if self.nullable and (value is None or (isinstance(value, str)
                                                and value.lower() in ("none", "null"))):
            return None
        try:
            if self.typ is bool and isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    value = True
                elif value.lower() in ("false", "0", "no"):
                    value = False
                else:
                    raise ValueError
            elif self.typ is list:
                if isinstance(value, str):
                    value = json.loads(value)
                value = [float(v) for v in value]
            elif self.typ is bool:
                value = bool(value)
            elif self.typ is int:
                if isinstance(value, float) and value != int(value):
                    raise ValueError
                value = int(value)
            elif self.typ is float:
                value = float(value)
            elif self.typ is str:
                value = str(value)
        except (TypeError, ValueError):
            raise ValueError(f"config key {name!r}: cannot read {value!r} as {self.typ.__name__}")
        if self.check is not None and not self.check(value):
            raise ValueError(f"config key {name!r}: value {value!r} outside allowed "
                             f"range ({self.allowed})")
        return value


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


KEYS: Dict[str, _Key] = {
    # model rates (units of gamma_sp)
    "gamma_sp": _Key(float, 1.0, _pos, "> 0"),
    "gamma_pcc": _Key(float, 0.0, _nonneg, ">= 0"),
    "gamma_vcc": _Key(float, 0.0, _nonneg, ">= 0"),
    "gamma_g": _Key(float, 0.0, _nonneg, ">= 0"),
    "b": _Key(int, 1, lambda v: v in (0, 1), "0 or 1"),
    "branching_a": _Key(float, 0.816, lambda v: 0 < v < 1, "in (0, 1)"),
    "n0": _Key(float, 1.0, _pos, "> 0"),
    # fields and geometry
    "v1": _Key(float, 0.0816, None),
    "v2": _Key(float, 0.1, None),
    "vp": _Key(float, 0.001, None),
    "delta1": _Key(float, 0.0, None),
    "delta2": _Key(float, 0.0, None),
    "deltap": _Key(float, 0.0, None),
    "qp_vth": _Key(float, 36.5, _nonneg, ">= 0"),
    "dq_vth": _Key(float, 0.0, _nonneg, ">= 0"),
    "dq_direction": _Key(str, "collinear", lambda v: v in ("collinear", "transverse"),
                         "collinear or transverse"),
    # quadrature / detuning grids
    "n_par": _Key(int, 1500, lambda v: 1 <= v <= 10_000, "1..10000"),
    "n_res": _Key(int, 48, lambda v: 1 <= v <= 10_000, "1..10000"),
    "detuning_span": _Key(float, 2.0, _pos, "> 0"),
    "detuning_n": _Key(int, 2001, lambda v: v >= 2, ">= 2"),
    "refine": _Key(bool, True, None),
    "check_convergence": _Key(bool, True, None),
    # delta-q scan
    "dq_ladder": _Key(list, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], None),
    # spatial filter
    "k_max": _Key(float, 8e-4, _pos, "> 0 (units of q_p)"),
    "n_k": _Key(int, 241, lambda v: v >= 2, ">= 2"),
    # None: use deltap as given; a number means deltap = factor * gamma_hom
    "deltap_hom_factor": _Key(float, None, None, nullable=True),
    "optical_depth_scale": _Key(float, 1.0, None),
    "slice_length": _Key(float, 0.0, _nonneg, ">= 0 (meters)"),
    "qp_physical": _Key(float, DEFAULT_QP_PHYSICAL, _pos, "> 0 (1/meter)"),
    "force_unitary": _Key(bool, False, None),
    "profile_in": _Key(str, "", None),
    "profile_out": _Key(str, "", None),
    "profile_format": _Key(str, "text", lambda v: v in ("text", "binary"),
                           "text or binary"),
    # stepwise-sheet geometry (SI bridge)
    "half_width_a": _Key(float, 2.5e-3, _pos, "> 0 (meters)"),
    "temperature": _Key(float, 300.0, _pos, "> 0 (kelvin)"),
    "wavelength": _Key(float, 780e-9, _pos, "> 0 (meters)"),
    "mass": _Key(float, MASS_RB85, _pos, "> 0 (kg)"),
    "gamma_sp_si": _Key(float, 2.0 * np.pi * 6e6, _pos, "> 0 (rad/s)"),
    "ramsey_span": _Key(float, 0.02, _pos, "> 0"),
    "ramsey_n": _Key(int, 301, lambda v: v >= 2, ">= 2"),
}

SCENARIOS = ("spectrum_exact", "spectrum_approx", "at_rest", "fwhm_scan",
             "filter_curve", "beam_filter", "ramsey")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    values: Dict[str, object] = field(default_factory=dict)
    out: str = ""
    fmt: str = "csv"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.fmt not in ("csv", "json"):
            raise ValueError(f"format must be csv or json, got {self.fmt!r}")
        missing = [k for k in KEYS if k not in self.values]
        if missing:
            raise ValueError(f"unresolved config keys: {missing}")
        if self.scenario == "fwhm_scan":
            ladder = self.values["dq_ladder"]
            if len(ladder) == 0 or any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError("config key 'dq_ladder': must be nonempty and "
                                 "strictly ascending")

    def model_params(self) -> ModelParams:
        v = self.values
        return ModelParams(gamma_sp=v["gamma_sp"], gamma_pcc=v["gamma_pcc"],
                           gamma_vcc=v["gamma_vcc"], gamma_g=v["gamma_g"],
                           b=v["b"], branching_A=v["branching_a"], n0=v["n0"])

    def field_config(self) -> FieldConfig:
        v = self.values
        return FieldConfig(v1=v["v1"], v2=v["v2"], vp=v["vp"], delta1=v["delta1"],
                           delta2=v["delta2"], deltap=v["deltap"], qp_vth=v["qp_vth"],
                           dq_vth=v["dq_vth"], dq_direction=v["dq_direction"])

    def quad_grid(self):
        return make_grid(self.values["n_par"], self.values["n_res"])

    def detuning_grid(self):
        return default_detuning_grid(self.model_params(), span=self.values["detuning_span"],
                                     n=self.values["detuning_n"], refine=self.values["refine"])


def parse_config(scenario: str, *sources: dict, out: str = "", fmt: str = "csv") -> ScenarioConfig:
    """Merge defaults with override dicts (later wins); every key validated."""
    values = {k: spec.default for k, spec in KEYS.items()}
    for src in sources:
        for key, raw in src.items():
            if key in ("scenario", "out", "format"):
                continue
            if key not in KEYS:
                known = ", ".join(sorted(KEYS))
                raise ValueError(f"unknown config key {key!r}; known keys: {known}")
            values[key] = KEYS[key].coerce(key, raw)
    return ScenarioConfig(scenario=scenario, values=values,
                          out=out or scenario, fmt=fmt)


def serialize_config(cfg: ScenarioConfig) -> dict:
    doc = {"scenario": cfg.scenario, "out": cfg.out, "format": cfg.fmt}
    doc.update({k: cfg.values[k] for k in sorted(cfg.values)})
    return doc


def _write_csv(path: str, header: List[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _spectrum_rows(spectrum):
    return zip(spectrum.detunings, spectrum.response.real, spectrum.response.imag)


def _emit_spectrum(cfg: ScenarioConfig, spectrum, base: str) -> str:
    if cfg.fmt == "csv":
        path = base + ".csv"
        _write_csv(path, ["deltap", "re_response", "im_response"], _spectrum_rows(spectrum))
    else:
        path = base + ".json"
        doc = {
            "deltap": list(spectrum.detunings),
            "re_response": list(spectrum.response.real),
            "im_response": list(spectrum.response.imag),
        }
        if spectrum.components is not None:
            doc["components"] = {
                name: {"re": list(arr.real), "im": list(arr.imag)}
                for name, arr in zip(("background", "pedestal", "sharp_peak"),
                                     spectrum.components)
            }
        _write_json(path, doc)
    return path


def _report_dict(report) -> dict:
    return {"method": report.method, "n_par": report.n_par, "n_res": report.n_res,
            "n_detunings": report.n_detunings, "max_condition": report.max_condition,
            "converged": report.converged, "notes": report.notes}


def _run_spectrum(cfg: ScenarioConfig, exact: bool):
    solver = solve_exact if exact else solve_approximate
    spectrum, report = solver(cfg.model_params(), cfg.field_config(), cfg.quad_grid(),
                              cfg.detuning_grid(),
                              check_convergence=cfg.values["check_convergence"])
    path = _emit_spectrum(cfg, spectrum, cfg.out)
    return [path], _report_dict(report)


def _run_at_rest(cfg: ScenarioConfig):
    spectrum = at_rest_spectrum(cfg.model_params(), cfg.field_config(), cfg.detuning_grid())
    path = _emit_spectrum(cfg, spectrum, cfg.out)
    return [path], {"method": "at_rest", "n_detunings": int(spectrum.detunings.size)}


def _run_fwhm_scan(cfg: ScenarioConfig):
    rows = scan_delta_q(cfg.model_params(), cfg.field_config(), cfg.quad_grid(),
                        cfg.values["dq_ladder"],
                        check_convergence=cfg.values["check_convergence"])
    path = cfg.out + (".csv" if cfg.fmt == "csv" else ".json")
    if cfg.fmt == "csv":
        _write_csv(path, ["dq_vth", "fwhm", "peak_abs"],
                   [(r.dq_vth, r.fwhm, r.peak_absorption) for r in rows])
    else:
        _write_json(path, {"rows": [{"dq_vth": r.dq_vth, "fwhm": r.fwhm,
                                     "peak_abs": r.peak_absorption,
                                     "pedestal_fwhm": r.pedestal_fwhm} for r in rows]})
    meta = {"method": "fwhm_scan", "pedestal_convention": PEDESTAL_CONVENTION,
            "pedestal_fwhm": [r.pedestal_fwhm for r in rows]}
    return [path], meta


def _resolve_filter_deltap(cfg: ScenarioConfig, fp) -> float:
    factor = cfg.values["deltap_hom_factor"]
    if factor is not None:
        gamma_hom = cfg.values["gamma_g"] + float(np.real(fp.power_broadening))
        return factor * gamma_hom
    return cfg.values["deltap"]


def _kernel_rtol(cfg: ScenarioConfig):
    return 1e-7 if cfg.values["check_convergence"] else None


def _run_filter_curve(cfg: ScenarioConfig):
    params, fields = cfg.model_params(), cfg.field_config()
    fp = filter_params_from_model(params, fields, cfg.quad_grid(), deltap=0.0,
                                  rtol=_kernel_rtol(cfg))
    deltap = _resolve_filter_deltap(cfg, fp)
    k = np.linspace(0.0, cfg.values["k_max"], cfg.values["n_k"])
    ell = filter_response(fp, params, fields, deltap, k)
    path = cfg.out + (".csv" if cfg.fmt == "csv" else ".json")
    if cfg.fmt == "csv":
        _write_csv(path, ["k_over_qp", "re_l", "im_l", "abs_l"],
                   zip(k, ell.real, ell.imag, np.abs(ell)))
    else:
        _write_json(path, {"k_over_qp": list(k), "re_l": list(ell.real),
                           "im_l": list(ell.imag), "abs_l": list(np.abs(ell))})
    meta = {"method": "filter_curve", "deltap": deltap, "eta": fp.eta,
            "power_broadening": [fp.power_broadening.real, fp.power_broadening.imag],
            "diffusion_D": fp.diffusion_D}
    return [path], meta


def _default_beam(cfg: ScenarioConfig) -> TransverseProfile:
    # synthetic Gaussian spot: well inside the paraxial band at optical q_p
    n, width, waist = 128, 2e-2, 2e-3
    x = (np.arange(n) - n / 2) * (width / n)
    xx, yy = np.meshgrid(x, x)
    return TransverseProfile(samples=np.exp(-(xx**2 + yy**2) / waist**2).astype(complex),
                             extent=(width, width))


def _run_beam_filter(cfg: ScenarioConfig):
    params, fields = cfg.model_params(), cfg.field_config()
    fp = filter_params_from_model(params, fields, cfg.quad_grid(), deltap=0.0,
                                  rtol=_kernel_rtol(cfg))
    deltap = _resolve_filter_deltap(cfg, fp)
    if cfg.values["profile_in"]:
        profile = load_profile(cfg.values["profile_in"], fmt=cfg.values["profile_format"])
    else:
        profile = _default_beam(cfg)
    out = apply_filter(profile, fp, params, fields, deltap,
                       slice_length=cfg.values["slice_length"],
                       optical_depth_scale=cfg.values["optical_depth_scale"],
                       qp_physical=cfg.values["qp_physical"],
                       force_unitary=cfg.values["force_unitary"])
    path = cfg.values["profile_out"] or (cfg.out + ".profile.txt")
    save_profile(out, path, fmt=cfg.values["profile_format"])
    meta = {"method": "beam_filter", "deltap": deltap,
            "power_in": profile.power(), "power_out": out.power()}
    return [path], meta


def _ramsey_detuning_grid(cfg: ScenarioConfig) -> np.ndarray:
    span, n = cfg.values["ramsey_span"], cfg.values["ramsey_n"]
    pos = np.unique(np.concatenate([
        np.linspace(0.0, span, (n + 1) // 2),
        np.geomspace(span * 1e-4, span, 81),
    ]))
    return np.concatenate([-pos[:0:-1], pos])


def _run_ramsey(cfg: ScenarioConfig):
    v = cfg.values
    rcfg = RamseyConfig(params=cfg.model_params(), fields=cfg.field_config(),
                        half_width_a=v["half_width_a"], temperature=v["temperature"],
                        wavelength=v["wavelength"], mass=v["mass"],
                        gamma_sp_si=v["gamma_sp_si"], n_par=v["n_par"],
                        kernel_rtol=_kernel_rtol(cfg))
    spectrum = ramsey_spectrum(rcfg, _ramsey_detuning_grid(cfg))
    path = _emit_spectrum(cfg, spectrum, cfg.out)
    meta = {"method": "ramsey", "half_width_a": v["half_width_a"],
            "qp_vth_bridge": rcfg.qp_vth_bridge, "diffusion_d": rcfg.diffusion_d,
            "v_th_si": rcfg.v_th_si}
    return [path], meta


_RUNNERS = {
    "spectrum_exact": lambda cfg: _run_spectrum(cfg, exact=True),
    "spectrum_approx": lambda cfg: _run_spectrum(cfg, exact=False),
    "at_rest": _run_at_rest,
    "fwhm_scan": _run_fwhm_scan,
    "filter_curve": _run_filter_curve,
    "beam_filter": _run_beam_filter,
    "ramsey": _run_ramsey,
}


def run_scenario(cfg: ScenarioConfig) -> List[str]:
    """Dispatch, write the data file(s), and write the manifest alongside."""
    start = time.perf_counter()
    files, meta = _RUNNERS[cfg.scenario](cfg)
    manifest = {
        "scenario": cfg.scenario,
        "version": __version__,
        "resolved": serialize_config(cfg),
        "report": meta,
        "out_files": files,
        "wall_time_s": time.perf_counter() - start,
    }
    manifest_path = cfg.out + ".manifest.json"
    _write_json(manifest_path, manifest)
    return files + [manifest_path]


# figure presets: named parameter bundles, expanded to one or more runs
_FIG2 = {"gamma_pcc": 5.0, "gamma_vcc": 0.025, "gamma_g": 0.001, "b": 1,
         "branching_a": 0.816, "v2": 0.1, "v1": 0.0816, "vp": 0.001,
         "delta1": 0.0, "delta2": 0.0, "qp_vth": 36.5, "dq_vth": 0.0,
         "dq_direction": "collinear", "n_par": 3000, "n_res": 1,
         "detuning_span": 2.0, "detuning_n": 1201}
_FIG45 = {**_FIG2, "gamma_pcc": 1.0, "gamma_vcc": 0.1,
          "dq_direction": "transverse", "n_par": 1500, "n_res": 48}
_FIG6 = {**_FIG2, "gamma_pcc": 10.0, "gamma_vcc": 0.025, "n_par": 4000,
         "k_max": 8e-4, "n_k": 241}
_FIG7 = {**_FIG2, "n_par": 4000}

PRESETS: Dict[str, List[Tuple[str, str, dict]]] = {
    "fig2": [("exact", "spectrum_exact", _FIG2), ("approx", "spectrum_approx", _FIG2)],
    "fig3": [(f"gvcc{g}", "spectrum_approx", {**_FIG2, "gamma_vcc": g})
             for g in (0.025, 0.1, 0.25)],
    "fig4": [(f"dq{d}", "spectrum_approx", {**_FIG45, "dq_vth": d})
             for d in (0.0, 0.05, 0.15, 0.3)],
    "fig5": [("scan", "fwhm_scan",
              {**_FIG45, "dq_ladder": [0.05, 0.1, 0.2, 0.3, 0.4, 0.5]})],
    "fig6": [(f"dp{f:+g}", "filter_curve", {**_FIG6, "deltap_hom_factor": float(f)})
             for f in (0, 1, -1, 2, -2)],
    "fig7": [(f"a{a:g}", "ramsey", {**_FIG7, "half_width_a": a})
             for a in (50e-6, 5e-3)],
}


def expand_target(target: str, file_cfg: dict, overrides: dict, out: str,
                  fmt: str) -> List[ScenarioConfig]:
    """A scenario name yields one run; a preset yields its run list."""
    if target in SCENARIOS:
        return [parse_config(target, file_cfg, overrides, out=out or target, fmt=fmt)]
    if target in PRESETS:
        runs = []
        base = out or target
        for suffix, scenario, preset_vals in PRESETS[target]:
            runs.append(parse_config(scenario, preset_vals, file_cfg, overrides,
                                     out=f"{base}_{suffix}", fmt=fmt))
        return runs
    raise ValueError(f"unknown scenario or preset {target!r}; scenarios: "
                     f"{', '.join(SCENARIOS)}; presets: {', '.join(sorted(PRESETS))}")


def _parse_set_flags(pairs: List[str]) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="eia",
        description="Probe-absorption spectra, k-space filter curves, and "
                    "stepwise-beam line shapes of the driven four-level system.")
    parser.add_argument("target", help=f"scenario ({', '.join(SCENARIOS)}) or "
                                       f"preset ({', '.join(sorted(PRESETS))})")
    parser.add_argument("--config", default=None, help="JSON file of flat key=value parameters")
    parser.add_argument("--set", dest="sets", action="append", default=[],
                        metavar="KEY=VALUE", help="override one parameter (repeatable)")
    parser.add_argument("--out", default="", help="output base path (default: target name)")
    parser.add_argument("--format", dest="fmt", default="csv", choices=("csv", "json"))
    args = parser.parse_args(argv)

    try:
        file_cfg = {}
        if args.config:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
            if not isinstance(file_cfg, dict):
                raise ValueError("config file must hold a JSON object of key/value pairs")
        overrides = _parse_set_flags(args.sets)
        for cfg in expand_target(args.target, file_cfg, overrides, args.out, args.fmt):
            for path in run_scenario(cfg):
                print(path)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
