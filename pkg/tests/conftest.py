import re

import numpy as np
import pytest

from eia.core_model import ModelParams, FieldConfig

# short functional names for the acceptance summary block
_CRITERIA = {
    1: "at-rest equivalence",
    2: "pump-off strong-collision identity",
    3: "quadrature vs Faddeeva oracle",
    4: "peak spectrum shape",
    5: "pedestal width law",
    6: "collisional narrowing law",
    7: "wavevector-mismatch trends",
    8: "spatial filter properties",
    9: "beam diffusion properties",
    10: "global invariants",
}

_PAT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One ACCEPTANCE line per numbered criterion that ran."""
    results = {}
    for status, label in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for rep in terminalreporter.stats.get(status, []):
            m = _PAT.search(getattr(rep, "nodeid", ""))
            if m is None:
                continue
            n = int(m.group(1))
            # a setup/teardown error also means the criterion did not pass
            if label == "FAIL" or getattr(rep, "when", "call") == "call":
                results[n] = label if results.get(n) != "FAIL" else "FAIL"
    if not results:
        return
    terminalreporter.write_line("")
    for n in sorted(results):
        terminalreporter.write_line(f"ACCEPTANCE {n} {_CRITERIA.get(n, '')} ... {results[n]}")


@pytest.fixture
def fig2_params():
    # collinear buffer-gas configuration used throughout the narrow-peak checks
    return ModelParams(gamma_pcc=5.0, gamma_vcc=0.025, gamma_g=0.001)


@pytest.fixture
def fig2_fields():
    return FieldConfig(v1=0.0816, v2=0.1, vp=0.001, qp_vth=36.5, dq_vth=0.0,
                       dq_direction="collinear")


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)
