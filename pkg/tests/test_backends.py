import os
import subprocess
import sys

import numpy as np
import pytest

from sccs._backend import resolve_backend
from sccs.density_evolution import ChannelParams, RegularEnsemble, StopRule, run_de
from sccs.ensemble import make_coupled_protograph

PROBE = "import sccs._backend as b; print(b.default_backend())"


@pytest.mark.parametrize("flag, want", [(None, "numba"), ("1", "numpy"), ("0", "numba"),
                                        ("yes", "numpy")])
def test_env_flag_selects_backend(flag, want):
    env = {k: v for k, v in os.environ.items() if k != "SCCS_DISABLE_NUMBA"}
    if flag is not None:
        env["SCCS_DISABLE_NUMBA"] = flag
    out = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == want


def test_resolve_backend():
    assert resolve_backend("numpy") == "numpy"
    with pytest.raises(ValueError):
        resolve_backend("cuda")


@pytest.mark.parametrize("ens", [RegularEnsemble(4, 8), make_coupled_protograph(4, 8, 16)],
                         ids=lambda e: e.label)
@pytest.mark.parametrize("eps, p", [(0.2, 0.0), (0.35, 0.0), (0.3, 0.1)])
def test_de_backends_agree(ens, eps, p):
    stop = StopRule(max_iterations=5000)
    a = run_de(ens, ChannelParams(eps, p), stop, backend="numba", record_history=True)
    b = run_de(ens, ChannelParams(eps, p), stop, backend="numpy", record_history=True)
    assert a.status == b.status and a.iterations_used == b.iterations_used
    assert np.allclose(a.history, b.history, atol=1e-14, rtol=0)
    assert np.allclose(a.per_position_unverified, b.per_position_unverified, atol=1e-14, rtol=0)
