import numpy as np
import pytest

from hydrograd import adjoint, available_backends, simulate
from hydrograd.hydro import backend as backend_mod
from hydrograd.params import ParameterFields

HAVE_CYTHON = "cython" in available_backends()

needs_cython = pytest.mark.skipif(
    not HAVE_CYTHON, reason="compiled kernels not built"
)


def gauge_setup(tw):
    idx = tw.gauges.subset("cal")
    cells = tw.gauges.cells[idx]
    obs = tw.observations[:, idx]
    weights = np.full(len(idx), 1.0 / len(idx))
    return cells, obs, weights


class TestSelection:
    def test_python_always_available(self):
        names = available_backends()
        assert "python" in names
        assert names == tuple(sorted(names))

    def test_get_backend_unknown(self):
        with pytest.raises(ImportError):
            backend_mod.get_backend("fortran")

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("HYDROGRAD_BACKEND", "python")
        assert backend_mod.default_backend_name() == "python"

    def test_env_bad_value(self, monkeypatch):
        monkeypatch.setenv("HYDROGRAD_BACKEND", "gpu")
        with pytest.raises(ImportError):
            backend_mod.default_backend_name()

    @needs_cython
    def test_cython_listed(self):
        assert available_backends() == ("cython", "python")


@needs_cython
class TestAgreement:
    def test_forward_matches(self, small_twin):
        tw = small_twin
        ra = simulate(tw.mesh, tw.truth_params, tw.forcings,
                      backend="python")
        rb = simulate(tw.mesh, tw.truth_params, tw.forcings,
                      backend="cython")
        assert np.allclose(ra.discharge, rb.discharge,
                           rtol=1e-12, atol=1e-15)
        assert np.allclose(ra.final_states, rb.final_states,
                           rtol=1e-12, atol=1e-15)

    def test_gradient_matches(self, small_twin):
        # away from the noise-free optimum, where the gradient is O(1)
        tw = small_twin
        cells, obs, weights = gauge_setup(tw)
        rng = np.random.default_rng(8)
        span = tw.bounds.upper - tw.bounds.lower
        vals = tw.bounds.lower + rng.uniform(0.2, 0.8, (tw.mesh.n, 4)) * span
        params = ParameterFields(values=vals)
        out = {}
        for name in ("python", "cython"):
            cost, grad, _ = adjoint.grad_theta(
                tw.mesh, params, tw.forcings, cells, obs,
                weights, window=tw.cal_window, backend=name,
            )
            out[name] = (cost, grad)
        ca, ga = out["python"]
        cb, gb = out["cython"]
        assert ca == pytest.approx(cb, rel=1e-12)
        scale = np.abs(ga).max()
        assert scale > 0.0
        assert np.allclose(ga, gb, rtol=1e-9, atol=1e-9 * scale)

    def test_checkpoint_snapshots_match(self, small_twin):
        tw = small_twin
        ra = simulate(tw.mesh, tw.truth_params, tw.forcings,
                      ckpt_every=8, backend="python")
        rb = simulate(tw.mesh, tw.truth_params, tw.forcings,
                      ckpt_every=8, backend="cython")
        assert np.allclose(ra.checkpoints, rb.checkpoints,
                           rtol=1e-9, atol=1e-12)
