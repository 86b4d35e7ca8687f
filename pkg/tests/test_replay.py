import numpy as np
import pytest

from conftest import BASE
from shadowlab.config import inhomogeneity_along
from shadowlab.methods import MethodConfig, build_method
from shadowlab.repar import rep_membership
from shadowlab.replay import (
    ExactFlowMethod, anchor_deviation_ladder, check_replay_identity, shadow_search,
)

N = 3
P = BASE["plane-shear"]


@pytest.fixture(scope="module")
def z(shear):
    return inhomogeneity_along(shear, P, N, "constant-normal")


def method(shear, z, d, kappa=1):
    return build_method(shear, MethodConfig(d=d, r=0.1, N=N, kappa=kappa, z=z, base_point=P))


def test_exact_flow_shadows_itself(shear):
    res = shadow_search(ExactFlowMethod(shear, N, 1e-2), P, L=1.0, budget=3)
    assert res.found and res.sup == 0.0


def test_shadow_found_and_admissible(shear, z):
    inst = method(shear, z, 1e-2)
    res = shadow_search(inst, P, L=4.0, budget=20, max_shift=0.5 * inst.tau)
    assert res.found and res.sup <= 4.0 * inst.d
    assert rep_membership(res.beta, 4.0 * inst.d).member
    knots = np.arange(2 * N + 1.0)
    assert np.all(np.abs(res.beta(knots) - knots) <= 0.5 * inst.tau + 1e-15)
    assert np.linalg.norm(res.p_hat - P) <= inst.config.r


@pytest.mark.parametrize("d", [1e-2, 5e-3])
def test_replay_identity_is_exact(shear, z, d):
    inst = method(shear, z, d)
    res = shadow_search(inst, P, L=4.0, budget=20, max_shift=0.5 * inst.tau)
    rep = check_replay_identity(inst, res)
    assert rep.regime_ok, rep.diagnostic
    assert rep.residual <= 1e-9
    # using w_k on the right instead of the flowed deviation misses by A X s
    assert rep.literal_residual > 1e3 * rep.residual


def test_replay_rejects_kappa0(shear, z):
    inst = method(shear, z, 1e-2, kappa=0)
    res = shadow_search(inst, P, L=4.0, budget=2)
    with pytest.raises(ValueError):
        check_replay_identity(inst, res)


def test_regime_failure_reports_nan(torus_irr):
    zz = inhomogeneity_along(torus_irr, BASE["torus-irr"], N, "constant-normal")
    inst = build_method(torus_irr, MethodConfig(d=1e-2, r=0.1, N=N, kappa=1, z=zz,
                                                base_point=BASE["torus-irr"]), strict=False)
    res = shadow_search(inst, BASE["torus-irr"], L=2.0, budget=5, max_shift=0.5 * inst.tau)
    rep = check_replay_identity(inst, res)
    if not rep.regime_ok:
        assert np.isnan(rep.residual) and rep.diagnostic


def test_anchor_ladder_is_flat(shear, z):
    lad = anchor_deviation_ladder(shear, P, z, N, [1e-2, 5e-3, 2.5e-3], 0.1)
    assert lad.variation <= 0.2
    assert all(s is None for s in lad.shadows)
    assert lad.to_dict()["K5_estimate"] == max(lad.ratios)
