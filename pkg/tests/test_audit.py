import numpy as np
import pytest

from adaptive_pir.audit import check_privacy, check_secrecy, exact_privacy_check
from adaptive_pir.errors import EnumerationTooLarge
from adaptive_pir.framework import LagrangeBasis, make_basis
from adaptive_pir.params import SystemParams
from adaptive_pir.qarray import build_query_array

P8 = SystemParams(8, 2, 2, 2, 2)


@pytest.mark.parametrize("kind", ["lagrange", "csa"])
def test_matrix_checks(kind):
    basis = make_basis(kind, P8)
    sec = check_secrecy(basis, P8, draws=0)
    assert sec.matrices_ok and sec.matrices_checked == 3 * 28 and sec.passed
    priv = check_privacy(basis, build_query_array(3), P8, draws=0)
    assert priv.matrices_ok and priv.passed
    # 7 distinct residue sets x rows x K x C(8,2) subsets
    assert priv.matrices_checked == sum(len(r) for r in [(0, 1, 2), (0, 1), (0, 2), (1, 2), (0,), (1,), (2,)]) * 2 * 28


def test_secrecy_vacuous_without_x():
    rep = check_secrecy(make_basis("lagrange", SystemParams(5, 2, 0, 1)))
    assert rep.passed and rep.matrices_checked == 0 and rep.notes


def test_secrecy_empirical_small():
    rep = check_secrecy(make_basis("lagrange", SystemParams(4, 1, 1, 1, 2)), draws=3000, seed=1)
    assert rep.passed and rep.tests == 2 * 4 and rep.adjusted_p > 0.01


def test_privacy_single_file_note():
    rep = check_privacy(make_basis("csa", SystemParams(4, 1, 1, 1)), build_query_array(2), draws=100)
    assert rep.passed and rep.tests == 0 and rep.notes


class LeakyBasis(LagrangeBasis):
    """Query noise drops out at the highest server points, exposing the index there."""

    def query_eval(self, R, i, k, t, x):
        if t < self.params.T and x >= self.params.N - self.params.T:
            return 0
        return super().query_eval(R, i, k, t, x)


class OpenStorage(LagrangeBasis):
    """Storage noise multiplied by zero at the top server points."""

    def storage_eval(self, i, k, x):
        if k >= self.params.K and x >= self.params.N - self.params.X:
            return 0
        return super().storage_eval(i, k, x)


def test_privacy_detects_leak():
    p = SystemParams(5, 1, 1, 1, 2)
    rep = check_privacy(LeakyBasis(p), build_query_array(p.lam), draws=2000, seed=0)
    assert not rep.matrices_ok and rep.singular
    assert not rep.empirical_ok and rep.adjusted_p < 1e-6
    assert not rep.passed


def test_secrecy_detects_leak():
    p = SystemParams(5, 1, 1, 1, 1)
    rep = check_secrecy(OpenStorage(p), draws=2000, seed=0)
    assert not rep.matrices_ok and not rep.empirical_ok and not rep.passed


def test_exact_privacy():
    p = SystemParams(5, 1, 1, 1, 2)
    basis = make_basis("lagrange", p)
    assert exact_privacy_check(basis, build_query_array(p.lam))
    assert not exact_privacy_check(LeakyBasis(p), build_query_array(p.lam))
    with pytest.raises(EnumerationTooLarge):
        exact_privacy_check(basis, build_query_array(p.lam), limit=5)


def test_report_dict_is_json_ready():
    import json
    rep = check_secrecy(make_basis("lagrange", SystemParams(4, 1, 1, 1)), draws=500)
    json.dumps(rep.to_dict())


def test_params_mismatch():
    with pytest.raises(ValueError):
        check_secrecy(make_basis("lagrange", P8), SystemParams(9, 2, 2, 2), draws=0)
