"""
Test script for the IMEX tableau registry and its validation report.
"""
import dataclasses
import sys
from pathlib import Path

import numpy as np

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from errors import UnknownSchemeError
from tableaux import DEFECT_TOL, get_scheme, list_schemes, stability_function, verify, verify_all


def test_registered_schemes():
    """Four pairs of increasing design order."""
    assert list_schemes() == ["imex1", "imex2", "imex3", "imex4"]
    for order, name in enumerate(list_schemes(), start=1):
        tab = get_scheme(name)
        assert tab.design_order == order
        assert tab.a.shape == tab.a_hat.shape == (tab.s, tab.s)


def test_all_checks_pass():
    print("\n🧮 Tableau checks")
    for name, checks in verify_all().items():
        failed = [c.name for c in checks if not c.passed]
        print(f"   {name}: {len(checks) - len(failed)}/{len(checks)}")
        assert not failed, f"{name}: {failed}"


def test_structure_checks_use_round_off_tolerance():
    for check in verify(get_scheme("imex3")):
        if check.name != "L-stability":
            assert check.tolerance == DEFECT_TOL
            assert check.defect < DEFECT_TOL


def test_order_conditions_reported_up_to_third_order():
    names = {c.name for c in verify(get_scheme("imex4"))}
    assert "sum b c = 1/2" in names
    assert "sum b_hat A c = 1/6" in names
    assert "sum b A_hat c = 1/6" in names
    names1 = {c.name for c in verify(get_scheme("imex1"))}
    assert "sum b c = 1/2" not in names1


def test_lookup_is_case_insensitive():
    assert get_scheme("IMEX2").name == "imex2"
    assert get_scheme(" imex4 ").name == "imex4"


def test_unknown_scheme():
    try:
        get_scheme("imex9")
    except UnknownSchemeError as exc:
        assert isinstance(exc, ValueError)
        for name in list_schemes():
            assert name in str(exc)
    else:
        raise AssertionError("imex9 should not resolve")


def test_tableaux_are_immutable():
    tab = get_scheme("imex2")
    try:
        tab.a[1, 1] = 0.5
    except ValueError:
        pass
    else:
        raise AssertionError("coefficient arrays must be read-only")

    try:
        tab.name = "other"
    except dataclasses.FrozenInstanceError:
        pass
    else:
        raise AssertionError("tableau pair must be frozen")


def test_perturbed_weights_are_reported():
    """A broken pair yields failing entries, never an exception."""
    tab = get_scheme("imex2")
    broken = dataclasses.replace(tab, b=tab.b + np.array([0.0, 1e-3, 0.0]))
    results = {c.name: c for c in verify(broken)}
    assert not results["sum b = 1"].passed
    assert not results["stiffly accurate"].passed
    assert results["sum b_hat = 1"].passed


def test_stiff_decay():
    """Stiffly accurate and L-stable: R(0) = 1 and R(z) -> 0 as z -> -inf."""
    for name in list_schemes():
        tab = get_scheme(name)
        assert np.allclose(tab.a[-1], tab.b)
        assert abs(stability_function(tab, 0.0) - 1.0) < 1e-14
        assert abs(stability_function(tab, -1e6)) < 1e-3
        # A-stability on a few points of the left half-plane
        for z in (-1.0, -10.0 + 5.0j, 0.0 + 3.0j, -100.0):
            assert abs(stability_function(tab, z)) <= 1.0 + 1e-12


def test_backward_euler_stability_function():
    tab = get_scheme("imex1")
    for z in (-0.5, -2.0, -7.0 + 1.0j):
        assert abs(stability_function(tab, z) - 1.0 / (1.0 - z)) < 1e-14


if __name__ == "__main__":
    test_registered_schemes()
    test_all_checks_pass()
    test_structure_checks_use_round_off_tolerance()
    test_order_conditions_reported_up_to_third_order()
    test_lookup_is_case_insensitive()
    test_unknown_scheme()
    test_tableaux_are_immutable()
    test_perturbed_weights_are_reported()
    test_stiff_decay()
    test_backward_euler_stability_function()
    print("\n✅ Tableau tests passed")
