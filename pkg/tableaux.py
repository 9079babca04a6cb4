"""
Explicit/implicit Butcher tableau pairs for the partitioned IMEX-RK integrator.

All registered pairs have an explicit first stage, an L-stable stiffly accurate
implicit part and coinciding explicit/implicit abscissae. Coefficients live in
one table below as exact quotients or full-precision decimals.
"""
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from errors import UnknownSchemeError

DEFECT_TOL = 1e-12
L_STABILITY_Z = -1e6
L_STABILITY_TOL = 1e-3


@dataclass(frozen=True)
class ImexTableauPair:
    """Paired explicit (a_hat, b_hat, c_hat) and implicit (a, b, c) tableaux of an s-stage scheme."""

    name: str
    a_hat: np.ndarray
    b_hat: np.ndarray
    c_hat: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    design_order: int

    def __post_init__(self):
        for field in ("a_hat", "b_hat", "c_hat", "a", "b", "c"):
            array = np.array(getattr(self, field), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, field, array)

    @property
    def s(self) -> int:
        return len(self.b)


@dataclass(frozen=True)
class TableauCheck:
    """One named entry of a tableau validation report."""

    name: str
    passed: bool
    defect: float
    tolerance: float = DEFECT_TOL


# --- coefficient table -------------------------------------------------------

_ARS_GAMMA = 0.29289321881345247559915563789515   # 1 - 1/sqrt(2)
_ARS_DELTA = -0.94280904158206336586779248280647  # -2 sqrt(2) / 3

_ARK3_GAMMA = 1767732205903 / 4055673282236
_ARK3_B = [
    1471266399579 / 7840856788654,
    -4482444167858 / 7529755066697,
    11266239266428 / 11593286722821,
    _ARK3_GAMMA,
]

_ARK4_B = [82889 / 524892, 0.0, 15625 / 83664, 69875 / 102672, -2260 / 8211, 1 / 4]

_TABLE: Dict[str, dict] = {
    # forward/backward Euler written with an explicit first stage
    "imex1": dict(
        design_order=1,
        a_hat=[[0.0, 0.0],
               [1.0, 0.0]],
        b_hat=[1.0, 0.0],
        a=[[0.0, 0.0],
           [0.0, 1.0]],
        b=[0.0, 1.0],
        c=[0.0, 1.0],
    ),
    # ARS(2,3,2)
    "imex2": dict(
        design_order=2,
        a_hat=[[0.0, 0.0, 0.0],
               [_ARS_GAMMA, 0.0, 0.0],
               [_ARS_DELTA, 1.0 - _ARS_DELTA, 0.0]],
        b_hat=[0.0, 1.0 - _ARS_GAMMA, _ARS_GAMMA],
        a=[[0.0, 0.0, 0.0],
           [0.0, _ARS_GAMMA, 0.0],
           [0.0, 1.0 - _ARS_GAMMA, _ARS_GAMMA]],
        b=[0.0, 1.0 - _ARS_GAMMA, _ARS_GAMMA],
        c=[0.0, _ARS_GAMMA, 1.0],
    ),
    # ARK3(2)4L[2]SA
    "imex3": dict(
        design_order=3,
        a_hat=[[0.0, 0.0, 0.0, 0.0],
               [1767732205903 / 2027836641118, 0.0, 0.0, 0.0],
               [5535828885825 / 10492691773637, 788022342437 / 10882634858940, 0.0, 0.0],
               [6485989280629 / 16251701735622, -4246266847089 / 9704473918619,
                10755448449292 / 10357097424841, 0.0]],
        b_hat=_ARK3_B,
        a=[[0.0, 0.0, 0.0, 0.0],
           [_ARK3_GAMMA, _ARK3_GAMMA, 0.0, 0.0],
           [2746238789719 / 10658868560708, -640167445237 / 6845629431997, _ARK3_GAMMA, 0.0],
           _ARK3_B],
        b=_ARK3_B,
        c=[0.0, 1767732205903 / 2027836641118, 3 / 5, 1.0],
    ),
    # ARK4(3)6L[2]SA
    "imex4": dict(
        design_order=4,
        a_hat=[[0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
               [1 / 2, 0.0, 0.0, 0.0, 0.0, 0.0],
               [13861 / 62500, 6889 / 62500, 0.0, 0.0, 0.0, 0.0],
               [-116923316275 / 2393684061468, -2731218467317 / 15368042101831,
                9408046702089 / 11113171139209, 0.0, 0.0, 0.0],
               [-451086348788 / 2902428689909, -2682348792572 / 7519795681897,
                12662868775082 / 11960479115383, 3355817975965 / 11060851509271, 0.0, 0.0],
               [647845179188 / 3216320057751, 73281519250 / 8382639484533,
                552539513391 / 3454668386233, 3354512671639 / 8306763924573,
                4040 / 17871, 0.0]],
        b_hat=_ARK4_B,
        a=[[0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
           [1 / 4, 1 / 4, 0.0, 0.0, 0.0, 0.0],
           [8611 / 62500, -1743 / 31250, 1 / 4, 0.0, 0.0, 0.0],
           [5012029 / 34652500, -654441 / 2922500, 174375 / 388108, 1 / 4, 0.0, 0.0],
           [15267082809 / 155376265600, -71443401 / 120774400, 730878875 / 902184768,
            2285395 / 8070912, 1 / 4, 0.0],
           _ARK4_B],
        b=_ARK4_B,
        c=[0.0, 1 / 2, 83 / 250, 31 / 50, 17 / 20, 1.0],
    ),
}


def list_schemes() -> List[str]:
    """Names of the registered tableau pairs."""
    return list(_TABLE)


def get_scheme(name: str) -> ImexTableauPair:
    """
    Look up a registered tableau pair.

    Args:
        name: scheme identifier ("imex1" ... "imex4", case-insensitive)

    Returns:
        ImexTableauPair: immutable tableau pair

    Raises:
        UnknownSchemeError: if the name is not registered
    """
    key = str(name).strip().lower()
    if key not in _TABLE:
        raise UnknownSchemeError(name, _TABLE)
    entry = _TABLE[key]
    return ImexTableauPair(
        name=key,
        a_hat=entry["a_hat"],
        b_hat=entry["b_hat"],
        c_hat=entry["c"],
        a=entry["a"],
        b=entry["b"],
        c=entry["c"],
        design_order=entry["design_order"],
    )


def stability_function(tab: ImexTableauPair, z: complex) -> complex:
    """R(z) = 1 + z b^T (I - z A)^{-1} 1 of the implicit part."""
    ones = np.ones(tab.s)
    stage = np.linalg.solve(np.eye(tab.s) - z * tab.a, ones.astype(complex))
    return complex(1.0 + z * tab.b @ stage)


def _check(name: str, defect: float, tolerance: float = DEFECT_TOL) -> TableauCheck:
    defect = float(abs(defect))
    return TableauCheck(name=name, passed=bool(defect < tolerance), defect=defect, tolerance=tolerance)


def verify(tab: ImexTableauPair) -> List[TableauCheck]:
    """
    Validate structural invariants and order conditions of a tableau pair.

    Order conditions are checked up to min(design_order, 3), including the
    coupling conditions between the explicit and implicit parts.

    Args:
        tab: tableau pair to validate

    Returns:
        List[TableauCheck]: one entry per check; failures are entries, never exceptions
    """
    a_hat, a = tab.a_hat, tab.a
    b_hat, b = tab.b_hat, tab.b
    c_hat, c = tab.c_hat, tab.c

    checks = [
        _check("explicit strictly lower triangular", np.max(np.abs(np.triu(a_hat)), initial=0.0)),
        _check("implicit lower triangular", np.max(np.abs(np.triu(a, k=1)), initial=0.0)),
        _check("explicit first stage", a[0, 0]),
        _check("explicit row sums", np.max(np.abs(a_hat.sum(axis=1) - c_hat))),
        _check("implicit row sums", np.max(np.abs(a.sum(axis=1) - c))),
        _check("stiffly accurate", np.max(np.abs(a[-1] - b))),
        _check("sum b = 1", b.sum() - 1.0),
        _check("sum b_hat = 1", b_hat.sum() - 1.0),
        _check("c_hat = c", np.max(np.abs(c_hat - c))),
    ]

    if tab.design_order >= 2:
        checks.append(_check("sum b c = 1/2", b @ c - 0.5))
        checks.append(_check("sum b_hat c_hat = 1/2", b_hat @ c_hat - 0.5))

    if tab.design_order >= 3:
        weights: List[Tuple[str, np.ndarray, np.ndarray]] = [("b", b, c), ("b_hat", b_hat, c_hat)]
        matrices = [("A", a, c), ("A_hat", a_hat, c_hat)]
        for w_name, w, w_c in weights:
            checks.append(_check(f"sum {w_name} c^2 = 1/3", w @ (w_c * w_c) - 1.0 / 3.0))
            for m_name, matrix, m_c in matrices:
                checks.append(_check(f"sum {w_name} {m_name} c = 1/6", w @ matrix @ m_c - 1.0 / 6.0))

    checks.append(_check("L-stability", abs(stability_function(tab, L_STABILITY_Z)), L_STABILITY_TOL))
    return checks


def verify_all() -> Dict[str, List[TableauCheck]]:
    """Run verify on every registered scheme."""
    return {name: verify(get_scheme(name)) for name in list_schemes()}
