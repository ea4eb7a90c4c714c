"""Copy overhead for Werner resources shared through a dephasing fiber."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .states import QState, fiber_decohere, werner


@dataclass(frozen=True)
class FiberScenario:
    z: float
    dphi: float
    N_base: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.z <= 1.0:
            raise ValueError(f"z must lie in [0, 1], got {self.z}")
        if self.dphi < 0:
            raise ValueError(f"dphi must be >= 0, got {self.dphi}")
        if self.N_base < 1:
            raise ValueError(f"N_base must be >= 1, got {self.N_base}")


def purity(rho: QState) -> float:
    return rho.purity


def werner_purity(z: float) -> float:
    return (1 + 3 * z**2) / 4


def fiber_purity(z: float, dphi: float) -> float:
    return (1 + (1 + 2 * np.exp(-8 * dphi**2)) * z**2) / 4


def copies_needed(s: FiberScenario) -> float:
    """N' = N Tr(rho_w^2) / Tr(rho_w'^2)."""
    w = werner(s.z)
    return s.N_base * purity(w) / purity(fiber_decohere(w, s.dphi))


@dataclass(frozen=True)
class OverheadRow:
    z: float
    dphi: float
    purity: float
    purity_noisy: float
    ratio: float


def overhead_curve(z_grid: Iterable[float], dphi_grid: Iterable[float]) -> list[OverheadRow]:
    z_grid, dphi_grid = list(z_grid), list(dphi_grid)
    if not z_grid or not dphi_grid:
        raise ValueError("grids must be nonempty")
    rows = []
    for z in z_grid:
        w = werner(z)
        p = purity(w)
        for dphi in dphi_grid:
            pn = purity(fiber_decohere(w, dphi))
            rows.append(OverheadRow(float(z), float(dphi), p, pn, p / pn))
    return rows


def overhead_csv(rows: Iterable[OverheadRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "dphi", "purity", "purity_noisy", "ratio"])
    for r in rows:
        w.writerow([repr(r.z), repr(r.dphi), repr(r.purity), repr(r.purity_noisy), repr(r.ratio)])
    return buf.getvalue()
