"""Decay curves: measured profiles over a distance-like abscissa, with fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma

import numpy as np

CSV_HEADER = ("abscissa", "measured", "paper_bound", "model", "beta", "seed")

# values below this are treated as numerically zero when judging trends
ZERO_FLOOR = 1e-13


@dataclass(frozen=True)
class Fit:
    kind: str
    rate: float
    intercept: float
    residual: float
    exponent: float | None = None

    def as_dict(self) -> dict:
        d = {"kind": self.kind, "rate": self.rate, "intercept": self.intercept, "residual": self.residual}
        if self.exponent is not None:
            d["exponent"] = self.exponent
        return d


@dataclass(frozen=True, eq=False)
class DecayCurve:
    name: str
    abscissa: tuple[float, ...]
    values: tuple[float, ...]
    bounds: tuple[float, ...] | None = None
    model: str = ""
    beta: float = float("nan")
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        if len(x) != len(self.values):
            raise ValueError("abscissa and values differ in length")
        if self.bounds is not None and len(self.bounds) != len(x):
            raise ValueError("bounds and values differ in length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("abscissa must be strictly increasing")
        if np.any(np.asarray(self.values) < -1e-12):
            raise ValueError(f"{self.name}: negative value in a decay curve")

    @classmethod
    def build(cls, name, xs, ys, bounds=None, **prov) -> "DecayCurve":
        return cls(
            name,
            tuple(float(x) for x in xs),
            tuple(max(float(y), 0.0) for y in ys),
            None if bounds is None else tuple(float(b) for b in bounds),
            **prov,
        )

    def __len__(self) -> int:
        return len(self.values)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.abscissa)

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.values)

    def inversions(self, floor: float = ZERO_FLOOR) -> int:
        """Count steps that fail to decrease while the curve is above the floor."""
        y = self.y
        bad = 0
        for a, b in zip(y[:-1], y[1:]):
            if a <= floor and b <= floor:
                continue
            if b >= a:
                bad += 1
        return bad

    def decreasing(self, allowed: int = 1, floor: float = ZERO_FLOOR) -> bool:
        return self.inversions(floor) <= allowed

    def bound_violations(self, rel: float = 1e-9, abs_tol: float = 1e-12) -> list[int]:
        if self.bounds is None:
            return []
        return [
            i
            for i, (v, b) in enumerate(zip(self.values, self.bounds))
            if v > b * (1 + rel) + abs_tol
        ]

    def max_ratio(self) -> float:
        """Largest measured / bound ratio (bounds must be present)."""
        if self.bounds is None:
            raise ValueError("no bounds attached")
        ratios = [v / b for v, b in zip(self.values, self.bounds) if b > 0]
        return max(ratios) if ratios else 0.0

    # fits act on the log of the values above the floor

    def _logs(self, floor: float):
        keep = self.y > floor
        return self.x[keep], np.log(self.y[keep])

    def fit_exponential(self, floor: float = ZERO_FLOOR) -> Fit | None:
        """log y = intercept - rate * x."""
        x, ly = self._logs(floor)
        if len(x) < 2:
            return None
        slope, icpt = np.polyfit(x, ly, 1)
        res = float(np.sqrt(np.mean((ly - (slope * x + icpt)) ** 2)))
        return Fit("exponential", float(-slope), float(icpt), res)

    def fit_stretched(self, floor: float = ZERO_FLOOR) -> Fit | None:
        """log y = intercept - rate * x**eta, eta scanned on a grid."""
        x, ly = self._logs(floor)
        pos = x > 0
        x, ly = x[pos], ly[pos]
        if len(x) < 3:
            return None
        best = None
        for eta in np.linspace(0.2, 2.0, 91):
            slope, icpt = np.polyfit(x**eta, ly, 1)
            res = float(np.sqrt(np.mean((ly - (slope * x**eta + icpt)) ** 2)))
            if best is None or res < best.residual:
                best = Fit("stretched", float(-slope), float(icpt), res, float(eta))
        return best

    def fit_factorial(self, floor: float = ZERO_FLOOR) -> Fit | None:
        """log y = intercept - rate * log(x!), the superexponential form."""
        x, ly = self._logs(floor)
        if len(x) < 2:
            return None
        lf = np.array([lgamma(v + 1.0) for v in x])
        if np.ptp(lf) == 0:
            return None
        slope, icpt = np.polyfit(lf, ly, 1)
        res = float(np.sqrt(np.mean((ly - (slope * lf + icpt)) ** 2)))
        return Fit("factorial", float(-slope), float(icpt), res)

    def fits(self) -> dict:
        out = {}
        for f in (self.fit_exponential(), self.fit_stretched(), self.fit_factorial()):
            if f is not None:
                out[f.kind] = f.as_dict()
        return out

    def csv_rows(self) -> list[tuple]:
        bounds = self.bounds if self.bounds is not None else (float("nan"),) * len(self)
        seed = "" if self.seed is None else self.seed
        return [
            (x, v, b, self.model, self.beta, seed)
            for x, v, b in zip(self.abscissa, self.values, bounds)
        ]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "abscissa": list(self.abscissa),
            "values": list(self.values),
            "bounds": None if self.bounds is None else list(self.bounds),
            "model": self.model,
            "beta": self.beta,
            "seed": self.seed,
            "inversions": self.inversions(),
            "fits": self.fits(),
            "meta": self.meta,
        }
