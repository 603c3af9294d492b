from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class Certificate(BaseModel):
    """Outcome of one numerical check: verdict, witness constant, tolerance used."""

    model_config = ConfigDict(frozen=True, ser_json_inf_nan="constants")

    name: str
    passed: bool
    witness: Optional[float] = None
    tol: float = 1e-9
    detail: str = ""


class CertificateBundle(BaseModel):
    """Named certificates with an overall verdict."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    certificates: Dict[str, Certificate] = Field(default_factory=dict)

    def add(self, cert: Certificate) -> Certificate:
        self.certificates[cert.name] = cert
        return cert

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.certificates.values())

    def failed(self) -> List[str]:
        return [name for name, c in self.certificates.items() if not c.passed]


class Curve(BaseModel):
    """A measured quantity along a parameter, with the bound it is compared to."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    x: List[float]
    y: List[float]
    bound: List[float] = Field(default_factory=list)


def as_float_list(values: Any) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def tail_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return 0.0
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        return 0.0
    return float(np.dot(xc, y - y.mean()) / denom)


def log_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two positive curves in log scale."""
    a = np.log(np.asarray(a, dtype=float))
    b = np.log(np.asarray(b, dtype=float))
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < 2:
        return float("nan")
    a = a[ok] - a[ok].mean()
    b = b[ok] - b[ok].mean()
    denom = float(np.sqrt(np.dot(a, a) * np.dot(b, b)))
    if denom == 0.0:
        return float("nan")
    return float(np.dot(a, b) / denom)
