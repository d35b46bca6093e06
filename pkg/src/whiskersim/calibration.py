"""Synthetic grid calibration and the bivariate polynomial reading model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .whisker import WhiskerParams, measurement_from_curvature

MODEL_FORMAT = "whiskersim-model"
MODEL_VERSION = 1


class CalibrationError(ValueError):
    pass


class EmptyGridError(CalibrationError):
    pass


class RankDeficientError(CalibrationError):
    pass


class DomainError(CalibrationError):
    pass


def basis_terms(order: int = 5) -> list[tuple[int, int]]:
    """Exponent pairs (i, j), i + j <= order, in lexicographic order."""
    return [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]


@dataclass
class CalibrationGrid:
    """Touch-rod samples (x, y, z) in the whisker base frame.

    Args:
        samples: (N, 3) array of x mm, y mm, z uT.
        region: (x0, x1, y0, y1) sweep bounds in mm.
        step: grid step in mm.
        z_range: valid reading interval of the sensor that produced the data.
        seed: noise seed, kept for provenance.
    """

    samples: np.ndarray
    region: tuple
    step: float
    z_range: Optional[tuple] = None
    seed: Optional[int] = None
    noise_std: float = 0.0

    def __len__(self):
        return len(self.samples)


@dataclass
class FitReport:
    rmse: float
    r_squared: float
    n_samples: int = 0


@dataclass
class PolyModel:
    """Reading surface z = f(x, y) as a polynomial in scaled coordinates.

    Coefficients multiply u**i * v**j with u = (x - cx)/hx, v = (y - cy)/hy,
    where (cx, hx, cy, hy) come from the domain bounds.
    """

    coeffs: np.ndarray
    domain: tuple
    order: int = 5
    z_range: Optional[tuple] = None
    seed: Optional[int] = None
    _mat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        self.domain = tuple(float(v) for v in self.domain)
        terms = basis_terms(self.order)
        if self.coeffs.shape != (len(terms),):
            raise CalibrationError(f"expected {len(terms)} coefficients")
        if not np.all(np.isfinite(self.coeffs)):
            raise CalibrationError("non-finite coefficients")
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise CalibrationError("empty domain")
        self._mat = np.zeros((self.order + 1, self.order + 1))
        for c, (i, j) in zip(self.coeffs, terms):
            self._mat[i, j] = c

    @property
    def scaling(self) -> np.ndarray:
        x0, x1, y0, y1 = self.domain
        return np.array([(x0 + x1) / 2, (x1 - x0) / 2, (y0 + y1) / 2, (y1 - y0) / 2])

    @property
    def coeff_matrix(self) -> np.ndarray:
        """(order+1, order+1) matrix C with C[i, j] the u^i v^j coefficient."""
        return self._mat.copy()

    def contains(self, p) -> bool:
        x0, x1, y0, y1 = self.domain
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    @classmethod
    def from_raw(cls, raw: dict | np.ndarray, domain, order: int = 5, **kw) -> "PolyModel":
        """Build from coefficients of raw monomials x^i y^j (lexicographic)."""
        terms = basis_terms(order)
        raw = np.asarray([raw.get(t, 0.0) for t in terms] if isinstance(raw, dict) else raw,
                         dtype=float)
        cx, hx, cy, hy = _scaling(domain)
        # x = cx + hx*u ; expand (cx + hx u)^i (cy + hy v)^j
        out = np.zeros((order + 1, order + 1))
        for a, (i, j) in zip(raw, terms):
            for p in range(i + 1):
                for q in range(j + 1):
                    out[p, q] += (a * math.comb(i, p) * hx ** p * cx ** (i - p)
                                  * math.comb(j, q) * hy ** q * cy ** (j - q))
        return cls(np.array([out[i, j] for i, j in terms]), domain, order, **kw)

    def raw_coefficients(self) -> np.ndarray:
        """Coefficients of raw monomials x^i y^j in lexicographic order."""
        cx, hx, cy, hy = self.scaling
        n = self.order
        out = np.zeros((n + 1, n + 1))
        # u = (x - cx)/hx ; expand u^p v^q
        for p in range(n + 1):
            for q in range(n + 1 - p):
                c = self._mat[p, q]
                if c == 0.0:
                    continue
                for i in range(p + 1):
                    for j in range(q + 1):
                        out[i, j] += (c * math.comb(p, i) * (-cx) ** (p - i) / hx ** p
                                      * math.comb(q, j) * (-cy) ** (q - j) / hy ** q)
        return np.array([out[i, j] for i, j in basis_terms(n)])

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "poly-model",
            "basis_order": self.order,
            "basis": "scaled monomials u^i v^j, u=(x-cx)/hx, v=(y-cy)/hy",
            "coeffs": [float(c) for c in self.coeffs],
            "domain": list(self.domain),
            "z_range": None if self.z_range is None else [float(v) for v in self.z_range],
            "provenance_seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolyModel":
        _check_header(d, "poly-model")
        zr = d.get("z_range")
        return cls(np.asarray(d["coeffs"], dtype=float), tuple(d["domain"]),
                   int(d["basis_order"]), None if zr is None else tuple(zr),
                   d.get("provenance_seed"))


def _check_header(d: dict, kind: str):
    if d.get("format") != MODEL_FORMAT or d.get("kind") != kind:
        raise CalibrationError(f"not a {kind} document")
    if d.get("version") != MODEL_VERSION:
        raise CalibrationError(f"unsupported {kind} version {d.get('version')}")


def _scaling(domain):
    x0, x1, y0, y1 = (float(v) for v in domain)
    return (x0 + x1) / 2, (x1 - x0) / 2, (y0 + y1) / 2, (y1 - y0) / 2


def sample_grid(params: WhiskerParams, region=(10.0, 76.0, 3.0, 45.0), step: float = 3.0,
                rng: Optional[np.random.Generator] = None, seed: Optional[int] = None,
                noise_std: Optional[float] = None) -> CalibrationGrid:
    """Sweep a touch rod over a rectangular grid on the +Y side of the shaft.

    Args:
        params: whisker constants (noise_std is the default noise level).
        region: (x0, x1, y0, y1) bounds in mm, y0 > 0.
        step: spacing along both axes in mm.
        rng: noise generator; built from seed when omitted.
        seed: provenance seed for the generator.
        noise_std: overrides params.noise_std.

    Raises:
        EmptyGridError: no reachable node in the region.
    """
    x0, x1, y0, y1 = (float(v) for v in region)
    if not (x1 >= x0 and y1 >= y0) or not step > 0:
        raise CalibrationError(f"bad calibration region {region} / step {step}")
    if y0 <= 0:
        raise CalibrationError("calibration region must lie on the y > 0 side")
    sigma = params.noise_std if noise_std is None else noise_std
    if rng is None:
        rng = np.random.default_rng(seed)
    xs = np.arange(x0, x1 + 1e-9, step)
    ys = np.arange(y0, y1 + 1e-9, step)
    rows = []
    for y in ys:
        for x in xs:
            k = 2.0 * y / (x * x + y * y)
            if k > params.curvature_max:
                continue  # node outside the deflection envelope
            z = measurement_from_curvature(k, params, rng, sigma).z
            rows.append((x, y, z))
    if not rows:
        raise EmptyGridError("calibration region contains no reachable grid node")
    return CalibrationGrid(np.array(rows), (x0, x1, y0, y1), float(step),
                           params.z_range, seed, float(sigma))


def design_matrix(x, y, domain, order: int = 5) -> np.ndarray:
    cx, hx, cy, hy = _scaling(domain)
    u = (np.asarray(x, dtype=float) - cx) / hx
    v = (np.asarray(y, dtype=float) - cy) / hy
    return np.stack([u ** i * v ** j for i, j in basis_terms(order)], axis=-1)


def default_domain(region, margin: float = 3.0, include=((0.0, 0.0),)) -> tuple:
    """Region grown to contain the listed points, plus a margin."""
    x0, x1, y0, y1 = region
    for px, py in include:
        x0, x1 = min(x0, px), max(x1, px)
        y0, y1 = min(y0, py), max(y1, py)
    return (x0 - margin, x1 + margin, y0 - margin, y1 + margin)


def fit_poly(grid: CalibrationGrid, domain=None, order: int = 5):
    """Least-squares fit of the bivariate polynomial via QR.

    Args:
        grid: calibration samples.
        domain: evaluation bounds (x0, x1, y0, y1); defaults to the grid
            region grown to include the root, with a 3 mm margin.
        order: total polynomial degree.

    Returns:
        (PolyModel, FitReport) with the report computed on the training data.
    """
    S = np.asarray(grid.samples, dtype=float)
    n_terms = len(basis_terms(order))
    if len(S) < n_terms:
        raise RankDeficientError(f"need at least {n_terms} samples, got {len(S)}")
    if domain is None:
        domain = default_domain(grid.region)
    A = design_matrix(S[:, 0], S[:, 1], domain, order)
    z = S[:, 2]
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diag(R))
    if d.min() <= 1e-10 * d.max():
        raise RankDeficientError("calibration design matrix is rank deficient")
    coeffs = np.linalg.solve(R, Q.T @ z)
    resid = z - A @ coeffs
    sst = float(np.sum((z - z.mean()) ** 2))
    sse = float(np.sum(resid ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else (1.0 if sse == 0 else 0.0)
    zr = grid.z_range if grid.z_range is not None else (float(z.min()), float(z.max()))
    model = PolyModel(coeffs, domain, order, tuple(zr), grid.seed)
    return model, FitReport(math.sqrt(sse / len(z)), r2, len(z))


def _check_domain(model: PolyModel, p: np.ndarray):
    x0, x1, y0, y1 = model.domain
    if np.any((p[..., 0] < x0) | (p[..., 0] > x1) | (p[..., 1] < y0) | (p[..., 1] > y1)):
        raise DomainError("point outside polynomial domain")


def _powers(t, n):
    out = [np.ones_like(t)]
    for _ in range(n):
        out.append(out[-1] * t)
    return np.stack(out, axis=-1)


def eval_poly(model: PolyModel, p):
    """Reading predicted at base-frame point(s) p."""
    p = np.asarray(p, dtype=float)
    _check_domain(model, p)
    cx, hx, cy, hy = model.scaling
    U = _powers((p[..., 0] - cx) / hx, model.order)
    V = _powers((p[..., 1] - cy) / hy, model.order)
    z = np.einsum("...i,ij,...j->...", U, model._mat, V)
    return float(z) if z.ndim == 0 else z


def grad_poly(model: PolyModel, p) -> np.ndarray:
    """Analytic gradient (dz/dx, dz/dy) in uT/mm."""
    p = np.asarray(p, dtype=float)
    _check_domain(model, p)
    cx, hx, cy, hy = model.scaling
    n = model.order
    u = (p[..., 0] - cx) / hx
    v = (p[..., 1] - cy) / hy
    U, V = _powers(u, n), _powers(v, n)
    k = np.arange(n + 1)
    dU = np.concatenate([np.zeros_like(U[..., :1]), U[..., :-1] * k[1:]], axis=-1)
    dV = np.concatenate([np.zeros_like(V[..., :1]), V[..., :-1] * k[1:]], axis=-1)
    gx = np.einsum("...i,ij,...j->...", dU, model._mat, V) / hx
    gy = np.einsum("...i,ij,...j->...", U, model._mat, dV) / hy
    return np.stack([gx, gy], axis=-1)


def grid_to_dict(grid: CalibrationGrid) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": "calibration-grid",
        "region": list(grid.region),
        "step": grid.step,
        "z_range": None if grid.z_range is None else list(grid.z_range),
        "provenance_seed": grid.seed,
        "noise_std": grid.noise_std,
        "samples": [[float(v) for v in row] for row in grid.samples],
    }


def grid_from_dict(d: dict) -> CalibrationGrid:
    _check_header(d, "calibration-grid")
    zr = d.get("z_range")
    return CalibrationGrid(np.asarray(d["samples"], dtype=float), tuple(d["region"]),
                           float(d["step"]), None if zr is None else tuple(zr),
                           d.get("provenance_seed"), float(d.get("noise_std", 0.0)))
