"""
Origin-centered ellipsoids E(P, α) = {x : x^T P x <= α}.

Most queries need P^{-1} rather than P, so each ellipsoid keeps the Cholesky
factor of P^{-1} alongside P. Ellipsoids built from an SDP certificate Y use
Y itself as P^{-1} and never invert it twice.
"""

from dataclasses import dataclass
import numpy as np
import scipy.linalg
import scipy.special
from django.conf import settings
from core.exceptions import ModelError, NotPositiveDefiniteError


def _cholesky(M, what):
    try:
        return scipy.linalg.cholesky(M, lower=True)
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from e


def _spd_inverse(M, what):
    lower = _cholesky(M, what)
    inverse = scipy.linalg.cho_solve((lower, True), np.eye(M.shape[0]))
    return (inverse + inverse.T) / 2


@dataclass(frozen=True)
class DangerCheck:
    """Result of testing an ellipsoid against every danger plane."""

    intersects: bool
    distances: tuple

    @property
    def min_distance(self):
        return min(self.distances) if self.distances else float('inf')


class Ellipsoid:
    """Shape matrix P (symmetric PD) and level α > 0."""

    def __init__(self, P, alpha, shape_inverse=None):
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if P.shape[0] != P.shape[1]:
            raise ModelError(f"Shape matrix must be square, got {P.shape}")
        if not alpha > 0:
            raise ModelError(f"Ellipsoid level alpha must be positive, got {alpha}")
        self.P = (P + P.T) / 2
        self.alpha = float(alpha)
        if shape_inverse is None:
            shape_inverse = _spd_inverse(self.P, "Ellipsoid shape matrix P")
        self.shape_inverse = (shape_inverse + shape_inverse.T) / 2
        self._lower = _cholesky(self.shape_inverse, "Inverse shape matrix")

    @classmethod
    def from_shape_inverse(cls, Y, alpha):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        Y = (Y + Y.T) / 2
        return cls(_spd_inverse(Y, "Certificate matrix Y"), alpha, shape_inverse=Y)

    @property
    def dim(self):
        return self.P.shape[0]

    def __repr__(self):
        return f"Ellipsoid(dim={self.dim}, alpha={self.alpha:g})"

    def quadratic_form(self, points):
        """x^T P x for each row of `points` (or a single vector)."""
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        rows = np.atleast_2d(points)
        # x^T P x = ||L^{-1} x||^2 with P^{-1} = L L^T
        solved = scipy.linalg.solve_triangular(self._lower, rows.T, lower=True)
        values = np.sum(solved ** 2, axis=0)
        return float(values[0]) if single else values

    def contains(self, points, rtol=0.0):
        return self.quadratic_form(points) <= self.alpha * (1.0 + rtol)

    def scaled(self, factor):
        """Same shape, level multiplied by `factor` (semi-axes scale by √factor)."""
        return Ellipsoid(self.P, self.alpha * factor, shape_inverse=self.shape_inverse)

    def support(self, c):
        """max c^T x over the ellipsoid, √(α c^T P^{-1} c)."""
        c = np.asarray(c, dtype=float)
        return float(np.sqrt(self.alpha * c @ self.shape_inverse @ c))

    def plane_distance(self, c, b):
        """
        Signed distance to the hyperplane c^T x = b:
        (|b| - √(α c^T P^{-1} c)) / ‖c‖. Negative when the ellipsoid crosses it.
        """
        c = np.asarray(c, dtype=float)
        if c.shape != (self.dim,):
            raise ModelError(f"Plane normal must have length {self.dim}, got {c.shape}")
        norm = float(np.linalg.norm(c))
        if norm == 0.0:
            raise ModelError("Plane normal must be nonzero")
        return (abs(float(b)) - self.support(c)) / norm

    def project(self, dims):
        """Shadow of the ellipsoid on the coordinates `dims`."""
        dims = [int(d) for d in dims]
        if not dims:
            raise ModelError("Projection needs at least one coordinate")
        if len(set(dims)) != len(dims):
            raise ModelError(f"Projection coordinates must be distinct, got {dims}")
        if any(d < 0 or d >= self.dim for d in dims):
            raise ModelError(f"Projection coordinates {dims} out of range 0..{self.dim - 1}")
        sub = self.shape_inverse[np.ix_(dims, dims)]
        return Ellipsoid(_spd_inverse(sub, "Projected inverse shape"), self.alpha, shape_inverse=sub)

    def log_volume(self):
        """log of the Lebesgue volume: log V_unit + (d/2) log α - ½ log det P."""
        d = self.dim
        log_unit_ball = (d / 2) * np.log(np.pi) - scipy.special.gammaln(d / 2 + 1)
        log_det_inverse = 2.0 * np.sum(np.log(np.diag(self._lower)))
        return float(log_unit_ball + (d / 2) * np.log(self.alpha) + 0.5 * log_det_inverse)

    def boundary_points(self, dims, count=None):
        """
        `count` points on the boundary of the 2-D or 3-D projection on `dims`.
        2-D points are evenly spaced in angle; 3-D points follow a Fibonacci
        lattice (golden-angle azimuth, evenly spaced height).
        """
        count = settings.ASAP_BOUNDARY_POINTS if count is None else int(count)
        if len(dims) not in (2, 3):
            raise ModelError(f"Boundary sampling needs 2 or 3 coordinates, got {len(dims)}")
        if count < 3:
            raise ModelError(f"Boundary sampling needs at least 3 points, got {count}")

        shadow = self.project(dims)
        if len(dims) == 2:
            theta = 2.0 * np.pi * np.arange(count) / count
            directions = np.column_stack([np.cos(theta), np.sin(theta)])
        else:
            k = np.arange(count) + 0.5
            height = 1.0 - 2.0 * k / count
            azimuth = np.pi * (3.0 - np.sqrt(5.0)) * k
            radius = np.sqrt(1.0 - height ** 2)
            directions = np.column_stack([radius * np.cos(azimuth), radius * np.sin(azimuth), height])

        # P^{-1} = V Λ V^T  =>  x = √α V Λ^{1/2} z lies on x^T P x = α for unit z
        eigenvalues, eigenvectors = np.linalg.eigh(shadow.shape_inverse)
        transform = eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))
        return np.sqrt(shadow.alpha) * directions @ transform.T


def from_certificate(Y, m_s) -> Ellipsoid:
    """E(Y^{-1}, m_s) certified by the saturation SDP."""
    return Ellipsoid.from_shape_inverse(Y, m_s)


def plane_distance(ellipsoid, c, b):
    return ellipsoid.plane_distance(c, b)


def intersects_danger(ellipsoid, danger, slack=None) -> DangerCheck:
    """
    Distances from the ellipsoid to every danger plane; it intersects D when
    any distance is below -slack (ASAP_TANGENCY_SLACK).
    """
    slack = settings.ASAP_TANGENCY_SLACK if slack is None else slack
    if danger.kappa and danger.dim != ellipsoid.dim:
        raise ModelError(
            f"Danger set dimension {danger.dim} does not match ellipsoid dimension {ellipsoid.dim}"
        )
    distances = tuple(ellipsoid.plane_distance(plane.c, plane.b) for plane in danger.planes)
    return DangerCheck(intersects=any(d < -slack for d in distances), distances=distances)


def project(ellipsoid, dims):
    return ellipsoid.project(dims)


def log_volume(ellipsoid):
    return ellipsoid.log_volume()


def boundary_points(ellipsoid, dims, count=None):
    return ellipsoid.boundary_points(dims, count)
