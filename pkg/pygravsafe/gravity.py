""" Truth gravity model of the small body: point mass plus normalized zonal harmonics, and zonal influence radii """
import ast
import math
import dataclasses

import numpy as np


class DomainError(ValueError):
    """ A function was evaluated outside of its domain, e.g. the gravity field at the origin """
    pass


#: Normalized zonal coefficients of 101955 Bennu, keyed by degree
BENNU_ZONALS = ((2, 1.93e-2), (3, -1.22e-3), (4, -6.50e-3), (5, 6.73e-5))
#: Gravitational parameter of Bennu in m³/s²
BENNU_MU = 4.89
#: Brillouin sphere radius of Bennu in m, also the length normalization unit
BENNU_RADIUS = 290.

# |P_n| below this is treated as a root of the Legendre polynomial
_LEGENDRE_ROOT = 1e-12


def legendre(n, x):
    """ Legendre polynomial of degree `n` and its derivative, by the three-term recurrences

    Args:
        n (`int`): non-negative degree
        x (`float` or array): argument(s) in [-1, 1]

    Returns:
        `tuple`: P_n(x) and dP_n/dx(x), with the shape of `x`
    """
    x = np.asarray(x, dtype=float)
    p_prev, p = np.ones_like(x), x.copy()
    dp_prev, dp = np.zeros_like(x), np.ones_like(x)
    if n == 0:
        return p_prev, dp_prev

    for k in range(1, n):
        # (k + 1) P_{k+1} = (2k + 1) x P_k - k P_{k-1}  and  P'_{k+1} = P'_{k-1} + (2k + 1) P_k
        p_prev, p, dp_prev, dp = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1), dp, dp_prev + (2 * k + 1) * p
    return p, dp


@dataclasses.dataclass(frozen=True)
class ZonalGravityField:
    """ Point mass plus axisymmetric zonal harmonics, expressed with 4π-normalized coefficients

    Attributes:
        mu (`float`): gravitational parameter
        reference_radius (`float`): radius of the harmonic expansion reference sphere
        normalized_zonals (`tuple`): pairs of (degree n ≥ 2, normalized coefficient J̃_n)
    """
    mu: float = 1.
    reference_radius: float = 1.
    normalized_zonals: tuple = ()

    def __post_init__(self):
        zonals = tuple(sorted((int(n), float(coef)) for n, coef in self.normalized_zonals))
        object.__setattr__(self, 'normalized_zonals', zonals)
        if not self.mu > 0 or not self.reference_radius > 0:
            raise DomainError('Gravitational parameter and reference radius must be positive')

        degrees = [n for n, _ in zonals]
        if len(set(degrees)) != len(degrees):
            raise DomainError(f'Duplicate zonal degrees in {degrees}')
        if any(n < 2 for n in degrees):
            raise DomainError(f'Zonal degrees must be at least 2, got {degrees}')


    @property
    def max_degree(self):
        """ `int`: highest zonal degree present, 0 for a point mass """
        return max((n for n, _ in self.normalized_zonals), default=0)


    @property
    def zonals(self):
        """ `dict`: unnormalized coefficients J_n = √(2n+1) J̃_n, keyed by degree """
        return {n: math.sqrt(2 * n + 1) * coef for n, coef in self.normalized_zonals}


    @property
    def time_unit(self):
        """ `float`: time unit sqrt(R³/μ) that makes the field dimensionless with length unit R """
        return math.sqrt(self.reference_radius ** 3 / self.mu)


    @classmethod
    def bennu(cls, physical=False):
        """ The Bennu reference field, in normalized units (μ = R = 1) or in physical units (m, s) """
        if physical:
            return cls(BENNU_MU, BENNU_RADIUS, BENNU_ZONALS)
        return cls(1., 1., BENNU_ZONALS)


    @classmethod
    def from_config(cls, section):
        """ Build a field from a key-value mapping with `mu`, `reference_radius` and `zonals` keys

        Args:
            section (mapping): e.g. a :class:`~configparser.SectionProxy`, where zonals is a python literal list of
                               (degree, coefficient) pairs

        Returns:
            :class:`~ZonalGravityField`: the described field
        """
        zonals = section.get('zonals', '[]')
        if isinstance(zonals, str):
            zonals = ast.literal_eval(zonals.strip() or '[]')
        return cls(float(section.get('mu', 1.)), float(section.get('reference_radius', 1.)), tuple(map(tuple, zonals)))


def _radius(position):
    """ Norms of (a batch of) positions, refusing the origin """
    position = np.asarray(position, dtype=float)
    r = np.linalg.norm(position, axis=-1)
    if np.any(r == 0):
        raise DomainError('Gravity field is undefined at the origin')
    return position, r


def potential(field, position):
    """ Specific gravitational potential (force function convention, positive for a point mass)

    U = (μ/r) [1 − Σ_n J_n (R/r)^n P_n(z/r)]

    Args:
        field (:class:`~ZonalGravityField`): the gravity field
        position (array): a 3-vector or an (N, 3) batch

    Returns:
        `float` or array: the potential at each position
    """
    position, r = _radius(position)
    total = field.mu / r
    for n in field.zonals:
        total = total + zonal_term_potential(field, n, position)
    return total


def zonal_term_potential(field, n, position):
    """ Contribution u_n = −(μ/r) J_n (R/r)^n P_n(z/r) of the degree-`n` zonal term to the potential

    Raises:
        `KeyError`: the field has no zonal term of degree `n`
    """
    zonals = field.zonals
    if n not in zonals:
        raise KeyError(f'No zonal term of degree {n} in field')

    position, r = _radius(position)
    p_n, _ = legendre(n, position[..., 2] / r)
    return -field.mu / r * zonals[n] * (field.reference_radius / r) ** n * p_n


def acceleration(field, position):
    """ Gravitational acceleration a = ∇U

    The zonal gradients are chained through s = z/r in Cartesian form,
    ∇u_n = μ J_n R^n / r^{n+2} [((n+1) P_n(s) + s P'_n(s)) x/r − P'_n(s) e_z],
    which has no singularity on the polar axis.

    Args:
        field (:class:`~ZonalGravityField`): the gravity field
        position (array): a 3-vector or an (N, 3) batch

    Returns:
        array: accelerations with the shape of `position`
    """
    position, r = _radius(position)
    r = np.asarray(r)[..., np.newaxis]
    accel = -field.mu * position / r ** 3
    if not field.normalized_zonals:
        return accel

    unit = position / r
    s = unit[..., 2:3]
    e_z = np.array([0., 0., 1.])
    for n, j_n in field.zonals.items():
        p_n, dp_n = legendre(n, s)
        scale = field.mu * j_n * field.reference_radius ** n / r ** (n + 2)
        accel = accel + scale * (((n + 1) * p_n + s * dp_n) * unit - dp_n * e_z)
    return accel


@dataclasses.dataclass(frozen=True)
class InfluenceQuery:
    """ Where does the degree-`n` zonal potential reach a `fraction` of the potential at the Hill radius? """
    degree: int
    colatitude: float
    fraction: float = .1
    hill_radius: float = 31000.

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise DomainError(f'Influence fraction must be in (0, 1], got {self.fraction}')
        if not 0 <= self.colatitude <= math.pi:
            raise DomainError(f'Colatitude must be in [0, π], got {self.colatitude}')


def influence_radius(field, query):
    """ Radius where |u_n| equals `fraction` of u_H = μ / hill_radius, at the given colatitude

    Closed form r = (|J_n| R^n |P_n(cos θ)| hill_radius / fraction)^{1/(n+1)}.

    Args:
        field (:class:`~ZonalGravityField`): the gravity field, must contain the queried degree
        query (:class:`~InfluenceQuery`): degree, colatitude, threshold and Hill radius

    Returns:
        `float` or `None`: the radius, or `None` at a root of P_n where there is no finite solution
    """
    zonals = field.zonals
    if query.degree not in zonals:
        raise KeyError(f'No zonal term of degree {query.degree} in field')
    if not query.hill_radius > field.reference_radius:
        raise DomainError('Hill radius must exceed the reference radius')

    p_n, _ = legendre(query.degree, math.cos(query.colatitude))
    if abs(p_n) < _LEGENDRE_ROOT:
        return None

    numerator = abs(zonals[query.degree]) * field.reference_radius ** query.degree * abs(p_n) * query.hill_radius
    return float((numerator / query.fraction) ** (1 / (query.degree + 1)))


def influence_contour(field, degrees, colatitudes, fraction=.1, hill_radius=31000.):
    """ Tabulate :func:`~influence_radius` over degrees and colatitudes

    Returns:
        `list`: rows of (degree, colatitude, radius or `None`)
    """
    return [(n, theta, influence_radius(field, InfluenceQuery(n, theta, fraction, hill_radius)))
            for n in degrees for theta in colatitudes]
