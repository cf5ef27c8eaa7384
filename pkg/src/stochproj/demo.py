"""Reproducible demonstration that the forward convex-order cone is not
geodesically convex: a fixed 2D instance in convex order whose optimal
coupling has a displacement midpoint outside the cone (its support hull
fails to contain the smaller measure's hull, which is necessary for the
order to hold)."""

from __future__ import annotations

from dataclasses import dataclass

from .lp import SimplexSolver
from .measures import DiscreteMeasure, convex_hull_contains, make_measure, w2_squared
from .orders import OrderCertificate, check_convex_order

__all__ = ["GeodesicDemo", "run_geodesic_demo"]

# two atoms inside, three outside with the wide pair below; the vertical
# separation dominates the pairing so the right atom ships all its mass to
# the upper-right atom and both midpoint clusters retreat from it
MU_POINTS = [[0.0, 0.0], [1.0, 0.0]]
MU_WEIGHTS = [0.5, 0.5]
NU_POINTS = [[1.5, 2.0], [-1.7, -2.0], [0.7, -2.0]]
NU_WEIGHTS = [0.5, 0.25, 0.25]


@dataclass(frozen=True)
class GeodesicDemo:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    order_mu_nu: OrderCertificate
    coupling_cost: float
    coupling: object
    midpoint: DiscreteMeasure
    hull_containment: dict  # red atom -> inside midpoint hull?
    order_mu_midpoint: OrderCertificate

    @property
    def cone_left(self) -> bool:
        """True when the midpoint fails the order (the demo's claim)."""
        return not self.order_mu_midpoint.holds

    def to_json_dict(self) -> dict:
        return {
            "mu": self.mu.to_json_dict(),
            "nu": self.nu.to_json_dict(),
            "mu_below_nu": bool(self.order_mu_nu.holds),
            "coupling_cost": float(self.coupling_cost),
            "midpoint": self.midpoint.to_json_dict(),
            "hull_containment": {str(k): bool(v)
                                 for k, v in self.hull_containment.items()},
            "order_holds": bool(self.order_mu_midpoint.holds),
            "separation_gap": float(self.order_mu_midpoint.separation_gap),
        }


def run_geodesic_demo(interpolation: float = 0.5,
                      solver: SimplexSolver | None = None) -> GeodesicDemo:
    solver = solver or SimplexSolver()
    mu = make_measure(MU_POINTS, MU_WEIGHTS)
    nu = make_measure(NU_POINTS, NU_WEIGHTS)
    order_mu_nu = check_convex_order(mu, nu, solver=solver)
    cost, coupling = w2_squared(mu, nu, solver=solver)

    s = interpolation
    pts, wts = [], []
    for i in range(mu.n):
        for j in range(nu.n):
            w = coupling.mass[i, j]
            if w > 1e-12:
                pts.append((1 - s) * mu.points[i] + s * nu.points[j])
                wts.append(w)
    midpoint = make_measure(pts, wts)
    hull = {tuple(p): convex_hull_contains(midpoint.points, p, tol=1e-9)
            for p in mu.points}
    order_mid = check_convex_order(mu, midpoint, solver=solver)
    return GeodesicDemo(mu=mu, nu=nu, order_mu_nu=order_mu_nu,
                        coupling_cost=cost, coupling=coupling,
                        midpoint=midpoint, hull_containment=hull,
                        order_mu_midpoint=order_mid)
