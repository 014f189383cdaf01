"""Rectangle overlap tests between the ego body and surrounding vehicles.

The ego rectangle is aligned with its heading; surrounding vehicles have no
heading state and stay axis-aligned. Overlap uses the separating-axis test
over the four candidate axes.
"""

from dataclasses import dataclass

import numpy as np

from . import engine
from .dynamics import VehicleGeometry


@dataclass(frozen=True)
class CollisionEvent:
    step: int
    t: float
    vehicle_id: int


def rectangles_overlap(ego_x: float, ego_y: float, ego_psi: float,
                       other_x: float, other_y: float,
                       geo: VehicleGeometry) -> bool:
    """True when the two bodies overlap (touching counts as overlap)."""
    return bool(engine.rect_overlap(ego_x, ego_y, ego_psi, other_x, other_y,
                                    geo.l_fc, geo.l_rc, geo.w_lc, geo.w_rc))


def first_hit_index(ego_x: float, ego_y: float, ego_psi: float,
                    vehicles: np.ndarray, geo: VehicleGeometry) -> int:
    """Index of the first overlapping vehicle row, -1 when clear."""
    return int(engine.first_hit(ego_x, ego_y, ego_psi, vehicles,
                                geo.l_fc, geo.l_rc, geo.w_lc, geo.w_rc))


def collision_check(trace) -> CollisionEvent | None:
    """Scan a recorded run for the earliest ego/vehicle body overlap."""
    geo = trace.scenario.geometry
    for k in range(trace.steps):
        veh = trace.vehicle_states[k]
        idx = first_hit_index(trace.x[k], trace.y[k], trace.psi[k], veh, geo)
        if idx >= 0:
            return CollisionEvent(step=k, t=float(trace.t[k]),
                                  vehicle_id=int(veh[idx, engine.V_ID]))
    return None
