"""World construction: lanes, traffic specs, typical and random scenarios.

Scenarios are fully declarative: random traffic draws (including the whole
piecewise-constant acceleration schedule) happen at build time, so a
scenario alone determines its run bit for bit and survives a file round
trip unchanged.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import engine
from .barriers import ControllerGains
from .controller import LaneLayout
from .dynamics import InputLimits, VehicleGeometry, VehicleState

URBAN, HIGHWAY = "urban", "highway"

# environment presets: lane width, ego start/desired/limit speed, first
# vehicle start band, other vehicles' start band, initial speed band,
# acceleration band, speed bounds
ENV_PRESETS = {
    URBAN: dict(width=3.0, ego_v=13.0, v_l=16.67, x1=(25.0, 40.0),
                xk=(-50.0, 50.0), v0=(11.0, 15.0), accel=(-2.0, 2.0),
                bounds=(10.0, 16.67)),
    HIGHWAY: dict(width=3.6, ego_v=29.0, v_l=33.33, x1=(50.0, 65.0),
                  xk=(-85.0, 85.0), v0=(26.0, 32.0), accel=(-3.0, 3.0),
                  bounds=(23.0, 33.33)),
}

CONSTANT_SPEED = "constant_speed"
RANDOM_ACCEL = "random_accel"
SCRIPTED_LANE_CHANGE = "scripted_lane_change"

_BEH_CODES = {CONSTANT_SPEED: engine.BEH_CONST, RANDOM_ACCEL: engine.BEH_RANDOM,
              SCRIPTED_LANE_CHANGE: engine.BEH_SCRIPTED}


@dataclass
class SurroundingSpec:
    id: int
    x: float
    y: float
    v: float
    behavior: str = CONSTANT_SPEED
    vmin: float = 0.0
    vmax: float = 1e9
    resample_period: float = 1.0
    accel_schedule: np.ndarray = field(
        default_factory=lambda: np.zeros(0))  # one draw per period
    t_start: float = 0.0  # scripted change start time
    change_duration: float = 4.0  # s
    y_target: float = 0.0  # scripted destination center line
    clearance_factor: float = 1.5  # headway gate for strict-mode merging

    def __post_init__(self):
        self.accel_schedule = np.asarray(self.accel_schedule, dtype=float)
        if self.behavior not in _BEH_CODES:
            raise ValueError(f"unknown behavior {self.behavior!r}")
        if self.v < 0.0:
            raise ValueError("speed must be nonnegative")


@dataclass
class Scenario:
    name: str
    lanes: LaneLayout
    ego_init: VehicleState
    ego_lane: int
    target_lane: int | None
    gains: ControllerGains
    limits: InputLimits
    geometry: VehicleGeometry
    surrounding: list[SurroundingSpec]
    command_schedule: list[tuple[float, int]]
    duration: float = 20.0
    dt: float = 0.01
    seed: int = 0
    strict_traffic: bool = False
    success_hold_s: float = 0.0

    def __post_init__(self):
        if self.dt <= 0.0 or self.duration <= 0.0:
            raise ValueError("dt and duration must be positive")
        if not (0 <= self.ego_lane < self.lanes.count):
            raise ValueError("ego lane outside the layout")
        for t, c in self.command_schedule:
            if c not in (-1, 0, 1):
                raise ValueError(f"invalid command {c} in schedule")
        self._check_initial_placement()

    def _check_initial_placement(self):
        geo = self.geometry
        for spec in self.surrounding:
            if engine.rect_overlap(self.ego_init.x, self.ego_init.y,
                                   self.ego_init.psi, spec.x, spec.y,
                                   geo.l_fc, geo.l_rc, geo.w_lc, geo.w_rc):
                raise ValueError(f"vehicle {spec.id} overlaps the ego at t=0")
        for i, a in enumerate(self.surrounding):
            for bb in self.surrounding[i + 1:]:
                if (abs(a.x - bb.x) <= geo.length
                        and abs(a.y - bb.y) <= geo.width):
                    raise ValueError(
                        f"vehicles {a.id} and {bb.id} overlap at t=0")

    def command_at(self, t: float) -> int:
        c = 0
        for ts, cmd in self.command_schedule:
            if ts <= t + 1e-12:
                c = cmd
        return c

    def command_steps(self) -> np.ndarray:
        """Command per control step, resolved once for the whole run."""
        n = int(round(self.duration / self.dt))
        out = np.zeros(n, dtype=np.int64)
        for k in range(n):
            out[k] = self.command_at(k * self.dt)
        return out

    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def traffic_arrays(scn: Scenario):
    """Pack the surrounding specs into the kernel layout
    (vehicle rows, behavior ints, behavior floats, accel schedules)."""
    n = len(scn.surrounding)
    veh = np.zeros((n, engine.NVCOLS))
    bi = np.zeros((n, engine.BI_LEN), dtype=np.int64)
    bf = np.zeros((n, engine.BF_LEN))
    n_slots = max(1, int(np.ceil(scn.duration / 1.0)))
    sched = np.zeros((n, n_slots))
    for i, s in enumerate(scn.surrounding):
        veh[i, engine.V_X] = s.x
        veh[i, engine.V_Y] = s.y
        veh[i, engine.V_V] = s.v
        veh[i, engine.V_LANE] = scn.lanes.lane_of(s.y)
        veh[i, engine.V_ID] = s.id
        bi[i, engine.BI_TYPE] = _BEH_CODES[s.behavior]
        bf[i, engine.BF_VMIN] = s.vmin
        bf[i, engine.BF_VMAX] = s.vmax
        bf[i, engine.BF_PERIOD] = s.resample_period
        bf[i, engine.BF_TSTART] = s.t_start
        bf[i, engine.BF_DURATION] = s.change_duration
        bf[i, engine.BF_YFROM] = s.y
        bf[i, engine.BF_YTO] = s.y_target
        bf[i, engine.BF_CLEARANCE] = s.clearance_factor
        bf[i, engine.BF_T0] = -1.0
        if s.behavior == RANDOM_ACCEL:
            kmax = min(s.accel_schedule.size, n_slots)
            sched[i, :kmax] = s.accel_schedule[:kmax]
            if kmax and kmax < n_slots:  # hold the final draw
                sched[i, kmax:] = s.accel_schedule[kmax - 1]
    return veh, bi, bf, sched


def build_typical(n: int) -> Scenario:
    """The three pre-designed studies: a slow leader ahead, a faster vehicle
    approaching from behind in the target lane, and a third vehicle scripted
    to merge into the same target lane."""
    if n not in (1, 2, 3):
        raise ValueError("typical scenario index must be 1, 2 or 3")
    lanes = LaneLayout(width=3.5, centers=np.array([1.75, 5.25, 8.75]))
    gains = ControllerGains(v_d=27.5, v_l=33.33)
    if n == 1:
        surrounding = [SurroundingSpec(id=1, x=55.0, y=1.75, v=22.0)]
    elif n == 2:
        surrounding = [SurroundingSpec(id=1, x=-15.0, y=5.25, v=19.0)]
    else:
        surrounding = [SurroundingSpec(
            id=1, x=3.0, y=8.75, v=33.0, behavior=SCRIPTED_LANE_CHANGE,
            t_start=0.0, change_duration=4.0, y_target=5.25,
            clearance_factor=1.0 + gains.epsilon)]
    return Scenario(
        name=f"typical-{n}",
        lanes=lanes,
        ego_init=VehicleState(0.0, 1.75, 0.0, 27.5),
        ego_lane=0,
        target_lane=1,
        gains=gains,
        limits=InputLimits(),
        geometry=VehicleGeometry(),
        surrounding=surrounding,
        command_schedule=[(0.0, 1)],
        duration=20.0,
        dt=0.01,
        seed=0,
        success_hold_s=3.0,
    )


def build_random(env: str, seed: int, duration: float = 60.0,
                 strict: bool = False, dt: float = 0.01) -> Scenario:
    """Randomized six-vehicle traffic in an urban or highway setting.

    Draw order is fixed (per-vehicle position then speed, merge start time,
    then the acceleration schedules) so a seed pins the scenario exactly.
    Initial placements that overlap are redrawn.
    """
    if env not in ENV_PRESETS:
        raise ValueError(f"environment must be one of {sorted(ENV_PRESETS)}")
    cfg = ENV_PRESETS[env]
    width = cfg["width"]
    centers = np.array([0.5 * width, 1.5 * width, 2.5 * width])
    lanes = LaneLayout(width=width, centers=centers)
    geo = VehicleGeometry()
    gains = ControllerGains(v_d=cfg["ego_v"], v_l=cfg["v_l"])
    rng = np.random.default_rng(seed)
    n_slots = max(1, int(np.ceil(duration / 1.0)))

    def draw_clear_x(lo, hi, placed_x, tries=1000):
        for _ in range(tries):
            x = rng.uniform(lo, hi)
            if all(abs(x - px) > geo.length + engine.GAP_MIN
                   for px in placed_x):
                return x
        raise RuntimeError("could not place a vehicle without overlap")

    specs = []
    lane_occupancy = {0: [0.0], 1: [], 2: []}  # ego sits at x=0 in lane 0
    # vehicle 1 shares the ego's lane
    x1 = draw_clear_x(*cfg["x1"], lane_occupancy[0])
    v1 = rng.uniform(*cfg["v0"])
    lane_occupancy[0].append(x1)
    specs.append(SurroundingSpec(
        id=1, x=x1, y=centers[0], v=v1, behavior=RANDOM_ACCEL,
        vmin=cfg["bounds"][0], vmax=cfg["bounds"][1]))
    # vehicles 2-5 populate the target lane
    for vid in range(2, 6):
        xk = draw_clear_x(*cfg["xk"], lane_occupancy[1])
        vk = rng.uniform(*cfg["v0"])
        lane_occupancy[1].append(xk)
        specs.append(SurroundingSpec(
            id=vid, x=xk, y=centers[1], v=vk, behavior=RANDOM_ACCEL,
            vmin=cfg["bounds"][0], vmax=cfg["bounds"][1]))
    # vehicle 6 merges into the target lane from its far side
    x6 = draw_clear_x(*cfg["xk"], lane_occupancy[2])
    v6 = rng.uniform(*cfg["v0"])
    t6 = rng.uniform(0.0, 20.0)
    specs.append(SurroundingSpec(
        id=6, x=x6, y=centers[2], v=v6, behavior=SCRIPTED_LANE_CHANGE,
        vmin=cfg["bounds"][0], vmax=cfg["bounds"][1], t_start=t6,
        change_duration=4.0, y_target=centers[1],
        clearance_factor=1.0 + gains.epsilon))
    for spec in specs[:5]:
        spec.accel_schedule = rng.uniform(*cfg["accel"], size=n_slots)
    return Scenario(
        name=f"{env}-{seed}",
        lanes=lanes,
        ego_init=VehicleState(0.0, float(centers[0]), 0.0, cfg["ego_v"]),
        ego_lane=0,
        target_lane=1,
        gains=gains,
        limits=InputLimits(),
        geometry=geo,
        surrounding=specs,
        command_schedule=[(0.0, 1)],
        duration=duration,
        dt=dt,
        seed=seed,
        strict_traffic=strict,
        success_hold_s=0.0,
    )


# --- scenario files ----------------------------------------------------------

SCHEMA_VERSION = 1


def scenario_to_dict(scn: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": scn.name,
        "lanes": {"width": scn.lanes.width,
                  "centers": scn.lanes.centers.tolist()},
        "ego": {"x": scn.ego_init.x, "y": scn.ego_init.y,
                "psi": scn.ego_init.psi, "v": scn.ego_init.v,
                "lane": scn.ego_lane, "target_lane": scn.target_lane},
        "gains": {**{k: v for k, v in asdict(scn.gains).items() if k != "H"},
                  "H": scn.gains.H.tolist()},
        "limits": asdict(scn.limits),
        "geometry": asdict(scn.geometry),
        "surrounding": [
            {**{k: v for k, v in asdict(s).items() if k != "accel_schedule"},
             "accel_schedule": s.accel_schedule.tolist()}
            for s in scn.surrounding
        ],
        "command_schedule": [[t, c] for t, c in scn.command_schedule],
        "duration": scn.duration,
        "dt": scn.dt,
        "seed": scn.seed,
        "strict_traffic": scn.strict_traffic,
        "success_hold_s": scn.success_hold_s,
    }


def scenario_from_dict(data: dict) -> Scenario:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError("unsupported scenario schema version")
    ego = data["ego"]
    return Scenario(
        name=data["name"],
        lanes=LaneLayout(width=data["lanes"]["width"],
                         centers=np.array(data["lanes"]["centers"])),
        ego_init=VehicleState(ego["x"], ego["y"], ego["psi"], ego["v"]),
        ego_lane=int(ego["lane"]),
        target_lane=ego["target_lane"],
        gains=ControllerGains(**{**data["gains"],
                                 "H": np.array(data["gains"]["H"])}),
        limits=InputLimits(**data["limits"]),
        geometry=VehicleGeometry(**data["geometry"]),
        surrounding=[
            SurroundingSpec(**{**s, "accel_schedule":
                               np.array(s["accel_schedule"])})
            for s in data["surrounding"]
        ],
        command_schedule=[(float(t), int(c))
                          for t, c in data["command_schedule"]],
        duration=data["duration"],
        dt=data["dt"],
        seed=data["seed"],
        strict_traffic=data["strict_traffic"],
        success_hold_s=data["success_hold_s"],
    )


def save_scenario(scn: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scn), indent=1))


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def apply_gain_overrides(scn: Scenario, overrides: dict) -> Scenario:
    """Rebuild the scenario with some controller gains replaced (used by the
    CLI --config flag)."""
    fields = {k: v for k, v in asdict(scn.gains).items() if k != "H"}
    fields["H"] = scn.gains.H
    for key, value in overrides.items():
        if key not in fields:
            raise ValueError(f"unknown gain {key!r}")
        fields[key] = np.array(value) if key == "H" else float(value)
    return replace(scn, gains=ControllerGains(**fields))
