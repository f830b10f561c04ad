"""Tendon mechanism and finger kinematics of the five-finger hand.

Three motors drive five fingers: thumb and index each have a dedicated
motor, while middle, ring and little share one motor through a movable
pulley block that equalizes tendon tension across the three of them.
Displacements are expressed in encoder step-equivalents throughout
(47104 steps per pulley revolution); millimetres are derived via the
pulley radius and only used for reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FINGERS = ("thumb", "index", "middle", "ring", "little")
COUPLED_FINGERS = ("middle", "ring", "little")

MOTOR_THUMB = 0
MOTOR_INDEX = 1
MOTOR_COUPLED = 2

# Full closing travel of one finger, and of the coupled motor (sum of three).
FULL_CLOSE_STEPS = 60_000
COUPLED_FULL_CLOSE_STEPS = 180_000

STEPS_PER_REV = 47_104  # 512 encoder lines x 4 quadrature edges x 23:1 gear


class HandModelError(ValueError):
    """Invalid input to a mechanism operation."""


@dataclass
class FingerState:
    """Joint, tendon and tension state of one finger."""

    mcp_angle: float = 0.0  # rad
    pip_angle: float = 0.0  # rad
    tendon_displacement: float = 0.0  # step-equivalents
    closing_angle_beta: float = 0.0  # rad, mcp + pip aggregate flexion
    tendon_tension: float = 0.0  # N


@dataclass
class TendonNetwork:
    """Motor-to-finger tendon routing with optional roller friction."""

    routing: dict[int, tuple[str, ...]] = field(
        default_factory=lambda: {
            MOTOR_THUMB: ("thumb",),
            MOTOR_INDEX: ("index",),
            MOTOR_COUPLED: COUPLED_FINGERS,
        }
    )
    pulley_radius_mm: dict[int, float] = field(
        default_factory=lambda: {MOTOR_THUMB: 5.0, MOTOR_INDEX: 5.0, MOTOR_COUPLED: 5.0}
    )
    friction_enabled: bool = False
    roller_efficiency: float = 1.0  # eta in (0, 1], per roller pass

    def __post_init__(self) -> None:
        driven = [f for fingers in self.routing.values() for f in fingers]
        if sorted(driven) != sorted(FINGERS):
            raise HandModelError("every finger must be driven by exactly one motor")
        sizes = sorted(len(v) for v in self.routing.values())
        if sizes != [1, 1, 3]:
            raise HandModelError("expected two direct drives and one coupled triple")
        if not 0.0 < self.roller_efficiency <= 1.0:
            raise HandModelError("roller efficiency must be in (0, 1]")


@dataclass
class FingerGeometry:
    """Joint limits, tendon-to-angle curve split, and link lengths."""

    mcp_max: float = math.pi / 2
    pip_max: float = math.pi / 2
    mcp_phase_fraction: float = 0.6  # MCP flexes over the first 60% of travel
    proximal_len_mm: float = 55.0
    distal_len_mm: float = 45.0  # proximal + distal = 100 mm finger length

    def __post_init__(self) -> None:
        if not 0.0 < self.mcp_phase_fraction < 1.0:
            raise HandModelError("mcp phase fraction must be in (0, 1)")


# Finger base frames on the palm: position (mm) and flexion axis placement.
# Fingers extend along +z when open and flex about the local x axis; the
# thumb base is offset and pre-rotated toward the palm center.
_BASE_POSITIONS = {
    "thumb": np.array([-52.0, -8.0, 5.0]),
    "index": np.array([-27.0, 0.0, 0.0]),
    "middle": np.array([-9.0, 0.0, 5.0]),
    "ring": np.array([9.0, 0.0, 0.0]),
    "little": np.array([27.0, 0.0, -8.0]),
}
_THUMB_BASE_ROT = None  # built lazily below


def _rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _base_rotation(finger: str) -> np.ndarray:
    global _THUMB_BASE_ROT
    if finger == "thumb":
        if _THUMB_BASE_ROT is None:
            # opposes the fingers: flexion carries the tip across the palm
            _THUMB_BASE_ROT = _rot_z(math.radians(50.0)) @ _rot_x(math.radians(20.0))
        return _THUMB_BASE_ROT
    return np.eye(3)


@dataclass
class HandState:
    """Per-finger states plus the movable pulley block position.

    ``motors`` holds the three motion-control MotorState values when the
    state comes from a live simulation; pure kinematic snapshots leave it
    None.
    """

    fingers: dict[str, FingerState]
    pulley_block_offset_mm: float = 0.0
    motors: list | None = None


def distribute_tension(
    motor_tension: float, motor_id: int, network: TendonNetwork | None = None
) -> dict[str, float]:
    """Distribute motor tendon tension to the driven fingers.

    Frictionless contract: the movable block is in equilibrium (2T against
    2T), so every coupled finger sees the full motor tension; direct drives
    pass it through unchanged.  With friction enabled, tension loses a
    factor eta per roller pass: the terminal finger (little) sits behind one
    roller, the paired fingers (middle, ring) behind two.
    """
    if not math.isfinite(motor_tension) or motor_tension < 0.0:
        raise HandModelError(f"tension must be finite and >= 0, got {motor_tension}")
    network = network or TendonNetwork()
    fingers = network.routing[motor_id]
    if len(fingers) == 1:
        return {fingers[0]: motor_tension}
    if not network.friction_enabled:
        return {f: motor_tension for f in fingers}
    eta = network.roller_efficiency
    out = {}
    for f in fingers:
        out[f] = motor_tension * (eta if f == "little" else eta * eta)
    return out


def coupled_displacement(finger_displacements) -> float:
    """Motor displacement for the coupled triple: the sum of finger travels.

    Equal tensions make virtual work T*x_m = sum(T*x_i), hence
    x_m = x_middle + x_ring + x_little exactly.
    """
    disps = tuple(finger_displacements)
    if len(disps) != 3:
        raise HandModelError("coupled displacement takes exactly 3 finger travels")
    for d in disps:
        if not 0.0 <= d <= FULL_CLOSE_STEPS:
            raise HandModelError(f"finger displacement {d} outside [0, {FULL_CLOSE_STEPS}]")
    return disps[0] + disps[1] + disps[2]


def split_coupled_displacement(
    motor_steps: float, blocked: tuple[bool, bool, bool] = (False, False, False)
) -> tuple[float, float, float]:
    """Invert the coupled constraint: share motor travel over free fingers.

    Free fingers take equal shares; a finger held at its limit (or flagged
    blocked at its current zero travel) passes its share on.  The sum of the
    returned travels always equals the (clamped) motor displacement.
    """
    max_total = sum(0.0 if b else FULL_CLOSE_STEPS for b in blocked)
    motor_steps = min(max(motor_steps, 0.0), max_total)
    disp = [0.0, 0.0, 0.0]
    remaining = motor_steps
    free = [i for i in range(3) if not blocked[i]]
    while remaining > 1e-9 and free:
        share = remaining / len(free)
        still_free = []
        for i in free:
            take = min(share, FULL_CLOSE_STEPS - disp[i])
            disp[i] += take
            remaining -= take
            if disp[i] < FULL_CLOSE_STEPS:
                still_free.append(i)
        if still_free == free:
            break
        free = still_free
    return tuple(disp)


def finger_kinematics(
    tendon_displacement: float, geometry: FingerGeometry | None = None
) -> tuple[float, float]:
    """Map tendon travel (step-equivalents) to (mcp, pip) joint angles.

    Piecewise-linear two-phase curve: the MCP joint flexes to its limit over
    the first ``mcp_phase_fraction`` of the travel, the PIP joint over the
    remainder.  Monotone by construction; (0, 0) at zero travel and the
    configured maxima at full close.
    """
    geo = geometry or FingerGeometry()
    if not 0.0 <= tendon_displacement <= FULL_CLOSE_STEPS:
        raise HandModelError(
            f"displacement {tendon_displacement} outside [0, {FULL_CLOSE_STEPS}]"
        )
    split = geo.mcp_phase_fraction * FULL_CLOSE_STEPS
    if tendon_displacement <= split:
        mcp = geo.mcp_max * (tendon_displacement / split)
        pip = 0.0
    else:
        mcp = geo.mcp_max
        pip = geo.pip_max * (tendon_displacement - split) / (FULL_CLOSE_STEPS - split)
    return mcp, pip


def finger_state_from_displacement(
    displacement: float, geometry: FingerGeometry | None = None, tension: float = 0.0
) -> FingerState:
    mcp, pip = finger_kinematics(displacement, geometry)
    return FingerState(
        mcp_angle=mcp,
        pip_angle=pip,
        tendon_displacement=displacement,
        closing_angle_beta=mcp + pip,
        tendon_tension=tension,
    )


def fingertip_camera_pose(
    finger: FingerState, finger_id: str, geometry: FingerGeometry | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Forward kinematics of the two-link finger chain in the palm frame.

    Returns (position_mm, rotation) of the fingertip camera; the camera
    optical axis is the third column of the rotation and looks along the
    distal segment.
    """
    if finger_id not in FINGERS:
        raise HandModelError(f"unknown finger {finger_id!r}")
    geo = geometry or FingerGeometry()
    base_r = _base_rotation(finger_id)
    base_p = _BASE_POSITIONS[finger_id]

    r_mcp = base_r @ _rot_x(finger.mcp_angle)
    p_pip = base_p + r_mcp @ np.array([0.0, 0.0, geo.proximal_len_mm])
    r_pip = r_mcp @ _rot_x(finger.pip_angle)
    p_tip = p_pip + r_pip @ np.array([0.0, 0.0, geo.distal_len_mm])
    return p_tip, r_pip


def steps_to_mm(steps: float, pulley_radius_mm: float = 5.0) -> float:
    """Tendon arc length for a pulley rotation given in encoder steps."""
    return steps / STEPS_PER_REV * 2.0 * math.pi * pulley_radius_mm


def hand_state_from_motor_counts(
    counts: tuple[float, float, float],
    network: TendonNetwork | None = None,
    geometry: FingerGeometry | None = None,
    motors: list | None = None,
) -> HandState:
    """Build the full HandState implied by the three motor encoder counts.

    The coupled motor's travel splits equally over its free fingers; the
    movable block offset is the mean travel of the paired fingers converted
    to millimetres.
    """
    network = network or TendonNetwork()
    thumb = min(max(counts[MOTOR_THUMB], 0.0), FULL_CLOSE_STEPS)
    index = min(max(counts[MOTOR_INDEX], 0.0), FULL_CLOSE_STEPS)
    mid, ring, little = split_coupled_displacement(counts[MOTOR_COUPLED])
    fingers = {
        "thumb": finger_state_from_displacement(thumb, geometry),
        "index": finger_state_from_displacement(index, geometry),
        "middle": finger_state_from_displacement(mid, geometry),
        "ring": finger_state_from_displacement(ring, geometry),
        "little": finger_state_from_displacement(little, geometry),
    }
    block = steps_to_mm((mid + ring) / 2.0, network.pulley_radius_mm[MOTOR_COUPLED])
    return HandState(fingers=fingers, pulley_block_offset_mm=block, motors=motors)


def closing_fractions(state: HandState) -> dict[str, float]:
    """Per-finger closing fraction in [0, 1] from tendon displacement."""
    return {
        name: fs.tendon_displacement / FULL_CLOSE_STEPS
        for name, fs in state.fingers.items()
    }
