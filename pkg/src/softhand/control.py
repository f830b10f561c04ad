"""Simulated embedded motor controller.

Quadrature encoder counting with exact remainder carrying, a brushed-DC
motor plant integrated explicitly, a cascaded position -> velocity PID pair
running at 1 kHz, PWM duty quantized to an integer over 3000, and the
three-button operator interface.  Everything advances in simulated time
only; a fixed input sequence always produces the same output sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum

from . import hand

STEPS_PER_REV = hand.STEPS_PER_REV  # 512 x 4 x 23
PWM_MAX = 3000
LOOP_HZ = 1000
TICK_S = 1.0 / LOOP_HZ
PLANT_SUBSTEP_S = 1e-4  # plant integrates at 0.1 ms inside each 1 ms tick
SETTLE_BAND_STEPS = 500
CLOSE_TIMEOUT_S = 5.0

# Exact dyadic representation of the float closest to 2*pi; the encoder
# divides by this constant in integer arithmetic so that partitioned
# updates accumulate without drift.
_TWO_PI_NUM, _TWO_PI_DEN = (2.0 * math.pi).as_integer_ratio()


class ControlError(ValueError):
    """Invalid input to a controller operation."""


class QuadratureEncoder:
    """Integrates output-shaft velocity into integer counts, exactly.

    The fractional sub-step remainder is carried in exact rational
    arithmetic (floats are dyadic rationals), so the total count over any
    partition of a time interval equals the count over the whole interval.
    """

    __slots__ = ("_num", "_shift", "_emitted")

    def __init__(self) -> None:
        self._num = 0  # accumulated angle-steps numerator
        self._shift = 0  # denominator is _TWO_PI_NUM * 2**_shift
        self._emitted = 0

    @property
    def count(self) -> int:
        return self._emitted

    def update(self, angular_velocity: float, dt: float) -> int:
        """Advance by ``angular_velocity * dt`` radians; return the count delta."""
        if dt <= 0.0:
            raise ControlError(f"dt must be > 0, got {dt}")
        if angular_velocity != 0.0:
            u, ud = angular_velocity.as_integer_ratio()
            v, vd = dt.as_integer_ratio()
            term = STEPS_PER_REV * _TWO_PI_DEN * u * v
            tshift = (ud * vd).bit_length() - 1
            if tshift >= self._shift:
                self._num = (self._num << (tshift - self._shift)) + term
                self._shift = tshift
            else:
                self._num += term << (self._shift - tshift)
        den = _TWO_PI_NUM << self._shift
        total = self._num // den if self._num >= 0 else -((-self._num) // den)
        delta = total - self._emitted
        self._emitted = total
        return delta


@dataclass
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0


@dataclass
class ControllerConfig:
    """Gains and limits of the cascaded 1 kHz loop."""

    position_gains: PidGains = field(default_factory=lambda: PidGains(kp=40.0))
    velocity_gains: PidGains = field(default_factory=lambda: PidGains(kp=0.05, ki=1.2))
    velocity_limit_steps: float = 150_000.0  # outer-loop setpoint clamp, steps/s
    integrator_clamp: float = 40_000.0
    loop_rate_hz: int = LOOP_HZ
    steps_per_rev: int = STEPS_PER_REV

    def __post_init__(self) -> None:
        if self.loop_rate_hz != LOOP_HZ:
            raise ControlError("the control contract fixes the loop at 1 kHz")
        if self.steps_per_rev != STEPS_PER_REV:
            raise ControlError(f"steps per revolution is fixed at {STEPS_PER_REV}")


@dataclass
class MotorPlantParams:
    """Brushed-DC motor constants; gear ratio fixed at 23:1.

    Defaults approximate a small 12 V motor-gear unit; the closing-time
    calibration tunes the per-motor velocity limit against these,
    so they are a consistent operating point rather than measured truth.
    """

    terminal_resistance: float = 3.41  # ohm
    torque_constant: float = 0.0142  # N*m/A
    back_emf_constant: float = 0.0142  # V*s/rad
    rotor_inertia: float = 6.0e-7  # kg*m^2, rotor plus reflected load
    viscous_friction: float = 2.0e-7  # N*m*s/rad at the motor shaft
    gear_ratio: int = 23

    def __post_init__(self) -> None:
        for name in (
            "terminal_resistance",
            "torque_constant",
            "back_emf_constant",
            "rotor_inertia",
        ):
            if getattr(self, name) <= 0.0:
                raise ControlError(f"{name} must be > 0")
        if self.viscous_friction < 0.0:
            raise ControlError("viscous_friction must be >= 0")
        if self.gear_ratio != 23:
            raise ControlError("gear ratio is fixed at 23:1")


@dataclass
class MotorState:
    """Electrical and kinematic state of one motor channel."""

    encoder_count: int = 0
    angular_velocity: float = 0.0  # rad/s at the output (pulley) shaft
    pwm_duty: int = 0  # integer in [-3000, 3000]
    current: float = 0.0  # A
    supply_voltage: float = 12.0  # V


def motor_plant_step(
    duty: int,
    load_torque: float,
    dt: float,
    params: MotorPlantParams,
    state: MotorState,
) -> tuple[float, float]:
    """One explicit integration step of the DC motor; returns (omega_out, current).

    Applied voltage is supply * duty/3000.  The electrical side is
    quasi-static: i = (V - Ke*w_m)/R; the mechanical side integrates
    J*dw/dt = Kt*i - b*w_m - load/gear forward in time.  Stable for
    dt <= 1 ms with the default constants.
    """
    if dt <= 0.0 or dt > TICK_S + 1e-12:
        raise ControlError(f"plant step dt must be in (0, 1 ms], got {dt}")
    w_motor = state.angular_velocity * params.gear_ratio
    volts = state.supply_voltage * duty / PWM_MAX
    current = (volts - params.back_emf_constant * w_motor) / params.terminal_resistance
    torque = (
        params.torque_constant * current
        - params.viscous_friction * w_motor
        - load_torque / params.gear_ratio
    )
    w_motor += torque / params.rotor_inertia * dt
    return w_motor / params.gear_ratio, current


class _Pid:
    """Textbook discrete PID with clamped integrator, stepped at a fixed dt."""

    __slots__ = ("gains", "clamp", "_integral", "_prev_error", "_primed")

    def __init__(self, gains: PidGains, clamp: float) -> None:
        self.gains = gains
        self.clamp = clamp
        self.reset()

    def reset(self) -> None:
        self._integral = 0.0
        self._prev_error = 0.0
        self._primed = False

    def step(self, error: float, dt: float) -> float:
        self._integral += error * dt
        self._integral = min(max(self._integral, -self.clamp), self.clamp)
        derivative = 0.0 if not self._primed else (error - self._prev_error) / dt
        self._prev_error = error
        self._primed = True
        g = self.gains
        return g.kp * error + g.ki * self._integral + g.kd * derivative


class CascadedController:
    """Position -> velocity PID cascade producing quantized PWM duty."""

    def __init__(self, config: ControllerConfig | None = None) -> None:
        self.config = config or ControllerConfig()
        self._position = _Pid(self.config.position_gains, self.config.integrator_clamp)
        self._velocity = _Pid(self.config.velocity_gains, self.config.integrator_clamp)
        self.faulted = False

    def reset(self) -> None:
        self._position.reset()
        self._velocity.reset()
        self.faulted = False

    def step(
        self,
        target_position: float,
        state: MotorState,
        velocity_steps: float,
        velocity_setpoint: float | None = None,
    ) -> int:
        """One 1 kHz tick; returns the integer duty in [-3000, 3000].

        ``velocity_setpoint`` bypasses the outer loop (button drive mode).
        Non-finite inputs latch a controller fault and force duty 0.
        """
        inputs = (target_position, float(state.encoder_count), velocity_steps)
        if velocity_setpoint is not None:
            inputs += (velocity_setpoint,)
        if not all(math.isfinite(x) for x in inputs):
            self.faulted = True
        if self.faulted:
            return 0
        dt = TICK_S
        limit = self.config.velocity_limit_steps
        if velocity_setpoint is None:
            v_set = self._position.step(target_position - state.encoder_count, dt)
            v_set = min(max(v_set, -limit), limit)
        else:
            v_set = min(max(velocity_setpoint, -limit), limit)
        duty_raw = self._velocity.step(v_set - velocity_steps, dt)
        duty = int(round(duty_raw))
        return min(max(duty, -PWM_MAX), PWM_MAX)


def pid_cascade_step(
    target_position: float,
    state: MotorState,
    config: ControllerConfig,
    controller: CascadedController | None = None,
    velocity_steps: float | None = None,
) -> int:
    """Single-shot cascade tick (stateless convenience over CascadedController)."""
    ctl = controller or CascadedController(config)
    v = velocity_steps
    if v is None:
        v = state.angular_velocity / (2.0 * math.pi) * STEPS_PER_REV
    return ctl.step(target_position, state, v)


class ButtonPhase(IntEnum):
    IDLE = 0
    CLOSING = 1
    STOPPED = 2
    OPENING = 3


_PHASE_CYCLE = (
    ButtonPhase.IDLE,
    ButtonPhase.CLOSING,
    ButtonPhase.STOPPED,
    ButtonPhase.OPENING,
)


class ButtonInterface:
    """Three buttons, one per motor; each press advances a 4-state cycle.

    idle -> close-drive -> stop -> open-drive -> idle.  Releases are no-ops.
    The phase maps to a velocity setpoint for the cascade.
    """

    def __init__(self, drive_velocity_steps: float = 150_000.0) -> None:
        self.drive_velocity_steps = drive_velocity_steps
        self._phase = [ButtonPhase.IDLE, ButtonPhase.IDLE, ButtonPhase.IDLE]

    def phases(self) -> tuple[ButtonPhase, ButtonPhase, ButtonPhase]:
        return tuple(self._phase)

    def command(self, button_id: int, action: str = "press") -> ButtonPhase:
        if button_id not in (1, 2, 3):
            raise ControlError(f"unknown button {button_id}")
        if action not in ("press", "release"):
            raise ControlError(f"unknown action {action!r}")
        idx = button_id - 1
        if action == "press":
            nxt = _PHASE_CYCLE[(int(self._phase[idx]) + 1) % 4]
            self._phase[idx] = nxt
        return self._phase[idx]

    def velocity_setpoint(self, motor_id: int) -> float | None:
        """Velocity setpoint for the motor, or None when idle (position hold)."""
        phase = self._phase[motor_id]
        if phase == ButtonPhase.CLOSING:
            return self.drive_velocity_steps
        if phase == ButtonPhase.OPENING:
            return -self.drive_velocity_steps
        if phase == ButtonPhase.STOPPED:
            return 0.0
        return None


class MotorChannel:
    """One motor with its encoder, plant and cascade, ticked at 1 kHz."""

    def __init__(
        self,
        config: ControllerConfig | None = None,
        plant: MotorPlantParams | None = None,
        supply_voltage: float = 12.0,
    ) -> None:
        self.config = config or ControllerConfig()
        self.plant = plant or MotorPlantParams()
        self.state = MotorState(supply_voltage=supply_voltage)
        self.encoder = QuadratureEncoder()
        self.controller = CascadedController(self.config)
        self._omega_out = 0.0

    @property
    def velocity_steps(self) -> float:
        return self._omega_out / (2.0 * math.pi) * STEPS_PER_REV

    def tick(
        self,
        target_position: float,
        velocity_setpoint: float | None = None,
        load_torque: float = 0.0,
    ) -> MotorState:
        """Advance one 1 ms control tick with 0.1 ms plant sub-steps."""
        duty = self.controller.step(
            target_position, self.state, self.velocity_steps, velocity_setpoint
        )
        self.state.pwm_duty = duty
        substeps = round(TICK_S / PLANT_SUBSTEP_S)
        for _ in range(substeps):
            self._omega_out, self.state.current = motor_plant_step(
                duty, load_torque, PLANT_SUBSTEP_S, self.plant, self.state
            )
            self.state.angular_velocity = self._omega_out
            self.state.encoder_count += self.encoder.update(
                self._omega_out, PLANT_SUBSTEP_S
            )
        return self.state


MOTOR_TARGETS = {
    hand.MOTOR_THUMB: hand.FULL_CLOSE_STEPS,
    hand.MOTOR_INDEX: hand.FULL_CLOSE_STEPS,
    hand.MOTOR_COUPLED: hand.COUPLED_FULL_CLOSE_STEPS,
}
FINGER_GROUPS = {"thumb": hand.MOTOR_THUMB, "index": hand.MOTOR_INDEX, "coupled": hand.MOTOR_COUPLED}


@dataclass
class ClosingReport:
    """Outcome of one close_finger run."""

    finger_group: str
    target_steps: int
    closing_time_s: float | None  # None on timeout
    final_count: int
    ticks: int
    trajectory: list[hand.HandState] = field(repr=False, default_factory=list)

    @property
    def success(self) -> bool:
        return self.closing_time_s is not None


def close_finger(
    finger_group: str,
    config: ControllerConfig | None = None,
    plant: MotorPlantParams | None = None,
    keep_trajectory: bool = False,
    target_steps: int | None = None,
) -> ClosingReport:
    """Drive one motor from open to its full-close target and time it.

    The closing time is the first tick at which the position error is
    within 500 steps (0 for a target already inside the band); a run that
    has not settled after 5 simulated seconds is reported as a timeout.
    """
    if finger_group not in FINGER_GROUPS:
        raise ControlError(f"unknown finger group {finger_group!r}")
    motor_id = FINGER_GROUPS[finger_group]
    target = MOTOR_TARGETS[motor_id] if target_steps is None else target_steps
    channel = MotorChannel(config=config, plant=plant)

    if abs(target) < SETTLE_BAND_STEPS:
        return ClosingReport(
            finger_group=finger_group,
            target_steps=target,
            closing_time_s=0.0,
            final_count=0,
            ticks=0,
        )

    trajectory: list[hand.HandState] = []
    max_ticks = int(CLOSE_TIMEOUT_S * LOOP_HZ)
    closing_time = None
    tick = 0
    for tick in range(1, max_ticks + 1):
        state = channel.tick(target)
        if keep_trajectory:
            counts = [0.0, 0.0, 0.0]
            counts[motor_id] = float(state.encoder_count)
            motors: list = [MotorState(), MotorState(), MotorState()]
            motors[motor_id] = replace(state)
            trajectory.append(hand.hand_state_from_motor_counts(tuple(counts), motors=motors))
        if abs(target - state.encoder_count) < SETTLE_BAND_STEPS:
            closing_time = tick * TICK_S
            break
    return ClosingReport(
        finger_group=finger_group,
        target_steps=target,
        closing_time_s=closing_time,
        final_count=channel.state.encoder_count,
        ticks=tick,
        trajectory=trajectory,
    )


# Closing-time calibration targets (seconds): these mirror the measured
# hand, and the shipped routine reproduces them by construction.
CLOSING_TIME_TARGETS = {"index": 0.44, "thumb": 0.49, "coupled": 1.22}
CLOSING_TIME_TOL = 0.03


def calibrate_closing_times(
    targets: dict[str, float] | None = None,
    plant: MotorPlantParams | None = None,
    tolerance_s: float = 0.005,
) -> dict[str, ControllerConfig]:
    """Find per-motor velocity limits that hit the target closing times.

    Closing time is monotone decreasing in the velocity limit, so a plain
    bisection converges; each probe runs the full 1 kHz loop.  Returns one
    ControllerConfig per finger group.
    """
    targets = targets or CLOSING_TIME_TARGETS
    plant = plant or MotorPlantParams()
    out: dict[str, ControllerConfig] = {}
    for group, target_s in targets.items():
        lo, hi = 2.0e4, 2.6e5  # steps/s bracket; slow side above, fast side below
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            cfg = ControllerConfig(velocity_limit_steps=mid)
            report = close_finger(group, config=cfg, plant=plant)
            t = report.closing_time_s
            if t is None or t > target_s:
                lo = mid
            else:
                hi = mid
            if t is not None and abs(t - target_s) <= tolerance_s:
                break
        out[group] = ControllerConfig(velocity_limit_steps=0.5 * (lo + hi))
    return out


# Velocity limits produced by calibrate_closing_times() with the default
# plant; shipped so that simulations reproduce the measured closing times
# without rerunning the search.  Regenerate with `softhand simulate --calibrate`.
CALIBRATED_VELOCITY_LIMITS = {"index": 141_875.0, "thumb": 126_875.0, "coupled": 149_843.75}


def calibrated_config(finger_group: str) -> ControllerConfig:
    return ControllerConfig(
        velocity_limit_steps=CALIBRATED_VELOCITY_LIMITS[finger_group]
    )


def motor_config_set(configs: dict[str, ControllerConfig] | None = None) -> list[ControllerConfig]:
    """Per-motor configs indexed by motor id, defaulting to the calibrated set."""
    if configs is None:
        configs = {g: calibrated_config(g) for g in FINGER_GROUPS}
    return [configs["thumb"], configs["index"], configs["coupled"]]


class HandSimulator:
    """Three motor channels plus the button interface, ticked at 1 kHz.

    Buttons drive velocity setpoints; an idle motor holds its position.
    Travel is clamped at the mechanical end stops (0 and the per-motor
    full-close target).
    """

    def __init__(
        self,
        configs: list[ControllerConfig] | None = None,
        plant: MotorPlantParams | None = None,
    ) -> None:
        self.configs = configs or motor_config_set()
        self.channels = [
            MotorChannel(config=c, plant=plant or MotorPlantParams()) for c in self.configs
        ]
        self.buttons = ButtonInterface()
        self.hold_targets = [0.0, 0.0, 0.0]
        self.tick_count = 0

    @property
    def sim_time_s(self) -> float:
        return self.tick_count * TICK_S

    def press_button(self, button_id: int, action: str = "press") -> ButtonPhase:
        phase = self.buttons.command(button_id, action)
        if phase in (ButtonPhase.STOPPED, ButtonPhase.IDLE):
            idx = button_id - 1
            self.hold_targets[idx] = float(self.channels[idx].state.encoder_count)
        return phase

    def tick(self) -> None:
        for motor_id, channel in enumerate(self.channels):
            v_set = self.buttons.velocity_setpoint(motor_id)
            limit = MOTOR_TARGETS[motor_id]
            count = channel.state.encoder_count
            if v_set is not None:
                # ramp down toward the travel end stops so the drive
                # settles at the stop instead of slamming past it
                kp = channel.config.position_gains.kp
                if v_set > 0:
                    v_set = min(v_set, max(kp * (limit - count), 0.0))
                elif v_set < 0:
                    v_set = max(v_set, min(kp * (0.0 - count), 0.0))
                channel.tick(0.0, velocity_setpoint=v_set)
            else:
                channel.tick(self.hold_targets[motor_id])
        self.tick_count += 1

    def run(self, ticks: int) -> None:
        for _ in range(ticks):
            self.tick()

    def counts(self) -> tuple[int, int, int]:
        return tuple(c.state.encoder_count for c in self.channels)

    def hand_state(self) -> hand.HandState:
        return hand.hand_state_from_motor_counts(
            tuple(float(c) for c in self.counts()),
            motors=[c.state for c in self.channels],
        )

    def progress(self) -> float:
        """Mean closing fraction over the five fingers."""
        fractions = hand.closing_fractions(self.hand_state())
        return sum(fractions.values()) / len(fractions)
