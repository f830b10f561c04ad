"""Live serve session: the 1 kHz hand simulation behind a WebSocket.

One ticker advances simulated time (optionally faster or slower than wall
time), publishing StatePackets at 50 Hz and FramePackets at a configurable
rate up to 20 Hz of simulated time.  Button commands from any client are
applied at tick boundaries.  Each published camera view passes through the
camera-link framing layer, so an injected fault surfaces exactly the way a
real link error would: as a sync loss that flags the tile corrupt.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass

import numpy as np

from . import control, framing, wire
from .grasp.scene import LiveScene
from .mux import BitErrorRate, inject_fault
from .segnet import dequantize, forward, load_weights, resource_ledger

log = logging.getLogger(__name__)

STATE_PERIOD_TICKS = 20  # 50 Hz at the 1 kHz tick


@dataclass
class ServeConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    object_class: str = "strawberry"
    seed: int = 0
    speed_factor: float = 1.0  # simulated seconds per wall second; 0 = flat out
    frame_hz: int = 10
    weights_path: str | None = None
    fault_period: int = 0  # corrupt one tile every N frame packets (0 = off)
    distortion: bool = True


class ServeSession:
    """Simulation state plus frame rendering for one serve run."""

    def __init__(self, config: ServeConfig) -> None:
        self.config = config
        self.sim = control.HandSimulator()
        self.scene = LiveScene(
            config.object_class, seed=config.seed, distortion=config.distortion
        )
        self.weights = None
        if config.weights_path:
            self.weights = dequantize(load_weights(config.weights_path))
        ledger = resource_ledger()
        self.total_macs = ledger.total_macs
        self.weight_bytes = ledger.weight_payload_bytes
        self.frame_period_ticks = max(int(round(1000 / config.frame_hz)), 50)
        self.frame_index = 0
        self._last_good: list[bytes] = [bytes(wire.IMAGE_BYTES) for _ in range(5)]

    def apply_command(self, cmd: wire.ButtonCommand) -> None:
        self.sim.press_button(cmd.button_id, "press" if cmd.action == 0 else "release")

    def state_packet(self) -> wire.StatePacket:
        motors = []
        for motor_id, channel in enumerate(self.sim.channels):
            motors.append(
                wire.MotorReadout(
                    encoder_count=channel.state.encoder_count,
                    pwm_duty=channel.state.pwm_duty,
                    velocity_steps=channel.velocity_steps,
                    cycle_phase=int(self.sim.buttons.phases()[motor_id]),
                )
            )
        hand_state = self.sim.hand_state()
        angles = tuple(
            (hand_state.fingers[f].mcp_angle, hand_state.fingers[f].pip_angle)
            for f in ("thumb", "index", "middle", "ring", "little")
        )
        return wire.StatePacket(
            sim_time_s=self.sim.sim_time_s,
            progress=self.sim.progress(),
            motors=tuple(motors),
            finger_angles=angles,
        )

    def frame_packet(self) -> wire.FramePacket:
        hand_state = self.sim.hand_state()
        fractions = np.array(
            [
                hand_state.fingers[f].tendon_displacement / 60000.0
                for f in ("thumb", "index", "middle", "ring", "little")
            ]
        )
        images, masks, _ = self.scene.render(fractions, self.frame_index)
        fault_cam = -1
        if self.config.fault_period > 0 and (self.frame_index + 1) % self.config.fault_period == 0:
            fault_cam = (self.frame_index // self.config.fault_period) % 5

        tiles = []
        for cam in range(5):
            frame = framing.Frame.from_array(images[cam], cam, self.frame_index)
            stream = framing.encode_frame(frame)
            if cam == fault_cam:
                stream = inject_fault([stream], BitErrorRate(2e-3), seed=self.frame_index)
            decoded = framing.dcmi_decode(stream)
            if isinstance(decoded, framing.Frame):
                image_bytes = decoded.pixels
                self._last_good[cam] = image_bytes
                status = wire.TILE_STATUS_OK
            else:
                image_bytes = self._last_good[cam]
                status = wire.TILE_STATUS_CORRUPT
            truth = masks[cam]
            if self.weights is not None and status == wire.TILE_STATUS_OK:
                result = forward(
                    np.frombuffer(image_bytes, np.uint8)
                    .reshape(72, 88, 3)
                    .astype(np.float32)
                    / 255.0,
                    self.weights,
                )
                mask_bits = wire.pack_mask(result.mask)
                accuracy = float(np.mean(result.mask == truth))
            else:
                mask_bits = wire.pack_mask(truth)
                accuracy = -1.0
            tiles.append(
                wire.FrameTile(
                    camera_id=cam,
                    status=status,
                    accuracy=accuracy,
                    image=image_bytes,
                    mask=mask_bits,
                )
            )
        self.frame_index += 1
        return wire.FramePacket(
            sim_time_s=self.sim.sim_time_s,
            total_macs=self.total_macs,
            weight_bytes=self.weight_bytes,
            tiles=tuple(tiles),
        )


async def serve_async(config: ServeConfig, ready: asyncio.Event | None = None) -> None:
    """Run the serve loop until cancelled."""
    from websockets.asyncio.server import serve as ws_serve, broadcast

    session = ServeSession(config)
    connections = set()
    commands: asyncio.Queue[wire.ButtonCommand] = asyncio.Queue()

    async def handler(ws):
        connections.add(ws)
        try:
            await ws.send(
                wire.Hello(
                    speed_factor=config.speed_factor,
                    state_hz=1000 // STATE_PERIOD_TICKS,
                    frame_hz=1000 // session.frame_period_ticks,
                ).encode()
            )
            async for raw in ws:
                try:
                    msg = wire.decode(bytes(raw))
                except wire.WireError as exc:
                    await ws.send(wire.ErrorReply(1, str(exc)).encode())
                    continue
                if isinstance(msg, wire.ButtonCommand):
                    await commands.put(msg)
                else:
                    await ws.send(wire.ErrorReply(2, "only button commands accepted").encode())
        finally:
            connections.discard(ws)

    async with ws_serve(handler, config.host, config.port, max_size=2**21):
        log.info("serving on ws://%s:%d", config.host, config.port)
        if ready is not None:
            ready.set()
        loop = asyncio.get_running_loop()
        next_wall = loop.time()
        while True:
            # commands land exactly on tick boundaries
            while not commands.empty():
                session.apply_command(commands.get_nowait())
            for _ in range(STATE_PERIOD_TICKS):
                session.sim.tick()
                if session.sim.tick_count % session.frame_period_ticks == 0 and connections:
                    broadcast(connections, session.frame_packet().encode())
            if connections:
                broadcast(connections, session.state_packet().encode())
            if config.speed_factor > 0:
                next_wall += STATE_PERIOD_TICKS / 1000.0 / config.speed_factor
                delay = next_wall - loop.time()
                if delay > 0:
                    await asyncio.sleep(delay)
                else:
                    next_wall = loop.time()  # fell behind; don't accumulate debt
            else:
                await asyncio.sleep(0)


def serve_forever(config: ServeConfig) -> None:
    try:
        asyncio.run(serve_async(config))
    except KeyboardInterrupt:
        pass
