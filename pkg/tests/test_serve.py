"""Scripted-client checks against a live serve session."""

import asyncio
import socket

import pytest

from softhand import wire
from softhand.server import ServeConfig, ServeSession, serve_async

websockets = pytest.importorskip("websockets")


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


async def collect(config, script):
    ready = asyncio.Event()
    server = asyncio.create_task(serve_async(config, ready))
    try:
        await asyncio.wait_for(ready.wait(), 10)
        async with websockets.connect(
            f"ws://127.0.0.1:{config.port}", max_size=2**21
        ) as ws:
            return await asyncio.wait_for(script(ws), 60)
    finally:
        server.cancel()
        try:
            await server
        except asyncio.CancelledError:
            pass


def test_button_press_reaches_state_within_one_interval():
    config = ServeConfig(port=free_port(), speed_factor=8.0, frame_hz=10)

    async def script(ws):
        hello = wire.decode(bytes(await ws.recv()))
        assert isinstance(hello, wire.Hello)
        # wait for a quiescent state packet first
        first = None
        while first is None:
            msg = wire.decode(bytes(await ws.recv()))
            if isinstance(msg, wire.StatePacket):
                first = msg
        assert all(m.pwm_duty == 0 for m in first.motors)
        await ws.send(wire.ButtonCommand(1).encode())
        duty_seen = phase_seen = False
        states = 0
        while states < 50 and not (duty_seen and phase_seen):
            msg = wire.decode(bytes(await ws.recv()))
            if isinstance(msg, wire.StatePacket):
                states += 1
                if msg.motors[0].pwm_duty != 0:
                    duty_seen = True
                if msg.motors[0].cycle_phase == 1:
                    phase_seen = True
        return duty_seen, phase_seen

    duty_seen, phase_seen = asyncio.run(collect(config, script))
    assert duty_seen and phase_seen


def test_frame_packets_flow_and_fault_flags_one_tile():
    config = ServeConfig(port=free_port(), speed_factor=0.0, frame_hz=20, fault_period=2)

    async def script(ws):
        corrupt_counts = []
        while len(corrupt_counts) < 6:
            msg = wire.decode(bytes(await ws.recv()))
            if isinstance(msg, wire.FramePacket):
                assert len(msg.tiles) == 5
                assert msg.total_macs == 33302016
                assert msg.weight_bytes == 7416
                corrupt_counts.append(
                    sum(t.status == wire.TILE_STATUS_CORRUPT for t in msg.tiles)
                )
        return corrupt_counts

    counts = asyncio.run(collect(config, script))
    assert any(c == 1 for c in counts)
    assert all(c <= 1 for c in counts)


def test_states_flow_without_client_input():
    config = ServeConfig(port=free_port(), speed_factor=0.0)

    async def script(ws):
        states = 0
        for _ in range(40):
            msg = wire.decode(bytes(await ws.recv()))
            if isinstance(msg, wire.StatePacket):
                states += 1
            if states >= 5:
                break
        return states

    assert asyncio.run(collect(config, script)) >= 5


def test_malformed_message_gets_error_reply_session_survives():
    config = ServeConfig(port=free_port(), speed_factor=0.0)

    async def script(ws):
        await ws.send(b"\x01\x00\x00\x00\xee")
        error = None
        for _ in range(60):
            msg = wire.decode(bytes(await ws.recv()))
            if isinstance(msg, wire.ErrorReply):
                error = msg
                break
        # session still streaming after the error
        follow_up = wire.decode(bytes(await ws.recv()))
        return error, follow_up

    error, follow_up = asyncio.run(collect(config, script))
    assert error is not None
    assert follow_up is not None


def test_session_packets_without_network():
    session = ServeSession(ServeConfig(fault_period=0))
    session.sim.press_button(3)
    session.sim.run(50)
    state = session.state_packet()
    assert state.motors[2].cycle_phase == 1
    assert state.motors[2].encoder_count > 0
    frames = session.frame_packet()
    assert len(frames.tiles) == 5
    assert all(t.status == wire.TILE_STATUS_OK for t in frames.tiles)
    assert all(t.accuracy == -1.0 for t in frames.tiles)  # no weights loaded
