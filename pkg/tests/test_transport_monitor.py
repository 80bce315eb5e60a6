import pytest

from snippetfuzz.framing import Framing
from snippetfuzz.mock import MockDevice, load_profile, serve
from snippetfuzz.monitor import (CRASH, CRASH_PATTERN, CRASH_UNCONFIRMED, NO_CRASH, CrashRecord, detect_crash,
                                 event_pattern, is_conformant_crash, restore_device)
from snippetfuzz.transport import (ControlChannelRestarter, LoopbackSession, NoRestarter, ResetRestarter,
                                   SocketSession, TargetConfig, TargetUnreachable, VirtualClock, send_sequence)

ON = b'{"on":true}'


def loopback(profile="jsonlike", **cfg):
    device = MockDevice(load_profile(profile))
    return device, LoopbackSession(device, TargetConfig(**cfg))


def test_target_config_validation():
    with pytest.raises(ValueError):
        TargetConfig(response_timeout_ms=50)
    with pytest.raises(ValueError):
        TargetConfig(protocol="sctp")
    cfg = TargetConfig(port=9, framing=Framing.parse("len:2:big"))
    assert TargetConfig.from_dict(cfg.to_dict()) == cfg


def test_send_sequence_collects_replies():
    device, session = loopback()
    res = send_sequence((ON, b'{"bri":9}'), session)
    assert res.ok and len(res.responses) == 2
    assert res.reply_to(1).data == b'{"success":{"/lights/1/state/bri":9}}'
    assert session.sequences_sent == 1 and session.transmissions == 2


def test_timeout_advances_virtual_clock():
    device, session = loopback(response_timeout_ms=500)
    device.set_script(["drop"])
    t0 = session.now()
    res = send_sequence((ON,), session)
    assert res.timeout_at == 0
    assert session.now() - t0 == pytest.approx(0.5)


def test_silent_device_is_a_crash():
    device, session = loopback()
    device.set_script(["silent"])
    v = detect_crash((ON,), session, ResetRestarter(device))
    assert v.verdict == CRASH
    assert event_pattern(v.timeline) == CRASH_PATTERN
    assert is_conformant_crash(v.record)
    assert v.transmissions == 4 and v.restarts == 1
    assert CrashRecord.from_dict(v.record.to_dict()).to_dict() == v.record.to_dict()


def test_drop_once_is_not_a_crash():
    device, session = loopback()
    device.set_script(["drop"])
    first = send_sequence((ON,), session)
    v = detect_crash((ON,), session, ResetRestarter(device), first.timeout_at)
    assert v.verdict == NO_CRASH and not v.crashed
    assert event_pattern(v.timeline) == ["timeout", "resend", "reply", "verdict"]
    assert v.result.ok


def test_hang_recovers_after_restart():
    # a hung device that answers once restarted is not a crash
    device, session = loopback("jsonlike_fault")
    hang = b'{"schedule":"edit_rule":{"on":true}}}'
    assert send_sequence((hang,), session).timeout_at == 0
    v = detect_crash((ON,), session, ResetRestarter(device))
    assert v.verdict == NO_CRASH and v.restarts == 1
    assert event_pattern(v.timeline)[-3:] == ["confirm", "reply", "verdict"]


def test_boot_wait_is_honoured():
    device, session = loopback(boot_wait_ms=10000, response_timeout_ms=100)
    device.set_script(["silent"])
    v = detect_crash((ON,), session, ResetRestarter(device))
    restart = next(e["t"] for e in v.timeline if e["event"] == "restart")
    confirm = next(e["t"] for e in v.timeline if e["event"] == "confirm")
    assert confirm - restart == pytest.approx(10.0)


def test_failed_restart_is_unconfirmed():
    device, session = loopback()
    device.set_script(["silent"])
    v = detect_crash((ON,), session, NoRestarter())
    assert v.verdict == CRASH_UNCONFIRMED
    assert "restart_failed" in event_pattern(v.timeline)


def test_restore_crash_blamed_on_previous_sequence():
    device, session = loopback()
    assert restore_device(session, (), ResetRestarter(device)).acknowledged
    assert restore_device(session, (ON,), ResetRestarter(device)).transmissions == 1
    device.set_script(["silent"])
    r = restore_device(session, (ON,), ResetRestarter(device), previous=(b"culprit",))
    assert not r.acknowledged
    assert r.verdict.record.sequence == (b"culprit",)
    assert r.verdict.record.during_restore


def test_virtual_clock():
    clock = VirtualClock(5.0)
    clock.advance(1.5)
    clock.advance(-3)
    assert clock() == 6.5


def test_socket_session_tcp_and_control():
    with serve(load_profile("jsonlike")) as server:
        cfg = TargetConfig("127.0.0.1", server.port, "tcp", Framing(), response_timeout_ms=500)
        with SocketSession(cfg) as session:
            res = send_sequence((ON, b'{"on":true'), session)
            assert res.ok
            assert res.responses[0].data == b'{"success":{"/lights/1/state/on":true}}'
            assert b'"type":2' in res.responses[1].data
            assert server.control("SCRIPT [\"drop\"]") == "OK"
            assert send_sequence((ON,), session).timeout_at == 0
        ControlChannelRestarter("127.0.0.1", server.control_port)()
        assert server.device.resets == 1


def test_socket_session_udp_and_length_prefix():
    profile = load_profile("custombyte")
    with serve(profile) as server:
        cfg = TargetConfig("127.0.0.1", server.port, "tcp", profile.framing, response_timeout_ms=500)
        with SocketSession(cfg) as session:
            reply = send_sequence((bytes([0x55, 2, 0x63, 50]),), session).responses[0].data
            assert reply == bytes([0x55, 2, 0xE3, 50])
    profile.protocol = "udp"
    with serve(profile) as server:
        cfg = TargetConfig("127.0.0.1", server.port, "udp", response_timeout_ms=300)
        with SocketSession(cfg) as session:
            assert send_sequence((bytes([0x55, 2, 0x63, 50]),), session).ok


def test_unreachable_target():
    with pytest.raises(TargetUnreachable):
        SocketSession(TargetConfig("127.0.0.1", 1, response_timeout_ms=200)).open()
