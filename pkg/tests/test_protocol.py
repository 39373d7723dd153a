"""Wire codec, transports and full teacher/apprentice sessions."""

import socket
import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semid import Identity, ProtocolError, build_semantic_base, make_plan, run_once
from semid.protocol import (
    ErrorMsg,
    Feature,
    Hello,
    MemoryStream,
    Saturated,
    SocketStream,
    Stop,
    TAG_FEATURE,
    apprentice_session,
    base_digest,
    decode_message,
    encode_message,
    memory_pair,
    read_message,
    teacher_session,
)

from conftest import base_from_refs


class TestCodec:
    def test_feature_frame_bytes(self):
        frame = encode_message(Feature(position=4, value=1.0))
        assert frame == bytes.fromhex("02" "0000000c" "00000004" "3ff0000000000000")

    def test_stop_frame_bytes(self):
        frame = encode_message(Stop(element_id=0, confidence=0.75))
        assert frame[0] == 0x03
        assert struct.unpack(">I", frame[1:5])[0] == 12
        assert frame[-8:] == bytes.fromhex("3fe8000000000000")

    def test_hello_round_trip(self):
        msg = Hello(n_features=2048, q=64, n_elements=10, digest=bytes(range(32)))
        assert decode_message(encode_message(msg)) == msg

    def test_saturated_round_trip(self):
        frame = encode_message(Saturated())
        assert frame == bytes.fromhex("04" "00000000")
        assert decode_message(frame) == Saturated()

    def test_errormsg_round_trip_with_unicode(self):
        msg = ErrorMsg(code=7, text="bad frame: значение")
        assert decode_message(encode_message(msg)) == msg

    def test_unknown_tag_rejected(self):
        with pytest.raises(ProtocolError, match="unknown"):
            decode_message(bytes.fromhex("7f" "00000000"))

    def test_truncated_frame_rejected(self):
        good = encode_message(Feature(1, 2.0))
        with pytest.raises(ProtocolError, match="truncated"):
            decode_message(good[:-1])

    def test_trailing_bytes_rejected(self):
        good = encode_message(Feature(1, 2.0))
        with pytest.raises(ProtocolError, match="trailing"):
            decode_message(good + b"\x00")

    def test_wrong_payload_size_rejected(self):
        with pytest.raises(ProtocolError, match="12 bytes"):
            decode_message(bytes.fromhex("02" "00000004" "00000004"))

    def test_errormsg_text_length_must_match(self):
        payload = struct.pack(">HH", 1, 10) + b"abc"
        frame = struct.pack(">BI", 0x05, len(payload)) + payload
        with pytest.raises(ProtocolError, match="text bytes"):
            decode_message(frame)

    def test_encode_field_overflow(self):
        with pytest.raises(ProtocolError):
            encode_message(Feature(position=2**32, value=1.0))
        with pytest.raises(ProtocolError):
            encode_message(Hello(n_features=4, q=2**16, n_elements=1, digest=bytes(32)))
        with pytest.raises(ProtocolError):
            encode_message(Hello(n_features=4, q=64, n_elements=1, digest=b"short"))
        with pytest.raises(ProtocolError):
            encode_message(Feature(position=0, value=float("nan")))
        with pytest.raises(ProtocolError):
            encode_message(Stop(element_id=0, confidence=1.5))

    @given(
        st.one_of(
            st.builds(
                Hello,
                n_features=st.integers(0, 2**32 - 1),
                q=st.integers(0, 2**16 - 1),
                n_elements=st.integers(0, 2**32 - 1),
                digest=st.binary(min_size=32, max_size=32),
            ),
            st.builds(
                Feature,
                position=st.integers(0, 2**32 - 1),
                value=st.floats(allow_nan=False, allow_infinity=False),
            ),
            st.builds(
                Stop,
                element_id=st.integers(0, 2**32 - 1),
                confidence=st.floats(0.0, 1.0),
            ),
            st.just(Saturated()),
            st.builds(ErrorMsg, code=st.integers(0, 2**16 - 1), text=st.text(max_size=300)),
        )
    )
    @settings(max_examples=300, derandomize=True)
    def test_round_trip_fuzz(self, msg):
        assert decode_message(encode_message(msg)) == msg


class TestBaseDigest:
    def test_equal_bases_share_digest(self):
        ids = [Identity([1.0, 2.0], "a"), Identity([3.0, 4.0], "b")]
        assert base_digest(build_semantic_base(ids, 64)) == base_digest(
            build_semantic_base(ids, 64)
        )

    def test_member_perturbation_changes_digest(self):
        a = build_semantic_base([Identity([1.0], "a"), Identity([2.0], "a")], 64)
        b = build_semantic_base([Identity([1.0], "a"), Identity([2.0 + 1e-9], "a")], 64)
        assert base_digest(a) != base_digest(b)


class TestMemoryStream:
    def test_send_then_receive(self):
        a, b = memory_pair()
        a.send(b"hello")
        assert b.recv_exact(5) == b"hello"

    def test_recv_blocks_until_data(self):
        a, b = memory_pair()
        threading.Timer(0.05, lambda: a.send(b"xy")).start()
        assert b.recv_exact(2) == b"xy"

    def test_closed_peer_raises(self):
        a, b = memory_pair()
        a.close()
        with pytest.raises(ProtocolError):
            b.recv_exact(1)
        with pytest.raises(ProtocolError):
            b.send(b"z")


class _RecordingStream:
    """Delegating wrapper that keeps every frame the session sends."""

    def __init__(self, inner):
        self.inner = inner
        self.sent = []

    def send(self, data):
        self.sent.append(bytes(data))
        self.inner.send(data)

    def recv_exact(self, n):
        return self.inner.recv_exact(n)

    def wait_sendable(self):
        return self.inner.wait_sendable()

    def close(self):
        self.inner.close()

    def sent_tags(self):
        return [frame[0] for frame in self.sent]


def run_loopback(teacher_base, apprentice_base, identity, threshold, seed):
    """Threaded in-memory session; returns (teacher outcome, decision, frames)."""
    t_end, a_end = memory_pair()
    recorder = _RecordingStream(t_end)
    plan = make_plan(identity, seed)
    outcome = {}

    def teach():
        try:
            outcome["report"] = teacher_session(plan, teacher_base, recorder)
        except Exception as exc:  # re-raised by the caller
            outcome["error"] = exc

    thread = threading.Thread(target=teach)
    thread.start()
    try:
        decision = apprentice_session(apprentice_base, threshold, a_end)
        apprentice_error = None
    except Exception as exc:
        decision = None
        apprentice_error = exc
    thread.join(timeout=30)
    assert not thread.is_alive(), "teacher thread wedged"
    return outcome, decision, apprentice_error, recorder


@pytest.fixture
def separable_base():
    rng = np.random.default_rng(0)
    refs = rng.normal(scale=10.0, size=(4, 10))
    return base_from_refs(refs.tolist())


class TestSessions:
    def test_loopback_matches_in_process_run(self, separable_base):
        base = separable_base
        identity = Identity(base.reference_matrix[1] + 0.01, "e001")
        reference_run = run_once(base, identity, 1, 0.9, seed=5)
        outcome, decision, err, recorder = run_loopback(base, base, identity, 0.9, seed=5)
        assert err is None and "error" not in outcome
        assert decision == reference_run.decision
        report = outcome["report"]
        assert report.stop.element_id == decision.element_id
        assert report.stop.confidence == decision.confidence
        assert report.features_sent == decision.packets_used

    def test_exact_match_stops_after_three_frames(self, separable_base):
        # identity equals reference 2 exactly: every packet is a perfect hit,
        # so the posterior walks 0.75, 0.875, 0.9375 and crosses 0.9 at the
        # third packet. K=2 here to make that arithmetic exact.
        base = base_from_refs([[0.0, 0.0, 0.0, 0.0], [5.0, 5.0, 5.0, 5.0]])
        identity = Identity([0.0, 0.0, 0.0, 0.0], "e000")
        outcome, decision, err, recorder = run_loopback(base, base, identity, 0.9, seed=1)
        assert err is None
        assert decision.packets_used == 3
        assert outcome["report"].features_sent == 3
        assert recorder.sent_tags().count(TAG_FEATURE) == 3

    def test_saturation_path(self):
        base = base_from_refs([[0.0, 0.1], [0.0, -0.1]])
        identity = Identity([0.0, 0.0], "e000")
        outcome, decision, err, recorder = run_loopback(base, base, identity, 1.0, seed=2)
        assert err is None
        assert decision.saturated
        assert decision.packets_used == base.n_features
        assert outcome["report"].saturated
        assert recorder.sent_tags().count(TAG_FEATURE) == base.n_features

    def test_digest_mismatch_aborts_before_any_feature(self, separable_base):
        other = base_from_refs((np.asarray(separable_base.reference_matrix) + 0.5).tolist())
        identity = Identity(separable_base.reference_matrix[0], "e000")
        outcome, decision, err, recorder = run_loopback(
            separable_base, other, identity, 0.9, seed=3
        )
        assert isinstance(outcome.get("error"), ProtocolError)
        assert isinstance(err, ProtocolError)
        assert decision is None
        assert TAG_FEATURE not in recorder.sent_tags()

    def test_tcp_loopback_matches_in_process(self, separable_base):
        base = separable_base
        identity = Identity(base.reference_matrix[3] + 0.02, "e003")
        reference_run = run_once(base, identity, 3, 0.85, seed=9)

        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        port = listener.getsockname()[1]
        outcome = {}

        def teach():
            conn, _ = listener.accept()
            stream = SocketStream(conn)
            try:
                outcome["report"] = teacher_session(make_plan(identity, 9), base, stream)
            except Exception as exc:
                outcome["error"] = exc
            finally:
                stream.close()

        thread = threading.Thread(target=teach)
        thread.start()
        client = socket.create_connection(("127.0.0.1", port), timeout=10)
        stream = SocketStream(client)
        try:
            decision = apprentice_session(base, 0.85, stream)
        finally:
            stream.close()
        thread.join(timeout=30)
        listener.close()
        assert "error" not in outcome
        assert decision == reference_run.decision
        assert outcome["report"].stop.element_id == decision.element_id


class TestFaultInjection:
    """Scripted peers: frames are preloaded, no threads involved."""

    def script(self, base, frames):
        teacher_end, apprentice_end = memory_pair()
        for frame in frames:
            teacher_end.send(frame)
        return apprentice_end

    def hello_for(self, base):
        return encode_message(
            Hello(base.n_features, base.q, base.n_elements, base_digest(base))
        )

    def test_feature_before_hello(self, two_ref_base):
        stream = self.script(two_ref_base, [encode_message(Feature(0, 1.0))])
        with pytest.raises(ProtocolError, match="expected HELLO"):
            apprentice_session(two_ref_base, 0.9, stream)

    def test_duplicate_position(self, two_ref_base):
        stream = self.script(
            two_ref_base,
            [
                self.hello_for(two_ref_base),
                encode_message(Feature(1, 0.5)),
                encode_message(Feature(1, 0.5)),
            ],
        )
        with pytest.raises(ProtocolError, match="bad feature"):
            apprentice_session(two_ref_base, 0.99, stream)

    def test_position_out_of_range(self, two_ref_base):
        stream = self.script(
            two_ref_base,
            [self.hello_for(two_ref_base), encode_message(Feature(99, 0.5))],
        )
        with pytest.raises(ProtocolError, match="bad feature"):
            apprentice_session(two_ref_base, 0.99, stream)

    def test_premature_saturated(self, two_ref_base):
        stream = self.script(
            two_ref_base,
            [self.hello_for(two_ref_base), encode_message(Saturated())],
        )
        with pytest.raises(ProtocolError, match="premature"):
            apprentice_session(two_ref_base, 0.99, stream)

    def test_peer_error_surfaces(self, two_ref_base):
        stream = self.script(
            two_ref_base, [encode_message(ErrorMsg(code=9, text="boom"))]
        )
        with pytest.raises(ProtocolError, match="boom"):
            apprentice_session(two_ref_base, 0.9, stream)

    def test_mismatched_hello_is_refused(self, two_ref_base):
        wrong = encode_message(Hello(99, 64, 2, bytes(32)))
        stream = self.script(two_ref_base, [wrong])
        with pytest.raises(ProtocolError, match="mismatch"):
            apprentice_session(two_ref_base, 0.9, stream)

    def test_teacher_rejects_wrong_hello_reply(self, two_ref_base):
        teacher_end, scripted = memory_pair()
        scripted.send(encode_message(Hello(99, 64, 2, bytes(32))))
        plan = make_plan(Identity([0.0, 0.0, 0.0], "e000"), seed=0)
        recorder = _RecordingStream(teacher_end)
        with pytest.raises(ProtocolError, match="mismatch"):
            teacher_session(plan, two_ref_base, recorder)
        assert TAG_FEATURE not in recorder.sent_tags()


class TestReadMessage:
    def test_reassembles_partial_sends(self):
        a, b = memory_pair()
        frame = encode_message(Feature(3, 2.5))
        a.send(frame[:2])
        threading.Timer(0.02, lambda: a.send(frame[2:])).start()
        assert read_message(b) == Feature(3, 2.5)

    def test_oversized_length_rejected(self):
        a, b = memory_pair()
        a.send(struct.pack(">BI", 0x02, 1 << 30))
        with pytest.raises(ProtocolError, match="exceeds"):
            read_message(b)
