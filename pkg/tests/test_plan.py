"""Plan document parsing, canonical serialization, validation."""

import json
from pathlib import Path

import pytest

from commforge.errors import PlanRefError, PlanSyntaxError, PlanVersionError
from commforge.plan import (
    BufferDecl,
    ChannelDecl,
    ExecutionPlan,
    PlanOp,
    ThreadBlockProgram,
    parse_plan,
    serialize_plan,
    validate_plan,
)

GOLDEN = Path(__file__).parent / "golden" / "copy_plan.json"


def copy_plan(name="copy2") -> ExecutionPlan:
    """Minimal two-rank plan: rank 0 puts its input into rank 1's output."""
    return ExecutionPlan(
        version=1, name=name, collective="custom", protocol="HB", dtype="i32",
        num_ranks=2,
        buffers=[BufferDecl("in", "input", "all", 4),
                 BufferDecl("out", "output", "all", 4)],
        channels=[ChannelDecl("c0", "memory", src=0, dst=1)],
        programs=[
            ThreadBlockProgram(0, 0, (
                PlanOp("put", chan="c0", src=("in", 0, 4), dst=("out", 0, 4)),
                PlanOp("signal", chan="c0"),
            )),
            ThreadBlockProgram(1, 0, (PlanOp("wait", chan="c0"),)),
        ],
    )


def test_parse_minimal_copy_plan():
    plan = parse_plan(serialize_plan(copy_plan()))
    assert plan.num_ranks == 2
    assert len(plan.programs) == 2
    assert plan.programs[0].ops[0].op == "put"


def test_dangling_channel_ref_reports_op_index():
    doc = json.loads(serialize_plan(copy_plan()))
    doc["programs"][0]["ops"][1]["chan"] = "c9"
    with pytest.raises(PlanRefError) as exc:
        parse_plan(json.dumps(doc).encode())
    assert "programs[0].ops[1]" in str(exc.value)
    assert "c9" in str(exc.value)


def test_dangling_buffer_ref():
    doc = json.loads(serialize_plan(copy_plan()))
    doc["programs"][0]["ops"][0]["src"] = ["nope", 0, 4]
    with pytest.raises(PlanRefError):
        parse_plan(json.dumps(doc).encode())


def test_round_trip_identity():
    plan = copy_plan()
    again = parse_plan(serialize_plan(plan))
    assert again == plan
    assert serialize_plan(again) == serialize_plan(plan)


def test_serialize_deterministic():
    assert serialize_plan(copy_plan()) == serialize_plan(copy_plan())


def test_name_change_only_affects_name_field():
    a = serialize_plan(copy_plan("alpha")).decode()
    b = serialize_plan(copy_plan("beta")).decode()
    assert a.replace('"name":"alpha"', '"name":"beta"') == b


def test_golden_file_round_trip():
    golden = GOLDEN.read_bytes()
    assert serialize_plan(parse_plan(golden)) == golden


def test_version_rejected():
    doc = json.loads(serialize_plan(copy_plan()))
    doc["version"] = 2
    with pytest.raises(PlanVersionError):
        parse_plan(json.dumps(doc).encode())


def test_syntax_errors():
    with pytest.raises(PlanSyntaxError):
        parse_plan(b"{nope")
    with pytest.raises(PlanSyntaxError):
        parse_plan(b'{"version":1}')
    doc = json.loads(serialize_plan(copy_plan()))
    doc["extra"] = 1
    with pytest.raises(PlanSyntaxError):
        parse_plan(json.dumps(doc).encode())
    doc = json.loads(serialize_plan(copy_plan()))
    doc["programs"][0]["ops"][0]["op"] = "teleport"
    with pytest.raises(PlanSyntaxError):
        parse_plan(json.dumps(doc).encode())


def test_lowered_false_marker_round_trips():
    plan = copy_plan()
    plan.lowered = False
    doc = serialize_plan(plan)
    assert b'"lowered":false' in doc
    assert parse_plan(doc).lowered is False
    # lowered plans omit the marker entirely
    assert b"lowered" not in serialize_plan(copy_plan())


# -- validation --------------------------------------------------------------


def test_validate_clean_plan_empty():
    assert validate_plan(copy_plan()) == []


def test_validate_is_pure():
    plan = copy_plan()
    assert validate_plan(plan) == validate_plan(plan)


def test_validate_protocol_mix():
    plan = copy_plan()
    plan.channels.append(ChannelDecl("c1", "memory", src=1, dst=0, protocol="LL"))
    diags = validate_plan(plan)
    assert any(d.code == "protocol-mix" for d in diags)


def test_validate_signal_wait_imbalance():
    plan = copy_plan()
    ops = plan.programs[0].ops + (PlanOp("signal", chan="c0"), PlanOp("signal", chan="c0"))
    plan.programs[0] = ThreadBlockProgram(0, 0, ops)
    diags = validate_plan(plan)
    imb = [d for d in diags if d.code == "sync-imbalance"]
    assert len(imb) == 1 and imb[0].severity == "warning"
    assert "3 signals vs 1 waits" in imb[0].message


def test_validate_bounds():
    plan = copy_plan()
    bad = PlanOp("put", chan="c0", src=("in", 2, 4), dst=("out", 0, 4))
    plan.programs[0] = ThreadBlockProgram(0, 0, (bad,))
    diags = validate_plan(plan)
    assert any(d.code == "bounds" for d in diags)


def test_validate_flush_needs_port_channel():
    plan = copy_plan()
    ops = plan.programs[0].ops + (PlanOp("flush", chan="c0"),)
    plan.programs[0] = ThreadBlockProgram(0, 0, ops)
    assert any(d.code == "op-fields" for d in validate_plan(plan))


def test_validate_op_on_wrong_rank():
    plan = copy_plan()
    plan.programs[1] = ThreadBlockProgram(1, 0, (
        PlanOp("put", chan="c0", src=("in", 0, 4), dst=("out", 0, 4)),))
    assert any(d.code == "op-rank" for d in validate_plan(plan))


def test_validate_ll_flag_reuse():
    plan = ExecutionPlan(
        version=1, name="llreuse", collective="custom", protocol="LL", dtype="i32",
        num_ranks=2,
        buffers=[BufferDecl("in", "input", "all", 4),
                 BufferDecl("scr", "scratch", "all", 8)],
        channels=[ChannelDecl("c0", "memory", src=0, dst=1)],
        programs=[ThreadBlockProgram(0, 0, (
            PlanOp("put_packets", chan="c0", src=("in", 0, 4), dst=("scr", 0, 4), flag=1),
            PlanOp("put_packets", chan="c0", src=("in", 0, 4), dst=("scr", 2, 2), flag=1),
        ))],
    )
    diags = validate_plan(plan)
    assert any(d.code == "flag-reuse" for d in diags)
    # distinct flags on the overlapping range are fine
    fixed = plan.programs[0].ops[0], PlanOp(
        "put_packets", chan="c0", src=("in", 0, 4), dst=("scr", 2, 2), flag=2)
    plan.programs[0] = ThreadBlockProgram(0, 0, fixed)
    assert not [d for d in validate_plan(plan) if d.code == "flag-reuse"]


def test_validate_packet_space_bounds():
    plan = ExecutionPlan(
        version=1, name="llb", collective="custom", protocol="LL", dtype="i32",
        num_ranks=2,
        buffers=[BufferDecl("in", "input", "all", 4),
                 BufferDecl("scr", "scratch", "all", 8)],  # capacity: 4 packets
        channels=[ChannelDecl("c0", "memory", src=0, dst=1)],
        programs=[ThreadBlockProgram(0, 0, (
            PlanOp("put_packets", chan="c0", src=("in", 0, 4), dst=("scr", 2, 4), flag=1),
        ))],
    )
    assert any(d.code == "bounds" for d in validate_plan(plan))
