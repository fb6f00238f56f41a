"""Micro-ISA tests: assembler round-trip, interpreter semantics, generators."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from r3dla import uisa


def run(text, limit=1000):
    return uisa.run_trace(uisa.parse_program(text), limit)


# -- assembler ---------------------------------------------------------------

def test_parse_simple():
    prog = uisa.parse_program("ADDI r1, r0, 5\nHALT\n")
    assert len(prog) == 2
    assert prog.instrs[0].opcode == "ALUI"
    assert prog.instrs[0].dst == 1
    assert prog.instrs[0].imm == 5
    assert prog.instrs[1].opcode == "HALT"


def test_parse_empty_is_error():
    with pytest.raises(uisa.ParseError, match="empty program"):
        uisa.parse_program("   \n# just a comment\n")


def test_parse_labels_and_memref():
    prog = uisa.parse_program("""
        loop: LOAD r1, 8(r2)
        STORE r1, 0(r3)
        BNEZ r1, loop
        HALT
    """)
    assert prog.instrs[0].mem_base == 2
    assert prog.instrs[0].mem_offset == 8
    assert prog.instrs[2].target == 0


def test_parse_errors():
    with pytest.raises(uisa.ParseError):
        uisa.parse_program("ADDI r99, r0, 1\nHALT\n")   # reg out of range
    with pytest.raises(uisa.ParseError):
        uisa.parse_program("FROB r1, r2\nHALT\n")        # unknown mnemonic
    with pytest.raises(uisa.ParseError):
        uisa.parse_program("ADDI r1\nHALT\n")            # missing operands
    with pytest.raises(uisa.ParseError, match="duplicate"):
        uisa.parse_program("x: ADDI r1, r0, 1\nx: HALT\n")


def test_validate_dangling_target():
    ins = [uisa.StaticInstr(0, "BR_UNCOND", target=99),
           uisa.StaticInstr(1, "HALT")]
    with pytest.raises(uisa.UisaError, match="dangling"):
        uisa.StaticProgram(instrs=ins).validate()


def test_print_parse_round_trip_generators():
    progs = [
        uisa.gen_strided_loop(stride=64, iters=10),
        uisa.gen_pointer_chase(length=16, rounds=2, payload=1, filler=3),
        uisa.gen_branchy(iters=10, streams=3),
        uisa.gen_mixed_phases(phase_iters=5, outer=2),
    ]
    for p in progs:
        text = uisa.print_program(p)
        again = uisa.parse_program(text)
        assert again.instrs == p.instrs
        # .data lines must survive too
        assert again.init_mem == p.init_mem


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 120))
def test_print_parse_round_trip_random(seed, n):
    prog = uisa.random_program(random.Random(seed), n)
    again = uisa.parse_program(uisa.print_program(prog))
    assert again.instrs == prog.instrs


# -- interpreter -------------------------------------------------------------

def test_alui_semantics():
    tr = run("ADDI r1, r0, 5\nSUBI r2, r1, 7\nHALT\n")
    assert tr[0].value == 5
    assert tr[1].value == -2


def test_branch_taken_on_zero():
    tr = run("BEQZ r1, 2\nADDI r2, r0, 1\nHALT\n")
    assert tr[0].taken is True
    assert tr[0].target_pc == 2
    assert len(tr) == 1     # the ADDI was jumped over


def test_blt_bge():
    tr = run("ADDI r1, r0, -3\nBLT r1, r0, 3\nADDI r2, r0, 9\nHALT\n")
    assert tr[1].taken is True


def test_signed_wraparound():
    # (2^63 - 1) + 1 wraps to the most negative value
    tr = run(f"ADDI r1, r0, {2**63 - 1}\nADDI r1, r1, 1\nHALT\n")
    assert tr[1].value == -(2 ** 63)


def test_load_store_memory():
    tr = run("""
        ADDI r1, r0, 0x100
        ADDI r2, r0, 77
        STORE r2, 8(r1)
        LOAD r3, 8(r1)
        HALT
    """)
    assert tr[2].eff_addr == 0x108
    assert tr[3].value == 77


def test_uninitialized_memory_reads_zero():
    tr = run("ADDI r1, r0, 0x100\nLOAD r2, 0(r1)\nHALT\n")
    assert tr[1].value == 0


def test_data_directive_seeds_memory():
    tr = run(".data 0x200 123\nADDI r1, r0, 0x200\nLOAD r2, 0(r1)\nHALT\n")
    assert tr[-1].value == 123


def test_negative_address_is_exec_error():
    prog = uisa.parse_program("ADDI r1, r0, -8\nLOAD r2, 0(r1)\nHALT\n")
    state = uisa.ArchState.initial(prog)
    uisa.step(state, prog)
    with pytest.raises(uisa.ExecError):
        uisa.step(state, prog)


def test_call_ret():
    tr = run("""
        CALL f
        HALT
        f: ADDI r1, r0, 1
        RET
    """)
    assert [ev.pc for ev in tr] == [0, 2, 3]
    assert tr[-1].target_pc == 1


def test_ret_without_call_is_error():
    prog = uisa.parse_program("CALL f\nHALT\nf: RET\n")
    state = uisa.ArchState.initial(prog)
    state.pc = 2                # jump straight to the RET, stack still empty
    with pytest.raises(uisa.ExecError, match="empty call stack"):
        uisa.step(state, prog)


def test_trace_event_json_round_trip():
    ev = uisa.TraceEvent(3, 7, "LOAD", eff_addr=64, value=-1)
    assert uisa.TraceEvent.from_json(ev.to_json()) == ev


# -- workload generators -----------------------------------------------------

def test_strided_loop_addresses():
    tr = uisa.run_trace(uisa.gen_strided_loop(stride=64, iters=100), 10_000)
    addrs = [ev.eff_addr for ev in tr if ev.opcode == "LOAD"]
    assert len(addrs) == 100
    assert all(b - a == 64 for a, b in zip(addrs, addrs[1:]))


def test_pointer_chase_follows_pointers():
    prog = uisa.gen_pointer_chase(length=50, seed=3)
    tr = uisa.run_trace(prog, 10_000)
    loads = [ev for ev in tr if ev.opcode == "LOAD"]
    for prev, cur in zip(loads, loads[1:]):
        assert cur.eff_addr == prev.value


def test_pointer_chase_rounds_are_circular():
    prog = uisa.gen_pointer_chase(length=10, rounds=3)
    tr = uisa.run_trace(prog, 10_000)
    loads = [ev for ev in tr if ev.opcode == "LOAD"]
    assert len(loads) == 30
    assert loads[0].eff_addr == loads[10].eff_addr


def test_generator_determinism():
    a = uisa.gen_branchy(iters=20, streams=2, seed=9)
    b = uisa.gen_branchy(iters=20, streams=2, seed=9)
    assert a == b
    c = uisa.gen_branchy(iters=20, streams=2, seed=10)
    assert a != c


def test_gen_workload_dispatch():
    p = uisa.gen_workload("strided_loop", {"stride": 8, "iters": 5})
    assert p.meta["kind"] == "strided_loop"
    with pytest.raises(uisa.UisaError, match="unknown workload"):
        uisa.gen_workload("nope")


def test_mixed_phases_runs_to_halt():
    prog = uisa.gen_mixed_phases(phase_iters=20, outer=2)
    tr = uisa.run_trace(prog, 100_000)
    assert len(tr) < 100_000   # reached HALT
    kinds = {ev.opcode for ev in tr}
    assert "LOAD" in kinds and "BR_COND" in kinds


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_programs_terminate(seed):
    prog = uisa.random_program(random.Random(seed), 60)
    tr = uisa.run_trace(prog, 200_000)
    assert len(tr) < 200_000   # always reaches HALT
