import json

import numpy as np
import pytest

from scuc import (
    SolverOptions,
    compile,
    export_mps,
    import_mps,
    parse_instance,
    replay_solution,
    solution_from_result,
    solve_mip,
    synth_instance,
)
from scuc.errors import MpsParseError, SchemaError, ValidationError
from scuc.formats import SolutionDocument
from scuc.mip import from_compact
from helpers import tiny_doc, tiny_text


def test_mps_tiny_has_marker_wrapped_integer_columns():
    doc = tiny_doc(horizon_T=1, demand={"b1": [50.0]})
    model = compile(parse_instance(json.dumps(doc)))
    text = export_mps(model, name="tiny")
    lines = text.splitlines()
    org = next(i for i, ln in enumerate(lines) if "'INTORG'" in ln)
    end = next(i for i, ln in enumerate(lines) if "'INTEND'" in ln)
    int_cols = {ln.split()[0] for ln in lines[org + 1 : end]}
    assert int_cols == {"u_0_0", "v_0_0", "w_0_0"}  # 3 binary columns for T=1
    assert text.startswith("NAME")
    assert text.rstrip().endswith("ENDATA")


def test_mps_round_trip_is_structurally_identical():
    inst = synth_instance(3, 2, 2, T=4, seed=5)
    milp = from_compact(compile(inst))
    again = import_mps(export_mps(milp))
    a, b = milp.lp, again.lp
    assert a.A.nnz == b.A.nnz
    assert (a.A != b.A).nnz == 0
    assert np.array_equal(a.senses, b.senses)
    assert np.array_equal(a.rhs, b.rhs)
    assert np.array_equal(a.c, b.c)
    assert np.array_equal(a.lb, b.lb)
    assert np.array_equal(a.ub, b.ub)
    assert np.array_equal(milp.integer_mask, again.integer_mask)


def test_mps_round_trip_resolve_objective():
    inst = synth_instance(2, 1, 0, T=3, seed=6)
    model = compile(inst)
    res1 = solve_mip(model, SolverOptions(rel_gap=0.0))
    again = import_mps(export_mps(model))
    res2 = solve_mip(again, SolverOptions(rel_gap=0.0))
    assert abs(res1.objective - res2.objective) <= 1e-9


def test_balance_rows_one_equality_per_bus_period():
    inst = synth_instance(3, 4, 4, T=5, seed=7)
    model = compile(inst)
    assert model.I_u.shape[0] == 4 * 5
    text = export_mps(model)
    n_e_rows = sum(1 for ln in text.splitlines() if ln.startswith(" E  "))
    # logic rows + capacity links + forcing (all E) + balance rows
    assert n_e_rows >= 4 * 5


def test_import_hand_written_mps():
    text = """NAME  hand
ROWS
 N  COST
 L  R0
COLUMNS
    x  COST  -2
    x  R0  1
    y  COST  -3
    y  R0  1
RHS
    RHS  R0  4
BOUNDS
 UP BND  x  3
 UP BND  y  3
ENDATA
"""
    milp = import_mps(text)
    sol = solve_mip(milp, SolverOptions(rel_gap=0.0))
    # maximize 2x+3y s.t. x+y<=4, 0<=x,y<=3 -> x=1, y=3
    assert sol.objective == pytest.approx(-11.0)


def test_import_ranges_section():
    text = """NAME  ranged
ROWS
 N  COST
 L  R0
COLUMNS
    x  COST  1
    x  R0  1
RHS
    RHS  R0  4
RANGES
    RNG  R0  2
BOUNDS
 UP BND  x  10
ENDATA
"""
    milp = import_mps(text)
    sol = solve_mip(milp, SolverOptions(rel_gap=0.0))
    assert sol.objective == pytest.approx(2.0)  # 2 <= x <= 4, minimize x


def test_import_bound_keywords():
    text = """NAME  b
ROWS
 N  COST
 G  R0
COLUMNS
    x  COST  1
    x  R0  1
    y  COST  1
    y  R0  1
RHS
    RHS  R0  -1
BOUNDS
 FR BND  x
 MI BND  y
 UP BND  y  0
ENDATA
"""
    milp = import_mps(text)
    assert milp.lp.lb[0] == -np.inf and milp.lp.ub[0] == np.inf
    assert milp.lp.lb[1] == -np.inf and milp.lp.ub[1] == 0.0


def test_import_unknown_section_cites_line():
    text = "NAME  x\nROWS\n N  COST\nGARBAGE\nENDATA\n"
    with pytest.raises(MpsParseError) as ei:
        import_mps(text)
    assert ei.value.line_no == 4
    assert "4" in str(ei.value)


def test_import_unknown_row_reference():
    text = "NAME  x\nROWS\n N  COST\nCOLUMNS\n    x  NOPE  1\nENDATA\n"
    with pytest.raises(MpsParseError):
        import_mps(text)


def test_solution_document_round_trip():
    inst = parse_instance(tiny_text())
    model = compile(inst)
    res = solve_mip(model, SolverOptions(rel_gap=0.0))
    doc = solution_from_result(model, res, compile_seconds=0.01)
    again = SolutionDocument.from_json(doc.to_json())
    assert again == doc
    assert doc.u["g1"] == [1, 1]
    assert doc.instance == "tiny"


def test_solution_document_missing_key():
    with pytest.raises(SchemaError):
        SolutionDocument.from_json("{\"instance\": \"x\"}")


def test_replay_solution_feasible():
    inst = synth_instance(3, 2, 2, T=4, seed=9)
    model = compile(inst)
    res = solve_mip(model, SolverOptions(rel_gap=0.0))
    doc = solution_from_result(model, res)
    replay = replay_solution(doc, inst)
    assert replay["feasible"]
    assert max(replay["residuals"].values()) <= 1e-6
    # the replayed dispatch can only improve on the incumbent's dispatch
    assert replay["objective"] <= res.objective + 1e-6


def test_replay_rejects_wrong_horizon():
    inst = parse_instance(tiny_text())
    model = compile(inst)
    res = solve_mip(model, SolverOptions(rel_gap=0.0))
    doc = solution_from_result(model, res)
    doc.u["g1"] = [1]
    with pytest.raises(ValidationError):
        replay_solution(doc, inst)


def test_replay_detects_infeasible_schedule():
    inst = parse_instance(tiny_text())
    model = compile(inst)
    res = solve_mip(model, SolverOptions(rel_gap=0.0))
    doc = solution_from_result(model, res)
    doc.u["g1"] = [0, 0]  # all off cannot serve demand
    replay = replay_solution(doc, inst)
    assert not replay["feasible"]
