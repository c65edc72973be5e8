import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkenmotsu import cli
from fkenmotsu import expr as ex
from fkenmotsu.errors import ConfigError
from fkenmotsu.grammar import parse

H3 = {"model": {"name": "beta_kenmotsu", "n": 1, "beta": 1.0}, "seed": 0}


def cfg(command, **kw):
    return {**H3, "command": command, "samples": 20, **kw}


# ---------------------------------------------------------------- grammar

@pytest.mark.parametrize("text,value", [
    ("1 + 0.5*exp(-t)", 1 + 0.5 * np.exp(-0.7)),
    ("-t^2", -0.49),
    ("2^3^2", 512.0),
    ("(t + 1)*(t - 1)", 0.49 - 1),
    ("ln(t + 2) - log(2)", np.log(2.7) - np.log(2)),
    ("tanh(t)/2", np.tanh(0.7) / 2),
    ("1e-1*t", 0.07),
    ("t^0.5", np.sqrt(0.7)),
    ("t^-1", 1 / 0.7),
])
def test_grammar_values(text, value):
    assert ex.evaluate(parse(text), [0.7]) == pytest.approx(value)


@pytest.mark.parametrize("text", ["", "t +", "2**t", "exp t", "(t", "t)", "y", "3 $ t"])
def test_grammar_errors(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_grammar_coordinates():
    e = parse("t*x1 - x2", ("t", "x1", "x2"))
    assert ex.evaluate(e, [2.0, 3.0, 1.0]) == pytest.approx(5.0)


_atoms = st.sampled_from(["t", "2", "0.5", "exp(t)", "tanh(t)", "(t+3)"])
_exprs = st.recursive(_atoms, lambda s: st.tuples(s, st.sampled_from("+-*"), s).map(
    lambda a: f"({a[0]} {a[1]} {a[2]})"), max_leaves=6)


@settings(max_examples=50, deadline=None)
@given(_exprs, st.floats(-1.0, 1.0))
def test_grammar_round_trip(text, t):
    e = parse(text)
    again = parse(str(e).replace("log", "ln"))
    assert ex.evaluate(again, [t]) == pytest.approx(ex.evaluate(e, [t]), rel=1e-12, abs=1e-12)


# ---------------------------------------------------------------- config

@pytest.mark.parametrize("bad", [
    {**H3, "command": "sqfi", "extra": 1},
    {"model": H3["model"], "command": "sqfi"},
    {**H3, "command": "nope"},
    {**H3, "command": "sqfi", "tolerances": {"structure": -1.0}},
    {**H3, "command": "sqfi", "tolerances": {"made_up": 1.0}},
    {"model": {"name": "beta_kenmotsu", "beta": 1.0, "colour": "red"}, "seed": 0, "command": "sqfi"},
    {"model": {"name": "f_kenmotsu"}, "seed": 0, "command": "sqfi"},
    {"model": {"name": "beta_kenmotsu", "beta": -1.0}, "seed": 0, "command": "sqfi"},
    {"model": {"name": "f_kenmotsu", "family": {"kind": "affine_exp",
               "params": {"a": -3, "b": 1, "c": 1}}}, "seed": 0, "command": "sqfi"},
])
def test_config_rejected(bad):
    with pytest.raises(ConfigError):
        cli.run(bad)


def test_main_config_error_exit(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({**H3, "command": "sqfi", "unknown": True}))
    assert cli.main(["--config", str(path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_main_missing_file():
    assert cli.main(["--config", "/nonexistent/run.json"]) == 2


# ---------------------------------------------------------------- examples

def test_parallel_dim_example():
    rep = cli.run({**H3, "command": "parallel-dim", "seed": 42})
    d = rep.as_dict()
    assert d["results"]["d"] == 1 and d["results"]["verdict"] == "irreducible"
    assert d["status"] == "pass" and rep.exit_code == 0


def test_flat_sqfi_example():
    rep = cli.run({"model": {"name": "flat", "m": 3}, "command": "sqfi", "seed": 1})
    assert rep.results["count"] == 6
    assert rep.as_dict()["results"]["count"] == 6


def test_soliton_example():
    rep = cli.run({"model": {"name": "beta_kenmotsu", "n": 2, "beta": 1.0},
                   "command": "soliton", "V": "xi", "seed": 7})
    assert rep.results["lambda_xi"] == pytest.approx(4.0, abs=1e-8)
    assert rep.results["class"] == "expanding"
    assert rep.passed


def test_soliton_custom_vector():
    rep = cli.run(cfg("soliton", V=["1", "0", "0"]))
    assert rep.results["lambda_xi"] == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        cli.run(cfg("soliton", V=["1", "0"]))


def test_custom_family_from_expressions():
    rep = cli.run({"model": {"name": "f_kenmotsu", "n": 1,
                             "family": {"kind": "custom", "f": "1 + 0.5*exp(-t)",
                                        "W": "t - 0.5*exp(-t)"}},
                   "command": "verify-identities", "seed": 3, "samples": 20})
    assert rep.passed and len(rep.checks) == 5


# ---------------------------------------------------------------- report

def test_determinism_bytes():
    a = cli.run(cfg("soliton")).to_json()
    b = cli.run(cfg("soliton")).to_json()
    assert a == b
    assert "wall_time" not in json.loads(a)


def test_keys_sorted_and_nonfinite_strings():
    text = cli.run({"model": {"name": "flat", "m": 3}, "command": "parallel-dim", "seed": 1}).to_json()
    data = json.loads(text)
    assert data["results"]["gap_ratio"] == "inf"
    assert text == json.dumps(data, sort_keys=True, indent=2) + "\n"


def test_check_failure_exit_code():
    rep = cli.run({"model": {"name": "f_kenmotsu", "family": {"kind": "affine_exp",
                   "params": {"a": 1, "b": 0.5, "c": -1}}},
                   "command": "verify-identities", "seed": 0, "samples": 20,
                   "tolerances": {"identity": 1e-30}})
    assert not rep.passed and rep.exit_code == 1


def test_numerical_error_exit_code():
    rep = cli.run(cfg("parallel-dim", tolerances={"gap": 1e30}))
    assert rep.checks["parallel-dim"]["error"] == "gap_too_small"
    assert rep.exit_code == 3


def test_precondition_failure_in_single_command():
    rep = cli.run({"model": {"name": "product_h2xr"}, "command": "swrs", "seed": 0, "samples": 5})
    assert rep.checks["swrs"]["error"] == "degenerate_ricci"
    assert rep.exit_code == 1


def test_all_skips_inapplicable():
    rep = cli.run({"model": {"name": "product_h2xr"}, "command": "all", "seed": 0,
                   "samples": 10, "geodesics": 2, "T": 2.0})
    assert {"swrs", "verify-identities"} <= set(rep.skipped)
    assert rep.passed and rep.exit_code == 0


def test_each_check_once():
    rep = cli.run(cfg("verify-structure"))
    with pytest.raises(RuntimeError):
        rep.check("structure.eta_xi", 0.0, 1.0)


def test_main_overrides_and_text(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg("sqfi")))
    out = tmp_path / "r.txt"
    code = cli.main(["--config", str(path), "--command", "verify-structure", "--seed", "5",
                     "--samples", "7", "--format", "text", "--out", str(out), "--timing"])
    assert code == 0
    text = out.read_text()
    assert "command=verify-structure" in text and "seed=5" in text
    assert "PASS structure.phi_squared" in text and "wall_time" in text
    assert capsys.readouterr().out == ""


def test_main_json_stdout(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg("conformal-fit", X="fiber_rotation")))
    assert cli.main(["--config", str(path)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["checks"]["conformal.affine_killing_c_zero"]["pass"]
    assert data["config"]["samples"] == 20
