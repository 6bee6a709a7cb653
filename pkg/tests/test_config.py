import numpy as np
import pytest

from viscolab.config import SCHEMA, SECTIONS_FOR, ParseError, ValidationError, parse_config
from viscolab.homogeneous import PiecewiseKappa, SinusoidalKappa
from viscolab.models import ModelKind

MINIMAL = "[run]\nmode = homogeneous\n"


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg["time.dt"] == 1e-3 and cfg["model.dim"] == 2 and cfg["model.epsilon"] == 0.5
    assert cfg.run_id == "run" and cfg.seed == 0
    np.testing.assert_array_equal(cfg.initial_conformation(), np.eye(2))
    sc = cfg.homogeneous_scenario()
    assert sc.t_end == 1.0 and not sc.kappa(0.3).any()


def test_epsilon_out_of_range_points_at_line():
    text = "[run]\nmode = homogeneous\n[model]\nepsilon = 1.5\n"
    with pytest.raises(ValidationError) as exc:
        parse_config(text, "bad.cfg")
    assert any("line 4" in p and "epsilon must lie in (0,1)" in p for p in exc.value.problems)
    assert str(exc.value).startswith("bad.cfg:")


def test_fenep_without_b():
    with pytest.raises(ValidationError, match="extensibility b"):
        parse_config("[run]\nmode = homogeneous\n[model]\nkind = fene-p\n")


def test_all_problems_are_reported_together():
    text = "[run]\nmode = homogeneous\nseed = -1\n[model]\nweissenberg = 0\n[time]\ndt = -1\n"
    with pytest.raises(ValidationError) as exc:
        parse_config(text)
    assert len(exc.value.problems) >= 3


@pytest.mark.parametrize("text, fragment, line", [
    ("[run]\nmode = homogeneous\nmode = channel\n", "duplicate key", 3),
    ("[run]\nmode = homogeneous\n[run]\n", "appears twice", 3),
    ("mode = homogeneous\n", "outside of any section", 1),
    ("[run]\nmode homogeneous\n", "cannot parse", 2),
    ("[run]\nmode = homogeneous\n[time]\ndt = fast\n", "time.dt", 4),
    ("[run]\nmode = homogeneous\n[time]\nrecord_stride = 2.5\n", "integer", 4),
    ("[run]\nmode = homogeneous\n[time]\nt_end = inf\n", "non-finite", 4),
    ("[run]\nmode = homogeneous\n[initial]\neigenvalues = 2\n", "array", 4),
])
def test_parse_errors_carry_location(text, fragment, line):
    with pytest.raises(ParseError) as exc:
        parse_config(text, "c.cfg")
    assert fragment in str(exc.value) and exc.value.line == line
    assert str(exc.value).startswith(f"c.cfg:{line}:")


def test_unknown_names_are_collected_with_other_problems():
    text = "[run]\nmode = homogeneous\n[bogus]\nx = 1\n[time]\nspeed = 1\ndt = -1\n"
    with pytest.raises(ValidationError) as exc:
        parse_config(text)
    probs = exc.value.problems
    assert "line 4: unknown section [bogus]" in probs and "line 6: unknown key time.speed" in probs
    assert any(p.startswith("line 7:") for p in probs)


def test_mode_rejects_unused_sections():
    text = "[run]\nmode = verify-inequalities\n[time]\ndt = 0.01\n"
    with pytest.raises(ValidationError, match=r"section \[time\] is not used"):
        parse_config(text)
    with pytest.raises(ValidationError, match="mode is required"):
        parse_config("[run]\nseed = 1\n")
    with pytest.raises(ValidationError, match="unknown mode"):
        parse_config("[run]\nmode = turbulence\n")


def test_sections_for_modes_are_known():
    for sections in SECTIONS_FOR.values():
        assert set(sections) <= set(SCHEMA)


def test_comments_case_and_whitespace():
    text = "# header\n[RUN]   # trailing\n  Mode =  Homogeneous  \nrun_id = MyRun\n"
    cfg = parse_config(text)
    assert cfg.mode == "homogeneous" and cfg.run_id == "MyRun"


def test_initial_from_eigenvalues_and_angle():
    text = MINIMAL + "[initial]\neigenvalues = [3, 1]\nangle = 0.7853981633974483\n"
    a = parse_config(text).initial_conformation()
    np.testing.assert_allclose(a, [[2, 1], [1, 2]], atol=1e-14)
    text = MINIMAL + "[initial]\nentries = [3, 1, 1]\n"
    np.testing.assert_array_equal(parse_config(text).initial_conformation(), [[3, 1], [1, 1]])


def test_initial_validation():
    for body, frag in [("entries = [1, 2, 1]", "not SPD"), ("eigenvalues = [1, -1]", "positive"),
                       ("eigenvalues = [1, 1, 1]", "needs 2"), ("entries = [1, 0, 1]\neigenvalues = [1, 1]", "either")]:
        with pytest.raises(ValidationError, match=frag):
            parse_config(MINIMAL + "[initial]\n" + body + "\n")
    with pytest.raises(ValidationError, match="below b"):
        parse_config("[run]\nmode = homogeneous\n[model]\nkind = fene-p\nb = 5\n[initial]\neigenvalues = [3, 3]\n")


def test_flow_schedules():
    cfg = parse_config(MINIMAL + "[flow]\nkappa = [0, 1, 0, 0]\n")
    assert cfg.kappa_schedule()(0.0)[0, 1] == 1.0
    cfg = parse_config(MINIMAL + "[flow]\nschedule = piecewise\ntimes = [0, 1]\nkappa = [0, 0, 0, 0, 0, 2, 0, 0]\n")
    k = cfg.kappa_schedule()
    assert isinstance(k, PiecewiseKappa) and k(1.5)[0, 1] == 2.0
    cfg = parse_config(MINIMAL + "[flow]\nschedule = sinusoidal\namplitude = [0, 1, 0, 0]\nfrequency = 0.5\n")
    k = cfg.kappa_schedule()
    assert isinstance(k, SinusoidalKappa) and cfg["flow.phase"] == 0.0


@pytest.mark.parametrize("body, frag", [
    ("kappa = [1, 0, 0, 0]", "traceless"),
    ("kappa = [0, 1, 0]", "needs 4"),
    ("schedule = piecewise\ntimes = [1, 2]\nkappa = [0, 0, 0, 0, 0, 0, 0, 0]", "start at 0"),
    ("schedule = sinusoidal\namplitude = [0, 1, 0, 0]", "frequency"),
    ("frequency = 2", "only used by the sinusoidal"),
    ("times = [0]", "only used by the piecewise"),
    ("schedule = zigzag", "schedule must be"),
])
def test_flow_validation(body, frag):
    with pytest.raises(ValidationError, match=frag):
        parse_config(MINIMAL + "[flow]\n" + body + "\n")


def test_micro_macro_constraints():
    base = "[run]\nmode = micro-macro\n"
    cfg = parse_config(base)
    assert cfg["ensemble.n_particles"] == 100_000 and cfg["ensemble.n_repeats"] == 8
    with pytest.raises(ValidationError, match="0.1"):
        parse_config(base + "[time]\ndt = 0.5\n")
    with pytest.raises(ValidationError, match="oldroyd-b"):
        parse_config(base + "[model]\nkind = fene-p\nb = 10\n")


def test_channel_config_builder():
    cfg = parse_config("[run]\nmode = channel\nseed = 4\n[channel]\nny = 33\n[time]\nt_end = 0.1\n")
    cc = cfg.channel_config()
    assert cc.ny == 33 and cc.seed == 4 and cc.a_field == "random"
    with pytest.raises(ValidationError, match="dim = 2"):
        parse_config("[run]\nmode = channel\n[model]\ndim = 3\n")
    with pytest.raises(ValidationError, match="below b"):
        parse_config("[run]\nmode = channel\n[model]\nkind = fene-p\nb = 5\n[channel]\na_eig_range = [1, 3]\n")


def test_model_kind_aliases_are_canonicalised():
    cfg = parse_config("[run]\nmode = homogeneous\n[model]\nkind = FENEP\nb = 10\n")
    assert cfg.model_params().kind is ModelKind.FENE_P
    assert "kind = fene-p" in cfg.to_text()
    with pytest.raises(ValidationError, match="unknown model kind"):
        parse_config("[run]\nmode = homogeneous\n[model]\nkind = giesekus\n")


@pytest.mark.parametrize("text", [
    MINIMAL,
    "[run]\nmode = homogeneous\nrun_id = shear\nseed = 3\n[model]\nweissenberg = 0.1\n"
    "[initial]\neigenvalues = [1.2, 1.2]\n[flow]\nkappa = [0, 1, 0, 0]\n[time]\ndt = 1e-4\nt_end = 20\n",
    "[run]\nmode = channel\n[channel]\na_field = uniform\na_entries = [2, 0.5, 1]\n",
    "[run]\nmode = micro-macro\n[flow]\nschedule = sinusoidal\namplitude = [0, 0.3, 0, 0]\nfrequency = 1\n",
    "[run]\nmode = verify-inequalities\n[verify]\nn_samples = 10\nb_values = [4.5]\n",
])
def test_round_trip_is_byte_identical(text):
    once = parse_config(text).to_text()
    assert parse_config(once).to_text() == once
    assert parse_config(once).values == parse_config(text).values


def test_with_seed_leaves_original_untouched():
    cfg = parse_config(MINIMAL)
    other = cfg.with_seed(9)
    assert other.seed == 9 and cfg.seed == 0
    assert "seed = 9" in other.to_text()


def test_verify_validation():
    with pytest.raises(ValidationError, match="exceed the largest dim"):
        parse_config("[run]\nmode = verify-inequalities\n[verify]\nb_values = [2]\n")
    with pytest.raises(ValidationError, match="subset"):
        parse_config("[run]\nmode = verify-inequalities\n[verify]\ndims = [4]\n")


def test_shipped_configs_parse_and_round_trip():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))
    assert len(paths) >= 5
    for p in paths:
        cfg = parse_config(p.read_text(), str(p))
        assert parse_config(cfg.to_text()).to_text() == cfg.to_text()
