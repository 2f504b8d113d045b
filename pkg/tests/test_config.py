import math

import pytest
from hypothesis import given, strategies as st

from beatsim.config import (RB85_5G_BEAT_MHZ, RB_GAMMA_MHZ, ConfigError, RunConfig, Units,
                            load_config, parse_config)


def test_defaults_are_sample_trajectory_set():
    c = RunConfig()
    p = c.atom(c.omegas[0])
    assert (p.delta0, p.delta_e - p.delta_g) == (0.0, 0.5)
    assert c.omegas == (0.075, 0.125) and c.n_traj == 200


def test_full_config_parses():
    c = parse_config("""
[atom]
delta0 = 0.01
delta_g = 0.2
delta_e = 0.25
[drive]
omega = 0.05, 0.1 0.2
[simulation]
n_traj = 20
t_max = 300
grid_dt = 0.5
master_seed = 0x10
n_batches = 4
[spectrum]
window_tau = 150
zero_pad_factor = 4
window = hann
[validate]
identity_tol = 1e-11
[compare]
splits = 0.001, 0.01
[output]
directory = results
[annotations]
note = anything goes
""")
    assert c.omegas == (0.05, 0.1, 0.2)
    assert c.master_seed == 16 and c.window == "hann" and c.window_tau == 150.0
    assert c.splits == (0.001, 0.01) and c.output_dir == "results"
    assert c.annotations == {"note": "anything goes"}
    assert c.sweep_n == pytest.approx((0.0025, 0.01, 0.04))


def test_photon_numbers_map_to_drive():
    c = parse_config("[drive]\nphoton_numbers = 1, 4, 9\ncoupling_g = 0.05\n")
    assert c.omegas == pytest.approx((0.05, 0.1, 0.15))
    assert c.sweep_n == (1.0, 4.0, 9.0)


def test_mhz_units_and_preset():
    c = parse_config("[atom]\nunits = mhz\npreset = rb85_5g\n[drive]\nomega = 0.6\n")
    units = Units(RB_GAMMA_MHZ)
    assert c.omegas[0] == pytest.approx(0.6 / RB_GAMMA_MHZ)
    # bare beat 2 delta_g in cycles equals the Larmor beat
    assert units.cycles_to_mhz(2 * c.delta_g / (2 * math.pi)) == pytest.approx(RB85_5G_BEAT_MHZ)


@given(st.floats(1e-6, 1e3), st.floats(0.1, 100.0))
def test_unit_round_trip(value, gamma_mhz):
    u = Units(gamma_mhz)
    assert u.to_mhz(u.to_gamma(value)) == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("text,line,fragment", [
    ("[atom]\ndelta0 = 0\n\n[drive]\nomega = fast\n", 5, "cannot parse"),
    ("[atom]\nbogus = 1\n", 2, "unknown key"),
    ("[atom]\ndelta0 = 0\n[nonsense]\nx = 1\n", 3, "unknown section"),
    ("[simulation]\n\nmaster_seed = -4\n", 3, "cannot parse"),
    ("[atom]\nunits = furlongs\n", 2, "must be"),
    ("[drive]\nomega = 0.1\nphoton_numbers = 1\n", 2, "either"),
])
def test_diagnostics_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text, source="run.ini")
    assert f"run.ini:{line}" in str(err.value)
    assert fragment in str(err.value)


@pytest.mark.parametrize("text", [
    "[atom]\ndelta_g = -0.1\n",
    "[drive]\nomega = -0.1\n",
    "[simulation]\nn_traj = 0\n",
    "[simulation]\nt_max = nan\n",
    "[spectrum]\nwindow = kaiser\n",
    "[spectrum]\nwindow_tau = -5\n",
    "[atom\n",
])
def test_invalid_values(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")


def test_seed_required():
    with pytest.raises(ConfigError, match="master_seed"):
        RunConfig().require_seed()
    assert RunConfig(master_seed=5).require_seed() == 5


def test_digest_tracks_physics_only():
    a = RunConfig(master_seed=1)
    assert a.digest() == a.with_overrides(output_dir="elsewhere", threads=4).digest()
    assert a.digest() != a.with_overrides(master_seed=2).digest()
    assert a.digest() != a.with_overrides(delta_e=0.61).digest()


def test_shipped_configs_load(configs_dir):
    paths = sorted(configs_dir.glob("*.ini"))
    assert paths
    for path in paths:
        c = load_config(path)
        assert c.master_seed is not None
