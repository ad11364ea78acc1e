import json
import math
import pathlib

import pytest

import sdrbed

DATA = pathlib.Path(__file__).resolve().parents[2] / "data"


def test_default_inventory_matches_shipped_document():
    inv = sdrbed.default_inventory()
    assert inv == json.loads((DATA / "inventory.json").read_text())
    assert len(inv["compute_nodes"]) == 10
    assert sdrbed.capacity_summary()["total_cores"] == 240


def test_validation_errors_carry_kind_and_field():
    with pytest.raises(sdrbed.SdrbedError) as info:
        sdrbed.validate_inventory({"compute_nodes": 3})
    name, _message, _field = info.value.args
    assert name == "ValidationError"


def test_throughput_bottleneck():
    assert sdrbed.throughput_check(200e6, "SC16", 1) == (True, 6.4e9)
    assert sdrbed.throughput_check(200e6, "SC16", 2) == (False, 12.8e9)
    assert sdrbed.throughput_check(320e6, "SC8", 1) == (True, 5.12e9)


def test_free_space_loss():
    assert abs(sdrbed.fspl_db(100, 2.4e9) - 80.05) <= 0.01
    assert abs(sdrbed.fspl_db(200, 2.4e9) - sdrbed.fspl_db(100, 2.4e9) - 20 * math.log10(2)) < 1e-9


def test_attenuation_matrix_from_scenario():
    sc = json.loads((DATA / "scenario_example.json").read_text())
    m = sdrbed.attenuation_at(sc, 0.0)
    ids = m["ids"]
    a, b = ids.index("usrp-a"), ids.index("usrp-b")
    assert m["a_db"][a][b] == pytest.approx(sdrbed.fspl_db(30, 2.4e9))


def test_roundtrip_meets_limits():
    slots = sdrbed.roundtrip_trial(3, 1 << 16, 7)
    assert len(slots) == 3
    assert all(s["evm_dbc"] <= -40 and s["leakage_dbc"] <= -50 for s in slots)


def test_cli_in_process():
    code, out, _ = sdrbed.run_cli("throughput", "--rate", "200e6", "--streams", "2")
    assert code == 0 and out.startswith("Exceeds")
    code, _, err = sdrbed.run_cli("no-such-command")
    assert code == 2 and "UsageError" in err


def test_sha256():
    assert sdrbed.sha256_hex(b"abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
