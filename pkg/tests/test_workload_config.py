from __future__ import annotations

import numpy as np
import pytest

from edgechain.config import (
    ConfigError,
    ExperimentConfig,
    RequestsPerSlot,
    dump_config,
    from_document,
    load_config,
    parse_beta_values,
)
from edgechain.workload import build_fleet, generate_batch, generate_workload, streams

SMALL = ExperimentConfig(timeslots=30)


def test_shipped_config_equals_defaults():
    assert load_config("configs/default.yaml") == ExperimentConfig()


def test_dump_roundtrip(tmp_path):
    cfg = SMALL.with_(beta=2.0, seeds=(7, 8))
    dump_config(cfg, tmp_path / "c.yaml")
    assert load_config(tmp_path / "c.yaml") == cfg


def test_level4_ranges_respected():
    cfg = SMALL.with_(level_weights=(0.0, 0.0, 0.0, 1.0))
    fleet, wl = generate_workload(cfg, 3)
    assert wl.n_requests > 0 and set(wl.level.tolist()) == {4}
    assert wl.demand.min() >= 1 and wl.demand.max() <= 3
    assert wl.lifetime.min() >= 1 and wl.lifetime.max() <= 3
    assert np.all(wl.demand == np.round(wl.demand))


def test_workload_deterministic():
    _, a = generate_workload(SMALL, 11)
    _, b = generate_workload(SMALL, 11)
    _, c = generate_workload(SMALL, 12)
    assert a.request_ids == b.request_ids and np.array_equal(a.demand, b.demand)
    assert a.request_ids != c.request_ids


def test_constant_zero_batches():
    cfg = SMALL.with_(requests_per_slot=RequestsPerSlot("constant", 0, 0))
    rngs = streams(1)
    fleet = build_fleet(cfg, rngs["fleet"])
    assert generate_batch(rngs["requests"], cfg.profiles, 0, fleet, cfg.requests_per_slot) == []
    _, wl = generate_workload(cfg, 1)
    assert wl.n_requests == 0 and wl.batch(5, fleet) == []


def test_batch_reconstruction():
    fleet, wl = generate_workload(SMALL, 2)
    batch = wl.batch(4, fleet)
    assert len(batch) == wl.slot_ptr[5] - wl.slot_ptr[4]
    assert all(r.arrival == 4 for r in batch)


def test_scaled_capacity_is_exact():
    assert SMALL.with_(resource_scale=0.4).total == (120.0, 100.0, 100.0, 100.0)
    assert SMALL.with_(resource_scale=0.6).total == (180.0, 150.0, 150.0, 150.0)


@pytest.mark.parametrize("doc,key", [
    ({"system": {"capacity": [1, 1, 1, 1]}}, "system.alpha"),
    ({"system": {"alpha": 100}}, "system.capacity"),
    ({"system": {"alpha": 1, "capacity": [1, 1, 1, 1]}}, "system.alpha"),
    ({"system": {"alpha": 100, "capacity": [1, 1, 1, 1]}, "scheduler": "Lottery"}, "scheduler"),
    ({"system": {"alpha": 100, "capacity": [1, 1, 1, 1]}, "bogus": 1}, "bogus"),
    ({"system": {"alpha": 100, "capacity": [1, 1, 1, 1]}, "seed": 1, "seeds": [1]}, "seed"),
])
def test_config_errors_name_the_key(doc, key):
    with pytest.raises(ConfigError) as exc:
        from_document(doc)
    assert exc.value.key == key


def test_beta_values_forms():
    assert parse_beta_values({"start": 1.0, "stop": 1.2, "step": 0.1}) == (1.0, 1.1, 1.2)
    assert parse_beta_values([1, 2]) == (1.0, 2.0)
    with pytest.raises(ConfigError):
        parse_beta_values([])


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")
