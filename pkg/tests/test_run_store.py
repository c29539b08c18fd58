import json

import pytest

from gridforge.run_store import INDEX_FILE, RunStore


def test_register_and_list(tmp_path):
    store = RunStore(tmp_path)
    run_dir = store.run_dir("plan", case="star4", label="A")
    assert run_dir.parent == tmp_path
    assert run_dir.name == RunStore.generate_run_key("plan", case="star4", label="A")
    key = store.register("plan", run_dir, params={"case": "star4"}, summary={"label": "A"})
    store.register("verify", store.run_dir("verify", name="check"), summary={"passed": True})

    assert (run_dir / "summary.json").exists()
    assert (tmp_path / INDEX_FILE).exists()
    assert store.get(key)["dir"] == run_dir.name
    assert [r["key"] for r in store.list_runs("plan")] == [key]
    assert len(store.list_runs()) == 2
    assert len(store.list_runs(limit=1)) == 1
    assert store.stats() == {
        "total": 2,
        "kinds": {"schedule": 0, "plan": 1, "verify": 1, "compare": 0, "sweep": 0},
    }

    again = RunStore(tmp_path)
    assert again.get(key)["summary"] == {"label": "A"}


def test_same_params_same_dir(tmp_path):
    store = RunStore(tmp_path)
    assert store.run_dir("sweep", seed=1) == store.run_dir("sweep", seed=1)
    assert store.run_dir("sweep", seed=1) != store.run_dir("sweep", seed=2)


def test_unknown_kind(tmp_path):
    with pytest.raises(ValueError):
        RunStore(tmp_path).run_dir("training")


def test_remove(tmp_path):
    store = RunStore(tmp_path)
    run_dir = store.run_dir("plan", name="old")
    key = store.register("plan", run_dir)
    assert store.remove(key)
    assert not run_dir.exists()
    assert not store.remove(key)


def test_rebuild_after_corrupt_index(tmp_path):
    store = RunStore(tmp_path)
    store.register("compare", store.run_dir("compare", name="cmp"), summary={"same_builds": True})
    (tmp_path / INDEX_FILE).write_text("{not json", encoding="utf-8")

    recovered = RunStore(tmp_path)
    assert recovered.list_runs() == []
    assert recovered.rebuild() == 1
    entry = recovered.get("cmp")
    assert entry["kind"] == "compare"
    assert entry["summary"] == {"same_builds": True}
    assert json.loads((tmp_path / INDEX_FILE).read_text(encoding="utf-8"))["runs"]["cmp"]
