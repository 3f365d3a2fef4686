import json
import pytest

from app.errors import ConfigError
from app.config import RunConfig, load_run_config, resolve_run_config, settings
from app.storage import canonical_json, dumps_csv, output_guard, read_jsonl, write_jsonl


def test_missing_path_gives_empty_config():
    assert load_run_config(None) == RunConfig()


def test_toml_subcommand_table_overrides_shared_keys(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 3\njobs = 2\n\n[train-splitter]\nseed = 11\ngroups = "all"\n', encoding="utf-8")
    assert load_run_config(path, "train-splitter") == RunConfig(seed=11, jobs=2, groups="all")
    assert load_run_config(path, "ablate") == RunConfig(seed=3, jobs=2)


def test_json_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"docs": 20, "gen": {"mean_words": 800}}), encoding="utf-8")
    assert load_run_config(path, "gen") == RunConfig(docs=20, mean_words=800)


@pytest.mark.parametrize("name, content", [
    ("run.yaml", "seed: 3"),
    ("run.toml", "seed = "),
    ("run.toml", "colour = 3"),
    ("run.toml", "jobs = 0"),
    ("run.json", "[1, 2]"),
])
def test_bad_config_files(tmp_path, name, content):
    path = tmp_path / name
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(path, "gen")


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.toml")


def test_flags_beat_file_beat_settings(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("seed = 3\nl2_lambda = 0.5\n", encoding="utf-8")
    config = resolve_run_config(path, "train-splitter", {"seed": 21, "jobs": None})
    assert config.seed == 21
    assert config.l2_lambda == 0.5
    assert config.jobs == settings.jobs
    assert config.max_iterations == settings.crf_max_iterations


def test_invalid_flag_value_is_a_config_error():
    with pytest.raises(ConfigError):
        resolve_run_config(None, "gen", {"jobs": 0})


def test_canonical_json_is_order_independent():
    assert canonical_json({"b": 1, "a": [1, 2]}) == canonical_json({"a": [1, 2], "b": 1}) == '{"a":[1,2],"b":1}'


def test_jsonl_and_csv(tmp_path):
    path = tmp_path / "nested" / "records.jsonl"
    write_jsonl(path, [{"a": 1}, {"b": "é"}])
    assert read_jsonl(path) == [{"a": 1}, {"b": "é"}]
    assert dumps_csv(["x", "y"], [[1, "a,b"]]) == 'x,y\n1,"a,b"\n'


def test_output_guard_removes_fresh_outputs_on_failure(tmp_path):
    existing = tmp_path / "keep.json"
    existing.write_text("{}", encoding="utf-8")
    fresh_file = tmp_path / "new.json"
    fresh_dir = tmp_path / "out"

    with pytest.raises(RuntimeError):
        with output_guard(existing, fresh_file, fresh_dir, None):
            existing.write_text('{"changed": true}', encoding="utf-8")
            fresh_file.write_text("{}", encoding="utf-8")
            fresh_dir.mkdir()
            (fresh_dir / "part.json").write_text("{}", encoding="utf-8")
            raise RuntimeError("boom")

    assert existing.exists()
    assert not fresh_file.exists()
    assert not fresh_dir.exists()


def test_output_guard_keeps_outputs_on_success(tmp_path):
    target = tmp_path / "done.json"
    with output_guard(target):
        target.write_text("{}", encoding="utf-8")
    assert target.exists()
