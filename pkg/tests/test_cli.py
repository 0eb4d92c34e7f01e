"""Command line interface, exercised through main() in-process."""

import json

import pytest

from eventcast.cli import main
from eventcast.gateway import ChatMessage, GenerationParams, MockBackend, prompt_digest
from eventcast.imagefunc import load_template


def synth(tmp_path, name="data", queries=16, seed=3):
    out = tmp_path / name
    code = main([
        "synth", "--out", str(out),
        "--entities", "40", "--days", "40", "--events-per-day", "4",
        "--queries", str(queries), "--noise-annotations", "4", "--seed", str(seed),
    ])
    assert code == 0
    return out


def run_cmd(dataset, out, extra=()):
    return main([
        "run", "--dataset", str(dataset), "--out", str(out),
        "--backend", "mock", "--mock-responder", "support", *extra,
    ])


def test_synth_then_ingest(tmp_path, capsys):
    data = synth(tmp_path)
    capsys.readouterr()
    assert main(["ingest", "--dataset", str(data)]) == 0
    out = capsys.readouterr().out
    assert "events=" in out
    assert "dataset_digest=" in out


def test_run_writes_report(tmp_path, capsys):
    data = synth(tmp_path)
    out = tmp_path / "both"
    assert run_cmd(data, out) == 0
    printed = capsys.readouterr().out
    assert "accuracy=" in printed
    summary = json.loads((out / "summary.json").read_text())
    assert summary["counts"]["total"] == 16
    assert (out / "records.jsonl").exists()


def test_full_ablation_and_compare(tmp_path, capsys):
    data = synth(tmp_path)
    both, none = tmp_path / "both", tmp_path / "none"
    assert run_cmd(data, both) == 0
    assert run_cmd(data, none, extra=("--function-mode", "none")) == 0
    capsys.readouterr()

    json_out = tmp_path / "comparison.json"
    code = main(["compare", str(both / "summary.json"), str(none / "summary.json"),
                 "--json", str(json_out)])
    assert code == 0
    table = capsys.readouterr().out
    assert "function_mode" in table
    assert "both" in table and "none" in table

    comparison = json.loads(json_out.read_text())
    assert comparison["rows"][0]["delta"] > 0  # evidence helps


def test_compare_mismatched_digests_exits_two(tmp_path, capsys):
    a = synth(tmp_path, "a", seed=3)
    b = synth(tmp_path, "b", seed=4)
    out_a, out_b = tmp_path / "ra", tmp_path / "rb"
    assert run_cmd(a, out_a) == 0
    assert run_cmd(b, out_b) == 0
    capsys.readouterr()
    code = main(["compare", str(out_a / "summary.json"), str(out_b / "summary.json")])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_record_then_replay_reproduces_accuracy(tmp_path, capsys):
    data = synth(tmp_path)
    log = tmp_path / "calls.jsonl"
    first, second = tmp_path / "r1", tmp_path / "r2"
    assert run_cmd(data, first, extra=("--replay-log", str(log))) == 0
    assert main([
        "run", "--dataset", str(data), "--out", str(second),
        "--backend", "replay", "--replay-from", str(log),
    ]) == 0
    s1 = json.loads((first / "summary.json").read_text())
    s2 = json.loads((second / "summary.json").read_text())
    assert s1["accuracy"] == s2["accuracy"]
    assert s1["counts"] == s2["counts"]


def test_annotate_with_scripted_mock(tmp_path, capsys):
    data = synth(tmp_path, queries=8)
    # Script every identification prompt to answer "irrelevant".
    store_args = ["ingest", "--dataset", str(data)]
    assert main(store_args) == 0
    capsys.readouterr()

    from eventcast.store import ingest as ingest_fn

    store = ingest_fn(data / "events.jsonl", data / "subevents.jsonl", None,
                      articles_path=data / "articles.jsonl")
    template = load_template("identification")
    script = {}
    for art in store.articles.values():
        text = f"{template}\n\nNews title: {art.title}\nNews content: {art.body}"
        for image_uid in art.image_uids:
            from eventcast.imagefunc import ImageRef

            messages = [ChatMessage("user", text, (ImageRef(image_uid),))]
            script[prompt_digest(messages, GenerationParams(), "default")] = "irrelevant"
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps(script))

    out = tmp_path / "annotations-out.jsonl"
    code = main([
        "annotate", "--dataset", str(data), "--out", str(out),
        "--backend", "mock", "--mock-script", str(script_path),
        "--cache", str(tmp_path / "cache.jsonl"),
    ])
    assert code == 0
    printed = capsys.readouterr().out
    assert "(0 usable)" in printed
    lines = out.read_text().splitlines()
    assert lines
    assert all(json.loads(l)["function"] == "irrelevant" for l in lines)


def test_missing_dataset_exits_two(tmp_path, capsys):
    code = main(["run", "--dataset", str(tmp_path / "nope"),
                 "--backend", "mock", "--mock-responder", "fixed"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_mode_rejected_by_argparse(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--dataset", "x", "--mode", "osmosis"])
