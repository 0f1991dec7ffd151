import json
import shutil

import pytest

from conftest import GOLDEN
from regwatch.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(out):
    return json.loads(out.strip().splitlines()[-1])


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_ingest_clean(capsys, tmp_path, fixtures):
    code, out, _ = run(capsys, "ingest", str(fixtures / "fetch_clean"), "--out", str(tmp_path / "a"))
    assert code == 0
    assert report(out)["articles_processed"] == 3
    assert len(list((tmp_path / "a").glob("*.json"))) == 3


def test_ingest_since_filters(capsys, tmp_path, fixtures):
    code, out, _ = run(capsys, "ingest", str(fixtures / "fetch_clean"), "--since", "2020-02-01",
                       "--out", str(tmp_path / "a"))
    assert (code, report(out)["articles_processed"]) == (0, 1)


def test_ingest_mixed(capsys, tmp_path, fixtures):
    code, out, err = run(capsys, "ingest", str(fixtures / "fetch_mixed"), "--out", str(tmp_path / "a"))
    data = report(out)
    assert code == 0
    assert data["articles_processed"] == 3
    assert len(data["diagnostics"]) == 1
    assert "2020-00004" in err


def test_ingest_unreachable(capsys, tmp_path):
    code, out, err = run(capsys, "ingest", "http://127.0.0.1:9/api", "--out", str(tmp_path / "a"))
    assert code == 2
    assert out == ""
    assert "SourceUnavailable" in err


def test_extract_golden_matches_gold(capsys, tmp_path):
    code, out, _ = run(capsys, "extract", str(GOLDEN / "articles"), "--out", str(tmp_path / "inst"))
    assert code == 0
    assert report(out)["instances_written"] == 10
    assert tree(tmp_path / "inst") == tree(GOLDEN / "gold")


def test_extract_jobs_and_jsonl(capsys, tmp_path):
    run(capsys, "extract", str(GOLDEN / "articles"), "--out", str(tmp_path / "a.jsonl"))
    run(capsys, "--jobs", "4", "extract", str(GOLDEN / "articles"), "--out", str(tmp_path / "b.jsonl"))
    lines = (tmp_path / "a.jsonl").read_bytes()
    assert lines == (tmp_path / "b.jsonl").read_bytes()
    assert lines.count(b"\n") == 10


def test_extract_empty_dir(capsys, tmp_path):
    (tmp_path / "empty").mkdir()
    code, out, _ = run(capsys, "extract", str(tmp_path / "empty"), "--out", str(tmp_path / "inst"))
    data = report(out)
    assert (code, data["articles_processed"], data["mean_summarization_ratio"]) == (0, 0, None)


def test_extract_bad_article_is_diagnosed(capsys, tmp_path):
    src = tmp_path / "src"
    shutil.copytree(GOLDEN / "articles", src)
    (src / "broken.json").write_text("{")
    code, out, err = run(capsys, "extract", str(src), "--out", str(tmp_path / "inst"))
    assert code == 0
    assert report(out)["instances_written"] == 10
    assert "broken.json" in err


def test_extract_bad_config(capsys, tmp_path):
    (tmp_path / "c.json").write_text("[1]")
    code, _, err = run(capsys, "--config", str(tmp_path / "c.json"), "extract", str(GOLDEN / "articles"),
                       "--out", str(tmp_path / "inst"))
    assert code == 2 and "regwatch:" in err


def test_graph_build_merge_query(capsys, tmp_path, fixtures):
    graph = str(tmp_path / "g.tsv")
    code, out, _ = run(capsys, "graph", "build", str(fixtures / "nic_12.csv"), "--graph", graph)
    data = report(out)
    assert (code, data["nodes_total"], data["edges_total"]) == (0, 12, 15)
    assert sum(d.startswith("DanglingParent") for d in data["diagnostics"]) == 1

    code, out, _ = run(capsys, "graph", "merge", str(GOLDEN / "gold"), "--graph", graph)
    first = report(out)
    assert code == 0 and first["edges_added"] > 0
    code, out, _ = run(capsys, "graph", "merge", str(GOLDEN / "gold"), "--graph", graph)
    assert (report(out)["nodes_added"], report(out)["edges_added"]) == (0, 0)

    code, out, _ = run(capsys, "graph", "query", "* HELD_BY rssd:2002", "--graph", graph)
    assert code == 0
    assert out.splitlines() == ["rssd:1001\tHELD_BY\trssd:2002", "rssd:1002\tHELD_BY\trssd:2002"]

    code, out, _ = run(capsys, "graph", "query", "rssd:3001 BRANCH_OF REGULATED_BY *", "--graph", graph)
    assert out.splitlines() == ["rssd:3001\tBRANCH_OF\trssd:1001\tREGULATED_BY\trssd:9001"]

    code, _, err = run(capsys, "graph", "query", "* *", "--graph", graph)
    assert code == 2


def test_graph_truncated_file(capsys, tmp_path, fixtures):
    graph = tmp_path / "g.tsv"
    run(capsys, "graph", "build", str(fixtures / "nic_12.csv"), "--graph", str(graph))
    graph.write_text(graph.read_text().rsplit("\t", 1)[0])
    code, _, err = run(capsys, "graph", "query", "* * *", "--graph", str(graph))
    assert code == 2 and "MalformedInput" in err


def test_notify_golden(capsys, tmp_path, fixtures):
    out_file = tmp_path / "alerts.jsonl"
    code, out, _ = run(capsys, "notify", str(GOLDEN / "gold"), "--rules", str(fixtures / "rules_golden.txt"),
                       "--out", str(out_file))
    assert (code, report(out)["alerts_emitted"]) == (0, 4)
    assert [json.loads(l)["article_id"] for l in out_file.read_text().splitlines()] == [
        "2019-00519", "2019-00758", "2019-00925", "2019-00101"]


def test_notify_empty_rules(capsys, tmp_path):
    (tmp_path / "r.txt").write_text("# none\n")
    code, out, _ = run(capsys, "notify", str(GOLDEN / "gold"), "--rules", str(tmp_path / "r.txt"),
                       "--out", str(tmp_path / "a.jsonl"))
    assert (code, report(out)["alerts_emitted"]) == (0, 0)
    assert (tmp_path / "a.jsonl").read_text() == ""


def test_notify_cyclic_taxonomy(capsys, tmp_path, fixtures):
    code, out, err = run(capsys, "notify", str(GOLDEN / "gold"), "--rules", str(fixtures / "rules_golden.txt"),
                         "--taxonomy", str(fixtures / "taxonomy_cycle.tsv"), "--out", str(tmp_path / "a.jsonl"))
    assert code == 2 and "CycleDetected" in err


def test_notify_role_subscription(capsys, tmp_path, fixtures):
    (tmp_path / "r.txt").write_text('subscriber ops role "bank regulator" threshold 0.9\n')
    out_file = tmp_path / "a.jsonl"
    code, out, _ = run(capsys, "notify", str(GOLDEN / "gold"), "--rules", str(tmp_path / "r.txt"),
                       "--taxonomy", str(fixtures / "taxonomy.tsv"), "--out", str(out_file))
    assert code == 0
    # bank: best match bank (1); regulator: best match comptroller, LCS regulator at depth 3 -> 6/7.
    [alert] = [json.loads(l) for l in out_file.read_text().splitlines()]
    assert (alert["article_id"], alert["reason"], alert["score"]) == ("2019-00890", "SIMILARITY", "13/14")


def test_watch_single_poll(capsys, tmp_path, fixtures):
    argv = ["watch", str(fixtures / "fetch_mixed"), "--articles", str(tmp_path / "a"),
            "--instances", str(tmp_path / "i"), "--iterations", "1", "--interval", "0"]
    code, out, _ = run(capsys, *argv)
    assert (code, report(out)["instances_written"]) == (0, 3)
    code, out, _ = run(capsys, *argv)
    assert report(out)["instances_written"] == 0  # already seen


@pytest.mark.parametrize("argv", [
    lambda t, f: ["ingest", str(f / "fetch_mixed"), "--out", str(t / "o")],
    lambda t, f: ["extract", str(GOLDEN / "articles"), "--out", str(t / "o")],
    lambda t, f: ["graph", "build", str(f / "nic_12.csv"), "--graph", str(t / "o")],
    lambda t, f: ["notify", str(GOLDEN / "gold"), "--rules", str(f / "rules_golden.txt"), "--out", str(t / "o")],
])
def test_commands_are_deterministic(capsys, tmp_path, fixtures, argv):
    outputs = []
    for i in range(2):
        base = tmp_path / str(i)
        base.mkdir()
        code, out, err = run(capsys, *argv(base, fixtures))
        target = base / "o"
        files = tree(target) if target.is_dir() else target.read_bytes()
        outputs.append((code, out, err, files))
    assert outputs[0] == outputs[1]
