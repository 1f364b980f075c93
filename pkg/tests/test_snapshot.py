import json

import pytest

from mom.abstraction import temporal_abstraction
from mom.consolidation import ModelVersion
from mom.errors import SnapshotError
from mom.kernel import EdgeKind as K, ElementKind as EK
from mom.methods import parse_method, register_method
from mom.snapshot import dumps, graphs_equal, load, loads, save
from mom.story import replay


def test_round_trip_preserves_everything(david, tmp_path):
    graph, ep = david
    register_method(graph, parse_method("method twice(x:Any) = (mul x 2)", graph))
    graph.versions = [ModelVersion("v", (), 3, 1)]
    replay(ep, graph)
    text = dumps(graph, [ep])
    path = tmp_path / "snap.json"
    save(path, graph, [ep])
    g2, eps = load(path)
    assert dumps(g2, eps) == text
    assert graphs_equal(graph, g2)
    assert eps == [ep]
    assert replay(eps[0], g2) == replay(ep, graph)
    assert g2.add_element(EK.OBJECT, "new") == graph.next_element_id


def test_removed_ids_stay_retired(graph):
    a = graph.add_element(EK.OBJECT, "a")
    b = graph.add_element(EK.OBJECT, "b")
    graph.remove_element(a)
    g2, _ = loads(dumps(graph))
    assert sorted(g2.elements) == [b]
    assert g2.add_element(EK.OBJECT, "c") == 2


def test_transient_classes_are_not_saved(graph):
    fly = graph.add_element(EK.ACTION, "fly")
    a, b = graph.add_element(EK.OBJECT, "A", 1), graph.add_element(EK.OBJECT, "B", 1)
    for c in (a, b):
        graph.add_edge(c, fly, K.ADMISSIBLE_ACTION)
    temp = temporal_abstraction(graph, [a, b], name="Flier")
    data = json.loads(dumps(graph))
    assert temp not in {e["id"] for e in data["elements"]}
    assert all(temp not in (e["src"], e["dst"]) for e in data["edges"])


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format_version=99),
    lambda d: d.pop("elements"),
    lambda d: d["elements"].append(dict(d["elements"][0])),
    lambda d: d["edges"].append({**d["edges"][0], "id": 999, "src": 12345}),
    lambda d: d["counters"].update(element=0),
    lambda d: d["bindings"].append([0, "nosuch"]),
])
def test_malformed_snapshots_rejected(david, mutate):
    graph, ep = david
    data = json.loads(dumps(graph, [ep]))
    mutate(data)
    with pytest.raises(SnapshotError):
        loads(json.dumps(data))


def test_not_json_reports_position():
    with pytest.raises(SnapshotError) as info:
        loads('{"a": 1,\n  oops}')
    assert info.value.line == 2


def test_missing_file(tmp_path):
    with pytest.raises(SnapshotError):
        load(tmp_path / "absent.json")
