"""Validates shipped scenario specs and golden reports against the JSON schemas."""
import json
import pathlib
import sys

import jsonschema
from referencing import Registry, Resource

root = pathlib.Path(sys.argv[1])
schemas = {p.name: json.loads(p.read_text()) for p in (root / "schemas").glob("*.json")}
registry = Registry().with_resources(
    [(s["$id"], Resource.from_contents(s)) for s in schemas.values()]
    + [(name, Resource.from_contents(s)) for name, s in schemas.items()])
spec = jsonschema.Draft202012Validator(schemas["scenario_spec.v1.schema.json"], registry=registry)
report = jsonschema.Draft202012Validator(schemas["report.v1.schema.json"], registry=registry)

failures = 0
for path in sorted((root / "scenarios").glob("*.json")):
    for err in spec.iter_errors(json.loads(path.read_text())):
        print(f"{path.name}: {err.message}")
        failures += 1
for path in sorted((root / "tests" / "golden").glob("*.json")):
    for err in report.iter_errors(json.loads(path.read_text())):
        print(f"{path.name}: {err.message}")
        failures += 1
sys.exit(1 if failures else 0)
