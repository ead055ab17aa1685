import json
import os
import sys
from pathlib import Path

import pytest


@pytest.fixture(scope="session")
def core():
    module_dir = os.environ.get("DFLEARN_MODULE_DIR")
    if module_dir:
        sys.path.insert(0, module_dir)
    try:
        import _core
    except ImportError as exc:  # pragma: no cover
        pytest.skip(f"_core extension not importable: {exc}")
    return _core


@pytest.fixture(scope="session")
def source_dir():
    path = os.environ.get("DFLEARN_SOURCE_DIR")
    if not path:
        pytest.skip("DFLEARN_SOURCE_DIR not set")
    return Path(path)


@pytest.fixture(scope="session")
def cli_path():
    path = os.environ.get("DFLEARN_CLI")
    if not path or not Path(path).exists():
        pytest.skip("DFLEARN_CLI not set")
    return path


@pytest.fixture(scope="session")
def validator(source_dir):
    """Returns validate(instance, schema_file) against the shipped schemas."""
    import jsonschema
    from referencing import Registry, Resource

    schema_dir = source_dir / "schemas"
    schemas = {}
    resources = []
    for path in sorted(schema_dir.glob("*.schema.json")):
        schema = json.loads(path.read_text())
        schemas[path.name] = schema
        resource = Resource.from_contents(schema)
        resources.append((path.name, resource))
        if "$id" in schema:
            resources.append((schema["$id"], resource))
    registry = Registry().with_resources(resources)

    def validate(instance, schema_file):
        jsonschema.Draft7Validator(schemas[schema_file], registry=registry).validate(instance)

    validate.known = set(schemas)
    return validate
