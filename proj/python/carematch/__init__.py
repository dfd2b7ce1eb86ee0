"""Provider matching: queries compiled to CNF and answered by a CDCL solver."""

import json as _json

from . import _carematch

__all__ = ["CareMatchError", "default_schema", "parse_query", "match", "render_plain", "solve_dimacs", "bench"]


class CareMatchError(Exception):
    """Raised for query, catalog and solver errors. `code` is the error tag."""

    def __init__(self, code, message, **detail):
        super().__init__(message)
        self.code = code
        self.detail = detail


def _call(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _carematch.Error as e:
        info = _json.loads(str(e))
        raise CareMatchError(info.pop("code"), info.pop("message"), **info) from None


def _schema_text(schema):
    return None if schema is None else _json.dumps(schema)


def default_schema():
    return _json.loads(_carematch.default_schema())


def parse_query(text, schema=None):
    """Returns {"ast": ..., "text": canonical form}."""
    return _json.loads(_call(_carematch.parse_query, text, _schema_text(schema)))


def match(providers, query, schema=None, relax=True, seed=0):
    """Runs a query against a provider document (CSV or JSON text)."""
    if not isinstance(providers, str):
        providers = _json.dumps(providers)
    return _json.loads(_call(_carematch.match, providers, query, _schema_text(schema), relax, seed))


def render_plain(report):
    return _call(_carematch.render_plain, _json.dumps(report))


def solve_dimacs(text):
    """Returns (satisfiable, model) with the model as signed literals."""
    return _call(_carematch.solve_dimacs, text)


def bench(sizes, reps=5, providers=20, seed=7):
    return _call(_carematch.bench, list(sizes), reps, providers, seed)
