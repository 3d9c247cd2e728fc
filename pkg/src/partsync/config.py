"""JSON configuration files for networks and simulation scenarios.

A network file::

    {"graph": {"k": 3, "edges": [[1, 2], [1, 3], [2, 3]]},
     "n": 3, "space": "SOn",
     "refs": [[1, 0, 0], [0, 0, 1], [0, 1, 0]]}

``refs`` follows the order of ``graph.edges``; vertices are 1-based. A
scenario adds ``flow``, ``init`` and optionally ``perturbations`` and
``output``; see :data:`SCENARIO_SCHEMA`. Files are validated against the
schema before anything is built.
"""
import json

import jsonschema
import numpy as np

from .dynamics import KINDS, METHODS, FlowSpec, perturb_states
from .graph import Graph
from .liegroup import random_rotation
from .network import NetworkConfig, TimeVaryingRefs, sample_perturbations

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 1}

GRAPH_SCHEMA = {
    "type": "object",
    "required": ["k", "edges"],
    "properties": {
        "k": {"type": "integer", "minimum": 1},
        "edges": {"type": "array", "items": {
            "type": "array", "items": {"type": "integer", "minimum": 1},
            "minItems": 2, "maxItems": 2}},
    },
}

TIME_VARYING_SCHEMA = {
    "type": "object",
    "required": ["centers", "amplitudes", "frequencies", "phases"],
    "properties": {
        "mode": {"enum": ["anchors", "edges"]},
        "centers": _matrix,
        "amplitudes": {"type": "array"},
        "frequencies": {"type": "array"},
        "phases": {"type": "array"},
    },
}

NETWORK_SCHEMA = {
    "type": "object",
    "required": ["graph", "n"],
    "properties": {
        "graph": GRAPH_SCHEMA,
        "n": {"type": "integer", "minimum": 1, "maximum": 16},
        "space": {"enum": ["SOn", "Rn"]},
        "refs": _matrix,
        "normalize": {"type": "boolean"},
        "time_varying": TIME_VARYING_SCHEMA,
    },
    "oneOf": [{"required": ["refs"]}, {"required": ["time_varying"]}],
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["network", "flow"],
    "properties": {
        "network": NETWORK_SCHEMA,
        "flow": {
            "type": "object",
            "required": ["kind", "T"],
            "properties": {
                "kind": {"enum": list(KINDS)},
                "T": {"type": "number", "minimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": sorted(METHODS)},
                "record_every": {"type": "integer", "minimum": 1},
            },
        },
        "init": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["haar", "near_consensus", "consensus", "gaussian", "explicit"]},
                "seed": {"type": "integer", "minimum": 0},
                "spread": {"type": "number", "minimum": 0},
                "states": {"type": "array"},
            },
        },
        "perturbations": {
            "type": "object",
            "required": ["bound"],
            "properties": {
                "bound": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "low": {"type": "number", "minimum": 0, "maximum": 1},
                "high": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "output": {"type": "string"},
    },
}


class ConfigError(ValueError):
    """Schema violation or inconsistent configuration."""


def _validate(obj, schema):
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def network_from_dict(obj):
    """Validate and build a :class:`NetworkConfig`."""
    _validate(obj, NETWORK_SCHEMA)
    try:
        G = Graph.from_json(obj["graph"])
        n = int(obj["n"])
        space = obj.get("space", "SOn")
        if "time_varying" in obj:
            tv = obj["time_varying"]
            gen = TimeVaryingRefs(tv["centers"], tv["amplitudes"], tv["frequencies"],
                                  tv["phases"], tv.get("mode", "anchors"))
            return NetworkConfig(G, n, space=space, time_varying=gen)
        listed = [tuple(int(v) - 1 for v in e) for e in obj["graph"]["edges"]]
        if len(obj["refs"]) != len(listed):
            raise ConfigError(f"{len(obj['refs'])} refs for {len(listed)} edges")
        vectors = dict(zip(listed, obj["refs"]))
        return NetworkConfig.from_vectors(G, vectors, n, space, obj.get("normalize", False))
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def network_to_dict(net):
    out = {"graph": net.graph.to_json(), "n": net.n, "space": net.space}
    if net.fixed:
        out["refs"] = net.refs.tolist()
    else:
        out["time_varying"] = net.time_varying.to_json()
    return out


def graph_from_dict(obj):
    """Accept a bare graph or anything with a ``graph`` entry (network or scenario)."""
    if "network" in obj:
        obj = obj["network"]
    if "graph" in obj:
        obj = obj["graph"]
    _validate(obj, GRAPH_SCHEMA)
    try:
        return Graph.from_json(obj)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def initial_states(net, init, seed=None):
    """States for the ``init`` block; ``seed`` overrides the block's seed."""
    init = init or {}
    mode = init.get("mode", "haar" if net.space == "SOn" else "gaussian")
    rng = np.random.default_rng(init.get("seed", 0) if seed is None else seed)
    k, n = net.k, net.n
    if mode == "explicit":
        X = np.array(init.get("states", []), dtype=float)
        shape = (k, n, n) if net.space == "SOn" else (k, n)
        if X.shape != shape:
            raise ConfigError(f"explicit states need shape {shape}, got {X.shape}")
        return X
    if net.space == "Rn":
        if mode == "consensus":
            return np.tile(rng.standard_normal(n), (k, 1))
        if mode == "gaussian":
            return rng.standard_normal((k, n))
        raise ConfigError(f"init mode {mode!r} is not available on R^n")
    if mode == "gaussian":
        raise ConfigError("init mode 'gaussian' is for R^n networks")
    if mode == "haar":
        return np.array([random_rotation(n, rng) for _ in range(k)])
    base = np.array([random_rotation(n, rng)] * k)
    if mode == "consensus":
        return base
    return perturb_states(base, float(init.get("spread", 0.3)), rng)


def scenario_from_dict(obj, seed=None, horizon=None, step=None):
    """Validate a scenario and build ``(net, spec, init_states, output)``.

    ``seed``, ``horizon`` and ``step`` override the file's values.
    """
    _validate(obj, SCENARIO_SCHEMA)
    net = network_from_dict(obj["network"])
    flow = dict(obj["flow"])
    if horizon is not None:
        flow["T"] = horizon
    if step is not None:
        flow["h"] = step
    pert = None
    if "perturbations" in obj:
        p = obj["perturbations"]
        pseed = p.get("seed", 0) if seed is None else [seed, 1]
        pert = sample_perturbations(net.graph, p["bound"], pseed, p.get("low", 0.0),
                                    p.get("high", 1.0))
    try:
        spec = FlowSpec(flow["kind"], float(flow["T"]), float(flow.get("h", 1e-2)),
                        float(flow.get("epsilon", 1.0)), flow.get("method", "cf4"),
                        int(flow.get("record_every", 1)), pert)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    X0 = initial_states(net, obj.get("init"), seed)
    return net, spec, X0, obj.get("output")
