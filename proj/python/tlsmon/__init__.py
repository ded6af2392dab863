"""Slope monitoring from multi-epoch terrestrial laser scans."""

import json

from ._core import (
    TlsmonError,
    bench_table2 as _bench_table2,
    classify_shape,
    error_budget,
    example_config as _example_config,
    gen_terrain,
    interval_days,
    register,
    relative_error,
    run_pipeline as _run_pipeline,
    shape_angle,
)

__all__ = [
    "TlsmonError",
    "bench_table2",
    "classify_shape",
    "error_budget",
    "example_config",
    "gen_terrain",
    "interval_days",
    "register",
    "relative_error",
    "run_pipeline",
    "shape_angle",
]


def example_config():
    return json.loads(_example_config())


def run_pipeline(config):
    """Run every stage; `config` is a dict or JSON text. Returns the report dict."""
    text = config if isinstance(config, str) else json.dumps(config)
    return json.loads(_run_pipeline(text))


def bench_table2(trials=5, seed=1, methods=("icp", "coarse+icp", "hybrid")):
    return json.loads(_bench_table2(trials, seed, list(methods)))
