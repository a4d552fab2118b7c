"""Python bindings for the hpsg scene-graph pipeline."""

from ._hpsg import (  # noqa: F401
    __version__,
    build_graph,
    evaluate,
    parse,
    query,
    render_full_graph,
    synth,
    whitespace_tokens,
)

__all__ = [
    "__version__",
    "build_graph",
    "evaluate",
    "parse",
    "query",
    "render_full_graph",
    "synth",
    "whitespace_tokens",
]
