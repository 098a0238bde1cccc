from .adapters import normalize_geth_bundle, normalize_tenderly
from .normalized import parse_normalized_trace, serialize_normalized_trace, to_document
from .snippets import CommandDecompiler, EtherscanClient, enrich_code_snippets
from .sources import CallSpec, SourceKind, TraceSource, fetch_trace, load_trace_file

__all__ = [
    "CallSpec",
    "CommandDecompiler",
    "EtherscanClient",
    "SourceKind",
    "TraceSource",
    "enrich_code_snippets",
    "fetch_trace",
    "load_trace_file",
    "normalize_geth_bundle",
    "normalize_tenderly",
    "parse_normalized_trace",
    "serialize_normalized_trace",
    "to_document",
]
