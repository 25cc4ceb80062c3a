"""Architectural-backdoor laboratory: build, backdoor, train and scan
computation-graph architectures.

The heavy lifting lives in the compiled ``_mablab`` module; this package
re-exports its surface. Installed wheels carry the extension inside the
package; development builds put it next to the package on ``sys.path``.
"""

try:
    from . import _mablab as _core
except ImportError:
    import _mablab as _core

_NAMES = [
    "ArchGraph",
    "Dataset",
    "EvalMetrics",
    "MabError",
    "ParamStore",
    "apply_trigger",
    "backdoor_loss",
    "build_architecture",
    "deserialize",
    "detector_trace",
    "evaluate",
    "forward_logits",
    "infer_shapes",
    "init_params",
    "inject_mab",
    "ks_two_sample",
    "load_cifar_binary",
    "load_graph",
    "load_idx",
    "make_synthetic",
    "naive_detector",
    "poison_dataset",
    "robust_detector",
    "save_graph",
    "scan_file",
    "scan_graph",
    "serialize",
    "train",
    "validate",
]

globals().update({name: getattr(_core, name) for name in _NAMES})

__all__ = list(_NAMES)
