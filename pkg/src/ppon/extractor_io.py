"""Feature-extractor weights in the same container format as model
checkpoints.

The header carries the layer-spec list, so externally exported deep
feature stacks (e.g. a 19-layer conv/relu/maxpool network tapped at its
last conv block) load through the exact code path as the bundled desk
extractor.
"""

from __future__ import annotations

from .checkpoint import ContainerError, read_container, write_container
from .losses import FeatureExtractor


def save_feature_extractor(extractor: FeatureExtractor, path) -> None:
    tensors, blobs = [], []
    for name, p in extractor.named_parameters():
        tensors.append({"name": name, "shape": list(p.shape)})
        blobs.append(p.data)
    header = {
        "kind": "feature_extractor",
        "arch": [list(entry) for entry in extractor.arch],
        "tap": extractor.tap,
        "seed": extractor.seed,
        "tensors": tensors,
    }
    write_container(path, header, blobs)


def load_feature_extractor(path) -> FeatureExtractor:
    header, blobs = read_container(path)
    if header.get("kind") != "feature_extractor":
        raise ContainerError(
            f"{path}: kind {header.get('kind')!r} is not a feature extractor"
        )
    arch = [tuple(entry) for entry in header["arch"]]
    extractor = FeatureExtractor(arch, tap=header.get("tap", "tap"), seed=header.get("seed"))
    params = dict(extractor.named_parameters())
    declared = {d["name"] for d in header["tensors"]}
    if declared != set(params):
        raise ContainerError(f"{path}: parameter names do not match the declared arch")
    for desc, blob in zip(header["tensors"], blobs):
        p = params[desc["name"]]
        if tuple(p.shape) != tuple(blob.shape):
            raise ContainerError(
                f"{path}: shape mismatch for {desc['name']}: "
                f"{blob.shape} vs {tuple(p.shape)}"
            )
        p.data[:] = blob
    extractor.freeze()
    return extractor
