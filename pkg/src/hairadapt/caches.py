"""Binary preprocessing caches: per-particle anchors, per-particle features,
and the guide-strand set. All little-endian, deterministic byte-for-byte for
unchanged inputs."""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .features import LaplacianFeatureSet
from .multiscale import HairHierarchy
from .positioning import FALLBACK_BONE, LocalAnchorSet

_ANCHOR_MAGIC = b"ANCH"
_FEATURE_MAGIC = b"LAPF"
_NO_BONE = 0xFFFF
_NO_NEIGHBOR = 0xFFFFFFFF


def _anchor_dtype():
    return np.dtype([
        ("bone", "<u2"), ("t", "<f4"), ("face", "<u4"),
        ("bary0", "<f4"), ("bary1", "<f4"), ("eta", "<f4"),
    ])


def save_anchors(path, anchors: LocalAnchorSet) -> None:
    n = len(anchors)
    rec = np.empty(n, dtype=_anchor_dtype())
    bones = anchors.bone.astype(np.int64)
    rec["bone"] = np.where(bones == FALLBACK_BONE, _NO_BONE, bones).astype(np.uint16)
    rec["t"] = anchors.t
    rec["face"] = anchors.face
    rec["bary0"] = anchors.bary[:, 0]
    rec["bary1"] = anchors.bary[:, 1]
    rec["eta"] = anchors.eta
    with open(path, "wb") as f:
        f.write(_ANCHOR_MAGIC)
        f.write(struct.pack("<I", n))
        f.write(rec.tobytes())


def load_anchors(path) -> LocalAnchorSet:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _ANCHOR_MAGIC:
        raise ValueError(f"bad anchor cache magic {data[:4]!r}")
    (n,) = struct.unpack_from("<I", data, 4)
    rec = np.frombuffer(data, dtype=_anchor_dtype(), count=n, offset=8)
    bone = rec["bone"].astype(np.int32)
    bone[bone == _NO_BONE] = FALLBACK_BONE
    b0 = rec["bary0"].astype(np.float64)
    b1 = rec["bary1"].astype(np.float64)
    bary = np.column_stack([b0, b1, 1.0 - b0 - b1])
    return LocalAnchorSet(
        bone=bone,
        t=rec["t"].astype(np.float64),
        face=rec["face"].astype(np.int64),
        bary=bary,
        eta=rec["eta"].astype(np.float64),
    )


def _feature_dtype(k: int):
    return np.dtype([
        ("idx", "<u4", (k,)), ("w", "<f4", (k,)), ("ref", "<f4", (3,)),
    ])


def save_features(path, features: LaplacianFeatureSet) -> None:
    n = len(features)
    rec = np.empty(n, dtype=_feature_dtype(features.k))
    nb = features.neighbors.astype(np.int64)
    rec["idx"] = np.where(nb < 0, _NO_NEIGHBOR, nb).astype(np.uint32)
    rec["w"] = features.weights
    rec["ref"] = features.reference
    with open(path, "wb") as f:
        f.write(_FEATURE_MAGIC)
        f.write(struct.pack("<II", n, features.k))
        f.write(rec.tobytes())


def load_features(path) -> LaplacianFeatureSet:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != _FEATURE_MAGIC:
        raise ValueError(f"bad feature cache magic {data[:4]!r}")
    n, k = struct.unpack_from("<II", data, 4)
    rec = np.frombuffer(data, dtype=_feature_dtype(k), count=n, offset=12)
    neighbors = rec["idx"].astype(np.int64)
    neighbors[neighbors == _NO_NEIGHBOR] = -1
    weights = rec["w"].astype(np.float64)
    counts = (neighbors >= 0).sum(axis=1)
    return LaplacianFeatureSet(
        neighbors=neighbors,
        weights=weights,
        counts=counts,
        reference=rec["ref"].astype(np.float64),
        k=int(k),
    )


def save_guides(path, hierarchy: HairHierarchy) -> None:
    doc = {
        "guides": [int(g) for g in hierarchy.guides],
        "assignment": [int(a) for a in hierarchy.assignment],
        "clusterRadius": hierarchy.cluster_radius,
        "descriptorHash": hierarchy.descriptor_hash,
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def load_guides(path, n_strands: int) -> HairHierarchy:
    with open(path, "r") as f:
        doc = json.load(f)
    guides = np.asarray(doc["guides"], dtype=np.int64)
    normals = np.setdiff1d(np.arange(n_strands, dtype=np.int64), guides)
    return HairHierarchy(
        guides=guides,
        normals=normals,
        assignment=np.asarray(doc["assignment"], dtype=np.int64),
        cluster_radius=float(doc["clusterRadius"]),
        descriptor_hash=doc["descriptorHash"],
    )


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
