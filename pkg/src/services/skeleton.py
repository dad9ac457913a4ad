"""Thin crack masks to one-pixel skeletons and extract their keypoint/edge topology."""

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from services.core import ContractError, GridGeometry, Mask, Pixel, scan_key

log = logging.getLogger(__name__)

EIGHT = np.ones((3, 3), dtype=bool)

# Neighbour order P2..P9: N, NE, E, SE, S, SW, W, NW as (d_row, d_col)
_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]


class KeypointKind(str, Enum):
    """Topological role of a skeleton pixel."""

    END = "end"
    BRANCH = "branch"


@dataclass(frozen=True)
class Keypoint:
    """A skeleton pixel with fewer (End) or more (Branch) than two neighbours."""

    pixel: Pixel
    kind: KeypointKind


@dataclass(frozen=True)
class MinimalEdge:
    """Keypoint-to-keypoint skeleton path whose interior holds no keypoint."""

    p_i: Pixel
    p_j: Pixel
    path: Tuple[Pixel, ...]

    @property
    def is_cycle(self) -> bool:
        """Return True for closed paths (p_i == p_j with more than one pixel)."""
        return self.p_i == self.p_j and len(self.path) > 1


@dataclass
class SkeletonGraph:
    """Skeleton, merged keypoints and minimal edges of a crack mask.

    `clusters` maps each keypoint pixel to the skeleton pixels it stands for: branch
    pixels that touch each other are merged into the row-major first one.
    """

    skeleton: Mask
    keypoints: List[Keypoint]
    edges: List[MinimalEdge]
    clusters: Dict[Pixel, Tuple[Pixel, ...]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation with [u, v] pixel pairs."""
        return {
            "geometry": self.skeleton.geometry.to_dict(),
            "skeleton": [[int(u), int(v)] for v, u in np.argwhere(self.skeleton.data)],
            "keypoints": [
                {"pixel": list(k.pixel), "kind": k.kind.value} for k in self.keypoints
            ],
            "clusters": [
                {"pixel": list(p), "members": [list(m) for m in members]}
                for p, members in self.clusters.items()
            ],
            "edges": [
                {"p_i": list(e.p_i), "p_j": list(e.p_j), "path": [list(p) for p in e.path]}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SkeletonGraph":
        """Create a SkeletonGraph from its JSON representation."""
        geometry = GridGeometry.from_dict(data["geometry"])
        grid = np.zeros(geometry.shape, dtype=bool)
        for u, v in data["skeleton"]:
            grid[v, u] = True
        return cls(
            skeleton=Mask(geometry, grid),
            keypoints=[
                Keypoint(tuple(k["pixel"]), KeypointKind(k["kind"])) for k in data["keypoints"]
            ],
            edges=[
                MinimalEdge(tuple(e["p_i"]), tuple(e["p_j"]), tuple(tuple(p) for p in e["path"]))
                for e in data["edges"]
            ],
            clusters={
                tuple(c["pixel"]): tuple(tuple(m) for m in c["members"])
                for c in data.get("clusters", [])
            },
        )


def _neighbour_planes(img: np.ndarray) -> List[np.ndarray]:
    """Return the eight shifted neighbour planes P2..P9 of a boolean image as uint8."""
    padded = np.pad(img, 1).astype(np.uint8)
    rows, cols = img.shape
    return [padded[1 + dr : 1 + dr + rows, 1 + dc : 1 + dc + cols] for dr, dc in _OFFSETS]


def _build_simple_lut() -> np.ndarray:
    removable = np.zeros(256, dtype=bool)
    for code in range(256):
        window = np.zeros((3, 3), dtype=bool)
        for bit, (dr, dc) in enumerate(_OFFSETS):
            window[1 + dr, 1 + dc] = bool(code >> bit & 1)
        removable[code] = window.sum() >= 2 and ndimage.label(window, EIGHT)[1] == 1
    return removable


# Deleting the centre keeps its neighbours 8-connected and creates no end point
_REMOVABLE = _build_simple_lut()


def _zs_candidates(img: np.ndarray, first: bool) -> np.ndarray:
    p2, p3, p4, p5, p6, p7, p8, p9 = _neighbour_planes(img)
    ring = [p2, p3, p4, p5, p6, p7, p8, p9, p2]
    b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    a = sum(((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.uint8) for i in range(8))
    if first:
        c1, c2 = p2 * p4 * p6 == 0, p4 * p6 * p8 == 0
    else:
        c1, c2 = p2 * p4 * p8 == 0, p2 * p6 * p8 == 0
    return img & (b >= 2) & (b <= 6) & (a == 1) & c1 & c2


def _protect_components(img: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Drop deletions that would erase or split an 8-connected component."""
    labels, count = ndimage.label(img, EIGHT)
    remaining = img & ~candidates
    new_labels, _ = ndimage.label(remaining, EIGHT)
    pairs = np.unique(
        np.stack([labels[remaining], new_labels[remaining]], axis=1).astype(np.intp), axis=0
    )
    pieces = np.bincount(pairs[:, 0], minlength=count + 1)
    candidates = candidates.copy()
    split = np.flatnonzero(pieces > 1)
    if split.size:
        candidates &= ~np.isin(labels, split)
    for label in np.flatnonzero(pieces[1:] == 0) + 1:
        row, col = np.argwhere(labels == label)[0]
        candidates[row, col] = False
    return candidates


def zhang_suen(img: np.ndarray, preserve_components: bool = False) -> np.ndarray:
    """Run Zhang-Suen parallel thinning on a boolean image until no pixel changes.

    Args:
        img: 2D boolean image.
        preserve_components: If True, veto deletions that would remove or split a
            connected component (the textbook algorithm erases 2x2 squares).
    """
    img = np.array(img, dtype=bool)
    changed = True
    while changed:
        changed = False
        for first in (True, False):
            candidates = _zs_candidates(img, first)
            if preserve_components and candidates.any():
                candidates = _protect_components(img, candidates)
            if candidates.any():
                img[candidates] = False
                changed = True
    return img


def _prune_redundant(img: np.ndarray) -> bool:
    """Sequentially delete staircase pixels whose removal keeps the topology; in place."""
    padded = np.pad(img, 1)
    changed = False
    for row, col in np.argwhere(img):
        r, c = row + 1, col + 1
        code = sum(1 << bit for bit, (dr, dc) in enumerate(_OFFSETS) if padded[r + dr, c + dc])
        if _REMOVABLE[code]:
            padded[r, c] = False
            changed = True
    if changed:
        img[...] = padded[1:-1, 1:-1]
    return changed


def thin(mask: Mask) -> Mask:
    """Reduce a mask to a one-pixel-wide skeleton with the same 8-connected components."""
    img = np.array(mask.data, dtype=bool)
    while True:
        img = zhang_suen(img, preserve_components=True)
        if not _prune_redundant(img):
            break
    log.debug("Thinned %d foreground pixels to %d", mask.count, int(img.sum()))
    return Mask(mask.geometry, img)


def neighbour_counts(img: np.ndarray) -> np.ndarray:
    """Return the number of 8-neighbours of every pixel."""
    img = np.asarray(img, dtype=np.int32)
    return ndimage.convolve(img, np.ones((3, 3), dtype=np.int32), mode="constant") - img


def classify_keypoints(skeleton: Mask) -> List[Keypoint]:
    """Return End (<2 neighbours) and Branch (>2 neighbours) pixels in row-major order."""
    counts = neighbour_counts(skeleton.data)
    keypoints = []
    for v, u in np.argwhere(skeleton.data):
        if counts[v, u] < 2:
            keypoints.append(Keypoint((int(u), int(v)), KeypointKind.END))
        elif counts[v, u] > 2:
            keypoints.append(Keypoint((int(u), int(v)), KeypointKind.BRANCH))
    return keypoints


def _neighbours(img: np.ndarray, pixel: Pixel) -> List[Pixel]:
    u, v = pixel
    rows, cols = img.shape
    return [
        (u + du, v + dv)
        for dv in (-1, 0, 1)
        for du in (-1, 0, 1)
        if (du or dv) and 0 <= v + dv < rows and 0 <= u + du < cols and img[v + dv, u + du]
    ]


def _cluster_path(members: Iterable[Pixel], start: Pixel, goal: Pixel) -> List[Pixel]:
    """Breadth-first path from `start` to `goal` through the pixels of one cluster."""
    members = set(members)
    parents: Dict[Pixel, Optional[Pixel]] = {start: None}
    queue = deque([start])
    while queue:
        current = queue.popleft()
        if current == goal:
            break
        for dv in (-1, 0, 1):
            for du in (-1, 0, 1):
                nxt = (current[0] + du, current[1] + dv)
                if nxt in members and nxt not in parents:
                    parents[nxt] = current
                    queue.append(nxt)
    path = [goal]
    while parents[path[-1]] is not None:
        path.append(parents[path[-1]])  # type: ignore[arg-type]
    return path[::-1]


def _canonical(path: List[Pixel]) -> Tuple[Pixel, ...]:
    if scan_key(path[-1]) < scan_key(path[0]):
        path = path[::-1]
    elif path[0] == path[-1] and len(path) > 2 and scan_key(path[-2]) < scan_key(path[1]):
        path = path[::-1]
    return tuple(path)


def _merge_branches(
    img: np.ndarray, keypoints: List[Keypoint]
) -> Tuple[Dict[Pixel, Pixel], Dict[Pixel, Tuple[Pixel, ...]]]:
    """Map every keypoint pixel to its representative; merge touching branch pixels."""
    node_of: Dict[Pixel, Pixel] = {}
    clusters: Dict[Pixel, Tuple[Pixel, ...]] = {}
    branch = np.zeros(img.shape, dtype=bool)
    for keypoint in keypoints:
        if keypoint.kind is KeypointKind.END:
            node_of[keypoint.pixel] = keypoint.pixel
            clusters[keypoint.pixel] = (keypoint.pixel,)
        else:
            branch[keypoint.pixel[1], keypoint.pixel[0]] = True
    labels, count = ndimage.label(branch, EIGHT)
    for label in range(1, count + 1):
        members = tuple((int(u), int(v)) for v, u in np.argwhere(labels == label))
        representative = members[0]
        clusters[representative] = members
        for member in members:
            node_of[member] = representative
    return node_of, clusters


def extract_edges(skeleton: Mask, keypoints: List[Keypoint]) -> SkeletonGraph:
    """Trace minimal edges between keypoints, plus keypoint-free cycles.

    Raises:
        ContractError: if `keypoints` does not match the skeleton's neighbour counts.
    """
    img = skeleton.data
    expected = {(k.pixel, k.kind) for k in classify_keypoints(skeleton)}
    if {(k.pixel, k.kind) for k in keypoints} != expected:
        raise ContractError("Keypoint list is inconsistent with the skeleton's neighbour counts.")

    node_of, clusters = _merge_branches(img, keypoints)
    edges: Dict[Any, Tuple[Pixel, ...]] = {}
    covered = set(node_of)
    max_steps = int(img.sum()) + 1

    for representative in sorted(clusters, key=scan_key):
        members = clusters[representative]
        if len(members) == 1 and not _neighbours(img, representative):
            edges[(representative,)] = (representative,)
            continue
        for member in members:
            for first in _neighbours(img, member):
                if node_of.get(first) == representative:
                    continue
                interior: List[Pixel] = []
                previous, current = member, first
                while current not in node_of:
                    interior.append(current)
                    following = [q for q in _neighbours(img, current) if q != previous]
                    if len(following) != 1 or len(interior) > max_steps:
                        raise ContractError(f"Skeleton pixel {current} is not a simple path.")
                    previous, current = current, following[0]
                far = node_of[current]
                ends = tuple(sorted((representative, far), key=scan_key))
                key = (ends, frozenset(interior))
                if key in edges:
                    continue
                path = (
                    _cluster_path(members, representative, member)
                    + interior
                    + _cluster_path(clusters[far], far, current)[::-1]
                )
                edges[key] = _canonical(path)
                covered.update(path)

    remaining = img.copy()
    for u, v in covered:
        remaining[v, u] = False
    for v, u in np.argwhere(remaining):
        start = (int(u), int(v))
        if not remaining[v, u]:
            continue
        path = [start]
        previous, current = start, _neighbours(img, start)[0]
        while current != start:
            if current in node_of or len(path) > max_steps:
                raise ContractError(f"Skeleton pixel {current} is not part of a simple cycle.")
            path.append(current)
            following = [q for q in _neighbours(img, current) if q != previous]
            previous, current = current, following[0]
        path.append(start)
        for pu, pv in path:
            remaining[pv, pu] = False
        edges[("cycle", start)] = _canonical(path)

    ordered = sorted(
        edges.values(), key=lambda p: (scan_key(p[0]), scan_key(p[-1]), [scan_key(x) for x in p])
    )
    kinds = {k.pixel: k.kind for k in keypoints}
    merged = [Keypoint(p, kinds[p]) for p in sorted(clusters, key=scan_key)]
    return SkeletonGraph(
        skeleton=skeleton,
        keypoints=merged,
        edges=[MinimalEdge(p[0], p[-1], p) for p in ordered],
        clusters=clusters,
    )


def build_graph(mask: Mask) -> SkeletonGraph:
    """Thin a crack mask and extract its topology."""
    skeleton = thin(mask)
    graph = extract_edges(skeleton, classify_keypoints(skeleton))
    log.info(
        "Skeleton has %d keypoints and %d minimal edges", len(graph.keypoints), len(graph.edges)
    )
    return graph
