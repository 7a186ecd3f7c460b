"""SLIC superpixels and their depth-backed centroid samples."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import PointSample, unproject_many
from .scene_io import CameraView


@dataclass(frozen=True, eq=False)
class Segmentation:
    labels: np.ndarray
    cluster_count: int
    centroids: np.ndarray
    mean_colors: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def _as_unit_rgb(image) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an RGB raster, got shape {img.shape}")
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64)


def pseudo_image(view: CameraView) -> np.ndarray:
    """Min-max normalized depth replicated into three channels; invalid pixels are 0."""
    depth = view.depth.values
    valid = view.depth.valid
    gray = np.zeros(depth.shape)
    if valid.any():
        lo, hi = depth[valid].min(), depth[valid].max()
        gray[valid] = (depth[valid] - lo) / (hi - lo) if hi > lo else 0.5
    return np.repeat(gray[..., None], 3, axis=2)


def _grid_centers(width: int, height: int, k: int):
    nx = min(width, max(1, round(math.sqrt(k * width / height))))
    ny = min(height, max(1, round(k / nx)))
    cu = (np.arange(nx) + 0.5) * (width / nx) - 0.5
    cv = (np.arange(ny) + 0.5) * (height / ny) - 0.5
    gu, gv = np.meshgrid(cu, cv)
    return gu.ravel(), gv.ravel()


def _assign(img, cu, cv, ccol, step, compactness):
    """Label every pixel with its closest center among windows of half-size ``step``."""
    h, w, _ = img.shape
    flat = img.reshape(-1, 3)
    best = np.full(h * w, np.inf)
    label = np.full(h * w, -1, dtype=np.int64)
    reach = int(math.ceil(step))
    ru, rv = np.rint(cu).astype(np.int64), np.rint(cv).astype(np.int64)
    ks = np.arange(len(cu))
    # distinct rounded centers give distinct pixels at every offset
    distinct = len(np.unique(rv * w + ru)) == len(ru)
    spatial_scale = (compactness / step) ** 2
    for dv in range(-reach, reach + 1):
        pv = rv + dv
        dyv = pv - cv
        okv = (pv >= 0) & (pv < h) & (np.abs(dyv) <= step)
        for du in range(-reach, reach + 1):
            pu = ru + du
            dxu = pu - cu
            ok = okv & (pu >= 0) & (pu < w) & (np.abs(dxu) <= step)
            if not ok.any():
                continue
            k = ks[ok]
            pix = pv[ok] * w + pu[ok]
            dc = flat[pix] - ccol[k]
            d2 = (dc * dc).sum(axis=1) + (dxu[ok] ** 2 + dyv[ok] ** 2) * spatial_scale
            if not distinct:
                order = np.lexsort((k, d2))
                _, first = np.unique(pix[order], return_index=True)
                sel = order[first]
                pix, d2, k = pix[sel], d2[sel], k[sel]
            better = d2 < best[pix]
            best[pix[better]] = d2[better]
            label[pix[better]] = k[better]
    return label


def _components(labels: np.ndarray):
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    a, b = [], []
    same = labels[:, :-1] == labels[:, 1:]
    a.append(idx[:, :-1][same]); b.append(idx[:, 1:][same])
    same = labels[:-1, :] == labels[1:, :]
    a.append(idx[:-1, :][same]); b.append(idx[1:, :][same])
    a, b = np.concatenate(a), np.concatenate(b)
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(h * w, h * w))
    _, comp = connected_components(graph, directed=False)
    return comp.reshape(h, w)


def enforce_connectivity(labels: np.ndarray, min_size: float) -> np.ndarray:
    """Relabel into 4-connected segments, merging fragments below ``min_size``.

    A fragment joins the largest segment it touches. Output labels are
    numbered by first appearance in row-major order.
    """
    h, w = labels.shape
    comp = _components(labels)
    n = int(comp.max()) + 1
    size = np.bincount(comp.ravel(), minlength=n).astype(np.int64)
    first_pix = np.full(n, h * w, dtype=np.int64)
    np.minimum.at(first_pix, comp.ravel(), np.arange(h * w))

    pa = np.concatenate([comp[:, :-1].ravel(), comp[:-1, :].ravel()])
    pb = np.concatenate([comp[:, 1:].ravel(), comp[1:, :].ravel()])
    diff = pa != pb
    pairs = np.unique(np.sort(np.stack([pa[diff], pb[diff]], axis=1), axis=1), axis=0)
    adjacent: dict[int, set[int]] = {}
    for x, y in pairs.tolist():
        adjacent.setdefault(x, set()).add(y)
        adjacent.setdefault(y, set()).add(x)

    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    small = [c for c in np.lexsort((first_pix, size)) if size[c] < min_size]
    for c in small:
        r = find(c)
        if size[r] >= min_size:
            continue
        nbrs = {find(x) for x in adjacent.get(r, ())} - {r}
        if not nbrs:
            continue
        target = min(nbrs, key=lambda x: (-size[x], first_pix[x]))
        parent[r] = target
        size[target] += size[r]
        first_pix[target] = min(first_pix[target], first_pix[r])
        adjacent[target] = (adjacent.get(target, set()) | adjacent.pop(r, set())) - {r, target}

    roots = np.array([find(c) for c in range(n)])
    merged = roots[comp]
    _, first, inverse = np.unique(merged.ravel(), return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse].reshape(h, w)


def slic_segment(image, target_clusters: int, compactness: float = 10.0, iterations: int = 10) -> Segmentation:
    """Simple linear iterative clustering on an RGB raster.

    Colors are compared in RGB scaled to [0, 1]; the spatial term is the
    pixel distance divided by the grid step ``S = sqrt(N / K)`` and scaled by
    ``compactness``.
    """
    img = _as_unit_rgb(image)
    h, w, _ = img.shape
    n = h * w
    if not 1 <= target_clusters <= n:
        raise ValueError(f"target_clusters must be in [1, {n}], got {target_clusters}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    step = math.sqrt(n / target_clusters)
    cu, cv = _grid_centers(w, h, target_clusters)
    flat = img.reshape(-1, 3)
    ccol = flat[np.rint(cv).astype(np.int64) * w + np.rint(cu).astype(np.int64)]
    uu = np.tile(np.arange(w, dtype=np.float64), h)
    vv = np.repeat(np.arange(h, dtype=np.float64), w)

    for it in range(iterations):
        label = _assign(img, cu, cv, ccol, step, compactness)
        if it == iterations - 1:
            break
        hit = label >= 0
        k = len(cu)
        cnt = np.bincount(label[hit], minlength=k)
        live = cnt > 0
        for arr, src in ((cu, uu), (cv, vv)):
            s = np.bincount(label[hit], weights=src[hit], minlength=k)
            arr[live] = s[live] / cnt[live]
        for c in range(3):
            s = np.bincount(label[hit], weights=flat[hit, c], minlength=k)
            ccol[live, c] = s[live] / cnt[live]

    labels = enforce_connectivity(label.reshape(h, w), min_size=n / (2 * target_clusters))
    count = int(labels.max()) + 1
    lab = labels.ravel()
    cnt = np.bincount(lab, minlength=count).astype(np.float64)
    centroids = np.stack(
        [np.bincount(lab, weights=uu, minlength=count) / cnt,
         np.bincount(lab, weights=vv, minlength=count) / cnt],
        axis=1,
    )
    colors = np.stack([np.bincount(lab, weights=flat[:, c], minlength=count) / cnt for c in range(3)], axis=1)
    return Segmentation(labels, count, centroids, colors)


def centroid_pixels(seg: Segmentation, valid: np.ndarray) -> np.ndarray:
    """Row-major index of the valid pixel nearest each cluster centroid, or -1."""
    h, w = seg.labels.shape
    lab = seg.labels.ravel()
    pix = np.flatnonzero(valid.ravel())
    out = np.full(seg.cluster_count, -1, dtype=np.int64)
    if len(pix) == 0:
        return out
    lp = lab[pix]
    du = (pix % w) - seg.centroids[lp, 0]
    dv = (pix // w) - seg.centroids[lp, 1]
    order = np.lexsort((pix, du * du + dv * dv, lp))
    clusters, first = np.unique(lp[order], return_index=True)
    out[clusters] = pix[order[first]]
    return out


def cluster_centroids(seg: Segmentation, view: CameraView) -> list[tuple[int, PointSample]]:
    """Depth-backed sample for every cluster holding at least one valid pixel."""
    if seg.shape != view.depth.shape:
        raise ValueError(f"segmentation {seg.shape} does not match view raster {view.depth.shape}")
    pix = centroid_pixels(seg, view.depth.valid)
    clusters = np.flatnonzero(pix >= 0)
    rows, cols = pix[clusters] // view.width, pix[clusters] % view.width
    depths = view.depth.values[rows, cols]
    pos = unproject_many(cols, rows, depths, view)
    return [
        (int(c), PointSample(pos[i], view.view_id, (int(cols[i]), int(rows[i])), float(depths[i])))
        for i, c in enumerate(clusters)
    ]
