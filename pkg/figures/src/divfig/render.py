"""Render divkit artifacts into the four figure types.

Input schemas (produced by the main toolkit's CLI):
  decay:    CSV with columns layer,measured,bound (one file per variant)
  effdim:   CSV with columns layer,d_eps (one file per variant/run)
  pca3d:    JSON {layer,k,coordinates,explained,tokens,top_tokens,metadata}
  saliency: JSON {tokens,matrix,target_position,all_zero,normalization}

Output is a PNG plus a <image>.meta.json sidecar describing what was drawn,
so rendered metadata can be checked without image parsing.  Rendering is
deterministic: fixed style, no timestamps, inputs never modified.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_KINDS = ("decay", "effdim", "pca3d", "saliency")

_SAVE_OPTS = {"dpi": 120, "metadata": {"Software": "divfig"}}


class SchemaError(ValueError):
    pass


def _read_csv(path: Path, columns: list[str]) -> dict[str, list[float]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    missing = set(columns) - set(rows[0])
    if missing:
        raise SchemaError(f"{path}: missing columns {sorted(missing)}")
    out: dict[str, list[float]] = {c: [] for c in columns}
    for i, row in enumerate(rows):
        for c in columns:
            try:
                out[c].append(float(row[c]))
            except (TypeError, ValueError) as exc:
                raise SchemaError(f"{path}: row {i} column {c!r} is not numeric") from exc
    return out


def _read_json(path: Path, required: list[str]) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot parse {path}: {exc}") from exc
    missing = set(required) - set(payload)
    if missing:
        raise SchemaError(f"{path}: missing fields {sorted(missing)}")
    return payload


def _render_decay(paths: list[Path], ax):
    meta = {"series": []}
    for path in paths:
        data = _read_csv(path, ["layer", "measured", "bound"])
        label = path.stem.removeprefix("decay_")
        # log scale cannot show exact zeros; mask them instead of clipping,
        # which would stretch the axis down to the clip floor
        layer = np.asarray(data["layer"])
        measured = np.asarray(data["measured"])
        bound = np.asarray(data["bound"])
        ax.plot(layer[measured > 0], measured[measured > 0],
                marker="o", label=f"{label} measured")
        ax.plot(layer[bound > 0], bound[bound > 0],
                linestyle="--", label=f"{label} bound")
        meta["series"].append({"name": label, "points": len(data["layer"])})
    ax.set_yscale("log")
    ax.set_xlabel("layer")
    ax.set_ylabel("feature diversity")
    ax.set_title("diversity decay: measured vs bound")
    ax.legend(fontsize=8)
    return meta


def _render_effdim(paths: list[Path], ax):
    meta = {"series": []}
    for path in paths:
        data = _read_csv(path, ["layer", "d_eps"])
        label = path.stem
        ax.plot(data["layer"], data["d_eps"], marker="s", label=label)
        meta["series"].append({"name": label, "points": len(data["layer"])})
    ax.set_xlabel("layer")
    ax.set_ylabel("effective dimension")
    ax.set_title("per-layer effective dimension")
    ax.legend(fontsize=8)
    return meta


def _render_pca3d(paths: list[Path], fig):
    if len(paths) != 1:
        raise SchemaError("pca3d takes exactly one input file")
    payload = _read_json(paths[0], ["coordinates", "explained", "tokens", "top_tokens"])
    coords = np.asarray(payload["coordinates"], dtype=float)
    if coords.ndim != 2 or coords.shape[1] < 3:
        raise SchemaError("pca3d needs at least 3 coordinate columns")
    tokens = np.asarray(payload["tokens"])
    top = list(payload["top_tokens"])[:5]
    title = f"top-3 PCA, explained variance {payload['explained']:.2f}"

    # one 3D view plus two 2D projections keeps a static image legible
    ax3 = fig.add_subplot(1, 3, 1, projection="3d")
    ax_xy = fig.add_subplot(1, 3, 2)
    ax_xz = fig.add_subplot(1, 3, 3)
    rest = ~np.isin(tokens, top)
    ax3.scatter(coords[rest, 0], coords[rest, 1], coords[rest, 2],
                s=8, c="lightgray", depthshade=False)
    for i, tok in enumerate(top):
        sel = tokens == tok
        ax3.scatter(coords[sel, 0], coords[sel, 1], coords[sel, 2],
                    s=14, label=f"token {tok}", depthshade=False)
        ax_xy.scatter(coords[sel, 0], coords[sel, 1], s=10)
        ax_xz.scatter(coords[sel, 0], coords[sel, 2], s=10)
    ax_xy.scatter(coords[rest, 0], coords[rest, 1], s=4, c="lightgray", zorder=0)
    ax_xz.scatter(coords[rest, 0], coords[rest, 2], s=4, c="lightgray", zorder=0)
    ax_xy.set_xlabel("pc1"); ax_xy.set_ylabel("pc2")
    ax_xz.set_xlabel("pc1"); ax_xz.set_ylabel("pc3")
    ax3.legend(fontsize=6)
    fig.suptitle(title)
    return {"title": title, "points": int(coords.shape[0]), "top_tokens": top}


def _render_saliency(paths: list[Path], ax, fig):
    if len(paths) != 1:
        raise SchemaError("saliency takes exactly one input file")
    payload = _read_json(paths[0], ["tokens", "matrix", "normalization"])
    M = np.asarray(payload["matrix"], dtype=float)
    if M.ndim != 2:
        raise SchemaError("saliency matrix must be 2-D")
    im = ax.imshow(M.T, aspect="auto", cmap="magma", origin="lower",
                   vmin=0.0, vmax=1.0)
    ax.set_xlabel("token position")
    ax.set_ylabel("channel")
    title = f"input saliency ({payload['normalization']} normalization)"
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    if "target_position" in payload:
        ax.axvline(payload["target_position"], color="cyan", linewidth=0.8)
    return {"title": title, "shape": list(M.shape)}


def render(kind: str, inputs, out_path) -> Path:
    """Render `inputs` as figure `kind` into out_path (plus .meta.json sidecar)."""
    if kind not in FIGURE_KINDS:
        raise SchemaError(f"kind must be one of {FIGURE_KINDS}")
    paths = [Path(p) for p in inputs]
    if not paths:
        raise SchemaError("at least one input file required")
    out_path = Path(out_path)

    if kind == "pca3d":
        fig = plt.figure(figsize=(12, 4))
        meta = _render_pca3d(paths, fig)
    else:
        fig, ax = plt.subplots(figsize=(6, 4))
        if kind == "decay":
            meta = _render_decay(paths, ax)
        elif kind == "effdim":
            meta = _render_effdim(paths, ax)
        else:
            meta = _render_saliency(paths, ax, fig)
    meta["kind"] = kind
    meta["inputs"] = [str(p) for p in paths]

    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_suffix(out_path.suffix + ".tmp")
    try:
        fig.savefig(tmp, format=out_path.suffix.lstrip(".") or "png", **_SAVE_OPTS)
    finally:
        plt.close(fig)
    tmp.replace(out_path)
    sidecar = out_path.with_suffix(out_path.suffix + ".meta.json")
    tmp_meta = sidecar.with_suffix(".tmp")
    tmp_meta.write_text(json.dumps(meta, indent=1, sort_keys=True))
    tmp_meta.replace(sidecar)
    return out_path


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="render",
                                description="Render divkit artifacts to figures.")
    p.add_argument("--kind", required=True, choices=list(FIGURE_KINDS))
    p.add_argument("--in", dest="inputs", required=True, nargs="+",
                   help="artifact file(s)")
    p.add_argument("--out", required=True, help="output image path")
    args = p.parse_args(argv)
    try:
        path = render(args.kind, args.inputs, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
