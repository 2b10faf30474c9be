"""Z-order transformer block: serialization-sorted attention and pooling.

A block runs on features sorted along the Z-curve (``morton.sort_by_code``):

1. group attention — queries/keys/values are mean-pooled over contiguous
   blocks of ``block_len`` tokens; block-level softmax attention produces both
   a coarse output (broadcast back to tokens) and the block-affinity matrix;
2. top-k attention — each query block attends to the raw tokens of the k
   blocks its affinity row ranks highest (its own block always included), so
   the full token-by-token score matrix is never materialized;
3. gated fusion — two per-token sigmoid gates mix the branch outputs, which
   are added to the input features (residual);
4. Z-order pooling — tokens whose codes agree after dropping ``pool_levels``
   levels collapse to one point (mean features through a projection, mean
   colors, cell-center positions).

Each op has a ``*_fwd`` variant returning a cache and a matching ``*_bwd``
computing exact gradients by hand; the top-k block selection is treated as
frozen (no gradient through the ranking).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InputError, RangeError
from .morton import Quantizer, decode_array, sort_by_code
from .numerics import (
    LinearLayer,
    derive_seed,
    init_linear,
    linear,
    linear_backward,
    sigmoid,
    softmax_rows,
    softmax_rows_backward,
)

# working-set budget (bytes) for the chunked top-k path
_CHUNK_BYTES = 3.2e8


@dataclass(frozen=True)
class AttentionConfig:
    """Shape hyper-parameters of one transformer block.

    ``select_k`` = 0 means "half the blocks" (at least one); a positive value
    is used as-is, capped at the block count. ``position_mode`` picks pooled
    point positions: centers of the coarse cells or member means.
    """

    block_len: int = 32
    select_k: int = 0
    model_width: int = 96
    head_width: int = 32
    n_heads: int = 1
    pool_levels: int = 2
    position_mode: str = "cell_center"

    def __post_init__(self):
        if self.block_len < 1:
            raise ConfigError(f"block_len must be >= 1, got {self.block_len}")
        if self.select_k < 0:
            raise ConfigError(f"select_k must be >= 0, got {self.select_k}")
        if self.model_width < 1 or self.head_width < 1:
            raise ConfigError("model_width and head_width must be >= 1")
        if self.n_heads < 1 or self.head_width % self.n_heads != 0:
            raise ConfigError(
                f"head_width {self.head_width} must divide into {self.n_heads} heads"
            )
        if self.pool_levels < 0:
            raise ConfigError(f"pool_levels must be >= 0, got {self.pool_levels}")
        if self.position_mode not in ("cell_center", "member_mean"):
            raise ConfigError(f"unknown position_mode {self.position_mode!r}")

    def resolve_k(self, n_blocks: int) -> int:
        if self.select_k == 0:
            return max(1, n_blocks // 2)
        return min(self.select_k, n_blocks)


@dataclass(frozen=True)
class ZFormerParams:
    """Learned layers of one block; all shapes derive from AttentionConfig."""

    w_q: LinearLayer
    w_k: LinearLayer
    w_v: LinearLayer
    w_o: LinearLayer
    gate: LinearLayer
    pool_proj: LinearLayer

    NAMES = ("w_q", "w_k", "w_v", "w_o", "gate", "pool_proj")

    @classmethod
    def init(cls, cfg: AttentionConfig, seed: int) -> "ZFormerParams":
        mw, hw = cfg.model_width, cfg.head_width
        return cls(
            w_q=init_linear(mw, hw, derive_seed(seed, "w_q")),
            w_k=init_linear(mw, hw, derive_seed(seed, "w_k")),
            w_v=init_linear(mw, hw, derive_seed(seed, "w_v")),
            w_o=init_linear(hw, mw, derive_seed(seed, "w_o")),
            gate=init_linear(mw, 2, derive_seed(seed, "gate")),
            pool_proj=init_linear(mw, mw, derive_seed(seed, "pool_proj")),
        )

    def astype(self, dtype) -> "ZFormerParams":
        return ZFormerParams(*(getattr(self, n).astype(dtype) for n in self.NAMES))

    def layers(self) -> dict:
        return {n: getattr(self, n) for n in self.NAMES}


def _accumulate(total: dict, part: dict) -> dict:
    for name, (gw, gb) in part.items():
        if name in total:
            ow, ob = total[name]
            total[name] = (ow + gw, ob + gb)
        else:
            total[name] = (gw, gb)
    return total


# ---------------------------------------------------------------------------
# block partition helpers


def _block_counts(n: int, block_len: int) -> np.ndarray:
    n_blocks = (n + block_len - 1) // block_len
    counts = np.full(n_blocks, block_len, dtype=np.int64)
    if n % block_len:
        counts[-1] = n % block_len
    return counts


def block_pool(x: np.ndarray, block_len: int) -> np.ndarray:
    """Mean over contiguous blocks of rows; a short final block averages over
    its actual length."""
    n = x.shape[0]
    if n == 0:
        raise InputError("cannot block-pool zero rows")
    counts = _block_counts(n, block_len)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    sums = np.add.reduceat(x, starts, axis=0)
    return sums / counts[:, None].astype(sums.dtype)


def _unpool(g_blocks: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Adjoint of block_pool: each token receives its block's row / count."""
    return np.repeat(g_blocks / counts[:, None], counts, axis=0)


def _head_slices(cfg: AttentionConfig):
    dh = cfg.head_width // cfg.n_heads
    return [slice(h * dh, (h + 1) * dh) for h in range(cfg.n_heads)], dh


# ---------------------------------------------------------------------------
# group attention


def group_attention_fwd(f: np.ndarray, params: ZFormerParams, cfg: AttentionConfig):
    """Block-pooled attention. Returns (out n x model, w_blocks B x B, cache).

    ``w_blocks`` is the head-mean of the block softmax matrices; with one head
    it is exactly the attention over pooled queries/keys.
    """
    n = f.shape[0]
    q = linear(f, params.w_q)
    k = linear(f, params.w_k)
    v = linear(f, params.w_v)
    counts = _block_counts(n, cfg.block_len)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    cnt = counts[:, None].astype(q.dtype)
    qb = np.add.reduceat(q, starts, axis=0) / cnt
    kb = np.add.reduceat(k, starts, axis=0) / cnt
    vb = np.add.reduceat(v, starts, axis=0) / cnt
    slices, dh = _head_slices(cfg)
    scale = dh ** -0.5  # python float: keeps float32 inputs in float32
    probs = []
    block_out = np.empty_like(qb)
    for hs in slices:
        scores = (qb[:, hs] @ kb[:, hs].T) * scale
        p = softmax_rows(scores)
        probs.append(p)
        block_out[:, hs] = p @ vb[:, hs]
    w_blocks = probs[0] if len(probs) == 1 else sum(probs) / len(probs)
    tokens = np.repeat(block_out, counts, axis=0)
    out = linear(tokens, params.w_o)
    cache = {
        "f": f, "q": q, "k": k, "v": v, "qb": qb, "kb": kb, "vb": vb,
        "counts": counts, "probs": probs, "tokens": tokens, "scale": scale,
        "slices": slices,
    }
    return out, w_blocks, cache


def group_attention(f: np.ndarray, params: ZFormerParams, cfg: AttentionConfig):
    out, w_blocks, _ = group_attention_fwd(f, params, cfg)
    return out, w_blocks


def group_attention_bwd(g_out: np.ndarray, cache: dict, params: ZFormerParams):
    """Gradient of the group branch; no gradient flows out of w_blocks (its
    only consumer, the top-k ranking, is frozen)."""
    counts = cache["counts"]
    g_tokens, gw_o, gb_o = linear_backward(g_out, cache["tokens"], params.w_o)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    g_block_out = np.add.reduceat(g_tokens, starts, axis=0)
    g_qb = np.zeros_like(cache["qb"])
    g_kb = np.zeros_like(cache["kb"])
    g_vb = np.zeros_like(cache["vb"])
    for p, hs in zip(cache["probs"], cache["slices"]):
        g_o = g_block_out[:, hs]
        g_p = g_o @ cache["vb"][:, hs].T
        g_vb[:, hs] = p.T @ g_o
        g_s = softmax_rows_backward(g_p, p) * cache["scale"]
        g_qb[:, hs] = g_s @ cache["kb"][:, hs]
        g_kb[:, hs] = g_s.T @ cache["qb"][:, hs]
    g_q = _unpool(g_qb, counts)
    g_k = _unpool(g_kb, counts)
    g_v = _unpool(g_vb, counts)
    f = cache["f"]
    gf_q, gw_q, gb_q = linear_backward(g_q, f, params.w_q)
    gf_k, gw_k, gb_k = linear_backward(g_k, f, params.w_k)
    gf_v, gw_v, gb_v = linear_backward(g_v, f, params.w_v)
    grads = {
        "w_q": (gw_q, gb_q), "w_k": (gw_k, gb_k), "w_v": (gw_v, gb_v),
        "w_o": (gw_o, gb_o),
    }
    return gf_q + gf_k + gf_v, grads


# ---------------------------------------------------------------------------
# top-k block selection and attention


def select_blocks(w_blocks: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k blocks each query block attends to, rows sorted
    ascending. A block's own index is always included; remaining slots take
    the highest-affinity blocks, ties resolved toward the lower index."""
    n_blocks = w_blocks.shape[0]
    if not 1 <= k <= n_blocks:
        raise RangeError(f"k must be in [1, {n_blocks}], got {k}")
    ranked = np.array(w_blocks, dtype=np.float64, copy=True)
    np.fill_diagonal(ranked, np.inf)
    order = np.argsort(-ranked, axis=1, kind="stable")
    return np.sort(order[:, :k], axis=1)


def _gather_indices(selection_row: np.ndarray, counts: np.ndarray, starts: np.ndarray):
    parts = [np.arange(starts[b], starts[b] + counts[b]) for b in selection_row]
    return np.concatenate(parts)


def _topk_loop_fwd(q, k, v, selection, counts, cfg, want_cache):
    """Reference path: one python iteration per query block. Handles ragged
    final blocks; used for small inputs and for gradient caches."""
    n = q.shape[0]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    slices, dh = _head_slices(cfg)
    scale = dh ** -0.5  # python float: keeps float32 inputs in float32
    tok_out = np.empty_like(q)
    blocks = []
    for i in range(len(counts)):
        rows = slice(int(starts[i]), int(starts[i] + counts[i]))
        idx = _gather_indices(selection[i], counts, starts)
        ks, vs = k[idx], v[idx]
        probs = []
        for hs in slices:
            scores = (q[rows, hs] @ ks[:, hs].T) * scale
            p = softmax_rows(scores)
            probs.append(p)
            tok_out[rows, hs] = p @ vs[:, hs]
        if want_cache:
            blocks.append({"rows": rows, "idx": idx, "probs": probs})
    return tok_out, blocks


def _topk_chunked(q, k, v, selection, cfg):
    """Vectorized path for n divisible by block_len: query blocks are batched
    in chunks sized to a fixed working-set budget.

    The gather/score buffers are allocated once and reused for every chunk --
    cycling hundreds of MB of fresh allocations per chunk made the matmuls
    several times slower (cold pages, broken hugepages). Keys and values are
    gathered a whole block at a time so each copied run is contiguous."""
    n = q.shape[0]
    block_len = cfg.block_len
    n_blocks = n // block_len
    k_sel = selection.shape[1]
    kl = k_sel * block_len
    width = q.shape[1]
    slices, dh = _head_slices(cfg)
    scale = dh ** -0.5  # python float: keeps float32 inputs in float32
    per_block = kl * q.dtype.itemsize * (2 * width + block_len)
    chunk = max(1, min(n_blocks, int(_CHUNK_BYTES / max(per_block, 1))))
    k_blocks = k.reshape(n_blocks, block_len, width)
    v_blocks = v.reshape(n_blocks, block_len, width)
    ks = np.empty((chunk, kl, width), q.dtype)
    vs = np.empty((chunk, kl, width), q.dtype)
    scores = np.empty((chunk, block_len, kl), q.dtype)
    tok_out = np.empty_like(q)
    for c0 in range(0, n_blocks, chunk):
        c1 = min(c0 + chunk, n_blocks)
        m = c1 - c0
        sel = selection[c0:c1].ravel()
        np.take(k_blocks, sel, axis=0, out=ks[:m].reshape(m * k_sel, block_len, width))
        np.take(v_blocks, sel, axis=0, out=vs[:m].reshape(m * k_sel, block_len, width))
        qs = q[c0 * block_len : c1 * block_len].reshape(m, block_len, width)
        for hs in slices:
            s = scores[:m]
            np.matmul(qs[:, :, hs] * scale, ks[:m, :, hs].transpose(0, 2, 1), out=s)
            s -= s.max(axis=-1, keepdims=True)
            np.exp(s, out=s)
            s /= s.sum(axis=-1, keepdims=True)
            out_h = np.matmul(s, vs[:m, :, hs])
            tok_out[c0 * block_len : c1 * block_len, hs] = out_h.reshape(
                m * block_len, -1
            )
    return tok_out


def topk_attention_fwd(
    f: np.ndarray,
    w_blocks: np.ndarray,
    params: ZFormerParams,
    cfg: AttentionConfig,
    selection: np.ndarray | None = None,
):
    """Sparse branch. Each query block attends to the raw keys/values of its
    selected blocks only; peak intermediate size is O(n * k * block_len / B),
    never n x n. Pass ``selection`` to pin the block choice (gradient checks
    freeze it); otherwise it is derived from ``w_blocks``."""
    n = f.shape[0]
    counts = _block_counts(n, cfg.block_len)
    n_blocks = len(counts)
    if w_blocks.shape != (n_blocks, n_blocks):
        raise InputError(
            f"w_blocks shape {w_blocks.shape} does not match {n_blocks} blocks"
        )
    if selection is None:
        selection = select_blocks(w_blocks, cfg.resolve_k(n_blocks))
    q = linear(f, params.w_q)
    k = linear(f, params.w_k)
    v = linear(f, params.w_v)
    tok_out, blocks = _topk_loop_fwd(q, k, v, selection, counts, cfg, want_cache=True)
    out = linear(tok_out, params.w_o)
    cache = {
        "f": f, "q": q, "k": k, "v": v, "counts": counts, "blocks": blocks,
        "tok_out": tok_out, "selection": selection, "slices": _head_slices(cfg)[0],
        "scale": (cfg.head_width // cfg.n_heads) ** -0.5,
    }
    return out, cache


def topk_attention(
    f: np.ndarray,
    w_blocks: np.ndarray,
    params: ZFormerParams,
    cfg: AttentionConfig,
    selection: np.ndarray | None = None,
) -> np.ndarray:
    n = f.shape[0]
    counts = _block_counts(n, cfg.block_len)
    n_blocks = len(counts)
    if w_blocks.shape != (n_blocks, n_blocks):
        raise InputError(
            f"w_blocks shape {w_blocks.shape} does not match {n_blocks} blocks"
        )
    if selection is None:
        selection = select_blocks(w_blocks, cfg.resolve_k(n_blocks))
    q = linear(f, params.w_q)
    k = linear(f, params.w_k)
    v = linear(f, params.w_v)
    if n % cfg.block_len == 0:
        tok_out = _topk_chunked(q, k, v, selection, cfg)
    else:
        tok_out, _ = _topk_loop_fwd(q, k, v, selection, counts, cfg, want_cache=False)
    return linear(tok_out, params.w_o)


def topk_attention_bwd(g_out: np.ndarray, cache: dict, params: ZFormerParams):
    """Gradient of the sparse branch with the block selection held fixed."""
    q, k, v = cache["q"], cache["k"], cache["v"]
    g_tok, gw_o, gb_o = linear_backward(g_out, cache["tok_out"], params.w_o)
    g_q = np.zeros_like(q)
    g_k = np.zeros_like(k)
    g_v = np.zeros_like(v)
    for blk in cache["blocks"]:
        rows, idx = blk["rows"], blk["idx"]
        ks, vs = k[idx], v[idx]
        for p, hs in zip(blk["probs"], cache["slices"]):
            g_o = g_tok[rows, hs]
            g_p = g_o @ vs[:, hs].T
            np.add.at(g_v[:, hs], idx, p.T @ g_o)
            g_s = softmax_rows_backward(g_p, p) * cache["scale"]
            g_q[rows, hs] += g_s @ ks[:, hs]
            np.add.at(g_k[:, hs], idx, g_s.T @ q[rows, hs])
    f = cache["f"]
    gf_q, gw_q, gb_q = linear_backward(g_q, f, params.w_q)
    gf_k, gw_k, gb_k = linear_backward(g_k, f, params.w_k)
    gf_v, gw_v, gb_v = linear_backward(g_v, f, params.w_v)
    grads = {
        "w_q": (gw_q, gb_q), "w_k": (gw_k, gb_k), "w_v": (gw_v, gb_v),
        "w_o": (gw_o, gb_o),
    }
    return gf_q + gf_k + gf_v, grads


# ---------------------------------------------------------------------------
# gated fusion


def gated_fuse_fwd(f, grp_out, sel_out, params: ZFormerParams):
    """Per-token sigmoid gates: out = g0 * group + g1 * selected."""
    z = linear(f, params.gate)
    if z.shape[1] != 2:
        raise InputError(f"gate layer must output 2 values, got {z.shape[1]}")
    g = sigmoid(z)
    out = g[:, 0:1] * grp_out + g[:, 1:2] * sel_out
    return out, {"f": f, "g": g, "grp": grp_out, "sel": sel_out}


def gated_fuse(f, grp_out, sel_out, params: ZFormerParams) -> np.ndarray:
    return gated_fuse_fwd(f, grp_out, sel_out, params)[0]


def gated_fuse_bwd(g_out: np.ndarray, cache: dict, params: ZFormerParams):
    g = cache["g"]
    g_grp = g_out * g[:, 0:1]
    g_sel = g_out * g[:, 1:2]
    gz = np.stack(
        [
            (g_out * cache["grp"]).sum(axis=1) * g[:, 0] * (1.0 - g[:, 0]),
            (g_out * cache["sel"]).sum(axis=1) * g[:, 1] * (1.0 - g[:, 1]),
        ],
        axis=1,
    )
    gf, gw, gb = linear_backward(gz, cache["f"], params.gate)
    return gf, g_grp, g_sel, {"gate": (gw, gb)}


# ---------------------------------------------------------------------------
# Z-order pooling


def _cluster_starts(keys: np.ndarray):
    change = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    counts = np.diff(np.r_[change, len(keys)])
    return change, counts


def zorder_pool_fwd(rep, codes: np.ndarray, levels: int, params: ZFormerParams,
                    quantizer: Quantizer, cfg: AttentionConfig):
    """Collapse points sharing a coarse cell (codes equal after dropping
    ``levels`` levels). Features are cluster means through the pooling
    projection; colors are means; positions are coarse-cell centers (or
    member means under ``position_mode='member_mean'``); view_of is the first
    member's. Codes must arrive sorted ascending."""
    codes = np.asarray(codes, dtype=np.uint64)
    if codes.shape != (len(rep),):
        raise InputError(f"codes shape {codes.shape} != point count {len(rep)}")
    if not 0 <= levels <= quantizer.depth:
        raise RangeError(f"pool levels {levels} out of [0, {quantizer.depth}]")
    if np.any(codes[1:] < codes[:-1]):
        raise InputError("zorder_pool requires codes sorted ascending")
    keys = codes >> np.uint64(3 * levels)
    starts, counts = _cluster_starts(keys)
    mean_feat = np.add.reduceat(rep.features, starts, axis=0) / counts[:, None].astype(
        rep.features.dtype
    )
    pooled_feat = linear(mean_feat, params.pool_proj)
    colors = np.add.reduceat(rep.colors, starts, axis=0) / counts[:, None]
    new_codes = keys[starts]
    if cfg.position_mode == "member_mean":
        positions = np.add.reduceat(rep.positions, starts, axis=0) / counts[:, None]
    else:
        coarse = quantizer.coarsen(levels) if levels else quantizer
        ijk = decode_array(new_codes, coarse.depth)
        positions = coarse.cell_centers(ijk)
    view_of = rep.view_of[starts]
    pooled = type(rep)(positions, pooled_feat, colors, view_of)
    cache = {"starts": starts, "counts": counts, "mean_feat": mean_feat,
             "n_in": len(rep)}
    return pooled, new_codes, cache


def zorder_pool(rep, codes, levels, params, quantizer, cfg: AttentionConfig):
    pooled, new_codes, _ = zorder_pool_fwd(rep, codes, levels, params, quantizer, cfg)
    return pooled, new_codes


def zorder_pool_bwd(g_features: np.ndarray, cache: dict, params: ZFormerParams):
    """Feature-path gradient (positions/colors carry no learned parameters)."""
    g_mean, gw, gb = linear_backward(g_features, cache["mean_feat"], params.pool_proj)
    g_in = np.repeat(g_mean / cache["counts"][:, None], cache["counts"], axis=0)
    return g_in, {"pool_proj": (gw, gb)}


# ---------------------------------------------------------------------------
# full block


def zformer_block_fwd(rep, quantizer: Quantizer, params: ZFormerParams,
                      cfg: AttentionConfig, selection: np.ndarray | None = None):
    """Sort, attend (both branches), fuse, residual-add, pool.

    Returns (pooled representation, pooled codes, cache). The pooled codes are
    valid for the quantizer coarsened by ``cfg.pool_levels``.
    """
    rep_s, codes, perm = sort_by_code(rep, quantizer)
    f = rep_s.features
    grp_out, w_blocks, c_grp = group_attention_fwd(f, params, cfg)
    sel_out, c_sel = topk_attention_fwd(f, w_blocks, params, cfg, selection)
    fused, c_fuse = gated_fuse_fwd(f, grp_out, sel_out, params)
    f_new = f + fused
    rep_mid = rep_s.with_features(f_new)
    pooled, new_codes, c_pool = zorder_pool_fwd(
        rep_mid, codes, cfg.pool_levels, params, quantizer, cfg
    )
    cache = {"perm": perm, "grp": c_grp, "sel": c_sel, "fuse": c_fuse,
             "pool": c_pool, "n_in": len(rep)}
    return pooled, new_codes, cache


def zformer_block(rep, quantizer, params, cfg):
    """Inference-only forward: no gradient caches, so the top-k branch can
    take its chunked path and memory stays proportional to n·k·L, not n²."""
    rep_s, codes, _ = sort_by_code(rep, quantizer)
    f = rep_s.features
    grp_out, w_blocks = group_attention(f, params, cfg)
    sel_out = topk_attention(f, w_blocks, params, cfg)
    fused = gated_fuse(f, grp_out, sel_out, params)
    rep_mid = rep_s.with_features(f + fused)
    return zorder_pool(rep_mid, codes, cfg.pool_levels, params, quantizer, cfg)


def zformer_block_bwd(g_features: np.ndarray, cache: dict, params: ZFormerParams):
    """Gradients of pooled output features w.r.t. every layer and the input
    features (returned in the caller's pre-sort order)."""
    g_f_new, grads = zorder_pool_bwd(g_features, cache["pool"], params)
    gf_fuse, g_grp, g_sel, g_gate = gated_fuse_bwd(g_f_new, cache["fuse"], params)
    _accumulate(grads, g_gate)
    gf_grp, g_attn = group_attention_bwd(g_grp, cache["grp"], params)
    _accumulate(grads, g_attn)
    gf_sel, g_topk = topk_attention_bwd(g_sel, cache["sel"], params)
    _accumulate(grads, g_topk)
    g_sorted = g_f_new + gf_fuse + gf_grp + gf_sel
    g_input = np.empty_like(g_sorted)
    g_input[cache["perm"]] = g_sorted
    return g_input, grads
