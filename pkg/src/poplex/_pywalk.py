"""Pure-Python walk kernel; reference semantics for the compiled twin.

Every walk (start node v, repeat j) consumes its own splitmix64 stream
keyed by (seed, v, j), so output bytes are identical for any scheduling
and for both backends.
"""

from __future__ import annotations

import numpy as np

from .rng import Stream

BACKEND_NAME = "python"


def generate_walk_block(
    layer_offsets: np.ndarray,
    layer_neighbors: np.ndarray,
    layer_nbr_base: np.ndarray,
    active_offsets: np.ndarray,
    active_flat: np.ndarray,
    start_nodes: np.ndarray,
    walks_per_node: int,
    walk_len: int,
    p: float,
    seed: int,
    hub_base: int,
    out_tokens: np.ndarray,
    out_lengths: np.ndarray,
) -> None:
    aware = hub_base >= 0
    row = 0
    for v in start_nodes:
        v = int(v)
        for j in range(walks_per_node):
            stream = Stream(seed, v, j)
            buf = out_tokens[row]
            buf[0] = v
            pos = 1
            cur = v
            cur_layer = -1
            persons = 1
            while persons < walk_len:
                a0 = active_offsets[cur]
                na = int(active_offsets[cur + 1] - a0)
                if na == 0:
                    break
                if cur_layer >= 0 and layer_offsets[cur_layer, cur + 1] > layer_offsets[cur_layer, cur]:
                    if stream.next_f64() < p:
                        used = cur_layer
                    else:
                        used = int(active_flat[a0 + stream.next_below(na)])
                else:
                    used = int(active_flat[a0 + stream.next_below(na)])
                o0 = int(layer_nbr_base[used] + layer_offsets[used, cur])
                deg = int(layer_offsets[used, cur + 1] - layer_offsets[used, cur])
                nxt = int(layer_neighbors[o0 + stream.next_below(deg)])
                if aware:
                    buf[pos] = hub_base + used
                    pos += 1
                buf[pos] = nxt
                pos += 1
                persons += 1
                cur = nxt
                cur_layer = used
            out_lengths[row] = pos
            row += 1
