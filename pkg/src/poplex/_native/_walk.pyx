# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled walk kernel. Semantics match poplex._pywalk exactly."""

from libc.stdint cimport uint64_t, uint32_t, int64_t, int32_t, int8_t

from poplex._native._rng cimport stream_state, next_f64, next_below

BACKEND_NAME = "native"


def generate_walk_block(
    const int64_t[:, ::1] layer_offsets,
    const int32_t[::1] layer_neighbors,
    const int64_t[::1] layer_nbr_base,
    const int64_t[::1] active_offsets,
    const int8_t[::1] active_flat,
    const int32_t[::1] start_nodes,
    int walks_per_node,
    int walk_len,
    double p,
    uint64_t seed,
    long hub_base,
    uint32_t[:, ::1] out_tokens,
    int32_t[::1] out_lengths,
):
    cdef bint aware = hub_base >= 0
    cdef Py_ssize_t row = 0, si, j
    cdef long v, cur, cur_layer, used, nxt, pos, persons
    cdef int64_t a0, o0
    cdef long na, deg
    cdef uint64_t state

    with nogil:
        for si in range(start_nodes.shape[0]):
            v = start_nodes[si]
            for j in range(walks_per_node):
                state = stream_state(seed, <uint64_t>v, <uint64_t>j)
                out_tokens[row, 0] = <uint32_t>v
                pos = 1
                cur = v
                cur_layer = -1
                persons = 1
                while persons < walk_len:
                    a0 = active_offsets[cur]
                    na = <long>(active_offsets[cur + 1] - a0)
                    if na == 0:
                        break
                    if cur_layer >= 0 and layer_offsets[cur_layer, cur + 1] > layer_offsets[cur_layer, cur]:
                        if next_f64(&state) < p:
                            used = cur_layer
                        else:
                            used = active_flat[a0 + <int64_t>next_below(&state, <uint64_t>na)]
                    else:
                        used = active_flat[a0 + <int64_t>next_below(&state, <uint64_t>na)]
                    o0 = layer_nbr_base[used] + layer_offsets[used, cur]
                    deg = <long>(layer_offsets[used, cur + 1] - layer_offsets[used, cur])
                    nxt = layer_neighbors[o0 + <int64_t>next_below(&state, <uint64_t>deg)]
                    if aware:
                        out_tokens[row, pos] = <uint32_t>(hub_base + used)
                        pos += 1
                    out_tokens[row, pos] = <uint32_t>nxt
                    pos += 1
                    persons += 1
                    cur = nxt
                    cur_layer = used
                out_lengths[row] = <int32_t>pos
                row += 1
