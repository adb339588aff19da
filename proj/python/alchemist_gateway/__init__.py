"""Matrix gateway: distributed layouts, wire codec, server and client."""

from ._core import (
    AlchemistError,
    BLOCK_META_BYTES,
    ClientSession,
    Command,
    DEFAULT_BUFFER_BYTES,
    DistPair,
    DistScheme,
    ElemType,
    FRAME_HEADER_BYTES,
    Gateway,
    Handle,
    MIN_BUFFER_BYTES,
    MatrixInfo,
    ProcessGrid,
    Simulator,
    TransferEntry,
    TransferPlan,
    WorkerInfo,
    chunk_block,
    decode_block,
    decode_frame,
    decode_task,
    encode_frame,
    encode_task,
    even_partitioning,
    global_of,
    legal_pairs,
    local_of,
    local_shape,
    make_grid,
    owned_slice,
    owner,
    parse_byte_size,
    plan_transfer,
)

__all__ = [name for name in dir() if not name.startswith("_")]
