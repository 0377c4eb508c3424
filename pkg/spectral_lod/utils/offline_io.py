"""Functions for dumping/loading the offline stage of a multiscale run."""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Union, no_type_check

import numpy as np
import scipy.sparse as sp
from google.protobuf import descriptor_pb2, descriptor_pool, message_factory
from google.protobuf.message import DecodeError

from spectral_lod.corrector import Certificate, MultiscaleSpace
from spectral_lod.kernel_basis import BlockKernelBasis, KernelBlock
from spectral_lod.mesh import EntityKind

__all__ = ["DumpHeader", "OfflineDump", "FORMAT_VERSION", "dump_offline", "load_offline"]

FORMAT_VERSION = 1
_PACKAGE = "spectral_lod"

_Field = descriptor_pb2.FieldDescriptorProto
# mirrors offline.proto: message -> [(name, type, repeated, message type)]
_SCHEMA = {
    "Array": [
        ("shape", _Field.TYPE_INT64, True, None),
        ("dtype", _Field.TYPE_STRING, False, None),
        ("data", _Field.TYPE_BYTES, False, None),
    ],
    "Header": [
        ("version", _Field.TYPE_UINT32, False, None),
        ("coarse_divisions", _Field.TYPE_INT64, False, None),
        ("refine_ratio", _Field.TYPE_INT64, False, None),
        ("beta", _Field.TYPE_DOUBLE, False, None),
        ("dual_seed", _Field.TYPE_INT64, False, None),
        ("cond_seed", _Field.TYPE_INT64, False, None),
        ("config_hash", _Field.TYPE_STRING, False, None),
    ],
    "KernelBlock": [
        ("kind", _Field.TYPE_INT32, False, None),
        ("entity", _Field.TYPE_INT64, False, None),
        ("elements", _Field.TYPE_INT64, True, None),
        ("nodes", _Field.TYPE_MESSAGE, False, "Array"),
        ("columns", _Field.TYPE_MESSAGE, False, "Array"),
    ],
    "SparseMatrix": [
        ("rows", _Field.TYPE_INT64, False, None),
        ("cols", _Field.TYPE_INT64, False, None),
        ("indptr", _Field.TYPE_MESSAGE, False, "Array"),
        ("indices", _Field.TYPE_MESSAGE, False, "Array"),
        ("data", _Field.TYPE_MESSAGE, False, "Array"),
    ],
    "Entry": [
        ("key", _Field.TYPE_STRING, False, None),
        ("value", _Field.TYPE_DOUBLE, False, None),
    ],
    "OfflineDump": [
        ("header", _Field.TYPE_MESSAGE, False, "Header"),
        ("n", _Field.TYPE_INT64, False, None),
        ("blocks", _Field.TYPE_MESSAGE, True, "KernelBlock"),
        ("basis", _Field.TYPE_MESSAGE, False, "SparseMatrix"),
        ("owners", _Field.TYPE_MESSAGE, False, "Array"),
        ("certificate", _Field.TYPE_MESSAGE, True, "Entry"),
    ],
}


def _file_descriptor() -> descriptor_pb2.FileDescriptorProto:
    proto = descriptor_pb2.FileDescriptorProto(
        name=f"{_PACKAGE}/offline.proto", package=_PACKAGE, syntax="proto3"
    )
    for message_name, specs in _SCHEMA.items():
        message = proto.message_type.add(name=message_name)
        for number, (name, field_type, repeated, type_name) in enumerate(specs, start=1):
            entry = message.field.add(
                name=name,
                number=number,
                type=field_type,
                label=_Field.LABEL_REPEATED if repeated else _Field.LABEL_OPTIONAL,
            )
            if type_name is not None:
                entry.type_name = f".{_PACKAGE}.{type_name}"
    return proto


def _message_classes() -> Dict[str, Any]:
    pool = descriptor_pool.DescriptorPool()
    pool.AddSerializedFile(_file_descriptor().SerializeToString())
    classes = {}
    for name in _SCHEMA:
        descriptor = pool.FindMessageTypeByName(f"{_PACKAGE}.{name}")
        if hasattr(message_factory, "GetMessageClass"):
            classes[name] = message_factory.GetMessageClass(descriptor)
        else:
            classes[name] = message_factory.MessageFactory(pool).GetPrototype(descriptor)
    return classes


_MESSAGES = _message_classes()


@dataclass(frozen=True)
class DumpHeader:
    """Identity of the cell an offline dump belongs to."""

    coarse_divisions: int
    refine_ratio: int
    beta: float
    dual_seed: int
    cond_seed: int
    config_hash: str
    version: int = FORMAT_VERSION


@dataclass
class OfflineDump:
    """Everything the online stage needs, read back from disk."""

    header: DumpHeader
    kernel: BlockKernelBasis
    space: MultiscaleSpace


@no_type_check
def array_to_buf(array: np.ndarray, array_buf: Any) -> None:
    """Fill a protobuf Array with shape, dtype and little-endian bytes."""
    array = np.ascontiguousarray(array)
    dtype = "<i8" if np.issubdtype(array.dtype, np.integer) else "<f8"
    array_buf.shape.extend(array.shape)
    array_buf.dtype = dtype
    array_buf.data = array.astype(dtype).tobytes()


@no_type_check
def buf_to_array(array_buf: Any) -> np.ndarray:
    """Convert protobuf Array object into numpy ndarray."""
    dtype = np.dtype(array_buf.dtype or "<f8")
    return np.frombuffer(array_buf.data, dtype=dtype).reshape(tuple(array_buf.shape)).copy()


@no_type_check
def dump_offline(
    path: Union[str, Path], header: DumpHeader, kernel: BlockKernelBasis, space: MultiscaleSpace
) -> Path:
    """Serialize kernel blocks, multiscale basis and certificate to a protobuf file."""
    # pylint: disable=no-member
    dump = _MESSAGES["OfflineDump"]()
    dump.header.version = header.version
    dump.header.coarse_divisions = header.coarse_divisions
    dump.header.refine_ratio = header.refine_ratio
    dump.header.beta = header.beta
    dump.header.dual_seed = header.dual_seed
    dump.header.cond_seed = header.cond_seed
    dump.header.config_hash = header.config_hash
    dump.n = kernel.n
    for block in kernel.blocks:
        block_buf = dump.blocks.add()
        block_buf.kind = int(block.kind)
        block_buf.entity = int(block.entity)
        block_buf.elements.extend(int(element) for element in block.elements)
        array_to_buf(block.nodes, block_buf.nodes)
        array_to_buf(block.columns, block_buf.columns)
    basis = sp.csc_matrix(space.basis)
    dump.basis.rows, dump.basis.cols = basis.shape
    array_to_buf(basis.indptr, dump.basis.indptr)
    array_to_buf(basis.indices, dump.basis.indices)
    array_to_buf(basis.data, dump.basis.data)
    array_to_buf(space.owners, dump.owners)
    for key, value in space.certificate.as_dict().items():
        dump.certificate.add(key=key, value=value)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump.SerializeToString())
    return path


@no_type_check
def load_offline(path: Union[str, Path]) -> OfflineDump:
    """Read a dump written by `dump_offline`."""
    # pylint: disable=no-member
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"Offline dump not found at: {path}")
    try:
        dump = _MESSAGES["OfflineDump"].FromString(data)
    except DecodeError as err:
        raise ValueError(f"Malformed offline dump at {path}: {err}") from err
    if dump.header.version != FORMAT_VERSION:
        raise ValueError(
            f"Offline dump {path} has format version {dump.header.version}, "
            f"expected {FORMAT_VERSION}"
        )
    header = DumpHeader(
        coarse_divisions=dump.header.coarse_divisions,
        refine_ratio=dump.header.refine_ratio,
        beta=dump.header.beta,
        dual_seed=dump.header.dual_seed,
        cond_seed=dump.header.cond_seed,
        config_hash=dump.header.config_hash,
        version=dump.header.version,
    )
    blocks = [
        KernelBlock(
            kind=EntityKind(block_buf.kind),
            entity=block_buf.entity,
            elements=tuple(block_buf.elements),
            nodes=buf_to_array(block_buf.nodes),
            columns=buf_to_array(block_buf.columns),
        )
        for block_buf in dump.blocks
    ]
    basis = sp.csc_matrix(
        (
            buf_to_array(dump.basis.data),
            buf_to_array(dump.basis.indices),
            buf_to_array(dump.basis.indptr),
        ),
        shape=(dump.basis.rows, dump.basis.cols),
    )
    certificate = Certificate.from_dict({entry.key: entry.value for entry in dump.certificate})
    space = MultiscaleSpace(
        basis=basis,
        owners=buf_to_array(dump.owners),
        mgs_factors=[],
        certificate=certificate,
        reports=[],
    )
    return OfflineDump(header, BlockKernelBasis(dump.n, blocks), space)
