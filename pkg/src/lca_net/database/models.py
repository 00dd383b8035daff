import json

import numpy as np
from sqlalchemy import Column, Integer, LargeBinary, String, Text

from ..errors import CheckpointFormatError
from . import Base

# Little-endian float64, independent of the host byte order
FLOAT_DTYPE = np.dtype("<f8")


class MetaEntry(Base):
    """Key/value metadata: format version, config and metrics as JSON."""
    __tablename__ = 'checkpoint_meta'

    key = Column(String(64), primary_key=True)
    value = Column(Text, nullable=False)


class ParameterRecord(Base):
    """One named parameter tensor stored as raw float64 bytes."""
    __tablename__ = 'parameters'

    position = Column(Integer, primary_key=True)
    name = Column(String(128), unique=True, nullable=False)
    shape = Column(Text, nullable=False)  # JSON list
    data = Column(LargeBinary, nullable=False)

    @classmethod
    def from_array(cls, position, name, array):
        """Serialize an array, keeping every float bit-exact."""
        array = np.ascontiguousarray(array, dtype=FLOAT_DTYPE)
        return cls(
            position=position,
            name=name,
            shape=json.dumps(list(array.shape)),
            data=array.tobytes(),
        )

    def to_array(self):
        """Rebuild the array, rejecting blobs whose size disagrees with the shape."""
        shape = tuple(json.loads(self.shape))
        expected = int(np.prod(shape, dtype=np.int64)) * FLOAT_DTYPE.itemsize
        if len(self.data) != expected:
            raise CheckpointFormatError(
                f"Parameter {self.name!r} holds {len(self.data)} bytes, expected {expected}"
            )
        return np.frombuffer(self.data, dtype=FLOAT_DTYPE).reshape(shape).astype(np.float64)


class VocabEntry(Base):
    """Vocabulary row; index 0 is padding and 1 is unknown."""
    __tablename__ = 'vocabulary'

    index = Column(Integer, primary_key=True)
    token = Column(Text, nullable=False)
