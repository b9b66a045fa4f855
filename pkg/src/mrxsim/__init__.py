"""Forward simulation of magnetorelaxometry imaging (MRXI) setups.

The pipeline mirrors the usual workflow::

    setup, config  ->  voxel grid  ->  excitation fields  ->  raw blocks
                   ->  current pattern  ->  system matrix

See :mod:`mrxsim.model` for the geometry types, :mod:`mrxsim.fields` and
:mod:`mrxsim.relaxation` for the physics, :mod:`mrxsim.phantom` for test
phantoms and :mod:`mrxsim.io` for file formats.
"""

from .errors import FormatError, GeometryError, MRXError, MRXWarning, ValidationError
from .model import (
    Coil,
    Config,
    PhysicsParams,
    Roi,
    Sensor,
    Setup,
    ValidationReport,
    check_compatibility,
    create_coil_loop,
    create_current_pattern,
    create_entity_array,
    get_roi,
    parse_coils,
    relocate_structure,
    validate_config,
    validate_setup,
)
from .fields import (
    ExcitationFieldSet,
    VoxelGrid,
    coil_field,
    create_excitation_fields,
    create_voxel_grid,
    dipole_coil_field,
    segment_field,
)
from .relaxation import (
    SystemMatrix,
    SystemMatrixRaw,
    apply_current_pattern,
    create_system_matrix,
    dipole_kernel,
    forward_apply,
    sensor_response,
    system_matrix_raw,
)
from .phantom import EllipsoidSpec, Phantom, create_phantom, ellipsoid_phantom

__version__ = "0.1.0"

__all__ = [
    "Coil",
    "Config",
    "EllipsoidSpec",
    "ExcitationFieldSet",
    "FormatError",
    "GeometryError",
    "MRXError",
    "MRXWarning",
    "Phantom",
    "PhysicsParams",
    "Roi",
    "Sensor",
    "Setup",
    "SystemMatrix",
    "SystemMatrixRaw",
    "ValidationError",
    "ValidationReport",
    "VoxelGrid",
    "apply_current_pattern",
    "check_compatibility",
    "coil_field",
    "create_coil_loop",
    "create_current_pattern",
    "create_entity_array",
    "create_excitation_fields",
    "create_phantom",
    "create_system_matrix",
    "create_voxel_grid",
    "dipole_coil_field",
    "dipole_kernel",
    "ellipsoid_phantom",
    "forward_apply",
    "get_roi",
    "parse_coils",
    "relocate_structure",
    "segment_field",
    "sensor_response",
    "system_matrix_raw",
    "validate_config",
    "validate_setup",
]
