class VPOccError(ValueError):
    # root of every domain error; the CLI maps it to exit code 3
    pass


class GeometryError(VPOccError):
    pass


class CoincidentPoints(GeometryError):
    pass


class ParallelLines(GeometryError):
    pass


class DegenerateQuad(GeometryError):
    pass


class PointAtInfinity(GeometryError):
    pass


class NearSingular(GeometryError):
    pass


class NonPositiveDepth(GeometryError):
    pass


class VpOutOfBounds(GeometryError):
    pass


class CoincidentVpRef(GeometryError):
    pass


class ReferenceOutOfBounds(GeometryError):
    pass


class DimensionMismatch(VPOccError):
    pass


class FormatError(ValueError):
    # malformed input file (header, magic, size); the CLI maps it to exit code 2
    pass


class EmptyProposal(UserWarning):
    # no voxel received a depth point; downstream volumes stay zero
    pass
