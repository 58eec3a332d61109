"""Exception hierarchy for the search engine."""


class ShapeSearchError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ShapeSearchError):
    """Mesh file is malformed."""


class EmptyMesh(ShapeSearchError):
    """Mesh has no triangles."""


class DegenerateMesh(ShapeSearchError):
    """Mesh cannot be normalized (all vertices coincide)."""


class BadGrid(ShapeSearchError):
    """Descriptor grid does not divide the image resolution."""


class FormatError(ShapeSearchError):
    """Feature or index file does not follow the binary format."""


class DimensionMismatch(ShapeSearchError):
    """Vector dimensions or view counts are inconsistent."""


class EmptyInput(ShapeSearchError):
    """No training vectors supplied."""


class EmptySet(ShapeSearchError):
    """Set-to-set matching on an empty view set."""


class SingletonClass(ShapeSearchError):
    """Query class has no other members; metrics undefined."""


class NoValidQueries(ShapeSearchError):
    """No query produced valid per-query metrics."""


class EmptyManifest(ShapeSearchError):
    """Dataset manifest lists no shapes."""


class AllShapesFailed(ShapeSearchError):
    """Every shape in the manifest failed to build."""


class ChannelMismatch(ShapeSearchError):
    """Query cannot be processed with the index's channel configuration."""


class EmptyIndex(ShapeSearchError):
    """Index holds no shapes."""


class BadSpec(ShapeSearchError):
    """Invalid synthetic dataset specification."""


class BindError(ShapeSearchError):
    """Query service could not bind its address."""
