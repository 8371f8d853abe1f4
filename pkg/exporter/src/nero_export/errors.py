class ExportError(Exception):
    """Base class for exporter failures."""


class LayerNotFound(ExportError):
    pass


class NonAffineHead(ExportError):
    pass


class ShapeMismatch(ExportError):
    pass
