"""Exception hierarchy shared across tagdrive modules."""


class TagDriveError(Exception):
    pass


class WidthMismatch(TagDriveError, ValueError):
    pass


class MalformedText(TagDriveError, ValueError):
    pass


class NonMonotoneTimestamp(TagDriveError, ValueError):
    pass


class IllegalTransition(TagDriveError):
    """An event was delivered in a state that does not accept it."""


class ScenarioMalformed(TagDriveError, ValueError):
    pass


class ContentAccessDenied(TagDriveError):
    """Content was requested while the drive was not in the Running state."""


class BlobAuthFailure(TagDriveError):
    pass


class SerialCollision(TagDriveError):
    pass


class SerialUnknown(TagDriveError, KeyError):
    pass


class StorageCorrupt(TagDriveError):
    pass


class BindFailure(TagDriveError):
    pass


class ServiceUnreachable(TagDriveError):
    pass


class OversizeSector(TagDriveError, ValueError):
    pass


class ContentAuthFailure(TagDriveError):
    pass


class HeaderCorrupt(TagDriveError):
    pass
