class DataError(ValueError):
    """Input data or configuration failed validation."""

    def __init__(self, message, *, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class ConfigError(DataError):
    pass
