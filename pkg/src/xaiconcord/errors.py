class ValidationError(ValueError):
    """Bad input: malformed file, unknown name, violated precondition.

    The CLI maps this family to exit code 2.
    """


class UnknownCategoryError(ValidationError):
    def __init__(self, column, row, value):
        self.column, self.row, self.value = column, row, value
        super().__init__(f"unknown category {value!r} in column {column!r} at row {row}")


class UnknownFeatureError(ValidationError):
    pass


class UniverseMismatchError(ValidationError):
    pass


class FormatVersionError(ValidationError):
    pass
