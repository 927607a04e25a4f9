"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition (shape, sign, range)."""


class TopologyError(ValidationError):
    """Line list does not describe a tree rooted at the slack bus."""


class ParseError(ValueError):
    """Malformed input file. ``lineno`` is 1-based when known."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}"
            if lineno is not None:
                where += f":{lineno}"
            where += ": "
        super().__init__(where + message)


class ConfigError(ValueError):
    """Scenario configuration is invalid. Carries every problem found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
