from metarep.linalg import BACKEND  # noqa: F401
