"""rmtw: exact-rational interval covers, set and function codes, and
separation decoding on the unit interval.

All arithmetic is exact (`fractions.Fraction` end to end); every
randomized suite is seeded and replayable.  See the README for the CLI.
"""

from .errors import ContractError, RmtwError

__version__ = "0.1.0"

__all__ = ["ContractError", "RmtwError", "__version__"]
