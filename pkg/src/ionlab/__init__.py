"""Virtual trapped-ion laboratory for single 25Mg+ ions."""

__version__ = "0.1.0"
