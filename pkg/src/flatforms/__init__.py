"""flatforms: exact flat coefficient systems and polynomial-form
superconnections over simplicial bases, with a numerical simulator for
the canonical simplex flows."""

__version__ = "0.1.0"
