"""fibergof: exact conditional goodness-of-fit testing for log-linear network models.

Graphs are encoded as dyadic contingency tables, models as integer design
matrices, and p-values are estimated by Metropolis-Hastings walks on the
fiber of the observed sufficient statistics.
"""

__version__ = "0.1.0"
