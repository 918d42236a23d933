"""
Numerical core of the cell-free FL lab: channel drops, converter models, rates
and timing, privacy accounting, the convergence bound, power control,
scheduling and the training loop.

Submodules are imported explicitly (``from sim.power_control import ...``);
data_model depends on sim.errors, so this package stays import-free.
"""

__all__ = [
    'errors',
    'channel',
    'quantization',
    'link_rate',
    'privacy',
    'convergence',
    'barrier',
    'power_control',
    'scheduler',
    'fl_engine',
]
