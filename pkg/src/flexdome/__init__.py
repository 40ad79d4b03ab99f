"""Safe online learning for finite-horizon constrained MDPs."""
