from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Simulate a single tamed (or Euler) path and write its recorded states."
    experiment = "simulate"
    flags = ("problem", "scheme", "dt", "alpha", "steps", "x0", "checkpoints", "zero_noise")
