from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Explicit Euler blow-up next to the tamed path on the same noise."
    experiment = "diverge"
    flags = ("problem", "dt", "alpha", "steps", "x0", "zero_noise")
