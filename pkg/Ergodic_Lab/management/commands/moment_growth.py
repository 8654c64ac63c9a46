from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Sup over checkpoints of E|X_n|^m for each horizon T."
    experiment = "moment_growth"
    flags = ("problem", "dt", "alpha", "x0", "order", "times", "paths")
