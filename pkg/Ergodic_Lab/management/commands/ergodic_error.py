from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Error against the invariant average as a function of the horizon at fixed dt."
    experiment = "ergodic_error"
    flags = ("problem", "dt", "alpha", "x0", "observable", "horizons", "paths", "lipschitz")

    def report(self, outcome):
        summary = outcome.summary
        self.stdout.write(f"decay rate {summary['decay_rate']:.3f}, plateau {summary['plateau']!r}")
