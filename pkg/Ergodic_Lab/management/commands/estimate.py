from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Monte Carlo estimate of E[phi(X_N)] with standard error and 95% interval."
    experiment = "estimate"
    flags = ("problem", "scheme", "dt", "alpha", "steps", "x0", "zero_noise", "observable", "paths")

    def report(self, outcome):
        estimate = outcome.summary["estimate"]
        self.stdout.write(
            f"mean {estimate['mean']!r} +- {estimate['ci95_halfwidth']!r} "
            f"(stderr {estimate['stderr']!r}, {estimate['n_samples']} paths, {estimate['n_exploded']} exploded)"
        )
