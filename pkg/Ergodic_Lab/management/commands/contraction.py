from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Synchronous-coupling contraction ratio of two tamed paths from different initial states."
    experiment = "contraction"
    flags = ("problem", "x0", "x0_b", "dt_fine", "horizon", "alpha")

    def report(self, outcome):
        summary = outcome.summary
        style = self.style.SUCCESS if summary["passed"] else self.style.ERROR
        self.stdout.write(style(f"max ratio {summary['max_ratio']:.6f}"))
