from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Weak error against a closed-form or fine-step reference over a list of step sizes."
    experiment = "weak_error"
    flags = ("problem", "scheme", "alpha", "x0", "observable", "dt_list", "horizon", "dt_ref", "paths")

    def report(self, outcome):
        summary = outcome.summary
        style = self.style.SUCCESS if summary["order_in_range"] else self.style.ERROR
        self.stdout.write(style(f"fitted weak order {summary['slope']:.3f} ({summary['reference']} reference)"))
