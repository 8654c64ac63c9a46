from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Step size and step count reaching accuracy epsilon, optionally run end to end."
    experiment = "cost"
    flags = ("problem", "epsilon", "R", "end_to_end", "observable", "x0", "paths", "alpha")

    def report(self, outcome):
        summary = outcome.summary
        for ratio, analytic in zip(summary["step_ratios"], summary["analytic_ratios"]):
            self.stdout.write(f"step-count ratio {ratio:.4f} (analytic {analytic:.4f})")
        if "end_to_end_within_tolerance" in summary:
            ok = summary["end_to_end_within_tolerance"]
            style = self.style.SUCCESS if ok else self.style.ERROR
            self.stdout.write(style(f"end-to-end errors within epsilon + 3 stderr: {ok}"))
