from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Reference value of an observable under the invariant law (closed form, quadrature or fine step)."
    experiment = "oracle"
    flags = ("problem", "observable", "x0", "horizon", "dt_ref", "paths", "alpha")

    def report(self, outcome):
        summary = outcome.summary
        self.stdout.write(f"{summary['provenance']} value: {summary['value']!r}")
        if "dual_agrees" in summary:
            style = self.style.SUCCESS if summary["dual_agrees"] else self.style.ERROR
            self.stdout.write(style(
                f"rejection sampler: {summary['dual_mean']!r} +- {summary['dual_stderr']!r}"
            ))
