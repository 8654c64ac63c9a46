from ._base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Sampling checks of the one-sided condition and the polynomial growth bound."
    experiment = "check"
    flags = ("problem", "alpha", "n_pairs", "n_points", "radius")

    def report(self, outcome):
        for report in outcome.summary["reports"]:
            style = self.style.SUCCESS if report["passed"] else self.style.ERROR
            self.stdout.write(style(
                f"{report['problem']} {report['kind']}: worst ratio {report['worst_ratio']!r} "
                f"over {report['samples_tested']} samples"
            ))
        if "modified_drift_slope_sup" in outcome.summary:
            self.stdout.write(f"modified drift slope sup: {outcome.summary['modified_drift_slope_sup']!r}")
