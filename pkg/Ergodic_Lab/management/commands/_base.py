from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from Ergodic_Lab.errors import ErgodicLabError
from Ergodic_Lab.forms import parse_config
from Ergodic_Lab.runner import run

# Command-line flags that override config keys, by config key.
FLAGS = {
    "problem": {"help": "Catalog problem name (ou, cubic, double_well, rotation)."},
    "scheme": {"choices": ["tamed", "euler"]},
    "dt": {"help": "Step size."},
    "alpha": {"help": "Taming constant."},
    "steps": {"help": "Number of steps."},
    "x0": {"action": "append", "help": "Initial state coordinate (repeat for each coordinate)."},
    "x0_b": {"action": "append", "help": "Second initial state coordinate."},
    "checkpoints": {"action": "append", "help": "Step index to record (repeatable)."},
    "zero_noise": {"action": "store_true", "help": "Switch the noise off."},
    "observable": {"help": "moment:<m>, coord:<i>:<m> or poly:<c0>,<c1>,..."},
    "order": {"help": "Moment order."},
    "paths": {"help": "Number of Monte Carlo paths M."},
    "times": {"action": "append", "help": "Horizon T (repeatable)."},
    "dt_list": {"action": "append", "help": "Step size of a sweep row (repeatable)."},
    "horizons": {"action": "append", "help": "Horizon N dt (repeatable)."},
    "horizon": {"help": "Fixed horizon T."},
    "dt_ref": {"help": "Fine reference step size."},
    "dt_fine": {"help": "Step size of the coupled pair."},
    "epsilon": {"action": "append", "help": "Target accuracy (repeatable)."},
    "R": {"help": "Exponent of the step-size schedule."},
    "end_to_end": {"action": "store_true", "help": "Also run the scheme on each schedule."},
    "lipschitz": {"help": "Lipschitz constant of the observable."},
    "n_pairs": {"help": "Sampled pairs for the one-sided check."},
    "n_points": {"help": "Sampled points for the growth check."},
    "radius": {"help": "Sampling radius."},
}


class ExperimentCommand(BaseCommand):
    """Shared handling: config file, overrides, run, error conversion."""

    experiment = None
    flags = ()
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Path to a key = value config file.")
        parser.add_argument("--seed", help="Master seed.")
        parser.add_argument("--workers", help="Worker processes (default TAMED_ERGO_WORKERS or CPU count).")
        parser.add_argument("--out", help="Output directory.")
        for key in self.flags:
            parser.add_argument(f"--{key.replace('_', '-')}", dest=key, **FLAGS[key])

    def overrides(self, options):
        keys = ("seed", "workers", "out", *self.flags)
        values = {}
        for key in keys:
            value = options.get(key)
            if value is None or value is False:
                continue
            values[key] = "true" if value is True else value
        return values

    def handle(self, *args, **options):
        text = ""
        if options.get("config"):
            path = Path(options["config"])
            if not path.is_file():
                raise CommandError(f"cli: config file {path} not found")
            text = path.read_text(encoding="utf-8")

        try:
            config = parse_config(text, experiment=self.experiment, overrides=self.overrides(options))
            outcome = run(config)
        except ErgodicLabError as exc:
            raise CommandError(exc.qualified()) from exc
        except ValueError as exc:
            raise CommandError(f"{self.experiment}: {exc}") from exc

        self.report(outcome)
        for artifact in outcome.artifacts:
            self.stdout.write(f"wrote {artifact}")
        self.stdout.write(self.style.SUCCESS(f"{self.experiment} finished (config {outcome.config_hash[:12]})"))

    def report(self, outcome):
        """Echo the headline numbers of the summary."""
        for key, value in outcome.summary.items():
            if isinstance(value, (int, float, str, bool)) or value is None:
                self.stdout.write(f"{key}: {value}")
