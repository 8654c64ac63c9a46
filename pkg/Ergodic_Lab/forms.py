"""RunConfig: parsing, validation and rendering of the key = value config format.

Config text is turned into a ``MultiValueDict`` (repeated keys form lists)
and validated by ``RunConfigForm``.  Every problem found is reported, each
tagged UnknownKey, MissingRequired, RangeViolation or InvalidValue.
"""

import math
from dataclasses import dataclass, fields

from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError
from django.utils.datastructures import MultiValueDict

from .engine import parse_observable
from .errors import ConfigError, UnknownObservable
from .model import default_catalog

EXPERIMENTS = (
    "simulate",
    "estimate",
    "oracle",
    "moment_growth",
    "weak_error",
    "ergodic_error",
    "cost",
    "contraction",
    "diverge",
    "check",
)

REQUIRED_KEYS = {
    "simulate": ("dt", "steps"),
    "estimate": ("dt", "steps"),
    "oracle": (),
    "moment_growth": ("dt", "times"),
    "weak_error": ("dt_list", "horizon"),
    "ergodic_error": ("dt", "horizons"),
    "cost": ("epsilon",),
    "contraction": ("x0_b", "horizon"),
    "diverge": ("dt", "steps"),
    "check": (),
}

ISSUE_KINDS = {
    "required": "MissingRequired",
    "min_value": "RangeViolation",
    "max_value": "RangeViolation",
    "range": "RangeViolation",
}

MAX_SEED = 2 ** 64 - 1


def _positive(value):
    if not value > 0:
        raise ValidationError("must be positive, got %(value)s", code="range", params={"value": value})


def _open_unit(value):
    if not 0 < value < 1:
        raise ValidationError("must lie in (0, 1), got %(value)s", code="range", params={"value": value})


# ==========================================
# 1. FIELDS
# ==========================================

class ListField(forms.Field):
    """A repeated key, read with ``getlist``; an absent key gives ()."""

    widget = forms.MultipleHiddenInput
    item_field = forms.CharField

    def __init__(self, *, item_validators=(), **kwargs):
        kwargs.setdefault("required", False)
        super().__init__(**kwargs)
        self.item = self.item_field(validators=list(item_validators))

    def to_python(self, value):
        if not value:
            return ()
        items = []
        for raw in value:
            if str(raw).strip() == "":
                raise ValidationError("empty list entry", code="invalid")
            items.append(self.item.clean(str(raw).strip()))
        return tuple(items)


class FloatListField(ListField):
    item_field = forms.FloatField


class IntListField(ListField):
    item_field = forms.IntegerField


class SwitchField(forms.TypedChoiceField):
    """Boolean written as true / false."""

    def __init__(self, **kwargs):
        super().__init__(
            choices=[("true", "true"), ("false", "false")],
            coerce=lambda v: v == "true",
            empty_value=False,
            required=False,
            **kwargs,
        )


# ==========================================
# 2. FORM
# ==========================================

class RunConfigForm(forms.Form):
    experiment = forms.ChoiceField(choices=[(e, e) for e in EXPERIMENTS])

    # problem selection
    problem = forms.CharField(required=False)
    drift_coeff = FloatListField()
    gamma = forms.FloatField(required=False, validators=[_positive])
    growth_degree = forms.IntegerField(required=False, min_value=0)
    sigma = forms.FloatField(required=False, validators=[_positive])
    dim = forms.IntegerField(required=False, min_value=1)
    rotation = forms.FloatField(required=False)

    # scheme
    scheme = forms.ChoiceField(choices=[("tamed", "tamed"), ("euler", "euler")], required=False)
    dt = forms.FloatField(required=False, validators=[_positive])
    dt_cap = forms.FloatField(required=False, validators=[_positive])
    alpha = forms.FloatField(required=False, validators=[_positive])
    steps = forms.IntegerField(required=False, min_value=0)
    x0 = FloatListField()
    x0_b = FloatListField()
    zero_noise = SwitchField()
    checkpoints = IntListField()

    # estimation
    observable = forms.CharField(required=False)
    order = forms.IntegerField(required=False, min_value=0)
    paths = forms.IntegerField(required=False, min_value=2)
    seed = forms.IntegerField(required=False, min_value=0, max_value=MAX_SEED)
    workers = forms.IntegerField(required=False, min_value=1)
    out = forms.CharField(required=False)

    # sweeps
    times = FloatListField()
    dt_list = FloatListField(item_validators=[_positive])
    horizons = FloatListField()
    horizon = forms.FloatField(required=False, validators=[_positive])
    dt_ref = forms.FloatField(required=False, validators=[_positive])
    dt_fine = forms.FloatField(required=False, validators=[_positive], max_value=1e-3)
    epsilon = FloatListField(item_validators=[_open_unit])
    R = forms.IntegerField(required=False, min_value=0)
    c_time = forms.FloatField(required=False, validators=[_positive])
    c_acc = forms.FloatField(required=False, validators=[_positive])
    end_to_end = SwitchField()
    lipschitz = forms.FloatField(required=False, validators=[_positive])

    # assumption checks and quadrature
    n_pairs = forms.IntegerField(required=False, min_value=1)
    n_points = forms.IntegerField(required=False, min_value=1)
    radius = forms.FloatField(required=False, validators=[_positive])
    nodes = forms.IntegerField(required=False, min_value=9)
    rule = forms.ChoiceField(choices=[("simpson", "simpson"), ("trapezoid", "trapezoid")], required=False)
    lower = forms.FloatField(required=False)
    upper = forms.FloatField(required=False)

    def clean_checkpoints(self):
        checkpoints = self.cleaned_data["checkpoints"]
        if any(c < 0 for c in checkpoints):
            raise ValidationError("checkpoints must be nonnegative", code="min_value")
        if list(checkpoints) != sorted(checkpoints):
            raise ValidationError("checkpoints must be sorted", code="invalid")
        return checkpoints

    def clean_times(self):
        times = self.cleaned_data["times"]
        if any(t < 0 for t in times):
            raise ValidationError("times must be nonnegative", code="min_value")
        return times

    def clean_horizons(self):
        horizons = self.cleaned_data["horizons"]
        if any(t < 0 for t in horizons):
            raise ValidationError("horizons must be nonnegative", code="min_value")
        if any(b <= a for a, b in zip(horizons, horizons[1:])):
            raise ValidationError("horizons must be strictly increasing", code="invalid")
        return horizons

    def clean_dt_list(self):
        dt_list = self.cleaned_data["dt_list"]
        if any(b >= a for a, b in zip(dt_list, dt_list[1:])):
            raise ValidationError("dt_list must be strictly decreasing", code="invalid")
        return dt_list

    def clean_observable(self):
        text = self.cleaned_data["observable"]
        if text:
            try:
                parse_observable(text)
            except UnknownObservable as exc:
                raise ValidationError(str(exc), code="invalid") from None
        return text

    def clean(self):
        data = super().clean()
        defaults = settings.TAMED_ERGO

        for key in REQUIRED_KEYS.get(data.get("experiment"), ()):
            if key in data and data[key] in (None, ()):
                self.add_error(key, ValidationError(f"required for {data['experiment']}", code="required"))

        if data.get("drift_coeff"):
            if data.get("problem") not in ("", "polynomial"):
                self.add_error("problem", ValidationError("drift_coeff needs problem = polynomial", code="invalid"))
            data["problem"] = "polynomial"
            for key in ("gamma", "growth_degree"):
                if key in data and data[key] is None:
                    self.add_error(key, ValidationError("required for a polynomial problem", code="required"))
        elif "problem" in data:
            data["problem"] = data["problem"] or "ou"
            if data["problem"] not in default_catalog().names():
                self.add_error("problem", ValidationError(
                    f"unknown problem {data['problem']!r}; known: {', '.join(default_catalog().names())}",
                    code="invalid",
                ))

        fallbacks = {
            "scheme": "tamed",
            "dt_cap": defaults["DT_CAP"],
            "alpha": defaults["ALPHA"],
            "observable": "moment:2",
            "order": 2,
            "paths": defaults["PATHS"],
            "seed": defaults["SEED"],
            "workers": defaults["WORKERS"],
            "out": defaults["OUTPUT_DIR"],
            "dt_fine": 1e-3,
            "R": 1,
            "c_time": 1.0,
            "c_acc": 1.0,
            "n_pairs": 10000,
            "n_points": 10000,
            "radius": 10.0,
            "nodes": 4001,
            "rule": "simpson",
        }
        for key, value in fallbacks.items():
            if key in data and data[key] in (None, ""):
                data[key] = value

        cap = data.get("dt_cap")
        if cap is not None:
            for key in ("dt", "dt_ref", "dt_fine"):
                if data.get(key) is not None and data[key] > cap:
                    self.add_error(key, ValidationError(f"{key}={data[key]} exceeds dt_cap={cap}", code="range"))
            if any(dt > cap for dt in data.get("dt_list") or ()):
                self.add_error("dt_list", ValidationError(f"entries must not exceed dt_cap={cap}", code="range"))

        if data.get("rule") == "simpson" and data.get("nodes") is not None and data["nodes"] % 2 == 0:
            self.add_error("nodes", ValidationError("simpson rule needs an odd number of nodes", code="invalid"))
        if data.get("lower") is not None and data.get("upper") is not None and not data["lower"] < data["upper"]:
            self.add_error("upper", ValidationError("upper must exceed lower", code="range"))
        return data


# ==========================================
# 3. RUN CONFIG
# ==========================================

@dataclass(frozen=True)
class RunConfig:
    experiment: str
    problem: str
    drift_coeff: tuple
    gamma: float
    growth_degree: int
    sigma: float
    dim: int
    rotation: float
    scheme: str
    dt: float
    dt_cap: float
    alpha: float
    steps: int
    x0: tuple
    x0_b: tuple
    zero_noise: bool
    checkpoints: tuple
    observable: str
    order: int
    paths: int
    seed: int
    workers: int
    out: str
    times: tuple
    dt_list: tuple
    horizons: tuple
    horizon: float
    dt_ref: float
    dt_fine: float
    epsilon: tuple
    R: int
    c_time: float
    c_acc: float
    end_to_end: bool
    lipschitz: float
    n_pairs: int
    n_points: int
    radius: float
    nodes: int
    rule: str
    lower: float
    upper: float

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


LIST_KEYS = frozenset(name for name, field in RunConfigForm.base_fields.items() if isinstance(field, ListField))


def _read_lines(text):
    data = MultiValueDict()
    issues = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            issues.append(("InvalidValue", f"line {number}", f"expected 'key = value', got {line!r}"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        data.appendlist(key, value)
    return data, issues


def parse_config(text="", experiment=None, overrides=None):
    """Validate config text (plus command-line ``overrides``) into a RunConfig.

    Raises ConfigError listing every problem found.
    """
    data, issues = _read_lines(text)

    if experiment is not None:
        given = data.getlist("experiment")
        if given and any(value != experiment for value in given):
            issues.append(("InvalidValue", "experiment", f"config is for {given[-1]!r}, not {experiment!r}"))
        data.setlist("experiment", [experiment])

    for key, value in (overrides or {}).items():
        if value is None or value == [] or value == ():
            continue
        values = list(value) if isinstance(value, (list, tuple)) else [value]
        data.setlist(key, [_render_value(v) if not isinstance(v, str) else v for v in values])

    for key in data:
        if key not in RunConfigForm.base_fields:
            issues.append(("UnknownKey", key, "not a recognised config key"))
        elif key not in LIST_KEYS and len(data.getlist(key)) > 1:
            issues.append(("InvalidValue", key, "given more than once"))

    form = RunConfigForm(data)
    if not form.is_valid():
        for key, errors in form.errors.as_data().items():
            for error in errors:
                for message in error.messages:
                    issues.append((ISSUE_KINDS.get(error.code, "InvalidValue"), key, message))
    if issues:
        raise ConfigError(issues)

    cleaned = form.cleaned_data
    return RunConfig(**{f.name: cleaned.get(f.name) for f in fields(RunConfig)})


def _render_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"cannot render non-finite value {value}")
        return repr(value)
    return str(value)


def render_config(config):
    """Canonical text form; parse_config(render_config(c)) == c."""
    lines = []
    for key, value in config.as_dict().items():
        if value is None or value == "" or value == ():
            continue
        for item in value if isinstance(value, tuple) else (value,):
            lines.append(f"{key} = {_render_value(item)}")
    return "\n".join(lines) + "\n"
