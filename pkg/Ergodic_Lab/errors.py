class ErgodicLabError(Exception):
    """Base class for every failure surfaced by the experiment modules."""

    module = "ergodic_lab"

    def qualified(self):
        return f"{self.module}: {self}"


# --- model ---

class DriftOverflow(ErgodicLabError):
    module = "model"

    def __init__(self, x):
        self.x = x
        super().__init__(f"drift returned a non-finite value at x={x!r}")


class InsufficientSamples(ErgodicLabError):
    module = "model"


class NotGradientProblem(ErgodicLabError):
    module = "model"


class UnknownProblem(ErgodicLabError):
    module = "model"

    def __init__(self, name):
        self.name = name
        super().__init__(f"no catalog problem named {name!r}")


# --- montecarlo ---

class AllPathsExploded(ErgodicLabError):
    module = "montecarlo"

    def __init__(self, n_exploded):
        self.n_exploded = n_exploded
        super().__init__(f"all {n_exploded} paths exploded; no estimate available")


class TamedPathExploded(ErgodicLabError):
    module = "montecarlo"

    def __init__(self, problem_name, n_exploded, n_paths):
        self.n_exploded = n_exploded
        super().__init__(f"{n_exploded} of {n_paths} tamed paths exploded on catalog problem {problem_name!r}")


class UnknownObservable(ErgodicLabError):
    module = "montecarlo"

    def __init__(self, text):
        self.text = text
        super().__init__(
            f"cannot parse observable {text!r}; expected moment:<m>, coord:<i>:<m> or poly:<c0>,<c1>,..."
        )


# --- oracle ---

class GridTooNarrow(ErgodicLabError):
    module = "oracle"

    def __init__(self, boundary_ratio):
        self.boundary_ratio = boundary_ratio
        super().__init__(
            f"density at the grid boundary is {boundary_ratio:.3e} of its maximum (needs < 1e-12)"
        )


class NodesTooFew(ErgodicLabError):
    module = "oracle"

    def __init__(self, delta):
        self.delta = delta
        super().__init__(f"doubling the quadrature nodes moved the result by {delta:.3e} (needs < 1e-8)")


class LowAcceptance(ErgodicLabError):
    module = "oracle"

    def __init__(self, rate):
        self.rate = rate
        super().__init__(f"rejection sampler accepted {rate:.2e} of its proposals (needs >= 1e-3)")


# --- experiments ---

class SlopeUndetermined(ErgodicLabError):
    module = "experiments"

    def __init__(self, usable_rows, needed):
        self.usable_rows = usable_rows
        super().__init__(f"only {usable_rows} usable rows for the fit, need at least {needed}")


# --- cli ---

class ConfigError(ErgodicLabError):
    """Carries every validation problem found, as (kind, key, message) triples."""

    module = "cli"

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [f"{kind} on {key!r}: {message}" for kind, key, message in self.issues]
        super().__init__("; ".join(lines))

    def kinds_for(self, key):
        return [kind for kind, issue_key, _ in self.issues if issue_key == key]
