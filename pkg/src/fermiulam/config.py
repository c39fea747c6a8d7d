"""Line-oriented run configuration files.

Grammar (one construct per line, '#' starts a comment):

    [section]          sections: profile, run, portrait, params,
    key = value        and any number of [experiment] blocks

Values parse as int, float, bool (true/false), a comma-separated list of
numbers, or a bare string.  Spline knots use the list-of-pairs form
``knots = 0:1.0, 0.25:1.1, 0.5:1.0, 1:1.0``.  A config resolves without any
environment lookups and is serialized verbatim into every output directory,
so a run can be reproduced from its artifacts alone.
"""

import json

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config"]


class ConfigError(ValueError):
    """Malformed or incomplete run configuration."""


def _parse_scalar(text):
    t = text.strip()
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        pass
    return t


def _parse_value(text):
    t = text.strip()
    items = [x.strip() for x in t.split(",")] if "," in t else [t]
    if ":" in t and all(":" in x for x in items):
        # knot list "t:v, t:v, ..."
        try:
            return [[float(a), float(b)] for a, b in (x.split(":", 1) for x in items)]
        except ValueError:
            pass
    if len(items) > 1:
        return [_parse_scalar(x) for x in items]
    return _parse_scalar(t)


class RunConfig:
    """Parsed config: one profile block, run defaults, experiment blocks."""

    def __init__(self, profile=None, run=None, experiments=None, portrait=None,
                 params=None, text=""):
        self.profile = profile or {}
        self.run = run or {}
        self.experiments = experiments or []
        self.portrait = portrait or {}
        self.params = params or {}
        self.text = text

    def resolved(self):
        """Provenance dict embedded in outputs.

        Carries everything that determines the numbers: profile, seeds and
        experiment parameters.  Execution facets that cannot change results
        (worker count, output paths) are excluded on purpose so reruns at any
        parallelism are byte-identical.
        """
        run = {k: v for k, v in self.run.items() if k not in ("workers", "out")}
        return {
            "profile": self.profile,
            "run": run,
            "experiments": self.experiments,
            "portrait": self.portrait,
            "params": self.params,
        }

    def to_json(self):
        return json.dumps(self.resolved(), sort_keys=True, indent=2)


def parse_config(text):
    profile = {}
    run = {}
    portrait = {}
    params = {}
    experiments = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: unterminated section header")
            name = line[1:-1].strip().lower()
            if name == "profile":
                current = profile
            elif name == "run":
                current = run
            elif name == "portrait":
                current = portrait
            elif name == "params":
                current = params
            elif name == "experiment":
                experiments.append({})
                current = experiments[-1]
            else:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, val = line.partition("=")
        current[key.strip()] = _parse_value(val)
    return RunConfig(profile, run, experiments, portrait, params, text)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
