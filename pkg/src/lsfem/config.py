"""Experiment configuration, shared by the library driver and the CLI.

A config can be loaded from a plain-text key=value file; command-line flags
override file values.  Keys match the CLI flag names with dashes replaced
by underscores.
"""

from dataclasses import dataclass, fields


@dataclass
class ExperimentConfig:
    problem: str = "singular-mixed"
    q: int = 0
    mode: str = "adaptive"            # "adaptive" | "uniform"
    theta: float = 0.6
    theta_squared: bool = False       # mark against theta^2 * total instead
    max_dofs: int = 10000
    test_mesh: str = "matched"        # "matched" | "full"
    volume_quad_degree: int = 0       # 0 = default 2*(max trial degree)+2
    boundary_quad_degree: int = 0     # 0 = volume default + 4
    graded_edge_levels: int = 30
    true_error_quad_degree: int = 12
    true_error_graded_levels: int = 3
    true_error_graded_degree: int = 7
    probe: bool = False
    probe_max_dofs: int = 4000
    out: str = ""

    def validate(self):
        if self.q not in (0, 1):
            raise ValueError(f"q must be 0 or 1, got {self.q}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if self.mode not in ("adaptive", "uniform"):
            raise ValueError(f"mode must be adaptive or uniform, got {self.mode}")
        if self.test_mesh not in ("matched", "full"):
            raise ValueError(f"test_mesh must be matched or full, got {self.test_mesh}")
        if self.max_dofs < 1:
            raise ValueError("max_dofs must be positive")
        return self


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def parse_config_file(path) -> dict:
    """Read key=value lines; '#' starts a comment, blank lines ignored."""
    values = {}
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            typ = types[key]
            if typ in ("bool", bool):
                try:
                    values[key] = _BOOL[val.lower()]
                except KeyError:
                    raise ValueError(f"{path}:{lineno}: bad boolean {val!r}") from None
            elif typ in ("int", int):
                values[key] = int(val)
            elif typ in ("float", float):
                values[key] = float(val)
            else:
                values[key] = val
    return values


def make_config(file_values=None, **overrides) -> ExperimentConfig:
    """File values first, keyword overrides on top (None means 'not given')."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**merged).validate()
