"""Result rendering.

``render(obj, fmt)`` serialises any result object from this package --
impact estimates, concordance estimates, fitted models, test results,
study reports -- to bytes in one of three formats:

- ``json``  canonical machine format: sorted keys, full-precision
            floats, round-trips through ``json.loads``;
- ``csv``   tabular: study reports emit one row per (method, quantity)
            with the summary columns, proportional-hazards tests one row
            per covariate plus a global row, everything else flattened
            key/value pairs;
- ``text``  human-readable lines with floats at six significant digits.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from ._errors import ValidationError
from ._version import __version__
from .simgen import SimReport
from .survfit import PhTestResult

FORMATS = ("json", "csv", "text")

_SIM_COLUMNS = ("method", "quantity", "censoring", "bias", "rmse", "re",
                "se_ratio", "coverage")


@dataclass(frozen=True)
class AnalysisReport:
    """Full record of one impact analysis.

    Bundles the input digest (sizes, horizon, route), the fitted
    coefficients with standard errors where the route provides them, the
    proportional-hazards test table, the enhanced/projected concordance
    estimates, the impact estimate, deterministic runtime metadata, the
    software version and the seed.  Everything in it is reproducible
    from (data, settings, seed), so renderings are byte-identical across
    reruns and thread counts.
    """

    digest: dict
    coefficients: dict
    ph_test: "PhTestResult | None"
    concordance: dict
    impact: object
    runtime: dict
    version: str
    seed: int

    def to_dict(self):
        return {
            "digest": dict(self.digest),
            "coefficients": {k: dict(v) for k, v in self.coefficients.items()},
            "ph_test": None if self.ph_test is None else self.ph_test.to_dict(),
            "concordance": {k: v.to_dict() for k, v in self.concordance.items()},
            "impact": self.impact.to_dict(),
            "runtime": dict(self.runtime),
            "version": self.version,
            "seed": int(self.seed),
        }


def build_analysis_report(ds, est, aux, cox, pht, method, family, seed):
    """Assemble an AnalysisReport from the pieces an impact run produces."""
    digest = {"n": int(ds.n), "p": int(ds.p), "q": int(ds.q),
              "tau": float(ds.tau), "method": method, "family": family}
    names = list(ds.x_names) + list(ds.z_names)
    if aux.get("pr") is not None:
        coef = aux["pr"].coef
        se = [None] * len(names)
    else:
        coef = list(cox.beta) + list(cox.gamma)
        se = [float(s) for s in cox.se]
    coefficients = {name: {"estimate": float(c), "se": s}
                    for name, c, s in zip(names, coef, se)}
    key = "pl-cpe-naive" if est.method == "pl-cpe-naive" else est.method
    enhanced, projected = aux["estimates"][key]
    concordance = {"enhanced": enhanced, "projected": projected}
    # Wall-clock timings and worker counts are deliberately excluded:
    # renderings must be byte-identical across reruns and thread counts.
    runtime = {"bootstrap_reps": int(est.bootstrap_reps),
               "bootstrap_failures": int(est.bootstrap_failures)}
    return AnalysisReport(digest=digest, coefficients=coefficients,
                          ph_test=pht, concordance=concordance, impact=est,
                          runtime=runtime, version=__version__,
                          seed=int(seed))


def _payload(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "_asdict"):
        return dict(obj._asdict())
    if isinstance(obj, dict):
        return obj
    raise ValidationError("cannot render object of type %s"
                          % type(obj).__name__)


def _flatten(payload, prefix=""):
    items = []
    for key in sorted(payload):
        value = payload[key]
        name = "%s.%s" % (prefix, key) if prefix else str(key)
        if isinstance(value, dict):
            items.extend(_flatten(value, name))
        elif (isinstance(value, (list, tuple)) and value
              and all(isinstance(v, dict) for v in value)):
            for i, v in enumerate(value):
                items.extend(_flatten(v, "%s.%d" % (name, i)))
        else:
            items.append((name, value))
    return items


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return json.dumps(list(value))
    return str(value)


def _text_value(value):
    if value is None:
        return "-"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.6g" % value
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_text_value(v) for v in value) + "]"
    return str(value)


def _render_json(obj):
    return (json.dumps(_payload(obj), sort_keys=True, indent=2) + "\n").encode()


def _write_rows(rows, header):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    return buf.getvalue().encode()


def _render_csv(obj):
    if isinstance(obj, SimReport):
        rows = [[row[c] for c in _SIM_COLUMNS] for row in obj.to_dict()["rows"]]
        return _write_rows(rows, _SIM_COLUMNS)
    if isinstance(obj, PhTestResult):
        rows = [[name, float(stat), float(p)] for name, stat, p
                in zip(obj.names, obj.statistics, obj.p_values)]
        rows.append(["GLOBAL", float(obj.global_statistic),
                     float(obj.global_p_value)])
        return _write_rows(rows, ("name", "statistic", "p_value"))
    rows = _flatten(_payload(obj))
    return _write_rows(rows, ("key", "value"))


def _render_text(obj):
    if isinstance(obj, SimReport):
        d = obj.to_dict()
        lines = []
        scn = d["scenario"]
        lines.append("generator=%s n=%d tau=%s censoring=%s xi_target=%s"
                     % (scn["generator"], scn["n"], _text_value(scn["tau"]),
                        _text_value(scn["censor_share"]),
                        _text_value(scn["xi_target"])))
        pop = d["population"]
        lines.append("population: kappa=%s kappa_projected=%s xi=%s"
                     % tuple(_text_value(pop[k])
                             for k in ("kappa", "kappa_projected", "xi")))
        lines.append("iterations=%d failures=%d bootstrap_reps=%d seed=%d"
                     % (d["iterations"], d["iteration_failures"],
                        d["bootstrap_reps"], d["seed"]))
        lines.append("ph_rejection_rate=%s"
                     % _text_value(d["ph_rejection_rate"]))
        widths = [10, 10, 10, 10, 10, 8, 9, 9]
        header = ["method", "quantity", "censoring", "bias", "rmse", "re",
                  "se_ratio", "coverage"]
        lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
        for row in d["rows"]:
            cells = [_text_value(row[c]) for c in _SIM_COLUMNS]
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
        return ("\n".join(lines) + "\n").encode()
    lines = ["%s: %s" % (name, _text_value(value))
             for name, value in _flatten(_payload(obj))]
    return ("\n".join(lines) + "\n").encode()


def render(obj, fmt="json"):
    """Serialise a result object to bytes in the requested format."""
    fmt = str(fmt).strip().lower()
    if fmt == "json":
        return _render_json(obj)
    if fmt == "csv":
        return _render_csv(obj)
    if fmt == "text":
        return _render_text(obj)
    raise ValidationError("unknown output format %r (choose from %s)"
                          % (fmt, ", ".join(FORMATS)))
