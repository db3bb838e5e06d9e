"""Command-line interface: ``truncevt <command> [options]``.

Commands
--------
fit       GP and exponential fits per group, with the exponential LR test.
tests     gender, early/late and country-group comparisons.
qq        exponential QQ coordinates, one CSV per group.
forecast  Poisson trend, count scaling, record-age densities and probabilities.
simulate  samples and bias summaries under a window sampling scheme.
power     power of the Wald test for an increase in yearly survival.

Every run writes its outputs to ``--out`` together with ``manifest.json``,
which echoes the resolved options, the toolkit version and a SHA-256 of each
output file.  Options come from built-in defaults, then ``--config`` (an INI
file whose ``[run]`` section uses the long option names), then the command
line; later sources win.  Exit status is 0 on success, 2 when some groups
or links failed and 1 on fatal errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from truncevt import __version__, dataio, records, simkit, trend
from truncevt.diagnostics import exponential_qq, qq_bend
from truncevt.errors import TruncEVTError
from truncevt.evd import GpParams
from truncevt.fit import fit_gp, survival_one_year
from truncevt.hypotest import lr_test_exponential, lr_test_groups, wald_test_halves
from truncevt.trunclik import SamplingWindow, as_sample

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2
MIN_GROUP_SIZE = 2
NONREGULAR_GAMMA = -1.0
NONREGULAR_NOTE = "* a GP fit has gamma < -1, where the GP likelihood is unbounded; p-value unreliable\n"
SCENARIOS = {
    "ramp": simkit.RAMP_SCENARIO,
    "alive-at-b": simkit.ALIVE_AT_B_SCENARIO,
    "stationary": simkit.STATIONARY_SCENARIO,
}
DEFAULTS = {
    "data": None,
    "groups": None,
    "threshold": None,  # falls back to the group config, then 110
    "validation": "A",
    "imputation": "jul2",
    "out": "truncevt-out",
    "seed": 0,
    "link": "both",
    "window": None,
    "split_date": [],
    "ratio": None,
    "counts": None,
    "count_estimates": None,
    "sigma": None,
    "sigma_ci": None,
    "sigma_group": "World",
    "below_age": 119.0,
    "above_age": 128.0,
    "scenario": "ramp",
    "scenario_file": None,
    "n": None,
    "reps": None,
    "deltas": "0,0.02,0.05,0.10",
    "level": 0.05,
}


class Run:
    """Output directory bookkeeping: every written file is listed in the manifest."""

    def __init__(self, out: Path, command: str, options: dict):
        self.out = out
        self.command = command
        self.options = options
        self.outputs: list[str] = []
        self.notes: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        if name not in self.outputs:
            self.outputs.append(name)
        return self.out / name

    def write_json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text)

    def write_csv(self, name: str, header, rows) -> None:
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])

    def note(self, message: str) -> None:
        self.notes.append(message)
        print(f"note: {message}", file=sys.stderr)

    def finish(self, status: int) -> int:
        files = []
        for name in sorted(self.outputs):
            digest = hashlib.sha256((self.out / name).read_bytes()).hexdigest()
            files.append({"file": name, "sha256": digest})
        manifest = {
            "toolkit": "truncevt",
            "version": __version__,
            "command": self.command,
            "config": self.options,
            "outputs": files,
            "notes": self.notes,
            "exit_status": status,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return status


# --- formatting ----------------------------------------------------------------


def f2(x) -> str:
    return "N/A" if x is None or (isinstance(x, float) and not math.isfinite(x)) else f"{x:.2f}"


def ci2(iv) -> str:
    return "N/A" if iv is None else f"({iv[0]:.2f}, {iv[1]:.2f})"


def table(header, rows) -> str:
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def _pair(value: str, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be LOW,HIGH") from None
    return lo, hi


# --- data access ---------------------------------------------------------------


class Dataset:
    """Records after loading and exclusions, with the group config, for one run."""

    def __init__(self, run: Run, opts: dict):
        self.run = run
        self.opts = opts
        cfg = dataio.load_group_config(opts["groups"] or dataio.default_config_path())
        threshold = opts["threshold"] if opts["threshold"] is not None else cfg.threshold
        self.cfg = cfg.with_threshold(float(threshold))
        self.threshold = float(threshold)
        loaded = dataio.load_records(opts["data"] or dataio.default_records_path())
        if loaded.rejects:
            dataio.write_rejects(run.path("rejects.csv"), loaded.rejects)
            run.note(f"{len(loaded.rejects)} malformed rows rejected, see rejects.csv")
        kept, excluded = dataio.apply_exclusions(loaded.records)
        run.write_csv("excluded.csv", ["id", "country", "reason"], [(r.id, r.country, why) for r, why in excluded])
        self.records = kept
        self.validation = ("A", "B") if opts["validation"] == "A+B" else ("A",)
        self._cache: dict[str, dataio.Conversion] = {}
        self._problems: list[dataio.Reject] = []

    def observations(self, name: str):
        if name not in self._cache:
            conv = dataio.to_truncated_observations(
                self.records, self.cfg.group(name), self.validation, self.opts["imputation"]
            )
            self._cache[name] = conv
            self._problems += [r for r in conv.inconsistent if r not in self._problems]
        return self._cache[name].observations

    def write_inconsistencies(self) -> None:
        if self._problems:
            dataio.write_rejects(self.run.path("inconsistent.csv"), self._problems)
            self.run.note(f"{len(self._problems)} records outside their country window, see inconsistent.csv")


def _by_gender(obs):
    return {g: [o for o in obs if o.gender == g] for g in dataio.GENDERS}


# --- commands ------------------------------------------------------------------


def cmd_fit(run: Run, opts: dict) -> int:
    data = Dataset(run, opts)
    rows, out, failed = [], {}, 0
    for g in data.cfg.reported_groups():
        obs = data.observations(g.name)
        if len(obs) < MIN_GROUP_SIZE:
            rows.append([g.name, len(obs), "insufficient data", "", "", "", ""])
            out[g.name] = {"n": len(obs), "status": "insufficient data"}
            continue
        s = as_sample(obs)
        try:
            gp = fit_gp(s, "gp")
            ex = fit_gp(s, "exponential")
            lr = lr_test_exponential(s, g.name)
        except TruncEVTError as exc:
            failed += 1
            rows.append([g.name, len(obs), f"fit failed: {exc}", "", "", "", ""])
            out[g.name] = {"n": len(obs), "status": "failed", "error": str(exc)}
            continue
        surv = survival_one_year(ex)
        rows.append([g.name, len(obs), f2(gp.gamma), ci2(gp.ci_gamma), f2(lr.p_value), f2(ex.sigma), ci2(ex.ci_sigma)])
        out[g.name] = {
            "n": len(obs),
            "status": "ok",
            "gp": gp.to_dict(),
            "exponential": ex.to_dict(),
            "exponential_test": lr.to_dict(),
            "yearly_survival": {"estimate": surv.estimate, "interval": None if surv.interval is None else list(surv.interval)},
        }
    data.write_inconsistencies()
    text = f"GP and exponential fits, threshold {data.threshold:g}, validation {opts['validation']}\n"
    text += table(["group", "n", "gamma", "95% CI", "p exp", "sigma", "95% CI"], rows)
    run.write_text("fit.txt", text)
    run.write_json("fit.json", out)
    print(text, end="")
    return EXIT_PARTIAL if failed else EXIT_OK


def _split_dates(opts) -> dict:
    out = {}
    for item in opts["split_date"] or []:
        name, _, date = item.rpartition("=")
        out[name or "*"] = dataio.date_to_time(dt.date.fromisoformat(date))
    return out


def _two_group_row(label, groups: dict, out: dict, key: str):
    sizes = {k: len(v) for k, v in groups.items()}
    if min(sizes.values()) < MIN_GROUP_SIZE:
        out[key] = {"status": "insufficient data", "n": sizes}
        return [label, *sizes.values(), "insufficient data", ""], 0
    samples = {k: as_sample(v) for k, v in groups.items()}
    try:
        gp = lr_test_groups(samples, "gp")
        ex = lr_test_groups(samples, "exponential")
    except TruncEVTError as exc:
        out[key] = {"status": "failed", "error": str(exc), "n": sizes}
        return [label, *sizes.values(), f"failed: {exc}", ""], 1
    nonregular = _nonregular(gp)
    out[key] = {"status": "ok", "n": sizes, "gp": gp.to_dict(), "exponential": ex.to_dict(), "gp_nonregular": nonregular}
    return [label, *sizes.values(), f2(gp.p_value) + ("*" if nonregular else ""), f2(ex.p_value)], 0


def _nonregular(report) -> bool:
    """True when some GP fit has gamma < -1, where the likelihood is unbounded."""
    params = list(report.details["params_groups"].values()) + [report.details["params_pooled"]]
    return any(g < NONREGULAR_GAMMA for g, _ in params)


def cmd_tests(run: Run, opts: dict) -> int:
    data = Dataset(run, opts)
    failed = 0
    gender_rows, gender_out = [], {}
    for g in data.cfg.reported_groups():
        row, bad = _two_group_row(g.name, _by_gender(data.observations(g.name)), gender_out, g.name)
        gender_rows.append(row)
        failed += bad

    splits = _split_dates(opts)
    half_rows, half_out = [], {}
    for g in data.cfg.reported_groups():
        obs = data.observations(g.name)
        split = splits.get(g.name, splits.get("*"))
        try:
            first, second = dataio.split_halves(obs, split)
        except TruncEVTError as exc:
            half_rows.append([g.name, len(obs), "", "insufficient data", "", ""])
            half_out[g.name] = {"status": "insufficient data", "error": str(exc)}
            continue
        if min(len(first), len(second)) < MIN_GROUP_SIZE:
            half_rows.append([g.name, len(first), len(second), "insufficient data", "", ""])
            half_out[g.name] = {"status": "insufficient data", "n": [len(first), len(second)]}
            continue
        try:
            f1, f2_ = fit_gp(as_sample(first), "exponential"), fit_gp(as_sample(second), "exponential")
            w = wald_test_halves(f1, f2_, ("first", "second"))
        except TruncEVTError as exc:
            failed += 1
            half_rows.append([g.name, len(first), len(second), f"failed: {exc}", "", ""])
            half_out[g.name] = {"status": "failed", "error": str(exc)}
            continue
        half_rows.append([g.name, len(first), len(second), f2(f1.sigma), f2(f2_.sigma), f2(w.p_value)])
        half_out[g.name] = {
            "status": "ok",
            "split_time": None if split is None else split,
            "last_death_first": first[-1].death_time,
            "first": f1.to_dict(),
            "second": f2_.to_dict(),
            "wald": w.to_dict(),
        }

    cmp_rows, cmp_out = [], {}
    for a, b in data.cfg.comparisons:
        key = f"{a} vs {b}"
        row, bad = _two_group_row(key, {a: data.observations(a), b: data.observations(b)}, cmp_out, key)
        cmp_rows.append(row)
        failed += bad
    data.write_inconsistencies()

    text = (
        "Women vs men (p-values: GP strategy, exponential strategy)\n"
        + table(["group", "women", "men", "p GP", "p exp"], gender_rows)
        + "\nEarly vs late deaths (exponential sigma, Wald test)\n"
        + table(["group", "n first", "n second", "sigma first", "sigma second", "p"], half_rows)
        + "\nGroup comparisons (p-values: GP strategy, exponential strategy)\n"
        + table(["comparison", "n 1", "n 2", "p GP", "p exp"], cmp_rows)
    )
    if any(r[3].endswith("*") for r in gender_rows + cmp_rows):
        text += "\n" + NONREGULAR_NOTE
    run.write_text("tests.txt", text)
    run.write_json("tests.json", {"gender": gender_out, "halves": half_out, "comparisons": cmp_out})
    print(text, end="")
    return EXIT_PARTIAL if failed else EXIT_OK


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in name).strip("_").lower()


def cmd_qq(run: Run, opts: dict) -> int:
    data = Dataset(run, opts)
    summary, failed = {}, 0
    for g in data.cfg.reported_groups():
        obs = data.observations(g.name)
        if not obs:
            run.note(f"group {g.name!r} has no observations; QQ plot skipped")
            summary[g.name] = {"n": 0, "status": "skipped"}
            continue
        if opts["sigma"] is not None:
            sigma = float(opts["sigma"])
        else:
            try:
                sigma = fit_gp(as_sample(obs), "exponential").sigma
            except TruncEVTError as exc:
                failed += 1
                summary[g.name] = {"n": len(obs), "status": "failed", "error": str(exc)}
                continue
        theo, emp = exponential_qq([o.excess for o in obs], sigma)
        name = f"qq_{_slug(g.name)}.csv"
        run.write_csv(name, ["theoretical", "observed"], zip(theo.tolist(), emp.tolist()))
        summary[g.name] = {"n": len(obs), "status": "ok", "sigma": sigma, "file": name}
        if len(obs) >= 4:
            summary[g.name]["bend"] = qq_bend(emp)
    data.write_inconsistencies()
    run.write_json("qq.json", summary)
    return EXIT_PARTIAL if failed else EXIT_OK


def _year_range(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return dataio.parse_year_range(str(value))


def _sigma_for_forecast(run, opts, data):
    if opts["sigma"] is not None:
        sigma = float(opts["sigma"])
        iv = _pair(opts["sigma_ci"], "--sigma-ci") if opts["sigma_ci"] else None
        return sigma, iv, {"source": "option"}
    obs = data.observations(opts["sigma_group"])
    ex = fit_gp(as_sample(obs), "exponential")
    if ex.ci_sigma is None:
        raise TruncEVTError(f"exponential fit for {opts['sigma_group']!r} has no confidence interval")
    return ex.sigma, ex.ci_sigma, {"source": "fit", "group": opts["sigma_group"], "n": ex.n}


def cmd_forecast(run: Run, opts: dict) -> int:
    links = trend.LINKS if opts["link"] == "both" else (opts["link"],)
    data = None
    if opts["sigma"] is None or (opts["counts"] is None and opts["count_estimates"] is None):
        data = Dataset(run, opts)
        cfg = data.cfg
    else:
        cfg = dataio.load_group_config(opts["groups"] or dataio.default_config_path())
    threshold = float(opts["threshold"] if opts["threshold"] is not None else cfg.threshold)
    window = _year_range(opts["window"] or cfg.forecast_years or (2018, 2042))
    ratio = float(opts["ratio"] if opts["ratio"] is not None else (cfg.ratio or trend.DEFAULT_RATIO))
    sigma, sigma_iv, sigma_info = _sigma_for_forecast(run, opts, data)
    out = {
        "threshold": threshold,
        "window": list(window),
        "ratio": ratio,
        "sigma": {"estimate": sigma, "interval": None if sigma_iv is None else list(sigma_iv), **sigma_info},
        "joint_confidence": records.RecordForecast.joint_confidence(),
        "links": {},
    }

    estimates = {}
    if opts["count_estimates"] is not None:
        given = json.loads(Path(opts["count_estimates"]).read_text())
        for link in links:
            est, lo, hi = given[link]
            # counts given here are final (already scaled)
            estimates[link] = trend.CountEstimate(float(est), float(lo), float(hi))
        out["counts_source"] = {"file": str(opts["count_estimates"]), "scaled": True}
    else:
        if opts["counts"] is not None:
            series = trend.load_yearly_counts(opts["counts"])
            counts = series[sorted(series)[0]]
            out["counts_source"] = {"file": str(opts["counts"]), "label": counts.label}
        else:
            first, last = cfg.trend_years or (1980, 1999)
            counts = dataio.yearly_death_counts(
                data.records, cfg.trend_countries, first, last, threshold, data.validation, "+".join(cfg.trend_countries)
            )
            out["counts_source"] = {"countries": list(cfg.trend_countries), "years": [first, last]}
        models = []
        for link in links:
            try:
                m = trend.fit_trend(counts, link)
            except TruncEVTError as exc:
                out["links"][link] = {"status": "failed", "error": f"trend fit: {exc}"}
                continue
            models.append(m)
            try:
                raw = trend.forecast_count(m, window, seed=int(opts["seed"]))
            except TruncEVTError as exc:
                out["links"][link] = {"status": "failed", "error": str(exc), "trend": m.to_dict()}
                run.note(f"{link} link: {exc}")
                continue
            estimates[link] = trend.scale_count(raw, ratio)
            out["links"][link] = {"trend": m.to_dict(), "count_unscaled": raw.to_dict()}
        out["counts"] = {"years": list(counts.years), "counts": list(counts.counts)}
        if models:
            trend.write_fitted_csv(run.path("trend_fitted.csv"), counts, models)

    below = float(opts["below_age"]) - threshold
    above = float(opts["above_age"]) - threshold
    rows = []
    for link in links:
        entry = out["links"].setdefault(link, {})
        if link not in estimates:
            rows.append([link, "failed", "", "", ""])
            continue
        n = estimates[link]
        try:
            fc = records.RecordForecast(sigma, n.estimate, sigma_iv, (n.low, n.high) if sigma_iv else None)
        except TruncEVTError as exc:
            entry.update(status="failed", error=str(exc))
            rows.append([link, "failed", "", "", ""])
            continue
        pb, pa = fc.prob_below(below), fc.prob_above(above)
        entry.update(status="ok", count=n.to_dict(), prob_below=pb, prob_above=pa)
        if fc.has_intervals:
            name = f"record_density_{link}.csv"
            records.write_band_csv(run.path(name), records.forecast_band(fc), threshold)
            entry["density_file"] = name
        rows.append([
            link,
            f"{n.estimate:.0f} ({n.low:.0f}, {n.high:.0f})",
            f2(pb["estimate"]) + (f" / {f2(pb['upper_bound'])}" if "upper_bound" in pb else ""),
            f2(pa["estimate"]) + (f" / {f2(pa['upper_bound'])}" if "upper_bound" in pa else ""),
            f2(sigma),
        ])
    if data is not None:
        data.write_inconsistencies()
    text = (
        f"Record age forecast for deaths in {window[0]}-{window[1]} (estimate / bound)\n"
        + table(["link", "n (95% CI)", f"P(record < {opts['below_age']:g})", f"P(record > {opts['above_age']:g})", "sigma"], rows)
    )
    run.write_text("forecast.txt", text)
    run.write_json("forecast.json", out)
    print(text, end="")
    ok = sum(out["links"][k].get("status") == "ok" for k in links)
    if ok == 0:
        return EXIT_FATAL
    return EXIT_OK if ok == len(links) else EXIT_PARTIAL


def load_scenario(path) -> simkit.SchemeScenario:
    """Read a ``[scenario]`` INI section: gamma, sigma, begin, end, scheme, rate, growth, span_start, span_end."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path) or not cp.has_section("scenario"):
        raise TruncEVTError(f"{path}: no [scenario] section")
    s = cp["scenario"]
    span = None
    if "span_start" in s or "span_end" in s:
        span = (s.getfloat("span_start"), s.getfloat("span_end"))
    return simkit.SchemeScenario(
        true_params=GpParams(s.getfloat("gamma", 0.0), s.getfloat("sigma", 1.34)),
        window=SamplingWindow(s.getfloat("begin"), s.getfloat("end")),
        scheme=s.get("scheme", "death-in-window"),
        rate=s.getfloat("rate", 50.0),
        growth=s.getfloat("growth", 0.0),
        arrival_span=span,
    )


def cmd_simulate(run: Run, opts: dict) -> int:
    if opts["scenario_file"]:
        sc, label = load_scenario(opts["scenario_file"]), Path(opts["scenario_file"]).stem
    else:
        sc, label = SCENARIOS[opts["scenario"]], opts["scenario"]
    seed = int(opts["seed"])
    n = int(opts["n"] or 500)
    reps = int(opts["reps"] or 0)
    obs = simkit.simulate_scheme(sc, n, seed)
    stem = f"simulated_{_slug(label)}_seed{seed}"
    run.write_csv(
        f"{stem}.csv",
        ["crossing_time", "excess", "death_time", "begin", "end"],
        ((o.crossing_time, o.excess, o.death_time, o.window.begin, o.window.end) for o in obs),
    )
    s = as_sample(obs)
    truncated = fit_gp(s, "gp")
    naive = fit_gp(s.untruncated(), "gp")
    exp_fit = fit_gp(s, "exponential")
    theo, emp = exponential_qq(s.excess, naive_exp := fit_gp(s.untruncated(), "exponential").sigma)
    run.write_csv(f"{stem}_qq.csv", ["theoretical", "observed"], zip(theo.tolist(), emp.tolist()))
    out = {
        "scenario": label,
        "scheme": sc.scheme,
        "true_params": {"gamma": sc.true_params.gamma, "sigma": sc.true_params.sigma},
        "window": [sc.window.begin, sc.window.end],
        "seed": seed,
        "n": n,
        "truncated_gp": truncated.to_dict(),
        "naive_gp": naive.to_dict(),
        "truncated_exponential": exp_fit.to_dict(),
        "naive_exponential_sigma": naive_exp,
        "qq_bend": qq_bend(emp) if n >= 4 else None,
    }
    if reps > 0:
        out["bias_study"] = simkit.bias_study(sc, n, reps, seed).summary()
    run.write_json(f"{stem}.json", out)
    text = table(
        ["fit", "gamma", "95% CI", "sigma"],
        [
            ["truncated GP", f2(truncated.gamma), ci2(truncated.ci_gamma), f2(truncated.sigma)],
            ["naive GP", f2(naive.gamma), ci2(naive.ci_gamma), f2(naive.sigma)],
            ["truncated exponential", "0.00", "", f2(exp_fit.sigma)],
        ],
    )
    print(text, end="")
    return EXIT_OK


def cmd_power(run: Run, opts: dict) -> int:
    sigma = float(opts["sigma"] if opts["sigma"] is not None else 1.34)
    n = int(opts["n"] or 566)
    reps = int(opts["reps"] or 2000)
    deltas = [float(d) for d in str(opts["deltas"]).split(",")]
    level = float(opts["level"])
    results = [simkit.power_survival_increase(sigma, n, d, level, reps, int(opts["seed"])) for d in deltas]
    run.write_json("power.json", {"sigma_base": sigma, "n": n, "reps": reps, "level": level, "results": [r.to_dict() for r in results]})
    text = table(
        ["delta", "survival new", "power", "se"],
        [[f"{r.delta:g}", f"{r.survival_new:.3f}", f"{r.power:.3f}", f"{r.se:.3f}"] for r in results],
    )
    run.write_text("power.txt", text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "tests": cmd_tests,
    "qq": cmd_qq,
    "forecast": cmd_forecast,
    "simulate": cmd_simulate,
    "power": cmd_power,
}


# --- argument handling ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("--config", help="INI file with a [run] section of option defaults")
    common.add_argument("--data", help="records CSV (default: bundled synthetic fixture)")
    common.add_argument("--groups", help="group/window config (default: bundled fixture config)")
    common.add_argument("--threshold", type=float, help="age threshold in years (default: from config, else 110)")
    common.add_argument("--validation", choices=("A", "A+B"), help="validation levels used (default: A)")
    common.add_argument("--imputation", choices=sorted(dataio.IMPUTATION_DAYS), help="day assumed for year-only deaths (default: jul2)")
    common.add_argument("--out", help="output directory (default: truncevt-out)")
    common.add_argument("--seed", type=int, help="random seed (default: 0)")

    parser = argparse.ArgumentParser(prog="truncevt", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"truncevt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fit", parents=[common], help="GP and exponential fits per group", argument_default=S)

    p = sub.add_parser("tests", parents=[common], help="gender, early/late and group tests", argument_default=S)
    p.add_argument("--split-date", action="append", metavar="[GROUP=]YYYY-MM-DD",
                   help="split early/late at this death date (for one group or all); repeatable")

    p = sub.add_parser("qq", parents=[common], help="exponential QQ coordinates", argument_default=S)
    p.add_argument("--sigma", type=float, help="scale for the theoretical quantiles (default: fitted)")

    p = sub.add_parser("forecast", parents=[common], help="trend and record-age forecast", argument_default=S)
    p.add_argument("--link", choices=("identity", "log", "both"), help="trend link (default: both)")
    p.add_argument("--window", help="forecast years YYYY-YYYY, inclusive (default: from config, else 2018-2042)")
    p.add_argument("--ratio", type=float, help="count scaling ratio (default: from config, else 1.76)")
    p.add_argument("--counts", help="yearly counts CSV with year,count[,label] (default: from data)")
    p.add_argument("--count-estimates", help='JSON {"identity": [est, low, high], "log": [...]} of final counts')
    p.add_argument("--sigma", type=float, help="exponential scale (default: fitted on --sigma-group)")
    p.add_argument("--sigma-ci", help="LOW,HIGH interval for --sigma")
    p.add_argument("--sigma-group", help="group whose exponential fit gives sigma (default: World)")
    p.add_argument("--below-age", type=float, help="report P(record < age) (default: 119)")
    p.add_argument("--above-age", type=float, help="report P(record > age) (default: 128)")

    p = sub.add_parser("simulate", parents=[common], help="simulate a sampling scheme", argument_default=S)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), help="built-in scenario (default: ramp)")
    p.add_argument("--scenario-file", help="INI file with a [scenario] section")
    p.add_argument("--n", type=int, help="observations per sample (default: 500)")
    p.add_argument("--reps", type=int, help="bias-study replications (default: 0, none)")

    p = sub.add_parser("power", parents=[common], help="power for a survival increase", argument_default=S)
    p.add_argument("--sigma", type=float, help="baseline exponential scale (default: 1.34)")
    p.add_argument("--n", type=int, help="sample size per data set (default: 566)")
    p.add_argument("--deltas", help="comma-separated survival increases (default: 0,0.02,0.05,0.10)")
    p.add_argument("--level", type=float, help="test level (default: 0.05)")
    p.add_argument("--reps", type=int, help="replications (default: 2000)")
    return parser


def _config_tokens(path: str) -> list[str]:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    if not cp.read(path):
        raise TruncEVTError(f"cannot read config {path}")
    if not cp.has_section("run"):
        return []
    tokens = []
    for key, value in cp["run"].items():
        flag = "--" + key.replace("_", "-")
        for v in value.splitlines() if key.replace("-", "_") == "split_date" else [value]:
            if v.strip():
                tokens += [flag, v.strip()]
    return tokens


def resolve_options(argv) -> tuple[str, dict]:
    """Defaults, then the config file, then command-line flags."""
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    explicit = dict(args)
    opts = dict(DEFAULTS)
    if "config" in explicit:
        ns = vars(parser.parse_args([command] + _config_tokens(explicit["config"])))
        ns.pop("command")
        opts.update({k.replace("-", "_"): v for k, v in ns.items()})
    opts.update(explicit)
    return command, opts


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, opts = resolve_options(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_FATAL
    opts["data"] = str(opts["data"] or dataio.default_records_path())
    opts["groups"] = str(opts["groups"] or dataio.default_config_path())
    run = Run(Path(opts["out"]), command, {k: v for k, v in sorted(opts.items())})
    try:
        status = COMMANDS[command](run, opts)
    except (TruncEVTError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.note(f"fatal: {exc}")
        return run.finish(EXIT_FATAL)
    return run.finish(status)


if __name__ == "__main__":
    sys.exit(main())
