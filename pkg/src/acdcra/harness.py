"""Experiment runner: configuration parsing, scenario execution, metric
aggregation and CSV/JSON emission for the bundled reference experiments."""

import csv
import hashlib
import json
import math
import time
from importlib import resources as _resources

import numpy as np

from . import analytics, tree
from .admission import QoSClass
from .estimator import SelectionProfile, mle_stirling, mle_zanella
from .protocol import DAB_DRIFT, AcdcWorld, DabWorld
from .traffic import TrafficModel


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _require(cfg, field, kind=None):
    if field not in cfg:
        raise ConfigError(f"missing config field: {field}")
    v = cfg[field]
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(f"config field {field} has wrong type {type(v).__name__}")
    return v


def make_profile(spec, m):
    family = spec.get("family", "power")
    if family == "power":
        return SelectionProfile.power(float(spec.get("p0", 1e-3)), m)
    if family == "uniform":
        return SelectionProfile.uniform(m)
    if family == "geometric":
        return SelectionProfile.geometric(float(spec["q"]), m)
    if family == "poisson":
        return SelectionProfile.poisson(float(spec["lam"]), m)
    raise ConfigError(f"unknown profile family {family!r}")


class ExperimentConfig:
    """Validated single-scenario configuration (one protocol, one traffic)."""

    def __init__(self, raw):
        self.raw = raw
        self.protocol = _require(raw, "protocol", str)
        if self.protocol not in ("acdc", "dab"):
            raise ConfigError(f"protocol must be acdc or dab, got {self.protocol!r}")
        classes = _require(raw, "classes", list)
        if not classes:
            raise ConfigError("classes must not be empty")
        self.class_specs = []
        next_resource = 0
        for c in classes:
            idx = int(_require(c, "index"))
            m_ac = int(_require(c, "m_ac"))
            delay = int(_require(c, "delay"))
            rel = float(_require(c, "reliability"))
            spec = {
                "index": idx, "m_ac": m_ac, "delay": delay, "reliability": rel,
                "profile": c.get("profile", {"family": "power", "p0": 1e-3}),
                "resources": tuple(range(next_resource, next_resource + m_ac)),
            }
            next_resource += m_ac
            self.class_specs.append(spec)
        self.m_ac_total = next_resource
        resources = raw.get("resources", {})
        if self.protocol == "acdc":
            self.m_rc = int(_require(resources, "m_rc"))
            self.m_total = self.m_ac_total + self.m_rc
        else:
            self.m_total = int(_require(resources, "m_total"))
            self.m_rc = 0
        traffic = _require(raw, "traffic", dict)
        kind = _require(traffic, "kind", str)
        pops = {int(k): int(v) for k, v in _require(traffic, "populations", dict).items()}
        if set(pops) != {c["index"] for c in self.class_specs}:
            raise ConfigError("traffic populations must cover exactly the classes")
        if kind == "poisson":
            self.traffic = TrafficModel("poisson", pops, lam=float(_require(traffic, "lam")))
        elif kind == "beta_burst":
            self.traffic = TrafficModel(
                "beta_burst", pops, t_a=int(_require(traffic, "t_a")),
                shape_a=float(traffic.get("shape_a", 3.0)),
                shape_b=float(traffic.get("shape_b", 4.0)))
        else:
            raise ConfigError(f"unknown traffic kind {kind!r}")
        self.lut_spec = raw.get("lut", {"source": "bundled-table-2"})
        src = self.lut_spec.get("source")
        if self.protocol == "acdc" and src not in ("bundled-table-2", "monte-carlo"):
            raise ConfigError(f"unknown lut source {src!r}")
        est = raw.get("estimator", {})
        self.estimator_mode = est.get("mode", "heuristic")
        if self.estimator_mode not in ("heuristic", "exact"):
            raise ConfigError(f"estimator mode must be heuristic or exact")
        self.pessimism_runs = int(est.get("pessimism_runs", 1000))
        buf = raw.get("buffering", {})
        self.buffered = bool(buf.get("enabled", False))
        self.max_wait = int(buf.get("max_wait", 0))
        if self.buffered and self.max_wait < 1:
            raise ConfigError("buffering needs max_wait >= 1")
        horizon = raw.get("horizon", {})
        self.warmup = int(horizon.get("warmup", 1000 if kind == "poisson" else 0))
        self.slots = int(horizon.get("slots", 10000)) if kind == "poisson" else None
        self.count_root_slot = bool(raw.get("count_root_slot", False))
        self.seed = raw.get("seed")
        self.runs = int(raw.get("runs", 1))
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        self._lut_cache = None

    def config_hash(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def build_classes(self):
        out = []
        for spec in self.class_specs:
            profile = make_profile(spec["profile"], spec["m_ac"])
            out.append(QoSClass(spec["index"], spec["delay"], spec["reliability"],
                                spec["resources"], profile))
        return out

    def build_lut(self):
        if self._lut_cache is not None:
            return self._lut_cache
        src = self.lut_spec.get("source")
        if src == "bundled-table-2":
            lut = tree.bundled_table()
        else:
            ls = self.lut_spec.get("l_values") or sorted(
                {c["delay"] for c in self.class_specs})
            ns = self.lut_spec.get("n_values") or list(range(2, 61))
            lut = tree.build_lut(
                reliability=float(self.lut_spec.get("reliability",
                                                    self.class_specs[0]["reliability"])),
                l_values=ls, n_values=ns,
                m_p_max=int(self.lut_spec.get("m_p_max", max(self.m_rc, 1))),
                runs=int(self.lut_spec.get("runs", 10000)),
                seed=int(self.lut_spec.get("seed", 20210)),
                count_root_slot=self.count_root_slot)
        self._lut_cache = lut
        return lut


def load_config(path):
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    return ExperimentConfig(raw)


def bundled_config(name):
    ref = _resources.files("acdcra.data.configs").joinpath(name)
    return json.loads(ref.read_text())


# ---------------------------------------------------------------------------
# metrics


class MetricsReport:
    """Per-class and global outcome statistics of one simulation run.

    Wall time is kept as an attribute only; serialized artifacts must be
    byte-identical across reruns of the same config and seed.
    """

    def __init__(self, per_class, global_stats, metadata, wall_time=None):
        self.per_class = per_class
        self.global_stats = global_stats
        self.metadata = metadata
        self.wall_time = wall_time

    def to_dict(self):
        return {"per_class": self.per_class, "global": self.global_stats,
                "metadata": self.metadata}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _class_metrics(users, class_indices, measure_from):
    out = {}
    for j in class_indices:
        recs = [u for u in users.values()
                if u.cls == j and u.activation_slot >= measure_from]
        acts = len(recs)
        suc = [u for u in recs if u.state == "Suc"]
        drops = sum(1 for u in recs if u.state == "Fail" and u.fail_reason == "dropped")
        rejects = sum(1 for u in recs if u.state == "Fail"
                      and u.fail_reason in ("infeasible", "no-capacity"))
        still = acts - len(suc) - drops - rejects
        delays = [u.completion_slot - u.activation_slot for u in suc]
        denom = max(acts, 1)
        out[str(j)] = {
            "activations": acts,
            "successes": len(suc),
            "drops": drops,
            "rejects": rejects,
            "still_active": still,
            "success_ratio": len(suc) / denom,
            "drop_ratio": drops / denom,
            "reject_ratio": rejects / denom,
            "drop_plus_reject_ratio": (drops + rejects) / denom,
            "mean_success_delay": (sum(delays) / len(delays)) if delays else 0.0,
        }
    return out


def run_one(config, seed=None, admission_log=None):
    """Simulate one seed of an ExperimentConfig into a MetricsReport."""
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig(config)
    seed = config.seed if seed is None else seed
    if seed is None:
        raise ConfigError("a seed is required (config field or argument)")
    t0 = time.perf_counter()
    rng = np.random.default_rng(int(seed))
    classes = config.build_classes()
    arrivals = config.traffic.start(rng)
    if config.protocol == "acdc":
        world = AcdcWorld(classes, config.m_rc, config.build_lut(), rng,
                          buffered=config.buffered, max_wait=config.max_wait,
                          exact_multiplicity=(config.estimator_mode == "exact"),
                          pessimism_runs=config.pessimism_runs,
                          count_root_slot=config.count_root_slot,
                          admission_log=admission_log)
    else:
        deadlines = {c.index: c.delay_constraint for c in classes}
        world = DabWorld(config.m_total, deadlines, rng)
    measured = []
    slot = 0
    if config.traffic.kind == "poisson":
        horizon = config.warmup + config.slots
        while slot < horizon:
            rep = world.step(slot, arrivals.arrivals(slot))
            if slot >= config.warmup:
                measured.append(rep)
            slot += 1
    else:
        while not arrivals.exhausted:
            rep = world.step(slot, arrivals.arrivals(slot))
            measured.append(rep)
            slot += 1
    # drain: no new arrivals, let live resolutions and deadlines play out
    max_l = max(c.delay_constraint for c in classes)
    empty = {c.index: [] for c in classes}
    for _ in range(max_l + config.max_wait + 1):
        busy = world.live_jobs if config.protocol == "acdc" else world.backlog
        if not busy:
            break
        measured.append(world.step(slot, empty))
        slot += 1

    n_slots = max(len(measured), 1)
    coll = sum(r.collided_resources for r in measured)
    global_stats = {
        "slots_measured": len(measured),
        "warmup": config.warmup,
        "mean_collided_resources_per_slot": coll / n_slots,
        "collision_resource_fraction": coll / (n_slots * max(config.m_ac_total, 1)),
    }
    if config.protocol == "acdc":
        reqs = world.requests
        global_stats.update({
            "admission_requests": reqs,
            "rejects_infeasible": world.rejected_requests["infeasible"],
            "rejects_no_capacity": world.rejected_requests["no-capacity"],
            "admission_rejection_probability":
                (world.rejected_requests["infeasible"]
                 + world.rejected_requests["no-capacity"]) / max(reqs, 1),
            "capacity_rejection_probability":
                world.rejected_requests["no-capacity"] / max(reqs, 1),
        })
    metadata = {
        "config_hash": config.config_hash(),
        "seed": int(seed),
        "protocol": config.protocol,
        "estimator_mode": config.estimator_mode if config.protocol == "acdc" else None,
        "buffered": config.buffered,
        "count_root_slot": config.count_root_slot,
        "lut_provenance": (config.build_lut().provenance
                           if config.protocol == "acdc" else None),
        "dab_drift_coefficients": DAB_DRIFT if config.protocol == "dab" else None,
    }
    per_class = _class_metrics(world.users, [c.index for c in classes],
                               measure_from=config.warmup)
    return MetricsReport(per_class, global_stats, metadata,
                         wall_time=time.perf_counter() - t0)


def aggregate(reports):
    """Mean and 95% normal-approximation interval per metric across seeds.

    Reports must share a config hash; the fold is ordered by seed, so the
    result is reproducible for a given seed list.
    """
    if not reports:
        raise ConfigError("aggregate needs at least one report")
    hashes = {r.metadata["config_hash"] for r in reports}
    if len(hashes) > 1:
        raise ConfigError(f"refusing to aggregate across configs: {sorted(hashes)}")
    reports = sorted(reports, key=lambda r: r.metadata["seed"])

    def ci(values):
        n = len(values)
        mean = sum(values) / n
        if n == 1:
            return {"mean": mean, "ci95_lo": mean, "ci95_hi": mean, "n": n}
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        half = 1.96 * math.sqrt(var / n)
        return {"mean": mean, "ci95_lo": mean - half, "ci95_hi": mean + half, "n": n}

    out = {"per_class": {}, "global": {}, "metadata": {
        "config_hash": reports[0].metadata["config_hash"],
        "seeds": [r.metadata["seed"] for r in reports]}}
    for j in reports[0].per_class:
        out["per_class"][j] = {
            k: ci([r.per_class[j][k] for r in reports])
            for k in reports[0].per_class[j]}
    for k, v in reports[0].global_stats.items():
        if isinstance(v, (int, float)):
            out["global"][k] = ci([r.global_stats[k] for r in reports])
    return out


# ---------------------------------------------------------------------------
# sweep runners


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def estimator_benchmark(m=18, n_values=None, runs=1000, ccp_n_max=(500, 1000, 2000),
                        stirling_n_cap=100, zanella_bracket_hi=1e5, seed=1804):
    """Mean absolute estimation error (users, summed over resources) per
    estimator and true backlog; the collision-size benchmark sweep."""
    n_values = list(range(1, 1001)) if n_values is None else list(n_values)
    rng = np.random.default_rng(seed)
    uniform = SelectionProfile.uniform(m)
    profiles = {nm: SelectionProfile.power(1.0 / nm, m) for nm in ccp_n_max}
    stirling_hat = np.array([mle_stirling(k, m, stirling_n_cap) for k in range(m + 1)])
    zan_cache = {}
    rows = []
    for n in n_values:
        for nm, prof in profiles.items():
            counts = rng.multinomial(n, prof.probabilities, size=runs)
            err = _ccp_partition_error(counts, prof)
            rows.append(("ccp", m, nm, n, err, runs, seed))
        counts = rng.multinomial(n, uniform.probabilities, size=runs)
        occupied = (counts > 0).sum(axis=1)
        n_hat = stirling_hat[occupied]
        err = _uniform_partition_error(counts, n_hat, m)
        rows.append(("mle_stirling", m, stirling_n_cap, n, err, runs, seed))
        m_s = (counts == 1).sum(axis=1)
        m_c = (counts >= 2).sum(axis=1)
        err_z = 0.0
        for row, ms_i, mc_i in zip(counts, m_s, m_c):
            if mc_i == 0:
                continue  # nothing to estimate, partition is exact
            key = (int(ms_i), int(mc_i))
            if key not in zan_cache:
                zan_cache[key] = mle_zanella(key[0], key[1], m,
                                             bracket_hi=zanella_bracket_hi)
            avg = zan_cache[key][1]
            coll = row >= 2
            err_z += float(np.abs(np.ceil(avg) - row[coll]).sum())
        rows.append(("mle_zanella", m, int(zanella_bracket_hi), n, err_z / runs,
                     runs, seed))
    return rows


def _ccp_partition_error(counts, profile):
    """Mean total partition error of the coupon-collector estimator over a
    batch of true occupancy rows (batched over the distinct occupancy sets)."""
    p = profile.probabilities
    occ = counts > 0
    patterns, inverse = np.unique(occ, axis=0, return_inverse=True)
    n_hats = np.array([
        profile.expected_draws(frozenset(np.nonzero(pat)[0].tolist()))
        for pat in patterns])
    total = 0.0
    for row, pat_idx in zip(counts, inverse):
        n_hat = n_hats[pat_idx]
        coll = row >= 2
        u = np.where(coll, np.maximum(np.ceil(p * n_hat), 2), row)
        total += float(np.abs(u - row).sum())
    return total / counts.shape[0]


def _uniform_partition_error(counts, n_hat, m):
    total = 0.0
    for row, nh in zip(counts, n_hat):
        coll = row >= 2
        u = np.where(coll, max(math.ceil(nh / m), 2), row)
        total += float(np.abs(u - row).sum())
    return total / counts.shape[0]


def simulate_collision_fraction(m_ac, profile, n_c, slots, rng):
    """Fraction of admission resources collided per slot under Poisson
    arrivals with mean n_c; the simulation side of the collision-probability
    analysis."""
    arrivals = rng.poisson(n_c, size=slots)
    collided = 0
    for k in arrivals:
        if k >= 2:
            counts = rng.multinomial(k, profile.probabilities)
            collided += int(np.sum(counts >= 2))
    return collided / (slots * m_ac)


def collision_sweep(m_ac_values, n_c_values, profile_spec, slots=2000,
                    seed=1806, n_limit=120):
    """Analysis-vs-simulation sweep of the collision probability."""
    rows = []
    for m_ac in m_ac_values:
        profile = make_profile(profile_spec, m_ac)
        for n_c in n_c_values:
            analytic = analytics.poisson_adjusted_pc(n_c, m_ac, profile,
                                                     n_limit=n_limit)
            rng = np.random.default_rng(seed + 1000 * m_ac + n_c)
            sim = simulate_collision_fraction(m_ac, profile, n_c, slots, rng)
            rows.append((m_ac, n_c, analytic, sim, slots, seed))
    return rows


def blocking_sweep(m_ac_values, m_rc_values, l, reliability, n_c,
                   profile_spec=None, slots=3000, warmup=200, seed=1807,
                   lut_spec=None, erlang_variant="paper", n_limit=120):
    """Analysis-vs-simulation sweep of the admission rejection probability.

    The simulation feeds exact multiplicities to the admission decision, the
    regime the queue model describes; columns carry both rejection counts so
    the infeasibility contribution stays visible.
    """
    profile_spec = profile_spec or {"family": "power", "p0": 1e-3}
    rows = []
    for m_rc in m_rc_values:
        lut_cfg = dict(lut_spec or {})
        lut = tree.build_lut(
            reliability=reliability,
            l_values=[l],
            n_values=lut_cfg.get("n_values", list(range(2, 61))),
            m_p_max=int(lut_cfg.get("m_p_max", m_rc)),
            runs=int(lut_cfg.get("runs", 10000)),
            seed=int(lut_cfg.get("seed", 20210)))
        for m_ac in m_ac_values:
            profile = make_profile(profile_spec, m_ac)
            dist = analytics.poisson_adjusted_distribution(n_c, m_ac, profile,
                                                           n_limit=n_limit)
            e_mp = analytics.expected_parallelization(lut, dist, l, reliability)
            p_c_alpha = analytics.poisson_adjusted_pc(n_c, m_ac, profile,
                                                      n_limit=n_limit)
            if e_mp > 0:
                raq = analytics.raq_blocking(l, m_ac, m_rc, e_mp, variant=erlang_variant)
                m_g, p_r = raq.m_g, raq.p_r
            else:
                m_g, p_r = 0, 0.0
            cfg = ExperimentConfig({
                "protocol": "acdc",
                "resources": {"m_rc": m_rc},
                "classes": [{"index": 1, "m_ac": m_ac, "delay": l,
                             "reliability": reliability,
                             "profile": profile_spec}],
                "traffic": {"kind": "poisson", "lam": n_c, "populations": {"1": 1}},
                "lut": {"source": "monte-carlo", "l_values": [l],
                        "n_values": lut_cfg.get("n_values", list(range(2, 61))),
                        "m_p_max": int(lut_cfg.get("m_p_max", m_rc)),
                        "runs": int(lut_cfg.get("runs", 10000)),
                        "seed": int(lut_cfg.get("seed", 20210))},
                "estimator": {"mode": "exact"},
                "horizon": {"warmup": warmup, "slots": slots},
                "seed": seed + m_ac + 100 * m_rc,
            })
            cfg._lut_cache = lut
            rep = run_one(cfg)
            rows.append((m_ac, m_rc, l, reliability, n_c, p_c_alpha, e_mp, m_g,
                         p_r, erlang_variant,
                         rep.global_stats["admission_rejection_probability"],
                         rep.global_stats["capacity_rejection_probability"]))
    return rows


def compare_runs(base_raw, seeds, sweep_axis=None, sweep_values=None):
    """Paired-seed comparison of acdc, buffered acdc and the dab baseline.

    Yields one row per (axis value, seed, variant, class) with the
    drop/reject breakdown; identical seeds feed every variant.
    """
    rows = []
    values = sweep_values if sweep_axis else [None]
    for value in values:
        raw = json.loads(json.dumps(base_raw))  # deep copy
        if sweep_axis == "deadline":
            for c in raw["classes"]:
                c["delay"] = int(value)
        elif sweep_axis == "n_high":
            pops = raw["traffic"]["populations"]
            high = max(pops, key=lambda k: pops[k])
            low = min(pops, key=lambda k: pops[k])
            pops[high] = int(value)
            pops[low] = max(int(round(value * 0.1)), 1)
        elif sweep_axis is not None:
            raise ConfigError(f"unknown sweep axis {sweep_axis!r}")
        variants = {
            "acdc": dict(raw, protocol="acdc",
                         buffering={"enabled": False, "max_wait": 0}),
            "acdc_buffered": dict(raw, protocol="acdc",
                                  buffering={"enabled": True,
                                             "max_wait": raw.get("buffering", {})
                                             .get("max_wait", 5)}),
            "dab": dict(raw, protocol="dab",
                        resources={"m_total": raw["resources"]["m_rc"]
                                   + sum(c["m_ac"] for c in raw["classes"])}),
        }
        for name, vraw in variants.items():
            cfg = ExperimentConfig(vraw)
            for seed in seeds:
                rep = run_one(cfg, seed=seed)
                for j, stats in rep.per_class.items():
                    rows.append((value if value is not None else "", name, seed, j,
                                 stats["success_ratio"], stats["drop_ratio"],
                                 stats["reject_ratio"],
                                 stats["drop_plus_reject_ratio"],
                                 stats["mean_success_delay"]))
    return rows
