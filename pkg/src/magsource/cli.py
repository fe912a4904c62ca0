"""Command-line front end: ``magsource <subcommand> [options]``.

Options can also come from a ``key=value`` file passed with ``--config``;
command-line flags win over file values.  A CSV written by an earlier run is
accepted as a config file too, since its header echoes the effective
configuration.
"""

import argparse
import math
import re
import sys
import time

import numpy as np

from . import classical as cl
from . import fieldmaps as fm
from . import quantum as qm
from . import semiclassical as sc
from .errors import InvalidParameterError, MagsourceError, ThresholdError
from .scaling import PhysicalParams, ScaledPoint, build_context
from .specialfn import airy_ai

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_THRESHOLD = 2
EXIT_CONFIG = 3

COMMANDS = ("density-map", "current-map", "flow-map", "profile", "caustics",
            "spectrum", "trajectories", "selfcheck")
PHYSICAL = ("charge", "mass", "field", "energy")


class ConfigError(MagsourceError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _px(text):
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", str(text))
    if not m:
        raise ConfigError(f"pixel size must look like WIDTHxHEIGHT, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected on/off, got {text!r}")


def _normalization(text):
    t = str(text).strip()
    if t == "max":
        return t
    try:
        v = float(t)
    except ValueError:
        raise ConfigError(f"normalization must be 'max' or a positive number, got {text!r}")
    if not v > 0:
        raise ConfigError("absolute normalization needs a positive scale")
    return t


def _method(text):
    t = str(text).strip().lower()
    if t not in ("quantum", "primitive", "uniform"):
        raise ConfigError(f"unknown method {text!r}")
    return t


def _quantity(text):
    t = str(text).strip().lower().replace("-", "_")
    try:
        fm.Quantity(t)
    except ValueError:
        raise ConfigError(f"unknown quantity {text!r}")
    return t


def _component(text):
    t = str(text).strip().lower()
    if t not in ("rho", "phi", "z"):
        raise ConfigError(f"current component must be rho, phi or z, got {text!r}")
    return t


# option name -> (converter, help)
OPTIONS = {
    "epsilon": (float, "scaled energy E / (hbar omega_L)"),
    "charge": (float, "particle charge in C (with --mass --field --energy)"),
    "mass": (float, "particle mass in kg"),
    "field": (float, "magnetic field in T"),
    "energy": (float, "kinetic energy in J"),
    "method": (_method, "quantum | primitive | uniform"),
    "rho_min": (float, "smallest scaled radius"),
    "rho_max": (float, "largest scaled radius"),
    "z_min": (float, "smallest scaled height"),
    "z_max": (float, "largest scaled height"),
    "px": (_px, "image size WIDTHxHEIGHT (rho across, z down)"),
    "supersample": (int, "samples per pixel edge, box filtered"),
    "orbits": (int, "number of orbits N in semiclassical sums"),
    "ghosts": (_bool, "include complex (tunnelling) orbits: on/off"),
    "normalization": (_normalization, "'max' or an absolute scale in natural units"),
    "gamma": (float, "image gamma"),
    "raw": (_bool, "store q instead of 2 pi rho q: on/off"),
    "component": (_component, "current component for current-map: rho | phi | z"),
    "quantity": (_quantity, "density | current_z | current_rho | current_phi | current_vector"),
    "z": (float, "scaled height of a profile or trajectory destination"),
    "rho": (float, "scaled radius of a trajectory destination"),
    "samples": (int, "number of profile or caustic samples"),
    "nu_max": (int, "largest cyclotron interval"),
    "eps_min": (float, "spectrum start"),
    "eps_max": (float, "spectrum end"),
    "steps": (int, "spectrum points"),
    "threads": (int, "worker processes (default: MAGSOURCE_THREADS or 1)"),
    "out": (str, "output file (image for maps, CSV otherwise)"),
    "csv": (str, "CSV output for maps"),
    "flags_out": (str, "CSV listing flagged samples with reason codes"),
}

_MAP_KEYS = ("method", "rho_min", "rho_max", "z_min", "z_max", "px", "supersample", "orbits",
             "ghosts", "normalization", "gamma", "raw", "threads", "out", "csv", "flags_out")
_EPS = ("epsilon",) + PHYSICAL
KEYS = {
    "density-map": _EPS + _MAP_KEYS,
    "current-map": _EPS + _MAP_KEYS + ("component",),
    "flow-map": _EPS + _MAP_KEYS,
    "profile": _EPS + ("method", "quantity", "z", "rho_min", "rho_max", "samples", "orbits",
                       "ghosts", "raw", "out", "flags_out"),
    "caustics": ("nu_max", "samples", "out"),
    "spectrum": ("eps_min", "eps_max", "steps", "out"),
    "trajectories": _EPS + ("rho", "z", "orbits", "ghosts", "out"),
    "selfcheck": (),
}
DEFAULTS = {
    "method": "quantum", "rho_min": 0.0, "rho_max": 1.1, "z_min": -1.1, "z_max": 3.3,
    "px": (256, 1024), "orbits": None, "ghosts": True, "normalization": "max",
    "gamma": 1.0, "raw": False, "component": "z", "quantity": "density", "z": 3.3,
    "samples": None, "nu_max": 3, "eps_min": 1.5, "eps_max": 9.5, "steps": 400,
    "supersample": None, "threads": None, "out": None, "csv": None, "flags_out": None,
    "rho": 0.5,
}
MAP_ORBITS = 500
PROFILE_ORBITS = 50_000


def build_parser():
    p = _Parser(prog="magsource", description="Point source of charged particles in a uniform magnetic field.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, help=cmd.replace("-", " "))
        sp.add_argument("--config", help="key=value file; flags override it")
        for key in KEYS[cmd]:
            conv, hlp = OPTIONS[key]
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=hlp)
    return p


# -- configuration -------------------------------------------------------------

def load_config(path, command=None):
    """Read ``key=value`` lines (``#`` comments).  Returns a dict of raw strings.

    A CSV produced by this program is read from its header block.
    """
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    out = {}
    if lines and lines[0].strip() == fm.CSV_MAGIC:
        for line in lines[1:]:
            m = re.fullmatch(r"# ([a-z_]+)=(.*)", line)
            if not m:
                break
            out[m.group(1)] = m.group(2)
    else:
        for n, line in enumerate(lines, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{n}: malformed line {line.strip()!r} (expected key=value)")
            k, v = text.split("=", 1)
            k = k.strip().replace("-", "_")
            if not k:
                raise ConfigError(f"{path}:{n}: missing key")
            out[k] = v.strip()
    if command is not None:
        for k in out:
            if k not in KEYS[command]:
                raise ConfigError(f"unknown config key {k!r} for {command}")
    return out


def effective_config(command, flags, file_values):
    """Merge defaults, file values and flags into converted values."""
    file_values = dict(file_values)
    if any(flags.get(k) is not None for k in PHYSICAL):
        file_values.pop("epsilon", None)
    if flags.get("epsilon") is not None:
        for k in PHYSICAL:
            file_values.pop(k, None)
    cfg = {}
    for key in KEYS[command]:
        raw = flags.get(key)
        if raw is None:
            raw = file_values.get(key)
        conv = OPTIONS[key][0]
        if raw is None:
            cfg[key] = DEFAULTS.get(key)
            continue
        try:
            cfg[key] = conv(raw)
        except (ValueError, TypeError):
            raise ConfigError(f"invalid value {raw!r} for {key}")
    return cfg


def resolve_epsilon(cfg):
    phys = [cfg.get(k) for k in PHYSICAL]
    eps = cfg.get("epsilon")
    if eps is not None and any(v is not None for v in phys):
        raise ConfigError("give either --epsilon or the physical parameter set, not both")
    if eps is None:
        if all(v is None for v in phys):
            raise ConfigError("missing --epsilon (or --charge --mass --field --energy)")
        if any(v is None for v in phys):
            missing = [k for k, v in zip(PHYSICAL, phys) if v is None]
            raise ConfigError("incomplete physical parameters, missing: " + ", ".join(missing))
        eps = build_context(PhysicalParams(*phys)).epsilon
    if not (eps > 0 and math.isfinite(eps)):
        raise ConfigError(f"epsilon must be positive, got {eps}")
    # orbit sums are defined at Landau thresholds, the Green function is not
    if cfg.get("method", "quantum") == "quantum":
        qm.check_epsilon(eps)
    return float(eps)


def _echo(cfg):
    """Config as ``key=value`` pairs in file syntax (unset keys omitted)."""
    out = {}
    for k, v in cfg.items():
        if v is None:
            continue
        if k == "px":
            v = f"{v[0]}x{v[1]}"
        elif isinstance(v, bool):
            v = "on" if v else "off"
        elif isinstance(v, float):
            v = repr(v)
        out[k] = v
    return out


def _write(path, data):
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        with open(path, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}")


# -- subcommands -----------------------------------------------------------------

def _policy(cfg, default_orbits):
    n = cfg["orbits"] if cfg.get("orbits") is not None else default_orbits
    if n < 1:
        raise ConfigError("orbits must be at least 1")
    if cfg["method"] == "quantum":
        return None
    cfg["orbits"] = n
    return sc.SummationPolicy(cfg["method"], n, cfg["ghosts"])


def _trailer(cfg, eps, command):
    lines = []
    if cfg.get("epsilon") is None:
        lines.append(f"# derived: epsilon={eps!r}")
    lines.append(f"# command: {command}")
    return lines


def _csv_text(obj, cfg, eps, command):
    text = fm.format_csv(obj, _echo(cfg))
    head, rest = text.split("\n# flags:", 1)
    return head + "\n" + "\n".join(_trailer(cfg, eps, command)) + "\n# flags:" + rest


def _map(command, cfg):
    eps = resolve_epsilon(cfg)
    if cfg["out"] is None and cfg["csv"] is None:
        raise ConfigError(f"{command} needs --out and/or --csv")
    if cfg["supersample"] is None:
        cfg["supersample"] = 4 if eps > 200 else 1
    w, h = cfg["px"]
    grid = fm.GridSpec(cfg["rho_min"], cfg["rho_max"], cfg["z_min"], cfg["z_max"], w, h, cfg["supersample"])
    policy = _policy(cfg, MAP_ORBITS)
    if command == "density-map":
        q = fm.Quantity.DENSITY
    elif command == "flow-map":
        q = fm.Quantity.CURRENT_VECTOR
    else:
        q = {"rho": fm.Quantity.CURRENT_RHO, "phi": fm.Quantity.CURRENT_PHI,
             "z": fm.Quantity.CURRENT_Z}[cfg["component"]]
    field = fm.sample_map(q, cfg["method"], eps, grid, policy, integrated=not cfg["raw"],
                          workers=fm.worker_count(cfg["threads"]))
    if cfg["out"]:
        if command == "density-map":
            img = fm.encode_grayscale(field, cfg["gamma"], cfg["normalization"])
        elif command == "flow-map":
            img = fm.flowmap_of(field, cfg["normalization"])
        else:
            img = fm.encode_signed(field, cfg["gamma"], cfg["normalization"])
        _write(cfg["out"], img)
    if cfg["csv"]:
        _write(cfg["csv"], _csv_text(field, cfg, eps, command))
    if cfg["flags_out"]:
        _write(cfg["flags_out"], fm.format_flags_csv(field))
    return eps, cfg["method"], None if policy is None else policy.orbits


def _profile(cfg):
    eps = resolve_epsilon(cfg)
    if cfg["out"] is None:
        raise ConfigError("profile needs --out")
    samples = cfg["samples"] = cfg["samples"] or 441
    if samples < 2:
        raise ConfigError("profile needs at least two samples")
    rho = np.linspace(cfg["rho_min"], cfg["rho_max"], samples)
    policy = _policy(cfg, PROFILE_ORBITS)
    prof = fm.sample_profile(cfg["quantity"], cfg["method"], eps, cfg["z"], rho, policy,
                             integrated=not cfg["raw"])
    _write(cfg["out"], _csv_text(prof, cfg, eps, "profile"))
    if cfg["flags_out"]:
        _write(cfg["flags_out"], fm.format_flags_csv(prof))
    return eps, cfg["method"], None if policy is None else policy.orbits


def _caustics(cfg):
    if cfg["out"] is None:
        raise ConfigError("caustics needs --out")
    samples = cfg["samples"] = cfg["samples"] or 200
    if cfg["nu_max"] < 0 or samples < 2:
        raise ConfigError("caustics needs nu_max >= 0 and samples >= 2")
    lines = [fm.CSV_MAGIC] + [f"# {k}={v}" for k, v in _echo(cfg).items()] + ["# command: caustics"]
    lines.append("nu,tau,rho_hat,z_hat")
    for nu in range(cfg["nu_max"] + 1):
        for pt in cl.caustic_surface(nu, samples):
            lines.append(f"{nu},{pt.tau:.12g},{pt.rho:.12g},{pt.z:.12g}")
    _write(cfg["out"], "\n".join(lines) + "\n")
    return None, "classical", None


def spectrum_rows(eps_min, eps_max, steps):
    """``(epsilon, J/J_free)`` pairs, skipping samples on Landau thresholds, and the thresholds."""
    grid = np.linspace(eps_min, eps_max, steps)
    rows = []
    for e in grid:
        try:
            rows.append((float(e), qm.total_current(float(e))))
        except ThresholdError:
            continue
    lo = max(0, math.ceil((eps_min - 1) / 2))
    gaps = [2 * l + 1 for l in range(lo, int((eps_max - 1) // 2) + 1) if eps_min <= 2 * l + 1 <= eps_max]
    return rows, gaps


def _spectrum(cfg):
    if cfg["out"] is None:
        raise ConfigError("spectrum needs --out")
    if not (0 < cfg["eps_min"] < cfg["eps_max"]) or cfg["steps"] < 2:
        raise ConfigError("spectrum needs 0 < eps_min < eps_max and steps >= 2")
    rows, gaps = spectrum_rows(cfg["eps_min"], cfg["eps_max"], cfg["steps"])
    lines = [fm.CSV_MAGIC] + [f"# {k}={v}" for k, v in _echo(cfg).items()] + ["# command: spectrum"]
    lines += [f"# gap: epsilon={g} (Landau level l={(g - 1) // 2})" for g in gaps]
    lines.append("epsilon,J_over_Jfree")
    lines += [f"{e:.12g},{j:.12g}" for e, j in rows]
    _write(cfg["out"], "\n".join(lines) + "\n")
    return None, "quantum", None


def trajectory_rows(rho, z, eps, orbits, ghosts=True):
    """Orbit table in flight-time order: ``(nu, kind, tau, maslov, amplitude, phase)``."""
    p = ScaledPoint(rho, z)
    k = (orbits + 1) // 2
    sols = cl.find_flight_times(p, k - 1)
    if ghosts:
        sols += cl.find_ghost_times(p, range(k))
    sols.sort(key=lambda s: (s.tau.real, s.kind is cl.Kind.SLOW))
    sols = sols[:orbits]
    rows = []
    for s in sols:
        c = sc.orbit_contribution(s, p, eps)
        rows.append((s.nu, s.kind.value, s.tau, s.maslov, abs(c.amplitude), c.phase))
    return rows


def _trajectories(cfg):
    eps = resolve_epsilon(cfg)
    if cfg["out"] is None:
        raise ConfigError("trajectories needs --out")
    if not cfg["rho"] > 0:
        raise ConfigError("trajectories needs rho > 0 (the axis is a focal line)")
    n = cfg["orbits"] = cfg["orbits"] or 20
    rows = trajectory_rows(cfg["rho"], cfg["z"], eps, n, cfg["ghosts"])
    lines = [fm.CSV_MAGIC] + [f"# {k}={v}" for k, v in _echo(cfg).items()]
    lines += _trailer(cfg, eps, "trajectories")
    lines.append("nu,kind,tau_re,tau_im,maslov,amplitude,phase")
    for nu, kind, tau, maslov, amp, ph in rows:
        lines.append(f"{nu},{kind},{tau.real:.12g},{tau.imag:.12g},{maslov},{amp:.12g},"
                     f"{ph.real:.12g}{'' if ph.imag == 0 else f'{ph.imag:+.12g}j'}")
    _write(cfg["out"], "\n".join(lines) + "\n")
    return eps, "classical", n


def selfcheck_results():
    """Quick invariant checks: ``[(name, passed, detail)]``."""
    res = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res.append((name, bool(ok), detail))

    def currents():
        errs = [abs(qm.source_limit_current(e) / qm.total_current(e) - 1) for e in (2, 4, 50, 51.01)]
        return max(errs) < 1e-12, f"max rel diff {max(errs):.2e}"

    def exact_values():
        a = abs(qm.total_current(2) - 1 / math.sqrt(2))
        b = abs(qm.total_current(4) - (1 / math.sqrt(12) + 0.5))
        return max(a, b) < 1e-14, f"{max(a, b):.2e}"

    def flux():
        rho = np.linspace(0, 3, 6001)
        g, gr, gz, _, _ = qm.green_arrays(rho, 6.0, 10.0)
        jz = qm.current_arrays(g, gr, gz, rho, 10.0)[2]
        f = np.trapezoid(rho * jz, rho)
        t = qm.total_current(10.0)
        return abs(f / t - 1) < 1e-4, f"flux {f:.8f} vs {t:.8f}"

    def gradient():
        eps, r, z, h = 10.0, 0.4, 1.3, 1e-6
        g = qm.green(ScaledPoint(r, z), eps)
        fd = (qm.green(ScaledPoint(r + h, z), eps).g - qm.green(ScaledPoint(r - h, z), eps).g) / (2 * h)
        e = abs(fd - g.d_rho) / abs(g.d_rho)
        return e < 1e-6, f"rel {e:.2e}"

    def airy():
        ai, aip = airy_ai(0.0)
        e = abs(ai - 0.355028053887817) + abs(aip + 0.258819403792807)
        return e < 1e-13, f"{e:.2e}"

    def semiclassics():
        rho = np.array([0.5, 0.75])
        g = qm.green_arrays(rho, 3.3, 50.0)[0]
        f = sc.evaluate(rho, 3.3, 50.0, sc.SummationPolicy("uniform", 2000), with_current=False)
        e = float(np.max(np.abs(f.density / np.abs(g) ** 2 - 1)))
        return e < 0.1, f"max rel density diff {e:.3f}"

    def roots():
        p = ScaledPoint(0.5, 0.0)
        sols = cl.find_flight_times(p, 2)
        xs = sorted(round(float(s.x.real / math.pi), 10) for s in sols)
        return np.allclose(xs, sorted([1 / 6, 5 / 6] * 3), atol=1e-10), f"x/pi = {xs}"

    check("total current equals source limit", currents)
    check("total current closed forms", exact_values)
    check("flux through a plane equals total current", flux)
    check("analytic Green gradient", gradient)
    check("Airy function at zero", airy)
    check("flight times in the source plane", roots)
    check("uniform semiclassics against quantum", semiclassics)
    return res


def _selfcheck(cfg):
    results = selfcheck_results()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all(ok for _, ok, _ in results)


def run(argv=None):
    """Entry point returning the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    t0 = time.perf_counter()
    try:
        file_values = load_config(args.config, command) if args.config else {}
        cfg = effective_config(command, flags, file_values)
        if command == "selfcheck":
            ok = _selfcheck(cfg)
            print(f"magsource selfcheck: {'ok' if ok else 'FAILED'} wall={time.perf_counter() - t0:.2f}s")
            return EXIT_OK if ok else EXIT_FAILURE
        if command in ("density-map", "current-map", "flow-map"):
            eps, method, n = _map(command, cfg)
        elif command == "profile":
            eps, method, n = _profile(cfg)
        elif command == "caustics":
            eps, method, n = _caustics(cfg)
        elif command == "spectrum":
            eps, method, n = _spectrum(cfg)
        else:
            eps, method, n = _trajectories(cfg)
    except ThresholdError as exc:
        print(f"magsource: error: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD
    except (ConfigError, InvalidParameterError) as exc:
        print(f"magsource: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MagsourceError as exc:
        print(f"magsource: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    eps_txt = "-" if eps is None else f"{eps:.12g}"
    n_txt = "-" if n is None else str(n)
    print(f"magsource {command}: epsilon={eps_txt} method={method} N={n_txt} "
          f"wall={time.perf_counter() - t0:.2f}s")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
