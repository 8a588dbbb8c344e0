"""Command-line front end.

Every command builds the same request documents the HTTP service
accepts and normally evaluates them in-process; ``--server URL`` sends
them to a running service instead, so scripted workflows can move
between the two without changing outputs.  Frequencies are given in
MHz, voltages in volts, lengths in micrometres.

Exit codes: 0 success, 1 configuration or parse problem, 2 numerical
solver failure.
"""

from __future__ import annotations

import json
import math
import os
import sys

import click
import httpx

from . import service
from .errors import (
    ConfigError,
    InfeasibleError,
    SolverError,
    UnstableConfigurationError,
)
from .photonics import EMISSION_PATTERNS

EXIT_CONFIG = 1
EXIT_SOLVER = 2


class _SampleCount(click.ParamType):
    """Positive integer, scientific notation accepted (1e6)."""

    name = "count"

    def convert(self, value, param, ctx):
        if isinstance(value, int):
            return value
        try:
            real = float(value)
        except ValueError:
            self.fail(f"{value!r} is not a number", param, ctx)
        if not real > 0 or real != int(real):
            self.fail(f"{value!r} is not a positive whole number", param, ctx)
        return int(real)


SAMPLES = _SampleCount()


class ContractGroup(click.Group):
    """Group enforcing the exit-code contract around every command."""

    def main(self, *args, standalone_mode=True, **extra):
        try:
            rv = super().main(*args, standalone_mode=False, **extra)
        except click.exceptions.Exit as exc:
            sys.exit(exc.exit_code)
        except click.Abort:
            click.echo("aborted", err=True)
            sys.exit(EXIT_CONFIG)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_CONFIG)
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except SolverError as exc:
            click.echo(f"error: {exc}", err=True)
            for line in _solver_hints(exc):
                click.echo(line, err=True)
            sys.exit(EXIT_SOLVER)
        if standalone_mode:
            sys.exit(0 if rv is None else rv)
        return rv


def _solver_hints(exc: SolverError) -> list[str]:
    hints = []
    if isinstance(exc, UnstableConfigurationError) and exc.axis is not None:
        hints.append(f"unstable axis: {exc.axis}")
    if isinstance(exc, InfeasibleError):
        mb = exc.minimal_bound
        if mb is not None and math.isfinite(mb):
            hints.append(f"minimal feasible bound: {mb:.6g} V")
        else:
            hints.append("no bound works: field lies outside the reachable span")
    return hints


# ---------------------------------------------------------------------------
# backends


class LocalBackend:
    """Run operations in this process through the service layer."""

    def call(self, op: str, payload: dict) -> dict:
        model_cls, runner, _ = _OPS[op]
        try:
            request = model_cls.model_validate(payload)
        except ValueError as exc:
            raise ConfigError(f"invalid request: {exc}") from exc
        return runner(request).model_dump(mode="json")


class HttpBackend:
    """Send operations to a running service over HTTP."""

    def __init__(self, base_url: str):
        self.base_url = base_url

    def call(self, op: str, payload: dict) -> dict:
        _, _, path = _OPS[op]
        client = _http_client(self.base_url)
        try:
            response = client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise ConfigError(
                f"cannot reach service at {self.base_url}: {exc}"
            ) from exc
        finally:
            client.close()
        return _translate(response)


def _http_client(base_url: str) -> httpx.Client:
    return httpx.Client(base_url=base_url, timeout=300.0)


def _translate(response) -> dict:
    if response.status_code == 200:
        return response.json()
    try:
        body = response.json()
    except ValueError:
        body = {}
    message = body.get("error", f"service returned status {response.status_code}")
    kind = body.get("kind", "")
    if response.status_code == 400:
        raise ConfigError(message)
    if response.status_code == 422:
        if kind == "InfeasibleError":
            mb = body.get("minimal_bound_v")
            raise InfeasibleError(
                message, minimal_bound=math.inf if mb is None else mb
            )
        if kind == "UnstableConfigurationError":
            raise UnstableConfigurationError(message, axis=body.get("axis"))
        raise SolverError(message)
    raise SolverError(message)


_OPS = {
    "solve": (service.SolveRequest, service.run_solve, "/solve"),
    "collect": (service.CollectRequest, service.run_collect, "/collect"),
    "compensate": (
        service.CompensateRequest,
        service.run_compensate,
        "/compensate",
    ),
    "scan_spectrum": (
        service.SpectrumScanRequest,
        service.run_spectrum_scan,
        "/scan/spectrum",
    ),
    "scan_displacement": (
        service.DisplacementScanRequest,
        service.run_displacement_scan,
        "/scan/displacement",
    ),
    "scan_height": (
        service.HeightScanRequest,
        service.run_height_scan,
        "/scan/height",
    ),
    "validate": (service.ValidateRequest, service.run_validate, "/layout/validate"),
}


def _backend(server_url: str | None):
    return HttpBackend(server_url) if server_url else LocalBackend()


# ---------------------------------------------------------------------------
# shared option groups and parsing helpers


def _apply(options, f):
    for option in reversed(options):
        f = option(f)
    return f


def layout_option(f):
    return click.option(
        "--layout",
        "layout_src",
        default="example",
        show_default=True,
        help="Built-in layout name ('example') or path to a layout JSON file.",
    )(f)


def drive_options(f):
    return _apply(
        [
            click.option(
                "--freq",
                "freq_mhz",
                type=float,
                default=45.0,
                show_default=True,
                help="Rf drive frequency in MHz.",
            ),
            click.option(
                "--vrf",
                "v_rf",
                type=float,
                default=50.0,
                show_default=True,
                help="Rf amplitude on the inner ring in volts.",
            ),
            click.option(
                "--alpha",
                type=float,
                default=0.0,
                show_default=True,
                help="Outer/inner rf amplitude ratio in [0, 1].",
            ),
            click.option(
                "--outer-only",
                is_flag=True,
                help="Ground the inner ring and drive only the outer one.",
            ),
        ],
        f,
    )


def output_options(f):
    return _apply(
        [
            click.option(
                "--json",
                "as_json",
                is_flag=True,
                help="Emit the structured document instead of the text report.",
            ),
            click.option(
                "--out",
                "out_path",
                type=click.Path(dir_okay=False, writable=True),
                default=None,
                help="Write output to this file instead of stdout.",
            ),
            click.option(
                "--server",
                "server_url",
                default=None,
                metavar="URL",
                help="Evaluate on a running service instead of in-process.",
            ),
        ],
        f,
    )


def scan_options(f):
    return _apply(
        [
            click.option(
                "--s0",
                type=float,
                default=0.2,
                show_default=True,
                help="Probe saturation parameter on the beam axis.",
            ),
            click.option(
                "--waist",
                "waist_um",
                type=float,
                default=30.0,
                show_default=True,
                help="Probe 1/e^2 intensity waist in um.",
            ),
            click.option(
                "--detect-us",
                type=float,
                default=400.0,
                show_default=True,
                help="Detection window per cycle in us.",
            ),
            click.option(
                "--cycles",
                type=int,
                default=4000,
                show_default=True,
                help="Detection cycles per setpoint.",
            ),
            click.option(
                "--cool-ms",
                type=float,
                default=4.0,
                show_default=True,
                help="Cooling interval per cycle in ms (bookkeeping only).",
            ),
            click.option(
                "--fiber-bg",
                type=float,
                default=0.0,
                show_default=True,
                help="Fiber channel background rate in counts/s.",
            ),
            click.option(
                "--lens-bg",
                type=float,
                default=0.0,
                show_default=True,
                help="Lens channel background rate in counts/s.",
            ),
            click.option(
                "--samples",
                type=SAMPLES,
                default=200_000,
                show_default=True,
                help="Monte Carlo samples for the collection efficiency.",
            ),
            click.option(
                "--seed",
                type=int,
                default=0,
                show_default=True,
                help="Random seed; equal seeds reproduce identical output.",
            ),
        ],
        f,
    )


def _layout_payload(layout_src: str) -> dict:
    if layout_src == "example":
        return {"name": "example"}
    if not os.path.exists(layout_src):
        raise ConfigError(f"layout file not found: {layout_src}")
    with open(layout_src, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"layout file is not valid JSON: {exc}") from exc
    return {"document": document}


def _drive_payload(freq_mhz, v_rf, alpha, outer_only) -> dict:
    return {
        "freq_mhz": freq_mhz,
        "v_rf": v_rf,
        "alpha": alpha,
        "outer_only": outer_only,
    }


def _parse_floats(text: str, what: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError as exc:
        raise ConfigError(
            f"{what} must be a comma-separated list of numbers, got {text!r}"
        ) from exc


def _parse_vec3(text: str, what: str) -> tuple[float, float, float]:
    values = _parse_floats(text, what)
    if len(values) != 3:
        raise ConfigError(f"{what} needs exactly three components, got {text!r}")
    return values


def _emit(text: str, out_path: str | None):
    if out_path is None:
        click.echo(text, nl=False)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _as_document(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _fmt_vec(values, digits=3) -> str:
    return "(" + ", ".join(f"{v:.{digits}f}" for v in values) + ")"


# ---------------------------------------------------------------------------
# commands


@click.group(cls=ContractGroup)
@click.version_option(package_name="fibertrap", prog_name="fibertrap")
def cli():
    """Design toolkit for fiber-coupled surface ion traps."""


@cli.command()
@layout_option
@drive_options
@click.option(
    "--dc",
    "dc_pairs",
    multiple=True,
    metavar="ID=VOLTS",
    help="Static electrode voltage, repeatable.",
)
@output_options
def solve(layout_src, freq_mhz, v_rf, alpha, outer_only, dc_pairs, as_json, out_path, server_url):
    """Locate the rf null and report modes, tilt, and depth."""
    dc_voltages = {}
    for pair in dc_pairs:
        eid, sep, text = pair.partition("=")
        if not sep or not eid:
            raise ConfigError(f"--dc expects ID=VOLTS, got {pair!r}")
        try:
            dc_voltages[eid] = float(text)
        except ValueError as exc:
            raise ConfigError(f"--dc voltage is not a number: {pair!r}") from exc
    payload = {
        "layout": _layout_payload(layout_src),
        "drive": _drive_payload(freq_mhz, v_rf, alpha, outer_only),
        "dc_voltages": dc_voltages,
    }
    doc = _backend(server_url).call("solve", payload)
    if as_json:
        _emit(_as_document(doc), out_path)
        return
    lines = [
        f"null (um):        {_fmt_vec(doc['null_um'])}",
        f"height (um):      {doc['height_um']:.3f}",
        f"rf residual:      {doc['residual_v_per_m']:.3e} V/m",
        "modes:",
    ]
    for mode in doc["modes"]:
        lines.append(
            f"  {mode['frequency_mhz']:8.4f} MHz  axis {_fmt_vec(mode['axis'])}"
        )
    lines += [
        f"tilt about x:     {doc['tilt_deg']:.2f} deg",
        f"depth:            {doc['depth_kelvin']:.1f} K ({doc['depth_ev']:.4f} eV)",
        f"saddle (um):      {_fmt_vec(doc['saddle_um'])}",
    ]
    _emit("\n".join(lines) + "\n", out_path)


@cli.command()
@click.option(
    "--height",
    "ion_height_um",
    type=float,
    default=50.0,
    show_default=True,
    help="Ion height above the electrode plane in um.",
)
@click.option(
    "--na",
    "--fiber-na",
    "fiber_na",
    type=float,
    default=0.37,
    show_default=True,
    help="Numerical aperture of the collection fiber.",
)
@click.option(
    "--lens-na",
    type=float,
    default=0.5,
    show_default=True,
    help="Numerical aperture of the reference lens channel.",
)
@click.option(
    "--hole-radius",
    "hole_radius_um",
    type=float,
    default=25.0,
    show_default=True,
    help="Collection hole radius in um.",
)
@click.option(
    "--core-radius",
    "core_radius_um",
    type=float,
    default=110.0,
    show_default=True,
    help="Fiber core radius in um.",
)
@click.option(
    "--recess",
    "recess_um",
    type=float,
    default=50.0,
    show_default=True,
    help="Fiber recess below the electrode plane in um.",
)
@click.option(
    "--taper",
    "taper_deg",
    type=float,
    default=30.0,
    show_default=True,
    help="Hole taper half-angle in degrees.",
)
@click.option(
    "--pattern",
    type=click.Choice(EMISSION_PATTERNS),
    default="isotropic",
    show_default=True,
    help="Emission pattern of the ion.",
)
@click.option("--lossless", is_flag=True, help="Drop all transmission losses.")
@click.option(
    "--offset",
    "offset_text",
    default="0,0",
    show_default=True,
    metavar="X,Y",
    help="Lateral ion offset from the hole axis in um.",
)
@click.option(
    "--samples",
    type=SAMPLES,
    default=200_000,
    show_default=True,
    help="Monte Carlo samples.",
)
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
@output_options
def collect(
    ion_height_um,
    fiber_na,
    lens_na,
    hole_radius_um,
    core_radius_um,
    recess_um,
    taper_deg,
    pattern,
    lossless,
    offset_text,
    samples,
    seed,
    as_json,
    out_path,
    server_url,
):
    """Photon collection budget of the fiber path at one ion height."""
    offset = _parse_floats(offset_text, "--offset")
    if len(offset) != 2:
        raise ConfigError(f"--offset needs two components, got {offset_text!r}")
    payload = {
        "stack": {
            "hole_radius_um": hole_radius_um,
            "taper_half_angle_deg": taper_deg,
            "recess_depth_um": recess_um,
            "core_radius_um": core_radius_um,
            "fiber_na": fiber_na,
            "lens_na": lens_na,
            "emission_pattern": pattern,
            "lossless": lossless,
        },
        "ion_height_um": ion_height_um,
        "lateral_offset_um": offset,
        "samples": samples,
        "seed": seed,
    }
    doc = _backend(server_url).call("collect", payload)
    if as_json:
        _emit(_as_document(doc), out_path)
        return
    lines = [
        f"cone fraction:    {doc['cone_fraction']:.6f} (fiber NA {fiber_na:g})",
        f"subtended NA:     {doc['subtended_na']:.4f} at {ion_height_um:g} um",
        f"mc fraction:      {doc['mc_fraction']:.6f} +/- {doc['mc_std_error']:.6f}"
        f" ({doc['samples']} samples, seed {doc['seed']})",
        f"loss chain:       {doc['loss_chain']:.6f}",
        f"net efficiency:   {doc['net_efficiency']:.6f}",
        f"fiber/lens ratio: {doc['fiber_lens_ratio']:.6f}",
    ]
    _emit("\n".join(lines) + "\n", out_path)


@cli.group()
def scan():
    """Simulated fluorescence scans, written as per-channel CSV."""


def _scan_common_payload(
    layout_src, freq_mhz, v_rf, alpha, outer_only, s0, waist_um,
    detect_us, cycles, cool_ms, fiber_bg, lens_bg, samples, seed,
    detuning_mhz=0.0, direction=None,
):
    probe = {"s0": s0, "waist_um": waist_um, "detuning_mhz": detuning_mhz}
    if direction is not None:
        probe["direction"] = direction
    return {
        "layout": _layout_payload(layout_src),
        "drive": _drive_payload(freq_mhz, v_rf, alpha, outer_only),
        "probe": probe,
        "detect_time_us": detect_us,
        "cycles": cycles,
        "cool_time_ms": cool_ms,
        "fiber_background_hz": fiber_bg,
        "lens_background_hz": lens_bg,
        "mc_samples": samples,
        "seed": seed,
    }


def _emit_scan(doc: dict, as_json: bool, out_path: str | None):
    _emit(_as_document(doc["document"]) if as_json else doc["csv"], out_path)


@scan.command()
@layout_option
@drive_options
@click.option(
    "--start",
    "start_mhz",
    type=float,
    default=-80.0,
    show_default=True,
    help="First probe detuning in MHz.",
)
@click.option(
    "--stop",
    "stop_mhz",
    type=float,
    default=40.0,
    show_default=True,
    help="Last probe detuning in MHz.",
)
@click.option(
    "--points",
    type=int,
    default=49,
    show_default=True,
    help="Number of detuning setpoints.",
)
@click.option(
    "--detunings",
    "detunings_text",
    default=None,
    metavar="D1,D2,...",
    help="Explicit detuning list in MHz, overriding the grid.",
)
@scan_options
@output_options
def spectrum(
    layout_src, freq_mhz, v_rf, alpha, outer_only,
    start_mhz, stop_mhz, points, detunings_text,
    s0, waist_um, detect_us, cycles, cool_ms, fiber_bg, lens_bg,
    samples, seed, as_json, out_path, server_url,
):
    """Sweep the probe detuning with the ion parked on the rf null."""
    if detunings_text is not None:
        detunings = list(_parse_floats(detunings_text, "--detunings"))
    elif points > 1:
        step = (stop_mhz - start_mhz) / (points - 1)
        detunings = [start_mhz + step * i for i in range(points)]
    else:
        detunings = [start_mhz] * max(points, 0)
    payload = _scan_common_payload(
        layout_src, freq_mhz, v_rf, alpha, outer_only, s0, waist_um,
        detect_us, cycles, cool_ms, fiber_bg, lens_bg, samples, seed,
    )
    payload["detunings_mhz"] = detunings
    doc = _backend(server_url).call("scan_spectrum", payload)
    _emit_scan(doc, as_json, out_path)


@scan.command()
@layout_option
@drive_options
@click.option(
    "--setpoints",
    "setpoints_text",
    default="-4,-3,-2,-1,0,1,2,3,4",
    show_default=True,
    metavar="D1,D2,...",
    help="Displacements along the scan direction in um.",
)
@click.option(
    "--axis",
    type=click.Choice(["sensitive", "insensitive", "x", "y", "z"]),
    default=None,
    help="Scan direction by name; 'sensitive' follows the strongest"
    " micromotion response, 'insensitive' the flat one. [default: sensitive]",
)
@click.option(
    "--direction",
    "direction_text",
    default=None,
    metavar="X,Y,Z",
    help="Explicit scan direction vector, instead of --axis.",
)
@click.option(
    "--detuning",
    "detuning_mhz",
    type=float,
    default=0.0,
    show_default=True,
    help="Fixed probe detuning in MHz.",
)
@scan_options
@output_options
def displacement(
    layout_src, freq_mhz, v_rf, alpha, outer_only,
    setpoints_text, axis, direction_text, detuning_mhz,
    s0, waist_um, detect_us, cycles, cool_ms, fiber_bg, lens_bg,
    samples, seed, as_json, out_path, server_url,
):
    """Push the ion off the null and record both channels."""
    if axis is not None and direction_text is not None:
        raise ConfigError("give either --axis or --direction, not both")
    if direction_text is not None:
        direction = list(_parse_vec3(direction_text, "--direction"))
    else:
        direction = axis or "sensitive"
    payload = _scan_common_payload(
        layout_src, freq_mhz, v_rf, alpha, outer_only, s0, waist_um,
        detect_us, cycles, cool_ms, fiber_bg, lens_bg, samples, seed,
        detuning_mhz=detuning_mhz,
    )
    payload["displacements_um"] = list(
        _parse_floats(setpoints_text, "--setpoints")
    )
    payload["direction"] = direction
    doc = _backend(server_url).call("scan_displacement", payload)
    _emit_scan(doc, as_json, out_path)


@scan.command()
@layout_option
@drive_options
@click.option(
    "--alphas",
    "alphas_text",
    default="0,0.25,0.5,0.75,1",
    show_default=True,
    metavar="A1,A2,...",
    help="Ring balance values to sweep.",
)
@click.option(
    "--samples",
    type=SAMPLES,
    default=200_000,
    show_default=True,
    help="Monte Carlo samples per point.",
)
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed.")
@output_options
def height(
    layout_src, freq_mhz, v_rf, alpha, outer_only, alphas_text,
    samples, seed, as_json, out_path, server_url,
):
    """Collection efficiency along the ring-balance height curve."""
    payload = {
        "layout": _layout_payload(layout_src),
        "drive": _drive_payload(freq_mhz, v_rf, alpha, outer_only),
        "alphas": list(_parse_floats(alphas_text, "--alphas")),
        "mc_samples": samples,
        "seed": seed,
    }
    doc = _backend(server_url).call("scan_height", payload)
    if as_json:
        _emit(_as_document(doc), out_path)
        return
    lines = [f"seed: {doc['seed']}", "alpha   height_um   fraction    net"]
    for p in doc["points"]:
        lines.append(
            f"{p['alpha']:5.3f} {p['height_um']:11.3f} {p['fraction']:10.6f}"
            f" {p['net_efficiency']:10.6f}"
        )
    _emit("\n".join(lines) + "\n", out_path)


@cli.command()
@layout_option
@drive_options
@click.option(
    "--stray",
    "stray_text",
    required=True,
    metavar="EX,EY,EZ",
    help="Ambient field to cancel, in V/m.",
)
@click.option(
    "--bound",
    "bound_v",
    type=float,
    default=10.0,
    show_default=True,
    help="Voltage box |V| <= bound for every dc electrode.",
)
@click.option(
    "--at",
    "at_text",
    default=None,
    metavar="X,Y,Z",
    help="Evaluation point in um (default: the rf null).",
)
@output_options
def compensate(
    layout_src, freq_mhz, v_rf, alpha, outer_only, stray_text,
    bound_v, at_text, as_json, out_path, server_url,
):
    """Dc voltages cancelling a stray field at the ion."""
    payload = {
        "layout": _layout_payload(layout_src),
        "drive": _drive_payload(freq_mhz, v_rf, alpha, outer_only),
        "stray_v_per_m": list(_parse_vec3(stray_text, "--stray")),
        "bound_v": bound_v,
    }
    if at_text is not None:
        payload["at_um"] = list(_parse_vec3(at_text, "--at"))
    doc = _backend(server_url).call("compensate", payload)
    if as_json:
        _emit(_as_document(doc), out_path)
        return
    lines = [f"compensation at {_fmt_vec(doc['point_um'])} um:"]
    for eid in sorted(doc["voltages"]):
        lines.append(f"  {eid:12s} {doc['voltages'][eid]:+10.6f} V")
    lines += [
        f"worst-case |V|:  {doc['objective_v']:.6f} V",
        f"achieved field:  {_fmt_vec(doc['achieved_v_per_m'], digits=6)} V/m",
        f"residual:        {doc['residual_v_per_m']:.3e} V/m",
    ]
    _emit("\n".join(lines) + "\n", out_path)


@cli.command()
@layout_option
@click.option(
    "--server",
    "server_url",
    default=None,
    metavar="URL",
    help="Evaluate on a running service instead of in-process.",
)
def validate(layout_src, server_url):
    """Check a layout document against every geometric invariant."""
    payload = _layout_payload(layout_src)
    if "name" in payload:
        document = service.example_document()
    else:
        document = payload["document"]
    doc = _backend(server_url).call("validate", {"document": document})
    if doc["valid"]:
        click.echo(f"layout is valid ({len(document.get('patches', []))} patches)")
        return
    for diag in doc["diagnostics"]:
        ids = ",".join(diag["patch_ids"])
        click.echo(f"[{diag['rule']}] {ids}: {diag['message']}")
    sys.exit(EXIT_CONFIG)


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8078, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


def main(argv=None):
    return cli.main(args=argv, prog_name="fibertrap")
