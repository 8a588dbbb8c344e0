"""HTTP facade over the design pipeline.

Request and response models speak the bench units (micrometres,
megahertz, volts, counts per second) and convert to SI at this boundary;
everything below works in metres and radians per second.  Configuration
problems map to status 400, numerical failures to 422 with the error
class name in the body, so clients can translate them to exit codes
without parsing messages.
"""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from fastapi import FastAPI, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from . import __version__, control, experiment, photonics, trap
from .errors import (
    ConfigError,
    ConvergenceError,
    InfeasibleError,
    LayoutParseError,
    LayoutValidationError,
    SolverError,
    UnstableConfigurationError,
)
from .layout import (
    ElectrodeLayout,
    example_layout,
    layout_from_dict,
    validate_layout,
)
from .trap import MG24, RfDrive

UM = 1e-6
MHZ = 2.0 * math.pi * 1e6  # rad/s per MHz


class ApiModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _um3(r) -> tuple[float, float, float]:
    x, y, z = (float(c) / UM for c in r)
    return (x, y, z)


class DriveModel(ApiModel):
    """Rf drive in bench units; outer_only grounds the inner ring."""

    freq_mhz: float = 45.0
    v_rf: float = 50.0
    alpha: float = 0.0
    outer_only: bool = False

    def to_drive(self) -> RfDrive:
        return RfDrive(
            omega_rf=self.freq_mhz * MHZ,
            v_inner=self.v_rf,
            alpha=self.alpha,
            inner_grounded=self.outer_only,
        )


class LayoutModel(ApiModel):
    """Either a built-in layout by name or a full schema document."""

    name: str | None = None
    document: dict | None = None

    def resolve(self) -> ElectrodeLayout:
        if (self.name is None) == (self.document is None):
            raise ConfigError("layout takes exactly one of 'name' or 'document'")
        if self.name is not None:
            if self.name != "example":
                raise ConfigError(f"unknown built-in layout {self.name!r}")
            return example_layout()
        layout = layout_from_dict(self.document)
        diagnostics = validate_layout(layout)
        if diagnostics:
            raise LayoutValidationError(diagnostics)
        return layout


def _example_ref() -> LayoutModel:
    return LayoutModel(name="example")


class StackModel(ApiModel):
    """Collection-path geometry; lossless empties the filter chain."""

    hole_radius_um: float = 25.0
    taper_half_angle_deg: float = 30.0
    recess_depth_um: float = 50.0
    core_radius_um: float = 110.0
    fiber_na: float = 0.37
    lens_na: float = 0.5
    pmt_coupling: float = 0.75
    emission_pattern: str = "isotropic"
    lossless: bool = False

    def to_stack(self) -> photonics.OpticalStack:
        return photonics.OpticalStack(
            hole_radius=self.hole_radius_um * UM,
            hole_taper_half_angle=self.taper_half_angle_deg,
            recess_depth=self.recess_depth_um * UM,
            core_radius=self.core_radius_um * UM,
            fiber_na=self.fiber_na,
            loss_elements=() if self.lossless else photonics.DEFAULT_LOSSES,
            pmt_coupling=1.0 if self.lossless else self.pmt_coupling,
            lens_na=self.lens_na,
            emission_pattern=self.emission_pattern,
        )


class ProbeModel(ApiModel):
    s0: float = 0.2
    waist_um: float = 30.0
    direction: tuple[float, float, float] | None = None
    detuning_mhz: float = 0.0

    def to_probe(self) -> experiment.ProbeBeam:
        if self.direction is None:
            direction = experiment.ProbeBeam().direction
        else:
            v = np.asarray(self.direction, dtype=float)
            norm = float(np.linalg.norm(v))
            if not norm > 0.0:
                raise ConfigError("probe direction must be a non-zero vector")
            direction = tuple(v / norm)
        return experiment.ProbeBeam(
            s0=self.s0,
            waist=self.waist_um * UM,
            direction=direction,
            detuning=self.detuning_mhz * MHZ,
        )


# ---------------------------------------------------------------------------
# request / response shapes


class SolveRequest(ApiModel):
    layout: LayoutModel = Field(default_factory=_example_ref)
    drive: DriveModel = Field(default_factory=DriveModel)
    dc_voltages: dict[str, float] = Field(default_factory=dict)


class ModeOut(ApiModel):
    frequency_mhz: float
    axis: tuple[float, float, float]


class SolveResponse(ApiModel):
    null_um: tuple[float, float, float]
    height_um: float
    residual_v_per_m: float
    modes: tuple[ModeOut, ...]
    tilt_deg: float
    depth_kelvin: float
    depth_ev: float
    saddle_um: tuple[float, float, float]


class CollectRequest(ApiModel):
    stack: StackModel = Field(default_factory=StackModel)
    ion_height_um: float = 50.0
    lateral_offset_um: tuple[float, float] = (0.0, 0.0)
    samples: int = 200_000
    seed: int = 0


class CollectResponse(ApiModel):
    cone_fraction: float
    lens_cone_fraction: float
    subtended_na: float
    mc_fraction: float
    mc_std_error: float
    samples: int
    loss_chain: float
    net_efficiency: float
    fiber_lens_ratio: float
    seed: int


class CompensateRequest(ApiModel):
    layout: LayoutModel = Field(default_factory=_example_ref)
    drive: DriveModel = Field(default_factory=DriveModel)
    stray_v_per_m: tuple[float, float, float]
    bound_v: float = control.DEFAULT_BOUND
    at_um: tuple[float, float, float] | None = None


class CompensateResponse(ApiModel):
    voltages: dict[str, float]
    point_um: tuple[float, float, float]
    achieved_v_per_m: tuple[float, float, float]
    residual_v_per_m: float
    objective_v: float
    max_abs_v: float


class ScanRequestBase(ApiModel):
    layout: LayoutModel = Field(default_factory=_example_ref)
    drive: DriveModel = Field(default_factory=DriveModel)
    stack: StackModel = Field(default_factory=StackModel)
    probe: ProbeModel = Field(default_factory=ProbeModel)
    detect_time_us: float = 400.0
    cycles: int = 4000
    cool_time_ms: float = 4.0
    fiber_background_hz: float = 0.0
    lens_background_hz: float = 0.0
    mc_samples: int = 200_000
    seed: int = 0

    def to_spec(self, kind: str, setpoints) -> experiment.ScanSpec:
        return experiment.ScanSpec(
            kind=kind,
            setpoints=tuple(setpoints),
            detect_time=self.detect_time_us * 1e-6,
            cycles=self.cycles,
            cool_time=self.cool_time_ms * 1e-3,
            probe=self.probe.to_probe(),
            fiber_background=self.fiber_background_hz,
            lens_background=self.lens_background_hz,
            mc_samples=self.mc_samples,
            seed=self.seed,
        )


class SpectrumScanRequest(ScanRequestBase):
    detunings_mhz: tuple[float, ...] = ()


ScanAxis = Literal["sensitive", "insensitive", "x", "y", "z"]


class DisplacementScanRequest(ScanRequestBase):
    displacements_um: (
        tuple[float, ...] | tuple[tuple[float, float, float], ...]
    ) = ()
    direction: ScanAxis | tuple[float, float, float] | None = None


class ScanResponse(ApiModel):
    document: dict
    csv: str


class HeightScanRequest(ApiModel):
    layout: LayoutModel = Field(default_factory=_example_ref)
    drive: DriveModel = Field(default_factory=DriveModel)
    stack: StackModel = Field(default_factory=StackModel)
    alphas: tuple[float, ...] = ()
    mc_samples: int = 200_000
    seed: int = 0


class HeightPointOut(ApiModel):
    alpha: float
    height_um: float
    fraction: float
    std_error: float
    net_efficiency: float


class HeightScanResponse(ApiModel):
    points: tuple[HeightPointOut, ...]
    seed: int


class ValidateRequest(ApiModel):
    document: dict


class DiagnosticOut(ApiModel):
    rule: str
    patch_ids: tuple[str, ...]
    message: str


class ValidateResponse(ApiModel):
    valid: bool
    diagnostics: tuple[DiagnosticOut, ...]


class HealthResponse(ApiModel):
    status: str
    version: str


# ---------------------------------------------------------------------------
# operations, shared by the HTTP routes and the in-process CLI backend


def example_document() -> dict:
    return example_layout().to_dict()


def run_validate(req: ValidateRequest) -> ValidateResponse:
    try:
        layout = layout_from_dict(req.document)
    except LayoutParseError as exc:
        diag = DiagnosticOut(rule="parse", patch_ids=(), message=str(exc))
        return ValidateResponse(valid=False, diagnostics=(diag,))
    diagnostics = tuple(
        DiagnosticOut(rule=d.rule, patch_ids=d.patch_ids, message=d.message)
        for d in validate_layout(layout)
    )
    return ValidateResponse(valid=not diagnostics, diagnostics=diagnostics)


def run_solve(req: SolveRequest) -> SolveResponse:
    layout = req.layout.resolve()
    drive = req.drive.to_drive()
    unknown = sorted(set(req.dc_voltages) - set(layout.ids()))
    if unknown:
        raise ConfigError(f"dc voltages name unknown electrodes: {unknown}")
    solution = trap.solve_trap(
        layout, drive, MG24, dc_voltages=dict(req.dc_voltages) or None
    )
    modes = tuple(
        ModeOut(
            frequency_mhz=m.frequency / 1e6,
            axis=tuple(float(c) for c in m.axis),
        )
        for m in solution.modes
    )
    return SolveResponse(
        null_um=_um3(solution.null),
        height_um=float(solution.null[2]) / UM,
        residual_v_per_m=solution.residual,
        modes=modes,
        tilt_deg=trap.principal_axis_tilt(solution.modes),
        depth_kelvin=solution.depth_kelvin,
        depth_ev=solution.depth_ev,
        saddle_um=_um3(solution.saddle),
    )


def run_collect(req: CollectRequest) -> CollectResponse:
    stack = req.stack.to_stack()
    height = req.ion_height_um * UM
    offset = tuple(float(c) * UM for c in req.lateral_offset_um)
    got = photonics.collection_mc(stack, height, offset, req.samples, req.seed)
    chain = photonics.loss_chain(stack)
    net = got.fraction * chain
    lens_cone = photonics.cone_fraction(stack.lens_na)
    return CollectResponse(
        cone_fraction=photonics.cone_fraction(stack.fiber_na),
        lens_cone_fraction=lens_cone,
        subtended_na=stack.subtended_na(height),
        mc_fraction=got.fraction,
        mc_std_error=got.std_error,
        samples=got.n_samples,
        loss_chain=chain,
        net_efficiency=net,
        fiber_lens_ratio=net / lens_cone,
        seed=req.seed,
    )


def run_compensate(req: CompensateRequest) -> CompensateResponse:
    layout = req.layout.resolve()
    drive = req.drive.to_drive()
    if req.at_um is None:
        point = trap.find_rf_null(layout, drive)
    else:
        point = np.asarray(req.at_um, dtype=float) * UM
    stray = np.asarray(req.stray_v_per_m, dtype=float)
    basis = control.shim_basis(layout, point)
    got = control.stray_compensation(basis, stray, bound=req.bound_v)
    voltages = {eid: float(v) for eid, v in got.voltages.items()}
    return CompensateResponse(
        voltages=voltages,
        point_um=_um3(point),
        achieved_v_per_m=tuple(float(c) for c in got.achieved_field),
        residual_v_per_m=float(np.linalg.norm(got.achieved_field + stray)),
        objective_v=float(got.objective),
        max_abs_v=max((abs(v) for v in voltages.values()), default=0.0),
    )


def run_spectrum_scan(req: SpectrumScanRequest) -> ScanResponse:
    layout = req.layout.resolve()
    drive = req.drive.to_drive()
    stack = req.stack.to_stack()
    spec = req.to_spec("spectrum", (d * MHZ for d in req.detunings_mhz))
    results = experiment.spectrum_scan(layout, drive, MG24, stack, spec)
    return ScanResponse(
        document=experiment.scan_document(results),
        csv=experiment.write_scan_csv(results),
    )


def _resolve_scan_direction(req: DisplacementScanRequest, layout, drive):
    direction = req.direction
    if isinstance(direction, str):
        if direction in ("x", "y", "z"):
            return {
                "x": (1.0, 0.0, 0.0),
                "y": (0.0, 1.0, 0.0),
                "z": (0.0, 0.0, 1.0),
            }[direction]
        probe_k = req.probe.to_probe().unit
        sensitive, insensitive = control.micromotion_scan_axes(
            layout, drive, probe_direction=probe_k
        )
        return tuple(sensitive if direction == "sensitive" else insensitive)
    v = np.asarray(direction, dtype=float)
    norm = float(np.linalg.norm(v))
    if not norm > 0.0:
        raise ConfigError("scan direction must be a non-zero vector")
    return tuple(v / norm)


def run_displacement_scan(req: DisplacementScanRequest) -> ScanResponse:
    layout = req.layout.resolve()
    drive = req.drive.to_drive()
    stack = req.stack.to_stack()
    raw = req.displacements_um
    vector_setpoints = bool(raw) and isinstance(raw[0], tuple)
    if vector_setpoints:
        if req.direction is not None:
            raise ConfigError(
                "direction only applies to scalar displacement setpoints"
            )
        setpoints = tuple(
            tuple(float(c) * UM for c in point) for point in raw
        )
        shim = None
    else:
        setpoints = tuple(float(d) * UM for d in raw)
        if setpoints and req.direction is None:
            raise ConfigError("scalar displacement setpoints need a direction")
        shim = (
            _resolve_scan_direction(req, layout, drive) if setpoints else None
        )
    spec = req.to_spec("displacement", setpoints)
    results = experiment.displacement_scan(
        layout, drive, MG24, stack, spec, shim_direction=shim
    )
    return ScanResponse(
        document=experiment.scan_document(results),
        csv=experiment.write_scan_csv(results),
    )


def run_height_scan(req: HeightScanRequest) -> HeightScanResponse:
    layout = req.layout.resolve()
    drive = req.drive.to_drive()
    stack = req.stack.to_stack()
    points = experiment.height_scan(
        layout, drive, MG24, stack, req.alphas, req.mc_samples, req.seed
    )
    return HeightScanResponse(
        points=tuple(
            HeightPointOut(
                alpha=p.alpha,
                height_um=p.height / UM,
                fraction=p.fraction,
                std_error=p.std_error,
                net_efficiency=p.net_efficiency,
            )
            for p in points
        ),
        seed=req.seed,
    )


# ---------------------------------------------------------------------------
# FastAPI wiring


def _error_body(exc: Exception) -> dict:
    body = {"kind": type(exc).__name__, "error": str(exc)}
    if isinstance(exc, InfeasibleError):
        mb = exc.minimal_bound
        body["minimal_bound_v"] = (
            float(mb) if mb is not None and math.isfinite(mb) else None
        )
    if isinstance(exc, UnstableConfigurationError) and exc.axis is not None:
        body["axis"] = exc.axis
    if isinstance(exc, ConvergenceError) and exc.residual is not None:
        body["residual"] = float(exc.residual)
    if isinstance(exc, LayoutValidationError):
        body["diagnostics"] = [
            {"rule": d.rule, "patch_ids": list(d.patch_ids), "message": d.message}
            for d in exc.diagnostics
        ]
    return body


def create_app() -> FastAPI:
    app = FastAPI(title="fibertrap", version=__version__)

    @app.exception_handler(ConfigError)
    async def _on_config_error(request: Request, exc: ConfigError):
        return JSONResponse(status_code=400, content=_error_body(exc))

    @app.exception_handler(SolverError)
    async def _on_solver_error(request: Request, exc: SolverError):
        return JSONResponse(status_code=422, content=_error_body(exc))

    @app.exception_handler(RequestValidationError)
    async def _on_request_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "kind": "RequestValidationError",
                "error": "invalid request body",
                "detail": jsonable_encoder(exc.errors()),
            },
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.get("/layout/example")
    def layout_example() -> dict:
        return example_document()

    @app.post("/layout/validate", response_model=ValidateResponse)
    def layout_validate(req: ValidateRequest) -> ValidateResponse:
        return run_validate(req)

    @app.post("/solve", response_model=SolveResponse)
    def solve(req: SolveRequest) -> SolveResponse:
        return run_solve(req)

    @app.post("/collect", response_model=CollectResponse)
    def collect(req: CollectRequest) -> CollectResponse:
        return run_collect(req)

    @app.post("/compensate", response_model=CompensateResponse)
    def compensate(req: CompensateRequest) -> CompensateResponse:
        return run_compensate(req)

    @app.post("/scan/spectrum", response_model=ScanResponse)
    def scan_spectrum(req: SpectrumScanRequest) -> ScanResponse:
        return run_spectrum_scan(req)

    @app.post("/scan/displacement", response_model=ScanResponse)
    def scan_displacement(req: DisplacementScanRequest) -> ScanResponse:
        return run_displacement_scan(req)

    @app.post("/scan/height", response_model=HeightScanResponse)
    def scan_height(req: HeightScanRequest) -> HeightScanResponse:
        return run_height_scan(req)

    return app
