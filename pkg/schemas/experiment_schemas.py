from marshmallow import Schema, fields, validate, ValidationError, validates, validates_schema, post_load

from models.experiment import ExperimentConfig
from services.hydro_service import BOUNDARY_DATA

SCHEMA_VERSION = 1
U64_MAX = 2 ** 64 - 1


def _slope():
    return fields.List(fields.Float())


class PotentialSchema(Schema):
    kind = fields.Str(required=True, validate=validate.OneOf(["quadratic", "soft_quartic", "kinked"]))
    a = fields.Float(validate=validate.Range(min=0.0, max=1.0, min_inclusive=False))
    b = fields.Float(validate=validate.Range(min=0.0, max=1.0, min_inclusive=False, max_inclusive=False))
    mollify = fields.Float(validate=validate.Range(min=0.0, min_inclusive=False))


class BaseExperimentSchema(Schema):
    """
    Общие поля всех экспериментов.
    """
    schema_version = fields.Int(required=True, validate=validate.Equal(SCHEMA_VERSION))
    experiment = fields.Str()
    seed = fields.Int(required=True, validate=validate.Range(min=0, max=U64_MAX))
    replicas = fields.Int(load_default=1, validate=validate.Range(min=1))
    potential = fields.Nested(PotentialSchema, required=True)
    dim = fields.Int(load_default=2, validate=validate.Range(min=2))
    dt = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0.0, min_inclusive=False))
    record_dt = fields.Float(load_default=None, allow_none=True,
                             validate=validate.Range(min=0.0, min_inclusive=False))
    burn_in = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0.0))

    def _check_slope(self, data, key):
        value = data.get(key)
        if value is not None and len(value) != data["dim"]:
            raise ValidationError(f"{key} must have {data['dim']} components", field_name=key)


class CorrectorSchema(BaseExperimentSchema):
    radii = fields.List(fields.Int(validate=validate.Range(min=1)), required=True, validate=validate.Length(min=1))
    p = fields.List(fields.Float(), load_default=None)

    @validates_schema
    def validate_slope(self, data, **kwargs):
        self._check_slope(data, "p")
        if data["replicas"] < 3:
            raise ValidationError("Corrector fluctuations need at least 3 replicas", field_name="replicas")


class FluxDecaySchema(BaseExperimentSchema):
    ells = fields.List(fields.Int(validate=validate.Range(min=1)), required=True, validate=validate.Length(min=3))
    L = fields.Int(required=True, validate=validate.Range(min=1))
    p = fields.List(fields.Float(), load_default=None)

    @validates_schema
    def validate_scales(self, data, **kwargs):
        self._check_slope(data, "p")
        if max(data["ells"]) > data["L"]:
            raise ValidationError("Largest window must not exceed L", field_name="ells")
        if data["replicas"] < 3:
            raise ValidationError("Variance estimates need at least 3 replicas", field_name="replicas")


class SurfaceTensionSchema(BaseExperimentSchema):
    L = fields.Int(required=True, validate=validate.Range(min=2))
    slopes = fields.List(_slope(), required=True, validate=validate.Length(min=1))
    compare_L = fields.Int(load_default=None, allow_none=True, validate=validate.Range(min=2))
    tolerance = fields.Float(load_default=10.0)

    @validates_schema
    def validate_slopes(self, data, **kwargs):
        for slope in data["slopes"]:
            if len(slope) != data["dim"]:
                raise ValidationError(f"Every slope must have {data['dim']} components", field_name="slopes")
        if data["replicas"] < 2:
            raise ValidationError("Surface tension needs at least 2 replicas", field_name="replicas")


class HessianSchema(BaseExperimentSchema):
    L = fields.Int(required=True, validate=validate.Range(min=2))
    p = fields.List(fields.Float(), required=True)
    h = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0.0, min_inclusive=False))

    @validates_schema
    def validate_slope(self, data, **kwargs):
        self._check_slope(data, "p")
        if data["replicas"] < 2:
            raise ValidationError("Hessian estimate needs at least 2 replicas", field_name="replicas")


class LusinSchema(Schema):
    kappas = fields.List(fields.Float(validate=validate.Range(min=0.0, min_inclusive=False)),
                         required=True, validate=validate.Length(min=1))
    eps = fields.Float(load_default=0.1, validate=validate.Range(min=0.0, max=1.0, min_inclusive=False))
    S = fields.Float(load_default=4.0, validate=validate.Range(min=1.0))


class LinearizeSchema(BaseExperimentSchema):
    L = fields.Int(required=True, validate=validate.Range(min=1))
    p = fields.List(fields.Float(), required=True)
    qs = fields.List(_slope(), required=True, validate=validate.Length(min=1))
    lusin = fields.Nested(LusinSchema, load_default=None, allow_none=True)

    @validates_schema
    def validate_slopes(self, data, **kwargs):
        self._check_slope(data, "p")
        for q in data["qs"]:
            if len(q) != data["dim"]:
                raise ValidationError(f"Every target slope must have {data['dim']} components", field_name="qs")
        if data["replicas"] < 2:
            raise ValidationError("Linearization modulus needs at least 2 replicas", field_name="replicas")


class EffectiveGradientSchema(Schema):
    slopes = fields.List(fields.Float(), required=True, validate=validate.Length(min=2))
    values = fields.List(fields.Float(), required=True, validate=validate.Length(min=2))

    @validates_schema
    def validate_table(self, data, **kwargs):
        if len(data["slopes"]) != len(data["values"]):
            raise ValidationError("Slope and value tables must have equal length", field_name="values")


class HydroSchema(BaseExperimentSchema):
    eps = fields.List(fields.Float(validate=validate.Range(min=0.0, max=0.5, min_inclusive=False)),
                      required=True, validate=validate.Length(min=3))
    boundary = fields.Str(load_default="sin_product", validate=validate.OneOf(sorted(BOUNDARY_DATA)))
    horizon = fields.Float(load_default=1.0, validate=validate.Range(min=0.0, min_inclusive=False))
    effective_gradient = fields.Nested(EffectiveGradientSchema, load_default=None, allow_none=True)
    with_gradient = fields.Bool(load_default=False)
    zero_noise = fields.Bool(load_default=False)
    min_exponent = fields.Float(load_default=0.3)

    @validates("eps")
    def validate_eps(self, value, **kwargs):
        for eps in value:
            n = round(1.0 / eps)
            if abs(n * eps - 1.0) > 1e-9:
                raise ValidationError(f"Mesh size {eps} is not of the form 1/N")

    @validates_schema
    def validate_effective_gradient(self, data, **kwargs):
        potential = data["potential"]
        if (potential["kind"] != "quadratic" or potential.get("mollify")) and data["effective_gradient"] is None:
            raise ValidationError("Non-quadratic potentials need a tabulated effective gradient",
                                  field_name="effective_gradient")


class ProcessSchema(Schema):
    kind = fields.Str(load_default="brownian", validate=validate.OneOf(["brownian", "edge_gradient"]))
    dt = fields.Float(load_default=1e-3, validate=validate.Range(min=0.0, min_inclusive=False))
    horizon = fields.Float(load_default=1.0, validate=validate.Range(min=0.0, min_inclusive=False))
    x0 = fields.Float(load_default=0.0)
    radius = fields.Int(load_default=8, validate=validate.Range(min=1))
    slope = fields.List(fields.Float(), load_default=None)
    volatility = fields.Float(load_default=1.0, validate=validate.Range(min=0.0, min_inclusive=False))


class OccupationSchema(BaseExperimentSchema):
    process = fields.Nested(ProcessSchema, load_default=lambda: ProcessSchema().load({}))
    thresholds = fields.List(fields.Float(validate=validate.Range(min=0.0)), required=True,
                             validate=validate.Length(min=3))
    sets = fields.List(fields.List(fields.List(fields.Float(), validate=validate.Length(equal=2)),
                                   validate=validate.Length(max=32)), load_default=list)
    max_relative_intercept = fields.Float(load_default=0.1)

    @validates_schema
    def validate_replicas(self, data, **kwargs):
        if data["replicas"] < 2:
            raise ValidationError("Occupation experiment needs at least 2 replicas", field_name="replicas")


class ExcessSchema(BaseExperimentSchema):
    L = fields.Int(required=True, validate=validate.Range(min=4))
    ells = fields.List(fields.Int(), required=True, validate=validate.Length(min=1))
    p = fields.List(fields.Float(), load_default=None)

    @validates_schema
    def validate_scales(self, data, **kwargs):
        self._check_slope(data, "p")
        for l in data["ells"]:
            if l < 4 or l > data["L"] or l & (l - 1):
                raise ValidationError(f"Scale {l} must be dyadic and lie in [4, L]", field_name="ells")


class HeatKernelSchema(BaseExperimentSchema):
    L = fields.Int(required=True, validate=validate.Range(min=1))
    environment = fields.Str(load_default="constant", validate=validate.OneOf(["constant", "langevin"]))
    coefficient = fields.Float(load_default=1.0, validate=validate.Range(min=0.0, min_inclusive=False))
    p = fields.List(fields.Float(), load_default=None)
    y = fields.List(fields.Int(), load_default=None)
    duration = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0.0, min_inclusive=False))

    @validates_schema
    def validate_points(self, data, **kwargs):
        self._check_slope(data, "p")
        if data["y"] is not None and len(data["y"]) != data["dim"]:
            raise ValidationError(f"y must have {data['dim']} coordinates", field_name="y")


class GffSchema(BaseExperimentSchema):
    L = fields.Int(required=True, validate=validate.Range(min=1))
    horizon = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0.0, min_inclusive=False))
    tolerance_se = fields.Float(load_default=4.0)
    lag = fields.Float(load_default=None, allow_none=True, validate=validate.Range(min=0.0, min_inclusive=False))
    decay_levels = fields.Int(load_default=1, validate=validate.Range(min=1))
    decay_tolerance = fields.Float(load_default=0.1, validate=validate.Range(min=0.0, min_inclusive=False))

    @validates_schema
    def validate_replicas(self, data, **kwargs):
        if data["replicas"] < 2:
            raise ValidationError("Covariance estimate needs at least 2 replicas", field_name="replicas")


SCHEMAS = {
    "corrector": CorrectorSchema,
    "flux-decay": FluxDecaySchema,
    "surface-tension": SurfaceTensionSchema,
    "hessian": HessianSchema,
    "linearize": LinearizeSchema,
    "hydro": HydroSchema,
    "occupation": OccupationSchema,
    "excess": ExcessSchema,
    "heatkernel": HeatKernelSchema,
    "gff": GffSchema,
}


class ExperimentConfigSchema(Schema):
    name = fields.Str(required=True, validate=validate.OneOf(sorted(SCHEMAS)))
    params = fields.Dict(required=True)
    seed = fields.Int(required=True, validate=validate.Range(min=0, max=U64_MAX))
    replicas = fields.Int(load_default=1, validate=validate.Range(min=1))
    out_dir = fields.Str(load_default="./out")
    schema_version = fields.Int(load_default=SCHEMA_VERSION, validate=validate.Equal(SCHEMA_VERSION))

    @post_load
    def make_config(self, data, **kwargs):
        return ExperimentConfig(**data)
