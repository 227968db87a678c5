from rest_framework import serializers
from django.conf import settings
from apps.platoon.serializers import PlatoonParamsSerializer
from apps.platoon.models import PlatoonParams
from apps.runs.models import BoundRow, RunConfig, RunReport
from apps.saturation.models import LineSearchPoint
from apps.saturation.serializers import LineSearchPointSerializer
from apps.validation.models import McReport, SimConfig
from apps.validation.serializers import McReportSerializer, SimConfigSerializer


class RunConfigSerializer(serializers.Serializer):
    """Versioned run configuration document."""

    version = serializers.IntegerField()
    platoon = PlatoonParamsSerializer()
    budget = serializers.IntegerField(min_value=1)
    epsilon = serializers.FloatField(min_value=0.0, required=False)
    a_grid = serializers.ListField(child=serializers.FloatField(), required=False, allow_empty=False)
    sim = SimConfigSerializer(required=False)
    output_dir = serializers.CharField(required=False, default='asap_output')
    export_dims = serializers.ListField(
        child=serializers.ListField(child=serializers.CharField(), min_length=2, max_length=3),
        required=False, default=list,
    )
    fixed_selection = serializers.ListField(
        child=serializers.IntegerField(min_value=1), required=False, allow_null=True, default=None,
    )
    reference_selection = serializers.ListField(
        child=serializers.IntegerField(min_value=1), required=False, allow_null=True, default=None,
    )
    reference_bounds = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), required=False, allow_null=True, default=None,
    )
    use_coefficients = serializers.BooleanField(required=False, default=False)

    def validate_version(self, value):
        if value != settings.ASAP_CONFIG_VERSION:
            raise serializers.ValidationError(
                f"Unsupported config version {value}; expected {settings.ASAP_CONFIG_VERSION}"
            )
        return value

    def validate_a_grid(self, value):
        if any(not 0.0 < a < 1.0 for a in value):
            raise serializers.ValidationError("Every grid point must lie strictly between 0 and 1")
        if value != sorted(value):
            raise serializers.ValidationError("Grid must be sorted ascending")
        return value

    def validate(self, attrs):
        n = attrs['platoon']['n']
        if attrs['budget'] > n:
            raise serializers.ValidationError({'budget': f"Budget {attrs['budget']} exceeds vehicle count {n}"})

        for key in ('fixed_selection', 'reference_selection'):
            chosen = attrs.get(key)
            if chosen is None:
                continue
            if len(set(chosen)) != len(chosen) or max(chosen) > n:
                raise serializers.ValidationError({key: f"Must be distinct vehicle indices in 1..{n}"})
            if len(chosen) != attrs['budget']:
                raise serializers.ValidationError({key: f"Must list exactly budget={attrs['budget']} vehicles"})

        bounds = attrs.get('reference_bounds')
        if bounds is not None and len(bounds) != n:
            raise serializers.ValidationError({'reference_bounds': f"Must list one amplitude per vehicle (n={n})"})
        return attrs

    def create(self, validated_data):
        platoon = PlatoonParams(**validated_data['platoon'])
        sim = SimConfig(**validated_data.get('sim', {}))
        fixed = validated_data.get('fixed_selection')
        reference = validated_data.get('reference_selection')
        reference_bounds = validated_data.get('reference_bounds')
        return RunConfig(
            platoon=platoon,
            budget=validated_data['budget'],
            epsilon=validated_data.get('epsilon', settings.ASAP_EPSILON),
            a_grid=tuple(validated_data.get('a_grid', settings.ASAP_A_GRID)),
            sim=sim,
            output_dir=validated_data['output_dir'],
            export_dims=tuple(tuple(dims) for dims in validated_data['export_dims']),
            fixed_selection=tuple(fixed) if fixed is not None else None,
            reference_selection=tuple(reference) if reference is not None else None,
            reference_bounds=tuple(reference_bounds) if reference_bounds is not None else None,
            use_coefficients=validated_data['use_coefficients'],
            version=validated_data['version'],
        )


class BoundRowSerializer(serializers.Serializer):
    index = serializers.IntegerField(min_value=1)
    selected = serializers.BooleanField()
    bound = serializers.FloatField(min_value=0.0)

    def create(self, validated_data):
        return BoundRow(**validated_data)


class RunReportSerializer(serializers.Serializer):
    """RunReport <-> JSON."""

    version = serializers.IntegerField()
    n = serializers.IntegerField(min_value=2)
    budget = serializers.IntegerField(min_value=1)
    selection = serializers.ListField(child=serializers.IntegerField(min_value=1))
    marginal_gains = serializers.ListField(child=serializers.FloatField())
    objective_trace = serializers.ListField(child=serializers.FloatField())
    reference_selection = serializers.ListField(
        child=serializers.IntegerField(min_value=1), allow_null=True,
    )
    reference_match = serializers.BooleanField(allow_null=True)
    bounds_table = BoundRowSerializer(many=True)
    a_star = serializers.FloatField()
    per_a_trace = LineSearchPointSerializer(many=True)
    safety_distances = serializers.ListField(child=serializers.FloatField())
    original_distances = serializers.ListField(child=serializers.FloatField())
    original_log_volume = serializers.FloatField()
    final_log_volume = serializers.FloatField()
    original_intersects = serializers.BooleanField()
    final_intersects = serializers.BooleanField()
    spectral_radius = serializers.FloatField()
    mc = McReportSerializer(allow_null=True, required=False)
    timings = serializers.DictField(child=serializers.FloatField(), required=False)
    reference_bounds = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), allow_null=True, required=False, default=None,
    )
    reference_bounds_deviation = serializers.FloatField(allow_null=True, required=False, default=None)
    reference_bounds_match = serializers.BooleanField(allow_null=True, required=False, default=None)

    def validate(self, attrs):
        rows = attrs['bounds_table']
        if len(rows) != attrs['n']:
            raise serializers.ValidationError(f"bounds_table must have exactly n={attrs['n']} rows")
        if any(not row['selected'] and row['bound'] != 0.0 for row in rows):
            raise serializers.ValidationError("Unselected actuators must carry bound 0")
        return attrs

    def create(self, validated_data):
        data = dict(validated_data)
        data['bounds_table'] = [BoundRow(**row) for row in data['bounds_table']]
        data['per_a_trace'] = [LineSearchPoint(**point) for point in data['per_a_trace']]
        data['mc'] = McReport(**data['mc']) if data.get('mc') else None
        data['timings'] = dict(data.get('timings', {}))
        return RunReport(**data)
