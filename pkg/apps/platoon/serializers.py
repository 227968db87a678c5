import numpy as np
from rest_framework import serializers
from apps.platoon.models import PlatoonParams
from core.exceptions import ModelError


class ScalarOrListField(serializers.Field):
    """A float broadcast to every vehicle, or an explicit per-vehicle list."""

    default_error_messages = {
        'invalid': 'Expected a number or a list of numbers.',
    }

    def to_internal_value(self, data):
        if isinstance(data, bool):
            self.fail('invalid')
        if isinstance(data, (int, float)):
            return float(data)
        if isinstance(data, (list, tuple)) and data and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in data
        ):
            return [float(v) for v in data]
        self.fail('invalid')

    def to_representation(self, value):
        if np.isscalar(value):
            return float(value)
        values = [float(v) for v in value]
        if len(set(values)) == 1:
            return values[0]
        return values


class PlatoonParamsSerializer(serializers.Serializer):
    """Platoon section of the run configuration."""

    n = serializers.IntegerField(min_value=2)
    dt = serializers.FloatField()
    kp = ScalarOrListField()
    kd = ScalarOrListField()
    beta = ScalarOrListField()
    d_star = ScalarOrListField()
    v_star = ScalarOrListField(required=False, default=60.0)
    gamma = ScalarOrListField(required=False, default=1.0)

    def validate(self, attrs):
        try:
            PlatoonParams(**attrs)
        except ModelError as e:
            raise serializers.ValidationError(str(e))
        return attrs

    def create(self, validated_data):
        return PlatoonParams(**validated_data)
