from rest_framework import serializers
from apps.validation.models import McReport, SimConfig, STRATEGY_ALIASES
from core.exceptions import ModelError


class SimConfigSerializer(serializers.Serializer):
    """Monte Carlo section of the run configuration; omitted keys use settings."""

    horizon = serializers.IntegerField(min_value=1, required=False)
    trajectories = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    strategy = serializers.ChoiceField(choices=sorted(STRATEGY_ALIASES), required=False)
    chunk_size = serializers.IntegerField(min_value=1, required=False)
    reservoir_size = serializers.IntegerField(min_value=1, required=False)
    persist_traces = serializers.BooleanField(required=False, default=False)

    def validate(self, attrs):
        try:
            SimConfig(**attrs)
        except ModelError as e:
            raise serializers.ValidationError(str(e))
        return attrs

    def create(self, validated_data):
        return SimConfig(**validated_data)


class McReportSerializer(serializers.Serializer):
    states_checked = serializers.IntegerField(min_value=0)
    max_quadratic_form = serializers.FloatField()
    containment_ratio = serializers.FloatField(min_value=0.0, max_value=1.0)
    danger_hits = serializers.IntegerField(min_value=0)
    extremal_state = serializers.ListField(child=serializers.FloatField())
    rng_algorithm = serializers.CharField()
    strategy = serializers.CharField()
    seed = serializers.IntegerField()
    horizon = serializers.IntegerField()
    trajectories = serializers.IntegerField()

    def validate(self, attrs):
        if attrs['danger_hits'] > attrs['states_checked']:
            raise serializers.ValidationError("danger_hits cannot exceed states_checked")
        return attrs

    def create(self, validated_data):
        return McReport(**validated_data)
