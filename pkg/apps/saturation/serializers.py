from rest_framework import serializers
from apps.saturation.models import LineSearchPoint


class LineSearchPointSerializer(serializers.Serializer):
    a = serializers.FloatField()
    feasible = serializers.BooleanField()
    log_volume = serializers.FloatField(allow_null=True)
    status = serializers.CharField()

    def create(self, validated_data):
        return LineSearchPoint(**validated_data)
