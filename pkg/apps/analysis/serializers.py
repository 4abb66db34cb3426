"""
Serializers for the analysis workflow: config validation on the way in,
flat result rows on the way out.
"""
from rest_framework import serializers

from apps.common.conf import fmsc_setting
from apps.moments.models import CandidateMode
from .models import AnalysisSettings, SuspectBlock


class SuspectBlockSerializer(serializers.Serializer):
    name = serializers.CharField()
    columns = serializers.ListField(child=serializers.CharField(), min_length=1)


class AnalysisConfigSerializer(serializers.Serializer):
    input = serializers.CharField()
    outcome = serializers.CharField()
    regressors = serializers.ListField(child=serializers.CharField(), min_length=1)
    baseline = serializers.ListField(child=serializers.CharField(), min_length=1)
    suspect_blocks = SuspectBlockSerializer(many=True)
    targets = serializers.ListField(child=serializers.CharField(), min_length=1)
    candidate_mode = serializers.ChoiceField(choices=CandidateMode.choices, default=CandidateMode.BLOCKS)
    add_constant = serializers.BooleanField(default=False)
    alpha = serializers.FloatField(default=0.05)
    delta = serializers.FloatField(default=0.05)
    draws_J = serializers.IntegerField(min_value=2, default=lambda: fmsc_setting('ANALYSIS_DRAWS'))
    seed = serializers.IntegerField(min_value=0, default=lambda: fmsc_setting('SEED'))
    output = serializers.CharField(default=lambda: fmsc_setting('OUTPUT_DIR'))
    format = serializers.ChoiceField(choices=['csv', 'json'], default='json')

    def validate_alpha(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('alpha must lie strictly between 0 and 1.')
        return value

    def validate_delta(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('delta must lie strictly between 0 and 1.')
        return value

    def validate(self, attrs):
        if attrs['alpha'] + attrs['delta'] >= 1:
            raise serializers.ValidationError({'delta': 'alpha + delta must be below 1.'})

        blocks = attrs['suspect_blocks']
        if not blocks:
            raise serializers.ValidationError({'suspect_blocks': 'At least one suspect block is required.'})
        names = [block['name'] for block in blocks]
        if len(set(names)) != len(names) or {'valid', 'full'} & set(names):
            raise serializers.ValidationError({'suspect_blocks': 'Block names must be unique and not "valid"/"full".'})

        roles = [attrs['outcome'], *attrs['regressors'], *attrs['baseline']]
        roles += [column for block in blocks for column in block['columns']]
        duplicated = sorted({column for column in roles if roles.count(column) > 1})
        if duplicated:
            raise serializers.ValidationError({'non_field_errors': f'Columns used in more than one role: {duplicated}'})
        if attrs['add_constant'] and 'constant' in roles:
            raise serializers.ValidationError({'add_constant': 'A column named "constant" already exists.'})

        regressors = list(attrs['regressors']) + (['constant'] if attrs['add_constant'] else [])
        missing = [target for target in attrs['targets'] if target not in regressors]
        if missing:
            raise serializers.ValidationError({'targets': f'Targets must be regressors: {missing}'})
        return attrs

    def create(self, validated_data):
        blocks = tuple(
            SuspectBlock(name=block['name'], columns=tuple(block['columns']))
            for block in validated_data['suspect_blocks']
        )
        data = {**validated_data, 'suspect_blocks': blocks}
        for key in ('regressors', 'baseline', 'targets'):
            data[key] = tuple(data[key])
        return AnalysisSettings(**data)


class EstimateRowSerializer(serializers.Serializer):
    target = serializers.CharField()
    candidate = serializers.CharField()
    estimate = serializers.FloatField()
    se = serializers.FloatField()
    lower = serializers.FloatField()
    upper = serializers.FloatField()


class FmscRowSerializer(serializers.Serializer):
    target = serializers.CharField()
    candidate = serializers.CharField()
    size = serializers.IntegerField()
    estimate = serializers.FloatField()
    bias_sq = serializers.FloatField()
    variance = serializers.FloatField()
    fmsc = serializers.FloatField()
    fmsc_positive_part = serializers.FloatField()
    selected = serializers.BooleanField()
    selected_pp = serializers.BooleanField()


class CriterionRowSerializer(serializers.Serializer):
    criterion = serializers.CharField()
    candidate = serializers.CharField()
    j_stat = serializers.FloatField()
    penalty = serializers.FloatField()
    value = serializers.FloatField()
    selected = serializers.BooleanField()


class IntervalRowSerializer(serializers.Serializer):
    target = serializers.CharField()
    candidate = serializers.CharField()
    method = serializers.CharField()
    lower = serializers.FloatField()
    upper = serializers.FloatField()
    alpha = serializers.FloatField()
    delta = serializers.FloatField()
    draws_J = serializers.IntegerField()
    region_points = serializers.IntegerField()
