"""
Domain errors raised by the FMSC toolkit.

Every error carries a human readable ``detail`` and a stable machine
``code`` (same shape as DRF's ``APIException``) so management commands and
JSON reports can surface them without string parsing.
"""


class FmscError(Exception):
    default_detail = 'FMSC computation failed.'
    default_code = 'error'

    def __init__(self, detail=None, code=None):
        self.detail = detail if detail is not None else self.default_detail
        self.code = code if code is not None else self.default_code
        super().__init__(self.detail)

    def as_dict(self):
        return {'code': self.code, 'detail': str(self.detail)}


class DimensionError(FmscError):
    default_detail = 'Arrays are not conformable.'
    default_code = 'dimension'


class RankError(FmscError):
    default_detail = 'Matrix is rank deficient.'
    default_code = 'rank_deficient'


class WeakInstrumentError(RankError):
    default_detail = 'Instruments explain (numerically) none of the regressor.'
    default_code = 'weak_instrument'


class DegenerateVarianceError(FmscError):
    default_detail = 'Variance estimate is not strictly positive.'
    default_code = 'degenerate_variance'


class NearSingularCovarianceError(FmscError):
    default_detail = 'Moment covariance matrix is numerically singular.'
    default_code = 'near_singular_covariance'


class NotPsdError(FmscError):
    default_detail = 'Matrix is not positive semi-definite.'
    default_code = 'not_psd'


class WeightInvariantError(FmscError):
    default_detail = 'Weights do not sum to one.'
    default_code = 'weights'


class DesignError(FmscError):
    default_detail = 'Simulation design is invalid.'
    default_code = 'design'


class ConfigError(FmscError):
    default_detail = 'Invalid configuration.'
    default_code = 'config'


class DataParseError(FmscError):
    default_detail = 'Input data could not be parsed.'
    default_code = 'parse'


class UnsupportedConfigError(ConfigError):
    default_detail = 'Configuration is not supported by this procedure.'
    default_code = 'unsupported'
