class RoaForgeError(Exception):
    """Base error. `stage` names the pipeline stage that raised it."""

    stage = 'general'

    def __init__(self, message, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def to_dict(self):
        return {'success': False, 'stage': self.stage, 'message': str(self)}


class DimensionError(RoaForgeError, ValueError):
    stage = 'input'


class SingularTransformError(RoaForgeError, ValueError):
    stage = 'transform'


class DegreeLimitError(RoaForgeError, ValueError):
    stage = 'transform'


class DegeneratePremiseError(RoaForgeError, ValueError):
    stage = 'factorization'


class FactorizationError(RoaForgeError):
    stage = 'factorization'

    def __init__(self, message, point=None, residual=None):
        super().__init__(message)
        self.point = point
        self.residual = residual

    def to_dict(self):
        data = super().to_dict()
        data['point'] = None if self.point is None else [float(v) for v in self.point]
        data['residual'] = None if self.residual is None else float(self.residual)
        return data


class CertificateError(RoaForgeError):
    stage = 'lmi'


class LevelSetError(RoaForgeError, ValueError):
    stage = 'level'


class ConfigError(RoaForgeError):
    stage = 'config'

    def __init__(self, message, field=None):
        super().__init__(f'{field}: {message}' if field else message)
        self.field = field


class ResultsError(RoaForgeError):
    stage = 'results'


class AllCasesFailedError(RoaForgeError):
    stage = 'pipeline'

    def __init__(self, message, outcomes=()):
        super().__init__(message)
        self.outcomes = list(outcomes)
