"""Results file: everything needed to re-verify an estimate without re-solving."""
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from roa_forge.errors import ResultsError, RoaForgeError
from roa_forge.models import BoxDomain, LdiSystem, PolyMap, PwqCertificate, RoaEstimate, Transform, UnionRegion

logger = logging.getLogger(__name__)

FORMAT = 'roa-forge/results-v1'


@dataclass(frozen=True, eq=False)
class MemberRecord:
    index: int
    estimate: RoaEstimate
    vertices: LdiSystem


@dataclass(frozen=True, eq=False)
class ResultsBundle:
    system: PolyMap
    original_box: BoxDomain
    members: List[MemberRecord]
    doc: Dict[str, Any]
    path: Optional[Path] = None

    @property
    def region(self):
        return UnionRegion(tuple(m.estimate for m in self.members))

    @property
    def dim(self):
        return self.system.dim

    def output_path(self, kind):
        """Render target recorded by estimate, resolved next to the results file."""
        recorded = self.doc.get('outputs', {}).get(kind)
        if recorded is None or self.path is None:
            return None
        return self.path.parent / recorded


def _relative_outputs(outputs):
    base = outputs.results.parent
    return {kind: os.path.relpath(getattr(outputs, kind), base) for kind in ('svg', 'csv')}


def build_results(config, outcomes, union=None, member_areas=None, comparison=None):
    spec = config.spec
    doc = {
        'format': FORMAT,
        'system': spec.system.to_dict(),
        'original_box': spec.original_box.to_dict(),
        'solver': spec.options.to_dict(),
        'seed': config.validation.seed,
        'cases': [o.to_dict() for o in outcomes],
        'success': any(o.success for o in outcomes),
        'outputs': _relative_outputs(config.outputs),
    }
    if union is not None:
        successful = [o for o in outcomes if o.success]
        doc['areas'] = {
            'bounding_box': union.bounding_box.to_dict(),
            'union': union.to_dict(),
            'members': [dict(area.to_dict(), index=o.index) for o, area in zip(successful, member_areas)],
        }
        doc['comparison'] = comparison
    return doc


def dumps(doc):
    try:
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + '\n'
    except ValueError as exc:
        raise ResultsError(f'results contain a non-finite number: {exc}') from exc


def write_results(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    logger.info('results written to %s', path)
    return path


def _member(case):
    cert_doc = case['certificate']
    certificate = PwqCertificate.from_dict(cert_doc)
    estimate = RoaEstimate(
        certificate.P_list,
        case['k'],
        Transform.from_dict(case['transform']),
        BoxDomain.from_dict(case['box']),
        case.get('approximate', False),
        certificate,
        None if case.get('witness') is None else tuple(case['witness']),
        case.get('label', ''),
    )
    return MemberRecord(case['index'], estimate, LdiSystem(case['vertices']))


def load_results(path):
    """Parse a results file back into estimates, certificates and vertex sets."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ResultsError(f'results file {path} not found') from exc
    except json.JSONDecodeError as exc:
        raise ResultsError(f'results file {path} is not valid JSON: {exc}') from exc
    if doc.get('format') != FORMAT:
        raise ResultsError(f'{path} is not a roa-forge results file')

    try:
        members = [_member(case) for case in doc['cases'] if case.get('success')]
        bundle = ResultsBundle(PolyMap.from_dict(doc['system']), BoxDomain.from_dict(doc['original_box']),
                               members, doc, path)
    except (KeyError, TypeError, ValueError, RoaForgeError) as exc:
        raise ResultsError(f'results file {path} is malformed: {exc!r}') from exc
    return bundle

