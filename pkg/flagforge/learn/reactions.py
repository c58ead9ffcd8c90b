"""
This file is part of flagforge.

It defines the reactions of workloads to optimization solutions (as
speedups over the baseline), the labeling of the workloads by their most
efficient solution, and the labeled datasets used to train predictors.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from ..errors import ContractError
from ..autotuning.stats import TRUST_THRESHOLD, compare, \
    speedup_over_baseline
from ..crowd.table import ScenarioTable, solution_uid
from .features import FeatureVector, sort_features

logger = logging.getLogger(__name__)

# Label of the workloads which no solution improves
BASELINE = 'BASELINE'


@dataclass
class ReactionMatrix:
    """
    Reactions of workloads (rows) to solutions (columns)

    Attributes
    ----------
    - workloads: sorted list of workload ids
    - solutions: sorted list of solution uids
    - cells: dict of (workload, solution uid) -> improvement ratio;
      absent cells were not measured or not trustable
    - texts: dict of solution uid -> rendered solution
    """
    workloads: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    cells: dict = field(default_factory=dict)
    texts: dict = field(default_factory=dict)

    def ratio(self, workload, solution):
        """
        Return the ratio of a cell (1.0 for the BASELINE column), or None
        when it is absent
        """
        if solution == BASELINE:
            return(1.)
        return(self.cells.get((workload, solution)))

    def row(self, workload):
        "The present cells of a row, as a dict uid -> ratio"
        return(dict((s, self.cells[(workload, s)]) for s in self.solutions
                    if (workload, s) in self.cells))

    def to_dict(self):
        return({'workloads': list(self.workloads),
                'solutions': list(self.solutions),
                'cells': [[w, s, r] for (w, s), r in
                          sorted(self.cells.items())],
                'texts': dict(self.texts)})

    @classmethod
    def from_dict(cls, d):
        return(cls(list(d['workloads']), list(d['solutions']),
                   dict(((w, s), float(r)) for w, s, r in d['cells']),
                   dict(d.get('texts', {}))))


def _add_cell(cells, workload, uid, ratio):
    if ratio <= 0:
        raise ContractError('Reaction ratios should be positive')
    key = (workload, uid)
    cells[key] = max(cells.get(key, ratio), ratio)


def _matrix_from_table(table):
    cells = {}
    texts = {}
    for record in table.solutions:
        texts[record.solution_uid] = record.assignment_text
        for workload, (ratio, _) in record.reactions.items():
            _add_cell(cells, workload, record.solution_uid, ratio)
    return(ReactionMatrix(table.workloads(),
                          sorted(s.solution_uid for s in table.solutions),
                          cells, texts))


def _matrix_from_store(store, entries, baseline_label, threshold):
    cells = {}
    texts = {}
    workloads = set()
    for entry in entries:
        base = entry.baseline_stats.get('execution_time')
        if base is None:
            logger.warning('Entry %s of %s has no baseline measurement: '
                           'its reactions are dropped', entry.entry_uid,
                           entry.workload)
            continue
        workloads.add(entry.workload)
        for point in store.load_points(entry.entry_uid):
            if point.failure is not None or point.label == baseline_label \
                    or point.point_uid == entry.baseline_point:
                continue
            stats = point.characteristics['execution_time']
            if not point.trustable or stats.noisy or \
                    not compare(base, stats, threshold).trustable:
                continue
            uid = point.tags.get('solution_uid') or solution_uid(point.flags)
            texts.setdefault(uid, point.flags)
            _add_cell(cells, entry.workload, uid,
                      speedup_over_baseline(base, stats))
    return(ReactionMatrix(sorted(workloads),
                          sorted(set(s for _, s in cells)), cells, texts))


def build_reaction_matrix(source, store=None, baseline_label='baseline',
                          threshold=TRUST_THRESHOLD):
    """
    Build the reactions of workloads to solutions

    Parameters
    ----------
    source: a ScenarioTable, or a list of ExperimentEntry
        A crowd table, or local experiment entries (then `store` is
        needed to load their points)

    store: an ExperimentStore, optional

    baseline_label: string, optional
        Label of the baseline points of the entries

    threshold: float, optional
        Trust threshold: untrustable comparisons are left out

    Returns
    -------
    A ReactionMatrix
    """
    if isinstance(source, ScenarioTable):
        matrix = _matrix_from_table(source)
    else:
        entries = list(source)
        if len(entries) == 0:
            raise ContractError('No experiment entry to build reactions from')
        if store is None:
            raise ContractError('Reading experiment entries needs a store')
        matrix = _matrix_from_store(store, entries, baseline_label,
                                    threshold)
    if len(matrix.workloads) == 0:
        raise ContractError('The reaction matrix is empty')
    return(matrix)


def label_workloads(matrix, theta=TRUST_THRESHOLD):
    """
    Label each workload with its most efficient solution

    The label is the solution with the highest ratio when this ratio
    exceeds 1 + theta (ties go to the lowest uid), and BASELINE otherwise.

    Returns
    -------
    An OrderedDict workload -> label (in the order of the matrix rows)
    """
    if len(matrix.workloads) == 0:
        raise ContractError('Cannot label an empty reaction matrix')
    labels = OrderedDict()
    for workload in matrix.workloads:
        label, best = BASELINE, None
        for uid, ratio in sorted(matrix.row(workload).items()):
            if best is None or ratio > best:
                label, best = uid, ratio
        if best is None or best <= 1. + theta:
            label = BASELINE
        labels[workload] = label
    return(labels)


def group_workloads(labels):
    """
    Partition the workloads by label

    Returns
    -------
    dict label -> sorted list of workloads
    """
    groups = {}
    for workload, label in labels.items():
        groups.setdefault(label, []).append(workload)
    return(dict((label, sorted(w)) for label, w in sorted(groups.items())))


@dataclass
class LabeledDataset:
    """
    Workloads described by their features, labeled by their most
    efficient solution

    Attributes
    ----------
    - items: list of (FeatureVector, label)
    """
    items: list = field(default_factory=list)

    def __len__(self):
        return(len(self.items))

    @property
    def labels(self):
        return([label for _, label in self.items])

    def feature_ids(self):
        "Sorted ids of the features present in at least one item"
        return(sort_features(set(k for v, _ in self.items
                                 for k in v.values)))

    def without(self, index):
        "Copy of the dataset without the item `index`"
        return(LabeledDataset(self.items[:index] + self.items[index + 1:]))

    def to_dict(self):
        return({'items': [{'features': v.to_dict(), 'label': label}
                          for v, label in self.items]})

    @classmethod
    def from_dict(cls, d):
        try:
            return(cls([(FeatureVector.from_dict(item['features']),
                         str(item['label'])) for item in d['items']]))
        except (KeyError, TypeError) as err:
            raise ContractError('Malformed dataset: %s' % err)


def build_dataset(matrix, features, theta=TRUST_THRESHOLD):
    """
    Combine labeled reactions and feature vectors

    Parameters
    ----------
    matrix: a ReactionMatrix

    features: dict of workload id -> FeatureVector
        Workloads without features are left out (with a warning)

    theta: float, optional

    Returns
    -------
    A LabeledDataset, in the order of the matrix rows
    """
    items = []
    for workload, label in label_workloads(matrix, theta).items():
        if workload not in features:
            logger.warning('Workload %s has no features: left out',
                           workload)
            continue
        items.append((features[workload], label))
    if len(items) == 0:
        raise ContractError('No workload of the matrix has features')
    return(LabeledDataset(items))
