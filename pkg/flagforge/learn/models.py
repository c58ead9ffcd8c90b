"""
This file is part of flagforge.

It defines the predictors of the most efficient solution of a workload
from its features: a nearest-neighbor classifier (on z-scored features)
and a decision tree (gini splits at midpoint thresholds).

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import logging
from dataclasses import dataclass
import numpy as np
from scipy.spatial.distance import cdist
from ..errors import ContractError, format_choices
from ..repository.utilities import read_json, write_json_atomic
from .features import feature_index, sort_features

logger = logging.getLogger(__name__)

MODEL_KINDS = ('nearest_neighbor', 'decision_tree')
# Minimal gini gain of a split
MIN_GAIN = 1.e-12


@dataclass(frozen=True)
class ModelSpec:
    """
    What model to train

    Attributes
    ----------
    - kind: 'nearest_neighbor' or 'decision_tree'
    - feature_set: tuple of feature ids
    - max_depth: int >= 1, or None (unlimited); decision trees only
    - seed: int (the models are deterministic; kept for new model kinds)
    """
    kind: str
    feature_set: tuple
    max_depth: int = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ContractError(
                "Unknown model kind '%s'.\nThe available kinds are:%s"
                % (self.kind, format_choices(MODEL_KINDS)))
        if len(self.feature_set) == 0:
            raise ContractError('A model needs at least one feature')
        for feature in self.feature_set:
            feature_index(feature)
        if len(set(self.feature_set)) != len(self.feature_set):
            raise ContractError('Duplicate features in %r'
                                % (self.feature_set,))
        if self.max_depth is not None and self.max_depth < 1:
            raise ContractError('max_depth should be >= 1 (or unlimited)')

    def with_features(self, feature_set):
        return(ModelSpec(self.kind, tuple(sort_features(feature_set)),
                         self.max_depth, self.seed))

    def with_depth(self, max_depth):
        return(ModelSpec(self.kind, self.feature_set, max_depth, self.seed))

    def to_dict(self):
        return({'kind': self.kind, 'feature_set': list(self.feature_set),
                'max_depth': self.max_depth, 'seed': self.seed})

    @classmethod
    def from_dict(cls, d):
        try:
            return(cls(d['kind'], tuple(d['feature_set']),
                       d.get('max_depth'), int(d.get('seed', 0))))
        except (KeyError, TypeError) as err:
            raise ContractError('Malformed model spec: %s' % err)


def feature_matrix(vectors, feature_set, context='training'):
    """
    Stack the values of `feature_set` of FeatureVector objects

    Missing features are taken as 0 (with a warning).

    Returns
    -------
    A 2darray of shape (len(vectors), len(feature_set))
    """
    X = np.zeros((len(vectors), len(feature_set)))
    missing = set()
    for i, vector in enumerate(vectors):
        for j, feature in enumerate(feature_set):
            value = vector.values.get(feature)
            if value is None:
                missing.add(feature)
            else:
                X[i, j] = value
    if missing:
        logger.warning('Missing %s features taken as 0: %s', context,
                       ', '.join(sort_features(missing)))
    return(X)


def majority(labels):
    "Most frequent label (lowest label on ties)"
    values, counts = np.unique(np.array(labels, dtype=str),
                               return_counts=True)
    return(str(values[int(np.argmax(counts))]))


class NearestNeighborModel(object):
    """
    1-nearest-neighbor classifier with Euclidean distance on features
    z-scored with the training mean and standard deviation
    """

    def __init__(self, spec, mean, scale, points, labels):
        self.spec = spec
        self.mean = np.asarray(mean, dtype=float)
        self.scale = np.asarray(scale, dtype=float)
        self.points = np.asarray(points, dtype=float).reshape(
            len(labels), len(spec.feature_set))
        self.labels = list(labels)

    @classmethod
    def fit(cls, spec, dataset):
        X = feature_matrix([v for v, _ in dataset.items], spec.feature_set)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        # Constant features do not contribute to the distance
        scale[scale == 0] = 1.
        return(cls(spec, mean, scale, (X - mean) / scale, dataset.labels))

    def predict_many(self, vectors):
        X = feature_matrix(vectors, self.spec.feature_set, 'prediction')
        distances = cdist((X - self.mean) / self.scale, self.points)
        # argmin returns the first training item among equidistant ones
        return([self.labels[i] for i in np.argmin(distances, axis=1)])

    def to_dict(self):
        return({'spec': self.spec.to_dict(), 'mean': self.mean.tolist(),
                'scale': self.scale.tolist(),
                'points': self.points.tolist(), 'labels': self.labels})

    @classmethod
    def from_dict(cls, d):
        return(cls(ModelSpec.from_dict(d['spec']), d['mean'], d['scale'],
                   d['points'], d['labels']))


def _gini(counts):
    "Gini impurity of each row of class counts"
    totals = counts.sum(axis=-1, keepdims=True)
    p = counts / np.maximum(totals, 1)
    return(1. - (p ** 2).sum(axis=-1))


def best_split(X, y, n_classes):
    """
    Find the split of highest gini gain

    Parameters
    ----------
    X: 2darray (items x features)

    y: 1darray of class indices

    n_classes: int

    Returns
    -------
    (feature column, threshold, gain), or None when no split improves
    the impurity. Ties go to the first feature, then the lowest threshold.
    """
    n = len(y)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1
    total = onehot.sum(axis=0)
    parent = _gini(total)
    best = None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind='stable')
        x = X[order, j]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        valid = np.nonzero(x[:-1] < x[1:])[0]
        if len(valid) == 0:
            continue
        left = left[valid]
        right = total - left
        n_left = (valid + 1).astype(float)
        impurity = (n_left * _gini(left) +
                    (n - n_left) * _gini(right)) / n
        gains = parent - impurity
        k = int(np.argmax(gains))
        if gains[k] > MIN_GAIN and (best is None or gains[k] > best[2]):
            i = valid[k]
            best = (j, 0.5 * (x[i] + x[i + 1]), float(gains[k]))
    return(best)


class DecisionTreeModel(object):
    """
    Classification tree grown greedily by gini gain

    Nodes are dicts: leaves {'label'}; inner nodes {'feature',
    'threshold', 'label', 'left', 'right'}, where items with
    feature <= threshold go left.
    """

    def __init__(self, spec, root):
        self.spec = spec
        self.root = root

    @classmethod
    def fit(cls, spec, dataset):
        X = feature_matrix([v for v, _ in dataset.items], spec.feature_set)
        classes = sorted(set(dataset.labels))
        y = np.array([classes.index(label) for label in dataset.labels])
        return(cls(spec, cls._grow(spec, X, y, classes, 0)))

    @classmethod
    def _grow(cls, spec, X, y, classes, depth):
        node = {'label': majority([classes[i] for i in y])}
        if len(set(y)) == 1 or (spec.max_depth is not None
                                and depth >= spec.max_depth):
            return(node)
        split = best_split(X, y, len(classes))
        if split is None:
            return(node)
        j, threshold, _ = split
        mask = X[:, j] <= threshold
        node.update({
            'feature': spec.feature_set[j], 'threshold': float(threshold),
            'left': cls._grow(spec, X[mask], y[mask], classes, depth + 1),
            'right': cls._grow(spec, X[~mask], y[~mask], classes,
                               depth + 1)})
        return(node)

    def predict_many(self, vectors):
        labels = []
        for vector in vectors:
            node = self.root
            while 'feature' in node:
                value = vector.values.get(node['feature'], 0.)
                node = node['left'] if value <= node['threshold'] \
                    else node['right']
            labels.append(node['label'])
        return(labels)

    def depth(self):
        "Length of the longest root-to-leaf path"
        def depth_of(node):
            if 'feature' not in node:
                return(0)
            return(1 + max(depth_of(node['left']), depth_of(node['right'])))
        return(depth_of(self.root))

    def rules(self):
        """
        Human-readable listing of the tree

        Returns
        -------
        A string, one line per test or leaf
        """
        lines = []

        def visit(node, indent):
            pad = '    ' * indent
            if 'feature' not in node:
                lines.append('%spredict %s' % (pad, node['label']))
                return
            lines.append('%sif %s <= %g:' % (pad, node['feature'],
                                             node['threshold']))
            visit(node['left'], indent + 1)
            lines.append('%selse:  # %s > %g' % (pad, node['feature'],
                                                 node['threshold']))
            visit(node['right'], indent + 1)
        visit(self.root, 0)
        return('\n'.join(lines) + '\n')

    def to_dict(self):
        return({'spec': self.spec.to_dict(), 'root': self.root})

    @classmethod
    def from_dict(cls, d):
        return(cls(ModelSpec.from_dict(d['spec']), d['root']))


MODEL_CLASSES = {'nearest_neighbor': NearestNeighborModel,
                 'decision_tree': DecisionTreeModel}


def train(spec, dataset):
    """
    Train a model

    Parameters
    ----------
    spec: a ModelSpec

    dataset: a LabeledDataset

    Returns
    -------
    A NearestNeighborModel or DecisionTreeModel
    """
    if len(dataset) == 0:
        raise ContractError('Cannot train on an empty dataset')
    return(MODEL_CLASSES[spec.kind].fit(spec, dataset))


def predict(model, vector):
    "Predict the label of a FeatureVector"
    return(model.predict_many([vector])[0])


def save_model(model, path):
    write_json_atomic(path, model.to_dict())


def load_model(path):
    document = read_json(path)
    try:
        kind = document['spec']['kind']
        return(MODEL_CLASSES[kind].from_dict(document))
    except (KeyError, TypeError) as err:
        raise ContractError('Malformed model file %s: %s' % (path, err))
