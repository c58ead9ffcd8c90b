"""
This file is part of flagforge.

It defines the evaluation of predictors: accuracy, leave-one-out
cross-validation, autotuning of the depth of decision trees and greedy
reduction of the feature set.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import logging
from dataclasses import dataclass, field
from ..errors import ContractError, format_choices
from .features import sort_features
from .models import train

logger = logging.getLogger(__name__)

REDUCTION_MODES = ('greedy_remove', 'greedy_add')


def accuracy(model, dataset):
    "Fraction of the items of `dataset` whose label `model` predicts"
    if len(dataset) == 0:
        raise ContractError('Cannot measure accuracy on an empty dataset')
    predicted = model.predict_many([v for v, _ in dataset.items])
    correct = sum(p == label for p, label in zip(predicted, dataset.labels))
    return(correct / len(dataset))


def loo_cv(spec, dataset):
    """
    Leave-one-out cross-validation: each item is removed from the
    training set, a model is trained on the others and used to predict
    it; the accuracy is the fraction of correct predictions.

    Parameters
    ----------
    spec: a ModelSpec

    dataset: a LabeledDataset with at least 2 items

    Returns
    -------
    A float in [0, 1]
    """
    n = len(dataset)
    if n < 2:
        raise ContractError('Cross-validation needs at least 2 items, got %d'
                            % n)
    correct = 0
    for i, (vector, label) in enumerate(dataset.items):
        model = train(spec, dataset.without(i))
        if model.predict_many([vector])[0] == label:
            correct += 1
    return(correct / n)


@dataclass
class DepthCurve:
    """
    Accuracy of decision trees as a function of their depth

    Attributes
    ----------
    - best_depth: int or None (unlimited)
    - points: list of (depth, cross-validated accuracy, in-sample accuracy)
    """
    best_depth: int
    points: list = field(default_factory=list)

    def to_dict(self):
        return({'best_depth': self.best_depth,
                'points': [{'depth': d, 'cv_accuracy': cv,
                            'in_sample_accuracy': ins}
                           for d, cv, ins in self.points]})


def _depth_order(depth):
    return(float('inf') if depth is None else depth)


def autotune_depth(spec, dataset, depths):
    """
    Evaluate decision trees of several depths

    Parameters
    ----------
    spec: a ModelSpec of kind 'decision_tree'

    dataset: a LabeledDataset

    depths: list of ints (or None for unlimited)

    Returns
    -------
    A DepthCurve; the best depth is the smallest one reaching the highest
    cross-validated accuracy
    """
    if len(depths) == 0:
        raise ContractError('No depth to evaluate')
    if spec.kind != 'decision_tree':
        raise ContractError('Only decision trees have a depth')
    curve = DepthCurve(None)
    best = None
    for depth in sorted(set(depths), key=_depth_order):
        tuned = spec.with_depth(depth)
        cv = loo_cv(tuned, dataset)
        in_sample = accuracy(train(tuned, dataset), dataset)
        curve.points.append((depth, cv, in_sample))
        logger.debug('depth %s: cv %.3f, in-sample %.3f', depth, cv,
                     in_sample)
        if best is None or cv > best:
            best = cv
            curve.best_depth = depth
    return(curve)


@dataclass
class FeatureReduction:
    """
    Result of a feature-set reduction

    Attributes
    ----------
    - mode: 'greedy_remove' or 'greedy_add'
    - features: sorted list of the selected feature ids
    - accuracy: cross-validated accuracy with these features
    - history: list of (feature id, accuracy) in the order of the steps
    """
    mode: str
    features: list
    accuracy: float
    history: list = field(default_factory=list)

    def to_dict(self):
        return({'mode': self.mode, 'features': list(self.features),
                'accuracy': self.accuracy,
                'history': [{'feature': f, 'accuracy': a}
                            for f, a in self.history]})


def _best_step(spec, dataset, current, candidates, change):
    """
    Evaluate `change(current, f)` for each candidate `f`

    Returns
    -------
    (feature, accuracy) of the highest accuracy; ties go to the lowest
    feature id
    """
    best = None
    for feature in sort_features(candidates):
        score = loo_cv(spec.with_features(change(current, feature)), dataset)
        if best is None or score > best[1]:
            best = (feature, score)
    return(best)


def reduce_features(spec, dataset, mode='greedy_remove'):
    """
    Search for a smaller feature set with the same or a better
    cross-validated accuracy

    - greedy_remove: starting from all the features of `spec`, repeatedly
      drop the feature whose removal gives the highest accuracy, as long
      as the accuracy does not decrease
    - greedy_add: starting from no feature, repeatedly add the feature
      which gives the highest accuracy, as long as it improves

    Returns
    -------
    A FeatureReduction
    """
    if mode not in REDUCTION_MODES:
        raise ContractError(
            "Unknown reduction mode '%s'.\nThe available modes are:%s"
            % (mode, format_choices(REDUCTION_MODES)))
    features = sort_features(spec.feature_set)
    history = []
    if mode == 'greedy_remove':
        current = list(features)
        score = loo_cv(spec.with_features(current), dataset)
        while len(current) > 1:
            feature, new_score = _best_step(
                spec, dataset, current, current,
                lambda c, f: [x for x in c if x != f])
            if new_score < score:
                break
            current.remove(feature)
            score = new_score
            history.append((feature, score))
    else:
        current = []
        score = None
        while len(current) < len(features):
            feature, new_score = _best_step(
                spec, dataset, current,
                [f for f in features if f not in current],
                lambda c, f: c + [f])
            if score is not None and new_score <= score:
                break
            current.append(feature)
            score = new_score
            history.append((feature, score))
    logger.info('%s: %d of %d features kept (accuracy %.3f)', mode,
                len(current), len(features), score)
    return(FeatureReduction(mode, sort_features(current), score, history))
