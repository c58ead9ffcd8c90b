"""
This file is part of flagforge.

It defines a set of helper functions which are used to read and write
the two-level (kind/id) repository on disk: atomic JSON writes, unique
identifiers, advisory file locks and directory scanning.

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import os
import re
import json
import fcntl
import hashlib
import logging
import tempfile
import numpy as np
from ..errors import ContractError

logger = logging.getLogger(__name__)

UID_PATTERN = re.compile('^[0-9a-f]{16}$')


def read_json(path):
    """
    Read a JSON document from `path`

    Parameters
    ----------
    path: string
        The path to a JSON file

    Returns
    -------
    The decoded document
    """
    try:
        with open(path) as f:
            return(json.load(f))
    except ValueError as err:
        raise ContractError('File %s is not valid JSON:\n%s' % (path, err))


def write_json_atomic(path, document):
    """
    Write `document` to `path` as JSON, so that readers only ever see
    either the previous version or the complete new one.

    The document is first written to a temporary file in the same
    directory, flushed to disk, and then renamed over `path`.

    Parameters
    ----------
    path: string
        The destination file

    document: a JSON-serializable object
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-',
                                    suffix='.json')
    try:
        with os.fdopen(fd, 'w') as f:
            json.dump(document, f, indent=2, sort_keys=True)
            f.write('\n')
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise


def md5_hex(data):
    """
    Return the hexadecimal MD5 digest of `data` (bytes or string)
    """
    if isinstance(data, str):
        data = data.encode('utf-8')
    return(hashlib.md5(data).hexdigest())


def file_md5(path):
    "Return the hexadecimal MD5 digest of the file at `path`"
    digest = hashlib.md5()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return(digest.hexdigest())


class UidGenerator(object):
    """
    Generator of 16-hex-character identifiers (e.g. 'b0f31c56475aa510')

    The identifiers come from a 64-bit random generator, which can be
    seeded so that tests get reproducible identifiers. A counter is mixed
    into each draw so that a seeded generator never repeats itself.
    """

    def __init__(self, seed=None):
        """
        Parameters
        ----------
        seed: int, optional
            Seed of the random generator. When None, fresh entropy is used.
        """
        self.rng = np.random.default_rng(seed)
        self.counter = 0

    def new_uid(self):
        "Return a new 16-hex-character identifier"
        value = int(self.rng.integers(0, 2**64, dtype=np.uint64))
        value = (value + self.counter) % 2**64
        self.counter += 1
        return('%016x' % value)


class FileLock(object):
    """
    Advisory inter-process lock based on `fcntl.flock`

    Used as a context manager:
        with FileLock(path):
            ...
    """

    def __init__(self, path, shared=False):
        """
        Parameters
        ----------
        path: string
            The path to the lock file (created if needed)

        shared: bool, optional
            Whether to take a shared (reader) lock instead of an
            exclusive (writer) lock
        """
        self.path = path
        self.shared = shared
        self._handle = None

    def __enter__(self):
        os.makedirs(os.path.dirname(os.path.abspath(self.path)),
                    exist_ok=True)
        self._handle = open(self.path, 'a+')
        mode = fcntl.LOCK_SH if self.shared else fcntl.LOCK_EX
        fcntl.flock(self._handle.fileno(), mode)
        return(self)

    def __exit__(self, exc_type, exc_value, traceback):
        fcntl.flock(self._handle.fileno(), fcntl.LOCK_UN)
        self._handle.close()
        self._handle = None
        return(False)


def measurement_lock(repo_root):
    """
    Return the machine-wide lock held around timed measurements

    Parameters
    ----------
    repo_root: string
        The root of the repository
    """
    return(FileLock(os.path.join(repo_root, '.measurement.lock')))


def list_entries(kind_dir):
    """
    Return the sorted list of entry identifiers found in a kind directory
    (i.e. the sub-directories that contain a meta.json file)

    Parameter
    ---------
    kind_dir: string
        The path to a directory of the form repo_root/<kind>

    Returns
    -------
    A list of strings
    """
    if not os.path.isdir(kind_dir):
        return([])
    entries = []
    for name in os.listdir(kind_dir):
        if name.startswith('.'):
            continue
        if os.path.isfile(os.path.join(kind_dir, name, 'meta.json')):
            entries.append(name)
        else:
            logger.debug('Skipping %s: no meta.json', name)
    entries.sort()
    return(entries)
