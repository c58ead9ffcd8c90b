"""
This file is part of flagforge.

It defines the crowd-tuning aggregation server, which receives the
reports of the participants, merges them into the scenario tables and
serves the top solutions of each scenario.

Endpoints (JSON bodies):
- POST /v1/report
- GET /v1/top?scenario=&compiler=&platform=&n=
- GET /v1/solution/<uid>

Copyright 2017-2018, flagforge contributors
License: 3-Clause-BSD
"""
import json
import logging
import threading
from http.server import ThreadingHTTPServer, BaseHTTPRequestHandler
from urllib.parse import urlsplit, parse_qs
from ..errors import FlagForgeException, ContractError
from ..autotuning.stats import TRUST_THRESHOLD
from .table import TableStore, ScenarioKey, SubmitReport, server_top

logger = logging.getLogger(__name__)

DEFAULT_PORT = 8473
DEFAULT_TOP = 10
MAX_BODY = 1 << 20


class CrowdService(object):
    """
    The logic of the server, independent of HTTP

    Merges of one scenario key are serialized (one writer per key);
    reads load the last saved table.
    """

    def __init__(self, store_dir, theta=TRUST_THRESHOLD, auto_create=True,
                 prune_on_merge=False):
        """
        Parameters
        ----------
        store_dir: string
            Directory of the scenario tables

        theta: float, optional
            Classification margin

        auto_create: bool, optional
            Create the table of an unknown scenario key on its first report

        prune_on_merge: bool, optional
            Apply the online classification (with pruning) after each merge
        """
        self.tables = TableStore(store_dir)
        self.theta = theta
        self.auto_create = auto_create
        self.prune_on_merge = prune_on_merge
        self._locks = {}
        self._locks_guard = threading.Lock()

    def _key_lock(self, key):
        with self._locks_guard:
            return(self._locks.setdefault(key, threading.Lock()))

    def submit(self, document):
        """
        Merge a report (decoded JSON document)

        Returns
        -------
        dict with the uids of the table's solutions
        """
        report = SubmitReport.from_dict(document)
        with self._key_lock(report.key):
            table = self.tables.merge(report, self.theta, self.auto_create,
                                      self.prune_on_merge)
        logger.info('Merged report of %s on %s (%d solutions)',
                    report.participant or 'anonymous', report.workload,
                    len(table.solutions))
        return({'status': 'merged',
                'solutions': [s.solution_uid for s in table.solutions]})

    def top(self, key, n=DEFAULT_TOP):
        return({'key': key.to_dict(),
                'solutions': [s.to_dict() for s in
                              server_top(self.tables, key, n)]})

    def solution(self, uid):
        found = self.tables.find_solution(uid)
        if found is None:
            return(None)
        key, record = found
        return({'key': key.to_dict(), 'solution': record.to_dict()})


class CrowdRequestHandler(BaseHTTPRequestHandler):
    "HTTP front-end of a CrowdService (set as `service` on the server)"

    server_version = 'flagforge-crowd/1'

    def log_message(self, format, *args):
        logger.debug('%s - %s', self.address_string(), format % args)

    def _send(self, status, document):
        body = json.dumps(document, sort_keys=True).encode('utf-8')
        self.send_response(status)
        self.send_header('Content-Type', 'application/json')
        self.send_header('Content-Length', str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status, message):
        self._send(status, {'error': message})

    def do_GET(self):
        service = self.server.service
        url = urlsplit(self.path)
        try:
            if url.path == '/v1/top':
                query = parse_qs(url.query)
                try:
                    key = ScenarioKey(query['scenario'][0],
                                      query['compiler'][0],
                                      query['platform'][0])
                    n = int(query.get('n', [DEFAULT_TOP])[0])
                except (KeyError, ValueError):
                    return(self._error(400, 'Expected the parameters '
                                       'scenario, compiler, platform, n'))
                return(self._send(200, service.top(key, n)))
            if url.path.startswith('/v1/solution/'):
                uid = url.path[len('/v1/solution/'):]
                document = service.solution(uid)
                if document is None:
                    return(self._error(404, 'Unknown solution %s' % uid))
                return(self._send(200, document))
            self._error(404, 'Unknown endpoint %s' % url.path)
        except FlagForgeException as err:
            self._error(400, str(err))

    def do_POST(self):
        service = self.server.service
        if urlsplit(self.path).path != '/v1/report':
            return(self._error(404, 'Unknown endpoint %s' % self.path))
        length = int(self.headers.get('Content-Length', 0))
        if length <= 0 or length > MAX_BODY:
            return(self._error(400, 'Invalid report size'))
        try:
            document = json.loads(self.rfile.read(length).decode('utf-8'))
        except (ValueError, UnicodeDecodeError):
            return(self._error(400, 'The report is not valid JSON'))
        try:
            self._send(200, service.submit(document))
        except ContractError as err:
            self._error(400, str(err))


def make_server(service, host='127.0.0.1', port=DEFAULT_PORT):
    """
    Create (without starting) the HTTP server of a CrowdService

    Use port 0 to pick a free port (see `server.server_address`).
    """
    server = ThreadingHTTPServer((host, port), CrowdRequestHandler)
    server.daemon_threads = True
    server.service = service
    return(server)


def serve(store_dir, host='127.0.0.1', port=DEFAULT_PORT,
          theta=TRUST_THRESHOLD, auto_create=True, prune_on_merge=False):
    "Run the aggregation server until interrupted"
    service = CrowdService(store_dir, theta, auto_create, prune_on_merge)
    server = make_server(service, host, port)
    logger.info('Serving crowd tables of %s on http://%s:%d', store_dir,
                *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        logger.info('Interrupted')
    finally:
        server.server_close()
