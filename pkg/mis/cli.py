import argparse
import logging
import sys
from importlib import resources

from mis.harness.mesh import Mesh
from mis.harness.simulation import TRANSPORTS, parse_schedule, run_load, run_scenario
from mis.harness.transport import MeshServer, ServiceClient, TcpTransport
from mis.structures.data import ServiceDescriptor
from mis.utils import REGISTRY_ADDRESS
from mis.utils.config import MeshConfig
from mis.utils.errors import (ConfigError, GrammarError, KnowledgeError, MISError, RecognitionError,
                              ScenarioError)
from mis.utils.readers import (ConfigReader, GrammarReader, LexiconReader, ProfileReader, RulesReader,
                               ScenarioReader)
from mis.utils.writers import MeshConsoleWriter, ReportWriter

logger = logging.getLogger('mis')

EXIT_OK = 0
EXIT_FAILED_TURN = 1
EXIT_CONFIG = 2

DEFAULT_PORT = 7460

CONFIGURATION_ERRORS = (ConfigError, ScenarioError, GrammarError, RecognitionError, KnowledgeError, OSError)


def packaged(name):
    """Path of one of the documents shipped in mis.data."""
    return str(resources.files('mis.data').joinpath(name))


def add_document_arguments(parser):
    parser.add_argument('--grammar', help='grammar document (default: the packaged put-that-there grammar)',
                        default=None)
    parser.add_argument('--lexicon', help='lexicon document', default=None)
    parser.add_argument('--profile', help='user profile document, one profile or a list of them', default=None)
    parser.add_argument('--rules', help='Horn rules document', default=None)
    parser.add_argument('--config', help='JSON document of mesh settings')
    parser.add_argument('--fusion-delta', type=int, dest='fusion_delta', help='fusion proximity window in ms')
    parser.add_argument('--fission-epsilon', type=float, dest='fission_epsilon',
                        help='suitability band for redundant output acts')
    parser.add_argument('--tau-end', type=int, dest='tau_end', help='silence in ms that closes a turn')


def build_parser():
    parser = argparse.ArgumentParser(prog='mis', description='A cloud-style mesh of multimodal interaction services')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='log every envelope')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='log warnings and errors only')

    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='replay a scenario through an in-process mesh')
    run.add_argument('scenario', nargs='?', help='scenario file, one event per line (default: put-that-there)')
    add_document_arguments(run)
    run.add_argument('--seed', type=int, default=0)
    run.add_argument('--report', help='write the canonical report here instead of to the standard output')
    run.add_argument('--transport', choices=TRANSPORTS, default='inproc')
    run.add_argument('--no_color', help='print the summary without color', action='store_false', dest='color')

    serve = commands.add_parser('serve', help='serve a mesh over MIS-WP/1')
    add_document_arguments(serve)
    serve.add_argument('--host', default='127.0.0.1')
    serve.add_argument('--port', type=int, default=DEFAULT_PORT)

    registry = commands.add_parser('registry', help='inspect the registry of a serving mesh')
    registry_commands = registry.add_subparsers(dest='registry_command', required=True)
    ls = registry_commands.add_parser('ls', help='list the live descriptors')
    ls.add_argument('--host', default='127.0.0.1')
    ls.add_argument('--port', type=int, default=DEFAULT_PORT)
    ls.add_argument('--now', type=int, default=0, help='virtual time of the lookup')

    load = commands.add_parser('load', help='print the scaling timeline of a synthetic load')
    load.add_argument('schedule', help='rate x ticks segments, e.g. 0x5,10x20,0x60')
    load.add_argument('--config', help='JSON document of mesh settings')
    load.add_argument('--modality', default='speech')
    load.add_argument('--seed', type=int, default=0)
    load.add_argument('--no_color', help='print without color', action='store_false', dest='color')
    return parser


def read_config(args):
    config = ConfigReader(args.config).read() if args.config else MeshConfig()
    return config.with_overrides(fusion_delta_ms=getattr(args, 'fusion_delta', None),
                                 fission_epsilon=getattr(args, 'fission_epsilon', None),
                                 tau_end_ms=getattr(args, 'tau_end', None))


def read_documents(args):
    grammar = GrammarReader(args.grammar or packaged('grammar.json')).read()
    lexicon = LexiconReader(args.lexicon or packaged('lexicon.json')).read()
    profiles = ProfileReader(args.profile or packaged('profile.json')).read()
    rules = RulesReader(args.rules or packaged('rules.json')).read()
    return grammar, lexicon, profiles, rules


def run(args):
    config = read_config(args)
    scenario = ScenarioReader(args.scenario or packaged('put_that_there.jsonl')).read()
    grammar, lexicon, profiles, rules = read_documents(args)

    report = run_scenario(scenario, grammar, lexicon, profiles, rules, config, seed=args.seed,
                          transport=args.transport)
    if args.report:
        ReportWriter(args.report).write(report)
        MeshConsoleWriter(args.color).write_summary(report)
    else:
        sys.stdout.buffer.write(report.to_bytes())
        sys.stdout.flush()
    return EXIT_FAILED_TURN if report.failures() else EXIT_OK


def serve(args):
    config = read_config(args)
    grammar, lexicon, profiles, rules = read_documents(args)
    mesh = Mesh(config, grammar, lexicon, profiles, rules)
    mesh.boot(0, endpoint_base='tcp://{}:{}/'.format(args.host, args.port)).keep_time()
    try:
        MeshServer(mesh.dispatcher, args.host, args.port).serve_forever()
    except KeyboardInterrupt:
        logger.info('server stopped')
    return EXIT_OK


def registry_ls(args):
    client = ServiceClient(TcpTransport(args.host, args.port), 'mis-cli')
    try:
        body = client.call(REGISTRY_ADDRESS, 'find', {'query': {}, 'now': args.now})
    finally:
        client.close()
    MeshConsoleWriter(color=False).write_registry([ServiceDescriptor.from_document(d) for d in body['descriptors']])
    return EXIT_OK


def load(args):
    config = ConfigReader(args.config).read() if args.config else MeshConfig()
    timeline = run_load(parse_schedule(args.schedule), config, modality=args.modality, seed=args.seed)
    MeshConsoleWriter(args.color).write_timeline(timeline)
    return EXIT_OK


COMMANDS = {'run': run, 'serve': serve, 'registry': registry_ls, 'load': load}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        return COMMANDS[args.command](args)
    except CONFIGURATION_ERRORS as e:
        logger.error('%s', e)
        return EXIT_CONFIG
    except MISError as e:
        logger.error('mesh error: %s', e)
        return EXIT_FAILED_TURN
