# Service kinds
GATEWAY = 'GATEWAY'
BROKER = 'BROKER'
RECOGNIZER = 'RECOGNIZER'
FUSION = 'FUSION'
INTERPRETER = 'INTERPRETER'
FISSION = 'FISSION'
KNOWLEDGE = 'KNOWLEDGE'
SERVICE_KINDS = (GATEWAY, BROKER, RECOGNIZER, FUSION, INTERPRETER, FISSION, KNOWLEDGE)

# Cloud layers
SAAS = 'SAAS'
PAAS = 'PAAS'
IAAS = 'IAAS'
LAYERS = (SAAS, PAAS, IAAS)

LAYER_OF_KIND = {
    GATEWAY: SAAS,
    BROKER: PAAS,
    RECOGNIZER: PAAS,
    FUSION: PAAS,
    INTERPRETER: PAAS,
    FISSION: PAAS,
    KNOWLEDGE: IAAS,
}

# The registry answers on a fixed address rather than through a descriptor
REGISTRY_ADDRESS = 'registry'

# Ambiguity flags
MODAL_PROPAGATED = 'MODAL_PROPAGATED'
MULTIMODAL_CONFLICT = 'MULTIMODAL_CONFLICT'

# Turn phases, in level order
COLLECTING = 'COLLECTING'
RECOGNIZING = 'RECOGNIZING'
FUSING = 'FUSING'
INTERPRETING = 'INTERPRETING'
RESPONDING = 'RESPONDING'
DONE = 'DONE'
FAILED = 'FAILED'
PHASE_ORDER = (COLLECTING, RECOGNIZING, FUSING, INTERPRETING, RESPONDING, DONE)

# Scale events
GROW = 'GROW'
SHRINK = 'SHRINK'
HOLD = 'HOLD'

BOOST_PREDICATE = 'boost_rule'
BOOST_MULTIPLIER = 1.25

# relative tolerance for score ties and threshold bands
SCORE_TOLERANCE = 1e-9

MAX_BODY_BYTES = 16 * 1024 * 1024
