"""Run configuration: INI files with one section per module, plus dotted overrides."""
import configparser
import dataclasses
from dataclasses import dataclass, field

from .rach import EnergyModel
from .traffic import TrafficProfile

SIMULATION_SCENARIOS = ("baseline", "fixed", "acb-fix", "bo-fix", "dq-fix", "genie", "mle",
                        "mom")
SCENARIOS = SIMULATION_SCENARIOS + (
    "acb-ddpg", "acb-dqn", "acb-pg", "acb-ac", "bo-dqn", "dq-dqn",
    "hybrid-conventional", "hybrid-decoupled", "decoupled-genie")
LEARNING_SCENARIOS = SCENARIOS[len(SIMULATION_SCENARIOS):]


class ConfigError(ValueError):
    pass


@dataclass
class TrafficSection:
    alpha: float = 3.0
    beta: float = 4.0
    frames: int = 20
    devices: int = 400


@dataclass
class RachSection:
    preambles: int = 54
    max_attempts: int = 10
    frame_ms: float = 640.0
    frame_cap: int = 0              # 0 means four traffic periods
    t_sy: float = 0.65
    t_msg1: float = 0.084
    t_msg2: float = 0.345
    t_msg3: float = 0.08
    t_msg4: float = 0.345
    p_sy: float = 0.09
    p_msg1: float = 0.545
    p_msg2: float = 0.09
    p_msg3: float = 0.545
    p_msg4: float = 0.09


@dataclass
class SchemesSection:
    # fixed-factor reference settings and the frozen values of inactive schemes
    fixed_acb: float = 0.5
    fixed_bo: int = 2
    fixed_depth: int = 2
    fixed_degree: int = 2
    idle_acb: float = 1.0
    idle_bo: int = 0
    idle_depth: int = 1
    idle_degree: int = 2


@dataclass
class EstimatorsSection:
    max_backlog: int = 600
    cache_dir: str = ""


@dataclass
class NeuralSection:
    gru_layers: int = 2
    gru_units: int = 128
    dense_units: int = 128
    optimizer: str = "adam"
    learning_rate: float = 1e-4


@dataclass
class AgentsSection:
    window: int = 20
    batch_size: int = 32
    memory_size: int = 10000
    gamma_acb: float = 0.1
    gamma_bo_dq: float = 0.9
    target_rate: float = 0.2
    epsilon_start: float = 1.0
    epsilon_floor: float = 0.01
    exploration_fraction: float = 0.2   # share of training frames over which epsilon decays
    noise_start: float = 0.2
    noise_end: float = 0.02
    warmup: int = 500
    critic_lr_scale: float = 1.0


@dataclass
class PredictorSection:
    batch_size: int = 32
    buffer_size: int = 10000
    label_source: str = "mle"
    raw_receptions: bool = False


@dataclass
class OrchestratorSection:
    x_s: float = 1.0
    x_d: float = 0.0
    x_e: float = 0.0
    priority: float = -1.0          # >= 0 selects weights 1 : mu : 1 - mu
    c_d: float = 10.0
    c_e: float = 0.5
    idle_reward: float = 0.5


@dataclass
class CliSection:
    scenario: str = "genie"
    seed: int = 0
    trails: int = 1
    episodes: int = 100
    train_episodes: int = 400
    eval_episodes: int = 20
    eval_every: int = 100
    out: str = "runs"
    sweep_priority: str = "0,0.25,0.5,0.75,1"
    sweep_devices: str = ""
    sweep_schemes: str = "hybrid-conventional"


SECTIONS = {
    "traffic": TrafficSection,
    "rach_core": RachSection,
    "schemes": SchemesSection,
    "estimators": EstimatorsSection,
    "neural": NeuralSection,
    "agents": AgentsSection,
    "predictor": PredictorSection,
    "orchestrator": OrchestratorSection,
    "cli": CliSection,
}


@dataclass
class RunConfig:
    traffic: TrafficSection = field(default_factory=TrafficSection)
    rach_core: RachSection = field(default_factory=RachSection)
    schemes: SchemesSection = field(default_factory=SchemesSection)
    estimators: EstimatorsSection = field(default_factory=EstimatorsSection)
    neural: NeuralSection = field(default_factory=NeuralSection)
    agents: AgentsSection = field(default_factory=AgentsSection)
    predictor: PredictorSection = field(default_factory=PredictorSection)
    orchestrator: OrchestratorSection = field(default_factory=OrchestratorSection)
    cli: CliSection = field(default_factory=CliSection)

    def set(self, key, value):
        """Assign ``section.name`` from its text form, converting to the field type."""
        try:
            section, name = key.split(".", 1)
        except ValueError:
            raise ConfigError(f"override key {key!r} must look like section.name") from None
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r}")
        sec = getattr(self, section)
        types = {f.name: f.type for f in dataclasses.fields(sec)}
        if name not in types:
            raise ConfigError(f"unknown key {name!r} in section [{section}]")
        setattr(sec, name, _convert(key, value, types[name]))

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_ini(self):
        parser = configparser.ConfigParser()
        for name, values in self.to_dict().items():
            parser[name] = {k: str(v) for k, v in values.items()}
        return parser

    def validate(self):
        c = self.cli
        if c.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {c.scenario!r}; choose from {', '.join(SCENARIOS)}")
        for key in ("trails", "episodes", "eval_episodes"):
            if getattr(c, key) < 1:
                raise ConfigError(f"cli.{key} must be positive")
        if c.train_episodes < 0 or c.eval_every < 0:
            raise ConfigError("cli.train_episodes and cli.eval_every must be non-negative")
        if not 0 <= self.predictor.batch_size <= self.predictor.buffer_size:
            raise ConfigError("predictor batch must fit in its buffer")
        if self.predictor.label_source not in ("mle", "mom", "genie"):
            raise ConfigError("predictor.label_source must be mle, mom or genie")
        if self.neural.optimizer not in ("adam", "sgd"):
            raise ConfigError("neural.optimizer must be adam or sgd")
        if self.neural.gru_layers < 1:
            raise ConfigError("neural.gru_layers must be at least 1")
        a = self.agents
        if not (0 <= a.gamma_acb < 1 and 0 <= a.gamma_bo_dq < 1):
            raise ConfigError("discount rates must lie in [0, 1)")
        if not 0.01 <= a.epsilon_floor <= a.epsilon_start <= 1:
            raise ConfigError("need 0.01 <= epsilon_floor <= epsilon_start <= 1")
        if not 0 < a.target_rate <= 1:
            raise ConfigError("agents.target_rate must lie in (0, 1]")
        try:
            self.profile()
            self.energy()
            self.weights()
            self.fixed_action()
            self.idle_action()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    # ------------------------------------------------------------ builders
    def profile(self):
        t = self.traffic
        return TrafficProfile(alpha=t.alpha, beta=t.beta, total_frames=t.frames,
                              device_count=t.devices)

    def energy(self):
        r = self.rach_core
        return EnergyModel(**{f.name: getattr(r, f.name) for f in dataclasses.fields(EnergyModel)})

    def weights(self):
        from .orchestrator import RewardWeights
        o = self.orchestrator
        extra = dict(c_d=o.c_d, c_e=o.c_e, idle_value=o.idle_reward)
        if o.priority >= 0:
            return RewardWeights.from_priority(o.priority, x_s=o.x_s, **extra)
        return RewardWeights(x_s=o.x_s, x_d=o.x_d, x_e=o.x_e, **extra)

    def fixed_action(self):
        from .rach import ActionSet
        s = self.schemes
        return ActionSet(s.fixed_acb, s.fixed_bo, s.fixed_depth, s.fixed_degree)

    def idle_action(self):
        from .rach import ActionSet
        s = self.schemes
        return ActionSet(s.idle_acb, s.idle_bo, s.idle_depth, s.idle_degree)


def _convert(key, text, typ):
    if not isinstance(text, str):
        return text
    try:
        if typ in (bool, "bool"):
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ in (int, "int"):
            return int(text)
        if typ in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(typ, '__name__', typ)}") \
            from None
    return text


def load_config(path=None, overrides=()):
    """Defaults, then the INI file at ``path``, then ``key=value`` overrides."""
    cfg = RunConfig()
    if path:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            for name, value in parser[section].items():
                cfg.set(f"{section}.{name}", value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg.validate()
