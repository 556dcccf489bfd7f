"""Per-PoA service prediction: a double deep Q-learning agent and simple baselines.

The agent's state is the window of the last ``m`` per-slot multi-hot arrival
vectors at its PoA. A GRU reads the window and a linear head scores every
service; the action is the set of ``z`` top-scored services and the reward is
how many of them actually show up in the next slot.
"""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import torch
from torch import nn

from .orchestrator import PredictionTable

__all__ = [
    "EpsilonSchedule",
    "Transition",
    "ReplayMemory",
    "QNetwork",
    "PredictorAgent",
    "PredictorBank",
    "PREDICTORS",
    "epsilon_step",
    "reward",
    "double_q_target",
    "frequency_predict",
    "random_subset",
]

AGENT_HEADER = "ascetic-agent v1"
PREDICTORS = ("ddql", "frequency", "oracle", "random")


@dataclass(frozen=True)
class EpsilonSchedule:
    epsilon: float = 1.0
    decrement: float = 5e-4
    floor: float = 0.05

    def __post_init__(self):
        if not (0.0 <= self.decrement <= 1.0 and 0.0 <= self.floor <= 1.0):
            raise ValueError("decrement and floor must lie in [0, 1]")
        if not self.floor <= self.epsilon <= 1.0:
            raise ValueError("need floor <= epsilon <= 1")


def epsilon_step(schedule: EpsilonSchedule) -> EpsilonSchedule:
    """Linear decay towards the floor; rounding residue below 1e-12 snaps to it."""
    if schedule.epsilon > schedule.floor:
        new = schedule.epsilon - schedule.decrement
        if new <= schedule.floor + 1e-12:
            new = schedule.floor
        return replace(schedule, epsilon=new)
    return schedule


def reward(predicted: Iterable[int], actual: Iterable[int]) -> int:
    return len(set(predicted) & set(actual))


def double_q_target(reward_scaled: float, gamma: float, q_online_next: Sequence[float],
                    q_target_next: Sequence[float]) -> float:
    """Online network picks the bootstrap action, target network values it."""
    a_star = int(np.argmax(q_online_next))
    return float(reward_scaled + gamma * q_target_next[a_star])


def top_z(scores: Sequence[float], z: int) -> frozenset[int]:
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return frozenset(int(s) for s in order[:z])


def random_subset(n_services: int, z: int, rng: np.random.Generator) -> frozenset[int]:
    return frozenset(int(s) for s in rng.choice(n_services, size=z, replace=False))


def frequency_predict(history: Iterable[Iterable[int]], z: int, n_services: int) -> frozenset[int]:
    """Top-``z`` services by how many slots they appeared in; ties go to the lower id."""
    if z > n_services:
        raise ValueError("z cannot exceed the number of services")
    counts = np.zeros(n_services)
    for slot in history:
        for s in set(slot):
            counts[s] += 1
    return top_z(counts, z)


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: frozenset[int]
    reward: int
    next_state: np.ndarray


class ReplayMemory:
    def __init__(self, capacity: int, rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.items: deque[Transition] = deque(maxlen=capacity)
        self.rng = rng or np.random.default_rng()

    def __len__(self):
        return len(self.items)

    def push(self, item: Transition):
        self.items.append(item)

    def sample(self, n: int) -> list[Transition]:
        n = min(n, len(self.items))
        idx = self.rng.choice(len(self.items), size=n, replace=False)
        return [self.items[i] for i in idx]


class QNetwork(nn.Module):
    """GRU over the arrival window followed by a linear score per service."""

    def __init__(self, n_services: int, hidden: int = 64):
        super().__init__()
        self.rnn = nn.GRU(n_services, hidden, batch_first=True)
        self.head = nn.Linear(hidden, n_services)

    def forward(self, x):
        _, h = self.rnn(x)
        return self.head(h[-1])


class PredictorAgent:
    """One DDQL agent, owned by one PoA. Not safe for concurrent mutation."""

    def __init__(self, n_services: int, z: int, window: int = 100, hidden: int = 64,
                 gamma: float = 0.9, lr: float = 1e-3, memory_capacity: int = 10_000,
                 batch_size: int = 32, target_sync: int = 200,
                 schedule: EpsilonSchedule | None = None, seed: int = 0):
        if z > n_services:
            raise ValueError("z cannot exceed the number of services")
        if window < 1:
            raise ValueError("window must be >= 1")
        self.n_services = n_services
        self.z = z
        self.window = window
        self.hidden = hidden
        self.gamma = gamma
        self.lr = lr
        self.batch_size = batch_size
        self.target_sync = target_sync
        self.schedule = schedule or EpsilonSchedule()
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.memory = ReplayMemory(memory_capacity, np.random.default_rng([seed, 1]))
        self.history: deque[np.ndarray] = deque(maxlen=window)
        gen = torch.Generator().manual_seed(int(seed))
        self.online = QNetwork(n_services, hidden)
        self.target = QNetwork(n_services, hidden)
        with torch.no_grad():
            for p in self.online.parameters():
                p.uniform_(-0.08, 0.08, generator=gen)
        self.target.load_state_dict(self.online.state_dict())
        self.optimizer = torch.optim.Adam(self.online.parameters(), lr=lr)
        self.train_steps = 0
        self.tau = 0
        self.pending: frozenset[int] | None = None
        self.curve: list[tuple[int, float, float, float]] = []

    # -- state -------------------------------------------------------------
    def state(self) -> np.ndarray:
        """(window, S) array, oldest slot first, zero-padded at the front."""
        out = np.zeros((self.window, self.n_services), dtype=np.float32)
        if self.history:
            out[self.window - len(self.history):] = np.stack(self.history)
        return out

    def observe(self, arrivals: Iterable[int], tau: int) -> np.ndarray:
        if tau < 1:
            raise ValueError("tau must be >= 1")
        v = np.zeros(self.n_services, dtype=np.float32)
        for s in arrivals:
            v[s] = 1.0
        self.history.append(v)
        self.tau = tau
        return self.state()

    def q_values(self, state: np.ndarray | None = None) -> np.ndarray:
        x = torch.from_numpy(self.state() if state is None else np.asarray(state, np.float32))
        with torch.no_grad():
            return self.online(x[None]).numpy()[0]

    def greedy(self) -> frozenset[int]:
        return top_z(self.q_values(), self.z)

    def act(self) -> frozenset[int]:
        """Epsilon-greedy z-set; always random until the window has filled once."""
        if self.z > self.n_services:
            raise ValueError("z cannot exceed the number of services")
        if self.tau < self.window:
            return random_subset(self.n_services, self.z, self.rng)
        if self.rng.random() > self.schedule.epsilon:
            return self.greedy()
        return random_subset(self.n_services, self.z, self.rng)

    # -- learning ----------------------------------------------------------
    def train_step(self, batch: Sequence[Transition], gamma: float | None = None,
                   lr: float | None = None) -> float:
        """One gradient step on the online net; every service in a transition's
        action set is regressed onto the same double-Q target."""
        if not batch:
            raise ValueError("empty batch")
        gamma = self.gamma if gamma is None else gamma
        if lr is not None:
            for g in self.optimizer.param_groups:
                g["lr"] = lr
        s = torch.from_numpy(np.stack([b.state for b in batch]).astype(np.float32))
        s2 = torch.from_numpy(np.stack([b.next_state for b in batch]).astype(np.float32))
        mask = torch.zeros(len(batch), self.n_services)
        for k, b in enumerate(batch):
            mask[k, list(b.action)] = 1.0
        rho = torch.tensor([b.reward / self.z for b in batch], dtype=torch.float32)
        with torch.no_grad():
            a_star = self.online(s2).argmax(dim=1)
            y = rho + gamma * self.target(s2).gather(1, a_star[:, None])[:, 0]
        q = self.online(s)
        loss = (((q - y[:, None]) ** 2) * mask).sum() / mask.sum()
        if not torch.isfinite(loss):
            raise FloatingPointError("non-finite loss: training diverged")
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.train_steps += 1
        if self.train_steps % self.target_sync == 0:
            self.target.load_state_dict(self.online.state_dict())
        return loss.item()

    def step(self, arrivals: Iterable[int], tau: int) -> frozenset[int]:
        """Full per-slot routine: observe, score the last prediction, learn, predict ``tau + 1``."""
        arrivals = frozenset(arrivals)
        prev_state = self.state()
        state = self.observe(arrivals, tau)
        rho = reward(self.pending, arrivals) if self.pending is not None else 0
        loss = float("nan")
        action = self.act()
        if tau >= self.window:
            if self.pending is not None:
                self.memory.push(Transition(prev_state, self.pending, rho, state))
            if len(self.memory):
                loss = self.train_step(self.memory.sample(self.batch_size))
            self.schedule = epsilon_step(self.schedule)
        self.curve.append((tau, self.schedule.epsilon, float(rho), loss))
        self.pending = action
        return action

    # -- persistence -------------------------------------------------------
    def config(self) -> dict:
        return dict(n_services=self.n_services, z=self.z, window=self.window, hidden=self.hidden,
                    gamma=self.gamma, lr=self.lr, memory_capacity=self.memory.capacity,
                    batch_size=self.batch_size, target_sync=self.target_sync, seed=self.seed)

    def to_text(self) -> str:
        def dump(net):
            return {k: v.tolist() for k, v in net.state_dict().items()}
        body = {
            "config": self.config(),
            "schedule": [self.schedule.epsilon, self.schedule.decrement, self.schedule.floor],
            "memory_size": len(self.memory),
            "train_steps": self.train_steps,
            "tau": self.tau,
            "online": dump(self.online),
            "target": dump(self.target),
        }
        return AGENT_HEADER + "\n" + json.dumps(body) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PredictorAgent":
        header, _, rest = text.partition("\n")
        if header.strip() != AGENT_HEADER:
            raise ValueError(f"expected header {AGENT_HEADER!r}")
        body = json.loads(rest)
        agent = cls(**body["config"], schedule=EpsilonSchedule(*body["schedule"]))
        for name in ("online", "target"):
            state = {k: torch.tensor(v) for k, v in body[name].items()}
            getattr(agent, name).load_state_dict(state)
        agent.train_steps = body["train_steps"]
        agent.tau = body["tau"]
        return agent

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "epsilon", "reward", "loss"])
        for row in self.curve:
            w.writerow([row[0], repr(row[1]), repr(row[2]), "" if row[3] != row[3] else repr(row[3])])
        return buf.getvalue()


class PredictorBank:
    """One predictor per PoA producing a :class:`PredictionTable` for the next slot."""

    def __init__(self, kind: str, poa_nodes: Sequence[int], n_services: int, z: int = 3,
                 scenario=None, seed: int = 0, **agent_kwargs):
        if kind not in PREDICTORS:
            raise ValueError(f"unknown predictor {kind!r}")
        if kind == "oracle" and scenario is None:
            raise ValueError("the oracle predictor needs the scenario")
        if z > n_services:
            raise ValueError("z cannot exceed the number of services")
        self.kind = kind
        self.poa_nodes = tuple(poa_nodes)
        self.n_services = n_services
        self.z = z
        self.scenario = scenario
        self.rng = np.random.default_rng(seed)
        self.history = {p: [] for p in self.poa_nodes}
        self.agents = {}
        if kind == "ddql":
            self.agents = {p: PredictorAgent(n_services, z, seed=int(seed) * 1000 + k,
                                             **agent_kwargs)
                           for k, p in enumerate(self.poa_nodes)}

    def update(self, t: int, arrivals: dict[int, Iterable[int]]) -> PredictionTable:
        """Feed the services seen at slot ``t``; return the prediction for ``t + 1``."""
        out = {}
        for p in self.poa_nodes:
            seen = frozenset(arrivals.get(p, ()))
            self.history[p].append(seen)
            if self.kind == "ddql":
                out[p] = self.agents[p].step(seen, t)
            elif self.kind == "frequency":
                out[p] = frequency_predict(self.history[p], self.z, self.n_services)
            elif self.kind == "random":
                out[p] = random_subset(self.n_services, self.z, self.rng)
            else:
                nxt = t + 1
                out[p] = (self.scenario.services_at(p, nxt)
                          if nxt <= self.scenario.horizon else frozenset())
        return PredictionTable(out)
