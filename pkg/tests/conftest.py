import numpy as np
import pytest

from ocdkit.toy_model import ModelConfig, Seq2Seq


def tiny_model(n_content=3, attention=False, seed=0, dtype="float64", embed=4, hidden=5):
    cfg = ModelConfig(vocab_size=n_content + 2, embed_dim=embed, hidden_dim=hidden, use_attention=attention, seed=seed, dtype=dtype)
    return Seq2Seq(cfg)


def peaked_model(path, n_content=2, dtype="float64"):
    """A decoder that emits ``path`` then eos with probability ~1, ignoring the input.

    Tokens in ``path`` must be distinct: the output layer maps each previous
    token straight to its successor.
    """
    model = tiny_model(n_content=n_content, dtype=dtype, embed=n_content + 2, hidden=n_content + 2)
    cfg = model.config
    p = {k: np.zeros_like(v) for k, v in model.params.items()}
    V, H = cfg.vocab_size, cfg.hidden_dim
    p["embed"] = np.eye(V)
    # update gate shut (z ~ 0) so the state is just the previous token's one-hot
    p["dec_b"][:H] = -50.0
    p["dec_Wx"][:, 2 * H :] = 10.0 * np.eye(V)
    successor = {cfg.bos_id: path[0] if path else cfg.eos_id}
    for a, b in zip(path, list(path[1:]) + [cfg.eos_id]):
        successor[a] = b
    for tok, nxt in successor.items():
        p["out_W"][tok, nxt] = 60.0
    model.params = p
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with the measured detail."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion_" not in getattr(rep, "nodeid", "") or rep.when not in ("call", "setup"):
                continue
            if rep.when == "setup" and outcome == "passed":
                continue
            name = rep.nodeid.split("::")[-1]
            number = int(name.split("_")[2])
            detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
            lines.append((number, f"criterion {number:2d}: {'PASS' if outcome == 'passed' else 'FAIL'}  {name}  {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
