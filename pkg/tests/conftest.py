import os

# Models are expected in the local HF cache; never touch the network in tests.
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

from pathlib import Path

import pytest
import torch

from discoprobe import synth
from discoprobe.encoder import register_model

FIXTURES = Path(__file__).parent / "fixtures"

#: PASS/FAIL lines collected by the acceptance tests, echoed after the run.
CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


def _tiny_vocab() -> list[str]:
    words = set()
    for nouns, verbs in synth.TOPICS.values():
        words.update(nouns)
        words.update(verbs)
    for tpl in synth._TEMPLATES:
        words.update(w for w in tpl.replace("{a}", "").replace("{b}", "")
                     .replace("{c}", "").replace("{v}", "")
                     .replace(".", " .").replace(",", " ,").lower().split())
    extra = "hello there friend plan worked city money committee budget trading shares".split()
    base = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", ".", ",", "(", ")"]
    return base + sorted((words | set(extra)) - set(base))


@pytest.fixture(scope="session")
def tiny_bert_dir(tmp_path_factory) -> str:
    """A local 2-layer bidirectional encoder checkpoint with its own vocab."""
    from transformers import BertConfig, BertModel, BertTokenizer

    root = tmp_path_factory.mktemp("tiny-bert")
    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(_tiny_vocab()), encoding="utf-8")
    tok = BertTokenizer(str(vocab_file), do_lower_case=True)
    torch.manual_seed(1234)
    config = BertConfig(
        vocab_size=tok.vocab_size, hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=512,
    )
    out = root / "checkpoint"
    BertModel(config).save_pretrained(out)
    tok.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_bert_spec(tiny_bert_dir):
    return register_model({"name": "tiny-bert", "checkpoint": tiny_bert_dir, "pooling": "CLS"})


@pytest.fixture(scope="session")
def tiny_gpt2_dir(tmp_path_factory) -> str:
    from transformers import AutoTokenizer, GPT2Config, GPT2Model

    tok = AutoTokenizer.from_pretrained("gpt2")
    torch.manual_seed(1235)
    config = GPT2Config(
        vocab_size=tok.vocab_size, n_embd=32, n_layer=2, n_head=2, n_positions=512,
        bos_token_id=tok.bos_token_id, eos_token_id=tok.eos_token_id,
    )
    out = tmp_path_factory.mktemp("tiny-gpt2") / "checkpoint"
    GPT2Model(config).save_pretrained(out)
    tok.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_gpt2_spec(tiny_gpt2_dir):
    return register_model({"name": "tiny-gpt2", "checkpoint": tiny_gpt2_dir})


@pytest.fixture(scope="session")
def tiny_bart_dir(tmp_path_factory) -> str:
    from transformers import AutoTokenizer, BartConfig, BartModel

    tok = AutoTokenizer.from_pretrained("facebook/bart-base")
    torch.manual_seed(1236)
    config = BartConfig(
        vocab_size=tok.vocab_size, d_model=32, encoder_layers=2, decoder_layers=2,
        encoder_attention_heads=2, decoder_attention_heads=2,
        encoder_ffn_dim=64, decoder_ffn_dim=64, max_position_embeddings=512,
    )
    out = tmp_path_factory.mktemp("tiny-bart") / "checkpoint"
    BartModel(config).save_pretrained(out)
    tok.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_bart_spec(tiny_bart_dir):
    return register_model({"name": "tiny-bart", "checkpoint": tiny_bart_dir})


@pytest.fixture(scope="session")
def synth_docs():
    return synth.synthetic_documents(60, seed=11)


@pytest.fixture(scope="session")
def dis_fixture_texts() -> dict[str, str]:
    return {fp.stem: fp.read_text(encoding="utf-8") for fp in sorted(FIXTURES.glob("*.dis"))}
