import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A 768-wide hub-format encoder saved locally (no network needed)."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    root = tmp_path_factory.mktemp("tinybert")
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "this", "is", "a", "person", "walking", "running", "sitting", "standing",
        "cycling", "jumping", "rowing", "sweeping", "sensor", "data", "for",
        "wearable", "engaged", "in", "the", "of", "someone", "activity",
        "##ing", "##s", "stairs", "climbing",
    ]
    (root / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(root / "vocab.txt"))
    tokenizer.save_pretrained(str(root))
    torch.manual_seed(7)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=768,
        num_hidden_layers=1,
        num_attention_heads=4,
        intermediate_size=128,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(str(root))
    return str(root)


@pytest.fixture(scope="session")
def sentences_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("sent") / "sentences.txt"
    lines = [
        "This is wearable sensor data for a person engaged in walking",
        "This is wearable sensor data for a person engaged in running",
        "This is wearable sensor data for a person engaged in sitting",
        "This is wearable sensor data for a person engaged in standing",
        "This is wearable sensor data for a person engaged in cycling",
        "This is wearable sensor data for a person engaged in jumping",
        "This is wearable sensor data for a person engaged in rowing",
        "This is wearable sensor data for a person engaged in sweeping",
        "a person climbing stairs",
        "someone walking for the activity",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)
