"""A deterministic stand-in for a pretrained encoder, shaped like the
transformers API surface the exporter touches."""

import torch

CLS, SEP, PAD = 101, 102, 0


class FakeTokenizer:
    def __call__(self, texts, padding, truncation, max_length, return_tensors):
        assert return_tensors == "pt"
        sequences = []
        for text in texts:
            body = [(len(word) % 97) + 1000 for word in text.split()]
            if truncation:
                body = body[: max_length - 2]
            sequences.append([CLS, *body, SEP])
        width = max(len(s) for s in sequences)
        input_ids = torch.full((len(sequences), width), PAD, dtype=torch.long)
        attention_mask = torch.zeros((len(sequences), width), dtype=torch.long)
        for i, seq in enumerate(sequences):
            input_ids[i, : len(seq)] = torch.tensor(seq)
            attention_mask[i, : len(seq)] = 1
        return {"input_ids": input_ids, "attention_mask": attention_mask}


class FakeOutput:
    def __init__(self, last_hidden_state):
        self.last_hidden_state = last_hidden_state


class FakeModel:
    def __init__(self, d=24):
        self.d = d

    def eval(self):
        return self

    def __call__(self, input_ids, attention_mask):
        # position 0 sees a masked-mean summary of the sequence, so the
        # pooled row depends on the entire (truncated) essay
        counts = attention_mask.sum(dim=1, keepdim=True).float()
        summary = (input_ids * attention_mask).sum(dim=1, keepdim=True).float() / counts
        scale = torch.arange(1, self.d + 1, dtype=torch.float32)
        hidden = input_ids.unsqueeze(-1).float() + summary.unsqueeze(-1) * scale
        return FakeOutput(last_hidden_state=hidden)


def fake_loader(encoder_id):
    return FakeTokenizer(), FakeModel()
