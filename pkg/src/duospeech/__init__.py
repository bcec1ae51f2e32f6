"""duospeech: desk-scale direct speech-to-speech translation.

Dual text/audio decoding heads over a shared transformer backbone with a
delayed audio token stream, an FSQ speech tokenizer, LoRA adaptation under
a strict freezing policy, and a chunked streaming flow-matching decoder.
"""

__version__ = "0.1.0"
