"""protopredict: predict prototype cost, performance and usability for a
design brief by retrieving prior-prototype evidence and querying an LLM
repeatedly, then benchmark those predictions against ground truth."""

__version__ = "0.1.0"
