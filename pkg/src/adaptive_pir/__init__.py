"""Adaptive private information retrieval with straggler-tolerant layered decoding."""
