# Typed data for the radio channel, protocol messages, adversaries and metrics
